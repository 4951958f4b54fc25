//! Compressed sparse column storage built from coordinate triplets.

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on
/// [`TripletBuilder::build`].
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, val));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds every entry of `other` shifted by `(row_off, col_off)`.
    pub fn push_block(&mut self, other: &SparseMatrix, row_off: usize, col_off: usize, scale: f64) {
        for (r, c, v) in other.iter() {
            self.push(r + row_off, c + col_off, scale * v);
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..self.ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        SparseMatrix { nrows: self.nrows, ncols: self.ncols, col_ptr, row_idx, values }
    }
}

/// Fixed scatter map from an element-loop entry sequence to CSC slots.
///
/// Built once from the `(row, col)` sequence an assembly loop produces; later
/// loops that emit values in the same order skip sorting altogether.
#[derive(Debug, Clone)]
pub struct AssemblyPattern {
    template: SparseMatrix,
    slots: Vec<usize>,
}

impl AssemblyPattern {
    pub fn new(nrows: usize, ncols: usize, coords: &[(usize, usize)]) -> Self {
        let mut b = TripletBuilder::with_capacity(nrows, ncols, coords.len());
        for &(r, c) in coords {
            b.push(r, c, 0.0);
        }
        let template = b.build();
        let slots = coords
            .iter()
            .map(|&(r, c)| {
                let lo = template.col_ptr[c];
                let rows = &template.row_idx[lo..template.col_ptr[c + 1]];
                lo + rows.binary_search(&r).expect("coordinate present in template")
            })
            .collect();
        AssemblyPattern { template, slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Sums `vals[k]` into the slot of the k-th coordinate.
    pub fn assemble(&self, vals: &[f64]) -> SparseMatrix {
        assert_eq!(vals.len(), self.slots.len(), "entry count differs from pattern");
        let mut m = self.template.clone();
        for (&slot, &v) in self.slots.iter().zip(vals) {
            m.values[slot] += v;
        }
        m
    }
}

/// Column-compressed matrix with sorted, unique row indices per column.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut b = TripletBuilder::new(nrows, ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    b.push(i, j, v);
                }
            }
        }
        b.build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]];
        match rows.binary_search(&i) {
            Ok(k) => self.values[self.col_ptr[j] + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// `A^T x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec dimension mismatch");
        (0..self.ncols)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(|k| self.values[k] * x[self.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (r, c, v) in self.iter() {
            b.push(c, r, v);
        }
        b.build()
    }

    /// Bilinear form `y^T A x`.
    pub fn form(&self, y: &[f64], x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite { what: "matrix", index: k }),
            None => Ok(()),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 0, 2.0);
        b.push(0, 0, 3.0);
        b.push(1, 1, 5.0);
        let a = b.build();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![4.0, 7.0]);
        assert_eq!(a.tr_mul_vec(&[1.0, 1.0]), vec![6.0, 5.0]);
        let t = a.transpose();
        assert_eq!(t.get(0, 1), 2.0);
    }

    #[test]
    fn pattern_matches_triplets() {
        let coords = [(1, 0), (0, 0), (1, 1), (1, 0), (0, 1)];
        let vals = [1.0, 2.0, 3.0, 4.0, 5.0];
        let pat = AssemblyPattern::new(2, 2, &coords);
        let a = pat.assemble(&vals);
        let mut b = TripletBuilder::new(2, 2);
        for (&(r, c), &v) in coords.iter().zip(&vals) {
            b.push(r, c, v);
        }
        assert_eq!(a.to_dense(), b.build().to_dense());
    }

    #[test]
    fn rows_sorted_within_columns() {
        let mut b = TripletBuilder::new(4, 1);
        for r in [3, 1, 2, 0, 1] {
            b.push(r, 0, 1.0);
        }
        let a = b.build();
        assert_eq!(a.row_idx(), &[0, 1, 2, 3]);
        assert_eq!(a.get(1, 0), 2.0);
    }
}
