//! CSV ledgers and legacy ASCII VTK snapshots.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::chf_scheme::TimeStepState;
use crate::diagnostics::BalanceRow;
use crate::error::Result;

pub const LEDGER_VERSION: &str = "# chf-ledger v1";
pub const LEDGER_HEADER: &str = "t,mass,energy,diss_inc,prod_inc,mass_defect,energy_defect,boundary_flux";
pub const CONVERGENCE_VERSION: &str = "# chf-convergence v1";
pub const CONVERGENCE_HEADER: &str = "k,err_phi,eoc_phi,err_mu,eoc_mu,err_v,eoc_v,err_p,eoc_p";

/// Streams balance rows to a CSV file.
pub struct LedgerWriter {
    out: BufWriter<File>,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{LEDGER_VERSION}")?;
        writeln!(out, "{LEDGER_HEADER}")?;
        Ok(LedgerWriter { out })
    }

    pub fn write(&mut self, r: &BalanceRow) -> Result<()> {
        writeln!(
            self.out,
            "{:.6},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.mass, r.energy, r.diss_inc, r.prod_inc, r.mass_defect, r.energy_defect, r.boundary_flux
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes `phi` and `mu` as point data and the pressure, `div v` and `v`
/// sampled at cell centroids as cell data.
pub fn write_vtk(path: &Path, state: &TimeStepState) -> Result<()> {
    let mesh = state.phi.space.mesh().clone();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\nphase field t = {}\nASCII\nDATASET UNSTRUCTURED_GRID", state.t);
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for [x, y] in &mesh.vertices {
        let _ = writeln!(s, "{x} {y} 0");
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for [a, b, c] in &mesh.triangles {
        let _ = writeln!(s, "3 {a} {b} {c}");
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
    for (name, f) in [("phi", &state.phi), ("mu", &state.mu)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for c in &f.coeffs {
            let _ = writeln!(s, "{c}");
        }
    }
    let _ = writeln!(s, "CELL_DATA {nt}");
    let centroids: Vec<_> = (0..nt).map(|t| mesh.centroid(t)).collect();
    let _ = writeln!(s, "SCALARS p double 1\nLOOKUP_TABLE default");
    for (t, x) in centroids.iter().enumerate() {
        let _ = writeln!(s, "{}", state.p.eval_scalar(t, *x));
    }
    let _ = writeln!(s, "SCALARS div_v double 1\nLOOKUP_TABLE default");
    for (t, x) in centroids.iter().enumerate() {
        let _ = writeln!(s, "{}", state.v.eval_div(t, *x));
    }
    let _ = writeln!(s, "VECTORS v double");
    for (t, x) in centroids.iter().enumerate() {
        let [a, b] = state.v.eval_vector(t, *x);
        let _ = writeln!(s, "{a} {b} 0");
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// `"n/a"` for undefined rates, fixed precision otherwise.
pub fn fmt_eoc(e: Option<f64>) -> String {
    e.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Assembler;
    use crate::mesh::Mesh;
    use std::sync::Arc;

    #[test]
    fn vtk_layout() {
        let asm = Assembler::new(Arc::new(Mesh::unit_square(2).unwrap())).unwrap();
        let phi = (0..asm.n_cg()).map(|i| i as f64 + 0.5).collect();
        let st = TimeStepState::initial(&asm, phi).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("phi_0000.vtk");
        write_vtk(&p, &st).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 8);
        assert!(text.contains("VECTORS v double"));
    }

    #[test]
    fn eoc_formatting() {
        assert_eq!(fmt_eoc(None), "n/a");
        assert_eq!(fmt_eoc(Some(2.0)), "2.0000");
    }
}
