//! Experiment configuration: named presets plus TOML files that override them.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chf_scheme::ModelParams;
use crate::error::{Error, Result};
use crate::linalg::NewtonConfig;
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// Ellipse centred at `(0.5, 0.5)`.
    Exp1,
    /// Ellipse centred at `(0.5, 0.75)`, touching the top boundary.
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sources {
    /// `Gamma_phi = phi max(0, 1 - phi^2) / 5`, `Gamma_v = 2 phi max(0, 1 - phi^2)`.
    Inconsistent,
    /// `Gamma_phi = 0`, `Gamma_v = phi - (phi_h^0, 1)`.
    Consistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub min_step: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        let d = NewtonConfig::default();
        NewtonSettings { tol: d.tol, max_iter: d.max_iter, min_step: d.min_step }
    }
}

impl From<&NewtonSettings> for NewtonConfig {
    fn from(s: &NewtonSettings) -> Self {
        NewtonConfig { tol: s.tol, max_iter: s.max_iter, min_step: s.min_step }
    }
}

/// Settings of the standalone Forchheimer pipeline (manufactured solution and
/// regularization sweep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForchheimerSettings {
    pub s: f64,
    pub alpha: f64,
    pub beta: f64,
    pub levels: Vec<usize>,
    pub reg_level: usize,
    pub reg_n: Vec<f64>,
}

impl Default for ForchheimerSettings {
    fn default() -> Self {
        ForchheimerSettings {
            s: 2.0,
            alpha: 1.0,
            beta: 1.0,
            levels: vec![2, 3, 4],
            reg_level: 3,
            reg_n: vec![10.0, 100.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Preset the config was built from, if any.
    pub preset: Option<String>,
    /// Mesh level of `run`; level `k` is the `2 x 2` square refined `k` times.
    pub level: usize,
    /// Nested levels of `converge`.
    pub levels: Vec<usize>,
    pub tau: f64,
    pub t_final: f64,
    pub s: f64,
    pub gamma: u8,
    pub eps2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub initial: InitialCondition,
    pub sources: Sources,
    pub outdir: PathBuf,
    /// VTK snapshot cadence in steps; zero disables snapshots.
    pub vtk_every: usize,
    pub newton: NewtonSettings,
    pub forchheimer: ForchheimerSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            level: 3,
            levels: vec![1, 2, 3, 4, 5],
            tau: 5e-3,
            t_final: 5.0,
            s: 2.0,
            gamma: 0,
            eps2: 1e-4,
            alpha1: 1e-2,
            alpha2: 1.0,
            beta1: 1e-1,
            beta2: 10.0,
            initial: InitialCondition::Exp1,
            sources: Sources::Inconsistent,
            outdir: PathBuf::from("out"),
            vtk_every: 10,
            newton: NewtonSettings::default(),
            forchheimer: ForchheimerSettings::default(),
        }
    }
}

/// Every key a config file may set. Unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    level: Option<usize>,
    levels: Option<Vec<usize>>,
    tau: Option<f64>,
    t_final: Option<f64>,
    s: Option<f64>,
    gamma: Option<u8>,
    eps2: Option<f64>,
    alpha1: Option<f64>,
    alpha2: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    initial: Option<InitialCondition>,
    sources: Option<Sources>,
    outdir: Option<PathBuf>,
    vtk_every: Option<usize>,
    newton: Option<NewtonSettings>,
    forchheimer: Option<ForchheimerSettings>,
}

macro_rules! overlay {
    ($cfg:ident, $file:ident, $($field:ident),*) => {
        $(if let Some(v) = $file.$field { $cfg.$field = v; })*
    };
}

pub const PRESET_NAMES: &[&str] = &[
    "exp1_s1_g0",
    "exp1_s1_g1",
    "exp1_s2_g0",
    "exp1_s2_g1",
    "exp1_s3_g0",
    "exp1_s3_g1",
    "exp2_g0",
    "exp2_g1",
    "converge_g0",
    "converge_g1",
];

impl ExperimentConfig {
    /// Named presets: `exp1_s{1,2,3}_g{0,1}`, `exp2_g{0,1}`, `exp2_s{1,2,3}_g{0,1}`
    /// and `converge_g{0,1}` (the `s = 3` convergence test).
    pub fn preset(name: &str) -> Result<Self> {
        let unknown = || Error::Config(format!("unknown preset '{name}' (known: {})", PRESET_NAMES.join(", ")));
        let parts: Vec<&str> = name.split('_').collect();
        let gamma = match parts.last().copied() {
            Some("g0") => 0,
            Some("g1") => 1,
            _ => return Err(unknown()),
        };
        let s = match parts.as_slice() {
            [_, g] if g.starts_with('g') => 2.0,
            [_, s, _] => match *s {
                "s1" => 1.0,
                "s2" => 2.0,
                "s3" => 3.0,
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        };
        let mut cfg = ExperimentConfig { preset: Some(name.to_string()), s, gamma, ..Default::default() };
        match parts[0] {
            "exp1" => {}
            "exp2" => {
                cfg.initial = InitialCondition::Exp2;
                cfg.sources = Sources::Consistent;
                cfg.t_final = 1.0;
            }
            "converge" if parts.len() == 2 => {
                cfg.s = 3.0;
                cfg.t_final = 0.2;
                cfg.vtk_every = 0;
            }
            _ => return Err(unknown()),
        }
        cfg.outdir = PathBuf::from("out").join(name);
        Ok(cfg)
    }

    /// Parses TOML text. A `preset` key selects the base the other keys
    /// override; without it the base is the default (`exp1`, `s = 2`, `gamma = 0`).
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = match &file.preset {
            Some(p) => Self::preset(p)?,
            None => Self::default(),
        };
        overlay!(
            cfg, file, level, levels, tau, t_final, s, gamma, eps2, alpha1, alpha2, beta1, beta2, initial, sources,
            outdir, vtk_every, newton, forchheimer
        );
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `arg` as a TOML file if it exists, otherwise as a preset name.
    pub fn load(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path)?;
            Self::from_toml(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })
        } else {
            let cfg = Self::preset(arg)?;
            cfg.validate()?;
            Ok(cfg)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("tau", self.tau),
            ("t_final", self.t_final),
            ("eps2", self.eps2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if self.gamma > 1 {
            return bad(format!("gamma = {} must be 0 or 1", self.gamma));
        }
        if !(self.s >= 1.0 && self.s.is_finite()) {
            return bad(format!("s = {} must be at least 1", self.s));
        }
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[1] != w[0] + 1) {
            return bad(format!("levels {:?} must be consecutive and increasing", self.levels));
        }
        let steps = self.t_final / self.tau;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!("t_final = {} is not a multiple of tau = {}", self.t_final, self.tau));
        }
        NewtonConfig::from(&self.newton).validate().map_err(|e| Error::Config(format!("newton: {e}")))?;
        let f = &self.forchheimer;
        if !(f.s > 1.0) || !(f.alpha > 0.0) || !(f.beta > 0.0) {
            return bad(format!("forchheimer: s > 1 and positive alpha, beta required, got {f:?}"));
        }
        if f.levels.windows(2).any(|w| w[1] != w[0] + 1) || f.reg_n.iter().any(|n| !(*n > 0.0)) {
            return bad(format!("forchheimer: bad levels or regularization list {f:?}"));
        }
        Ok(())
    }

    pub fn newton_config(&self) -> NewtonConfig {
        NewtonConfig::from(&self.newton)
    }

    /// Initial phase field: `1/2 - 1/2 tanh((sqrt(1.1 (x-0.5)^2 + 0.8 (y-c)^2) - 0.25) / sqrt(10 eps2))`.
    pub fn initial_condition(&self) -> impl Fn(Point) -> f64 + Send + Sync {
        initial_condition(self.initial, self.eps2)
    }

    /// Model coefficients; `initial_mass` is `(phi_h^0, 1)` on the run's mesh
    /// and only enters the consistent volume source.
    pub fn model_params(&self, initial_mass: f64) -> ModelParams {
        let (a1, a2, b1, b2) = (self.alpha1, self.alpha2, self.beta1, self.beta2);
        let (gamma_phi, gamma_v): (crate::chf_scheme::CoefFn, crate::chf_scheme::CoefFn) = match self.sources {
            Sources::Inconsistent => (
                Arc::new(|phi: f64| phi * (1.0 - phi * phi).max(0.0) / 5.0),
                Arc::new(|phi: f64| 2.0 * phi * (1.0 - phi * phi).max(0.0)),
            ),
            Sources::Consistent => (Arc::new(|_| 0.0), Arc::new(move |phi: f64| phi - initial_mass)),
        };
        ModelParams {
            eps2: self.eps2,
            s: self.s,
            gamma: f64::from(self.gamma),
            tau: self.tau,
            t_final: self.t_final,
            alpha: Arc::new(move |phi| affine_clamped(phi, a1, a2)),
            beta: Arc::new(move |phi| affine_clamped(phi, b1, b2)),
            mobility: Arc::new(mobility),
            gamma_phi,
            gamma_v,
            newton: self.newton_config(),
        }
    }
}

pub fn initial_condition(which: InitialCondition, eps2: f64) -> impl Fn(Point) -> f64 + Send + Sync {
    let cy = match which {
        InitialCondition::Exp1 => 0.5,
        InitialCondition::Exp2 => 0.75,
    };
    let width = (10.0 * eps2).sqrt();
    move |[x, y]: Point| {
        let r = (1.1 * (x - 0.5).powi(2) + 0.8 * (y - cy).powi(2)).sqrt();
        0.5 - 0.5 * ((r - 0.25) / width).tanh()
    }
}

/// `c1 phi + c2 (1 - phi)` with `phi` clamped to `[0, 1]`.
pub fn affine_clamped(phi: f64, c1: f64, c2: f64) -> f64 {
    let p = phi.clamp(0.0, 1.0);
    c1 * p + c2 * (1.0 - p)
}

/// `1e-2 + phi^2 (1 - phi)^2 max(0, 1 - phi^2)`.
pub fn mobility(phi: f64) -> f64 {
    1e-2 + phi * phi * (1.0 - phi).powi(2) * (1.0 - phi * phi).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_condition_values() {
        let f = initial_condition(InitialCondition::Exp1, 1e-4);
        assert!((f([0.5, 0.5]) - 1.0).abs() < 1e-6);
        assert!(f([0.0, 0.0]).abs() < 1e-6);
        // on the ellipse 1.1 dx^2 = 0.0625
        let dx = (0.0625f64 / 1.1).sqrt();
        assert!((f([0.5 + dx, 0.5]) - 0.5).abs() < 1e-14);
        let g = initial_condition(InitialCondition::Exp2, 1e-4);
        assert!((g([0.5, 0.75]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn coefficients() {
        assert_eq!(affine_clamped(-3.0, 0.01, 1.0), 1.0);
        assert_eq!(affine_clamped(7.0, 0.01, 1.0), 0.01);
        assert!((affine_clamped(0.5, 0.1, 10.0) - 5.05).abs() < 1e-14);
        assert_eq!(mobility(0.0), 1e-2);
        assert_eq!(mobility(1.0), 1e-2);
        assert_eq!(mobility(2.0), 1e-2);
        assert!((mobility(0.5) - (1e-2 + 0.0625 * 0.75)).abs() < 1e-15);
    }

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        let c = ExperimentConfig::preset("exp1_s3_g1").unwrap();
        assert_eq!((c.s, c.gamma, c.initial), (3.0, 1, InitialCondition::Exp1));
        let c = ExperimentConfig::preset("exp2_s1_g0").unwrap();
        assert_eq!((c.s, c.sources), (1.0, Sources::Consistent));
        assert!(ExperimentConfig::preset("exp3_g0").is_err());
        assert!(ExperimentConfig::preset("exp1_s4_g0").is_err());
    }

    #[test]
    fn toml_overrides_preset() {
        let c = ExperimentConfig::from_toml("preset = \"exp1_s2_g1\"\nt_final = 0.5\n[newton]\ntol = 1e-10\nmax_iter = 20\nmin_step = 0.125\n").unwrap();
        assert_eq!((c.gamma, c.t_final, c.newton.max_iter), (1, 0.5, 20));
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn toml_errors_name_the_problem() {
        let e = ExperimentConfig::from_toml("tau = \"fast\"").unwrap_err().to_string();
        assert!(e.contains("tau") && e.contains("line 1"), "{e}");
        let e = ExperimentConfig::from_toml("tua = 1.0").unwrap_err().to_string();
        assert!(e.contains("tua"), "{e}");
        assert!(ExperimentConfig::from_toml("gamma = 2").is_err());
        assert!(ExperimentConfig::from_toml("t_final = 0.0123").is_err());
        assert!(ExperimentConfig::from_toml("levels = [1, 3]").is_err());
    }
}
