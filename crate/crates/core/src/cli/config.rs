//! JSON run configuration. Every key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::{AnchoringConfig, WellProblem};
use crate::error::{Error, Result};
use crate::io::{hash_json, ArtifactMeta, Lattice};
use crate::minimize::{EigenOptions, InitialCondition, LbfgsOptions, StabilityMethod};
use crate::reduced2d::{DomainKind, Grid2D, ReducedInit, ReducedOptions};
use crate::spectral::{GridSpec, SpectralGrid};
use crate::tensor::MaterialParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// `2 C lambda^2 / L`, dimensionless.
    pub lambda_bar_sq: f64,
    /// Well height over `lambda`, dimensionless.
    pub eps: f64,
    /// Width of the corner cut-off of the lateral target, in units of `lambda`.
    pub delta: f64,
    /// When set, replaces `material.a` by `temperature_factor * B^2 / C`.
    pub temperature_factor: Option<f64>,
    pub material: MaterialParams,
    pub anchoring: AnchoringConfig,
    pub grid: GridSpec,
    pub initial: InitialCondition,
    /// Restart file to start from instead of `initial`.
    pub restart: Option<PathBuf>,
    pub lbfgs: LbfgsOptions,
    pub stability: StabilityConfig,
    pub output: OutputConfig,
    /// Seed of the eigen-solver start vector.
    pub seed: u64,
    pub bifurcation: BifurcationConfig,
    pub escaped: EscapedConfig,
    pub reduced2d: Reduced2dConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda_bar_sq: 5.0,
            eps: 1.0,
            delta: 0.1,
            temperature_factor: None,
            material: MaterialParams::default(),
            anchoring: AnchoringConfig::default(),
            grid: GridSpec::default(),
            initial: InitialCondition::diagonal(),
            restart: None,
            lbfgs: LbfgsOptions::default(),
            stability: StabilityConfig::default(),
            output: OutputConfig::default(),
            seed: 0,
            bifurcation: BifurcationConfig::default(),
            escaped: EscapedConfig::default(),
            reduced2d: Reduced2dConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub enabled: bool,
    pub method: StabilityMethod,
    pub options: EigenOptions,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { enabled: true, method: StabilityMethod::Lanczos, options: EigenOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub vtk: bool,
    /// VTK lattice; `64 x 64 x max(8, 16 eps)` when absent.
    pub lattice: Option<Lattice>,
    /// Points per side of the CSV slices.
    pub slice_points: usize,
    /// Also write the coefficients as CSV.
    pub coefficients_csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { vtk: true, lattice: None, slice_points: 64, coefficients_csv: true }
    }
}

/// Lateral anchoring sweep: bisection on `lambda_bar_sq` from a diagonal
/// start for every `W1 = W2 = W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BifurcationConfig {
    /// J/m^2, strictly increasing.
    pub w_list: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eps: f64,
    /// Final bracket width in `lambda_bar_sq`.
    pub tol: f64,
}

impl Default for BifurcationConfig {
    fn default() -> Self {
        BifurcationConfig {
            w_list: vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2],
            lambda_min: 1.0,
            lambda_max: 40.0,
            eps: 0.1,
            tol: 0.01,
        }
    }
}

/// Plate anchoring sweep: bisection on `log10 Wz` from an escaped start for
/// every height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EscapedConfig {
    /// Strictly increasing.
    pub eps_list: Vec<f64>,
    /// J/m^2.
    pub wz_min: f64,
    /// J/m^2.
    pub wz_max: f64,
    pub lambda_bar_sq: f64,
    /// Final bracket width in `log10 Wz`.
    pub tol: f64,
}

impl Default for EscapedConfig {
    fn default() -> Self {
        EscapedConfig { eps_list: vec![0.5, 1.0, 2.0, 3.0, 4.0], wz_min: 1e-7, wz_max: 1e-2, lambda_bar_sq: 100.0, tol: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Reduced2dConfig {
    /// Nodes per side, odd.
    pub n: usize,
    pub domain: DomainKind,
    pub eta: f64,
    pub init: ReducedInit,
    /// Solve on one quadrant with the WORS symmetry instead of the full square.
    pub quadrant: bool,
    pub constrain_q3_nonpositive: bool,
    pub options: ReducedOptions,
}

impl Default for Reduced2dConfig {
    fn default() -> Self {
        Reduced2dConfig {
            n: 129,
            domain: DomainKind::Truncated,
            eta: 1.0 / 16.0,
            init: ReducedInit::Wors,
            quadrant: false,
            constrain_q3_nonpositive: false,
            options: ReducedOptions::default(),
        }
    }
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::Domain(m) | Error::Shape(m) => Error::Config(m),
        e => e,
    }
}

fn strictly_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Config(format!("{name} entries must be positive and finite")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

fn range(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("{name} needs 0 < min < max, got [{lo}, {hi}]")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates; every failure is a configuration error.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json_str(&s)
    }

    /// Material constants after applying `temperature_factor`.
    pub fn material(&self) -> MaterialParams {
        match self.temperature_factor {
            Some(f) => MaterialParams { a: f * self.material.b * self.material.b / self.material.c, ..self.material },
            None => self.material,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_bar_sq", self.lambda_bar_sq), ("eps", self.eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some(f) = self.temperature_factor {
            if !(f.is_finite() && f < 0.0) {
                return Err(Error::Config(format!("temperature_factor must be negative, got {f}")));
            }
        }
        self.problem()?;
        self.lbfgs.validate()?;
        if let Some(l) = self.output.lattice {
            if l.nx < 2 || l.ny < 2 || l.nz < 2 {
                return Err(Error::Config(format!("output.lattice needs at least 2 points per axis, got {l:?}")));
            }
        }
        if self.output.slice_points < 2 {
            return Err(Error::Config("output.slice_points must be at least 2".into()));
        }
        let b = &self.bifurcation;
        strictly_increasing("bifurcation.w_list", &b.w_list)?;
        range("bifurcation.lambda", b.lambda_min, b.lambda_max)?;
        if !(b.eps > 0.0 && b.tol > 0.0) {
            return Err(Error::Config("bifurcation.eps and bifurcation.tol must be positive".into()));
        }
        let e = &self.escaped;
        strictly_increasing("escaped.eps_list", &e.eps_list)?;
        range("escaped.wz", e.wz_min, e.wz_max)?;
        if !(e.lambda_bar_sq > 0.0 && e.tol > 0.0) {
            return Err(Error::Config("escaped.lambda_bar_sq and escaped.tol must be positive".into()));
        }
        self.reduced_grid()?;
        self.reduced2d.options.lbfgs.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    pub fn meta(&self) -> ArtifactMeta {
        ArtifactMeta::new(self.hash())
    }

    pub fn problem(&self) -> Result<WellProblem> {
        self.problem_at(self.lambda_bar_sq, self.eps, self.anchoring)
    }

    /// The configured problem with the swept quantities replaced.
    pub fn problem_at(&self, lambda_bar_sq: f64, eps: f64, anchoring: AnchoringConfig) -> Result<WellProblem> {
        let p = WellProblem::new(lambda_bar_sq, eps, self.material(), anchoring, self.grid).map_err(cfg_err)?;
        p.with_delta(self.delta).map_err(cfg_err)
    }

    pub fn lattice(&self) -> Lattice {
        self.output.lattice.unwrap_or_else(|| Lattice::default_for(self.eps))
    }

    pub fn reduced_grid(&self) -> Result<Grid2D> {
        let r = &self.reduced2d;
        Grid2D::new(r.n, r.domain, r.eta).map_err(cfg_err)
    }

    /// Checks that the grid can be built for every swept height.
    pub fn validate_sweep_grids(&self) -> Result<()> {
        for eps in self.escaped.eps_list.iter().chain([&self.bifurcation.eps]) {
            SpectralGrid::new(self.grid, *eps).map_err(cfg_err)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json_str("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        for doc in [
            r#"{"lambda_bar_sq": 5, "colour": 1}"#,
            r#"{"material": {"a": -1, "d": 2}}"#,
            r#"{"anchoring": {"w3": 1}}"#,
            r#"{"anchoring": {"lateral": {"kind": "relaxed", "alpha": 1, "gamma": 1, "beta": 0}}}"#,
            r#"{"grid": {"k": 3}}"#,
            r#"{"initial": {"kind": "wors", "x": 1}}"#,
            r#"{"anchoring": {"lateral": {"kind": "full_target", "x": 1}}}"#,
            r#"{"reduced2d": {"init": {"kind": "wors", "x": 1}}}"#,
            r#"{"lbfgs": {"tol": 1}}"#,
            r#"{"stability": {"options": {"iters": 3}}}"#,
            r#"{"output": {"vtu": true}}"#,
            r#"{"bifurcation": {"w": [1]}}"#,
            r#"{"escaped": {"eps": [1]}}"#,
            r#"{"reduced2d": {"options": {"lbfgs": {"m": 1}}}}"#,
        ] {
            assert!(matches!(RunConfig::from_json_str(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn physical_values_are_validated() {
        for doc in [
            r#"{"lambda_bar_sq": -1}"#,
            r#"{"eps": 0}"#,
            r#"{"delta": 1.5}"#,
            r#"{"temperature_factor": 0.2}"#,
            r#"{"material": {"c": -1}}"#,
            r#"{"anchoring": {"w1": -1e-3}}"#,
            r#"{"grid": {"n": 1}}"#,
            r#"{"bifurcation": {"w_list": [1e-3, 1e-4]}}"#,
            r#"{"bifurcation": {"lambda_min": 10, "lambda_max": 5}}"#,
            r#"{"escaped": {"eps_list": []}}"#,
            r#"{"reduced2d": {"n": 128}}"#,
            r#"{"output": {"lattice": {"nx": 1, "ny": 4, "nz": 4}}}"#,
            "{ not json",
        ] {
            assert!(matches!(RunConfig::from_json_str(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn temperature_factor_sets_a() {
        let c = RunConfig::from_json_str(r#"{"temperature_factor": -0.6666666666666666}"#).unwrap();
        let m = c.material();
        assert!((m.a + 2.0 * m.b * m.b / (3.0 * m.c)).abs() < 1e-9 * m.a.abs());
    }

    #[test]
    fn hash_follows_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap().hash(), a.hash());
    }
}
