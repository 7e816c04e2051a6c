//! Energy minimization, initial conditions and stability certification.

pub mod classify;
pub mod initial;
pub mod lbfgs;
pub mod precond;
pub mod stability;

use serde::{Deserialize, Serialize};

pub use classify::{classify, classify_detailed, Classification, SliceClass, SolutionClass};
pub use initial::{make_initial, InitialCondition, RotatedEdge};
pub use lbfgs::{IterRecord, LbfgsOptions};
pub use precond::SeparablePreconditioner;
pub use stability::{EigenOptions, StabilityMethod};

use crate::energy::{energy_and_gradient, energy_gradient, total_energy, EnergyBreakdown, LateralVariant, WellProblem};
use crate::error::Result;
use crate::spectral::{Face, SpectralField};

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub field: SpectralField,
    pub breakdown: EnergyBreakdown,
    /// Sup-norm of the final gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterRecord>,
    pub message: String,
}

/// Approximate Hessian diagonal: elastic stiffness, a representative bulk
/// curvature and the surface penalties, each from the separable 1D mass and
/// stiffness diagonals. Used as a scale for stability thresholds.
pub fn hessian_diagonal(prob: &WellProblem) -> Vec<f64> {
    let grid = &prob.grid;
    let stiff = grid.stiffness_diagonal();
    let mass = grid.mass_diagonal();
    let bulk = prob.bulk_prefactor() * 2.0 * prob.material.a.abs();
    let lateral_coef = match prob.anchoring.lateral {
        LateralVariant::FullTarget => 4.0,
        LateralVariant::Relaxed { alpha, gamma } => 2.0 * alpha.max(gamma),
    };
    let plate_coef = 2.0 * prob.anchoring.alpha_z.max(prob.anchoring.gamma_z);
    let mut surf = mass.clone() * 0.0;
    for face in Face::ALL {
        let w = match face {
            Face::YLow | Face::YHigh => prob.omega1() * lateral_coef,
            Face::XLow | Face::XHigh => prob.omega2() * lateral_coef,
            _ => prob.w_z() * plate_coef,
        };
        if w > 0.0 {
            surf = surf + grid.face_mass_diagonal(face) * w;
        }
    }
    let block: Vec<f64> = stiff
        .iter()
        .zip(mass.iter())
        .zip(surf.iter())
        .map(|((k, m), s)| 2.0 * k + bulk * m + s)
        .collect();
    let mut out = Vec::with_capacity(5 * block.len());
    for _ in 0..5 {
        out.extend_from_slice(&block);
    }
    out
}

/// Preconditioned L-BFGS from `p0`.
pub fn lbfgs(prob: &WellProblem, p0: &SpectralField, opts: &LbfgsOptions) -> Result<MinimizeResult> {
    opts.validate()?;
    let x0 = p0.to_vec();
    prob.grid.field_from_flat(&x0)?;
    let pc = SeparablePreconditioner::new(prob)?;
    let apply = |r: &[f64]| pc.apply(r);
    let out = lbfgs::minimize(
        |x| energy_and_gradient(x, prob).expect("coefficient length checked above"),
        &x0,
        opts,
        Some(&apply),
    );
    let field = prob.grid.field_from_flat(&out.x)?;
    let breakdown = total_energy(&field, prob)?;
    Ok(MinimizeResult {
        field,
        breakdown,
        grad_norm: lbfgs::sup_norm(&out.g),
        iterations: out.iterations,
        converged: out.converged,
        log: out.log,
        message: out.message,
    })
}

/// Default finite-difference step `1e-4 (1 + |p|) / |v|`.
pub fn default_fd_step(p: &[f64], v: &[f64]) -> f64 {
    1e-4 * (1.0 + lbfgs::norm(p)) / lbfgs::norm(v)
}

/// Central-difference Hessian action `(grad F(p + l v) - grad F(p - l v)) / (2 l)`.
pub fn hessian_vec(prob: &WellProblem, p: &[f64], v: &[f64], step: Option<f64>) -> Result<Vec<f64>> {
    let l = step.unwrap_or_else(|| default_fd_step(p, v));
    let plus: Vec<f64> = p.iter().zip(v).map(|(a, b)| a + l * b).collect();
    let minus: Vec<f64> = p.iter().zip(v).map(|(a, b)| a - l * b).collect();
    let gp = energy_gradient(&prob.grid.field_from_flat(&plus)?, prob)?;
    let gm = energy_gradient(&prob.grid.field_from_flat(&minus)?, prob)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * l)).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lambda1: f64,
    pub method: StabilityMethod,
    /// `|H v - lambda1 v|` for the returned unit vector.
    pub residual: f64,
    pub stable: bool,
    pub converged: bool,
    pub iterations: usize,
    /// Threshold separating zero modes from instabilities.
    pub stab_tol: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
}

/// Smallest eigenvalue of the coefficient-space Hessian at `p`.
pub fn smallest_eigenvalue(
    prob: &WellProblem,
    p: &SpectralField,
    method: StabilityMethod,
    opts: &EigenOptions,
) -> Result<StabilityReport> {
    let x = p.to_vec();
    prob.grid.field_from_flat(&x)?;
    let scale = stability::median(&hessian_diagonal(prob));
    let pc = SeparablePreconditioner::new(prob)?;
    let apply = |r: &[f64]| pc.apply(r);
    let v0 = stability::random_unit(x.len(), opts.seed);
    let hv = |v: &[f64]| hessian_vec(prob, &x, v, None).expect("length checked above");
    let est = match method {
        StabilityMethod::GradientFlow => stability::gradient_flow(hv, &apply, scale, &v0, opts),
        StabilityMethod::Lanczos => stability::lanczos(hv, &apply, scale, &v0, opts),
    };
    let stab_tol = 1e-6 * scale;
    Ok(StabilityReport {
        lambda1: est.value,
        method,
        residual: est.residual,
        stable: est.value > stab_tol,
        converged: est.converged,
        iterations: est.iterations,
        stab_tol,
        vector: est.vector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::AnchoringConfig;
    use crate::spectral::{BasisKind, GridSpec};
    use crate::tensor::{MaterialParams, QTensor, N1};
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(lbar: f64, anch: AnchoringConfig) -> WellProblem {
        WellProblem::new(lbar, 1.0, MaterialParams::default(), anch, GridSpec::new(BasisKind::Chebyshev, 3, 3, 3)).unwrap()
    }

    #[test]
    fn hessian_is_symmetric() {
        let prob = small(5.0, AnchoringConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = prob.dof();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        for _ in 0..5 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = lbfgs::dot(&hessian_vec(&prob, &p, &v, None).unwrap(), &w);
            let b = lbfgs::dot(&hessian_vec(&prob, &p, &w, None).unwrap(), &v);
            assert!((a - b).abs() < 1e-4 * a.abs().max(b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn bulk_hessian_matches_closed_form() {
        // constant field, no anchoring: H v for a constant direction equals
        // pref * (5x5 bulk Hessian) applied to the mode, weighted by the volume
        let prob = small(3.0, AnchoringConfig::uniform(0.0, 0.0));
        let q = QTensor::new([0.3, -0.2, 0.1, 0.5, 0.05]);
        let (nx, ny, nz) = prob.grid.node_shape();
        let p = prob.grid.analyze(&Array4::from_shape_fn((5, nx, ny, nz), |(c, _, _, _)| q.p[c])).unwrap().to_vec();
        let m = prob.material;
        let h = 1e-5;
        let mut hess = [[0.0; 5]; 5];
        for j in 0..5 {
            let mut a = q.p;
            let mut b = q.p;
            a[j] += h;
            b[j] -= h;
            let ga = crate::energy::bulk_with_grad(&a, &m).1;
            let gb = crate::energy::bulk_with_grad(&b, &m).1;
            for i in 0..5 {
                hess[i][j] = (ga[i] - gb[i]) / (2.0 * h);
            }
        }
        let vol = 4.0 * prob.eps;
        let (a, b, c) = prob.grid.mode_shape();
        for j in 0..5 {
            let mut dir = Array4::<f64>::zeros((5, a, b, c));
            dir[[j, 0, 0, 0]] = 1.0;
            let v = dir.as_slice().unwrap().to_vec();
            let hv = hessian_vec(&prob, &p, &v, None).unwrap();
            for i in 0..5 {
                let expect = prob.bulk_prefactor() * hess[i][j] * vol;
                let got = hv[i * a * b * c];
                assert!((got - expect).abs() < 1e-5 * expect.abs().max(1.0), "({i},{j}) {got} vs {expect}");
            }
        }
    }

    #[test]
    fn minimizer_is_a_fixed_point_and_stable() {
        let prob = small(5.0, AnchoringConfig::uniform(0.0, 0.0));
        let (nx, ny, nz) = prob.grid.node_shape();
        let q = QTensor::uniaxial(prob.s_plus(), N1);
        let f = prob.grid.analyze(&Array4::from_shape_fn((5, nx, ny, nz), |(c, _, _, _)| q.p[c])).unwrap();
        let r = lbfgs(&prob, &f, &LbfgsOptions::default()).unwrap();
        assert!(r.iterations <= 1);
        let e0 = total_energy(&f, &prob).unwrap().total;
        assert!((r.breakdown.total - e0).abs() <= 1e-12 * e0.abs());
    }

    #[test]
    fn converges_from_random_start() {
        let prob = small(5.0, AnchoringConfig::default());
        let f0 = make_initial(&InitialCondition::Random { seed: 2 }, &prob).unwrap();
        let r = lbfgs(&prob, &f0, &LbfgsOptions::default()).unwrap();
        assert!(r.converged, "{} after {} iterations", r.message, r.iterations);
        for w in r.log.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
        let opts = EigenOptions::default();
        let a = smallest_eigenvalue(&prob, &r.field, StabilityMethod::Lanczos, &opts).unwrap();
        let b = smallest_eigenvalue(&prob, &r.field, StabilityMethod::GradientFlow, &opts).unwrap();
        assert!(a.stable && b.stable, "{a:?} {b:?}");
        assert!((a.lambda1 - b.lambda1).abs() < 1e-2 * a.lambda1.abs(), "{} vs {}", a.lambda1, b.lambda1);
    }
}
