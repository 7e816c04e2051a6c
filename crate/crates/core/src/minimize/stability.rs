//! Smallest Hessian eigenvalue by a normalized gradient flow on the Rayleigh
//! quotient and by a restarted Lanczos-type subspace iteration.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lbfgs::{dot, norm, Precond};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    GradientFlow,
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenOptions {
    pub max_iters: usize,
    /// Relative change of the Rayleigh quotient per unit flow time at which
    /// the gradient flow stops.
    pub flow_tol: f64,
    /// Residual `|H v - lambda v|` relative to the diagonal scale at which
    /// the subspace iteration stops.
    pub residual_tol: f64,
    /// Largest subspace before a restart.
    pub max_subspace: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { max_iters: 3000, flow_tol: 1e-8, residual_tol: 1e-6, max_subspace: 40, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct EigenEstimate {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normalized((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Integrates `dv/dt = -gamma P (H v - R(v) v)` with renormalization, where
/// `P` is the preconditioner and `R` the Rayleigh quotient. Each step takes the
/// `gamma` that minimizes `R` along the flow direction (a 2x2 Rayleigh-Ritz
/// problem on `span{v, P r}`), so the quotient decreases monotonically.
/// `scale` sets the absolute residual tolerance.
pub fn gradient_flow<H: FnMut(&[f64]) -> Vec<f64>>(
    mut hv: H,
    precond: Precond,
    scale: f64,
    v0: &[f64],
    opts: &EigenOptions,
) -> EigenEstimate {
    let mut v = normalized(v0.to_vec());
    let mut gv = hv(&v);
    let mut rho = dot(&v, &gv);
    let mut converged = false;
    let mut iters = 0;
    let mut quiet = 0;
    let mut rn = f64::INFINITY;
    while iters < opts.max_iters {
        let r: Vec<f64> = gv.iter().zip(&v).map(|(g, v)| g - rho * v).collect();
        rn = norm(&r);
        if rn <= opts.residual_tol * scale {
            converged = true;
            break;
        }
        iters += 1;
        let mut w = precond(&r);
        let c = dot(&w, &v);
        w.iter_mut().zip(&v).for_each(|(w, v)| *w -= c * v);
        let wn = norm(&w);
        if !(wn > 0.0) {
            break;
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let hw = hv(&w);
        let a = rho;
        let b = 0.5 * (dot(&w, &gv) + dot(&v, &hw));
        let d = dot(&w, &hw);
        // lowest eigenpair of [[a, b], [b, d]]
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let theta = mean - rad;
        let (ca, cb) = if b.abs() > 0.0 { (b, theta - a) } else if a <= d { (1.0, 0.0) } else { (0.0, 1.0) };
        let cn = (ca * ca + cb * cb).sqrt();
        let (ca, cb) = (ca / cn, cb / cn);
        let refresh = iters % 20 == 0;
        v = v.iter().zip(&w).map(|(v, w)| ca * v + cb * w).collect();
        let vn = norm(&v);
        v.iter_mut().for_each(|x| *x /= vn);
        gv = if refresh {
            hv(&v)
        } else {
            gv.iter().zip(&hw).map(|(g, h)| (ca * g + cb * h) / vn).collect()
        };
        let new_rho = dot(&v, &gv);
        let change = (rho - new_rho).abs();
        rho = new_rho;
        if change < opts.flow_tol * rho.abs().max(scale * 1e-6) {
            quiet += 1;
            if quiet >= 5 {
                converged = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    if rn.is_infinite() || !converged || quiet >= 5 {
        gv = hv(&v);
        rho = dot(&v, &gv);
        let r: Vec<f64> = gv.iter().zip(&v).map(|(g, v)| g - rho * v).collect();
        rn = norm(&r);
    }
    EigenEstimate { value: rho, residual: rn, vector: v, iterations: iters, converged }
}

/// Restarted Lanczos-type subspace iteration (Davidson form) for the smallest
/// eigenvalue. With the identity preconditioner the expansion vectors are the
/// Lanczos residuals and the subspace is the Krylov space. Rayleigh-Ritz extraction is done
/// in the plain coefficient metric, so the returned value is an eigenvalue of
/// `H` itself.
pub fn lanczos<H: FnMut(&[f64]) -> Vec<f64>>(
    mut hv: H,
    precond: Precond,
    scale: f64,
    v0: &[f64],
    opts: &EigenOptions,
) -> EigenEstimate {
    let n = v0.len();
    let mut basis: Vec<Vec<f64>> = vec![normalized(v0.to_vec())];
    let mut images: Vec<Vec<f64>> = vec![hv(&basis[0])];
    let mut best = EigenEstimate { value: f64::NAN, vector: basis[0].clone(), residual: f64::INFINITY, iterations: 0, converged: false };
    let mut prev_u: Option<Vec<f64>> = None;
    for it in 0..opts.max_iters {
        let k = basis.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let a = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                t[(i, j)] = a;
                t[(j, i)] = a;
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
        let y = eig.eigenvectors.column(imin);
        let mut u = vec![0.0; n];
        let mut au = vec![0.0; n];
        for i in 0..k {
            for j in 0..n {
                u[j] += y[i] * basis[i][j];
                au[j] += y[i] * images[i][j];
            }
        }
        let r: Vec<f64> = au.iter().zip(&u).map(|(a, u)| a - theta * u).collect();
        let rn = norm(&r);
        best = EigenEstimate { value: theta, vector: u.clone(), residual: rn, iterations: it + 1, converged: false };
        if rn <= opts.residual_tol * scale {
            best.converged = true;
            break;
        }
        let mut t = precond(&r);
        if basis.len() >= opts.max_subspace {
            // thick restart on the current and previous Ritz vectors
            let mut nb = vec![normalized(u.clone())];
            let mut ni = vec![hv(&nb[0])];
            if let Some(p) = prev_u.take() {
                let mut p = p;
                for _ in 0..2 {
                    let c = dot(&p, &nb[0]);
                    p.iter_mut().zip(&nb[0]).for_each(|(a, b)| *a -= c * b);
                }
                if norm(&p) > 1e-8 {
                    let p = normalized(p);
                    ni.push(hv(&p));
                    nb.push(p);
                }
            }
            basis = nb;
            images = ni;
        }
        prev_u = Some(u);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&t, b);
                t.iter_mut().zip(b).for_each(|(a, b)| *a -= c * b);
            }
        }
        let tn = norm(&t);
        if !(tn > 1e-12) {
            break;
        }
        let t = normalized(t);
        images.push(hv(&t));
        basis.push(t);
    }
    best
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s[s.len() / 2]
}
