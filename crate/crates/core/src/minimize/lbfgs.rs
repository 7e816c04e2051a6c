//! Limited-memory BFGS on flat vectors, with an optional diagonal
//! preconditioner and a projected variant for upper bounds.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop when the sup-norm of the gradient drops to this value.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Sufficient-decrease constant of the strong Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
    /// Relative energy resolution. When no step along a descent direction
    /// is acceptable and the predicted decrease is below
    /// `ftol * max(|f|, 1)`, the iterate counts as converged.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, grad_tol: 1e-8, max_iters: 20000, c1: 1e-4, c2: 0.9, max_line_search: 40, ftol: 1e-14 }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> crate::Result<()> {
        if self.memory == 0 {
            return Err(crate::Error::Config("lbfgs.memory must be at least 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(crate::Error::Config(format!(
                "line-search constants need 0 < c1 < c2 < 1, got c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(crate::Error::Config("lbfgs.grad_tol must be positive".into()));
        }
        if !(self.ftol >= 0.0) {
            return Err(crate::Error::Config("lbfgs.ftol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One accepted iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// Euclidean length of the accepted step.
    pub step: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log: Vec<IterRecord>,
    pub message: String,
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + a * d).collect()
}

struct History {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
    cap: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        History { s: Vec::new(), y: Vec::new(), rho: Vec::new(), cap }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-300) || !sy.is_finite() {
            return false;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.rho.push(1.0 / sy);
        self.s.push(s);
        self.y.push(y);
        true
    }

    /// Two-loop recursion: returns `H g` with `H0 = gamma * P`.
    fn apply(&self, g: &[f64], precond: Option<Precond>) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let pre = |v: &mut Vec<f64>| {
            if let Some(p) = precond {
                *v = p(v);
            }
        };
        if k > 0 {
            let y = &self.y[k - 1];
            let mut py = y.clone();
            pre(&mut py);
            let gamma = dot(&self.s[k - 1], y) / dot(y, &py);
            pre(&mut q);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            pre(&mut q);
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q
    }
}

struct Trial {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

/// Strong Wolfe line search by bracketing and zoom on the directional
/// derivative. Near convergence, where energy differences drown in rounding,
/// a step is also accepted if it does not increase the energy and satisfies
/// the derivative form of sufficient decrease together with the curvature
/// condition.
fn wolfe_search<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    fun: &mut F,
    x: &[f64],
    f0: f64,
    dphi0: f64,
    d: &[f64],
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Option<Trial> {
    let noise = 1e-11 * f0.abs().max(1e-300);
    let mut evals = 0;
    let mut eval = |a: f64| {
        let xt = axpy(x, a, d);
        let (f, g) = fun(&xt);
        let dphi = dot(&g, d);
        Trial { alpha: a, f, g, dphi }
    };
    let accept = |t: &Trial| {
        if !t.f.is_finite() {
            return false;
        }
        let strong = t.f <= f0 + opts.c1 * t.alpha * dphi0 && t.dphi.abs() <= -opts.c2 * dphi0;
        let approx = t.f <= f0
            && t.f - f0 >= -noise
            && t.dphi >= opts.c2 * dphi0
            && t.dphi <= (2.0 * opts.c1 - 1.0) * dphi0;
        strong || approx
    };
    // an iterate past the minimizer along d, or with too little decrease
    let overshoot = |t: &Trial| {
        !t.f.is_finite() || t.dphi >= 0.0 || (t.f > f0 + opts.c1 * t.alpha * dphi0 && t.f > f0 + noise)
    };
    let mut best: Option<Trial> = None;
    let keep_best = |t: &Trial, best: &mut Option<Trial>| {
        if t.f.is_finite() && t.f <= f0 + opts.c1 * t.alpha * dphi0 && best.as_ref().map_or(true, |b| t.f < b.f) {
            *best = Some(Trial { alpha: t.alpha, f: t.f, g: t.g.clone(), dphi: t.dphi });
        }
    };

    let mut lo = Trial { alpha: 0.0, f: f0, g: Vec::new(), dphi: dphi0 };
    let mut a = alpha0;
    let mut hi: Option<Trial> = None;
    while evals < opts.max_line_search {
        evals += 1;
        let t = eval(a);
        keep_best(&t, &mut best);
        if accept(&t) {
            return Some(t);
        }
        if overshoot(&t) {
            hi = Some(t);
            break;
        }
        lo = t;
        a *= 2.0;
    }
    let mut hi = hi?;
    while evals < opts.max_line_search {
        let width = hi.alpha - lo.alpha;
        if width <= 1e-15 * hi.alpha {
            break;
        }
        // secant on the derivative when it brackets a sign change, else bisection
        let mut a = lo.alpha + 0.5 * width;
        if hi.dphi.is_finite() && hi.dphi > 0.0 {
            let c = lo.alpha - lo.dphi * width / (hi.dphi - lo.dphi);
            if c.is_finite() && c > lo.alpha + 0.1 * width && c < hi.alpha - 0.1 * width {
                a = c;
            }
        }
        evals += 1;
        let t = eval(a);
        keep_best(&t, &mut best);
        if accept(&t) {
            return Some(t);
        }
        if overshoot(&t) {
            hi = t;
        } else {
            lo = t;
        }
    }
    // no Wolfe point found: fall back to the best trial with sufficient decrease
    best
}

/// Symmetric positive definite approximate inverse Hessian.
pub type Precond<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Minimizes `fun` from `x0`. `precond` is the initial L-BFGS matrix, up to
/// the usual scaling.
pub fn minimize<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    mut fun: F,
    x0: &[f64],
    opts: &LbfgsOptions,
    precond: Option<Precond>,
) -> LbfgsOutcome {
    let mut x = x0.to_vec();
    let (mut f, mut g) = fun(&x);
    let mut log = vec![IterRecord { iter: 0, energy: f, grad_norm: sup_norm(&g), step: 0.0 }];
    let mut hist = History::new(opts.memory);
    let mut iters = 0;
    let mut message = String::from("max_iters reached");
    let mut converged = sup_norm(&g) <= opts.grad_tol;
    if converged {
        message = "initial point satisfies tolerance".into();
    }
    let mut failures = 0;
    while !converged && iters < opts.max_iters {
        let mut d: Vec<f64> = hist.apply(&g, precond).into_iter().map(|v| -v).collect();
        let mut dphi = dot(&g, &d);
        if !(dphi < 0.0) {
            hist.clear();
            d = hist.apply(&g, precond).into_iter().map(|v| -v).collect();
            dphi = dot(&g, &d);
        }
        let alpha0 = if hist.s.is_empty() && precond.is_none() { (1.0 / sup_norm(&d)).min(1.0) } else { 1.0 };
        match wolfe_search(&mut fun, &x, f, dphi, &d, alpha0, opts) {
            Some(t) => {
                let s: Vec<f64> = d.iter().map(|v| t.alpha * v).collect();
                let y: Vec<f64> = t.g.iter().zip(&g).map(|(a, b)| a - b).collect();
                let step = norm(&s);
                x.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
                hist.push(s, y);
                f = t.f;
                g = t.g;
                iters += 1;
                failures = 0;
                log.push(IterRecord { iter: iters, energy: f, grad_norm: sup_norm(&g), step });
                if sup_norm(&g) <= opts.grad_tol {
                    converged = true;
                    message = "gradient tolerance reached".into();
                }
            }
            None => {
                if -dphi <= opts.ftol * f.abs().max(1.0) {
                    converged = true;
                    message = "energy resolution reached".into();
                    break;
                }
                failures += 1;
                if failures >= 2 || hist.s.is_empty() {
                    message = "line search failed".into();
                    break;
                }
                hist.clear();
            }
        }
    }
    LbfgsOutcome { x, f, g, iterations: iters, converged, log, message }
}

/// Projected gradient sup-norm for the constraint `x <= upper`.
pub fn projected_grad_norm(x: &[f64], g: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(upper)
        .map(|((x, g), u)| if *x >= *u && *g < 0.0 { 0.0 } else { g.abs() })
        .fold(0.0, f64::max)
}

/// L-BFGS with projection onto `x <= upper` and Armijo backtracking along the
/// projected path; the memory is reset whenever the active set changes.
pub fn minimize_projected<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    mut fun: F,
    x0: &[f64],
    upper: &[f64],
    opts: &LbfgsOptions,
    precond: Option<Precond>,
) -> LbfgsOutcome {
    let clamp = |v: &mut Vec<f64>| v.iter_mut().zip(upper).for_each(|(a, u)| *a = a.min(*u));
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut f, mut g) = fun(&x);
    let active = |x: &[f64], g: &[f64]| -> Vec<bool> {
        x.iter().zip(g).zip(upper).map(|((x, g), u)| *x >= *u && *g < 0.0).collect()
    };
    let mut act = active(&x, &g);
    let mut log = vec![IterRecord { iter: 0, energy: f, grad_norm: projected_grad_norm(&x, &g, upper), step: 0.0 }];
    let mut hist = History::new(opts.memory);
    let mut iters = 0;
    let mut converged = projected_grad_norm(&x, &g, upper) <= opts.grad_tol;
    let mut message = if converged { "initial point satisfies tolerance".to_string() } else { "max_iters reached".to_string() };
    let mut stalls = 0;
    while !converged && iters < opts.max_iters {
        let gf: Vec<f64> = g.iter().zip(&act).map(|(g, a)| if *a { 0.0 } else { *g }).collect();
        let mut d: Vec<f64> = hist.apply(&gf, precond).into_iter().map(|v| -v).collect();
        d.iter_mut().zip(&act).for_each(|(d, a)| if *a { *d = 0.0 });
        if !(dot(&gf, &d) < 0.0) {
            hist.clear();
            d = hist.apply(&gf, precond).into_iter().map(|v| -v).collect();
            d.iter_mut().zip(&act).for_each(|(d, a)| if *a { *d = 0.0 });
        }
        let mut alpha = if hist.s.is_empty() && precond.is_none() { (1.0 / sup_norm(&d)).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..opts.max_line_search {
            let mut xt = axpy(&x, alpha, &d);
            clamp(&mut xt);
            let (ft, gt) = fun(&xt);
            let dx: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &dx);
            // approximate sufficient decrease once energy differences are at rounding level
            let approx = ft <= f && dot(&gt, &dx) <= (2.0 * opts.c1 - 1.0) * decrease;
            if ft.is_finite() && ((ft <= f + opts.c1 * decrease && ft <= f) || approx) {
                accepted = Some((xt, ft, gt, dx));
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((xt, ft, gt, dx)) => {
                let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let step = norm(&dx);
                let new_act = active(&xt, &gt);
                if new_act != act {
                    hist.clear();
                } else {
                    hist.push(dx, y);
                }
                act = new_act;
                let no_progress = ft >= f && projected_grad_norm(&xt, &gt, upper) >= projected_grad_norm(&x, &g, upper);
                x = xt;
                f = ft;
                g = gt;
                iters += 1;
                let pg = projected_grad_norm(&x, &g, upper);
                log.push(IterRecord { iter: iters, energy: f, grad_norm: pg, step });
                if pg <= opts.grad_tol {
                    converged = true;
                    message = "projected gradient tolerance reached".into();
                }
                stalls = if no_progress { stalls + 1 } else { 0 };
                if stalls > 20 {
                    message = "no further decrease".into();
                    break;
                }
            }
            None => {
                if hist.s.is_empty() {
                    message = "line search failed".into();
                    break;
                }
                hist.clear();
            }
        }
    }
    LbfgsOutcome { x, f, g, iterations: iters, converged, log, message }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let n = x.len();
        let mut f = 0.0;
        let mut g = vec![0.0; n];
        for i in 0..n - 1 {
            let a = x[i + 1] - x[i] * x[i];
            let b = 1.0 - x[i];
            f += 100.0 * a * a + b * b;
            g[i] += -400.0 * x[i] * a - 2.0 * b;
            g[i + 1] += 200.0 * a;
        }
        (f, g)
    }

    #[test]
    fn solves_rosenbrock_monotonically() {
        let x0 = vec![-1.2, 1.0, -1.2, 1.0, 0.5, -0.3];
        let out = minimize(rosenbrock, &x0, &LbfgsOptions { grad_tol: 1e-9, ..Default::default() }, None);
        assert!(out.converged, "{}", out.message);
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-6));
        for w in out.log.windows(2) {
            assert!(w[1].energy <= w[0].energy);
        }
    }

    #[test]
    fn fixed_point_takes_no_steps() {
        let x0 = vec![1.0; 4];
        let out = minimize(rosenbrock, &x0, &LbfgsOptions::default(), None);
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn preconditioned_quadratic() {
        // badly scaled diagonal quadratic; exact diagonal preconditioning converges in one step
        let scales: Vec<f64> = (0..50).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        let fun = |x: &[f64]| {
            let f = 0.5 * x.iter().zip(&scales).map(|(x, s)| s * x * x).sum::<f64>();
            (f, x.iter().zip(&scales).map(|(x, s)| s * x).collect())
        };
        let inv = |v: &[f64]| v.iter().zip(&scales).map(|(v, s)| v / s).collect();
        let out = minimize(fun, &vec![1.0; 50], &LbfgsOptions::default(), Some(&inv));
        assert!(out.converged);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn projected_respects_bounds() {
        // min (x - 2)^2 + (y + 1)^2 subject to x <= 0, y <= 0
        let fun = |x: &[f64]| {
            let f = (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2);
            (f, vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)])
        };
        let out = minimize_projected(fun, &[-3.0, -3.0], &[0.0, 0.0], &LbfgsOptions::default(), None);
        assert!(out.converged, "{}", out.message);
        assert!(out.x[0].abs() < 1e-12);
        assert!((out.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_constants() {
        let o = LbfgsOptions { c1: 0.9, c2: 0.5, ..Default::default() };
        assert!(o.validate().is_err());
        assert!(LbfgsOptions { memory: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn stall_at_rounding_level_counts_as_converged() {
        let flat = |_: &[f64]| (1.0, vec![1e-9, -1e-9]);
        let strict = LbfgsOptions { grad_tol: 1e-12, ftol: 0.0, ..Default::default() };
        assert!(!minimize(flat, &[0.0, 0.0], &strict, None).converged);
        let o = LbfgsOptions { grad_tol: 1e-12, ..Default::default() };
        let r = minimize(flat, &[0.0, 0.0], &o, None);
        assert!(r.converged);
        assert_eq!(r.message, "energy resolution reached");
        assert!(LbfgsOptions { ftol: -1.0, ..Default::default() }.validate().is_err());
    }
}
