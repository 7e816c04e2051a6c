//! Reduced two-dimensional problem for states with `z` as a constant
//! eigenvector, `Q = q1 (n1 n1 - n2 n2) + q2 (n1 n2 + n2 n1) + q3 (2 z z - n1 n1 - n2 n2)`
//! with `n1 = (-1, 1, 0)/sqrt 2`, `n2 = (1, 1, 0)/sqrt 2`, on the square whose
//! diagonals lie along the coordinate axes.
//!
//! The grid is uniform in `u = x + y`, `v = y - x`, so the untruncated square
//! is `(-1, 1)^2` in `(u, v)` and the truncating edges `|x| = 1 - eta`,
//! `|y| = 1 - eta` pass through grid nodes. Since `dx dy = du dv / 2` and
//! `|grad q|^2 = 2 (q_u^2 + q_v^2)`, the Dirichlet integral is the plain edge
//! sum of squared differences.

mod bounds;
mod wors3d;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bounds::{verify_bounds, BoundCheck, BoundsReport, TemperatureRegime};
pub use wors3d::{wors3d_check, wors_constrained_3d, wors_symmetry_project, Wors3dCheck};

use crate::energy::Accumulator;
use crate::error::{Error, Result};
use crate::minimize::lbfgs::{self, IterRecord, LbfgsOptions};
use crate::tensor::{MaterialParams, QTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// The whole square; the boundary value of `q1` ramps linearly to zero
    /// within `eta`-collars of the vertices.
    FullSquare,
    /// Vertices cut off by short edges of length `2 eta`.
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Outside,
    Boundary,
    Interior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    pub n: usize,
    pub eta: f64,
    pub kind: DomainKind,
    /// Spacing in `u` and `v`.
    pub h: f64,
    /// Physical distance between neighbouring nodes.
    pub h2: f64,
    kinds: Array2<NodeKind>,
}

const GEOM_TOL: f64 = 1e-9;

impl Grid2D {
    pub const DEFAULT_N: usize = 129;
    pub const DEFAULT_ETA: f64 = 1.0 / 16.0;

    pub fn new(n: usize, kind: DomainKind, eta: f64) -> Result<Self> {
        if n < 5 || n % 2 == 0 {
            return Err(Error::Domain(format!("grid size must be odd and at least 5, got {n}")));
        }
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::Domain(format!("eta must lie in (0, 1/2), got {eta}")));
        }
        if kind == DomainKind::Truncated {
            let k = eta * (n - 1) as f64;
            if (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
                return Err(Error::Domain(format!(
                    "truncated grid needs eta (n - 1) to be a positive integer, got {k}"
                )));
            }
        }
        let h = 2.0 / (n - 1) as f64;
        let mut g = Grid2D { n, eta, kind, h, h2: h / std::f64::consts::SQRT_2, kinds: Array2::from_elem((n, n), NodeKind::Outside) };
        for i in 0..n {
            for j in 0..n {
                g.kinds[[i, j]] = g.classify(i, j);
            }
        }
        Ok(g)
    }

    pub fn default_truncated() -> Self {
        Grid2D::new(Self::DEFAULT_N, DomainKind::Truncated, Self::DEFAULT_ETA).expect("default grid is valid")
    }

    pub fn uv(&self, i: usize, j: usize) -> (f64, f64) {
        (-1.0 + i as f64 * self.h, -1.0 + j as f64 * self.h)
    }

    pub fn xy(&self, i: usize, j: usize) -> (f64, f64) {
        let (u, v) = self.uv(i, j);
        (0.5 * (u - v), 0.5 * (u + v))
    }

    fn classify(&self, i: usize, j: usize) -> NodeKind {
        let (u, v) = self.uv(i, j);
        let (x, y) = self.xy(i, j);
        let on_square = u.abs() >= 1.0 - GEOM_TOL || v.abs() >= 1.0 - GEOM_TOL;
        match self.kind {
            DomainKind::FullSquare => {
                if on_square {
                    NodeKind::Boundary
                } else {
                    NodeKind::Interior
                }
            }
            DomainKind::Truncated => {
                let lim = 1.0 - self.eta;
                if x.abs() > lim + GEOM_TOL || y.abs() > lim + GEOM_TOL {
                    NodeKind::Outside
                } else if on_square || x.abs() >= lim - GEOM_TOL || y.abs() >= lim - GEOM_TOL {
                    NodeKind::Boundary
                } else {
                    NodeKind::Interior
                }
            }
        }
    }

    pub fn node_kind(&self, i: usize, j: usize) -> NodeKind {
        self.kinds[[i, j]]
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.kinds[[i, j]] == NodeKind::Interior
    }

    /// Interior nodes whose four neighbours are interior as well.
    pub fn is_deep_interior(&self, i: usize, j: usize) -> bool {
        self.is_interior(i, j) && self.neighbours(i, j).all(|(a, b)| self.is_interior(a, b))
    }

    pub fn neighbours(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n as isize;
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].into_iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && a < n && b < n).then_some((a as usize, b as usize))
        })
    }

    pub fn interior_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.is_interior(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Grid edges with both ends in the closed domain and at least one
    /// interior end.
    fn edges(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.kinds[[i, j]] == NodeKind::Outside {
                    continue;
                }
                for (a, b) in [(i + 1, j), (i, j + 1)] {
                    if a >= self.n || b >= self.n || self.kinds[[a, b]] == NodeKind::Outside {
                        continue;
                    }
                    if self.is_interior(i, j) || self.is_interior(a, b) {
                        out.push(((i, j), (a, b)));
                    }
                }
            }
        }
        out
    }

    /// Area weight of a node in the nodal quadrature.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        match self.kinds[[i, j]] {
            NodeKind::Interior => 0.5 * self.h * self.h,
            NodeKind::Boundary => 0.25 * self.h * self.h,
            NodeKind::Outside => 0.0,
        }
    }

    /// Dirichlet value of `q1` at a boundary node: `s+/2` on the edges
    /// `|x + y| = 1` (director `n1`), `-s+/2` on `|y - x| = 1` (director
    /// `n2`), linear across the short edges or vertex collars.
    pub fn q1_boundary(&self, i: usize, j: usize, s_plus: f64) -> f64 {
        let (u, v) = self.uv(i, j);
        let (x, y) = self.xy(i, j);
        match self.kind {
            DomainKind::FullSquare => {
                let on_u = u.abs() >= 1.0 - GEOM_TOL;
                let on_v = v.abs() >= 1.0 - GEOM_TOL;
                if on_u && on_v {
                    0.0
                } else if on_u {
                    0.5 * s_plus * ((1.0 - v.abs()) / (2.0 * self.eta)).min(1.0)
                } else {
                    -0.5 * s_plus * ((1.0 - u.abs()) / (2.0 * self.eta)).min(1.0)
                }
            }
            DomainKind::Truncated => {
                let lim = 1.0 - self.eta;
                if x.abs() >= lim - GEOM_TOL || y.abs() >= lim - GEOM_TOL {
                    s_plus * x * y / (2.0 * self.eta * lim)
                } else if u.abs() >= 1.0 - GEOM_TOL {
                    0.5 * s_plus
                } else {
                    -0.5 * s_plus
                }
            }
        }
    }

    /// Node images under the reflections `x -> -x` and `y -> -y`, with the
    /// sign `q1` picks up.
    pub fn orbit(&self, i: usize, j: usize) -> [((usize, usize), f64); 4] {
        let m = self.n - 1;
        [((i, j), 1.0), ((j, i), -1.0), ((m - j, m - i), -1.0), ((m - i, m - j), 1.0)]
    }
}

/// `(q1, q2, q3)` on a [`Grid2D`], with Dirichlet data on the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    pub grid: Grid2D,
    pub q1: Array2<f64>,
    pub q2: Array2<f64>,
    pub q3: Array2<f64>,
    pub lambda_bar_sq: f64,
    pub material: MaterialParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, from = "ReducedInitRepr")]
pub enum ReducedInit {
    /// `q1 = (s+/2) sign(xy) min(1, dist to the axes / 0.1)`, `q2 = 0`.
    Wors,
    /// Uniform director along `x` (`sign = 1`) or `y` (`sign = -1`).
    Diagonal { sign: i8 },
    /// Uniform random interior values.
    Random { seed: u64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ReducedInitRepr {
    Wors {},
    Diagonal { sign: i8 },
    Random { seed: u64 },
}

impl From<ReducedInitRepr> for ReducedInit {
    fn from(r: ReducedInitRepr) -> Self {
        match r {
            ReducedInitRepr::Wors {} => ReducedInit::Wors,
            ReducedInitRepr::Diagonal { sign } => ReducedInit::Diagonal { sign },
            ReducedInitRepr::Random { seed } => ReducedInit::Random { seed },
        }
    }
}

impl ReducedState {
    /// State with boundary data installed and interior values from `init`.
    pub fn initial(grid: &Grid2D, material: MaterialParams, lambda_bar_sq: f64, init: ReducedInit) -> Result<Self> {
        material.validate()?;
        if !(lambda_bar_sq > 0.0) {
            return Err(Error::Domain(format!("lambda_bar_sq must be positive, got {lambda_bar_sq}")));
        }
        let s = material.s_plus();
        let n = grid.n;
        let mut st = ReducedState {
            grid: grid.clone(),
            q1: Array2::zeros((n, n)),
            q2: Array2::zeros((n, n)),
            q3: Array2::zeros((n, n)),
            lambda_bar_sq,
            material,
        };
        let mut rng = match init {
            ReducedInit::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        for i in 0..n {
            for j in 0..n {
                let (x, y) = grid.xy(i, j);
                let (a, b, c) = match grid.node_kind(i, j) {
                    NodeKind::Outside => (0.0, 0.0, 0.0),
                    NodeKind::Boundary => (grid.q1_boundary(i, j, s), 0.0, -s / 6.0),
                    NodeKind::Interior => match init {
                        ReducedInit::Wors => {
                            let d = x.abs().min(y.abs());
                            let sg = (x * y).signum();
                            (0.5 * s * sg * (d / 0.1).min(1.0), 0.0, -s / 6.0)
                        }
                        ReducedInit::Diagonal { sign } => {
                            if sign >= 0 {
                                (0.0, -0.5 * s, -s / 6.0)
                            } else {
                                (0.0, 0.5 * s, -s / 6.0)
                            }
                        }
                        ReducedInit::Random { .. } => {
                            let r = rng.as_mut().unwrap();
                            (r.random_range(-0.5..0.5) * s, r.random_range(-0.5..0.5) * s, r.random_range(-1.0 / 3.0..0.0) * s)
                        }
                    },
                };
                st.q1[[i, j]] = a;
                st.q2[[i, j]] = b;
                st.q3[[i, j]] = c;
            }
        }
        Ok(st)
    }

    pub fn s_plus(&self) -> f64 {
        self.material.s_plus()
    }

    fn bulk_prefactor(&self) -> f64 {
        self.lambda_bar_sq / (2.0 * self.material.c)
    }

    /// Full tensor at a node, in the `(x, y, z)` frame.
    pub fn q_tensor(&self, i: usize, j: usize) -> QTensor {
        let (q1, q2, q3) = (self.q1[[i, j]], self.q2[[i, j]], self.q3[[i, j]]);
        QTensor::new([-q2 - q3, -q1, 0.0, q2 - q3, 0.0])
    }

    /// Discrete `J`.
    pub fn energy(&self) -> f64 {
        energy_and_gradient(self, false).0
    }

    /// Largest strong-form Euler-Lagrange residual over interior nodes, for
    /// the unknowns listed in `which` (`0, 1, 2` for `q1, q2, q3`). Nodes in
    /// `skip` are left out.
    pub fn el_residual_masked(&self, which: &[usize], skip: &dyn Fn(usize, usize) -> bool) -> f64 {
        let (_, g) = energy_and_gradient(self, true);
        let g = g.unwrap();
        let w = 0.5 * self.grid.h * self.grid.h;
        let mut worst = 0.0f64;
        for (i, j) in self.grid.interior_nodes() {
            if skip(i, j) {
                continue;
            }
            for &k in which {
                worst = worst.max(g[k][[i, j]].abs() / w);
            }
        }
        worst
    }

    /// Largest strong-form residual of all three equations.
    pub fn el_residual(&self) -> f64 {
        self.el_residual_masked(&[0, 1, 2], &|_, _| false)
    }

    pub fn max_abs_diff(&self, other: &ReducedState) -> f64 {
        let mut d = 0.0f64;
        for (a, b) in [(&self.q1, &other.q1), (&self.q2, &other.q2), (&self.q3, &other.q3)] {
            for (x, y) in a.iter().zip(b.iter()) {
                d = d.max((x - y).abs());
            }
        }
        d
    }
}

/// Bulk potential of the reduced system and its partial derivatives.
pub fn reduced_potential(q1: f64, q2: f64, q3: f64, m: &MaterialParams) -> (f64, [f64; 3]) {
    let p = q1 * q1 + q2 * q2;
    let s = p + 3.0 * q3 * q3;
    let f = m.a * s + 2.0 * m.b * q3 * p - 2.0 * m.b * q3 * q3 * q3 + m.c * s * s;
    let k = 2.0 * m.a + 4.0 * m.b * q3 + 4.0 * m.c * s;
    let g3 = 6.0 * m.a * q3 + 2.0 * m.b * p - 6.0 * m.b * q3 * q3 + 12.0 * m.c * s * q3;
    (f, [k * q1, k * q2, g3])
}

/// `J` and, optionally, its gradient with respect to every node value.
fn energy_and_gradient(st: &ReducedState, want_grad: bool) -> (f64, Option<[Array2<f64>; 3]>) {
    let g = &st.grid;
    let n = g.n;
    let fields = [&st.q1, &st.q2, &st.q3];
    let coef = [1.0, 1.0, 3.0];
    let mut acc = Accumulator::default();
    let mut grad = want_grad.then(|| [Array2::zeros((n, n)), Array2::zeros((n, n)), Array2::zeros((n, n))]);
    for ((i, j), (a, b)) in g.edges() {
        for k in 0..3 {
            let d = fields[k][[i, j]] - fields[k][[a, b]];
            acc.add(coef[k] * d * d);
            if let Some(gr) = grad.as_mut() {
                gr[k][[i, j]] += 2.0 * coef[k] * d;
                gr[k][[a, b]] -= 2.0 * coef[k] * d;
            }
        }
    }
    let pref = st.bulk_prefactor();
    for i in 0..n {
        for j in 0..n {
            let w = g.node_weight(i, j);
            if w == 0.0 {
                continue;
            }
            let (f, df) = reduced_potential(st.q1[[i, j]], st.q2[[i, j]], st.q3[[i, j]], &st.material);
            acc.add(pref * w * f);
            if let Some(gr) = grad.as_mut() {
                for k in 0..3 {
                    gr[k][[i, j]] += pref * w * df[k];
                }
            }
        }
    }
    if let Some(gr) = grad.as_mut() {
        for i in 0..n {
            for j in 0..n {
                if !g.is_interior(i, j) {
                    for k in 0..3 {
                        gr[k][[i, j]] = 0.0;
                    }
                }
            }
        }
    }
    (acc.value(), grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedOptions {
    pub lbfgs: LbfgsOptions,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        ReducedOptions { lbfgs: LbfgsOptions { grad_tol: 1e-11, max_iters: 50000, ..Default::default() } }
    }
}

#[derive(Clone, Debug)]
pub struct ReducedSolve {
    pub state: ReducedState,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub log: Vec<IterRecord>,
    pub message: String,
    /// Number of interior nodes where `q3 = 0` is active.
    pub active_nodes: usize,
    /// Largest violation of the sign condition on the multiplier at active
    /// nodes, in strong form.
    pub kkt_residual: f64,
}

/// Unknowns of a reduced solve: which node values are free, and how the full
/// fields are rebuilt from them.
trait Layout {
    fn len(&self) -> usize;
    fn scatter(&self, x: &[f64], st: &mut ReducedState);
    fn gather_grad(&self, g: &[Array2<f64>; 3]) -> Vec<f64>;
    fn gather(&self, st: &ReducedState) -> Vec<f64>;
    /// Upper bounds (`0` on `q3` entries when constrained).
    fn upper(&self, constrain: bool) -> Vec<f64>;
}

struct FullLayout {
    nodes: Vec<(usize, usize)>,
}

impl Layout for FullLayout {
    fn len(&self) -> usize {
        3 * self.nodes.len()
    }
    fn scatter(&self, x: &[f64], st: &mut ReducedState) {
        let m = self.nodes.len();
        for (t, &(i, j)) in self.nodes.iter().enumerate() {
            st.q1[[i, j]] = x[t];
            st.q2[[i, j]] = x[m + t];
            st.q3[[i, j]] = x[2 * m + t];
        }
    }
    fn gather_grad(&self, g: &[Array2<f64>; 3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for gk in g {
            out.extend(self.nodes.iter().map(|&(i, j)| gk[[i, j]]));
        }
        out
    }
    fn gather(&self, st: &ReducedState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for f in [&st.q1, &st.q2, &st.q3] {
            out.extend(self.nodes.iter().map(|&(i, j)| f[[i, j]]));
        }
        out
    }
    fn upper(&self, constrain: bool) -> Vec<f64> {
        let m = self.nodes.len();
        let mut u = vec![f64::INFINITY; 3 * m];
        if constrain {
            u[2 * m..].iter_mut().for_each(|v| *v = 0.0);
        }
        u
    }
}

/// First-quadrant unknowns `(q1, q3)` extended by `q1` odd and `q3` even
/// under `x -> -x`, `y -> -y`; `q2 = 0` and `q1 = 0` on the axes.
struct QuadrantLayout {
    q1_nodes: Vec<(usize, usize)>,
    q3_nodes: Vec<(usize, usize)>,
    grid: Grid2D,
}

impl QuadrantLayout {
    fn new(grid: &Grid2D) -> Self {
        let mut q1_nodes = Vec::new();
        let mut q3_nodes = Vec::new();
        for (i, j) in grid.interior_nodes() {
            let (x, y) = grid.xy(i, j);
            if x < -GEOM_TOL || y < -GEOM_TOL {
                continue;
            }
            q3_nodes.push((i, j));
            if x > GEOM_TOL && y > GEOM_TOL {
                q1_nodes.push((i, j));
            }
        }
        QuadrantLayout { q1_nodes, q3_nodes, grid: grid.clone() }
    }

    fn images(&self, i: usize, j: usize) -> Vec<((usize, usize), f64)> {
        let mut out: Vec<((usize, usize), f64)> = Vec::with_capacity(4);
        for (p, s) in self.grid.orbit(i, j) {
            if !out.iter().any(|(q, _)| *q == p) {
                out.push((p, s));
            }
        }
        out
    }
}

impl Layout for QuadrantLayout {
    fn len(&self) -> usize {
        self.q1_nodes.len() + self.q3_nodes.len()
    }
    fn scatter(&self, x: &[f64], st: &mut ReducedState) {
        let m = self.q1_nodes.len();
        for (i, j) in self.grid.interior_nodes() {
            st.q1[[i, j]] = 0.0;
            st.q2[[i, j]] = 0.0;
        }
        for (t, &(i, j)) in self.q1_nodes.iter().enumerate() {
            for ((a, b), s) in self.images(i, j) {
                st.q1[[a, b]] = s * x[t];
            }
        }
        for (t, &(i, j)) in self.q3_nodes.iter().enumerate() {
            for ((a, b), _) in self.images(i, j) {
                st.q3[[a, b]] = x[m + t];
            }
        }
    }
    fn gather_grad(&self, g: &[Array2<f64>; 3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &(i, j) in &self.q1_nodes {
            out.push(self.images(i, j).iter().map(|((a, b), s)| s * g[0][[*a, *b]]).sum());
        }
        for &(i, j) in &self.q3_nodes {
            out.push(self.images(i, j).iter().map(|((a, b), _)| g[2][[*a, *b]]).sum());
        }
        out
    }
    fn gather(&self, st: &ReducedState) -> Vec<f64> {
        let mut out: Vec<f64> = self.q1_nodes.iter().map(|&(i, j)| st.q1[[i, j]]).collect();
        out.extend(self.q3_nodes.iter().map(|&(i, j)| st.q3[[i, j]]));
        out
    }
    fn upper(&self, constrain: bool) -> Vec<f64> {
        let m = self.q1_nodes.len();
        let mut u = vec![f64::INFINITY; self.len()];
        if constrain {
            u[m..].iter_mut().for_each(|v| *v = 0.0);
        }
        u
    }
}

fn run_layout(mut st: ReducedState, layout: &dyn Layout, constrain: bool, opts: &ReducedOptions) -> Result<ReducedSolve> {
    opts.lbfgs.validate()?;
    let x0 = layout.gather(&st);
    let work = std::cell::RefCell::new(st.clone());
    let fun = |x: &[f64]| {
        let mut s = work.borrow_mut();
        layout.scatter(x, &mut s);
        let (f, g) = energy_and_gradient(&s, true);
        (f, layout.gather_grad(&g.unwrap()))
    };
    let upper = layout.upper(constrain);
    let out = if constrain {
        lbfgs::minimize_projected(fun, &x0, &upper, &opts.lbfgs, None)
    } else {
        lbfgs::minimize(fun, &x0, &opts.lbfgs, None)
    };
    layout.scatter(&out.x, &mut st);
    let grad_norm = if constrain { lbfgs::projected_grad_norm(&out.x, &out.g, &upper) } else { lbfgs::sup_norm(&out.g) };
    let (energy, g) = energy_and_gradient(&st, true);
    let g = g.unwrap();
    let w = 0.5 * st.grid.h * st.grid.h;
    let mut active = 0;
    let mut kkt = 0.0f64;
    if constrain {
        for (i, j) in st.grid.interior_nodes() {
            if st.q3[[i, j]] >= 0.0 {
                active += 1;
                kkt = kkt.max(g[2][[i, j]].max(0.0) / w);
            }
        }
    }
    Ok(ReducedSolve {
        state: st,
        energy,
        converged: out.converged,
        iterations: out.iterations,
        grad_norm,
        log: out.log,
        message: out.message,
        active_nodes: active,
        kkt_residual: kkt,
    })
}

/// Minimizes `J` over all interior values, optionally in the class `q3 <= 0`
/// by projection.
pub fn minimize_j(
    grid: &Grid2D,
    material: MaterialParams,
    lambda_bar_sq: f64,
    constrain_q3_nonpositive: bool,
    init: ReducedInit,
    opts: &ReducedOptions,
) -> Result<ReducedSolve> {
    let st = ReducedState::initial(grid, material, lambda_bar_sq, init)?;
    minimize_j_from(st, constrain_q3_nonpositive, opts)
}

/// As [`minimize_j`], starting from an arbitrary state with boundary data.
pub fn minimize_j_from(st: ReducedState, constrain_q3_nonpositive: bool, opts: &ReducedOptions) -> Result<ReducedSolve> {
    let layout = FullLayout { nodes: st.grid.interior_nodes() };
    let mut st = st;
    if constrain_q3_nonpositive {
        st.q3.iter_mut().for_each(|v| *v = v.min(0.0));
    }
    run_layout(st, &layout, constrain_q3_nonpositive, opts)
}

/// WORS by minimizing `G[q1, q3]` over the first quadrant with `q1 = 0` on
/// the axes, `q3 <= 0`, and extending by reflection.
pub fn solve_wors_quadrant(grid: &Grid2D, material: MaterialParams, lambda_bar_sq: f64, opts: &ReducedOptions) -> Result<ReducedSolve> {
    let st = ReducedState::initial(grid, material, lambda_bar_sq, ReducedInit::Wors)?;
    let layout = QuadrantLayout::new(grid);
    run_layout(st, &layout, true, opts)
}

/// Second variation `H[phi]` of the energy about a state with `q2 = 0`,
/// for the in-plane perturbation `phi (n1 n2 + n2 n1)`.
pub fn second_variation_h(st: &ReducedState, phi: &Array2<f64>) -> Result<f64> {
    let g = &st.grid;
    if phi.dim() != (g.n, g.n) {
        return Err(Error::Shape(format!("test function shape {:?} does not match the grid {}", phi.dim(), g.n)));
    }
    let q2max = st.q2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if q2max > 1e-10 * st.s_plus() {
        return Err(Error::Domain(format!("second variation needs q2 = 0, found |q2| up to {q2max:e}")));
    }
    for i in 0..g.n {
        for j in 0..g.n {
            if !g.is_interior(i, j) && phi[[i, j]] != 0.0 {
                return Err(Error::Domain(format!("test function is nonzero at boundary node ({i}, {j})")));
            }
        }
    }
    let m = &st.material;
    let pref = st.bulk_prefactor();
    let mut acc = Accumulator::default();
    for ((i, j), (a, b)) in g.edges() {
        let d = phi[[i, j]] - phi[[a, b]];
        acc.add(d * d);
    }
    for (i, j) in g.interior_nodes() {
        let (q1, q3) = (st.q1[[i, j]], st.q3[[i, j]]);
        let factor = m.a + 2.0 * m.b * q3 + 2.0 * m.c * (q1 * q1 + 3.0 * q3 * q3);
        acc.add(pref * g.node_weight(i, j) * phi[[i, j]] * phi[[i, j]] * factor);
    }
    Ok(acc.value())
}

/// Pointwise factor `A + 2 B q3 + 2 C (q1^2 + 3 q3^2)` of the second variation.
pub fn h_factor(st: &ReducedState, i: usize, j: usize) -> f64 {
    let m = &st.material;
    let (q1, q3) = (st.q1[[i, j]], st.q3[[i, j]]);
    m.a + 2.0 * m.b * q3 + 2.0 * m.c * (q1 * q1 + 3.0 * q3 * q3)
}

/// Smooth bump `(1 - r^2 / radius^2)^2` centred at the origin.
pub fn centered_bump(grid: &Grid2D, radius: f64) -> Array2<f64> {
    Array2::from_shape_fn((grid.n, grid.n), |(i, j)| {
        if !grid.is_interior(i, j) {
            return 0.0;
        }
        let (x, y) = grid.xy(i, j);
        let t = 1.0 - (x * x + y * y) / (radius * radius);
        if t > 0.0 {
            t * t
        } else {
            0.0
        }
    })
}
