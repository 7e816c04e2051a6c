//! Tensor-product spectral representation of the five Q-tensor fields.
//!
//! Each entry `p_i` of the Q-tensor is expanded as
//! `p_i(x, y, z) = sum_{l,m,n} c[i, l, m, n] X_l(x) Y_m(y) Z_n(z)` with
//! Chebyshev polynomials (default) or a full Fourier series in the lateral
//! directions and Chebyshev polynomials in the vertical direction. Values and
//! first derivatives are collocated on a tensor quadrature grid with twice as
//! many nodes as modes per direction: Legendre-Gauss-Lobatto nodes for
//! Chebyshev axes and the uniform trapezoidal rule for Fourier axes.
//!
//! The flattened coefficient vector is the standard row-major layout of the
//! `(5, nl, nm, nn)` array: component-major, then `l`, `m`, `n`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::QTensor;

/// Version tag written into coefficient files.
pub const ORDERING_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    /// `cos(l x)` for `l >= 0`, `sin(|l| x)` for `l < 0`, on `[0, 2 pi]`.
    Fourier,
    /// `T_n(x)` on `[-1, 1]`.
    Chebyshev,
}

impl BasisKind {
    fn interval(self) -> (f64, f64) {
        match self {
            BasisKind::Fourier => (0.0, 2.0 * PI),
            BasisKind::Chebyshev => (-1.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Basis1D {
    pub kind: BasisKind,
    pub n_modes: usize,
}

impl Basis1D {
    pub fn new(kind: BasisKind, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Shape("a basis needs at least one mode".into()));
        }
        if kind == BasisKind::Fourier && n_modes % 2 == 0 {
            return Err(Error::Shape(format!("Fourier bases carry 2L-1 modes, got {n_modes}")));
        }
        Ok(Basis1D { kind, n_modes })
    }

    /// Signed wavenumber of mode `k` for Fourier bases (`1-L ..= L-1`).
    pub fn wavenumber(&self, k: usize) -> i64 {
        k as i64 - (self.n_modes as i64 - 1) / 2
    }

    /// Value, first and second derivative of every mode at computational
    /// coordinate `t`.
    pub fn eval_all(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n_modes;
        let mut v = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut dd = vec![0.0; n];
        match self.kind {
            BasisKind::Fourier => {
                for k in 0..n {
                    let l = self.wavenumber(k);
                    let w = l.unsigned_abs() as f64;
                    let (sn, cs) = (w * t).sin_cos();
                    if l >= 0 {
                        v[k] = cs;
                        d[k] = -w * sn;
                        dd[k] = -w * w * cs;
                    } else {
                        v[k] = sn;
                        d[k] = w * cs;
                        dd[k] = -w * w * sn;
                    }
                }
            }
            BasisKind::Chebyshev => {
                v[0] = 1.0;
                if n > 1 {
                    v[1] = t;
                    d[1] = 1.0;
                }
                for k in 1..n.saturating_sub(1) {
                    v[k + 1] = 2.0 * t * v[k] - v[k - 1];
                    d[k + 1] = 2.0 * v[k] + 2.0 * t * d[k] - d[k - 1];
                    dd[k + 1] = 4.0 * d[k] + 2.0 * t * dd[k] - dd[k - 1];
                }
            }
        }
        (v, d, dd)
    }
}

/// Legendre-Gauss-Lobatto nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_lobatto(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "Gauss-Lobatto rules need at least two nodes");
    let big_n = n - 1;
    let mut x: Vec<f64> = (0..n).map(|j| -(PI * j as f64 / big_n as f64).cos()).collect();
    let mut p = vec![0.0; n];
    for xi in x.iter_mut() {
        for _ in 0..100 {
            // Legendre recurrence up to P_N and P_{N-1}
            let (mut p0, mut p1) = (1.0, *xi);
            for k in 2..=big_n {
                let p2 = ((2 * k - 1) as f64 * *xi * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (pn, pnm1) = if big_n == 1 { (*xi, 1.0) } else { (p1, p0) };
            let step = (*xi * pn - pnm1) / (n as f64 * pn);
            *xi -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    x[0] = -1.0;
    x[big_n] = 1.0;
    for (j, xi) in x.iter().enumerate() {
        let (mut p0, mut p1) = (1.0, *xi);
        for k in 2..=big_n {
            let p2 = ((2 * k - 1) as f64 * xi * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        p[j] = if big_n == 1 { *xi } else { p1 };
    }
    let w = p.iter().map(|pn| 2.0 / ((big_n * (big_n + 1)) as f64 * pn * pn)).collect();
    (x, w)
}

/// One direction of the grid: basis, quadrature and the affine map from the
/// computational interval to the physical interval `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct Axis1D {
    pub basis: Basis1D,
    pub lo: f64,
    pub hi: f64,
    /// Physical node coordinates.
    pub nodes: Array1<f64>,
    /// Physical quadrature weights.
    pub weights: Array1<f64>,
    /// Mode values at nodes, `(n_nodes, n_modes)`.
    pub vals: Array2<f64>,
    /// Physical first derivatives at nodes.
    pub ders: Array2<f64>,
    /// Physical second derivatives at nodes.
    pub ders2: Array2<f64>,
    /// Mode values at the two ends of the interval, `(2, n_modes)`.
    pub end_vals: Array2<f64>,
    /// Physical first derivatives at the two ends.
    pub end_ders: Array2<f64>,
    vals_t: Array2<f64>,
    ders_t: Array2<f64>,
    /// L2 projector `(V^T W V)^{-1} V^T W`, `(n_modes, n_nodes)`.
    projector: Array2<f64>,
    /// Diagonals of the physical mass and stiffness matrices.
    pub mass_diag: Array1<f64>,
    pub stiff_diag: Array1<f64>,
    /// Full physical mass and stiffness matrices, `(n_modes, n_modes)`.
    pub mass: Array2<f64>,
    pub stiff: Array2<f64>,
}

impl Axis1D {
    pub fn new(basis: Basis1D, n_nodes: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Domain(format!("empty physical interval [{lo}, {hi}]")));
        }
        if n_nodes < basis.n_modes {
            return Err(Error::Shape(format!(
                "{n_nodes} quadrature nodes cannot resolve {} modes",
                basis.n_modes
            )));
        }
        let (a, b) = basis.kind.interval();
        let (t_nodes, t_weights) = match basis.kind {
            BasisKind::Chebyshev => gauss_lobatto(n_nodes),
            BasisKind::Fourier => (
                (0..n_nodes).map(|j| 2.0 * PI * j as f64 / n_nodes as f64).collect(),
                vec![2.0 * PI / n_nodes as f64; n_nodes],
            ),
        };
        let jac = (hi - lo) / (b - a);
        let scale = 1.0 / jac;
        let nm = basis.n_modes;
        let mut vals = Array2::zeros((n_nodes, nm));
        let mut ders = Array2::zeros((n_nodes, nm));
        let mut ders2 = Array2::zeros((n_nodes, nm));
        for (j, &t) in t_nodes.iter().enumerate() {
            let (v, d, dd) = basis.eval_all(t);
            for k in 0..nm {
                vals[[j, k]] = v[k];
                ders[[j, k]] = d[k] * scale;
                ders2[[j, k]] = dd[k] * scale * scale;
            }
        }
        let mut end_vals = Array2::zeros((2, nm));
        let mut end_ders = Array2::zeros((2, nm));
        for (row, t) in [a, b].into_iter().enumerate() {
            let (v, d, _) = basis.eval_all(t);
            for k in 0..nm {
                end_vals[[row, k]] = v[k];
                end_ders[[row, k]] = d[k] * scale;
            }
        }
        let nodes = Array1::from_iter(t_nodes.iter().map(|t| lo + (t - a) * jac));
        let weights = Array1::from_iter(t_weights.iter().map(|w| w * jac));

        let mut gram = DMatrix::<f64>::zeros(nm, nm);
        let mut stiff = Array2::zeros((nm, nm));
        for j in 0..n_nodes {
            for k in 0..nm {
                for l in 0..nm {
                    gram[(k, l)] += weights[j] * vals[[j, k]] * vals[[j, l]];
                    stiff[[k, l]] += weights[j] * ders[[j, k]] * ders[[j, l]];
                }
            }
        }
        let mass = Array2::from_shape_fn((nm, nm), |(k, l)| gram[(k, l)]);
        let mass_diag = mass.diag().to_owned();
        let stiff_diag = stiff.diag().to_owned();
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Domain("singular mass matrix for the chosen quadrature".into()))?;
        let mut rhs = DMatrix::<f64>::zeros(nm, n_nodes);
        for j in 0..n_nodes {
            for k in 0..nm {
                rhs[(k, j)] = vals[[j, k]] * weights[j];
            }
        }
        let proj = chol.solve(&rhs);
        let projector = Array2::from_shape_fn((nm, n_nodes), |(k, j)| proj[(k, j)]);

        Ok(Axis1D {
            basis,
            lo,
            hi,
            nodes,
            weights,
            vals_t: vals.t().to_owned(),
            ders_t: ders.t().to_owned(),
            vals,
            ders,
            ders2,
            end_vals,
            end_ders,
            projector,
            mass_diag,
            stiff_diag,
            mass,
            stiff,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes
    }

    fn to_computational(&self, x: f64) -> f64 {
        let (a, b) = self.basis.kind.interval();
        a + (x - self.lo) * (b - a) / (self.hi - self.lo)
    }

    /// Mode values and physical derivatives at arbitrary physical points.
    pub fn eval_matrices(&self, points: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let (a, b) = self.basis.kind.interval();
        let scale = (b - a) / (self.hi - self.lo);
        let nm = self.n_modes();
        let mut v = Array2::zeros((points.len(), nm));
        let mut d = Array2::zeros((points.len(), nm));
        for (j, &x) in points.iter().enumerate() {
            let (bv, bd, _) = self.basis.eval_all(self.to_computational(x));
            for k in 0..nm {
                v[[j, k]] = bv[k];
                d[[j, k]] = bd[k] * scale;
            }
        }
        (v, d)
    }
}

/// Applies `mat` (new_len x old_len) along one axis of a 3D array.
pub fn apply_axis(arr: ArrayView3<f64>, mat: &Array2<f64>, axis: usize) -> Array3<f64> {
    let (a, b, c) = arr.dim();
    let arr = arr.as_standard_layout();
    let new = mat.nrows();
    debug_assert_eq!(mat.ncols(), [a, b, c][axis]);
    match axis {
        0 => {
            let flat = arr.view().into_shape_with_order((a, b * c)).unwrap();
            mat.dot(&flat).into_shape_with_order((new, b, c)).unwrap()
        }
        1 => {
            let mut out = Array3::zeros((a, new, c));
            for i in 0..a {
                let slab = arr.index_axis(Axis(0), i);
                out.index_axis_mut(Axis(0), i).assign(&mat.dot(&slab));
            }
            out
        }
        2 => {
            let flat = arr.view().into_shape_with_order((a * b, c)).unwrap();
            flat.dot(&mat.t()).into_shape_with_order((a, b, new)).unwrap()
        }
        _ => panic!("axis {axis} out of range"),
    }
}

/// `(mx (x) my (x) mz) c` applied to a coefficient block.
pub fn eval_tensor(c: ArrayView3<f64>, mx: &Array2<f64>, my: &Array2<f64>, mz: &Array2<f64>) -> Array3<f64> {
    let t = apply_axis(c, mz, 2);
    let t = apply_axis(t.view(), my, 1);
    apply_axis(t.view(), mx, 0)
}

/// Adjoint of [`eval_tensor`].
pub fn eval_tensor_adjoint(
    v: ArrayView3<f64>,
    mx: &Array2<f64>,
    my: &Array2<f64>,
    mz: &Array2<f64>,
) -> Array3<f64> {
    let t = apply_axis(v, &mx.t().to_owned(), 0);
    let t = apply_axis(t.view(), &my.t().to_owned(), 1);
    apply_axis(t.view(), &mz.t().to_owned(), 2)
}

/// Boundary faces of the computational box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    XLow,
    XHigh,
    YLow,
    YHigh,
    /// Bottom plate `z = 0`.
    ZLow,
    /// Top plate `z = eps`.
    ZHigh,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::XLow, Face::XHigh, Face::YLow, Face::YHigh, Face::ZLow, Face::ZHigh];

    pub fn axis(self) -> usize {
        match self {
            Face::XLow | Face::XHigh => 0,
            Face::YLow | Face::YHigh => 1,
            Face::ZLow | Face::ZHigh => 2,
        }
    }

    pub fn end(self) -> usize {
        match self {
            Face::XLow | Face::YLow | Face::ZLow => 0,
            _ => 1,
        }
    }

    /// Outward normal sign along [`Face::axis`].
    pub fn normal_sign(self) -> f64 {
        if self.end() == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn from_name(name: &str) -> Result<Face> {
        match name {
            "x-" | "xlow" => Ok(Face::XLow),
            "x+" | "xhigh" => Ok(Face::XHigh),
            "y-" | "ylow" => Ok(Face::YLow),
            "y+" | "yhigh" => Ok(Face::YHigh),
            "z-" | "bottom" => Ok(Face::ZLow),
            "z+" | "top" => Ok(Face::ZHigh),
            other => Err(Error::Domain(format!("unknown face id {other:?}"))),
        }
    }
}

/// Truncation and basis choice for a 3D grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub lateral: BasisKind,
    /// Lateral truncation `L`: `2L - 1` modes in `x`.
    pub l: usize,
    /// Lateral truncation `M`: `2M - 1` modes in `y`.
    pub m: usize,
    /// Vertical Chebyshev modes `N`.
    pub n: usize,
    /// Quadrature nodes per mode.
    pub quad_factor: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lateral: BasisKind::Chebyshev, l: 16, m: 16, n: 8, quad_factor: 2 }
    }
}

impl GridSpec {
    pub fn new(lateral: BasisKind, l: usize, m: usize, n: usize) -> Self {
        GridSpec { lateral, l, m, n, quad_factor: 2 }
    }
}

/// Spectral grid on the physical well `(-1, 1)^2 x (0, eps)`.
#[derive(Clone, Debug)]
pub struct SpectralGrid {
    pub spec: GridSpec,
    pub eps: f64,
    pub x: Axis1D,
    pub y: Axis1D,
    pub z: Axis1D,
}

impl SpectralGrid {
    pub fn new(spec: GridSpec, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("well height must be positive, got {eps}")));
        }
        if spec.l == 0 || spec.m == 0 || spec.n < 2 || spec.quad_factor < 2 {
            return Err(Error::Shape(format!("invalid truncation {spec:?}")));
        }
        let bx = Basis1D::new(spec.lateral, 2 * spec.l - 1)?;
        let by = Basis1D::new(spec.lateral, 2 * spec.m - 1)?;
        let bz = Basis1D::new(BasisKind::Chebyshev, spec.n)?;
        let q = spec.quad_factor;
        Ok(SpectralGrid {
            spec,
            eps,
            x: Axis1D::new(bx, q * bx.n_modes, -1.0, 1.0)?,
            y: Axis1D::new(by, q * by.n_modes, -1.0, 1.0)?,
            z: Axis1D::new(bz, q * bz.n_modes, 0.0, eps)?,
        })
    }

    pub fn axis(&self, k: usize) -> &Axis1D {
        match k {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    pub fn mode_shape(&self) -> (usize, usize, usize) {
        (self.x.n_modes(), self.y.n_modes(), self.z.n_modes())
    }

    pub fn node_shape(&self) -> (usize, usize, usize) {
        (self.x.n_nodes(), self.y.n_nodes(), self.z.n_nodes())
    }

    /// Total number of coefficients `5 (2L-1)(2M-1) N`.
    pub fn dof(&self) -> usize {
        let (a, b, c) = self.mode_shape();
        5 * a * b * c
    }

    pub fn zero_field(&self) -> SpectralField {
        let (a, b, c) = self.mode_shape();
        SpectralField { coeffs: Array4::zeros((5, a, b, c)) }
    }

    pub fn field_from_flat(&self, flat: &[f64]) -> Result<SpectralField> {
        if flat.len() != self.dof() {
            return Err(Error::Shape(format!("expected {} coefficients, got {}", self.dof(), flat.len())));
        }
        let (a, b, c) = self.mode_shape();
        Ok(SpectralField { coeffs: Array4::from_shape_vec((5, a, b, c), flat.to_vec()).unwrap() })
    }

    fn check_field(&self, f: &SpectralField) -> Result<()> {
        let (a, b, c) = self.mode_shape();
        if f.coeffs.dim() != (5, a, b, c) {
            return Err(Error::Shape(format!(
                "field has coefficient shape {:?}, grid expects {:?}",
                f.coeffs.dim(),
                (5, a, b, c)
            )));
        }
        Ok(())
    }

    fn check_values(&self, v: &Array4<f64>) -> Result<()> {
        let (a, b, c) = self.node_shape();
        if v.dim() != (5, a, b, c) {
            return Err(Error::Shape(format!("node array has shape {:?}, grid expects {:?}", v.dim(), (5, a, b, c))));
        }
        Ok(())
    }

    /// Node values and physical first derivatives of all five components.
    pub fn synthesize(&self, f: &SpectralField) -> Result<CollocationValues> {
        self.check_field(f)?;
        let (nx, ny, nz) = self.node_shape();
        let mut out = CollocationValues::zeros((nx, ny, nz));
        for comp in 0..5 {
            let c = f.coeffs.index_axis(Axis(0), comp);
            let tz = apply_axis(c, &self.z.vals, 2);
            let tzd = apply_axis(c, &self.z.ders, 2);
            let tyz = apply_axis(tz.view(), &self.y.vals, 1);
            out.values.index_axis_mut(Axis(0), comp).assign(&apply_axis(tyz.view(), &self.x.vals, 0));
            out.dx.index_axis_mut(Axis(0), comp).assign(&apply_axis(tyz.view(), &self.x.ders, 0));
            let tdy = apply_axis(tz.view(), &self.y.ders, 1);
            out.dy.index_axis_mut(Axis(0), comp).assign(&apply_axis(tdy.view(), &self.x.vals, 0));
            let tdz = apply_axis(tzd.view(), &self.y.vals, 1);
            out.dz.index_axis_mut(Axis(0), comp).assign(&apply_axis(tdz.view(), &self.x.vals, 0));
        }
        Ok(out)
    }

    /// Node values only.
    pub fn synthesize_values(&self, f: &SpectralField) -> Result<Array4<f64>> {
        self.check_field(f)?;
        let (nx, ny, nz) = self.node_shape();
        let mut out = Array4::zeros((5, nx, ny, nz));
        for comp in 0..5 {
            let c = f.coeffs.index_axis(Axis(0), comp);
            out.index_axis_mut(Axis(0), comp)
                .assign(&eval_tensor(c, &self.x.vals, &self.y.vals, &self.z.vals));
        }
        Ok(out)
    }

    /// Transpose of [`SpectralGrid::synthesize`]: maps node sensitivities of
    /// values and derivatives back to coefficient sensitivities.
    pub fn synthesize_adjoint(&self, g: &CollocationValues) -> Result<SpectralField> {
        self.check_values(&g.values)?;
        let mut out = self.zero_field();
        for comp in 0..5 {
            let gv = g.values.index_axis(Axis(0), comp);
            let gx = g.dx.index_axis(Axis(0), comp);
            let gy = g.dy.index_axis(Axis(0), comp);
            let gz = g.dz.index_axis(Axis(0), comp);
            let mut a = apply_axis(gv, &self.x.vals_t, 0);
            a += &apply_axis(gx, &self.x.ders_t, 0);
            let b = apply_axis(gy, &self.x.vals_t, 0);
            let c = apply_axis(gz, &self.x.vals_t, 0);
            let mut ab = apply_axis(a.view(), &self.y.vals_t, 1);
            ab += &apply_axis(b.view(), &self.y.ders_t, 1);
            let cb = apply_axis(c.view(), &self.y.vals_t, 1);
            let mut res = apply_axis(ab.view(), &self.z.vals_t, 2);
            res += &apply_axis(cb.view(), &self.z.ders_t, 2);
            out.coeffs.index_axis_mut(Axis(0), comp).assign(&res);
        }
        Ok(out)
    }

    /// Quadrature projection of node values onto the truncated basis.
    pub fn analyze(&self, values: &Array4<f64>) -> Result<SpectralField> {
        self.check_values(values)?;
        let mut out = self.zero_field();
        for comp in 0..5 {
            let v = values.index_axis(Axis(0), comp);
            out.coeffs
                .index_axis_mut(Axis(0), comp)
                .assign(&eval_tensor(v, &self.x.projector, &self.y.projector, &self.z.projector));
        }
        Ok(out)
    }

    /// Quadrature weight of node `(i, j, k)`.
    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        self.x.weights[i] * self.y.weights[j] * self.z.weights[k]
    }

    pub fn integrate_volume(&self, density: &Array3<f64>) -> Result<f64> {
        if density.dim() != self.node_shape() {
            return Err(Error::Shape(format!("density shape {:?} vs nodes {:?}", density.dim(), self.node_shape())));
        }
        let mut total = 0.0;
        for ((i, j, k), v) in density.indexed_iter() {
            total += self.weight(i, j, k) * v;
        }
        Ok(total)
    }

    /// Axes spanning a face, in increasing order.
    pub fn face_axes(face: Face) -> (usize, usize) {
        match face.axis() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn face_shape(&self, face: Face) -> (usize, usize) {
        let (a, b) = Self::face_axes(face);
        (self.axis(a).n_nodes(), self.axis(b).n_nodes())
    }

    pub fn face_weight(&self, face: Face, i: usize, j: usize) -> f64 {
        let (a, b) = Self::face_axes(face);
        self.axis(a).weights[i] * self.axis(b).weights[j]
    }

    /// Physical coordinates of face node `(i, j)`.
    pub fn face_point(&self, face: Face, i: usize, j: usize) -> [f64; 3] {
        let (a, b) = Self::face_axes(face);
        let mut p = [0.0; 3];
        p[a] = self.axis(a).nodes[i];
        p[b] = self.axis(b).nodes[j];
        let n = self.axis(face.axis());
        p[face.axis()] = if face.end() == 0 { n.lo } else { n.hi };
        p
    }

    pub fn integrate_face(&self, face: Face, density: &Array2<f64>) -> Result<f64> {
        if density.dim() != self.face_shape(face) {
            return Err(Error::Shape(format!(
                "face density shape {:?} vs face nodes {:?}",
                density.dim(),
                self.face_shape(face)
            )));
        }
        let mut total = 0.0;
        for ((i, j), v) in density.indexed_iter() {
            total += self.face_weight(face, i, j) * v;
        }
        Ok(total)
    }

    fn face_matrices(&self, face: Face, normal_derivative: bool) -> [Array2<f64>; 3] {
        let ax = face.axis();
        let e = face.end();
        let mut mats = [self.x.vals.clone(), self.y.vals.clone(), self.z.vals.clone()];
        let a = self.axis(ax);
        let src = if normal_derivative { &a.end_ders } else { &a.end_vals };
        mats[ax] = src.slice(s![e..e + 1, ..]).to_owned();
        mats
    }

    /// Values of all components on a face, shape `(5, n_a, n_b)`.
    pub fn face_values(&self, f: &SpectralField, face: Face) -> Result<Array3<f64>> {
        self.face_eval(f, face, false)
    }

    /// Outward normal derivatives of all components on a face.
    pub fn face_normal_derivative(&self, f: &SpectralField, face: Face) -> Result<Array3<f64>> {
        let mut d = self.face_eval(f, face, true)?;
        d *= face.normal_sign();
        Ok(d)
    }

    fn face_eval(&self, f: &SpectralField, face: Face, deriv: bool) -> Result<Array3<f64>> {
        self.check_field(f)?;
        let [mx, my, mz] = self.face_matrices(face, deriv);
        let (na, nb) = self.face_shape(face);
        let mut out = Array3::zeros((5, na, nb));
        for comp in 0..5 {
            let v = eval_tensor(f.coeffs.index_axis(Axis(0), comp), &mx, &my, &mz);
            let v2 = v.into_shape_with_order((na, nb)).unwrap();
            out.index_axis_mut(Axis(0), comp).assign(&v2);
        }
        Ok(out)
    }

    /// Transpose of [`SpectralGrid::face_values`].
    pub fn face_values_adjoint(&self, face: Face, g: &Array3<f64>) -> Result<SpectralField> {
        let (na, nb) = self.face_shape(face);
        if g.dim() != (5, na, nb) {
            return Err(Error::Shape(format!("face sensitivity shape {:?}", g.dim())));
        }
        let [mx, my, mz] = self.face_matrices(face, false);
        let mut out = self.zero_field();
        let shape3 = match face.axis() {
            0 => (1, na, nb),
            1 => (na, 1, nb),
            _ => (na, nb, 1),
        };
        for comp in 0..5 {
            let slab = g.index_axis(Axis(0), comp).to_owned().into_shape_with_order(shape3).unwrap();
            let c = eval_tensor_adjoint(slab.view(), &mx, &my, &mz);
            out.coeffs.index_axis_mut(Axis(0), comp).assign(&c);
        }
        Ok(out)
    }

    /// Laplacian of all components at the quadrature nodes.
    pub fn laplacian(&self, f: &SpectralField) -> Result<Array4<f64>> {
        self.check_field(f)?;
        let (nx, ny, nz) = self.node_shape();
        let mut out = Array4::zeros((5, nx, ny, nz));
        for comp in 0..5 {
            let c = f.coeffs.index_axis(Axis(0), comp);
            let mut l = eval_tensor(c, &self.x.ders2, &self.y.vals, &self.z.vals);
            l += &eval_tensor(c, &self.x.vals, &self.y.ders2, &self.z.vals);
            l += &eval_tensor(c, &self.x.vals, &self.y.vals, &self.z.ders2);
            out.index_axis_mut(Axis(0), comp).assign(&l);
        }
        Ok(out)
    }

    /// Values and derivatives on an arbitrary tensor lattice of physical points.
    pub fn sample_lattice(&self, f: &SpectralField, xs: &[f64], ys: &[f64], zs: &[f64]) -> Result<CollocationValues> {
        self.check_field(f)?;
        let (vx, dx) = self.x.eval_matrices(xs);
        let (vy, dy) = self.y.eval_matrices(ys);
        let (vz, dz) = self.z.eval_matrices(zs);
        let mut out = CollocationValues::zeros((xs.len(), ys.len(), zs.len()));
        for comp in 0..5 {
            let c = f.coeffs.index_axis(Axis(0), comp);
            out.values.index_axis_mut(Axis(0), comp).assign(&eval_tensor(c, &vx, &vy, &vz));
            out.dx.index_axis_mut(Axis(0), comp).assign(&eval_tensor(c, &dx, &vy, &vz));
            out.dy.index_axis_mut(Axis(0), comp).assign(&eval_tensor(c, &vx, &dy, &vz));
            out.dz.index_axis_mut(Axis(0), comp).assign(&eval_tensor(c, &vx, &vy, &dz));
        }
        Ok(out)
    }

    /// Q-tensor at a single physical point.
    pub fn evaluate_at(&self, f: &SpectralField, x: f64, y: f64, z: f64) -> Result<QTensor> {
        let v = self.sample_lattice(f, &[x], &[y], &[z])?;
        Ok(v.q_at(0, 0, 0))
    }

    /// Weighted diagonal of `sum_k int |d_k phi|^2` for every basis function,
    /// flattened like the coefficient vector (one component block).
    pub fn stiffness_diagonal(&self) -> Array3<f64> {
        let (a, b, c) = self.mode_shape();
        Array3::from_shape_fn((a, b, c), |(l, m, n)| {
            self.x.stiff_diag[l] * self.y.mass_diag[m] * self.z.mass_diag[n]
                + self.x.mass_diag[l] * self.y.stiff_diag[m] * self.z.mass_diag[n]
                + self.x.mass_diag[l] * self.y.mass_diag[m] * self.z.stiff_diag[n]
        })
    }

    pub fn mass_diagonal(&self) -> Array3<f64> {
        let (a, b, c) = self.mode_shape();
        Array3::from_shape_fn((a, b, c), |(l, m, n)| {
            self.x.mass_diag[l] * self.y.mass_diag[m] * self.z.mass_diag[n]
        })
    }

    /// `int_face phi^2` for every basis function.
    pub fn face_mass_diagonal(&self, face: Face) -> Array3<f64> {
        let (a, b, c) = self.mode_shape();
        let ax = face.axis();
        let e = face.end();
        Array3::from_shape_fn((a, b, c), |idx| {
            let idx = [idx.0, idx.1, idx.2];
            let mut v = 1.0;
            for k in 0..3 {
                let axis = self.axis(k);
                v *= if k == ax { axis.end_vals[[e, idx[k]]].powi(2) } else { axis.mass_diag[idx[k]] };
            }
            v
        })
    }
}

/// Spectral coefficients of the five Q-tensor entries, shape `(5, nl, nm, nn)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub coeffs: Array4<f64>,
}

impl SpectralField {
    pub fn flat(&self) -> &[f64] {
        self.coeffs.as_slice().expect("coefficients are stored contiguously")
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        self.coeffs.as_slice_mut().expect("coefficients are stored contiguously")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.flat().to_vec()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.flat().iter().zip(other.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Node values and physical first derivatives, each `(5, nx, ny, nz)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollocationValues {
    pub values: Array4<f64>,
    pub dx: Array4<f64>,
    pub dy: Array4<f64>,
    pub dz: Array4<f64>,
}

impl CollocationValues {
    pub fn zeros((a, b, c): (usize, usize, usize)) -> Self {
        CollocationValues {
            values: Array4::zeros((5, a, b, c)),
            dx: Array4::zeros((5, a, b, c)),
            dy: Array4::zeros((5, a, b, c)),
            dz: Array4::zeros((5, a, b, c)),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let d = self.values.dim();
        (d.1, d.2, d.3)
    }

    pub fn q_at(&self, i: usize, j: usize, k: usize) -> QTensor {
        QTensor::new(std::array::from_fn(|c| self.values[[c, i, j, k]]))
    }

    pub fn grad_at(&self, i: usize, j: usize, k: usize) -> [QTensor; 3] {
        [
            QTensor::new(std::array::from_fn(|c| self.dx[[c, i, j, k]])),
            QTensor::new(std::array::from_fn(|c| self.dy[[c, i, j, k]])),
            QTensor::new(std::array::from_fn(|c| self.dz[[c, i, j, k]])),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &SpectralGrid, seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = grid.zero_field();
        f.flat_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        f
    }

    fn small(kind: BasisKind) -> SpectralGrid {
        SpectralGrid::new(GridSpec::new(kind, 4, 3, 5), 1.5).unwrap()
    }

    #[test]
    fn lobatto_rule_is_exact() {
        let (x, w) = gauss_lobatto(9);
        assert_eq!(x[0], -1.0);
        assert_eq!(x[8], 1.0);
        // exact to degree 2n-3 = 15
        for deg in 0..=15 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    #[test]
    fn fourier_index_range() {
        let b = Basis1D::new(BasisKind::Fourier, 7).unwrap();
        assert_eq!(b.wavenumber(0), -3);
        assert_eq!(b.wavenumber(6), 3);
        let (v, _, _) = b.eval_all(0.3);
        assert!((v[3] - 1.0).abs() < 1e-15);
        assert!((v[4] - 0.3f64.cos()).abs() < 1e-15);
        assert!((v[2] - 0.3f64.sin()).abs() < 1e-15);
        assert!(Basis1D::new(BasisKind::Fourier, 6).is_err());
    }

    #[test]
    fn quadrature_integrates_mode_products() {
        for kind in [BasisKind::Chebyshev, BasisKind::Fourier] {
            let grid = small(kind);
            let ax = &grid.x;
            let nm = ax.n_modes();
            for k in 0..nm {
                for l in 0..nm {
                    let q: f64 = (0..ax.n_nodes()).map(|j| ax.weights[j] * ax.vals[[j, k]] * ax.vals[[j, l]]).sum();
                    // independent fine-grid reference by composite Simpson
                    let nref = 20000;
                    let (a, b) = (ax.lo, ax.hi);
                    let h = (b - a) / nref as f64;
                    let f = |x: f64| {
                        let (m, _) = ax.eval_matrices(&[x]);
                        m[[0, k]] * m[[0, l]]
                    };
                    let mut r = f(a) + f(b);
                    for i in 1..nref {
                        r += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                    }
                    r *= h / 3.0;
                    assert!((q - r).abs() < 1e-10, "{kind:?} ({k},{l}) {q} vs {r}");
                }
            }
        }
    }

    #[test]
    fn zero_and_single_mode_synthesis() {
        let grid = small(BasisKind::Fourier);
        let zero = grid.synthesize(&grid.zero_field()).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));

        // p1 = cos(xbar) (l = 1), constant in y and z
        let mut f = grid.zero_field();
        let lx = 4; // index of l = 1 for 7 modes
        let my = 2; // l = 0 for 5 modes
        f.coeffs[[0, lx, my, 0]] = 1.0;
        let v = grid.synthesize(&f).unwrap();
        for i in 0..grid.x.n_nodes() {
            let xbar = (grid.x.nodes[i] + 1.0) * PI;
            assert!((v.values[[0, i, 3, 2]] - xbar.cos()).abs() < 1e-13);
            assert!((v.dx[[0, i, 3, 2]] + PI * xbar.sin()).abs() < 1e-12);
            assert!(v.dy[[0, i, 3, 2]].abs() < 1e-12);
        }
    }

    #[test]
    fn analyze_inverts_synthesize() {
        for kind in [BasisKind::Chebyshev, BasisKind::Fourier] {
            let grid = small(kind);
            let f = random_field(&grid, 1);
            let v = grid.synthesize_values(&f).unwrap();
            let back = grid.analyze(&v).unwrap();
            assert!(back.max_abs_diff(&f) < 1e-12);
            let again = grid.synthesize_values(&back).unwrap();
            let err = (&again - &v).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(err < 1e-12);
            assert_eq!(grid.analyze(&Array4::zeros(v.dim())).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn projection_residual_is_orthogonal() {
        let grid = small(BasisKind::Chebyshev);
        let (nx, ny, nz) = grid.node_shape();
        let mut v = Array4::zeros((5, nx, ny, nz));
        for ((c, i, j, k), val) in v.indexed_iter_mut() {
            let (x, y, z) = (grid.x.nodes[i], grid.y.nodes[j], grid.z.nodes[k]);
            *val = (3.0 * x + c as f64).exp() * (2.0 * y).sin() / (1.0 + z * z);
        }
        let proj = grid.synthesize_values(&grid.analyze(&v).unwrap()).unwrap();
        let resid = &v - &proj;
        // residual is orthogonal to every basis function in the quadrature inner product
        let mut weighted = resid.clone();
        for ((_, i, j, k), r) in weighted.indexed_iter_mut() {
            *r *= grid.weight(i, j, k);
        }
        for comp in 0..5 {
            let ip = eval_tensor_adjoint(weighted.index_axis(Axis(0), comp), &grid.x.vals, &grid.y.vals, &grid.z.vals);
            let scale = resid.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(ip.iter().all(|x| x.abs() < 1e-10 * (1.0 + scale)));
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        for kind in [BasisKind::Chebyshev, BasisKind::Fourier] {
            let grid = small(kind);
            let f = random_field(&grid, 2);
            let vals = grid.synthesize(&f).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut g = CollocationValues::zeros(grid.node_shape());
            for arr in [&mut g.values, &mut g.dx, &mut g.dy, &mut g.dz] {
                arr.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            }
            let lhs: f64 = [(&vals.values, &g.values), (&vals.dx, &g.dx), (&vals.dy, &g.dy), (&vals.dz, &g.dz)]
                .iter()
                .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
                .sum();
            let adj = grid.synthesize_adjoint(&g).unwrap();
            let rhs: f64 = adj.flat().iter().zip(f.flat()).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));

            for face in Face::ALL {
                let fv = grid.face_values(&f, face).unwrap();
                let mut gf = Array3::zeros(fv.dim());
                gf.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                let lhs: f64 = fv.iter().zip(gf.iter()).map(|(a, b)| a * b).sum();
                let adj = grid.face_values_adjoint(face, &gf).unwrap();
                let rhs: f64 = adj.flat().iter().zip(f.flat()).map(|(x, y)| x * y).sum();
                assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn measures_of_box_and_faces() {
        let grid = SpectralGrid::new(GridSpec::new(BasisKind::Chebyshev, 3, 3, 3), 0.7).unwrap();
        let ones = Array3::from_elem(grid.node_shape(), 1.0);
        assert!((grid.integrate_volume(&ones).unwrap() - 4.0 * 0.7).abs() < 1e-13);
        let top = Array2::from_elem(grid.face_shape(Face::ZHigh), 1.0);
        assert!((grid.integrate_face(Face::ZHigh, &top).unwrap() - 4.0).abs() < 1e-13);
        let wall = Array2::from_elem(grid.face_shape(Face::XLow), 1.0);
        assert!((grid.integrate_face(Face::XLow, &wall).unwrap() - 2.0 * 0.7).abs() < 1e-13);
        assert!(Face::from_name("sideways").is_err());
        assert!(grid.integrate_face(Face::ZHigh, &wall).is_err());

        let fg = SpectralGrid::new(GridSpec::new(BasisKind::Fourier, 4, 4, 3), 0.7).unwrap();
        let dens = Array3::from_shape_fn(fg.node_shape(), |(i, _, _)| ((fg.x.nodes[i] + 1.0) * PI).cos().powi(2));
        assert!((fg.integrate_volume(&dens).unwrap() - 0.5 * 4.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn product_rule_and_integration_by_parts() {
        let grid = SpectralGrid::new(GridSpec::new(BasisKind::Chebyshev, 5, 5, 5), 1.0).unwrap();
        // band-limited f, g with deg(fg) inside the band
        let mut f = grid.zero_field();
        let mut g = grid.zero_field();
        f.coeffs[[0, 2, 1, 1]] = 1.0;
        f.coeffs[[0, 1, 0, 2]] = 0.5;
        g.coeffs[[0, 3, 2, 0]] = 1.0;
        g.coeffs[[0, 0, 1, 1]] = -0.3;
        let fv = grid.synthesize(&f).unwrap();
        let gv = grid.synthesize(&g).unwrap();
        let fg_vals = &fv.values * &gv.values;
        let fg = grid.analyze(&fg_vals).unwrap();
        let fgv = grid.synthesize(&fg).unwrap();
        let lhs = fgv.dx.index_axis(Axis(0), 0).to_owned();
        let rhs = &fv.dx.index_axis(Axis(0), 0) * &gv.values.index_axis(Axis(0), 0)
            + &fv.values.index_axis(Axis(0), 0) * &gv.dx.index_axis(Axis(0), 0);
        assert!((&lhs - &rhs).iter().all(|e| e.abs() < 1e-8));

        // int f dg/dx + g df/dx = boundary term on x faces
        let vol = grid.integrate_volume(&(&fv.values.index_axis(Axis(0), 0) * &gv.dx.index_axis(Axis(0), 0)
            + &gv.values.index_axis(Axis(0), 0) * &fv.dx.index_axis(Axis(0), 0)))
            .unwrap();
        let mut boundary = 0.0;
        for face in [Face::XLow, Face::XHigh] {
            let a = grid.face_values(&f, face).unwrap();
            let b = grid.face_values(&g, face).unwrap();
            let prod = (&a.index_axis(Axis(0), 0) * &b.index_axis(Axis(0), 0)) * face.normal_sign();
            boundary += grid.integrate_face(face, &prod).unwrap();
        }
        assert!((vol - boundary).abs() < 1e-8);
    }

    #[test]
    fn refinement_leaves_smooth_integrals_unchanged() {
        let dens = |g: &SpectralGrid| {
            Array3::from_shape_fn(g.node_shape(), |(i, j, k)| {
                let (x, y, z) = (g.x.nodes[i], g.y.nodes[j], g.z.nodes[k]);
                (x * y).cos() * (0.5 * z).exp()
            })
        };
        let g1 = SpectralGrid::new(GridSpec::new(BasisKind::Chebyshev, 6, 6, 6), 1.0).unwrap();
        let g2 = SpectralGrid::new(GridSpec::new(BasisKind::Chebyshev, 12, 12, 12), 1.0).unwrap();
        let a = g1.integrate_volume(&dens(&g1)).unwrap();
        let b = g2.integrate_volume(&dens(&g2)).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g1 = small(BasisKind::Chebyshev);
        let g2 = SpectralGrid::new(GridSpec::new(BasisKind::Chebyshev, 3, 3, 3), 1.0).unwrap();
        assert!(matches!(g1.synthesize(&g2.zero_field()), Err(Error::Shape(_))));
        assert!(g1.field_from_flat(&[0.0; 3]).is_err());
    }
}
