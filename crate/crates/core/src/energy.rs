//! Rescaled Landau-de Gennes energy of a spectral field and its exact gradient.
//!
//! On the well `(-1, 1)^2 x (0, eps)` the energy is
//!
//! ```text
//! F = int 1/2 |grad Q|^2 + lambda_bar^2/(2C) f_b(Q) dV
//!   + sum over lateral walls  omega_i f_lat(Q) dS
//!   + w_z int_{z=0, eps} alpha_z (Q33 + s+/3)^2 + gamma_z (Q13^2 + Q23^2) dS
//! ```
//!
//! with `omega_i = W_i lambda / L` and `w_z = W_z lambda / L`. Walls `y = +-1`
//! prefer `x` as the easy axis, walls `x = +-1` prefer `y`.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{CollocationValues, Face, GridSpec, SpectralField, SpectralGrid};
use crate::tensor::{MaterialParams, QTensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, from = "LateralRepr")]
pub enum LateralVariant {
    /// `|Q - g(t)(e e - I/3)|^2`.
    FullTarget,
    /// `alpha (Q e.e - 2 s+/3)^2 + gamma |(I - e e) Q e|^2`.
    Relaxed { alpha: f64, gamma: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LateralRepr {
    FullTarget {},
    Relaxed { alpha: f64, gamma: f64 },
}

impl From<LateralRepr> for LateralVariant {
    fn from(r: LateralRepr) -> Self {
        match r {
            LateralRepr::FullTarget {} => LateralVariant::FullTarget,
            LateralRepr::Relaxed { alpha, gamma } => LateralVariant::Relaxed { alpha, gamma },
        }
    }
}

/// Surface anchoring strengths in J/m^2 and dimensionless weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchoringConfig {
    /// Walls `y = +-1`.
    pub w1: f64,
    /// Walls `x = +-1`.
    pub w2: f64,
    /// Top and bottom plates.
    pub wz: f64,
    pub alpha_z: f64,
    pub gamma_z: f64,
    pub lateral: LateralVariant,
}

impl Default for AnchoringConfig {
    fn default() -> Self {
        AnchoringConfig::uniform(1e-2, 1e-2)
    }
}

impl AnchoringConfig {
    pub fn uniform(w_lateral: f64, wz: f64) -> Self {
        AnchoringConfig {
            w1: w_lateral,
            w2: w_lateral,
            wz,
            alpha_z: 1.0,
            gamma_z: 1.0,
            lateral: LateralVariant::FullTarget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("W1", self.w1), ("W2", self.w2), ("Wz", self.wz)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("anchoring strength {name} must be >= 0, got {v}")));
            }
        }
        if self.wz > 0.0 && !(self.alpha_z > 0.0 && self.gamma_z > 0.0) {
            return Err(Error::Domain("alpha_z and gamma_z must be positive when Wz > 0".into()));
        }
        if let LateralVariant::Relaxed { alpha, gamma } = self.lateral {
            if !(alpha >= 0.0 && gamma >= 0.0) {
                return Err(Error::Domain("relaxed lateral weights must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Smooth corner cut-off for the lateral target order parameter: `s+` on
/// `[-1 + delta, 1 - delta]`, zero at `+-1`, a quintic smoothstep in between.
pub fn g_profile(x: f64, s_plus: f64, delta: f64) -> f64 {
    let d = 1.0 - x.abs();
    if d >= delta {
        return s_plus;
    }
    if d <= 0.0 {
        return 0.0;
    }
    let t = d / delta;
    s_plus * t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// Geometry, material and anchoring of one well, together with its grid.
#[derive(Clone, Debug)]
pub struct WellProblem {
    pub lambda_bar_sq: f64,
    pub eps: f64,
    pub delta: f64,
    pub material: MaterialParams,
    pub anchoring: AnchoringConfig,
    pub grid: SpectralGrid,
}

impl WellProblem {
    pub fn new(
        lambda_bar_sq: f64,
        eps: f64,
        material: MaterialParams,
        anchoring: AnchoringConfig,
        spec: GridSpec,
    ) -> Result<Self> {
        if !(lambda_bar_sq > 0.0) {
            return Err(Error::Domain(format!("lambda_bar_sq must be positive, got {lambda_bar_sq}")));
        }
        material.validate()?;
        anchoring.validate()?;
        let grid = SpectralGrid::new(spec, eps)?;
        Ok(WellProblem { lambda_bar_sq, eps, delta: 0.1, material, anchoring, grid })
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("corner width delta must lie in (0, 1), got {delta}")));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Dimensional half-width `lambda` in metres.
    pub fn lambda(&self) -> f64 {
        (self.lambda_bar_sq * self.material.l_elastic / (2.0 * self.material.c)).sqrt()
    }

    pub fn omega1(&self) -> f64 {
        self.anchoring.w1 * self.lambda() / self.material.l_elastic
    }

    pub fn omega2(&self) -> f64 {
        self.anchoring.w2 * self.lambda() / self.material.l_elastic
    }

    pub fn w_z(&self) -> f64 {
        self.anchoring.wz * self.lambda() / self.material.l_elastic
    }

    /// `lambda^2 / L = lambda_bar^2 / (2C)`.
    pub fn bulk_prefactor(&self) -> f64 {
        self.lambda_bar_sq / (2.0 * self.material.c)
    }

    pub fn s_plus(&self) -> f64 {
        self.material.s_plus()
    }

    pub fn dof(&self) -> usize {
        self.grid.dof()
    }

    /// Easy axis index (0 = x, 1 = y), anchoring weight and tangential node
    /// coordinates for a lateral wall.
    fn wall(&self, face: Face) -> Option<(usize, f64)> {
        match face {
            Face::YLow | Face::YHigh => Some((0, self.omega1())),
            Face::XLow | Face::XHigh => Some((1, self.omega2())),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub bulk: f64,
    pub surface_lateral: f64,
    pub surface_topbottom: f64,
    pub total: f64,
}

/// Gradient split by energy term, each of length `D`.
#[derive(Clone, Debug)]
pub struct GradientParts {
    pub elastic: Vec<f64>,
    pub bulk: Vec<f64>,
    pub lateral: Vec<f64>,
    pub topbottom: Vec<f64>,
}

impl GradientParts {
    pub fn total(&self) -> Vec<f64> {
        (0..self.elastic.len())
            .map(|i| self.elastic[i] + self.bulk[i] + self.lateral[i] + self.topbottom[i])
            .collect()
    }
}

/// `|D|^2` for a traceless `D` given by its five stored entries, and its
/// derivative with respect to them.
#[inline]
pub fn frob_sq(d: &[f64; 5]) -> (f64, [f64; 5]) {
    let s = d[0] + d[3];
    let v = d[0] * d[0] + d[3] * d[3] + s * s + 2.0 * (d[1] * d[1] + d[2] * d[2] + d[4] * d[4]);
    let g = [
        2.0 * (d[0] + s),
        4.0 * d[1],
        4.0 * d[2],
        2.0 * (d[3] + s),
        4.0 * d[4],
    ];
    (v, g)
}

/// Bulk potential and its derivative with respect to the stored entries.
#[inline]
pub fn bulk_with_grad(p: &[f64; 5], m: &MaterialParams) -> (f64, [f64; 5]) {
    let [p1, p2, p3, p4, p5] = *p;
    let q33 = -p1 - p4;
    let t2 = p1 * p1 + p4 * p4 + q33 * q33 + 2.0 * (p2 * p2 + p3 * p3 + p5 * p5);
    let det = p1 * (p4 * q33 - p5 * p5) - p2 * (p2 * q33 - p5 * p3) + p3 * (p2 * p5 - p4 * p3);
    let f = 0.5 * m.a * t2 - m.b * det + 0.25 * m.c * t2 * t2;
    let s11 = p1 * p1 + p2 * p2 + p3 * p3;
    let s22 = p2 * p2 + p4 * p4 + p5 * p5;
    let s33 = p3 * p3 + p5 * p5 + q33 * q33;
    let s12 = p1 * p2 + p2 * p4 + p3 * p5;
    let s13 = p1 * p3 + p2 * p5 + p3 * q33;
    let s23 = p2 * p3 + p4 * p5 + p5 * q33;
    let k = m.a + m.c * t2;
    let m11 = k * p1 - m.b * s11;
    let m22 = k * p4 - m.b * s22;
    let m33 = k * q33 - m.b * s33;
    let g = [
        m11 - m33,
        2.0 * (k * p2 - m.b * s12),
        2.0 * (k * p3 - m.b * s13),
        m22 - m33,
        2.0 * (k * p5 - m.b * s23),
    ];
    (f, g)
}

/// Lateral density on a wall with easy axis `axis` (0 = x, 1 = y) at target
/// order `g`, and its derivative.
#[inline]
fn lateral_density(p: &[f64; 5], axis: usize, g: f64, s_plus: f64, variant: LateralVariant) -> (f64, [f64; 5]) {
    match variant {
        LateralVariant::FullTarget => {
            let mut d = *p;
            let third = g / 3.0;
            if axis == 0 {
                d[0] -= g - third;
                d[3] += third;
            } else {
                d[0] += third;
                d[3] -= g - third;
            }
            frob_sq(&d)
        }
        LateralVariant::Relaxed { alpha, gamma } => {
            // (Q e.e - 2 s+/3)^2 and the squared off-diagonal entries of row e
            let (ee, o1, o2) = if axis == 0 { (0, 1, 2) } else { (3, 1, 4) };
            let r = p[ee] - 2.0 * s_plus / 3.0;
            let v = alpha * r * r + gamma * (p[o1] * p[o1] + p[o2] * p[o2]);
            let mut grad = [0.0; 5];
            grad[ee] = 2.0 * alpha * r;
            grad[o1] = 2.0 * gamma * p[o1];
            grad[o2] = 2.0 * gamma * p[o2];
            (v, grad)
        }
    }
}

/// Top/bottom density `alpha_z (Q33 + s+/3)^2 + gamma_z (Q13^2 + Q23^2)` and
/// its derivative.
#[inline]
fn plate_density(p: &[f64; 5], alpha_z: f64, gamma_z: f64, s_plus: f64) -> (f64, [f64; 5]) {
    let r = -p[0] - p[3] + s_plus / 3.0;
    let v = alpha_z * r * r + gamma_z * (p[2] * p[2] + p[4] * p[4]);
    let dr = -2.0 * alpha_z * r;
    (v, [dr, 0.0, 2.0 * gamma_z * p[2], dr, 2.0 * gamma_z * p[4]])
}

/// Traceless surface operator `G(Q)` of the natural top/bottom condition
/// `d_nu Q + w_z G(Q) = 0`.
pub fn surface_operator(q: &QTensor, alpha_z: f64, gamma_z: f64, s_plus: f64) -> QTensor {
    let r = q.q33() + s_plus / 3.0;
    let d = -2.0 / 3.0 * alpha_z * r;
    QTensor::new([d, 0.0, gamma_z * q.p[2], d, gamma_z * q.p[4]])
}

/// Compensated (Neumaier) summation; quadrature sums mix terms of both signs
/// and the line search needs energy differences near rounding level.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// Adds another accumulator without rounding it first.
    fn merge(&mut self, other: &Accumulator) {
        self.add(other.sum);
        self.add(other.comp);
    }
}

fn check_grid(f: &SpectralField, prob: &WellProblem) -> Result<()> {
    let (a, b, c) = prob.grid.mode_shape();
    if f.coeffs.dim() != (5, a, b, c) {
        return Err(Error::Shape(format!(
            "field shape {:?} does not match the problem grid {:?}",
            f.coeffs.dim(),
            (5, a, b, c)
        )));
    }
    Ok(())
}

#[inline]
fn node_p(arr: &ndarray::Array4<f64>, i: usize, j: usize, k: usize) -> [f64; 5] {
    std::array::from_fn(|c| arr[[c, i, j, k]])
}

fn evaluate(f: &SpectralField, prob: &WellProblem, want_grad: bool) -> Result<(EnergyBreakdown, Option<GradientParts>)> {
    check_grid(f, prob)?;
    let grid = &prob.grid;
    let vals = grid.synthesize(f)?;
    let (nx, ny, nz) = grid.node_shape();
    let m = &prob.material;
    let s_plus = prob.s_plus();
    let pref = prob.bulk_prefactor();

    let mut elastic = Accumulator::default();
    let mut bulk = Accumulator::default();
    let mut g_el = want_grad.then(|| CollocationValues::zeros((nx, ny, nz)));
    let mut g_bulk = want_grad.then(|| CollocationValues::zeros((nx, ny, nz)));
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let w = grid.weight(i, j, k);
                let q = node_p(&vals.values, i, j, k);
                let (fb, gb) = bulk_with_grad(&q, m);
                bulk.add(pref * w * fb);
                let mut el = 0.0;
                for (dir, arr) in [&vals.dx, &vals.dy, &vals.dz].into_iter().enumerate() {
                    let d = node_p(arr, i, j, k);
                    let (v, gd) = frob_sq(&d);
                    el += 0.5 * v;
                    if let Some(ge) = g_el.as_mut() {
                        let target = match dir {
                            0 => &mut ge.dx,
                            1 => &mut ge.dy,
                            _ => &mut ge.dz,
                        };
                        for c in 0..5 {
                            target[[c, i, j, k]] = 0.5 * w * gd[c];
                        }
                    }
                }
                elastic.add(w * el);
                if let Some(gbv) = g_bulk.as_mut() {
                    for c in 0..5 {
                        gbv.values[[c, i, j, k]] = w * gb[c];
                    }
                }
            }
        }
    }

    let mut lateral = Accumulator::default();
    let mut topbottom = Accumulator::default();
    let mut grad_lat = want_grad.then(|| grid.zero_field());
    let mut grad_tb = want_grad.then(|| grid.zero_field());
    for face in Face::ALL {
        let fv = grid.face_values(f, face)?;
        let (na, nb) = grid.face_shape(face);
        let mut gface = Array3::<f64>::zeros((5, na, nb));
        let mut total = Accumulator::default();
        let lat = prob.wall(face);
        let weight = match lat {
            Some((_, omega)) => omega,
            None => prob.w_z(),
        };
        if weight == 0.0 {
            continue;
        }
        let tangential = if face.axis() == 0 { &grid.y.nodes } else { &grid.x.nodes };
        for a in 0..na {
            for b in 0..nb {
                let p: [f64; 5] = std::array::from_fn(|c| fv[[c, a, b]]);
                let (v, g) = match lat {
                    Some((axis, _)) => {
                        let gt = g_profile(tangential[a], s_plus, prob.delta);
                        lateral_density(&p, axis, gt, s_plus, prob.anchoring.lateral)
                    }
                    None => plate_density(&p, prob.anchoring.alpha_z, prob.anchoring.gamma_z, s_plus),
                };
                let w = grid.face_weight(face, a, b);
                total.add(weight * w * v);
                if want_grad {
                    for c in 0..5 {
                        gface[[c, a, b]] = weight * w * g[c];
                    }
                }
            }
        }
        if lat.is_some() {
            lateral.merge(&total);
        } else {
            topbottom.merge(&total);
        }
        if want_grad {
            let adj = grid.face_values_adjoint(face, &gface)?;
            let target = if lat.is_some() { grad_lat.as_mut() } else { grad_tb.as_mut() }.unwrap();
            target.coeffs += &adj.coeffs;
        }
    }

    let mut total = Accumulator::default();
    for part in [&elastic, &bulk, &lateral, &topbottom] {
        total.merge(part);
    }
    let breakdown = EnergyBreakdown {
        elastic: elastic.value(),
        bulk: bulk.value(),
        surface_lateral: lateral.value(),
        surface_topbottom: topbottom.value(),
        total: total.value(),
    };
    let parts = if want_grad {
        let el = grid.synthesize_adjoint(&g_el.unwrap())?.to_vec();
        let mut bk = grid.synthesize_adjoint(&g_bulk.unwrap())?.to_vec();
        bk.iter_mut().for_each(|v| *v *= pref);
        Some(GradientParts {
            elastic: el,
            bulk: bk,
            lateral: grad_lat.unwrap().to_vec(),
            topbottom: grad_tb.unwrap().to_vec(),
        })
    } else {
        None
    };
    Ok((breakdown, parts))
}

pub fn total_energy(f: &SpectralField, prob: &WellProblem) -> Result<EnergyBreakdown> {
    Ok(evaluate(f, prob, false)?.0)
}

pub fn energy_gradient(f: &SpectralField, prob: &WellProblem) -> Result<Vec<f64>> {
    Ok(energy_gradient_parts(f, prob)?.total())
}

pub fn energy_gradient_parts(f: &SpectralField, prob: &WellProblem) -> Result<GradientParts> {
    Ok(evaluate(f, prob, true)?.1.unwrap())
}

/// Energy and gradient in one pass over a flattened coefficient vector.
pub fn energy_and_gradient(p: &[f64], prob: &WellProblem) -> Result<(f64, Vec<f64>)> {
    let f = prob.grid.field_from_flat(p)?;
    let (e, parts) = evaluate(&f, prob, true)?;
    Ok((e.total, parts.unwrap().total()))
}

pub fn energy_flat(p: &[f64], prob: &WellProblem) -> Result<f64> {
    let f = prob.grid.field_from_flat(p)?;
    Ok(evaluate(&f, prob, false)?.0.total)
}

/// Euler-Lagrange residual norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    /// RMS over interior nodes of `|Lap Q - lambda_bar^2/(2C) (A Q - B(Q^2 - |Q|^2 I/3) + C|Q|^2 Q)|`.
    pub interior: f64,
    /// RMS over top/bottom nodes of `|d_nu Q + w_z G(Q)|`.
    pub boundary: f64,
}

pub fn el_residual(f: &SpectralField, prob: &WellProblem) -> Result<Residual> {
    check_grid(f, prob)?;
    let grid = &prob.grid;
    let vals = grid.synthesize_values(f)?;
    let lap = grid.laplacian(f)?;
    let (nx, ny, nz) = grid.node_shape();
    let pref = prob.bulk_prefactor();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            for k in 1..nz - 1 {
                let q = QTensor::new(node_p(&vals, i, j, k));
                let g = crate::tensor::bulk_gradient(&q, &prob.material);
                let l = QTensor::new(node_p(&lap, i, j, k));
                let r = l.sub(&g.scale(pref));
                let w = grid.weight(i, j, k);
                num += w * r.norm_sq();
                den += w;
            }
        }
    }
    let interior = (num / den).sqrt();

    let (mut bnum, mut bden) = (0.0, 0.0);
    for (face, map) in [Face::ZLow, Face::ZHigh].into_iter().zip(plate_residual(f, prob)?) {
        for ((a, b), r) in map.indexed_iter() {
            let w = grid.face_weight(face, a, b);
            bnum += w * r * r;
            bden += w;
        }
    }
    Ok(Residual { interior, boundary: (bnum / bden).sqrt() })
}

/// Pointwise `|d_nu Q + w_z G(Q)|` at the bottom and top face nodes.
pub fn plate_residual(f: &SpectralField, prob: &WellProblem) -> Result<[Array2<f64>; 2]> {
    check_grid(f, prob)?;
    let grid = &prob.grid;
    let wz = prob.w_z();
    let s_plus = prob.s_plus();
    let mut out = [Array2::zeros(grid.face_shape(Face::ZLow)), Array2::zeros(grid.face_shape(Face::ZHigh))];
    for (face, map) in [Face::ZLow, Face::ZHigh].into_iter().zip(out.iter_mut()) {
        let v = grid.face_values(f, face)?;
        let dn = grid.face_normal_derivative(f, face)?;
        for ((a, b), r) in map.indexed_iter_mut() {
            let q = QTensor::new(std::array::from_fn(|c| v[[c, a, b]]));
            let d = QTensor::new(std::array::from_fn(|c| dn[[c, a, b]]));
            let g = surface_operator(&q, prob.anchoring.alpha_z, prob.anchoring.gamma_z, s_plus);
            *r = d.add(&g.scale(wz)).norm();
        }
    }
    Ok(out)
}

/// A priori bound on `|Q|` for solutions of the well problem with top/bottom
/// anchoring, depending only on `A`, `B`, `C`.
pub fn max_norm_bound(m: &MaterialParams) -> f64 {
    let s = m.s_plus();
    let (a, b, c) = (m.a, m.b, m.c);
    // lower bound of the quartic on |Q| = r
    let lower = |r: f64| {
        let q33 = (2.0f64 / 3.0).sqrt() * r;
        c * r.powi(4) - a.abs() * r * r - b * r.powi(3) / 6f64.sqrt()
            + 0.5 * s * (-(a + c * r * r).abs() * q33 - 2.0 / 3.0 * b * r * r + b / 3.0 * r * r)
    };
    let mut hi = s.max(1.0);
    while lower(hi) <= 0.0 {
        hi *= 2.0;
    }
    // largest root: scan downwards from hi
    let n = 4000;
    let mut m1 = 0.0;
    for i in (0..n).rev() {
        let r = hi * i as f64 / n as f64;
        if lower(r) <= 0.0 {
            m1 = hi * (i + 1) as f64 / n as f64;
            break;
        }
    }
    let m2 = m1 + 0.5 * s;
    m2.max(((2.0f64 / 3.0).sqrt() + 0.5) * s) + 0.5 * s
}

/// Largest `|Q|` over the quadrature nodes.
pub fn max_node_norm(f: &SpectralField, grid: &SpectralGrid) -> Result<f64> {
    let v = grid.synthesize_values(f)?;
    let (nx, ny, nz) = grid.node_shape();
    let mut best = 0.0f64;
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                best = best.max(QTensor::new(node_p(&v, i, j, k)).norm());
            }
        }
    }
    Ok(best)
}

/// Mean of `|d_z Q|^2` over the well.
pub fn mean_dz_sq(f: &SpectralField, grid: &SpectralGrid) -> Result<f64> {
    let v = grid.synthesize(f)?;
    let (nx, ny, nz) = grid.node_shape();
    let mut dens = Array3::zeros((nx, ny, nz));
    for ((i, j, k), d) in dens.indexed_iter_mut() {
        *d = QTensor::new(node_p(&v.dz, i, j, k)).norm_sq();
    }
    Ok(grid.integrate_volume(&dens)? / (4.0 * grid.eps))
}

/// Lateral target tensor on a wall face node, for export and tests.
pub fn lateral_target(prob: &WellProblem, face: Face, t: f64) -> Option<QTensor> {
    let (axis, _) = prob.wall(face)?;
    let g = g_profile(t, prob.s_plus(), prob.delta);
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    Some(QTensor::uniaxial(g, e))
}

/// Per-node densities of a face term, used by tests and diagnostics.
pub fn face_density(f: &SpectralField, prob: &WellProblem, face: Face) -> Result<Array2<f64>> {
    let grid = &prob.grid;
    let fv = grid.face_values(f, face)?;
    let (na, nb) = grid.face_shape(face);
    let s_plus = prob.s_plus();
    let tangential = if face.axis() == 0 { &grid.y.nodes } else { &grid.x.nodes };
    let mut out = Array2::zeros((na, nb));
    for a in 0..na {
        for b in 0..nb {
            let p: [f64; 5] = std::array::from_fn(|c| fv[[c, a, b]]);
            out[[a, b]] = match prob.wall(face) {
                Some((axis, omega)) => {
                    omega * lateral_density(&p, axis, g_profile(tangential[a], s_plus, prob.delta), s_plus, prob.anchoring.lateral).0
                }
                None => prob.w_z() * plate_density(&p, prob.anchoring.alpha_z, prob.anchoring.gamma_z, s_plus).0,
            };
        }
    }
    Ok(out)
}

/// Field obtained by rotating the cross-section by 90 degrees,
/// `Q'(x) = R Q(R^T x) R^T`, performed at the nodes and projected back.
pub fn rotate_quarter_turn(f: &SpectralField, grid: &SpectralGrid) -> Result<SpectralField> {
    let v = grid.synthesize_values(f)?;
    let (nx, ny, nz) = grid.node_shape();
    if nx != ny {
        return Err(Error::Shape("quarter-turn rotation needs a square cross-section grid".into()));
    }
    let r = nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let mut out = ndarray::Array4::zeros(v.dim());
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                // R^T (x_i, y_j) = (y_j, -x_i); nodes are symmetric so -x_i is node nx-1-i
                let src = QTensor::new(node_p(&v, j, nx - 1 - i, k));
                let q = src.rotate(&r);
                for c in 0..5 {
                    out[[c, i, j, k]] = q.p[c];
                }
            }
        }
    }
    grid.analyze(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BasisKind;
    use crate::tensor::{bulk_potential, N1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem(anch: AnchoringConfig) -> WellProblem {
        WellProblem::new(5.0, 1.3, MaterialParams::default(), anch, GridSpec::new(BasisKind::Chebyshev, 3, 3, 3)).unwrap()
    }

    fn constant_field(prob: &WellProblem, q: QTensor) -> SpectralField {
        let (nx, ny, nz) = prob.grid.node_shape();
        let v = ndarray::Array4::from_shape_fn((5, nx, ny, nz), |(c, _, _, _)| q.p[c]);
        prob.grid.analyze(&v).unwrap()
    }

    fn random_field(prob: &WellProblem, seed: u64, amp: f64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = prob.grid.zero_field();
        f.flat_mut().iter_mut().for_each(|v| *v = amp * rng.random_range(-1.0..1.0));
        f
    }

    #[test]
    fn g_profile_shape() {
        let s = 1.8;
        assert_eq!(g_profile(0.0, s, 0.1), s);
        assert_eq!(g_profile(1.0, s, 0.1), 0.0);
        assert_eq!(g_profile(-1.0, s, 0.1), 0.0);
        let mid = g_profile(0.95, s, 0.1);
        assert!(mid > 0.0 && mid < s);
        let mut prev = s;
        for i in 0..=100 {
            let x = 0.9 + 0.1 * i as f64 / 100.0;
            let g = g_profile(x, s, 0.1);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }

    #[test]
    fn constant_minimiser_energy() {
        let prob = problem(AnchoringConfig { w1: 0.0, w2: 0.0, ..AnchoringConfig::default() });
        let s = prob.s_plus();
        let f = constant_field(&prob, QTensor::uniaxial(s, N1));
        let e = total_energy(&f, &prob).unwrap();
        let m = &prob.material;
        let fb = -2.0 * m.b.powi(4) / (27.0 * m.c.powi(3));
        let expected = prob.bulk_prefactor() * fb * 4.0 * prob.eps;
        assert!(e.elastic.abs() < 1e-20);
        assert!((e.bulk - expected).abs() < 1e-10 * expected.abs());
        assert!(e.surface_topbottom.abs() < 1e-20);
        assert!((e.total - (e.elastic + e.bulk + e.surface_lateral + e.surface_topbottom)).abs() <= 1e-12 * e.total.abs());

        let prob = problem(AnchoringConfig::default());
        let f = constant_field(&prob, QTensor::uniaxial(s, N1));
        let dens = face_density(&f, &prob, Face::YHigh).unwrap();
        let (na, nb) = prob.grid.face_shape(Face::YHigh);
        let mid = prob.grid.x.nodes.iter().position(|x| x.abs() < 0.5).unwrap();
        for b in 0..nb {
            assert!((dens[[mid, b]] - prob.omega1() * s * s).abs() < 1e-10 * prob.omega1() * s * s);
        }
        assert_eq!(dens.dim().0, na);
    }

    #[test]
    fn zero_field_energy() {
        let prob = WellProblem::new(5.0, 1.3, MaterialParams::default(), AnchoringConfig::default(), GridSpec::new(BasisKind::Chebyshev, 16, 16, 2)).unwrap();
        let s = prob.s_plus();
        let e = total_energy(&prob.grid.zero_field(), &prob).unwrap();
        assert_eq!(e.bulk, 0.0);
        assert_eq!(e.elastic, 0.0);
        let expect_tb = prob.w_z() * (s / 3.0).powi(2) * 2.0 * 4.0;
        assert!((e.surface_topbottom - expect_tb).abs() < 1e-10 * expect_tb);
        // lateral: each wall contributes omega * eps * int g^2 (2/3); reference by fine Simpson
        let n = 200000;
        let h = 2.0 / n as f64;
        let mut gint = 0.0;
        for i in 0..=n {
            let x = -1.0 + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            gint += w * g_profile(x, s, prob.delta).powi(2);
        }
        gint *= h / 3.0;
        let expect_lat = (2.0 * prob.omega1() + 2.0 * prob.omega2()) * prob.eps * gint * 2.0 / 3.0;
        // the smoothstep collar is only piecewise polynomial, so the wall quadrature is not exact
        assert!((e.surface_lateral - expect_lat).abs() < 1e-3 * expect_lat, "{} vs {}", e.surface_lateral, expect_lat);
    }

    #[test]
    fn gradient_vanishes_at_bulk_minimiser() {
        let prob = problem(AnchoringConfig::uniform(0.0, 0.0));
        let f = constant_field(&prob, QTensor::uniaxial(prob.s_plus(), N1));
        let g = energy_gradient(&f, &prob).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10), "{:?}", g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let variants = [
            AnchoringConfig::default(),
            AnchoringConfig { lateral: LateralVariant::Relaxed { alpha: 1.0, gamma: 0.3 }, ..AnchoringConfig::default() },
            AnchoringConfig { alpha_z: 0.5, gamma_z: 2.0, wz: 1e-3, ..AnchoringConfig::default() },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (vi, anch) in variants.into_iter().enumerate() {
            let prob = problem(anch);
            let f = random_field(&prob, vi as u64, 0.5);
            let p = f.to_vec();
            let g = energy_gradient(&f, &prob).unwrap();
            for _ in 0..5 {
                let v: Vec<f64> = (0..p.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h = 1e-5;
                let plus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a + h * b).collect();
                let minus: Vec<f64> = p.iter().zip(&v).map(|(a, b)| a - h * b).collect();
                let fd = (energy_flat(&plus, &prob).unwrap() - energy_flat(&minus, &prob).unwrap()) / (2.0 * h);
                let an: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "variant {vi}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn bulk_gradient_scales_with_lambda() {
        let p1 = problem(AnchoringConfig::default());
        let mut p2 = p1.clone();
        p2.lambda_bar_sq *= 2.0;
        let f = random_field(&p1, 4, 0.7);
        let g1 = energy_gradient_parts(&f, &p1).unwrap().bulk;
        let g2 = energy_gradient_parts(&f, &p2).unwrap().bulk;
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn bulk_with_grad_agrees_with_tensor_module() {
        let m = MaterialParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p: [f64; 5] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let q = QTensor::new(p);
            let (f, g) = bulk_with_grad(&p, &m);
            assert!((f - bulk_potential(&q, &m)).abs() < 1e-9 * f.abs().max(1.0));
            let g2 = crate::tensor::bulk_gradient_components(&q, &m);
            for c in 0..5 {
                assert!((g[c] - g2[c]).abs() < 1e-9 * g[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn surface_operator_is_traceless_and_residual_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let q = QTensor::new(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let g = surface_operator(&q, 0.7, 1.3, 1.8);
            let mat = g.to_matrix();
            assert!(mat.trace().abs() < 1e-14);
            assert!((mat - mat.transpose()).norm() < 1e-14);
        }
        let prob = problem(AnchoringConfig::default());
        let f = constant_field(&prob, QTensor::uniaxial(prob.s_plus(), N1));
        let r = el_residual(&f, &prob).unwrap();
        assert!(r.interior < 1e-8 && r.boundary < 1e-10, "{r:?}");
    }

    #[test]
    fn quarter_turn_invariance() {
        let prob = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), GridSpec::new(BasisKind::Chebyshev, 4, 4, 3)).unwrap();
        let f = random_field(&prob, 21, 0.4);
        // project onto the band seen by the node rotation so both fields are comparable
        let rot = rotate_quarter_turn(&f, &prob.grid).unwrap();
        let e1 = total_energy(&f, &prob).unwrap().total;
        let e2 = total_energy(&rot, &prob).unwrap().total;
        assert!((e1 - e2).abs() < 1e-10 * e1.abs(), "{e1} vs {e2}");
    }

    #[test]
    fn max_norm_bound_exceeds_uniaxial_states() {
        let m = MaterialParams::default();
        let bound = max_norm_bound(&m);
        assert!(bound > (2.0f64 / 3.0).sqrt() * m.s_plus());
        assert!(bound.is_finite());
    }
}
