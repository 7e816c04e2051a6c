//! Q-tensor algebra.
//!
//! A [`QTensor`] stores the five independent entries `(Q11, Q12, Q13, Q22, Q23)`
//! of a symmetric traceless 3x3 matrix; `Q33 = -Q11 - Q22` is implied. The
//! [`FrameComponents`] type expresses the same tensor in one of two orthogonal
//! bases: the axis frame `(x, y, z)` used by the 3D solver, or the diagonal
//! frame `(n1, n2, z)` with `n1 = (-1, 1, 0)/sqrt(2)`, `n2 = (1, 1, 0)/sqrt(2)`
//! used by the reduced 2D system.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Landau-de Gennes material constants in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Rescaled temperature `A`, J/m^3.
    pub a: f64,
    /// Bulk constant `B`, J/m^3.
    pub b: f64,
    /// Bulk constant `C`, J/m^3.
    pub c: f64,
    /// One-constant elastic modulus `L`, J/m.
    pub l_elastic: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        let b = 0.64e4;
        let c = 0.35e4;
        MaterialParams { a: -b * b / (3.0 * c), b, c, l_elastic: 1e-11 }
    }
}

impl MaterialParams {
    /// Default constants at temperature `A = factor * B^2 / C`.
    pub fn with_temperature_factor(factor: f64) -> Self {
        let m = MaterialParams::default();
        MaterialParams { a: factor * m.b * m.b / m.c, ..m }
    }

    /// The special temperature `A = -B^2/(3C)` at which `s+ = B/C`.
    pub fn special_temperature(&self) -> f64 {
        -self.b * self.b / (3.0 * self.c)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.b > 0.0 && self.c > 0.0 && self.l_elastic > 0.0) {
            return Err(Error::Domain(format!(
                "material constants must satisfy B > 0, C > 0, L > 0 (got B={}, C={}, L={})",
                self.b, self.c, self.l_elastic
            )));
        }
        if !(self.a < 0.0) {
            return Err(Error::Domain(format!("temperature A must be negative (got {})", self.a)));
        }
        Ok(())
    }

    /// Order parameter of the uniaxial bulk minimizers.
    pub fn s_plus(&self) -> f64 {
        s_plus(self).expect("material constants with C > 0")
    }

    pub fn s_minus(&self) -> f64 {
        s_minus(self).expect("material constants with C > 0")
    }
}

fn discriminant(m: &MaterialParams) -> Result<f64, Error> {
    if m.c == 0.0 || !m.c.is_finite() {
        return Err(Error::Domain("bulk constant C must be nonzero".into()));
    }
    Ok((m.b * m.b + 24.0 * m.a.abs() * m.c).sqrt())
}

/// `s+ = (B + sqrt(B^2 + 24|A|C)) / 4C`.
pub fn s_plus(m: &MaterialParams) -> Result<f64, Error> {
    Ok((m.b + discriminant(m)?) / (4.0 * m.c))
}

/// `s- = (B - sqrt(B^2 + 24|A|C)) / 4C`.
pub fn s_minus(m: &MaterialParams) -> Result<f64, Error> {
    Ok((m.b - discriminant(m)?) / (4.0 * m.c))
}

/// Symmetric traceless tensor stored as `(Q11, Q12, Q13, Q22, Q23)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QTensor {
    pub p: [f64; 5],
}

impl QTensor {
    pub const ZERO: QTensor = QTensor { p: [0.0; 5] };

    pub fn new(p: [f64; 5]) -> Self {
        QTensor { p }
    }

    /// Uniaxial tensor `s (n n - I/3)`; `n` need not be normalised.
    pub fn uniaxial(s: f64, n: [f64; 3]) -> Self {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let n = if norm > 0.0 { [n[0] / norm, n[1] / norm, n[2] / norm] } else { [0.0, 0.0, 1.0] };
        QTensor::new([
            s * (n[0] * n[0] - 1.0 / 3.0),
            s * n[0] * n[1],
            s * n[0] * n[2],
            s * (n[1] * n[1] - 1.0 / 3.0),
            s * n[1] * n[2],
        ])
    }

    pub fn q33(&self) -> f64 {
        -self.p[0] - self.p[3]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let [q11, q12, q13, q22, q23] = self.p;
        Matrix3::new(q11, q12, q13, q12, q22, q23, q13, q23, self.q33())
    }

    /// Projects an arbitrary matrix onto the symmetric traceless subspace.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let s = (m + m.transpose()) * 0.5;
        let t = s.trace() / 3.0;
        QTensor::new([s[(0, 0)] - t, s[(0, 1)], s[(0, 2)], s[(1, 1)] - t, s[(1, 2)]])
    }

    /// `tr Q^2 = |Q|^2`.
    pub fn norm_sq(&self) -> f64 {
        let [q11, q12, q13, q22, q23] = self.p;
        let q33 = self.q33();
        q11 * q11 + q22 * q22 + q33 * q33 + 2.0 * (q12 * q12 + q13 * q13 + q23 * q23)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `tr Q^3 = 3 det Q` for traceless `Q`.
    pub fn trace_cube(&self) -> f64 {
        3.0 * self.to_matrix().determinant()
    }

    pub fn scale(&self, s: f64) -> Self {
        QTensor::new(self.p.map(|v| v * s))
    }

    pub fn add(&self, other: &QTensor) -> Self {
        let mut p = self.p;
        for (a, b) in p.iter_mut().zip(other.p) {
            *a += b;
        }
        QTensor::new(p)
    }

    pub fn sub(&self, other: &QTensor) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Frobenius inner product `Q : P`.
    pub fn dot(&self, other: &QTensor) -> f64 {
        let a = self.p;
        let b = other.p;
        a[0] * b[0] + a[3] * b[3] + self.q33() * other.q33()
            + 2.0 * (a[1] * b[1] + a[2] * b[2] + a[4] * b[4])
    }

    /// `R Q R^T` for a rotation (or any orthogonal) matrix `r`.
    pub fn rotate(&self, r: &Matrix3<f64>) -> Self {
        QTensor::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    /// Derivatives of a scalar `f(Q)` with respect to the five stored entries,
    /// given the symmetric matrix derivative `df/dQ`.
    pub fn chain_rule(dfdq: &Matrix3<f64>) -> [f64; 5] {
        let g = dfdq;
        [
            g[(0, 0)] - g[(2, 2)],
            g[(0, 1)] + g[(1, 0)],
            g[(0, 2)] + g[(2, 0)],
            g[(1, 1)] - g[(2, 2)],
            g[(1, 2)] + g[(2, 1)],
        ]
    }
}

/// Thermotropic bulk potential `(A/2) tr Q^2 - (B/3) tr Q^3 + (C/4) (tr Q^2)^2`.
pub fn bulk_potential(q: &QTensor, m: &MaterialParams) -> f64 {
    let t2 = q.norm_sq();
    let t3 = q.trace_cube();
    0.5 * m.a * t2 - m.b / 3.0 * t3 + 0.25 * m.c * t2 * t2
}

/// Traceless gradient `A Q - B (Q^2 - |Q|^2 I/3) + C |Q|^2 Q` of the bulk potential.
pub fn bulk_gradient(q: &QTensor, m: &MaterialParams) -> QTensor {
    let mat = q.to_matrix();
    let t2 = q.norm_sq();
    let g = mat * (m.a + m.c * t2) - (mat * mat - Matrix3::identity() * (t2 / 3.0)) * m.b;
    QTensor::from_matrix(&g)
}

/// Partial derivatives of the bulk potential with respect to `(Q11, Q12, Q13, Q22, Q23)`.
pub fn bulk_gradient_components(q: &QTensor, m: &MaterialParams) -> [f64; 5] {
    QTensor::chain_rule(&bulk_gradient(q, m).to_matrix())
}

/// Biaxiality `1 - 6 (tr Q^3)^2 / |Q|^6`, zero below `tol_iso`.
pub fn biaxiality_with_tol(q: &QTensor, tol_iso: f64) -> Result<f64, Error> {
    let n2 = q.norm_sq();
    if n2.sqrt() < tol_iso {
        return Ok(0.0);
    }
    let t3 = q.trace_cube();
    let beta = 1.0 - 6.0 * t3 * t3 / (n2 * n2 * n2);
    const CLAMP: f64 = 1e-9;
    if beta < -CLAMP || beta > 1.0 + CLAMP {
        return Err(Error::Domain(format!("biaxiality {beta} outside [0, 1]")));
    }
    Ok(beta.clamp(0.0, 1.0))
}

/// Biaxiality with the isotropic threshold `1e-9 s+` of the given material.
pub fn biaxiality(q: &QTensor, m: &MaterialParams) -> f64 {
    biaxiality_with_tol(q, 1e-9 * m.s_plus()).unwrap_or(0.0)
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Clone, Copy, Debug)]
pub struct EigenFrame {
    pub values: [f64; 3],
    pub vectors: [[f64; 3]; 3],
}

impl EigenFrame {
    /// Leading eigenvector.
    pub fn director(&self) -> [f64; 3] {
        self.vectors[0]
    }
}

/// Orients `v` so that its largest-magnitude component is positive.
pub fn sign_normalize(v: [f64; 3]) -> [f64; 3] {
    let mut k = 0;
    for i in 1..3 {
        if v[i].abs() > v[k].abs() + 1e-14 {
            k = i;
        }
    }
    if v[k] < 0.0 {
        v.map(|x| -x)
    } else {
        v
    }
}

pub fn eigen_frame(q: &QTensor) -> EigenFrame {
    let eig = SymmetricEigen::new(q.to_matrix());
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut values = [0.0; 3];
    let mut vectors = [[0.0; 3]; 3];
    for (slot, &i) in idx.iter().enumerate() {
        values[slot] = eig.eigenvalues[i];
        let col: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
        vectors[slot] = sign_normalize([col[0], col[1], col[2]]);
    }
    EigenFrame { values, vectors }
}

/// Basis used to express a Q-tensor through five scalar coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// `(xx - yy, xy + yx, 2zz - xx - yy, xz + zx, yz + zy)`.
    Axis,
    /// `(n1n1 - n2n2, n1n2 + n2n1, 2zz - n1n1 - n2n2, xz + zx, yz + zy)`.
    Diagonal,
}

/// Coefficients `q1..q5` of a Q-tensor in the chosen [`Frame`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameComponents {
    pub frame: Frame,
    pub q: [f64; 5],
}

impl FrameComponents {
    pub fn new(frame: Frame, q: [f64; 5]) -> Self {
        FrameComponents { frame, q }
    }

    pub fn to_qtensor(&self) -> QTensor {
        let [q1, q2, q3, q4, q5] = self.q;
        // n1n1 - n2n2 = -(xy + yx) and n1n2 + n2n1 = -(xx - yy)
        let (a1, a2) = match self.frame {
            Frame::Axis => (q1, q2),
            Frame::Diagonal => (-q2, -q1),
        };
        QTensor::new([a1 - q3, a2, q4, -a1 - q3, q5])
    }

    pub fn from_qtensor(q: &QTensor, frame: Frame) -> Self {
        let [p1, p2, p3, p4, p5] = q.p;
        let a1 = 0.5 * (p1 - p4);
        let a2 = p2;
        let q3 = -0.5 * (p1 + p4);
        let (q1, q2) = match frame {
            Frame::Axis => (a1, a2),
            Frame::Diagonal => (-a2, -a1),
        };
        FrameComponents { frame, q: [q1, q2, q3, p3, p5] }
    }

    pub fn convert(&self, frame: Frame) -> Self {
        FrameComponents::from_qtensor(&self.to_qtensor(), frame)
    }
}

/// Unit vectors of the diagonal frame.
pub const N1: [f64; 3] = [-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0];
pub const N2: [f64; 3] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng, scale: f64) -> QTensor {
        QTensor::new(std::array::from_fn(|_| rng.random_range(-scale..scale)))
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn s_plus_at_special_temperature() {
        let m = MaterialParams::default();
        assert_relative_eq!(m.s_plus(), m.b / m.c, max_relative = 1e-14);
        assert_relative_eq!(m.s_minus(), -m.b / (2.0 * m.c), max_relative = 1e-14);
        let zero_a = MaterialParams { a: 0.0, b: 1.0, c: 1.0, l_elastic: 1.0 };
        assert_eq!(s_plus(&zero_a).unwrap(), 0.5);
        let bad = MaterialParams { c: 0.0, ..m };
        assert!(matches!(s_plus(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn s_plus_is_root_of_stationarity() {
        for f in [-0.1, -1.0 / 6.0, -1.0 / 3.0, -2.0 / 3.0, -3.0] {
            let m = MaterialParams::with_temperature_factor(f);
            let s = m.s_plus();
            let r = m.a - m.b * s / 3.0 + 2.0 * m.c * s * s / 3.0;
            assert!(r.abs() <= 1e-12 * m.a.abs(), "residual {r}");
        }
    }

    #[test]
    fn bulk_potential_at_minimizer() {
        let m = MaterialParams::default();
        let s = m.s_plus();
        let q = QTensor::uniaxial(s, N1);
        let expected = -2.0 * m.b.powi(4) / (27.0 * m.c.powi(3));
        assert_relative_eq!(bulk_potential(&q, &m), expected, max_relative = 1e-12);
        // Independent route through eigenvalues (2s/3, -s/3, -s/3).
        let ev = eigen_frame(&q).values;
        let t2: f64 = ev.iter().map(|l| l * l).sum();
        let t3: f64 = ev.iter().map(|l| l * l * l).sum();
        let f = 0.5 * m.a * t2 - m.b / 3.0 * t3 + 0.25 * m.c * t2 * t2;
        assert_relative_eq!(f, expected, max_relative = 1e-12);
        assert_eq!(bulk_potential(&QTensor::ZERO, &m), 0.0);
    }

    #[test]
    fn uniaxial_scan_has_minimum_at_s_plus() {
        let m = MaterialParams::default();
        let s = m.s_plus();
        let at_min = bulk_potential(&QTensor::uniaxial(s, [0.0, 0.0, 1.0]), &m);
        for i in 0..=4000 {
            let t = -2.0 * s + 4.0 * s * i as f64 / 4000.0;
            let f = bulk_potential(&QTensor::uniaxial(t, [0.0, 0.0, 1.0]), &m);
            assert!(f >= at_min - 1e-9 * at_min.abs());
        }
    }

    #[test]
    fn bulk_gradient_vanishes_on_minimizer_and_origin() {
        let m = MaterialParams::with_temperature_factor(-0.5);
        let g = bulk_gradient(&QTensor::uniaxial(m.s_plus(), [0.3, -0.2, 0.9]), &m);
        assert!(g.norm() < 1e-9 * m.c * m.s_plus().powi(3));
        assert_eq!(bulk_gradient(&QTensor::ZERO, &m).norm(), 0.0);
    }

    #[test]
    fn bulk_gradient_matches_central_differences() {
        let m = MaterialParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_q(&mut rng, 2.0);
            let g = bulk_gradient_components(&q, &m);
            for i in 0..5 {
                let h = 1e-5;
                let mut qp = q;
                let mut qm = q;
                qp.p[i] += h;
                qm.p[i] -= h;
                let fd = (bulk_potential(&qp, &m) - bulk_potential(&qm, &m)) / (2.0 * h);
                let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
                assert!((fd - g[i]).abs() <= 1e-6 * scale, "component {i}: fd {fd} vs {}", g[i]);
            }
            let trace = bulk_gradient(&q, &m).to_matrix().trace();
            assert!(trace.abs() < 1e-12 * (1.0 + q.norm()));
        }
    }

    #[test]
    fn biaxiality_reference_values() {
        let m = MaterialParams::default();
        assert_eq!(biaxiality(&QTensor::ZERO, &m), 0.0);
        for s in [-1.0, 0.3, 2.0] {
            assert!(biaxiality(&QTensor::uniaxial(s, [1.0, 2.0, -0.5]), &m) < 1e-12);
        }
        let planar = FrameComponents::new(Frame::Axis, [0.7, 0.0, 0.0, 0.0, 0.0]).to_qtensor();
        let ev = eigen_frame(&planar).values;
        assert_relative_eq!(ev[0], 0.7, epsilon = 1e-14);
        assert_relative_eq!(ev[2], -0.7, epsilon = 1e-14);
        assert_relative_eq!(biaxiality(&planar, &m), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn invariants_on_random_tensors() {
        let m = MaterialParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = random_q(&mut rng, 3.0);
            let beta = biaxiality(&q, &m);
            assert!((0.0..=1.0).contains(&beta));
            let r = random_rotation(&mut rng);
            let qr = q.rotate(&r);
            let f = bulk_potential(&q, &m);
            assert!((bulk_potential(&qr, &m) - f).abs() <= 1e-10 * (1.0 + f.abs()));
            assert!((biaxiality(&qr, &m) - beta).abs() <= 1e-10);
            assert!(qr.to_matrix().trace().abs() < 1e-12 * (1.0 + q.norm()));
        }
    }

    #[test]
    fn eigen_frame_reconstructs() {
        let m = MaterialParams::default();
        let s = m.s_plus();
        let f = eigen_frame(&QTensor::uniaxial(s, N1));
        assert_relative_eq!(f.values[0], 2.0 * s / 3.0, epsilon = 1e-13);
        let d = f.director();
        assert_relative_eq!((d[0] * N1[0] + d[1] * N1[1]).abs(), 1.0, epsilon = 1e-12);
        // ties between equal magnitudes resolve to the first component
        assert!(d[0] > 0.0);

        let zero = eigen_frame(&QTensor::ZERO);
        assert_eq!(zero.values, [0.0; 3]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = random_q(&mut rng, 1.0);
            let f = eigen_frame(&q);
            assert!(f.values[0] >= f.values[1] && f.values[1] >= f.values[2]);
            assert!(f.values.iter().sum::<f64>().abs() < 1e-12);
            let mut rec = Matrix3::zeros();
            for i in 0..3 {
                let v = Vector3::from(f.vectors[i]);
                rec += v * v.transpose() * f.values[i];
            }
            assert!((rec - q.to_matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn frame_conversions() {
        let m = MaterialParams::default();
        let s = m.s_plus();
        // z part is frame independent
        for frame in [Frame::Axis, Frame::Diagonal] {
            let q = FrameComponents::new(frame, [0.0, 0.0, 0.4, 0.0, 0.0]).to_qtensor();
            assert_relative_eq!(q.p[0], -0.4);
            assert_relative_eq!(q.p[3], -0.4);
            assert_relative_eq!(q.q33(), 0.8);
        }
        // tangent datum on the long edge x + y = 1
        let c1 = FrameComponents::from_qtensor(&QTensor::uniaxial(s, N1), Frame::Diagonal);
        assert_relative_eq!(c1.q[0], s / 2.0, epsilon = 1e-14);
        assert_relative_eq!(c1.q[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(c1.q[2], -s / 6.0, epsilon = 1e-14);
        // diagonal (q1, q2) -> axis (-q2, -q1)
        let d = FrameComponents::new(Frame::Diagonal, [0.3, -0.2, 0.1, 0.05, -0.07]);
        let a = d.convert(Frame::Axis);
        for (x, y) in a.q.iter().zip([0.2, -0.3, 0.1, 0.05, -0.07]) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let q = random_q(&mut rng, 1.0);
            for frame in [Frame::Axis, Frame::Diagonal] {
                let back = FrameComponents::from_qtensor(&q, frame).to_qtensor();
                for i in 0..5 {
                    assert!((back.p[i] - q.p[i]).abs() < 1e-14);
                }
            }
        }
    }
}
