//! Initial fields for every configuration family.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::WellProblem;
use crate::error::Result;
use crate::spectral::SpectralField;
use crate::tensor::QTensor;

/// Which pair of opposite edges the rotated profile turns between.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotatedEdge {
    /// Director turns by pi from `y = -1` to `y = +1`.
    Y,
    /// Director turns by pi from `x = -1` to `x = +1`.
    X,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, from = "InitialRepr")]
pub enum InitialCondition {
    /// Uniform director `(1, sign, 0)/sqrt(2)`.
    Diagonal { sign: i8 },
    Rotated { edge: RotatedEdge },
    Wors,
    /// `top` above `z = eps/2`, `bottom` below.
    Mixed { top: Box<InitialCondition>, bottom: Box<InitialCondition> },
    EscapedMinus,
    EscapedPlus,
    Isotropic,
    Random { seed: u64 },
}

// Unit variants of an internally tagged enum accept stray keys; empty struct
// variants do not.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InitialRepr {
    Diagonal { sign: i8 },
    Rotated { edge: RotatedEdge },
    Wors {},
    Mixed { top: Box<InitialCondition>, bottom: Box<InitialCondition> },
    EscapedMinus {},
    EscapedPlus {},
    Isotropic {},
    Random { seed: u64 },
}

impl From<InitialRepr> for InitialCondition {
    fn from(r: InitialRepr) -> Self {
        match r {
            InitialRepr::Diagonal { sign } => InitialCondition::Diagonal { sign },
            InitialRepr::Rotated { edge } => InitialCondition::Rotated { edge },
            InitialRepr::Wors {} => InitialCondition::Wors,
            InitialRepr::Mixed { top, bottom } => InitialCondition::Mixed { top, bottom },
            InitialRepr::EscapedMinus {} => InitialCondition::EscapedMinus,
            InitialRepr::EscapedPlus {} => InitialCondition::EscapedPlus,
            InitialRepr::Isotropic {} => InitialCondition::Isotropic,
            InitialRepr::Random { seed } => InitialCondition::Random { seed },
        }
    }
}

impl InitialCondition {
    pub fn diagonal() -> Self {
        InitialCondition::Diagonal { sign: 1 }
    }

    pub fn rotated() -> Self {
        InitialCondition::Rotated { edge: RotatedEdge::Y }
    }

    /// The two opposite diagonals on top and bottom.
    pub fn mixed() -> Self {
        InitialCondition::Mixed {
            top: Box::new(InitialCondition::Diagonal { sign: 1 }),
            bottom: Box::new(InitialCondition::Diagonal { sign: -1 }),
        }
    }

    pub fn name(&self) -> String {
        match self {
            InitialCondition::Diagonal { sign } => format!("diagonal{}", if *sign >= 0 { "+" } else { "-" }),
            InitialCondition::Rotated { edge } => format!("rotated-{edge:?}").to_lowercase(),
            InitialCondition::Wors => "wors".into(),
            InitialCondition::Mixed { top, bottom } => format!("mixed({}/{})", top.name(), bottom.name()),
            InitialCondition::EscapedMinus => "escaped-".into(),
            InitialCondition::EscapedPlus => "escaped+".into(),
            InitialCondition::Isotropic => "isotropic".into(),
            InitialCondition::Random { seed } => format!("random({seed})"),
        }
    }
}

/// Core radius of the escaped profiles.
pub const ESCAPE_CORE: f64 = 0.5;

/// Harmonic director angle on the cross-section, solved by SOR on a uniform
/// grid with the edge angles of a rotated profile.
pub struct HarmonicAngle {
    n: usize,
    theta: Array2<f64>,
}

impl HarmonicAngle {
    pub fn solve(edge: RotatedEdge, n: usize) -> Self {
        let mut t = Array2::<f64>::zeros((n, n));
        let h = 2.0 / (n - 1) as f64;
        // boundary data, index (i, j) <-> (x, y)
        for i in 0..n {
            for j in 0..n {
                let on_x = i == 0 || i == n - 1;
                let on_y = j == 0 || j == n - 1;
                if !(on_x || on_y) {
                    continue;
                }
                let x = -1.0 + i as f64 * h;
                let y = -1.0 + j as f64 * h;
                t[[i, j]] = match edge {
                    RotatedEdge::Y => {
                        if on_y && !on_x {
                            if y < 0.0 { 0.0 } else { PI }
                        } else if on_x && !on_y {
                            PI / 2.0
                        } else if y < 0.0 {
                            PI / 4.0
                        } else {
                            3.0 * PI / 4.0
                        }
                    }
                    RotatedEdge::X => {
                        if on_x && !on_y {
                            if x < 0.0 { PI / 2.0 } else { -PI / 2.0 }
                        } else if on_y && !on_x {
                            0.0
                        } else if x < 0.0 {
                            PI / 4.0
                        } else {
                            -PI / 4.0
                        }
                    }
                };
            }
        }
        Self::relax(t)
    }

    /// Regular part `h` of a vortex angle `sign * atan2(y, x) + h` whose edge
    /// angles are tangent to the walls.
    pub fn vortex(sign: f64, n: usize) -> Self {
        let mut t = Array2::<f64>::zeros((n, n));
        let h = 2.0 / (n - 1) as f64;
        for i in 0..n {
            for j in 0..n {
                let on_x = i == 0 || i == n - 1;
                let on_y = j == 0 || j == n - 1;
                if !(on_x || on_y) {
                    continue;
                }
                let (x, y) = (-1.0 + i as f64 * h, -1.0 + j as f64 * h);
                let tangent = if on_x && !on_y {
                    PI / 2.0
                } else if on_y && !on_x {
                    0.0
                } else {
                    PI / 4.0
                };
                t[[i, j]] = (tangent - sign * y.atan2(x)).rem_euclid(PI);
            }
        }
        Self::relax(t)
    }

    fn relax(mut t: Array2<f64>) -> Self {
        let n = t.nrows();
        let omega = 2.0 / (1.0 + (PI / (n - 1) as f64).sin());
        for _ in 0..20 * n {
            let mut change = 0.0f64;
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let avg = 0.25 * (t[[i - 1, j]] + t[[i + 1, j]] + t[[i, j - 1]] + t[[i, j + 1]]);
                    let d = omega * (avg - t[[i, j]]);
                    t[[i, j]] += d;
                    change = change.max(d.abs());
                }
            }
            if change < 1e-12 {
                break;
            }
        }
        HarmonicAngle { n, theta: t }
    }

    /// Bilinear interpolation at `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let n = self.n;
        let h = 2.0 / (n - 1) as f64;
        let fx = ((x + 1.0) / h).clamp(0.0, (n - 1) as f64);
        let fy = ((y + 1.0) / h).clamp(0.0, (n - 1) as f64);
        let i = (fx.floor() as usize).min(n - 2);
        let j = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let t = &self.theta;
        (1.0 - tx) * (1.0 - ty) * t[[i, j]] + tx * (1.0 - ty) * t[[i + 1, j]] + (1.0 - tx) * ty * t[[i, j + 1]]
            + tx * ty * t[[i + 1, j + 1]]
    }
}

fn planar(s: f64, theta: f64) -> QTensor {
    QTensor::uniaxial(s, [theta.cos(), theta.sin(), 0.0])
}

/// Pointwise value of a non-random initial condition.
pub fn initial_q(kind: &InitialCondition, prob: &WellProblem, x: f64, y: f64, z: f64, angle: Option<&HarmonicAngle>) -> QTensor {
    let s = prob.s_plus();
    match kind {
        InitialCondition::Diagonal { sign } => {
            let sy = if *sign >= 0 { 1.0 } else { -1.0 };
            QTensor::uniaxial(s, [FRAC_1_SQRT_2, sy * FRAC_1_SQRT_2, 0.0])
        }
        InitialCondition::Rotated { .. } => planar(s, angle.expect("rotated profile needs its angle field").at(x, y)),
        InitialCondition::Wors => {
            let dist = (x.abs() - y.abs()).abs() / 2f64.sqrt();
            let sign = (y * y - x * x).signum();
            let q1 = 0.5 * s * sign * (dist / prob.delta).min(1.0);
            let q3 = -prob.material.b / (6.0 * prob.material.c);
            QTensor::new([q1 - q3, 0.0, 0.0, -q1 - q3, 0.0])
        }
        InitialCondition::Mixed { top, bottom } => {
            let pick = if z >= 0.5 * prob.eps { top } else { bottom };
            initial_q(pick, prob, x, y, z, angle)
        }
        InitialCondition::EscapedMinus | InitialCondition::EscapedPlus => {
            let r = (x * x + y * y).sqrt();
            let sign = if matches!(kind, InitialCondition::EscapedPlus) { 1.0 } else { -1.0 };
            let theta = sign * y.atan2(x) + angle.expect("escaped profile needs its angle field").at(x, y);
            let (cx, cy) = (theta.cos(), theta.sin());
            let tilt = std::f64::consts::FRAC_PI_2 * (-r / ESCAPE_CORE).exp();
            let (st, ct) = tilt.sin_cos();
            QTensor::uniaxial(s, [ct * cx, ct * cy, st])
        }
        InitialCondition::Isotropic => QTensor::ZERO,
        InitialCondition::Random { .. } => unreachable!("random fields are built in coefficient space"),
    }
}

fn angle_field(kind: &InitialCondition) -> Option<HarmonicAngle> {
    match kind {
        InitialCondition::Rotated { edge } => Some(HarmonicAngle::solve(*edge, 129)),
        InitialCondition::EscapedMinus => Some(HarmonicAngle::vortex(-1.0, 129)),
        InitialCondition::EscapedPlus => Some(HarmonicAngle::vortex(1.0, 129)),
        InitialCondition::Mixed { top, bottom } => angle_field(top).or_else(|| angle_field(bottom)),
        _ => None,
    }
}

fn random_field(prob: &WellProblem, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = prob.grid.zero_field();
    let amp = 0.5 * prob.s_plus();
    for ((_, l, m, n), c) in f.coeffs.indexed_iter_mut() {
        let decay = 1.0 + (l + m + n) as f64;
        *c = amp * rng.random_range(-1.0..1.0) / (decay * decay);
    }
    f
}

/// Builds the initial field at the quadrature nodes and projects it onto the
/// spectral band.
pub fn make_initial(kind: &InitialCondition, prob: &WellProblem) -> Result<SpectralField> {
    if let InitialCondition::Random { seed } = kind {
        return Ok(random_field(prob, *seed));
    }
    if let InitialCondition::Mixed { top, bottom } = kind {
        if matches!(**top, InitialCondition::Random { .. }) || matches!(**bottom, InitialCondition::Random { .. }) {
            return Err(crate::Error::Config("random halves are not supported in mixed initial conditions".into()));
        }
    }
    let angle = angle_field(kind);
    let grid = &prob.grid;
    let (nx, ny, nz) = grid.node_shape();
    let mut v = Array4::zeros((5, nx, ny, nz));
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let q = initial_q(kind, prob, grid.x.nodes[i], grid.y.nodes[j], grid.z.nodes[k], angle.as_ref());
                for c in 0..5 {
                    v[[c, i, j, k]] = q.p[c];
                }
            }
        }
    }
    grid.analyze(&v)
}
