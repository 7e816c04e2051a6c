//! Mechanical classification of converged 3D fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::{mean_dz_sq, WellProblem};
use crate::error::Result;
use crate::spectral::{CollocationValues, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolutionClass {
    #[serde(rename = "WORS")]
    Wors,
    Diagonal,
    Rotated,
    Mixed3D,
    #[serde(rename = "BD")]
    Bd,
    EscapedPlus,
    EscapedMinus,
    Unknown,
}

impl SolutionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolutionClass::Wors => "WORS",
            SolutionClass::Diagonal => "Diagonal",
            SolutionClass::Rotated => "Rotated",
            SolutionClass::Mixed3D => "Mixed3D",
            SolutionClass::Bd => "BD",
            SolutionClass::EscapedPlus => "EscapedPlus",
            SolutionClass::EscapedMinus => "EscapedMinus",
            SolutionClass::Unknown => "Unknown",
        }
    }
}

impl std::fmt::Display for SolutionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Class of one horizontal cross-section.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceClass {
    Wors,
    /// Director along `(1, sign, 0)/sqrt(2)` in the interior.
    Diagonal { sign: i8 },
    Rotated,
    Bd,
    Unknown,
}

/// Numbers behind a classification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    /// Largest `|q1|` on the two diagonals, `q1 = (Q11 - Q22)/2`.
    pub q1_diagonal_max: f64,
    /// Smallest `(y^2 - x^2) q1` over the lattice.
    pub sign_pattern_min: f64,
    /// Largest `|Q12|`.
    pub q2_sup: f64,
    pub q2_centre: f64,
    /// Smallest `sign(q2_centre) Q12` inside `|x|, |y| <= 0.9`.
    pub q2_signed_min: f64,
    /// Net in-plane director rotation along the two midlines.
    pub midline_rotation: f64,
    pub class: SliceClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: SolutionClass,
    pub mean_dz_sq: f64,
    /// Largest `|Q(plate) - Q(mid-plane)|` inside `|x|, |y| <= 0.8`.
    pub slice_deviation: f64,
    pub mid: SliceStats,
    pub top: SliceStats,
    pub bottom: SliceStats,
    /// `Q33 / 2` at the well axis, mid-height.
    pub centre_q3: f64,
    /// Largest `sqrt(Q13^2 + Q23^2)` on the mid-plane.
    pub q45_max: f64,
    /// Winding number of the in-plane director on the circle `r = 0.5` at mid-height.
    pub winding: i32,
}

pub const LATTICE: usize = 41;
const EDGE: f64 = 0.95;

fn lattice() -> Vec<f64> {
    (0..LATTICE).map(|i| -EDGE + 2.0 * EDGE * i as f64 / (LATTICE - 1) as f64).collect()
}

/// In-plane director angle in `[-pi/2, pi/2)` from the planar part of Q.
fn planar_angle(q11: f64, q22: f64, q12: f64) -> f64 {
    0.5 * (2.0 * q12).atan2(q11 - q22)
}

fn unwrap_total(angles: &[f64], period: f64) -> f64 {
    let mut total = 0.0;
    for w in angles.windows(2) {
        let mut d = w[1] - w[0];
        d -= period * (d / period).round();
        total += d;
    }
    total
}

pub fn classify_slice(v: &CollocationValues, k: usize, xs: &[f64], s_plus: f64) -> SliceStats {
    let n = xs.len();
    let q1 = |i: usize, j: usize| 0.5 * (v.values[[0, i, j, k]] - v.values[[3, i, j, k]]);
    let q2 = |i: usize, j: usize| v.values[[1, i, j, k]];
    let mut diag_max = 0.0f64;
    for i in 0..n {
        diag_max = diag_max.max(q1(i, i).abs()).max(q1(i, n - 1 - i).abs());
    }
    let mut sign_min = f64::INFINITY;
    let mut q2_sup = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            sign_min = sign_min.min((xs[j] * xs[j] - xs[i] * xs[i]) * q1(i, j));
            q2_sup = q2_sup.max(q2(i, j).abs());
        }
    }
    let c = n / 2;
    let q2c = q2(c, c);
    let sgn = if q2c >= 0.0 { 1.0 } else { -1.0 };
    let mut signed_min = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if xs[i].abs() <= 0.9 && xs[j].abs() <= 0.9 {
                signed_min = signed_min.min(sgn * q2(i, j));
            }
        }
    }
    let angle = |i: usize, j: usize| planar_angle(v.values[[0, i, j, k]], v.values[[3, i, j, k]], v.values[[1, i, j, k]]);
    let vertical: Vec<f64> = (0..n).map(|j| angle(c, j)).collect();
    let horizontal: Vec<f64> = (0..n).map(|i| angle(i, c)).collect();
    let rot = unwrap_total(&vertical, PI).abs().max(unwrap_total(&horizontal, PI).abs());

    let tol = 1e-3 * s_plus;
    let class = if diag_max < tol && q2_sup < tol && sign_min >= -tol {
        SliceClass::Wors
    } else if rot > PI / 2.0 {
        SliceClass::Rotated
    } else if q2c.abs() > 0.1 * s_plus && signed_min >= -tol {
        SliceClass::Diagonal { sign: sgn as i8 }
    } else if q2_sup < 1e-2 * s_plus {
        SliceClass::Bd
    } else {
        SliceClass::Unknown
    };
    SliceStats {
        q1_diagonal_max: diag_max,
        sign_pattern_min: sign_min,
        q2_sup,
        q2_centre: q2c,
        q2_signed_min: signed_min,
        midline_rotation: rot,
        class,
    }
}

/// Bound on the plate to mid-plane deviation, relative to `s+`, for a
/// z-invariant class. Measured away from the corner columns, where the
/// lateral target vanishes and the plates pull toward their own state.
pub const Z_INVARIANT_TOL: f64 = 0.1;
const CORE: f64 = 0.8;

pub fn classify_detailed(f: &SpectralField, prob: &WellProblem) -> Result<Classification> {
    let grid = &prob.grid;
    let s = prob.s_plus();
    let xs = lattice();
    let zs = [0.0, 0.5 * prob.eps, prob.eps];
    let v = grid.sample_lattice(f, &xs, &xs, &zs)?;
    let bottom = classify_slice(&v, 0, &xs, s);
    let mid = classify_slice(&v, 1, &xs, s);
    let top = classify_slice(&v, 2, &xs, s);
    let dz = mean_dz_sq(f, grid)?;
    let mut dev = 0.0f64;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if xs[i].abs() > CORE || xs[j].abs() > CORE {
                continue;
            }
            for k in [0, 2] {
                let d2: f64 = (0..5).map(|c| (v.values[[c, i, j, k]] - v.values[[c, i, j, 1]]).powi(2)).sum();
                dev = dev.max(d2.sqrt());
            }
        }
    }

    let centre = grid.evaluate_at(f, 0.0, 0.0, 0.5 * prob.eps)?;
    let centre_q3 = 0.5 * centre.q33();
    let mut q45 = 0.0f64;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            let a = v.values[[2, i, j, 1]];
            let b = v.values[[4, i, j, 1]];
            q45 = q45.max((a * a + b * b).sqrt());
        }
    }
    let m = 128;
    let circle: Vec<f64> = (0..=m)
        .map(|t| {
            let phi = 2.0 * PI * t as f64 / m as f64;
            let q = grid.evaluate_at(f, 0.5 * phi.cos(), 0.5 * phi.sin(), 0.5 * prob.eps).unwrap();
            planar_angle(q.p[0], q.p[3], q.p[1])
        })
        .collect();
    let winding = (unwrap_total(&circle, PI) / (2.0 * PI)).round() as i32;

    let class = if centre_q3 > 0.0 && q45 > 1e-2 * s {
        match winding {
            1 => SolutionClass::EscapedPlus,
            -1 => SolutionClass::EscapedMinus,
            _ => SolutionClass::Unknown,
        }
    } else if dev < Z_INVARIANT_TOL * s && top.class == mid.class && bottom.class == mid.class {
        match mid.class {
            SliceClass::Wors => SolutionClass::Wors,
            SliceClass::Diagonal { .. } => SolutionClass::Diagonal,
            SliceClass::Rotated => SolutionClass::Rotated,
            SliceClass::Bd => SolutionClass::Bd,
            SliceClass::Unknown => SolutionClass::Unknown,
        }
    } else {
        match (top.class, bottom.class) {
            (SliceClass::Diagonal { sign: a }, SliceClass::Diagonal { sign: b }) if a != b && mid.q2_sup < 1e-2 * s => {
                SolutionClass::Mixed3D
            }
            _ => SolutionClass::Unknown,
        }
    };
    Ok(Classification { class, mean_dz_sq: dz, slice_deviation: dev, mid, top, bottom, centre_q3, q45_max: q45, winding })
}

pub fn classify(f: &SpectralField, prob: &WellProblem) -> Result<SolutionClass> {
    Ok(classify_detailed(f, prob)?.class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::AnchoringConfig;
    use crate::minimize::initial::{make_initial, InitialCondition};
    use crate::spectral::{BasisKind, GridSpec};
    use crate::tensor::MaterialParams;

    fn prob() -> WellProblem {
        WellProblem::new(5.0, 2.0, MaterialParams::default(), AnchoringConfig::default(), GridSpec::new(BasisKind::Chebyshev, 8, 8, 3))
            .unwrap()
    }

    #[test]
    fn initial_profiles_classify_as_their_family() {
        let p = prob();
        let c = |k: InitialCondition| classify(&make_initial(&k, &p).unwrap(), &p).unwrap();
        assert_eq!(c(InitialCondition::diagonal()), SolutionClass::Diagonal);
        assert_eq!(c(InitialCondition::rotated()), SolutionClass::Rotated);
        assert_eq!(c(InitialCondition::EscapedPlus), SolutionClass::EscapedPlus);
        assert_eq!(c(InitialCondition::EscapedMinus), SolutionClass::EscapedMinus);
    }

    #[test]
    fn unwrap_counts_turns() {
        let a: Vec<f64> = (0..=100).map(|i| (2.0 * PI * i as f64 / 100.0).rem_euclid(PI) - PI / 2.0).collect();
        assert!((unwrap_total(&a, PI) - 2.0 * PI).abs() < 1e-9);
    }
}
