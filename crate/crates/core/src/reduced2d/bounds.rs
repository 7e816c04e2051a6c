//! A-posteriori checks of the pointwise bounds satisfied by reduced critical
//! points with `q3 < 0`.

use serde::{Deserialize, Serialize};

use super::ReducedState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureRegime {
    /// `A > -B^2 / 3C`.
    High,
    /// `A = -B^2 / 3C`.
    Special,
    /// `A < -B^2 / 3C`.
    Low,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    /// Worst value of the checked quantity.
    pub value: f64,
    /// Bound it is compared against.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub regime: TemperatureRegime,
    pub s_plus: f64,
    pub s_minus: f64,
    pub minus_b_over_6c: f64,
    pub tolerance: f64,
    /// Whether `q3 < 0` at every interior node; the bounds assume it.
    pub q3_negative: bool,
    pub checks: Vec<BoundCheck>,
    /// `min (x y q1)` over interior nodes; nonnegative for the WORS sign
    /// pattern. Informational.
    pub sign_pattern_min: f64,
    pub all_pass: bool,
}

/// Relative width of the band treated as the special temperature.
const SPECIAL_REL_TOL: f64 = 1e-12;

pub fn verify_bounds(st: &ReducedState) -> BoundsReport {
    let m = &st.material;
    let tol = 1e-8;
    let sp = m.s_plus();
    let sm = m.s_minus();
    let a_star = m.special_temperature();
    let regime = if (m.a - a_star).abs() <= SPECIAL_REL_TOL * a_star.abs() {
        TemperatureRegime::Special
    } else if m.a > a_star {
        TemperatureRegime::High
    } else {
        TemperatureRegime::Low
    };
    let g = &st.grid;
    let nodes = g.interior_nodes();
    let mut norm_max = f64::NEG_INFINITY;
    let mut ratio_max = f64::NEG_INFINITY;
    let mut q3_min = f64::INFINITY;
    let mut q3_max = f64::NEG_INFINITY;
    let mut q3_dev = 0.0f64;
    let mut sign_min = f64::INFINITY;
    for &(i, j) in &nodes {
        let (q1, q2, q3) = (st.q1[[i, j]], st.q2[[i, j]], st.q3[[i, j]]);
        norm_max = norm_max.max(q1 * q1 + q2 * q2 + 3.0 * q3 * q3);
        if g.is_deep_interior(i, j) {
            let r = if q3 != 0.0 { (q1 * q1 + q2 * q2) / (q3 * q3) } else { f64::INFINITY };
            ratio_max = ratio_max.max(r);
        }
        q3_min = q3_min.min(q3);
        q3_max = q3_max.max(q3);
        q3_dev = q3_dev.max((q3 + sp / 6.0).abs());
        let (x, y) = g.xy(i, j);
        sign_min = sign_min.min(x * y * q1);
    }
    let mut checks = vec![
        BoundCheck {
            name: "norm: q1^2 + q2^2 + 3 q3^2 <= s+^2 / 3".into(),
            value: norm_max,
            bound: sp * sp / 3.0,
            pass: norm_max <= sp * sp / 3.0 + tol,
        },
        BoundCheck {
            name: "biaxiality: (q1^2 + q2^2) / q3^2 < 9".into(),
            value: ratio_max,
            bound: 9.0,
            pass: ratio_max < 9.0,
        },
    ];
    let (lo, hi) = match regime {
        TemperatureRegime::High => (-sp / 6.0, sm / 3.0),
        TemperatureRegime::Low => (sm / 3.0, -sp / 6.0),
        TemperatureRegime::Special => (-sp / 6.0, -sp / 6.0),
    };
    checks.push(BoundCheck { name: format!("q3 >= {lo:.12}"), value: q3_min, bound: lo, pass: q3_min >= lo - tol });
    checks.push(BoundCheck { name: format!("q3 <= {hi:.12}"), value: q3_max, bound: hi, pass: q3_max <= hi + tol });
    if regime == TemperatureRegime::Special {
        checks.push(BoundCheck { name: "q3 = -s+/6".into(), value: q3_dev, bound: 1e-6, pass: q3_dev <= 1e-6 });
    }
    let q3_negative = q3_max < 0.0;
    let all_pass = checks.iter().all(|c| c.pass);
    BoundsReport {
        regime,
        s_plus: sp,
        s_minus: sm,
        minus_b_over_6c: -m.b / (6.0 * m.c),
        tolerance: tol,
        q3_negative,
        checks,
        sign_pattern_min: sign_min,
        all_pass,
    }
}
