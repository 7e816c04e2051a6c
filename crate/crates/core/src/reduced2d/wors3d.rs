//! Three-dimensional WORS: minimization restricted to fields with
//! `Q12 = Q13 = Q23 = 0`, `Q11`, `Q22` even in `x` and `y`, and
//! `Q11(x, y, z) = Q22(y, x, z)`. In the well frame this is
//! `Q = q1 (x x - y y) + q3 (2 z z - x x - y y)` with `q1` odd under the swap.

use serde::{Deserialize, Serialize};

use crate::energy::{el_residual, plate_residual, energy_and_gradient, total_energy, LateralVariant, WellProblem};
use crate::error::{Error, Result};
use crate::minimize::lbfgs;
use crate::minimize::{make_initial, InitialCondition, LbfgsOptions, MinimizeResult, SeparablePreconditioner};
use crate::spectral::{BasisKind, SpectralField, SpectralGrid};

fn check_problem(prob: &WellProblem) -> Result<()> {
    let spec = &prob.grid.spec;
    if spec.lateral != BasisKind::Chebyshev {
        return Err(Error::Config("the symmetric WORS run needs the Chebyshev lateral basis".into()));
    }
    if spec.l != spec.m {
        return Err(Error::Config(format!("the symmetric WORS run needs L = M, got {} and {}", spec.l, spec.m)));
    }
    if prob.anchoring.w1 != prob.anchoring.w2 {
        return Err(Error::Config("the symmetric WORS run needs W1 = W2".into()));
    }
    if let LateralVariant::Relaxed { alpha, gamma } = prob.anchoring.lateral {
        if !(alpha.is_finite() && gamma.is_finite()) {
            return Err(Error::Config("lateral anchoring constants must be finite".into()));
        }
    }
    Ok(())
}

/// Orthogonal projection of a flat coefficient vector onto the symmetric
/// subspace.
pub fn wors_symmetry_project(grid: &SpectralGrid, p: &mut [f64]) {
    let (a, b, c) = grid.mode_shape();
    debug_assert_eq!(a, b);
    let blk = a * b * c;
    let idx = |comp: usize, l: usize, m: usize, n: usize| comp * blk + (l * b + m) * c + n;
    for comp in [1, 2, 4] {
        p[comp * blk..(comp + 1) * blk].iter_mut().for_each(|v| *v = 0.0);
    }
    for l in 0..a {
        for m in 0..b {
            for n in 0..c {
                if l % 2 == 1 || m % 2 == 1 {
                    p[idx(0, l, m, n)] = 0.0;
                    p[idx(3, l, m, n)] = 0.0;
                } else if l <= m {
                    // pair (Q11[l,m], Q22[m,l]) with (Q11[m,l], Q22[l,m])
                    let s1 = 0.5 * (p[idx(0, l, m, n)] + p[idx(3, m, l, n)]);
                    let s2 = 0.5 * (p[idx(0, m, l, n)] + p[idx(3, l, m, n)]);
                    p[idx(0, l, m, n)] = s1;
                    p[idx(3, m, l, n)] = s1;
                    p[idx(0, m, l, n)] = s2;
                    p[idx(3, l, m, n)] = s2;
                }
            }
        }
    }
}

/// Minimizes the well energy over the symmetric subspace, from the WORS
/// initial condition.
pub fn wors_constrained_3d(prob: &WellProblem, opts: &LbfgsOptions) -> Result<MinimizeResult> {
    check_problem(prob)?;
    opts.validate()?;
    let mut x0 = make_initial(&InitialCondition::Wors, prob)?.to_vec();
    wors_symmetry_project(&prob.grid, &mut x0);
    let pc = SeparablePreconditioner::new(prob)?;
    let apply = |r: &[f64]| {
        let mut v = r.to_vec();
        wors_symmetry_project(&prob.grid, &mut v);
        let mut w = pc.apply(&v);
        wors_symmetry_project(&prob.grid, &mut w);
        w
    };
    let out = lbfgs::minimize(
        |x| {
            let (f, mut g) = energy_and_gradient(x, prob).expect("coefficient length fixed by the grid");
            wors_symmetry_project(&prob.grid, &mut g);
            (f, g)
        },
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

/// Post-checks of a symmetric 3D WORS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wors3dCheck {
    /// Largest `q3 = Q33 / 2` over the quadrature nodes.
    pub max_q3: f64,
    /// Largest `|q3 + s+/6|`.
    pub max_q3_deviation: f64,
    /// `min (y^2 - x^2) q1`; nonnegative for the WORS sign pattern.
    pub sign_pattern_min: f64,
    /// Largest `|q1|` on the diagonal planes `|x| = |y|`.
    pub diagonal_q1_max: f64,
    /// RMS residual of the top/bottom natural boundary condition.
    pub boundary_residual: f64,
    /// Largest pointwise top/bottom residual over `|x|, |y| <= 1/2`.
    pub boundary_residual_core: f64,
    /// RMS residual of the bulk equations at interior nodes.
    pub interior_residual: f64,
}

pub fn wors3d_check(prob: &WellProblem, f: &SpectralField) -> Result<Wors3dCheck> {
    let grid = &prob.grid;
    let v = grid.synthesize_values(f)?;
    let (nx, ny, nz) = grid.node_shape();
    let s = prob.s_plus();
    let mut out = Wors3dCheck {
        max_q3: f64::NEG_INFINITY,
        max_q3_deviation: 0.0,
        sign_pattern_min: f64::INFINITY,
        diagonal_q1_max: 0.0,
        boundary_residual: 0.0,
        boundary_residual_core: 0.0,
        interior_residual: 0.0,
    };
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (grid.x.nodes[i], grid.y.nodes[j]);
            for k in 0..nz {
                let (q11, q22) = (v[[0, i, j, k]], v[[3, i, j, k]]);
                let q1 = 0.5 * (q11 - q22);
                let q3 = -0.5 * (q11 + q22);
                out.max_q3 = out.max_q3.max(q3);
                out.max_q3_deviation = out.max_q3_deviation.max((q3 + s / 6.0).abs());
                out.sign_pattern_min = out.sign_pattern_min.min((y * y - x * x) * q1);
            }
        }
    }
    // diagonal planes are sampled directly; the quadrature nodes need not lie on them
    let zs: Vec<f64> = grid.z.nodes.to_vec();
    for &t in grid.x.nodes.iter() {
        for (xs, ys) in [([t], [t]), ([t], [-t])] {
            let c = grid.sample_lattice(f, &xs, &ys, &zs)?;
            for k in 0..zs.len() {
                let q1 = 0.5 * (c.values[[0, 0, 0, k]] - c.values[[3, 0, 0, k]]);
                out.diagonal_q1_max = out.diagonal_q1_max.max(q1.abs());
            }
        }
    }
    for map in plate_residual(f, prob)? {
        for ((a, b), r) in map.indexed_iter() {
            if grid.x.nodes[a].abs() <= 0.5 && grid.y.nodes[b].abs() <= 0.5 {
                out.boundary_residual_core = out.boundary_residual_core.max(*r);
            }
        }
    }
    let r = el_residual(f, prob)?;
    out.boundary_residual = r.boundary;
    out.interior_residual = r.interior;
    Ok(out)
}
