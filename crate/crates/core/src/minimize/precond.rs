//! Separable preconditioner: the exact inverse of the quadratic model
//! `G (K + S) + c M`, where `K`, `M` are the tensor-product stiffness and mass
//! matrices, `S` collects the surface penalties on each face, `c` is a bulk
//! curvature and `G` is the 5x5 metric of `|Q|^2 / 2` in stored components.
//! Applied by fast diagonalization: one generalized eigendecomposition per
//! axis, then three contractions each way.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, ArrayView3};

use crate::energy::{LateralVariant, WellProblem};
use crate::error::{Error, Result};
use crate::spectral::{eval_tensor, eval_tensor_adjoint, Axis1D};

#[derive(Clone, Debug)]
pub struct SeparablePreconditioner {
    v: [Array2<f64>; 3],
    lam: [Array1<f64>; 3],
    bulk: f64,
    shape: (usize, usize, usize),
}

/// `A v = lam M v` with `V^T M V = I`.
fn generalized_eig(a: &Array2<f64>, m: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = a.nrows();
    let mm = DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    let am = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let chol = mm.cholesky().ok_or_else(|| Error::Domain("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let c = &linv * am * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let v = linv.transpose() * eig.eigenvectors;
    Ok((Array2::from_shape_fn((n, n), |(i, j)| v[(i, j)]), Array1::from_iter(eig.eigenvalues.iter().map(|x| x.max(0.0)))))
}

fn axis_operator(axis: &Axis1D, ends: [f64; 2]) -> Array2<f64> {
    let mut a = axis.stiff.clone();
    for (e, w) in ends.into_iter().enumerate() {
        if w > 0.0 {
            let row = axis.end_vals.row(e);
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    a[[i, j]] += w * row[i] * row[j];
                }
            }
        }
    }
    a
}

impl SeparablePreconditioner {
    pub fn new(prob: &WellProblem) -> Result<Self> {
        let grid = &prob.grid;
        let lateral = match prob.anchoring.lateral {
            LateralVariant::FullTarget => 2.0,
            LateralVariant::Relaxed { alpha, gamma } => alpha.max(gamma),
        };
        let plate = prob.anchoring.alpha_z.max(prob.anchoring.gamma_z);
        let wx = prob.omega2() * lateral;
        let wy = prob.omega1() * lateral;
        let wz = prob.w_z() * plate;
        let mut v = Vec::new();
        let mut lam = Vec::new();
        for (axis, w) in [(&grid.x, wx), (&grid.y, wy), (&grid.z, wz)] {
            let (vv, ll) = generalized_eig(&axis_operator(axis, [w, w]), &axis.mass)?;
            v.push(vv);
            lam.push(ll);
        }
        let bulk = (prob.bulk_prefactor() * 2.0 * prob.material.a.abs()).max(1e-12);
        let [vx, vy, vz]: [Array2<f64>; 3] = v.try_into().unwrap();
        let [lx, ly, lz]: [Array1<f64>; 3] = lam.try_into().unwrap();
        Ok(SeparablePreconditioner { v: [vx, vy, vz], lam: [lx, ly, lz], bulk, shape: grid.mode_shape() })
    }

    fn solve_scalar(&self, r: ArrayView3<f64>, g: f64) -> Array3<f64> {
        let [vx, vy, vz] = &self.v;
        let mut t = eval_tensor_adjoint(r, vx, vy, vz);
        for ((i, j, k), x) in t.indexed_iter_mut() {
            *x /= g * (self.lam[0][i] + self.lam[1][j] + self.lam[2][k]) + self.bulk;
        }
        eval_tensor(t.view(), vx, vy, vz)
    }

    /// Applies the inverse to a flat coefficient vector.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let (a, b, c) = self.shape;
        let blk = a * b * c;
        debug_assert_eq!(r.len(), 5 * blk);
        let comp = |i: usize| ArrayView3::from_shape((a, b, c), &r[i * blk..(i + 1) * blk]).unwrap();
        let mut out = vec![0.0; 5 * blk];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // Q11 and Q22 are coupled by the metric: eigenvalues 3 (sum) and 1 (difference)
        let sum = (&comp(0) + &comp(3)) * h;
        let dif = (&comp(0) - &comp(3)) * h;
        let zs = self.solve_scalar(sum.view(), 3.0);
        let zd = self.solve_scalar(dif.view(), 1.0);
        let q11 = (&zs + &zd) * h;
        let q22 = (&zs - &zd) * h;
        let mut put = |i: usize, z: &Array3<f64>| {
            out[i * blk..(i + 1) * blk].iter_mut().zip(z.iter()).for_each(|(o, v)| *o = *v);
        };
        put(0, &q11);
        put(3, &q22);
        for i in [1, 2, 4] {
            let z = self.solve_scalar(comp(i), 2.0);
            put(i, &z);
        }
        out
    }

    /// Smallest eigenvalue of the model operator, a lower scale for the Hessian.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = |l: &Array1<f64>| l.iter().cloned().fold(f64::INFINITY, f64::min);
        (m(&self.lam[0]) + m(&self.lam[1]) + m(&self.lam[2])) + self.bulk
    }
}
