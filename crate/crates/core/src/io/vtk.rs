//! Legacy-VTK ASCII structured-grid export.
//!
//! Points run `x` fastest, then `y`, then `z`. Point data:
//! `beta2` (scalar), `director` (unit vector, sign-normalized), `q3`
//! (`Q33 / 2`, scalar) and `Q` (field array with the six components
//! `xx, yy, zz, xy, yz, xz`). The title line carries the code version and
//! the config hash.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tables::{linspace, point_row};
use super::{create, ArtifactMeta};
use crate::energy::WellProblem;
use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Output lattice dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Lattice {
    /// `64 x 64 x max(8, 16 eps)`.
    pub fn default_for(eps: f64) -> Self {
        Lattice { nx: 64, ny: 64, nz: ((16.0 * eps).ceil() as usize).max(8) }
    }

    pub fn points(&self) -> usize {
        self.nx * self.ny * self.nz
    }
}

/// Sampled point data, in VTK point order.
#[derive(Clone, Debug, PartialEq)]
pub struct PointData {
    pub lattice: Lattice,
    pub points: Vec<[f64; 3]>,
    pub beta2: Vec<f64>,
    pub director: Vec<[f64; 3]>,
    pub q3: Vec<f64>,
    pub q: Vec<[f64; 6]>,
}

pub fn sample(f: &SpectralField, prob: &WellProblem, lat: Lattice) -> Result<PointData> {
    if lat.nx < 2 || lat.ny < 2 || lat.nz < 2 {
        return Err(Error::Config(format!("output lattice needs at least 2 points per axis, got {lat:?}")));
    }
    let xs = linspace(-1.0, 1.0, lat.nx);
    let ys = linspace(-1.0, 1.0, lat.ny);
    let zs = linspace(0.0, prob.eps, lat.nz);
    let v = prob.grid.sample_lattice(f, &xs, &ys, &zs)?;
    let n = lat.points();
    let mut d = PointData {
        lattice: lat,
        points: Vec::with_capacity(n),
        beta2: Vec::with_capacity(n),
        director: Vec::with_capacity(n),
        q3: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for k in 0..lat.nz {
        for j in 0..lat.ny {
            for i in 0..lat.nx {
                let q = v.q_at(i, j, k);
                let r = point_row(&q, prob, xs[i], ys[j], zs[k]);
                let [q11, q12, q13, q22, q23] = q.p;
                d.points.push([xs[i], ys[j], zs[k]]);
                d.beta2.push(r.beta2);
                d.director.push([r.director_x, r.director_y, r.director_z]);
                d.q3.push(r.q3);
                d.q.push([q11, q22, -q11 - q22, q12, q23, q13]);
            }
        }
    }
    Ok(d)
}

pub fn write_vtk<W: Write>(mut w: W, meta: &ArtifactMeta, d: &PointData) -> Result<()> {
    let n = d.lattice.points();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{} config_hash={}", meta.code_version, meta.config_hash)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_GRID")?;
    writeln!(w, "DIMENSIONS {} {} {}", d.lattice.nx, d.lattice.ny, d.lattice.nz)?;
    writeln!(w, "POINTS {n} double")?;
    for p in &d.points {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    writeln!(w, "SCALARS beta2 double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &d.beta2 {
        writeln!(w, "{v}")?;
    }
    writeln!(w, "VECTORS director double")?;
    for v in &d.director {
        writeln!(w, "{} {} {}", v[0], v[1], v[2])?;
    }
    writeln!(w, "SCALARS q3 double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &d.q3 {
        writeln!(w, "{v}")?;
    }
    writeln!(w, "FIELD FieldData 1")?;
    writeln!(w, "Q 6 {n} double")?;
    for v in &d.q {
        writeln!(w, "{} {} {} {} {} {}", v[0], v[1], v[2], v[3], v[4], v[5])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_vtk(path: &Path, f: &SpectralField, prob: &WellProblem, lat: Lattice, meta: &ArtifactMeta) -> Result<()> {
    let d = sample(f, prob, lat)?;
    write_vtk(create(path)?, meta, &d)
}
