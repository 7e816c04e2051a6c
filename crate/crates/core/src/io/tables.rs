//! CSV tables: iterate logs, horizontal slices of 3D fields and reduced 2D
//! dumps. Each file starts with `#` provenance lines.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{create, ArtifactMeta};
use crate::energy::WellProblem;
use crate::error::{Error, Result};
use crate::minimize::IterRecord;
use crate::reduced2d::{NodeKind, ReducedState};
use crate::spectral::SpectralField;
use crate::tensor::{biaxiality, eigen_frame, sign_normalize, QTensor};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Format(format!("{k:?}")),
    }
}

/// Writes `rows` after the provenance lines.
pub fn write_rows<T: Serialize>(path: &Path, meta: &ArtifactMeta, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(meta.comment_lines().as_bytes())?;
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r).map_err(csv_err)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let rd = BufReader::new(File::open(path)?);
    let mut cr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(rd);
    cr.deserialize().map(|r| r.map_err(csv_err)).collect()
}

/// Columns `iter, energy, grad_norm, step`.
pub fn write_iter_log(path: &Path, meta: &ArtifactMeta, log: &[IterRecord]) -> Result<()> {
    write_rows(path, meta, log)
}

pub fn read_iter_log(path: &Path) -> Result<Vec<IterRecord>> {
    read_rows(path)
}

/// One lattice point of a horizontal slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub beta2: f64,
    pub director_x: f64,
    pub director_y: f64,
    pub director_z: f64,
    /// `Q33 / 2`.
    pub q3: f64,
}

pub(crate) fn point_row(q: &QTensor, prob: &WellProblem, x: f64, y: f64, z: f64) -> SliceRow {
    let d = sign_normalize(eigen_frame(q).director());
    let nd = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    SliceRow {
        x,
        y,
        z,
        beta2: biaxiality(q, &prob.material),
        director_x: d[0] / nd,
        director_y: d[1] / nd,
        director_z: d[2] / nd,
        q3: 0.5 * q.q33(),
    }
}

/// `n` equispaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Rows of the slice at height `z` on an `n x n` lattice, `x` fastest.
pub fn slice_rows(f: &SpectralField, prob: &WellProblem, z: f64, n: usize) -> Result<Vec<SliceRow>> {
    let xs = linspace(-1.0, 1.0, n);
    let v = prob.grid.sample_lattice(f, &xs, &xs, &[z])?;
    let mut rows = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            rows.push(point_row(&v.q_at(i, j, 0), prob, xs[i], xs[j], z));
        }
    }
    Ok(rows)
}

/// Slices at `z = 0`, `eps/2` and `eps` as `slice_z0.csv`, `slice_zmid.csv`
/// and `slice_ztop.csv` in `dir`.
pub fn write_slices(dir: &Path, f: &SpectralField, prob: &WellProblem, n: usize, meta: &ArtifactMeta) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for (name, z) in [("slice_z0.csv", 0.0), ("slice_zmid.csv", 0.5 * prob.eps), ("slice_ztop.csv", prob.eps)] {
        let path = dir.join(name);
        write_rows(&path, meta, slice_rows(f, prob, z, n)?)?;
        out.push(path);
    }
    Ok(out)
}

/// One node of a reduced 2D state, in the well frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedRow {
    pub x: f64,
    pub y: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub beta2: f64,
}

pub fn reduced_rows(st: &ReducedState) -> Vec<ReducedRow> {
    let g = &st.grid;
    let mut rows = Vec::new();
    for i in 0..g.n {
        for j in 0..g.n {
            if g.node_kind(i, j) == NodeKind::Outside {
                continue;
            }
            let (x, y) = g.xy(i, j);
            rows.push(ReducedRow {
                x,
                y,
                q1: st.q1[[i, j]],
                q2: st.q2[[i, j]],
                q3: st.q3[[i, j]],
                beta2: biaxiality(&st.q_tensor(i, j), &st.material),
            });
        }
    }
    rows
}

/// Columns `x, y, q1, q2, q3, beta2` over all domain nodes.
pub fn write_reduced_csv(path: &Path, meta: &ArtifactMeta, st: &ReducedState) -> Result<()> {
    write_rows(path, meta, reduced_rows(st))
}
