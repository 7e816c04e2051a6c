//! Artifact files: coefficient and restart files, iterate logs, CSV tables,
//! legacy-VTK exports and JSON documents. Every file carries the code version
//! and the hash of the configuration that produced it.

pub mod coeffs;
pub mod tables;
pub mod vtk;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy::WellProblem;
use crate::error::Result;
use crate::spectral::GridSpec;
use crate::tensor::MaterialParams;
use crate::energy::AnchoringConfig;

pub use coeffs::{load_coeffs, load_restart, save_coeffs, save_restart, CoeffFormat, CoeffHeader};
pub use tables::{read_iter_log, write_iter_log, write_reduced_csv, write_slices, ReducedRow, SliceRow};
pub use vtk::{export_vtk, Lattice};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Provenance stamped on every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub code_version: String,
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>) -> Self {
        ArtifactMeta { code_version: CODE_VERSION.to_string(), config_hash: config_hash.into() }
    }

    /// Stamp for an artifact produced from the serializable `config`.
    pub fn for_config<T: Serialize>(config: &T) -> Self {
        ArtifactMeta::new(hash_json(config))
    }

    /// `# code_version: ...` and `# config_hash: ...` lines.
    pub fn comment_lines(&self) -> String {
        format!("# code_version: {}\n# config_hash: {}\n", self.code_version, self.config_hash)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the compact JSON serialization.
pub fn hash_json<T: Serialize>(v: &T) -> String {
    sha256_hex(&serde_json::to_vec(v).expect("serializable value"))
}

#[derive(Serialize)]
struct ProblemKey<'a> {
    lambda_bar_sq: f64,
    eps: f64,
    delta: f64,
    material: &'a MaterialParams,
    anchoring: &'a AnchoringConfig,
    grid: &'a GridSpec,
}

/// Hash of everything that defines the discrete energy of `prob`.
pub fn problem_hash(prob: &WellProblem) -> String {
    hash_json(&ProblemKey {
        lambda_bar_sq: prob.lambda_bar_sq,
        eps: prob.eps,
        delta: prob.delta,
        material: &prob.material,
        anchoring: &prob.anchoring,
        grid: &prob.grid.spec,
    })
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    meta: &'a ArtifactMeta,
    #[serde(flatten)]
    body: &'a T,
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Pretty JSON with `code_version` and `config_hash` merged into the top
/// level of `body`, which must serialize as a map.
pub fn write_json<T: Serialize>(path: &Path, meta: &ArtifactMeta, body: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &Stamped { meta, body })?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BasisKind;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn problem_hash_tracks_the_energy() {
        let spec = GridSpec::new(BasisKind::Chebyshev, 3, 3, 2);
        let p = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), spec).unwrap();
        let q = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), spec).unwrap();
        assert_eq!(problem_hash(&p), problem_hash(&q));
        let r = q.clone().with_delta(0.2).unwrap();
        assert_ne!(problem_hash(&p), problem_hash(&r));
        let s = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::uniform(1e-3, 1e-2), spec).unwrap();
        assert_ne!(problem_hash(&p), problem_hash(&s));
    }

    #[test]
    fn json_artifacts_are_stamped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let meta = ArtifactMeta::new("abc");
        #[derive(Serialize)]
        struct Body {
            x: f64,
        }
        write_json(&path, &meta, &Body { x: 1.5 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["code_version"], CODE_VERSION);
        assert_eq!(v["x"], 1.5);
    }
}
