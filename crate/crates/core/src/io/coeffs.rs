//! Coefficient files in binary and CSV form, and restart files.
//!
//! Binary layout (little endian): the 8-byte magic `NWCOEF\0\x01`, a `u32`
//! header length, the header as JSON, a `u64` value count, then the values
//! as `f64` in the flat coefficient order (component-major, then `l`, `m`,
//! `n`). The CSV form starts with `#` comment lines, one of which holds the
//! same JSON header, followed by `comp,l,m,n,value` rows in the same order.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::{create, problem_hash, ArtifactMeta};
use crate::energy::WellProblem;
use crate::error::{Error, Result};
use crate::spectral::{BasisKind, SpectralField, SpectralGrid, ORDERING_VERSION};

const MAGIC: &[u8; 8] = b"NWCOEF\0\x01";
const HEADER_PREFIX: &str = "# header: ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffFormat {
    Binary,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffHeader {
    pub ordering_version: u32,
    pub lateral: BasisKind,
    pub vertical: BasisKind,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub eps: f64,
    /// `(5, nl, nm, nn)`.
    pub shape: [usize; 4],
    pub code_version: String,
    pub config_hash: String,
    /// Present in restart files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_hash: Option<String>,
}

impl CoeffHeader {
    pub fn new(grid: &SpectralGrid, meta: &ArtifactMeta) -> Self {
        let (a, b, c) = grid.mode_shape();
        CoeffHeader {
            ordering_version: ORDERING_VERSION,
            lateral: grid.spec.lateral,
            vertical: BasisKind::Chebyshev,
            l: grid.spec.l,
            m: grid.spec.m,
            n: grid.spec.n,
            eps: grid.eps,
            shape: [5, a, b, c],
            code_version: meta.code_version.clone(),
            config_hash: meta.config_hash.clone(),
            problem_hash: None,
        }
    }

    fn count(&self) -> usize {
        self.shape.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.ordering_version != ORDERING_VERSION {
            return Err(Error::Format(format!(
                "coefficient ordering version {} is not supported (expected {ORDERING_VERSION})",
                self.ordering_version
            )));
        }
        if self.shape[0] != 5 {
            return Err(Error::Format(format!("expected 5 components, header says {}", self.shape[0])));
        }
        Ok(())
    }

    /// Checks that the file was written for a grid with the same truncation.
    pub fn check_grid(&self, grid: &SpectralGrid) -> Result<()> {
        let (a, b, c) = grid.mode_shape();
        if self.lateral != grid.spec.lateral || self.shape != [5, a, b, c] {
            return Err(Error::Shape(format!(
                "file holds {:?} coefficients of shape {:?}, grid expects {:?} of shape {:?}",
                self.lateral,
                self.shape,
                grid.spec.lateral,
                [5, a, b, c]
            )));
        }
        Ok(())
    }
}

fn to_array(header: &CoeffHeader, values: Vec<f64>) -> Result<Array4<f64>> {
    let [c, a, b, d] = header.shape;
    Array4::from_shape_vec((c, a, b, d), values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_binary<W: Write>(mut w: W, header: &CoeffHeader, coeffs: &Array4<f64>) -> Result<()> {
    if coeffs.shape() != header.shape {
        return Err(Error::Shape(format!("header shape {:?} vs coefficients {:?}", header.shape, coeffs.shape())));
    }
    let h = serde_json::to_vec(header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(h.len() as u32).to_le_bytes())?;
    w.write_all(&h)?;
    w.write_all(&(coeffs.len() as u64).to_le_bytes())?;
    for v in coeffs.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<(CoeffHeader, Array4<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a binary coefficient file".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let mut h = vec![0u8; u32::from_le_bytes(u32b) as usize];
    r.read_exact(&mut h)?;
    let header: CoeffHeader = serde_json::from_slice(&h).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    header.validate()?;
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let count = u64::from_le_bytes(u64b) as usize;
    if count != header.count() {
        return Err(Error::Format(format!("header shape {:?} but {count} values", header.shape)));
    }
    let mut raw = vec![0u8; 8 * count];
    r.read_exact(&mut raw)?;
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after coefficients".into()));
    }
    Ok((header.clone(), to_array(&header, values)?))
}

#[derive(Serialize, Deserialize)]
struct CoeffRow {
    comp: usize,
    l: usize,
    m: usize,
    n: usize,
    value: f64,
}

pub fn write_csv<W: Write>(mut w: W, header: &CoeffHeader, coeffs: &Array4<f64>) -> Result<()> {
    if coeffs.shape() != header.shape {
        return Err(Error::Shape(format!("header shape {:?} vs coefficients {:?}", header.shape, coeffs.shape())));
    }
    writeln!(w, "# code_version: {}", header.code_version)?;
    writeln!(w, "# config_hash: {}", header.config_hash)?;
    writeln!(
        w,
        "# basis: {:?} x {:?} x Chebyshev, L = {}, M = {}, N = {}, eps = {}, ordering version {}",
        header.lateral, header.lateral, header.l, header.m, header.n, header.eps, header.ordering_version
    )?;
    writeln!(w, "{HEADER_PREFIX}{}", serde_json::to_string(header)?)?;
    let mut cw = csv::Writer::from_writer(w);
    for ((comp, l, m, n), &value) in coeffs.indexed_iter() {
        cw.serialize(CoeffRow { comp, l, m, n, value }).map_err(csv_err)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<(CoeffHeader, Array4<f64>)> {
    let mut r = BufReader::new(r);
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let header_line = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(HEADER_PREFIX))
        .ok_or_else(|| Error::Format("coefficient CSV without a header line".into()))?;
    let header: CoeffHeader =
        serde_json::from_str(header_line).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    header.validate()?;
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let [_, a, b, c] = header.shape;
    let mut values = Vec::with_capacity(header.count());
    for (k, row) in rd.deserialize::<CoeffRow>().enumerate() {
        let row = row.map_err(csv_err)?;
        let expect = (k / (a * b * c), (k / (b * c)) % a, (k / c) % b, k % c);
        if (row.comp, row.l, row.m, row.n) != expect {
            return Err(Error::Format(format!("row {k} has index {:?}, expected {expect:?}", (row.comp, row.l, row.m, row.n))));
        }
        values.push(row.value);
    }
    if values.len() != header.count() {
        return Err(Error::Format(format!("header shape {:?} but {} rows", header.shape, values.len())));
    }
    Ok((header.clone(), to_array(&header, values)?))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Format(format!("{k:?}")),
    }
}

pub fn save_coeffs(path: &Path, format: CoeffFormat, header: &CoeffHeader, f: &SpectralField) -> Result<()> {
    let w = create(path)?;
    match format {
        CoeffFormat::Binary => write_binary(w, header, &f.coeffs),
        CoeffFormat::Csv => write_csv(w, header, &f.coeffs),
    }
}

/// Reads either format, told apart by the magic bytes.
pub fn load_coeffs(path: &Path) -> Result<(CoeffHeader, SpectralField)> {
    let mut r = BufReader::new(File::open(path)?);
    let binary = r.fill_buf()?.starts_with(MAGIC);
    let (h, coeffs) = if binary { read_binary(r)? } else { read_csv(r)? };
    Ok((h, SpectralField { coeffs }))
}

/// Binary coefficient file stamped with the problem hash.
pub fn save_restart(path: &Path, prob: &WellProblem, f: &SpectralField, meta: &ArtifactMeta) -> Result<()> {
    let mut h = CoeffHeader::new(&prob.grid, meta);
    h.problem_hash = Some(problem_hash(prob));
    save_coeffs(path, CoeffFormat::Binary, &h, f)
}

/// Loads a restart file, refusing files written for a different problem.
pub fn load_restart(path: &Path, prob: &WellProblem) -> Result<SpectralField> {
    let (h, f) = load_coeffs(path)?;
    h.check_grid(&prob.grid)?;
    let want = problem_hash(prob);
    match h.problem_hash {
        Some(ref got) if *got == want => Ok(f),
        Some(got) => Err(Error::Config(format!(
            "restart file {} was written for problem {got}, this problem is {want}",
            path.display()
        ))),
        None => Err(Error::Config(format!("{} carries no problem hash", path.display()))),
    }
}

/// Loads a coefficient file for `prob` without requiring a matching problem
/// hash, only a matching truncation.
pub fn load_field_for(path: &Path, prob: &WellProblem) -> Result<SpectralField> {
    let (h, f) = load_coeffs(path)?;
    h.check_grid(&prob.grid)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::AnchoringConfig;
    use crate::spectral::GridSpec;
    use crate::tensor::MaterialParams;
    use proptest::prelude::*;

    fn header(shape: [usize; 4]) -> CoeffHeader {
        CoeffHeader {
            ordering_version: ORDERING_VERSION,
            lateral: BasisKind::Chebyshev,
            vertical: BasisKind::Chebyshev,
            l: (shape[1] + 1) / 2,
            m: (shape[2] + 1) / 2,
            n: shape[3],
            eps: 1.0,
            shape,
            code_version: "test".into(),
            config_hash: "0".into(),
            problem_hash: None,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn both_formats_reproduce_every_bit(
            a in 1usize..4, b in 1usize..4, c in 1usize..4,
            bits in proptest::collection::vec(any::<u64>(), 80),
        ) {
            let shape = [5, 2 * a - 1, 2 * b - 1, c];
            let count: usize = shape.iter().product();
            let values: Vec<f64> = (0..count)
                .map(|k| {
                    let v = f64::from_bits(bits[k % bits.len()].rotate_left(k as u32));
                    if v.is_finite() { v } else { k as f64 * 0.1 }
                })
                .collect();
            let arr = Array4::from_shape_vec((5, shape[1], shape[2], shape[3]), values).unwrap();
            let h = header(shape);
            let mut bin = Vec::new();
            write_binary(&mut bin, &h, &arr).unwrap();
            let (hb, back) = read_binary(bin.as_slice()).unwrap();
            prop_assert_eq!(&hb, &h);
            prop_assert!(back.iter().zip(arr.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            let mut txt = Vec::new();
            write_csv(&mut txt, &h, &arr).unwrap();
            let (hc, back) = read_csv(txt.as_slice()).unwrap();
            prop_assert_eq!(&hc, &h);
            prop_assert!(back.iter().zip(arr.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn flat_order_is_component_major() {
        let h = header([5, 1, 3, 2]);
        let arr = Array4::from_shape_fn((5, 1, 3, 2), |(c, l, m, n)| (1000 * c + 100 * l + 10 * m + n) as f64);
        let mut bin = Vec::new();
        write_binary(&mut bin, &h, &arr).unwrap();
        let start = bin.len() - 8 * 30;
        let vals: Vec<f64> = bin[start..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(&vals[..7], &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0, 1000.0]);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let h = header([5, 1, 1, 2]);
        let arr = Array4::zeros((5, 1, 1, 2));
        let mut bin = Vec::new();
        write_binary(&mut bin, &h, &arr).unwrap();
        assert!(read_binary(&bin[..bin.len() - 3]).is_err());
        let mut extra = bin.clone();
        extra.push(0);
        assert!(matches!(read_binary(extra.as_slice()), Err(Error::Format(_))));
        let mut v2 = header([5, 1, 1, 2]);
        v2.ordering_version = 2;
        let mut bin2 = Vec::new();
        write_binary(&mut bin2, &v2, &arr).unwrap();
        assert!(matches!(read_binary(bin2.as_slice()), Err(Error::Format(_))));
        let mut txt = Vec::new();
        write_csv(&mut txt, &h, &arr).unwrap();
        let s = String::from_utf8(txt).unwrap().replace("0,0,0,1,", "0,0,0,7,");
        assert!(matches!(read_csv(s.as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn restart_needs_the_same_problem() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::new(BasisKind::Chebyshev, 2, 2, 2);
        let p = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), spec).unwrap();
        let mut f = p.grid.zero_field();
        f.flat_mut().iter_mut().enumerate().for_each(|(k, v)| *v = k as f64 / 7.0);
        let path = dir.path().join("r.bin");
        save_restart(&path, &p, &f, &ArtifactMeta::new("h")).unwrap();
        assert_eq!(load_restart(&path, &p).unwrap(), f);
        let other = WellProblem::new(6.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), spec).unwrap();
        assert!(matches!(load_restart(&path, &other), Err(Error::Config(_))));
        let finer = WellProblem::new(5.0, 1.0, MaterialParams::default(), AnchoringConfig::default(), GridSpec::new(BasisKind::Chebyshev, 3, 2, 2)).unwrap();
        assert!(matches!(load_restart(&path, &finer), Err(Error::Shape(_))));
        let csv_path = dir.path().join("c.csv");
        save_coeffs(&csv_path, CoeffFormat::Csv, &CoeffHeader::new(&p.grid, &ArtifactMeta::new("h")), &f).unwrap();
        assert!(matches!(load_restart(&csv_path, &p), Err(Error::Config(_))));
        assert_eq!(load_field_for(&csv_path, &p).unwrap(), f);
    }
}
