//! Parameter sweeps. For every entry of an outer list a predicate is bisected
//! along an inner parameter; rows run on a rayon pool of the requested size
//! and are merged by index.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::tables::write_rows;
use crate::io::{write_json, ArtifactMeta};
use crate::minimize::{classify, lbfgs, make_initial, smallest_eigenvalue, InitialCondition, SolutionClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    /// Predicate holds at the lower end and fails at the upper end.
    Bracketed,
    /// Predicate fails at both ends.
    NoTransition,
    /// Predicate holds at both ends.
    AlwaysHolds,
    /// Predicate fails at the lower end and holds at the upper end.
    Inverted,
}

/// One minimization in a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Value of the bisected parameter.
    pub value: f64,
    pub class: SolutionClass,
    pub converged: bool,
    pub iterations: usize,
    pub energy: f64,
    pub lambda1: Option<f64>,
    /// Predicate outcome.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    /// Value of the outer parameter.
    pub parameter: f64,
    pub status: RowStatus,
    /// Last probed value where the predicate holds and first where it fails.
    pub bracket: Option<[f64; 2]>,
    /// Bracket midpoint (geometric on a log scale).
    pub critical: Option<f64>,
    /// Whether every probe of the row converged.
    pub converged: bool,
    /// Probes in the order they ran.
    pub probes: Vec<Probe>,
}

impl SweepRow {
    /// The probes at the two ends of the final bracket.
    pub fn bracket_probes(&self) -> Option<(&Probe, &Probe)> {
        let [a, b] = self.bracket?;
        let pa = self.probes.iter().rev().find(|p| p.value == a)?;
        let pb = self.probes.iter().rev().find(|p| p.value == b)?;
        Some((pa, pb))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Critical `lambda_bar_sq` of the WORS against lateral anchoring `W`.
    Bifurcation,
    /// Critical plate anchoring `Wz` of the escaped branch against `eps`.
    Escaped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub parameter: String,
    pub variable: String,
    /// Bisection runs on `log10` of the variable.
    pub log_scale: bool,
    /// Final bracket width, in the bisected coordinate.
    pub tol: f64,
    pub rows: Vec<SweepRow>,
}

/// Bisects `probe` on `[lo, hi]` until the bracket is at most `tol` wide.
pub fn bisect<F>(lo: f64, hi: f64, tol: f64, log_scale: bool, mut probe: F) -> Result<(RowStatus, Option<[f64; 2]>, Vec<Probe>)>
where
    F: FnMut(f64) -> Result<Probe>,
{
    let to = |v: f64| if log_scale { v.log10() } else { v };
    let from = |t: f64| if log_scale { 10f64.powf(t) } else { t };
    let a = probe(lo)?;
    let b = probe(hi)?;
    let status = match (a.holds, b.holds) {
        (true, false) => RowStatus::Bracketed,
        (false, false) => RowStatus::NoTransition,
        (true, true) => RowStatus::AlwaysHolds,
        (false, true) => RowStatus::Inverted,
    };
    let mut probes = vec![a, b];
    if status != RowStatus::Bracketed {
        return Ok((status, None, probes));
    }
    let (mut v0, mut v1) = (lo, hi);
    while to(v1) - to(v0) > tol {
        let vm = from(0.5 * (to(v0) + to(v1)));
        let p = probe(vm)?;
        if p.holds {
            v0 = vm;
        } else {
            v1 = vm;
        }
        probes.push(p);
    }
    Ok((status, Some([v0, v1]), probes))
}

/// Runs `f(0..n)` on a pool of `workers` threads, results in index order.
pub fn run_rows<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start the worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect::<Vec<_>>()).into_iter().collect()
}

fn row(index: usize, parameter: f64, log_scale: bool, out: (RowStatus, Option<[f64; 2]>, Vec<Probe>)) -> SweepRow {
    let (status, bracket, probes) = out;
    let critical = bracket.map(|[a, b]| if log_scale { (a * b).sqrt() } else { 0.5 * (a + b) });
    SweepRow { index, parameter, status, bracket, critical, converged: probes.iter().all(|p| p.converged), probes }
}

/// Diagonal start at lateral anchoring `w`; holds when the result is a WORS.
pub fn bifurcation_probe(cfg: &RunConfig, w: f64, lambda_bar_sq: f64) -> Result<Probe> {
    let mut anch = cfg.anchoring;
    anch.w1 = w;
    anch.w2 = w;
    let prob = cfg.problem_at(lambda_bar_sq, cfg.bifurcation.eps, anch)?;
    let f0 = make_initial(&InitialCondition::diagonal(), &prob)?;
    let r = lbfgs(&prob, &f0, &cfg.lbfgs)?;
    let class = classify(&r.field, &prob)?;
    Ok(Probe {
        value: lambda_bar_sq,
        class,
        converged: r.converged,
        iterations: r.iterations,
        energy: r.breakdown.total,
        lambda1: None,
        holds: class == SolutionClass::Wors,
    })
}

/// Escaped start at plate anchoring `wz`; holds when the result is a
/// converged escaped state with a positive smallest Hessian eigenvalue.
pub fn escaped_probe(cfg: &RunConfig, eps: f64, wz: f64) -> Result<Probe> {
    let mut anch = cfg.anchoring;
    anch.wz = wz;
    let prob = cfg.problem_at(cfg.escaped.lambda_bar_sq, eps, anch)?;
    let f0 = make_initial(&InitialCondition::EscapedMinus, &prob)?;
    let r = lbfgs(&prob, &f0, &cfg.lbfgs)?;
    let class = classify(&r.field, &prob)?;
    let escaped = matches!(class, SolutionClass::EscapedMinus | SolutionClass::EscapedPlus);
    let stab = if escaped && r.converged {
        let mut opts = cfg.stability.options;
        opts.seed = cfg.seed;
        Some(smallest_eigenvalue(&prob, &r.field, cfg.stability.method, &opts)?)
    } else {
        None
    };
    Ok(Probe {
        value: wz,
        class,
        converged: r.converged,
        iterations: r.iterations,
        energy: r.breakdown.total,
        lambda1: stab.as_ref().map(|s| s.lambda1),
        holds: stab.is_some_and(|s| s.stable),
    })
}

pub fn sweep_bifurcation(cfg: &RunConfig, workers: usize) -> Result<SweepResult> {
    let b = &cfg.bifurcation;
    let rows = run_rows(b.w_list.len(), workers, |i| {
        let w = b.w_list[i];
        let out = bisect(b.lambda_min, b.lambda_max, b.tol, false, |l| bifurcation_probe(cfg, w, l))?;
        Ok(row(i, w, false, out))
    })?;
    Ok(SweepResult {
        kind: SweepKind::Bifurcation,
        parameter: "w".into(),
        variable: "lambda_bar_sq".into(),
        log_scale: false,
        tol: b.tol,
        rows,
    })
}

pub fn sweep_escaped(cfg: &RunConfig, workers: usize) -> Result<SweepResult> {
    let e = &cfg.escaped;
    let rows = run_rows(e.eps_list.len(), workers, |i| {
        let eps = e.eps_list[i];
        let out = bisect(e.wz_min, e.wz_max, e.tol, true, |wz| escaped_probe(cfg, eps, wz))?;
        Ok(row(i, eps, true, out))
    })?;
    Ok(SweepResult {
        kind: SweepKind::Escaped,
        parameter: "eps".into(),
        variable: "wz".into(),
        log_scale: true,
        tol: e.tol,
        rows,
    })
}

#[derive(Serialize)]
struct TableRow {
    index: usize,
    parameter: f64,
    status: RowStatus,
    lower: Option<f64>,
    upper: Option<f64>,
    critical: Option<f64>,
    converged: bool,
    probes: usize,
}

/// `<stem>.json` with the full transcript and `<stem>.csv` with one line per row.
pub fn write_sweep(dir: &Path, stem: &str, res: &SweepResult, meta: &ArtifactMeta) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), meta, res)?;
    write_rows(
        &dir.join(format!("{stem}.csv")),
        meta,
        res.rows.iter().map(|r| TableRow {
            index: r.index,
            parameter: r.parameter,
            status: r.status,
            lower: r.bracket.map(|b| b[0]),
            upper: r.bracket.map(|b| b[1]),
            critical: r.critical,
            converged: r.converged,
            probes: r.probes.len(),
        }),
    )
}
