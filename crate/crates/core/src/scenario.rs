//! PAC probability intervals for transition probabilities, computed from
//! sample counts alone.
//!
//! For `N` i.i.d. noise samples of which `n_out` fall outside a region, the
//! true probability of landing inside lies in `[p_low, p_up]` with
//! confidence at least `1 - beta`. Both bounds are roots of binomial tail
//! equations in the success probability; they are solved by bisection on
//! `[0, 1]`, with the tails evaluated in log space so that sample counts up
//! to about `1e5` and confidence levels down to `1e-12` stay well inside
//! f64 range. A per-`(N, beta)` table caches all `N + 1` rows since the
//! same counts recur for every transition of an abstraction.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use thiserror::Error;

/// Default absolute tolerance on the probability root.
pub const ROOT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("confidence parameter beta must lie in (0, 1), got {0}")]
    InvalidBeta(f64),
    #[error("sample count N must be at least 1")]
    EmptySampleSet,
    #[error("count {count} out of range for N = {n}")]
    CountOutOfRange { count: usize, n: usize },
    #[error("interval table built for N = {expected}, queried with N = {got}")]
    TableMismatch { expected: usize, got: usize },
    #[error("table file malformed: {0}")]
    MalformedTable(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Probability interval `[low, up]` with `0 <= low <= up <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbInterval {
    pub low: f64,
    pub up: f64,
}

impl ProbInterval {
    pub fn new(low: f64, up: f64) -> Self {
        assert!(
            (0.0..=1.0).contains(&low) && (0.0..=1.0).contains(&up) && low <= up,
            "invalid probability interval [{low}, {up}]"
        );
        Self { low, up }
    }

    pub fn width(&self) -> f64 {
        self.up - self.low
    }

    pub fn contains(&self, p: f64) -> bool {
        p >= self.low && p <= self.up
    }
}

fn validate(n: usize, beta: f64, n_out: usize) -> Result<(), ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::EmptySampleSet);
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ScenarioError::InvalidBeta(beta));
    }
    if n_out > n {
        return Err(ScenarioError::CountOutOfRange { count: n_out, n });
    }
    Ok(())
}

/// `log( sum_{i=0}^{k} C(N,i) (1-p)^i p^{N-i} )` for `0 < p < 1`.
///
/// Terms follow the ratio recurrence in log space; the final reduction is a
/// log-sum-exp with compensated summation of the scaled mantissas.
fn log_lower_tail(n: usize, k: usize, p: f64) -> f64 {
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut log_terms = Vec::with_capacity(k + 1);
    let mut lt = n as f64 * lp; // i = 0 term
    log_terms.push(lt);
    for i in 0..k {
        lt += ((n - i) as f64 / (i + 1) as f64).ln() + lq - lp;
        log_terms.push(lt);
    }
    log_sum_exp(&log_terms)
}

/// `log( sum_{i=k}^{N} C(N,i) (1-p)^i p^{N-i} )` for `0 < p < 1`.
fn log_upper_tail(n: usize, k: usize, p: f64) -> f64 {
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut log_terms = Vec::with_capacity(n - k + 1);
    let mut lt = n as f64 * lq; // i = N term
    log_terms.push(lt);
    for i in (k..n).rev() {
        // move from term i+1 down to term i
        lt += ((i + 1) as f64 / (n - i) as f64).ln() + lp - lq;
        log_terms.push(lt);
    }
    log_sum_exp(&log_terms)
}

fn log_sum_exp(log_terms: &[f64]) -> f64 {
    let m = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Kahan-compensated sum of the rescaled terms
    let mut sum = 0.0;
    let mut c = 0.0;
    for &t in log_terms {
        let y = (t - m).exp() - c;
        let s = sum + y;
        c = (s - sum) - y;
        sum = s;
    }
    m + sum.ln()
}

/// Bisect `f` (increasing in `p`) for the root of `f(p) = target` on (0, 1).
fn bisect_increasing(target: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        if hi - lo <= tol.max(f64::EPSILON) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lower PAC bound: `0` when `n_out = N`, otherwise the unique root of
/// `beta/(2N) = sum_{i=0}^{n_out} C(N,i)(1-p)^i p^{N-i}`.
///
/// The bisection runs to an x-precision of `tol / N`; the tail's derivative
/// in `p` is bounded by `N`, so the residual in the tail value itself stays
/// within `tol` of the target.
pub fn p_low(n: usize, beta: f64, n_out: usize, tol: f64) -> Result<f64, ScenarioError> {
    validate(n, beta, n_out)?;
    if n_out == n {
        return Ok(0.0);
    }
    let log_target = (beta / (2.0 * n as f64)).ln();
    Ok(bisect_increasing(log_target, tol / n as f64, |p| {
        log_lower_tail(n, n_out, p)
    }))
}

/// Upper PAC bound: `1` when `n_out = 0`, otherwise the unique root of
/// `beta/(2N) = 1 - sum_{i=0}^{n_out-1} C(N,i)(1-p)^i p^{N-i}`.
pub fn p_up(n: usize, beta: f64, n_out: usize, tol: f64) -> Result<f64, ScenarioError> {
    validate(n, beta, n_out)?;
    if n_out == 0 {
        return Ok(1.0);
    }
    // the complement of the partial sum is the upper tail from n_out, which
    // is decreasing in p; negate to reuse the increasing bisection
    let log_target = -(beta / (2.0 * n as f64)).ln();
    Ok(bisect_increasing(log_target, tol / n as f64, |p| {
        -log_upper_tail(n, n_out, p)
    }))
}

/// PAC interval for a transition observed with `n_out` samples outside.
pub fn interval(n: usize, beta: f64, n_out: usize) -> Result<ProbInterval, ScenarioError> {
    let low = p_low(n, beta, n_out, ROOT_TOL)?;
    let up = p_up(n, beta, n_out, ROOT_TOL)?;
    Ok(ProbInterval::new(low, up))
}

/// Frequentist point estimate `n_in / N`.
pub fn frequentist(n: usize, n_in: usize) -> Result<f64, ScenarioError> {
    if n == 0 {
        return Err(ScenarioError::EmptySampleSet);
    }
    if n_in > n {
        return Err(ScenarioError::CountOutOfRange { count: n_in, n });
    }
    Ok(n_in as f64 / n as f64)
}

/// Hoeffding baseline: `n_in/N ± sqrt(log(2/beta) / (2N))`, clamped to `[0, 1]`.
pub fn hoeffding_interval(n: usize, beta: f64, n_in: usize) -> Result<ProbInterval, ScenarioError> {
    validate(n, beta, n_in)?;
    let eps = ((2.0 / beta).ln() / (2.0 * n as f64)).sqrt();
    let mid = n_in as f64 / n as f64;
    Ok(ProbInterval::new(
        (mid - eps).max(0.0),
        (mid + eps).min(1.0),
    ))
}

/// All `N + 1` PAC intervals for a fixed `(N, beta)`, indexed by `n_out`.
#[derive(Debug, Clone)]
pub struct IntervalTable {
    n: usize,
    beta: f64,
    rows: Vec<ProbInterval>,
}

impl IntervalTable {
    pub fn build(n: usize, beta: f64) -> Result<Self, ScenarioError> {
        validate(n, beta, 0)?;
        let rows = (0..=n)
            .into_par_iter()
            .map(|n_out| interval(n, beta, n_out))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { n, beta, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn row(&self, n_out: usize) -> Result<ProbInterval, ScenarioError> {
        self.rows
            .get(n_out)
            .copied()
            .ok_or(ScenarioError::CountOutOfRange {
                count: n_out,
                n: self.n,
            })
    }

    /// Plain-text persistence: header `N beta`, then one `n_out p_low p_up`
    /// line per row with 12 significant digits.
    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let mut out = String::new();
        let _ = writeln!(out, "{} {:.11e}", self.n, self.beta);
        for (n_out, row) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "{} {:.11e} {:.11e}", n_out, row.low, row.up);
        }
        std::fs::write(path, out).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ScenarioError::MalformedTable("empty file".into()))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ScenarioError::MalformedTable("bad N in header".into()))?;
        let beta: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ScenarioError::MalformedTable("bad beta in header".into()))?;
        let mut rows = Vec::with_capacity(n + 1);
        for (i, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            let n_out: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ScenarioError::MalformedTable(format!("line {}", i + 2)))?;
            if n_out != i {
                return Err(ScenarioError::MalformedTable(format!(
                    "row {} labeled {}",
                    i, n_out
                )));
            }
            let low: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ScenarioError::MalformedTable(format!("line {}", i + 2)))?;
            let up: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ScenarioError::MalformedTable(format!("line {}", i + 2)))?;
            rows.push(ProbInterval::new(low, up));
        }
        if rows.len() != n + 1 {
            return Err(ScenarioError::MalformedTable(format!(
                "expected {} rows, found {}",
                n + 1,
                rows.len()
            )));
        }
        Ok(Self { n, beta, rows })
    }
}

/// In-memory cache of interval tables keyed by `(N, beta)`.
#[derive(Debug, Default)]
pub struct TableCache {
    map: Mutex<HashMap<(usize, u64), Arc<IntervalTable>>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(&self, n: usize, beta: f64) -> Result<Arc<IntervalTable>, ScenarioError> {
        let key = (n, beta.to_bits());
        if let Some(t) = self.map.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(IntervalTable::build(n, beta)?);
        self.map
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&table));
        Ok(table)
    }
}
