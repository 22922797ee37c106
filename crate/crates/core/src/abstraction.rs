//! Builds the interval MDP from a grouped system, a partition, and a set
//! of noise samples.
//!
//! States and enabled actions depend only on the dynamics and the grid, so
//! they are computed once and reused while the sample size grows. Since
//! the successor distribution of an action is independent of the state it
//! is taken in, each action carries a single interval row shared by all
//! states enabling it. On a uniform grid with cell-center targets, rows
//! additionally depend only on the cell offset between successor and
//! target, which shrinks the number of unique intervals from
//! `|Act| * |S|` to `prod(2 r_i - 1)` plus one absorbing interval per
//! action; the confidence accounting follows the same counts.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{backward_reachable_set, brs_bounding_box, region_in_brs, GeometryError};
use crate::geometry::{Partition, RegionId};
use crate::imdp::{Imdp, ImdpAction, ImdpError, ImdpMeta, Row};
use crate::linsys::GroupedSystem;
use crate::scenario::{IntervalTable, ScenarioError};

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("sample set is empty")]
    NoSamples,
    #[error("sample {index} has dimension {got}, expected {expected}")]
    SampleDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("interval table built for N = {table}, but the sample set has N = {samples}")]
    TableMismatch { table: usize, samples: usize },
    #[error("counts sum to {got}, expected the sample count {expected}")]
    BadCounts { got: usize, expected: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Imdp(#[from] ImdpError),
}

/// A batch of i.i.d. noise realizations of the grouped system.
#[derive(Debug, Clone)]
pub struct SampleSet {
    data: Vec<DVector<f64>>,
    provenance: String,
}

impl SampleSet {
    pub fn new(data: Vec<DVector<f64>>, provenance: impl Into<String>) -> Result<Self, AbstractionError> {
        if data.is_empty() {
            return Err(AbstractionError::NoSamples);
        }
        let dim = data[0].len();
        for (index, w) in data.iter().enumerate() {
            if w.len() != dim {
                return Err(AbstractionError::SampleDimension {
                    index,
                    got: w.len(),
                    expected: dim,
                });
            }
        }
        Ok(Self {
            data,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data[0].len()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.data.iter()
    }
}

/// An abstract action: steer the noiseless successor onto the center of a
/// grid cell, enabled exactly in the cells fully contained in its backward
/// reachable set.
#[derive(Debug, Clone)]
pub struct ActionDef {
    pub id: usize,
    pub target: DVector<f64>,
    pub enabled_in: Vec<usize>,
}

/// States and enabled actions of the abstraction; independent of the
/// samples, so built once per problem.
#[derive(Debug, Clone)]
pub struct Skeleton {
    pub actions: Vec<ActionDef>,
    num_cells: usize,
}

impl Skeleton {
    /// Cells plus the absorbing state.
    pub fn num_states(&self) -> usize {
        self.num_cells + 1
    }

    pub fn absorbing_state(&self) -> usize {
        self.num_cells
    }

    /// State-action pairs, the absorbing self-loop included.
    pub fn num_choices(&self) -> usize {
        self.actions.iter().map(|a| a.enabled_in.len()).sum::<usize>() + 1
    }
}

/// One action per non-absorbing cell, targeting its center; enabled sets
/// via backward reachability. The absorbing state keeps a single self-loop
/// and no other actions.
pub fn build_states_actions(
    part: &Partition,
    gsys: &GroupedSystem,
) -> Result<Skeleton, AbstractionError> {
    let num_cells = part.num_cells();
    // explicit polytope of the backward reachable set when the dynamics
    // allow it, with a bounding-box prescan; otherwise the per-vertex
    // feasibility fallback over all cells
    let actions: Vec<ActionDef> = (0..num_cells)
        .into_par_iter()
        .map(|a| {
            let target = part.cell_center(a);
            let mut enabled_in = Vec::new();
            match (backward_reachable_set(gsys, &target), brs_bounding_box(gsys, &target)) {
                (Ok(brs), Ok(bbox)) => {
                    for flat in cells_touching(part, bbox.lower(), bbox.upper()) {
                        if brs.contains_box(&part.cell_box(flat), 1e-9) {
                            enabled_in.push(flat);
                        }
                    }
                }
                _ => {
                    for flat in 0..num_cells {
                        if region_in_brs(gsys, &part.cell_box(flat), &target) {
                            enabled_in.push(flat);
                        }
                    }
                }
            }
            enabled_in.sort_unstable();
            ActionDef {
                id: a,
                target,
                enabled_in,
            }
        })
        .collect();
    Ok(Skeleton { actions, num_cells })
}

/// Flat indices of all cells intersecting the axis box `[lo, hi]`.
fn cells_touching(part: &Partition, lo: &DVector<f64>, hi: &DVector<f64>) -> Vec<usize> {
    let n = part.dim();
    let mut ranges = Vec::with_capacity(n);
    for i in 0..n {
        let t0 = ((lo[i] - part.origin()[i]) / part.widths()[i]).floor();
        let t1 = ((hi[i] - part.origin()[i]) / part.widths()[i]).floor();
        let a = (t0.max(0.0) as usize).min(part.counts()[i].saturating_sub(1));
        let b = (t1.max(0.0) as usize).min(part.counts()[i].saturating_sub(1));
        if t1 < 0.0 || t0 >= part.counts()[i] as f64 {
            return Vec::new();
        }
        ranges.push(a..=b);
    }
    let mut out = Vec::new();
    let mut cursor: Vec<usize> = ranges.iter().map(|r| *r.start()).collect();
    loop {
        out.push(part.flat_index(&cursor).expect("in range"));
        let mut dim = n;
        loop {
            if dim == 0 {
                return out;
            }
            dim -= 1;
            if cursor[dim] < *ranges[dim].end() {
                cursor[dim] += 1;
                break;
            }
            cursor[dim] = *ranges[dim].start();
        }
    }
}

/// Per-successor sample counts of one action; counts sum to the sample
/// count, with the absorbing region taking whatever leaves the domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    counts: Vec<(RegionId, usize)>,
    total: usize,
}

impl CountVector {
    pub fn counts(&self) -> &[(RegionId, usize)] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn count_of(&self, id: RegionId) -> usize {
        self.counts
            .iter()
            .find(|(r, _)| *r == id)
            .map_or(0, |&(_, c)| c)
    }
}

/// Classify the shifted samples `d + w_i` over the partition. O(N) grid
/// arithmetic per action.
pub fn count_successors(
    target: &DVector<f64>,
    samples: &SampleSet,
    part: &Partition,
) -> CountVector {
    let mut cells: HashMap<usize, usize> = HashMap::new();
    let mut absorbing = 0usize;
    for w in samples.iter() {
        match part.locate(&(target + w)) {
            RegionId::Cell(flat) => *cells.entry(flat).or_insert(0) += 1,
            RegionId::Absorbing => absorbing += 1,
        }
    }
    let mut counts: Vec<(RegionId, usize)> = cells
        .into_iter()
        .map(|(flat, c)| (RegionId::Cell(flat), c))
        .collect();
    counts.sort_unstable_by_key(|&(r, _)| r);
    if absorbing > 0 {
        counts.push((RegionId::Absorbing, absorbing));
    }
    CountVector {
        counts,
        total: samples.len(),
    }
}

/// Turn successor counts into a sparse interval row via the PAC table.
/// Successors with zero samples are omitted, reading as exactly `[0, 0]`;
/// the absorbing successor is treated like any cell, using its own count.
pub fn intervals_for_action(
    counts: &CountVector,
    table: &IntervalTable,
    absorbing_state: usize,
) -> Result<Row, AbstractionError> {
    let n = table.n();
    if counts.total() != n {
        return Err(AbstractionError::TableMismatch {
            table: n,
            samples: counts.total(),
        });
    }
    let observed: usize = counts.counts().iter().map(|&(_, c)| c).sum();
    if observed != n {
        return Err(AbstractionError::BadCounts {
            got: observed,
            expected: n,
        });
    }
    let mut row = Vec::with_capacity(counts.counts().len());
    for &(region, n_in) in counts.counts() {
        if n_in == 0 {
            continue;
        }
        let state = match region {
            RegionId::Cell(flat) => flat,
            RegionId::Absorbing => absorbing_state,
        };
        row.push((state, table.row(n - n_in)?));
    }
    row.sort_unstable_by_key(|&(s, _)| s);
    Ok(row)
}

/// How per-interval confidence aggregates to a model-level guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceMode {
    /// One union-bound term per (action, successor) pair.
    Generic,
    /// Uniform grid with cell-center targets: intervals depend only on the
    /// successor-target offset, plus one absorbing interval per action.
    Symmetric,
    /// Time-unfolded aggregation scheme with `rho` value bins.
    Aggregated { rho: usize, horizon: usize },
}

/// Links the per-interval confidence `beta` to the whole-model confidence
/// `alpha = beta * (number of unique intervals)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceReport {
    pub beta: f64,
    pub mode: ConfidenceMode,
    pub unique_interval_count: usize,
    pub alpha: f64,
}

impl ConfidenceReport {
    pub fn new(beta: f64, mode: ConfidenceMode, unique_interval_count: usize) -> Self {
        Self {
            beta,
            mode,
            unique_interval_count,
            alpha: beta * unique_interval_count as f64,
        }
    }

    /// The `beta` needed for a whole-model confidence of `1 - alpha`.
    pub fn beta_for_alpha(alpha: f64, mode: ConfidenceMode, part: &Partition, num_actions: usize) -> f64 {
        alpha / unique_interval_count(mode, part, num_actions) as f64
    }
}

/// Number of unique probability intervals the union bound ranges over.
pub fn unique_interval_count(mode: ConfidenceMode, part: &Partition, num_actions: usize) -> usize {
    match mode {
        ConfidenceMode::Generic => num_actions * (part.num_cells() + 1),
        ConfidenceMode::Symmetric => {
            let offsets: usize = part.counts().iter().map(|&r| 2 * r - 1).product();
            offsets + num_actions
        }
        ConfidenceMode::Aggregated { rho, horizon } => rho * horizon * num_actions,
    }
}

/// Assemble the interval MDP for one batch of samples.
///
/// Generic mode counts successors per action by point location. Symmetric
/// mode requires the uniform-grid/center-target structure (which
/// `build_states_actions` produces) and instead histograms the raw samples
/// over cell offsets once, sharing interval objects across actions; the
/// resulting rows are identical to generic mode up to boundary ties of
/// measure zero.
pub fn build_imdp(
    skeleton: &Skeleton,
    part: &Partition,
    samples: &SampleSet,
    table: &IntervalTable,
    mode: ConfidenceMode,
    initial: usize,
) -> Result<(Imdp, ConfidenceReport), AbstractionError> {
    let absorbing = skeleton.absorbing_state();
    let rows: Vec<Row> = match mode {
        ConfidenceMode::Generic | ConfidenceMode::Aggregated { .. } => skeleton
            .actions
            .par_iter()
            .map(|action| {
                let counts = count_successors(&action.target, samples, part);
                intervals_for_action(&counts, table, absorbing)
            })
            .collect::<Result<_, _>>()?,
        ConfidenceMode::Symmetric => symmetric_rows(skeleton, part, samples, table)?,
    };

    let actions: Vec<ImdpAction> = skeleton
        .actions
        .iter()
        .zip(rows)
        .map(|(def, row)| ImdpAction {
            id: def.id,
            enabled_in: def.enabled_in.clone(),
            row: Arc::new(row),
        })
        .collect();

    let num_states = skeleton.num_states();
    let goal = (0..num_states)
        .map(|s| s < part.num_cells() && part.is_goal(s))
        .collect();
    let critical = (0..num_states)
        .map(|s| s < part.num_cells() && part.is_critical(s))
        .collect();
    let report = ConfidenceReport::new(
        table.beta(),
        mode,
        unique_interval_count(mode, part, skeleton.actions.len()),
    );
    let meta = ImdpMeta {
        n_samples: Some(samples.len()),
        beta: Some(table.beta()),
        confidence: Some(report),
    };
    let imdp = Imdp::new(
        num_states,
        initial,
        goal,
        critical,
        Some(absorbing),
        actions,
        meta,
    )?;
    Ok((imdp, report))
}

/// Point-estimate baseline: the same abstraction with the degenerate
/// intervals `[n_in/N, n_in/N]` instead of PAC bounds. Not robust; used to
/// contrast certified values against what naive frequentist probabilities
/// would claim.
pub fn build_frequentist_mdp(
    skeleton: &Skeleton,
    part: &Partition,
    samples: &SampleSet,
    initial: usize,
) -> Result<Imdp, AbstractionError> {
    let absorbing = skeleton.absorbing_state();
    let n = samples.len() as f64;
    let actions: Vec<ImdpAction> = skeleton
        .actions
        .par_iter()
        .map(|def| {
            let counts = count_successors(&def.target, samples, part);
            let mut row: Row = counts
                .counts()
                .iter()
                .filter(|&&(_, c)| c > 0)
                .map(|&(region, c)| {
                    let state = match region {
                        RegionId::Cell(flat) => flat,
                        RegionId::Absorbing => absorbing,
                    };
                    let p = c as f64 / n;
                    (state, crate::scenario::ProbInterval::new(p, p))
                })
                .collect();
            row.sort_unstable_by_key(|&(s, _)| s);
            ImdpAction {
                id: def.id,
                enabled_in: def.enabled_in.clone(),
                row: Arc::new(row),
            }
        })
        .collect();
    let num_states = skeleton.num_states();
    let goal = (0..num_states)
        .map(|s| s < part.num_cells() && part.is_goal(s))
        .collect();
    let critical = (0..num_states)
        .map(|s| s < part.num_cells() && part.is_critical(s))
        .collect();
    let meta = ImdpMeta {
        n_samples: Some(samples.len()),
        beta: None,
        confidence: None,
    };
    Ok(Imdp::new(
        num_states,
        initial,
        goal,
        critical,
        Some(absorbing),
        actions,
        meta,
    )?)
}

/// Histogram the raw samples over relative cell offsets, then instantiate
/// each action's row by shifting the offsets to its own cell. A sample at
/// offset `xi` lands in the successor cell `target_cell + xi` when that
/// cell exists and in the absorbing region otherwise.
fn symmetric_rows(
    skeleton: &Skeleton,
    part: &Partition,
    samples: &SampleSet,
    table: &IntervalTable,
) -> Result<Vec<Row>, AbstractionError> {
    let n = part.dim();
    let counts = part.counts();
    let mut histogram: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut always_absorbing = 0usize;
    for w in samples.iter() {
        let mut offset = Vec::with_capacity(n);
        let mut inside = true;
        for i in 0..n {
            let xi = (w[i] / part.widths()[i] + 0.5).floor();
            if !xi.is_finite() || xi.abs() >= counts[i] as f64 {
                inside = false;
                break;
            }
            offset.push(xi as i64);
        }
        if inside {
            *histogram.entry(offset).or_insert(0) += 1;
        } else {
            always_absorbing += 1;
        }
    }

    // one shared interval per occupied offset
    let offsets: Vec<(Vec<i64>, usize)> = histogram.into_iter().collect();
    let n_total = samples.len();
    let interval_of: Vec<_> = offsets
        .iter()
        .map(|&(_, c)| table.row(n_total - c))
        .collect::<Result<Vec<_>, _>>()?;

    let absorbing = skeleton.absorbing_state();
    skeleton
        .actions
        .par_iter()
        .map(|action| {
            let base = part.multi_index(action.id);
            let mut row: Row = Vec::new();
            let mut absorbed = always_absorbing;
            for (k, (offset, c)) in offsets.iter().enumerate() {
                let mut multi = Vec::with_capacity(n);
                let mut in_grid = true;
                for i in 0..n {
                    let j = base[i] as i64 + offset[i];
                    if j < 0 || j >= counts[i] as i64 {
                        in_grid = false;
                        break;
                    }
                    multi.push(j as usize);
                }
                if in_grid {
                    let flat = part.flat_index(&multi).expect("checked in range");
                    row.push((flat, interval_of[k]));
                } else {
                    absorbed += c;
                }
            }
            if absorbed > 0 {
                row.push((absorbing, table.row(n_total - absorbed)?));
            }
            row.sort_unstable_by_key(|&(s, _)| s);
            Ok(row)
        })
        .collect()
}
