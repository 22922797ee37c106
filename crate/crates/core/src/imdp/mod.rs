//! Interval MDPs, robust value iteration for reach-avoid probabilities,
//! policy extraction, and the time-unfolded state-aggregation scheme.
//!
//! Transition rows are stored once per action and shared by every state
//! enabling that action; the successor distribution of an action does not
//! depend on the state it is taken in, so the model has at most
//! `|Act| * |S|` unique probability intervals.

pub mod explicit;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::abstraction::{ConfidenceMode, ConfidenceReport};
use crate::scenario::ProbInterval;

pub type StateId = usize;
pub type ActionId = usize;

/// Sparse interval row: successors with a nonzero interval, sorted by state.
/// Successors that received no sample mass are omitted and read as exactly
/// `[0, 0]`.
pub type Row = Vec<(StateId, ProbInterval)>;

/// Feasibility slack accepted on `sum(low) <= 1 <= sum(up)`.
const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ImdpError {
    #[error("malformed model: {0}")]
    BadModel(String),
    #[error("action {action}: row admits no distribution (sum low {sum_low}, sum up {sum_up})")]
    InfeasibleRow {
        action: ActionId,
        sum_low: f64,
        sum_up: f64,
    },
    #[error("aggregation resolution rho must be at least 1")]
    BadRho,
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

/// One abstract action: the states it is enabled in and its shared
/// successor-interval row.
#[derive(Debug, Clone)]
pub struct ImdpAction {
    pub id: ActionId,
    pub enabled_in: Vec<StateId>,
    pub row: Arc<Row>,
}

/// Metadata carried along from the abstraction, when the model came from one.
#[derive(Debug, Clone, Default)]
pub struct ImdpMeta {
    pub n_samples: Option<usize>,
    pub beta: Option<f64>,
    pub confidence: Option<ConfidenceReport>,
}

#[derive(Debug, Clone)]
pub struct Imdp {
    num_states: usize,
    initial: StateId,
    goal: Vec<bool>,
    critical: Vec<bool>,
    absorbing: Option<StateId>,
    actions: Vec<ImdpAction>,
    state_actions: Vec<Vec<ActionId>>,
    meta: ImdpMeta,
}

impl Imdp {
    pub fn new(
        num_states: usize,
        initial: StateId,
        goal: Vec<bool>,
        critical: Vec<bool>,
        absorbing: Option<StateId>,
        actions: Vec<ImdpAction>,
        meta: ImdpMeta,
    ) -> Result<Self, ImdpError> {
        if goal.len() != num_states || critical.len() != num_states {
            return Err(ImdpError::BadModel(
                "label vectors must cover every state".into(),
            ));
        }
        if initial >= num_states {
            return Err(ImdpError::BadModel("initial state out of range".into()));
        }
        if let Some(s) = goal.iter().zip(&critical).position(|(g, c)| *g && *c) {
            return Err(ImdpError::BadModel(format!(
                "state {s} is both goal and critical"
            )));
        }
        if let Some(a) = absorbing {
            if a >= num_states {
                return Err(ImdpError::BadModel("absorbing state out of range".into()));
            }
            if goal[a] {
                return Err(ImdpError::BadModel("absorbing state cannot be goal".into()));
            }
        }
        for (idx, action) in actions.iter().enumerate() {
            if action.id != idx {
                return Err(ImdpError::BadModel(format!(
                    "action ids must be dense, found {} at {}",
                    action.id, idx
                )));
            }
            if action.row.is_empty() {
                return Err(ImdpError::BadModel(format!("action {idx} has an empty row")));
            }
            let mut sum_low = 0.0;
            let mut sum_up = 0.0;
            let mut prev: Option<StateId> = None;
            for &(s, iv) in action.row.iter() {
                if s >= num_states {
                    return Err(ImdpError::BadModel(format!(
                        "action {idx}: successor {s} out of range"
                    )));
                }
                if prev.is_some_and(|p| p >= s) {
                    return Err(ImdpError::BadModel(format!(
                        "action {idx}: row not sorted by successor"
                    )));
                }
                prev = Some(s);
                if !(iv.low > 0.0 && iv.low <= iv.up && iv.up <= 1.0) {
                    return Err(ImdpError::BadModel(format!(
                        "action {idx}: interval [{}, {}] on successor {s}; stored intervals \
                         need a positive lower bound, zero-probability successors are omitted",
                        iv.low, iv.up
                    )));
                }
                sum_low += iv.low;
                sum_up += iv.up;
            }
            if sum_low > 1.0 + ROW_TOL || sum_up < 1.0 - ROW_TOL {
                return Err(ImdpError::InfeasibleRow {
                    action: idx,
                    sum_low,
                    sum_up,
                });
            }
            for &s in &action.enabled_in {
                if s >= num_states {
                    return Err(ImdpError::BadModel(format!(
                        "action {idx} enabled in out-of-range state {s}"
                    )));
                }
                if Some(s) == absorbing {
                    return Err(ImdpError::BadModel(
                        "absorbing state only carries its self-loop".into(),
                    ));
                }
            }
        }
        let mut state_actions = vec![Vec::new(); num_states];
        for action in &actions {
            for &s in &action.enabled_in {
                state_actions[s].push(action.id);
            }
        }
        for list in &mut state_actions {
            list.sort_unstable();
        }
        Ok(Self {
            num_states,
            initial,
            goal,
            critical,
            absorbing,
            actions,
            state_actions,
            meta,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn absorbing(&self) -> Option<StateId> {
        self.absorbing
    }

    pub fn is_goal(&self, s: StateId) -> bool {
        self.goal[s]
    }

    pub fn is_critical(&self, s: StateId) -> bool {
        self.critical[s]
    }

    pub fn actions(&self) -> &[ImdpAction] {
        &self.actions
    }

    pub fn enabled_actions(&self, s: StateId) -> &[ActionId] {
        &self.state_actions[s]
    }

    pub fn meta(&self) -> &ImdpMeta {
        &self.meta
    }

    /// Total state-action pairs, the absorbing self-loop included.
    pub fn num_choices(&self) -> usize {
        self.actions.iter().map(|a| a.enabled_in.len()).sum::<usize>()
            + usize::from(self.absorbing.is_some())
    }

    /// Total stored transitions `(s, a, s')`, the absorbing self-loop included.
    pub fn num_transitions(&self) -> usize {
        self.actions
            .iter()
            .map(|a| a.enabled_in.len() * a.row.len())
            .sum::<usize>()
            + usize::from(self.absorbing.is_some())
    }
}

/// Which side of the reach-avoid probability to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Direction of the robust inner problem over a row's interval simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// Extremal expectation of `values` over all distributions consistent with
/// the row, with the witness distribution (aligned with the row).
///
/// Every successor starts at its lower bound; the remaining mass
/// `1 - sum(low)` is pushed greedily toward the worst (`Min`) or best
/// (`Max`) values, each successor capped at its upper bound. Equal-value
/// successors are processed in ascending state order, which pins the
/// witness without affecting the expectation.
pub fn inner_extreme(
    row: &Row,
    values: &[f64],
    sense: Sense,
) -> Result<(f64, Vec<f64>), ImdpError> {
    let m = row.len();
    let mut order: Vec<usize> = (0..m).collect();
    match sense {
        Sense::Min => order.sort_by(|&i, &j| {
            values[row[i].0]
                .partial_cmp(&values[row[j].0])
                .unwrap()
                .then(row[i].0.cmp(&row[j].0))
        }),
        Sense::Max => order.sort_by(|&i, &j| {
            values[row[j].0]
                .partial_cmp(&values[row[i].0])
                .unwrap()
                .then(row[i].0.cmp(&row[j].0))
        }),
    }
    let mut witness: Vec<f64> = row.iter().map(|&(_, iv)| iv.low).collect();
    let sum_low: f64 = witness.iter().sum();
    let sum_up: f64 = row.iter().map(|&(_, iv)| iv.up).sum();
    if sum_low > 1.0 + ROW_TOL || sum_up < 1.0 - ROW_TOL {
        return Err(ImdpError::InfeasibleRow {
            action: usize::MAX,
            sum_low,
            sum_up,
        });
    }
    let mut slack = (1.0 - sum_low).max(0.0);
    for &i in &order {
        if slack <= 0.0 {
            break;
        }
        let take = slack.min(row[i].1.up - row[i].1.low);
        witness[i] += take;
        slack -= take;
    }
    let expectation = row
        .iter()
        .zip(&witness)
        .map(|(&(s, _), &p)| p * values[s])
        .sum();
    Ok((expectation, witness))
}

/// Time-varying (or stationary, for infinite horizons) policy mapping
/// `(state, time)` to an enabled action. `None` marks terminal or
/// actionless states.
#[derive(Debug, Clone)]
pub enum TimeVaryingPolicy {
    /// `steps[k][s]` for `k = 0..K-1`.
    Finite(Vec<Vec<Option<ActionId>>>),
    Stationary(Vec<Option<ActionId>>),
}

impl TimeVaryingPolicy {
    pub fn action(&self, s: StateId, k: usize) -> Option<ActionId> {
        match self {
            TimeVaryingPolicy::Finite(steps) => steps.get(k).and_then(|row| row[s]),
            TimeVaryingPolicy::Stationary(row) => row[s],
        }
    }

    pub fn horizon(&self) -> Horizon {
        match self {
            TimeVaryingPolicy::Finite(steps) => Horizon::Finite(steps.len()),
            TimeVaryingPolicy::Stationary(_) => Horizon::Infinite,
        }
    }
}

fn terminal_values(m: &Imdp) -> Vec<f64> {
    (0..m.num_states())
        .map(|s| if m.is_goal(s) { 1.0 } else { 0.0 })
        .collect()
}

fn backup(m: &Imdp, next: &[f64], sense: Sense) -> (Vec<f64>, Vec<Option<ActionId>>) {
    (0..m.num_states())
        .into_par_iter()
        .map(|s| {
            if m.is_goal(s) {
                return (1.0, None);
            }
            if m.is_critical(s) || Some(s) == m.absorbing() {
                return (0.0, None);
            }
            let mut best: Option<(f64, ActionId)> = None;
            for &a in m.enabled_actions(s) {
                let (v, _) = inner_extreme(&m.actions[a].row, next, sense)
                    .expect("rows validated at construction");
                // ties resolve to the lowest action id
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, a));
                }
            }
            match best {
                Some((v, a)) => (v, Some(a)),
                None => (0.0, None),
            }
        })
        .unzip()
}

/// Robust value iteration for the reach-avoid probability.
///
/// `Lower` maximizes the worst case over consistent transition functions,
/// `Upper` the best case. Finite horizons run exactly `K` backups and
/// return a time-varying policy; the infinite horizon iterates to a
/// sup-norm change below `tol` and returns a stationary policy.
pub fn robust_value_iteration(
    m: &Imdp,
    horizon: Horizon,
    side: BoundSide,
    tol: f64,
) -> (Vec<f64>, TimeVaryingPolicy) {
    let sense = match side {
        BoundSide::Lower => Sense::Min,
        BoundSide::Upper => Sense::Max,
    };
    match horizon {
        Horizon::Finite(k) => {
            let mut values = terminal_values(m);
            let mut steps = vec![Vec::new(); k];
            for step in (0..k).rev() {
                let (v, pol) = backup(m, &values, sense);
                values = v;
                steps[step] = pol;
            }
            (values, TimeVaryingPolicy::Finite(steps))
        }
        Horizon::Infinite => {
            let mut values = terminal_values(m);
            let mut policy = vec![None; m.num_states()];
            let max_sweeps = 1_000_000;
            for sweep in 0.. {
                let (v, pol) = backup(m, &values, sense);
                let delta = v
                    .iter()
                    .zip(&values)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                values = v;
                policy = pol;
                if delta < tol {
                    break;
                }
                if sweep >= max_sweeps {
                    log::warn!("value iteration hit the sweep limit before reaching tol {tol}");
                    break;
                }
            }
            (values, TimeVaryingPolicy::Stationary(policy))
        }
    }
}

/// One lower-bound backup over a merged model in which successor states are
/// grouped into `rho` equal-width value bins.
///
/// Each occupied bin becomes one merged successor whose value is the
/// minimum over its members and whose interval is the componentwise sum of
/// the member intervals (upper bounds clamped to 1). The merged uncertainty
/// set contains the original one, so the result is a sound
/// under-approximation of the exact backup.
pub fn aggregate_backup(
    m: &Imdp,
    next_values: &[f64],
    rho: usize,
) -> Result<(Vec<f64>, Vec<Option<ActionId>>), ImdpError> {
    if rho == 0 {
        return Err(ImdpError::BadRho);
    }
    let bin_of = |v: f64| -> usize { ((v * rho as f64).floor() as usize).min(rho - 1) };
    let mut bin_value = vec![f64::INFINITY; rho];
    for (s, &v) in next_values.iter().enumerate() {
        let b = bin_of(v);
        let _ = s;
        bin_value[b] = bin_value[b].min(v);
    }

    // merged rows, one per action, in bin space
    let merged: Vec<Row> = m
        .actions()
        .par_iter()
        .map(|action| {
            let mut acc: Vec<(f64, f64)> = vec![(0.0, 0.0); rho];
            for &(s, iv) in action.row.iter() {
                let b = bin_of(next_values[s]);
                acc[b].0 += iv.low;
                acc[b].1 += iv.up;
            }
            acc.into_iter()
                .enumerate()
                .filter(|&(_, (low, up))| low > 0.0 || up > 0.0)
                .map(|(b, (low, up))| (b, ProbInterval::new(low, up.min(1.0))))
                .collect()
        })
        .collect();

    let out = (0..m.num_states())
        .into_par_iter()
        .map(|s| {
            if m.is_goal(s) {
                return (1.0, None);
            }
            if m.is_critical(s) || Some(s) == m.absorbing() {
                return (0.0, None);
            }
            let mut best: Option<(f64, ActionId)> = None;
            for &a in m.enabled_actions(s) {
                let (v, _) = inner_extreme(&merged[a], &bin_value, Sense::Min)
                    .expect("merged rows inherit feasibility");
                if best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, a));
                }
            }
            match best {
                Some((v, a)) => (v, Some(a)),
                None => (0.0, None),
            }
        })
        .unzip();
    Ok(out)
}

/// Backward-in-time synthesis over the aggregated models, trading
/// certificate tightness for solver memory. The per-interval confidence is
/// adjusted to `alpha = beta * rho * K * |Act|` since each time step
/// introduces its own merged intervals.
pub fn improved_synthesis(
    m: &Imdp,
    k: usize,
    rho: usize,
) -> Result<(Vec<f64>, TimeVaryingPolicy, Option<ConfidenceReport>), ImdpError> {
    if rho == 0 {
        return Err(ImdpError::BadRho);
    }
    let mut values = terminal_values(m);
    let mut steps = vec![Vec::new(); k];
    for step in (0..k).rev() {
        let (v, pol) = aggregate_backup(m, &values, rho)?;
        values = v;
        steps[step] = pol;
    }
    let report = m.meta().beta.map(|beta| {
        ConfidenceReport::new(
            beta,
            ConfidenceMode::Aggregated { rho, horizon: k },
            rho * k * m.num_actions(),
        )
    });
    Ok((values, TimeVaryingPolicy::Finite(steps), report))
}
