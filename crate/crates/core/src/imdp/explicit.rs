//! Explicit-state text export of an interval MDP, for cross-checking the
//! model with external interval-aware model checkers, plus the matching
//! parser.
//!
//! Two files are written next to each other:
//! - `<prefix>.sta`: one line per state, `<id>` followed by any of the
//!   labels `init`, `goal`, `critical`, `absorbing`.
//! - `<prefix>.tra`: one line per transition, `src action dst low up`,
//!   sorted by `(src, action, dst)`, probabilities with 12 significant
//!   digits. The absorbing self-loop uses the action id one past the last
//!   real action. Zero-probability edges are not materialized.
//!
//! Output is byte-stable across runs for identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{ActionId, Imdp, ImdpAction, ImdpError, ImdpMeta, StateId};
use crate::scenario::ProbInterval;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImdpError + '_ {
    move |source| ImdpError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `<prefix>.sta` and `<prefix>.tra`; returns both paths.
pub fn export_explicit(m: &Imdp, prefix: &Path) -> Result<(PathBuf, PathBuf), ImdpError> {
    let sta_path = prefix.with_extension("sta");
    let tra_path = prefix.with_extension("tra");

    let mut sta = String::new();
    for s in 0..m.num_states() {
        let _ = write!(sta, "{s}");
        if s == m.initial() {
            sta.push_str(" init");
        }
        if m.is_goal(s) {
            sta.push_str(" goal");
        }
        if m.is_critical(s) {
            sta.push_str(" critical");
        }
        if Some(s) == m.absorbing() {
            sta.push_str(" absorbing");
        }
        sta.push('\n');
    }
    std::fs::write(&sta_path, sta).map_err(io_err(&sta_path))?;

    let mut tra = String::new();
    for s in 0..m.num_states() {
        for &a in m.enabled_actions(s) {
            for &(dst, iv) in m.actions()[a].row.iter() {
                let _ = writeln!(tra, "{s} {a} {dst} {:.11e} {:.11e}", iv.low, iv.up);
            }
        }
        if Some(s) == m.absorbing() {
            let loop_action = m.num_actions();
            let _ = writeln!(tra, "{s} {loop_action} {s} {:.11e} {:.11e}", 1.0, 1.0);
        }
    }
    std::fs::write(&tra_path, tra).map_err(io_err(&tra_path))?;
    Ok((sta_path, tra_path))
}

/// Parse a model previously written by [`export_explicit`]. Abstraction
/// metadata is not part of the format and comes back empty.
pub fn parse_explicit(prefix: &Path) -> Result<Imdp, ImdpError> {
    let sta_path = prefix.with_extension("sta");
    let tra_path = prefix.with_extension("tra");
    let parse_err = |path: &Path, msg: String| ImdpError::Parse {
        path: path.display().to_string(),
        msg,
    };

    let sta = std::fs::read_to_string(&sta_path).map_err(io_err(&sta_path))?;
    let mut initial = None;
    let mut goal = Vec::new();
    let mut critical = Vec::new();
    let mut absorbing = None;
    for (lineno, line) in sta.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let id: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(&sta_path, format!("bad state id on line {}", lineno + 1)))?;
        if id != lineno {
            return Err(parse_err(
                &sta_path,
                format!("state ids must be dense, found {id} on line {}", lineno + 1),
            ));
        }
        goal.push(false);
        critical.push(false);
        for label in parts {
            match label {
                "init" => initial = Some(id),
                "goal" => goal[id] = true,
                "critical" => critical[id] = true,
                "absorbing" => absorbing = Some(id),
                other => {
                    return Err(parse_err(
                        &sta_path,
                        format!("unknown label {other} on line {}", lineno + 1),
                    ))
                }
            }
        }
    }
    let num_states = goal.len();
    let initial =
        initial.ok_or_else(|| parse_err(&sta_path, "no state labeled init".to_string()))?;

    let tra = std::fs::read_to_string(&tra_path).map_err(io_err(&tra_path))?;
    // (action -> (src -> row)); rows must agree across srcs afterwards
    let mut by_action: BTreeMap<ActionId, BTreeMap<StateId, Vec<(StateId, ProbInterval)>>> =
        BTreeMap::new();
    for (lineno, line) in tra.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let mut next_num = |what: &str| -> Result<f64, ImdpError> {
            parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(&tra_path, format!("bad {what} on line {}", lineno + 1)))
        };
        let src = next_num("src")? as usize;
        let action = next_num("action")? as usize;
        let dst = next_num("dst")? as usize;
        let low = next_num("low")?;
        let up = next_num("up")?;
        if src >= num_states || dst >= num_states {
            return Err(parse_err(
                &tra_path,
                format!("state out of range on line {}", lineno + 1),
            ));
        }
        by_action
            .entry(action)
            .or_default()
            .entry(src)
            .or_default()
            .push((dst, ProbInterval::new(low, up)));
    }

    let mut actions = Vec::new();
    for (action, mut rows) in by_action {
        // the absorbing self-loop (single [1,1] edge back to absorbing) is
        // implicit in the model and not a real action
        let is_absorbing_loop = absorbing.is_some_and(|a| {
            rows.len() == 1
                && rows.get(&a).is_some_and(|row| {
                    row.len() == 1 && row[0].0 == a && row[0].1 == ProbInterval::new(1.0, 1.0)
                })
        });
        if is_absorbing_loop {
            continue;
        }
        for row in rows.values_mut() {
            row.sort_by_key(|&(dst, _)| dst);
        }
        let first = rows.values().next().expect("nonempty by construction");
        if let Some((src, _)) = rows.iter().find(|(_, row)| *row != first) {
            return Err(parse_err(
                &tra_path,
                format!("action {action} has differing rows (state {src})"),
            ));
        }
        if actions.len() != action {
            return Err(parse_err(
                &tra_path,
                format!("action ids must be dense, found {action}"),
            ));
        }
        actions.push(ImdpAction {
            id: action,
            enabled_in: rows.keys().copied().collect(),
            row: Arc::new(first.clone()),
        });
    }

    Imdp::new(
        num_states,
        initial,
        goal,
        critical,
        absorbing,
        actions,
        ImdpMeta::default(),
    )
}
