//! Dense two-phase simplex for the small linear programs in this crate:
//! Chebyshev centers and input-feasibility probes. Problems here have at
//! most a few dozen variables, so a plain tableau with Bland's rule is
//! simpler and more predictable than an external solver.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Maximize `c^T x` subject to `a x <= b` with `x` free.
pub fn solve_lp(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> LpOutcome {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(c.len(), n, "objective length mismatch");
    assert_eq!(b.len(), m, "rhs length mismatch");

    // free x split as y - z, one slack per row; artificials for negated rows
    let nv = 2 * n + m;
    let mut negated = vec![false; m];
    let mut art_of_row = vec![None; m];
    let mut n_art = 0;
    for i in 0..m {
        if b[i] < 0.0 {
            negated[i] = true;
            art_of_row[i] = Some(nv + n_art);
            n_art += 1;
        }
    }
    let total = nv + n_art;

    // tableau rows 0..m are constraints, row m is the objective
    let mut t = vec![vec![0.0; total + 1]; m + 1];
    let mut basis = vec![0usize; m];
    for i in 0..m {
        let sign = if negated[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[(i, j)];
            t[i][n + j] = -sign * a[(i, j)];
        }
        t[i][2 * n + i] = sign;
        t[i][total] = sign * b[i];
        if let Some(aj) = art_of_row[i] {
            t[i][aj] = 1.0;
            basis[i] = aj;
        } else {
            basis[i] = 2 * n + i;
        }
    }

    if n_art > 0 {
        // phase 1: maximize -(sum of artificials). With the artificials
        // basic at cost -1, the reduced-cost row is the sum of their rows
        // over the non-artificial columns, and the rhs entry carries the
        // (negated) objective value.
        for j in 0..=total {
            t[m][j] = 0.0;
        }
        for i in 0..m {
            if art_of_row[i].is_some() {
                for j in 0..=total {
                    t[m][j] += t[i][j];
                }
            }
        }
        for aj in nv..total {
            t[m][aj] = 0.0;
        }
        if !iterate(&mut t, &mut basis, total, None) {
            return LpOutcome::Unbounded; // cannot happen: phase-1 objective is bounded
        }
        if t[m][total] > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // pivot any artificial still basic (at zero) out of the basis
        for i in 0..m {
            if basis[i] >= nv {
                if let Some(j) = (0..nv).find(|&j| t[i][j].abs() > PIVOT_TOL) {
                    pivot(&mut t, &mut basis, i, j, total);
                }
            }
        }
    }

    // phase 2: restore the real objective, priced against the current basis
    for j in 0..=total {
        t[m][j] = 0.0;
    }
    for j in 0..n {
        t[m][j] = c[j];
        t[m][n + j] = -c[j];
    }
    for i in 0..m {
        let bj = basis[i];
        if bj >= nv {
            continue;
        }
        let cost = obj_coeff(c, bj, n);
        if cost != 0.0 {
            for j in 0..=total {
                t[m][j] -= cost * t[i][j];
            }
        }
    }
    if !iterate(&mut t, &mut basis, total, Some(nv)) {
        return LpOutcome::Unbounded;
    }

    let mut x = DVector::zeros(n);
    for i in 0..m {
        let bj = basis[i];
        if bj < n {
            x[bj] += t[i][total];
        } else if bj < 2 * n {
            x[bj - n] -= t[i][total];
        }
    }
    let value = c.dot(&x);
    LpOutcome::Optimal { x, value }
}

fn obj_coeff(c: &DVector<f64>, var: usize, n: usize) -> f64 {
    if var < n {
        c[var]
    } else if var < 2 * n {
        -c[var - n]
    } else {
        0.0
    }
}

/// Bland-rule simplex sweep; returns false on an unbounded ray.
/// `forbid_from` blocks artificial columns from re-entering in phase 2.
fn iterate(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    total: usize,
    forbid_from: Option<usize>,
) -> bool {
    let m = t.len() - 1;
    let limit = forbid_from.unwrap_or(total);
    loop {
        let entering = (0..limit).find(|&j| t[m][j] > PIVOT_TOL);
        let Some(j) = entering else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > PIVOT_TOL {
                let ratio = t[i][total] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_TOL
                            || ((ratio - lr).abs() <= PIVOT_TOL && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((i, _)) = leave else {
            return false;
        };
        pivot(t, basis, i, j, total);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize, total: usize) {
    let scale = t[row][col];
    for j in 0..=total {
        t[row][j] /= scale;
    }
    for i in 0..t.len() {
        if i != row {
            let factor = t[i][col];
            if factor != 0.0 {
                for j in 0..=total {
                    t[i][j] -= factor * t[row][j];
                }
            }
        }
    }
    basis[row] = col;
}

/// Is there an `x` with `a x <= b`? Returns a witness if so.
pub fn feasible_point(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    match solve_lp(&DVector::zeros(a.ncols()), a, b) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
