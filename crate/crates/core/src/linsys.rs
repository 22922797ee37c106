//! Discrete-time linear stochastic systems and the feedback control law.
//!
//! A system evolves as `x_{k+1} = A x_k + B u_k + q + w_k` with the input
//! constrained to an axis-aligned box. Under-actuated systems (fewer
//! inputs than states) are handled by grouping `g` consecutive time steps
//! into one macro step so that the stacked input matrix gains full row
//! rank, which the target-point control law requires.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Absolute tolerance for input-box membership checks.
pub const BOX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LinSysError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("input box lower bound exceeds upper bound in component {0}")]
    EmptyInputBox(usize),
    #[error("group factor must be >= 1, got {0}")]
    InvalidGroup(i64),
    #[error("stacked input matrix is rank deficient (rank {rank} < {n} states); group more steps")]
    RankDeficient { rank: usize, n: usize },
}

/// Axis-aligned box of admissible control inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl InputBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, LinSysError> {
        if lower.len() != upper.len() {
            return Err(LinSysError::Dimension(format!(
                "input box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for i in 0..lower.len() {
            if lower[i] > upper[i] {
                return Err(LinSysError::EmptyInputBox(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn half_widths(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).all(|i| u[i] >= self.lower[i] - tol && u[i] <= self.upper[i] + tol)
    }

    /// The box for `g` stacked copies of the input, `[u_k; ...; u_{k+g-1}]`.
    pub fn replicate(&self, g: usize) -> Self {
        let p = self.dim();
        let mut lower = DVector::zeros(p * g);
        let mut upper = DVector::zeros(p * g);
        for j in 0..g {
            lower.rows_mut(j * p, p).copy_from(&self.lower);
            upper.rows_mut(j * p, p).copy_from(&self.upper);
        }
        Self { lower, upper }
    }

    /// All `2^p` corner points, in lexicographic (low-before-high) order.
    pub fn corners(&self) -> Vec<DVector<f64>> {
        let p = self.dim();
        let mut out = Vec::with_capacity(1 << p);
        for mask in 0..(1usize << p) {
            let mut v = self.lower.clone();
            for i in 0..p {
                if mask & (1 << i) != 0 {
                    v[i] = self.upper[i];
                }
            }
            out.push(v);
        }
        out
    }
}

/// `x_{k+1} = A x_k + B u_k + q + w_k` with `u_k` in an input box.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DVector<f64>,
    input_box: InputBox,
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DVector<f64>,
        input_box: InputBox,
    ) -> Result<Self, LinSysError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinSysError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(LinSysError::Dimension(format!(
                "B must have {} rows, got {}",
                n,
                b.nrows()
            )));
        }
        if q.len() != n {
            return Err(LinSysError::Dimension(format!(
                "q must have length {}, got {}",
                n,
                q.len()
            )));
        }
        if input_box.dim() != b.ncols() {
            return Err(LinSysError::Dimension(format!(
                "input box dimension {} does not match B columns {}",
                input_box.dim(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, q, input_box })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn input_box(&self) -> &InputBox {
        &self.input_box
    }

    /// Whether `[B AB A^2 B ... A^{n-1} B]` has full row rank, with rank judged
    /// by singular values at least `rank_tol` times the largest one.
    pub fn is_controllable(&self, rank_tol: f64) -> bool {
        let n = self.state_dim();
        let p = self.input_dim();
        let mut ctrb = DMatrix::zeros(n, n * p);
        let mut block = self.b.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * p), (n, p)).copy_from(&block);
            block = &self.a * &block;
        }
        matrix_rank(&ctrb, rank_tol) == n
    }
}

fn matrix_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= rank_tol * max).count()
}

/// A linear system with `g` consecutive steps merged into one macro step:
/// `A_bar = A^g`, `B_bar = [A^{g-1}B ... AB B]`, `q_bar = sum_i A^i q`.
///
/// The merged noise `w_bar = sum_i A^i w` is realized by the samplers in the
/// harness, which draw `g` base-step noise vectors per macro step and combine
/// them, so the merged noise is i.i.d. by construction.
#[derive(Debug, Clone)]
pub struct GroupedSystem {
    base: LinearSystem,
    group: usize,
    a_bar: DMatrix<f64>,
    b_bar: DMatrix<f64>,
    q_bar: DVector<f64>,
    input_box_bar: InputBox,
    /// Pseudoinverse of `B_bar`, present iff `B_bar` has full row rank.
    b_bar_pinv: Option<DMatrix<f64>>,
    /// Inverse of `B_bar`, present iff `B_bar` is square and invertible.
    b_bar_inv: Option<DMatrix<f64>>,
}

impl GroupedSystem {
    /// Merge `g >= 1` time steps. `g = 1` reproduces the base system exactly.
    pub fn group_steps(sys: &LinearSystem, g: usize) -> Result<Self, LinSysError> {
        if g == 0 {
            return Err(LinSysError::InvalidGroup(0));
        }
        let n = sys.state_dim();
        let p = sys.input_dim();

        // powers[i] = A^i
        let mut powers = Vec::with_capacity(g + 1);
        powers.push(DMatrix::identity(n, n));
        for i in 0..g {
            let next = &sys.a * &powers[i];
            powers.push(next);
        }

        let a_bar = powers[g].clone();
        let mut b_bar = DMatrix::zeros(n, g * p);
        for j in 0..g {
            // column block j multiplies u_{k+j}, so it carries A^{g-1-j} B
            b_bar
                .view_mut((0, j * p), (n, p))
                .copy_from(&(&powers[g - 1 - j] * &sys.b));
        }
        let mut q_bar = DVector::zeros(n);
        for power in powers.iter().take(g) {
            q_bar += power * &sys.q;
        }
        let input_box_bar = sys.input_box.replicate(g);

        let svd = b_bar.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let full_row_rank =
            smax > 0.0 && svd.singular_values.iter().filter(|&&s| s >= RANK_TOL * smax).count() == n;
        let b_bar_pinv = if full_row_rank {
            svd.pseudo_inverse(RANK_TOL * smax).ok()
        } else {
            None
        };
        let b_bar_inv = if full_row_rank && b_bar.ncols() == n {
            b_bar.clone().try_inverse()
        } else {
            None
        };

        Ok(Self {
            base: sys.clone(),
            group: g,
            a_bar,
            b_bar,
            q_bar,
            input_box_bar,
            b_bar_pinv,
            b_bar_inv,
        })
    }

    pub fn base(&self) -> &LinearSystem {
        &self.base
    }

    pub fn group(&self) -> usize {
        self.group
    }

    pub fn state_dim(&self) -> usize {
        self.base.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.b_bar.ncols()
    }

    pub fn a_bar(&self) -> &DMatrix<f64> {
        &self.a_bar
    }

    pub fn b_bar(&self) -> &DMatrix<f64> {
        &self.b_bar
    }

    pub fn q_bar(&self) -> &DVector<f64> {
        &self.q_bar
    }

    pub fn input_box_bar(&self) -> &InputBox {
        &self.input_box_bar
    }

    pub fn has_full_row_rank_input(&self) -> bool {
        self.b_bar_pinv.is_some()
    }

    pub fn b_bar_inv(&self) -> Option<&DMatrix<f64>> {
        self.b_bar_inv.as_ref()
    }

    /// The control input that steers the noiseless macro-step successor of
    /// `x` exactly onto the target point `d`: the minimum-norm solution
    /// `u = B_bar^+ (d - q_bar - A_bar x)`.
    pub fn control_input(
        &self,
        x: &DVector<f64>,
        d: &DVector<f64>,
    ) -> Result<DVector<f64>, LinSysError> {
        let pinv = self.b_bar_pinv.as_ref().ok_or(LinSysError::RankDeficient {
            rank: matrix_rank(&self.b_bar, RANK_TOL),
            n: self.state_dim(),
        })?;
        Ok(pinv * (d - &self.q_bar - &self.a_bar * x))
    }

    /// One macro step: `A_bar x + B_bar u + q_bar + w`.
    ///
    /// Logs a warning when `u` leaves the input box; the dynamics are still
    /// evaluated as given.
    pub fn successor(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        if !self.input_box_bar.contains(u, BOX_TOL) {
            log::warn!("control input outside the admissible box: {:?}", u.as_slice());
        }
        &self.a_bar * x + &self.b_bar * u + &self.q_bar + w
    }
}
