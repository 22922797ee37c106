//! Rectangular partitions, convex polytope regions, and the backward
//! reachability computations that decide where abstract actions are enabled.

mod lp;

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linsys::GroupedSystem;
pub use lp::{feasible_point, solve_lp, LpOutcome};

/// Absolute tolerance for geometric membership tests.
pub const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cell widths must be positive, counts at least 1")]
    DegenerateGrid,
    #[error("cell index {0:?} outside the grid")]
    IndexOutOfRange(Vec<usize>),
    #[error("goal and critical cells must be disjoint (cell {0})")]
    GoalCriticalOverlap(usize),
    #[error("continuous region is not aligned with the grid in dimension {0}")]
    Misaligned(usize),
    #[error("region is empty")]
    EmptyRegion,
    #[error("region is unbounded")]
    UnboundedRegion,
    #[error("dynamics matrix A_bar is singular; explicit backward reachable sets need an invertible A_bar")]
    SingularDynamics,
    #[error("input matrix B_bar is rank deficient")]
    RankDeficientInput,
    #[error("scaling factor must be nonnegative, got {0}")]
    NegativeScale(f64),
}

/// Identifier of an abstract region: a grid cell (flattened index) or the
/// absorbing complement of the covered domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionId {
    Cell(usize),
    Absorbing,
}

/// Convex polytope `{ x | M x <= b }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    m: DMatrix<f64>,
    b: DVector<f64>,
}

impl Region {
    pub fn new(m: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if m.nrows() != b.len() {
            return Err(GeometryError::Dimension(format!(
                "M has {} rows but b has length {}",
                m.nrows(),
                b.len()
            )));
        }
        Ok(Self { m, b })
    }

    /// Axis box as `2n` halfspaces: upper bounds first, then lower bounds.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Self {
        let n = lower.len();
        let mut m = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            m[(i, i)] = 1.0;
            b[i] = upper[i];
            m[(n + i, i)] = -1.0;
            b[n + i] = -lower[i];
        }
        Self { m, b }
    }

    pub fn halfspaces(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.m, &self.b)
    }

    pub fn dim(&self) -> usize {
        self.m.ncols()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let lhs = &self.m * x;
        (0..self.b.len()).all(|i| lhs[i] <= self.b[i] + tol)
    }

    /// Whether the whole axis box lies inside this polytope. Exact: the
    /// maximum of a linear function over a box is its support function.
    pub fn contains_box(&self, cell: &AxisBox, tol: f64) -> bool {
        let c = cell.center();
        let hw = cell.half_widths();
        for i in 0..self.m.nrows() {
            let mut v = 0.0;
            for j in 0..self.m.ncols() {
                let mij = self.m[(i, j)];
                v += mij * c[j] + mij.abs() * hw[j];
            }
            if v > self.b[i] + tol {
                return false;
            }
        }
        true
    }
}

/// Axis-aligned box with explicit bounds; the only region shape partition
/// cells take.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl AxisBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
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

    pub fn to_region(&self) -> Region {
        Region::from_box(&self.lower, &self.upper)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    /// All `2^n` vertices, lexicographic low-before-high.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let mut v = self.lower.clone();
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    v[i] = self.upper[i];
                }
            }
            out.push(v);
        }
        out
    }
}

/// Uniform rectangular partition of a bounded domain, with goal and
/// critical cells labeled. Cells are half-open `[low, high)` in every
/// dimension except that the last cell per dimension is closed at the
/// domain boundary.
#[derive(Debug, Clone)]
pub struct Partition {
    origin: DVector<f64>,
    widths: DVector<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    goal: HashSet<usize>,
    critical: HashSet<usize>,
}

impl Partition {
    pub fn new(
        origin: DVector<f64>,
        widths: DVector<f64>,
        counts: Vec<usize>,
    ) -> Result<Self, GeometryError> {
        let n = origin.len();
        if widths.len() != n || counts.len() != n {
            return Err(GeometryError::Dimension(format!(
                "origin/widths/counts lengths {} / {} / {}",
                n,
                widths.len(),
                counts.len()
            )));
        }
        if counts.iter().any(|&c| c == 0) || widths.iter().any(|&w| w <= 0.0) {
            return Err(GeometryError::DegenerateGrid);
        }
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Ok(Self {
            origin,
            widths,
            counts,
            strides,
            goal: HashSet::new(),
            critical: HashSet::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn widths(&self) -> &DVector<f64> {
        &self.widths
    }

    pub fn origin(&self) -> &DVector<f64> {
        &self.origin
    }

    pub fn num_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn domain_upper(&self) -> DVector<f64> {
        let mut u = self.origin.clone();
        for i in 0..self.dim() {
            u[i] += self.widths[i] * self.counts[i] as f64;
        }
        u
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize, GeometryError> {
        if multi.len() != self.dim() || multi.iter().zip(&self.counts).any(|(&i, &c)| i >= c) {
            return Err(GeometryError::IndexOutOfRange(multi.to_vec()));
        }
        Ok(multi.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum())
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.dim()];
        for i in 0..self.dim() {
            out[i] = flat / self.strides[i];
            flat %= self.strides[i];
        }
        out
    }

    /// The abstraction function: the unique cell containing `x`, or
    /// `Absorbing` when `x` leaves the covered domain.
    pub fn locate(&self, x: &DVector<f64>) -> RegionId {
        let mut flat = 0usize;
        for i in 0..self.dim() {
            let t = (x[i] - self.origin[i]) / self.widths[i];
            if !t.is_finite() || t < 0.0 {
                return RegionId::Absorbing;
            }
            let mut idx = t.floor() as usize;
            if idx >= self.counts[i] {
                let upper = self.origin[i] + self.widths[i] * self.counts[i] as f64;
                if x[i] == upper {
                    idx = self.counts[i] - 1;
                } else {
                    return RegionId::Absorbing;
                }
            }
            flat += idx * self.strides[i];
        }
        RegionId::Cell(flat)
    }

    pub fn cell_box(&self, flat: usize) -> AxisBox {
        let multi = self.multi_index(flat);
        let mut lo = self.origin.clone();
        let mut hi = self.origin.clone();
        for i in 0..self.dim() {
            lo[i] += self.widths[i] * multi[i] as f64;
            hi[i] += self.widths[i] * (multi[i] + 1) as f64;
        }
        AxisBox::new(lo, hi)
    }

    pub fn cell_region(&self, flat: usize) -> Region {
        self.cell_box(flat).to_region()
    }

    pub fn cell_center(&self, flat: usize) -> DVector<f64> {
        let multi = self.multi_index(flat);
        let mut c = self.origin.clone();
        for i in 0..self.dim() {
            c[i] += self.widths[i] * (multi[i] as f64 + 0.5);
        }
        c
    }

    pub fn is_goal(&self, flat: usize) -> bool {
        self.goal.contains(&flat)
    }

    pub fn is_critical(&self, flat: usize) -> bool {
        self.critical.contains(&flat)
    }

    pub fn goal_cells(&self) -> &HashSet<usize> {
        &self.goal
    }

    pub fn critical_cells(&self) -> &HashSet<usize> {
        &self.critical
    }

    /// Mark every cell in the inclusive index box `[lo, hi]` as goal.
    pub fn add_goal_index_box(&mut self, lo: &[usize], hi: &[usize]) -> Result<(), GeometryError> {
        for flat in self.index_box_cells(lo, hi)? {
            if self.critical.contains(&flat) {
                return Err(GeometryError::GoalCriticalOverlap(flat));
            }
            self.goal.insert(flat);
        }
        Ok(())
    }

    /// Mark every cell in the inclusive index box `[lo, hi]` as critical.
    pub fn add_critical_index_box(
        &mut self,
        lo: &[usize],
        hi: &[usize],
    ) -> Result<(), GeometryError> {
        for flat in self.index_box_cells(lo, hi)? {
            if self.goal.contains(&flat) {
                return Err(GeometryError::GoalCriticalOverlap(flat));
            }
            self.critical.insert(flat);
        }
        Ok(())
    }

    /// Convert a continuous axis box into the exact set of cells it covers.
    /// Errors unless every face lies on a grid line (within `GEOM_TOL` of a
    /// cell width), since goal and critical regions must be cell-aligned.
    pub fn aligned_index_box(
        &self,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
    ) -> Result<(Vec<usize>, Vec<usize>), GeometryError> {
        let mut lo = vec![0usize; self.dim()];
        let mut hi = vec![0usize; self.dim()];
        for i in 0..self.dim() {
            let tl = (lower[i] - self.origin[i]) / self.widths[i];
            let tu = (upper[i] - self.origin[i]) / self.widths[i];
            let rl = tl.round();
            let ru = tu.round();
            if (tl - rl).abs() > GEOM_TOL / self.widths[i].min(1.0)
                || (tu - ru).abs() > GEOM_TOL / self.widths[i].min(1.0)
            {
                return Err(GeometryError::Misaligned(i));
            }
            if rl < 0.0 || ru > self.counts[i] as f64 || ru <= rl {
                return Err(GeometryError::Misaligned(i));
            }
            lo[i] = rl as usize;
            hi[i] = ru as usize - 1;
        }
        Ok((lo, hi))
    }

    fn index_box_cells(&self, lo: &[usize], hi: &[usize]) -> Result<Vec<usize>, GeometryError> {
        if lo.len() != self.dim() || hi.len() != self.dim() {
            return Err(GeometryError::IndexOutOfRange(lo.to_vec()));
        }
        for i in 0..self.dim() {
            if lo[i] > hi[i] || hi[i] >= self.counts[i] {
                return Err(GeometryError::IndexOutOfRange(hi.to_vec()));
            }
        }
        let mut cells = Vec::new();
        let mut cursor = lo.to_vec();
        loop {
            cells.push(self.flat_index(&cursor)?);
            let mut dim = self.dim();
            loop {
                if dim == 0 {
                    return Ok(cells);
                }
                dim -= 1;
                if cursor[dim] < hi[dim] {
                    cursor[dim] += 1;
                    break;
                }
                cursor[dim] = lo[dim];
            }
        }
    }
}

/// A center of a largest inscribed ball, with its radius.
///
/// Chebyshev centers are not unique in general; ties are resolved
/// deterministically by lexicographic minimization of the center
/// coordinates over the optimal face, one coordinate at a time.
pub fn chebyshev_center(region: &Region) -> Result<(DVector<f64>, f64), GeometryError> {
    let (m, b) = region.halfspaces();
    let nr = m.nrows();
    let n = m.ncols();
    // variables (x, r): maximize r subject to M x + ||M_i|| r <= b, r >= 0
    let norms: Vec<f64> = (0..nr).map(|i| m.row(i).norm()).collect();
    let mut a = DMatrix::zeros(nr + 1, n + 1);
    let mut rhs = DVector::zeros(nr + 1);
    for i in 0..nr {
        for j in 0..n {
            a[(i, j)] = m[(i, j)];
        }
        a[(i, n)] = norms[i];
        rhs[i] = b[i];
    }
    a[(nr, n)] = -1.0;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;

    let radius = match solve_lp(&c, &a, &rhs) {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Infeasible => return Err(GeometryError::EmptyRegion),
        LpOutcome::Unbounded => return Err(GeometryError::UnboundedRegion),
    };

    // pin r = radius, then minimize x_0, x_1, ... in turn
    let mut a = a;
    let mut rhs = rhs;
    let push_row = |a: &mut DMatrix<f64>, rhs: &mut DVector<f64>, row: &[f64], v: f64| {
        let nr = a.nrows();
        a.resize_vertically_mut(nr + 1, 0.0);
        for (j, &rj) in row.iter().enumerate() {
            a[(nr, j)] = rj;
        }
        rhs.resize_vertically_mut(nr + 1, v);
    };
    let mut pin = vec![0.0; n + 1];
    pin[n] = -1.0;
    push_row(&mut a, &mut rhs, &pin, -(radius - GEOM_TOL));

    let mut center = DVector::zeros(n);
    for j in 0..n {
        let mut c = DVector::zeros(n + 1);
        c[j] = -1.0;
        match solve_lp(&c, &a, &rhs) {
            LpOutcome::Optimal { x, .. } => {
                center[j] = x[j];
            }
            LpOutcome::Infeasible => return Err(GeometryError::EmptyRegion),
            LpOutcome::Unbounded => return Err(GeometryError::UnboundedRegion),
        }
        let mut row = vec![0.0; n + 1];
        row[j] = 1.0;
        push_row(&mut a, &mut rhs, &row, center[j] + GEOM_TOL);
        row[j] = -1.0;
        push_row(&mut a, &mut rhs, &row, -(center[j] - GEOM_TOL));
    }
    Ok((center, radius))
}

/// Scale a polytope by `lambda >= 0` about a point: `M x <= lambda b + (1 - lambda) M c`.
/// `lambda = 1` is the identity and scaled regions nest monotonically.
pub fn scale_polytope(
    region: &Region,
    center: &DVector<f64>,
    lambda: f64,
) -> Result<Region, GeometryError> {
    if lambda < 0.0 {
        return Err(GeometryError::NegativeScale(lambda));
    }
    let (m, b) = region.halfspaces();
    let mc = m * center;
    let b_scaled = b * lambda + mc * (1.0 - lambda);
    Region::new(m.clone(), b_scaled)
}

/// The one-step backward reachable set of a target point `d`: all states
/// from which some admissible input steers the noiseless macro-step
/// successor exactly onto `d`, in `M x <= b` form.
///
/// Requires invertible `A_bar` (so the set is bounded) and full-row-rank
/// `B_bar`. With a square `B_bar` the set is the parallelepiped
/// `lo <= B^{-1}(d - q - A x) <= up`; with more inputs than states the
/// constraint set `d - q - B u, u in box` is a zonotope whose facets are
/// enumerated from its generators.
pub fn backward_reachable_set(
    gsys: &GroupedSystem,
    d: &DVector<f64>,
) -> Result<Region, GeometryError> {
    let n = gsys.state_dim();
    let a_bar = gsys.a_bar();
    if rank(a_bar) < n {
        return Err(GeometryError::SingularDynamics);
    }

    if let Some(b_inv) = gsys.b_bar_inv() {
        // lo <= e - C x <= up with C = B^{-1} A, e = B^{-1}(d - q)
        let c = b_inv * a_bar;
        let e = b_inv * (d - gsys.q_bar());
        let p = c.nrows();
        let mut m = DMatrix::zeros(2 * p, n);
        let mut b = DVector::zeros(2 * p);
        for i in 0..p {
            for j in 0..n {
                m[(i, j)] = c[(i, j)];
                m[(p + i, j)] = -c[(i, j)];
            }
            b[i] = e[i] - gsys.input_box_bar().lower()[i];
            b[p + i] = gsys.input_box_bar().upper()[i] - e[i];
        }
        return Region::new(m, b);
    }

    if !gsys.has_full_row_rank_input() {
        return Err(GeometryError::RankDeficientInput);
    }

    // zonotope Z = { d - q - B u : u in box }; facets from generator subsets
    let center = d - gsys.q_bar() - gsys.b_bar() * gsys.input_box_bar().center();
    let hw = gsys.input_box_bar().half_widths();
    let gens: Vec<DVector<f64>> = (0..gsys.input_dim())
        .map(|j| {
            let col: DVector<f64> = gsys.b_bar().column(j).into();
            col * hw[j]
        })
        .filter(|g| g.norm() > GEOM_TOL)
        .collect();

    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut push_normal = |eta: DVector<f64>| {
        let norm = eta.norm();
        if norm <= GEOM_TOL {
            return;
        }
        let mut eta = eta / norm;
        if let Some(k) = (0..n).find(|&k| eta[k].abs() > GEOM_TOL) {
            if eta[k] < 0.0 {
                eta = -eta;
            }
        }
        if !normals.iter().any(|e| (e - &eta).amax() < 1e-9) {
            normals.push(eta);
        }
    };

    if n == 1 {
        push_normal(DVector::from_element(1, 1.0));
    } else {
        // generalized cross product of each n-1 generator subset; a
        // degenerate subset yields the zero vector and is skipped
        for combo in combinations(gens.len(), n - 1) {
            let mut sub = DMatrix::zeros(n, n - 1);
            for (c, &gi) in combo.iter().enumerate() {
                sub.set_column(c, &gens[gi]);
            }
            let mut eta = DVector::zeros(n);
            for i in 0..n {
                let minor = sub.clone().remove_row(i);
                let det = minor.determinant();
                eta[i] = if i % 2 == 0 { det } else { -det };
            }
            push_normal(eta);
        }
    }

    let mut m = DMatrix::zeros(2 * normals.len(), n);
    let mut b = DVector::zeros(2 * normals.len());
    for (i, eta) in normals.iter().enumerate() {
        let radius: f64 = gens.iter().map(|g| eta.dot(g).abs()).sum();
        let offset = eta.dot(&center);
        // facets of Z pulled back through y = A x
        let row = eta.transpose() * a_bar;
        for j in 0..n {
            m[(2 * i, j)] = row[j];
            m[(2 * i + 1, j)] = -row[j];
        }
        b[2 * i] = offset + radius;
        b[2 * i + 1] = -(offset - radius);
    }
    Region::new(m, b)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= 1e-10 * smax).count()
}

/// Whether every state in the cell box admits an input that steers the
/// noiseless successor exactly onto `d`. Decided per vertex; convexity of
/// the backward reachable set makes vertex checking sound and complete.
pub fn region_in_brs(gsys: &GroupedSystem, cell: &AxisBox, d: &DVector<f64>) -> bool {
    let rhs_of = |v: &DVector<f64>| d - gsys.q_bar() - gsys.a_bar() * v;
    if let Some(b_inv) = gsys.b_bar_inv() {
        return cell
            .vertices()
            .iter()
            .all(|v| gsys.input_box_bar().contains(&(b_inv * rhs_of(v)), GEOM_TOL));
    }
    // feasibility program per vertex: B u = rhs, u in box
    let bb = gsys.b_bar();
    let p = bb.ncols();
    let n = bb.nrows();
    let mut a = DMatrix::zeros(2 * n + 2 * p, p);
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = bb[(i, j)];
            a[(n + i, j)] = -bb[(i, j)];
        }
    }
    for j in 0..p {
        a[(2 * n + j, j)] = 1.0;
        a[(2 * n + p + j, j)] = -1.0;
    }
    cell.vertices().iter().all(|v| {
        let rhs = rhs_of(v);
        let mut b = DVector::zeros(2 * n + 2 * p);
        for i in 0..n {
            b[i] = rhs[i] + GEOM_TOL;
            b[n + i] = -rhs[i] + GEOM_TOL;
        }
        for j in 0..p {
            b[2 * n + j] = gsys.input_box_bar().upper()[j];
            b[2 * n + p + j] = -gsys.input_box_bar().lower()[j];
        }
        feasible_point(&a, &b).is_some()
    })
}

/// Axis-aligned bounding box of a backward reachable set, used to prune
/// candidate cells before exact containment tests. Support function of the
/// input zonotope along `A_bar^{-T} e_i`.
pub fn brs_bounding_box(
    gsys: &GroupedSystem,
    d: &DVector<f64>,
) -> Result<AxisBox, GeometryError> {
    let n = gsys.state_dim();
    let a_inv = gsys
        .a_bar()
        .clone()
        .try_inverse()
        .ok_or(GeometryError::SingularDynamics)?;
    if !gsys.has_full_row_rank_input() {
        return Err(GeometryError::RankDeficientInput);
    }
    let center_y = d - gsys.q_bar() - gsys.b_bar() * gsys.input_box_bar().center();
    let hw = gsys.input_box_bar().half_widths();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        // eta = A^{-T} e_i is row i of A^{-1}
        let eta: DVector<f64> = a_inv.row(i).transpose();
        let mid = eta.dot(&center_y);
        let mut radius = 0.0;
        for j in 0..gsys.input_dim() {
            let col: DVector<f64> = gsys.b_bar().column(j).into();
            radius += (eta.dot(&col) * hw[j]).abs();
        }
        lo[i] = mid - radius;
        hi[i] = mid + radius;
    }
    Ok(AxisBox::new(lo, hi))
}
