//! Dense two-phase tableau simplex over free structural variables.
//!
//! Every structural variable is free. Rows are `a·x = b` or `a·x ≥ b`; each
//! `≥` row gets a surplus variable. Free variables are first pivoted into the
//! basis by Gauss-Jordan elimination ("phase 0"); the rows they occupy only
//! define them and never enter a ratio test. What remains is a standard-form
//! LP over the non-negative surplus columns, solved with artificials in
//! phase 1 and the caller's objective in phase 2.
//!
//! In floating point the tableau also carries one identity column per input
//! row. They never enter the basis; at the end of phase 1 their reduced costs
//! are the multipliers of a Farkas certificate over the original rows, which
//! is re-checked against the input before an infeasible verdict is returned.

use super::scalar::LpScalar;
use super::SolverError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowKind {
    Eq,
    Ge,
}

#[derive(Clone, Debug)]
pub(crate) struct StdRow<T> {
    pub terms: Vec<(usize, T)>,
    pub kind: RowKind,
    pub rhs: T,
}

#[derive(Clone, Debug)]
pub(crate) struct StdProblem<T> {
    pub num_vars: usize,
    pub rows: Vec<StdRow<T>>,
    /// Minimize `c·x` when present.
    pub objective: Option<Vec<(usize, T)>>,
}

#[derive(Clone, Debug)]
pub(crate) enum SimplexResult<T> {
    Infeasible { phase1: T },
    Solved { x: Vec<T>, objective: T, phase1: T },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColKind {
    Free,
    Surplus,
    Artificial,
    Track,
}

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    cost: Vec<T>,
    basis: Vec<usize>,
    kinds: Vec<ColKind>,
    /// Row is an active constraint (its basic variable is non-negative).
    active: Vec<bool>,
    barred: Vec<bool>,
    rhs: usize,
    pivots: usize,
    max_pivots: usize,
}

const DEGENERATE_STREAK: usize = 30;

impl<T: LpScalar> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c].clone();
        let width = self.rows[r].len();
        let mut nz = Vec::with_capacity(width);
        for j in 0..width {
            if !self.rows[r][j].is_zero() {
                let v = (self.rows[r][j].clone() / piv.clone()).clean();
                self.rows[r][j] = v;
                if !self.rows[r][j].is_zero() {
                    nz.push(j);
                }
            }
        }
        self.rows[r][c] = T::one();
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            eliminate(row, &pivot_row, &nz, c);
        }
        eliminate(&mut self.cost, &pivot_row, &nz, c);
        self.rows[r] = pivot_row;
        self.basis[r] = c;
        self.pivots += 1;
    }

    fn value(&self) -> T {
        -self.cost[self.rhs].clone()
    }

    /// Minimizes the current cost row over active rows. Returns `Ok(false)`
    /// when the objective is unbounded below.
    fn optimize(&mut self) -> Result<bool, SolverError> {
        let eps = T::eps();
        let mut degenerate = 0usize;
        loop {
            if self.pivots > self.max_pivots {
                return Err(SolverError::IterationLimit(self.max_pivots));
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut entering: Option<usize> = None;
            let mut best = -eps.clone();
            for j in 0..self.rhs {
                if self.barred[j] || self.kinds[j] == ColKind::Free {
                    continue;
                }
                let d = &self.cost[j];
                if *d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d.clone();
                }
            }
            let Some(c) = entering else {
                return Ok(true);
            };

            // Ratio test. Ties within `eps` go to the largest pivot element,
            // or to the lowest basic index under Bland's rule.
            let piv_tol = T::pivot_tol();
            let mut min_ratio: Option<T> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !self.active[i] || row[c] <= piv_tol {
                    continue;
                }
                let ratio = row[self.rhs].clone() / row[c].clone();
                if min_ratio.as_ref().is_none_or(|b| ratio < *b) {
                    min_ratio = Some(ratio);
                }
            }
            let mut leave: Option<usize> = None;
            if let Some(min) = &min_ratio {
                let cutoff = min.clone() + eps.clone();
                for (i, row) in self.rows.iter().enumerate() {
                    if !self.active[i] || row[c] <= piv_tol {
                        continue;
                    }
                    if row[self.rhs].clone() / row[c].clone() > cutoff {
                        continue;
                    }
                    let better = match leave {
                        None => true,
                        Some(l) if bland => self.basis[i] < self.basis[l],
                        Some(l) => row[c] > self.rows[l][c],
                    };
                    if better {
                        leave = Some(i);
                    }
                }
            }
            let best_ratio = min_ratio;
            let Some(r) = leave else {
                return Ok(false);
            };
            if best_ratio.is_none_or(|b| b.is_negligible()) {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

fn eliminate<T: LpScalar>(row: &mut [T], pivot_row: &[T], nz: &[usize], c: usize) {
    let f = row[c].clone();
    if f.is_zero() {
        return;
    }
    for &j in nz {
        let v = (row[j].clone() - f.clone() * pivot_row[j].clone()).clean();
        row[j] = v;
    }
    row[c] = T::zero();
}

pub(crate) fn solve<T: LpScalar>(
    problem: &StdProblem<T>,
    feasibility_tol: &T,
    max_pivots: usize,
) -> Result<SimplexResult<T>, SolverError> {
    let n = problem.num_vars;
    let m = problem.rows.len();
    let n_surplus = problem
        .rows
        .iter()
        .filter(|r| r.kind == RowKind::Ge)
        .count();

    // Columns: free vars | surplus | artificials (one per row, only used if
    // needed) | row tracking (floating point only) | rhs
    let certify = !T::eps().is_zero();
    let art_start = n + n_surplus;
    let track_start = art_start + m;
    let rhs = track_start + if certify { m } else { 0 };
    let width = rhs + 1;
    let mut kinds = vec![ColKind::Free; n];
    kinds.extend(std::iter::repeat_n(ColKind::Surplus, n_surplus));
    kinds.extend(std::iter::repeat_n(ColKind::Artificial, m));
    kinds.extend(std::iter::repeat_n(ColKind::Track, rhs - track_start));

    let mut rows = Vec::with_capacity(m);
    let mut s = n;
    for (i, r) in problem.rows.iter().enumerate() {
        let mut row = vec![T::zero(); width];
        if certify {
            row[track_start + i] = T::one();
        }
        for (j, a) in &r.terms {
            row[*j] = row[*j].clone() + a.clone();
        }
        if r.kind == RowKind::Ge {
            row[s] = -T::one();
            s += 1;
        }
        row[rhs] = r.rhs.clone();
        rows.push(row);
    }

    let mut tab = Tableau {
        rows,
        cost: vec![T::zero(); width],
        basis: vec![usize::MAX; m],
        kinds,
        active: vec![false; m],
        barred: vec![false; width],
        rhs,
        pivots: 0,
        max_pivots,
    };

    // Phase 0: pivot every free variable into the basis where possible.
    let mut owned = vec![false; m];
    for j in 0..n {
        let mut best: Option<(usize, T)> = None;
        for (i, row) in tab.rows.iter().enumerate() {
            if owned[i] {
                continue;
            }
            let a = row[j].abs();
            if a > T::pivot_tol() && best.as_ref().is_none_or(|(_, b)| a > *b) {
                best = Some((i, a));
            }
        }
        if let Some((r, _)) = best {
            tab.pivot(r, j);
            owned[r] = true;
        }
    }
    // Free columns left in constraint rows are numerical noise.
    for (i, row) in tab.rows.iter_mut().enumerate() {
        if !owned[i] {
            for v in row.iter_mut().take(n) {
                *v = T::zero();
            }
        }
    }

    // Phase 1 over the remaining rows.
    for i in 0..m {
        if owned[i] {
            continue;
        }
        let row = &mut tab.rows[i];
        if row[rhs] < T::zero() {
            for v in row.iter_mut() {
                *v = -v.clone();
            }
        }
        // A row with no surplus entries left is a pure constant check.
        let has_var = (n..art_start).any(|j| !row[j].is_negligible());
        if !has_var {
            if row[rhs].abs() > *feasibility_tol {
                let phase1 = row[rhs].abs();
                let w = row[track_start..rhs].to_vec();
                return infeasible(problem, phase1, certify.then_some(w));
            }
            continue;
        }
        let a = art_start + i;
        row[a] = T::one();
        tab.basis[i] = a;
        tab.active[i] = true;
    }
    for j in 0..width {
        tab.barred[j] = match tab.kinds.get(j) {
            Some(ColKind::Artificial) => !tab.basis.contains(&j),
            Some(ColKind::Track) => true,
            _ => false,
        };
    }
    let mut cost = vec![T::zero(); width];
    for i in 0..m {
        if tab.active[i] {
            for j in n..width {
                if tab.kinds.get(j) != Some(&ColKind::Artificial) {
                    cost[j] = cost[j].clone() - tab.rows[i][j].clone();
                }
            }
        }
    }
    tab.cost = cost;
    tab.optimize()?;
    let phase1 = tab.value().abs();
    if phase1 > *feasibility_tol {
        let w = tab.cost[track_start..rhs]
            .iter()
            .map(|v| -v.clone())
            .collect();
        return infeasible(problem, phase1, certify.then_some(w));
    }

    // Drive artificials out of the basis; drop redundant rows.
    for i in 0..m {
        if !tab.active[i] || tab.kinds[tab.basis[i]] != ColKind::Artificial {
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for j in n..art_start {
            let a = tab.rows[i][j].abs();
            if a > T::pivot_tol() && best.as_ref().is_none_or(|(_, b)| a > *b) {
                best = Some((j, a));
            }
        }
        match best {
            Some((j, _)) => tab.pivot(i, j),
            None => tab.active[i] = false,
        }
    }
    for j in art_start..rhs {
        tab.barred[j] = true;
    }

    // Phase 2.
    let mut objective = T::zero();
    if let Some(c) = &problem.objective {
        let mut cost = vec![T::zero(); width];
        for (j, v) in c {
            cost[*j] = cost[*j].clone() + v.clone();
        }
        for i in 0..m {
            let b = tab.basis[i];
            if b == usize::MAX || b >= width || cost[b].is_zero() {
                continue;
            }
            let f = cost[b].clone();
            for j in 0..width {
                if !tab.rows[i][j].is_zero() {
                    cost[j] = (cost[j].clone() - f.clone() * tab.rows[i][j].clone()).clean();
                }
            }
        }
        // A free variable outside the basis with nonzero cost can move without limit.
        for j in 0..n {
            if !tab.basis.contains(&j) && !cost[j].is_negligible() {
                return Err(SolverError::Unbounded);
            }
        }
        tab.cost = cost;
        if !tab.optimize()? {
            return Err(SolverError::Unbounded);
        }
        objective = tab.value();
    }

    let mut x = vec![T::zero(); n];
    for i in 0..m {
        let b = tab.basis[i];
        if b < n {
            x[b] = tab.rows[i][rhs].clone();
        }
    }
    Ok(SimplexResult::Solved {
        x,
        objective,
        phase1,
    })
}

fn infeasible<T: LpScalar>(
    problem: &StdProblem<T>,
    phase1: T,
    certificate: Option<Vec<T>>,
) -> Result<SimplexResult<T>, SolverError> {
    match certificate {
        Some(w) if !farkas_holds(problem, &w) => Err(SolverError::Numerical(
            "infeasibility certificate failed verification".into(),
        )),
        _ => Ok(SimplexResult::Infeasible { phase1 }),
    }
}

/// Checks `wᵀb > 0`, `wᵀA = 0` and `w ≥ 0` on `≥` rows against the input
/// rows, after scaling `w` so that `wᵀb = 1`.
fn farkas_holds<T: LpScalar>(problem: &StdProblem<T>, w: &[T]) -> bool {
    const DUAL_TOL: f64 = 1e-7;
    let w: Vec<f64> = w.iter().map(LpScalar::to_f64).collect();
    let wb: f64 = problem
        .rows
        .iter()
        .zip(&w)
        .map(|(r, wi)| wi * r.rhs.to_f64())
        .sum();
    let scale: f64 = w.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if wb.is_nan() || wb <= 1e-9 * scale.max(1.0) {
        return false;
    }
    let mut wa = vec![0.0; problem.num_vars];
    for (r, wi) in problem.rows.iter().zip(&w) {
        let wi = wi / wb;
        if r.kind == RowKind::Ge && wi < -DUAL_TOL {
            return false;
        }
        for (j, a) in &r.terms {
            wa[*j] += wi * a.to_f64();
        }
    }
    wa.iter().all(|v| v.abs() <= DUAL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    // x ≥ 1 and −x ≥ 0
    fn contradictory() -> StdProblem<f64> {
        StdProblem {
            num_vars: 1,
            rows: vec![
                StdRow {
                    terms: vec![(0, 1.0)],
                    kind: RowKind::Ge,
                    rhs: 1.0,
                },
                StdRow {
                    terms: vec![(0, -1.0)],
                    kind: RowKind::Ge,
                    rhs: 0.0,
                },
            ],
            objective: None,
        }
    }

    #[test]
    fn farkas_check_accepts_only_valid_certificates() {
        let p = contradictory();
        assert!(farkas_holds(&p, &[1.0, 1.0]));
        assert!(farkas_holds(&p, &[2.0, 2.0]));
        assert!(!farkas_holds(&p, &[1.0, 0.5]));
        assert!(!farkas_holds(&p, &[-1.0, -1.0]));
    }

    #[test]
    fn infeasible_verdict_carries_a_verified_certificate() {
        let r = solve(&contradictory(), &1e-9, 100).unwrap();
        assert!(matches!(r, SimplexResult::Infeasible { .. }));
    }
}
