//! Solver layer for the homogeneous systems `A·z = 0, B·z ≥ 0, E·z > 0` and
//! for min-max linear programs. Every revealed-preference test in this crate
//! compiles to a [`LinearSystem`].
//!
//! All variables are free (they are logarithms of positive quantities). The
//! single strict row `E·z > 0` selects one variable; because every other row
//! is homogeneous in that variable, the strict row is feasible exactly when
//! the system with that variable pinned to 1 is feasible, see
//! [`LinearSystem::pin_strict`].

mod scalar;
mod simplex;

use num_rational::BigRational;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

pub use scalar::LpScalar;
use simplex::{RowKind, SimplexResult, StdProblem, StdRow};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Verdicts whose phase-1 margin or optimum falls below this are borderline
/// and get re-solved in rational arithmetic when exact mode is on.
pub const BORDERLINE: f64 = 1e-7;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("malformed system: {0}")]
    Malformed(String),
    #[error("pivot limit of {0} exceeded")]
    IterationLimit(usize),
    #[error("objective unbounded below")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Sparse row `Σ coef·z_var (= | ≥) constant`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Row {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Row { terms, constant }
    }

    pub fn lhs(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|(j, a)| a * z[*j]).sum()
    }
}

/// `Σ coef·z_var + offset`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub offset: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(usize, f64)>, offset: f64) -> Self {
        AffineExpr { terms, offset }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.offset + self.terms.iter().map(|(j, a)| a * z[*j]).sum::<f64>()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LinearSystem {
    pub num_vars: usize,
    pub var_names: Vec<String>,
    pub eq_rows: Vec<Row>,
    pub ge_rows: Vec<Row>,
    /// Variable required to be strictly positive (the `E` row).
    pub strict_var: Option<usize>,
    /// Affine expressions whose maximum is minimized.
    pub objective: Option<Vec<AffineExpr>>,
}

impl LinearSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.var_names.push(name.into());
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, constant: f64) {
        self.eq_rows.push(Row::new(terms, constant));
    }

    pub fn add_ge(&mut self, terms: Vec<(usize, f64)>, constant: f64) {
        self.ge_rows.push(Row::new(terms, constant));
    }

    pub fn set_strict(&mut self, var: usize) {
        self.strict_var = Some(var);
    }

    pub fn set_objective(&mut self, exprs: Vec<AffineExpr>) {
        self.objective = Some(exprs);
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let check_terms = |terms: &[(usize, f64)], what: &str| -> Result<(), SolverError> {
            for (j, a) in terms {
                if *j >= self.num_vars {
                    return Err(SolverError::Malformed(format!(
                        "{what} references variable {j} of {}",
                        self.num_vars
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::Malformed(format!(
                        "{what} has non-finite coefficient"
                    )));
                }
            }
            Ok(())
        };
        for r in self.eq_rows.iter().chain(&self.ge_rows) {
            check_terms(&r.terms, "row")?;
            if !r.constant.is_finite() {
                return Err(SolverError::Malformed("row has non-finite constant".into()));
            }
        }
        if let Some(obj) = &self.objective {
            for e in obj {
                check_terms(&e.terms, "objective")?;
                if !e.offset.is_finite() {
                    return Err(SolverError::Malformed(
                        "objective has non-finite offset".into(),
                    ));
                }
            }
        }
        if let Some(u) = self.strict_var {
            if u >= self.num_vars {
                return Err(SolverError::Malformed(format!(
                    "strict variable {u} out of range"
                )));
            }
        }
        if self.var_names.len() != self.num_vars {
            return Err(SolverError::Malformed("variable names out of sync".into()));
        }
        Ok(())
    }

    /// Replaces `z_u > 0` by `z_u = 1`. Valid when every other row is
    /// positively homogeneous in `z_u`, as all `A`/`B`/`E` systems are.
    pub fn pin_strict(&self) -> LinearSystem {
        let mut out = self.clone();
        if let Some(u) = out.strict_var.take() {
            out.eq_rows.push(Row::new(vec![(u, 1.0)], 1.0));
        }
        out
    }

    /// Epigraph form: a new variable `δ` with `δ ≥ expr` for every objective
    /// expression. Returns the system (without objective) and `δ`'s index.
    pub fn epigraph(&self) -> (LinearSystem, usize) {
        let mut out = self.clone();
        let exprs = out.objective.take().unwrap_or_default();
        let delta = out.add_var("delta");
        for e in exprs {
            let mut terms = vec![(delta, 1.0)];
            terms.extend(e.terms.iter().map(|(j, a)| (*j, -a)));
            out.add_ge(terms, e.offset);
        }
        (out, delta)
    }

    /// Largest violation of any row by `z` (equalities in absolute value).
    pub fn max_residual(&self, z: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.eq_rows {
            worst = worst.max((r.lhs(z) - r.constant).abs());
        }
        for r in &self.ge_rows {
            worst = worst.max(r.constant - r.lhs(z));
        }
        if let Some(u) = self.strict_var {
            worst = worst.max(-z[u]);
        }
        worst
    }

    pub fn objective_value(&self, z: &[f64]) -> Option<f64> {
        self.objective.as_ref().map(|exprs| {
            exprs
                .iter()
                .map(|e| e.eval(z))
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    fn to_std<T: LpScalar>(&self, minimize: Option<usize>) -> StdProblem<T> {
        let conv = |terms: &[(usize, f64)]| -> Vec<(usize, T)> {
            terms.iter().map(|(j, a)| (*j, T::from_f64(*a))).collect()
        };
        let mut rows = Vec::with_capacity(self.eq_rows.len() + self.ge_rows.len());
        for r in &self.eq_rows {
            rows.push(StdRow {
                terms: conv(&r.terms),
                kind: RowKind::Eq,
                rhs: T::from_f64(r.constant),
            });
        }
        for r in &self.ge_rows {
            rows.push(StdRow {
                terms: conv(&r.terms),
                kind: RowKind::Ge,
                rhs: T::from_f64(r.constant),
            });
        }
        StdProblem {
            num_vars: self.num_vars,
            rows,
            objective: minimize.map(|j| vec![(j, T::one())]),
        }
    }

    /// Plain-text dump in CPLEX LP format (all variables free).
    pub fn to_lp_format(&self) -> String {
        let sys = self.pin_strict();
        let (sys, delta) = if sys.objective.is_some() {
            let (s, d) = sys.epigraph();
            (s, Some(d))
        } else {
            (sys, None)
        };
        let name = |j: usize| sanitize(&sys.var_names[j]);
        let mut out = String::new();
        if let Some(u) = self.strict_var {
            let _ = writeln!(out, "\\ strict row {} > 0 pinned to 1", name(u));
        }
        out.push_str("Minimize\n");
        match delta {
            Some(d) => {
                let _ = writeln!(out, " obj: {}", name(d));
            }
            None => out.push_str(" obj: 0\n"),
        }
        out.push_str("Subject To\n");
        let write_row = |out: &mut String, label: String, r: &Row, op: &str| {
            let mut line = format!(" {label}:");
            if r.terms.is_empty() {
                line.push_str(" 0");
            }
            for (k, (j, a)) in r.terms.iter().enumerate() {
                let sign = if *a < 0.0 {
                    " -"
                } else if k == 0 {
                    ""
                } else {
                    " +"
                };
                let _ = write!(line, "{sign} {:?} {}", a.abs(), name(*j));
            }
            let _ = writeln!(out, "{line} {op} {:?}", r.constant);
        };
        for (i, r) in sys.eq_rows.iter().enumerate() {
            write_row(&mut out, format!("e{i}"), r, "=");
        }
        for (i, r) in sys.ge_rows.iter().enumerate() {
            write_row(&mut out, format!("g{i}"), r, ">=");
        }
        out.push_str("Bounds\n");
        for j in 0..sys.num_vars {
            let _ = writeln!(out, " {} free", name(j));
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    OptimumFound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    /// Largest constraint residual of the returned solution.
    pub certificate_quality: f64,
    /// Phase-1 infeasibility at termination (0 for clearly feasible systems).
    pub margin: f64,
    /// The verdict was confirmed in rational arithmetic.
    pub exact: bool,
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(
            self.status,
            SolveStatus::Feasible | SolveStatus::OptimumFound
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Re-verify borderline verdicts with rational arithmetic.
    pub exact: bool,
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            exact: false,
            max_pivots: 50_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Decides whether the system (with its strict row, if any) has a solution.
pub fn solve_feasibility(
    sys: &LinearSystem,
    opts: &SolverOptions,
) -> Result<SolveOutcome, SolverError> {
    sys.validate()?;
    let pinned = sys.pin_strict();
    let fast = match solve_f64(&pinned, None, opts) {
        Err(SolverError::Numerical(_)) => return solve_exact(&pinned, None, opts),
        other => other?,
    };
    let borderline = fast.margin > 1e-13 && fast.margin < BORDERLINE;
    if opts.exact && borderline {
        return solve_exact(&pinned, None, opts);
    }
    Ok(fast)
}

/// Minimizes the maximum of the objective expressions subject to the rows.
pub fn solve_minmax(sys: &LinearSystem, opts: &SolverOptions) -> Result<SolveOutcome, SolverError> {
    sys.validate()?;
    if sys.objective.as_ref().is_none_or(|o| o.is_empty()) {
        return Err(SolverError::Malformed(
            "min-max problem without objective".into(),
        ));
    }
    let pinned = sys.pin_strict();
    let (epi, delta) = pinned.epigraph();
    let mut out = match solve_f64(&epi, Some(delta), opts) {
        Err(SolverError::Numerical(_)) => solve_exact(&epi, Some(delta), opts)?,
        other => other?,
    };
    let borderline_opt = out.objective_value.is_some_and(|v| v.abs() < BORDERLINE);
    let borderline_feas = out.margin > 1e-13 && out.margin < BORDERLINE;
    if opts.exact && (borderline_opt || borderline_feas) {
        out = solve_exact(&epi, Some(delta), opts)?;
    }
    Ok(trim_delta(out, sys.num_vars))
}

fn trim_delta(mut out: SolveOutcome, n: usize) -> SolveOutcome {
    if let Some(z) = out.solution.as_mut() {
        z.truncate(n);
    }
    out
}

fn solve_f64(
    sys: &LinearSystem,
    minimize: Option<usize>,
    opts: &SolverOptions,
) -> Result<SolveOutcome, SolverError> {
    let problem = sys.to_std::<f64>(minimize);
    match simplex::solve(&problem, &opts.tol, opts.max_pivots)? {
        SimplexResult::Infeasible { phase1 } => Ok(SolveOutcome {
            status: SolveStatus::Infeasible,
            solution: None,
            objective_value: None,
            certificate_quality: f64::INFINITY,
            margin: phase1,
            exact: false,
        }),
        SimplexResult::Solved {
            x,
            objective,
            phase1,
        } => {
            let residual = sys.max_residual(&x);
            if residual > opts.tol {
                return Err(SolverError::Numerical(format!(
                    "solution residual {residual:e} exceeds tolerance {:e}",
                    opts.tol
                )));
            }
            Ok(SolveOutcome {
                status: if minimize.is_some() {
                    SolveStatus::OptimumFound
                } else {
                    SolveStatus::Feasible
                },
                solution: Some(x),
                objective_value: minimize.map(|_| objective),
                certificate_quality: residual,
                margin: phase1,
                exact: false,
            })
        }
    }
}

fn solve_exact(
    sys: &LinearSystem,
    minimize: Option<usize>,
    opts: &SolverOptions,
) -> Result<SolveOutcome, SolverError> {
    let problem = sys.to_std::<BigRational>(minimize);
    let zero = <BigRational as num_traits::Zero>::zero();
    match simplex::solve(&problem, &zero, opts.max_pivots)? {
        SimplexResult::Infeasible { phase1 } => Ok(SolveOutcome {
            status: SolveStatus::Infeasible,
            solution: None,
            objective_value: None,
            certificate_quality: f64::INFINITY,
            margin: phase1.to_f64(),
            exact: true,
        }),
        SimplexResult::Solved { x, objective, .. } => {
            let xf: Vec<f64> = x.iter().map(LpScalar::to_f64).collect();
            Ok(SolveOutcome {
                status: if minimize.is_some() {
                    SolveStatus::OptimumFound
                } else {
                    SolveStatus::Feasible
                },
                certificate_quality: sys.max_residual(&xf),
                solution: Some(xf),
                objective_value: minimize.map(|_| objective.to_f64()),
                margin: 0.0,
                exact: true,
            })
        }
    }
}

/// Feasibility decided entirely in rational arithmetic, for cross-checking.
pub fn solve_feasibility_exact(sys: &LinearSystem) -> Result<SolveOutcome, SolverError> {
    sys.validate()?;
    solve_exact(&sys.pin_strict(), None, &SolverOptions::default())
}

/// Min-max optimum computed entirely in rational arithmetic.
pub fn solve_minmax_exact(sys: &LinearSystem) -> Result<SolveOutcome, SolverError> {
    sys.validate()?;
    let (epi, delta) = sys.pin_strict().epigraph();
    Ok(trim_delta(
        solve_exact(&epi, Some(delta), &SolverOptions::default())?,
        sys.num_vars,
    ))
}
