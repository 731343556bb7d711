//! Minimal price perturbation `e*` that makes a dataset SEU or MEU rational.
//!
//! After log-linearizing, the perturbation of observation `k` enters only
//! through `T_k = w^k_1 − w^k_2 (+ log belief weight)` with
//! `w^k_s = log v^k_s − log p^k_s`. The smallest bound on the cross-observation
//! ratio is `δ* = min max_{k,l same type} |T_k − T_l|` over assignments that
//! satisfy concavity (and the belief-ordering rows for MEU); `e* = exp(δ*) − 1`.
//!
//! The default program uses the range of `T` per type: variables `U_i ≥ T_k ≥ L_i`
//! and objective terms `U_i − L_i`. This has the same optimum as the pairwise
//! absolute values with `O(K)` rows instead of `O(K²)`; the pairwise form is
//! kept for cross-checking.

use serde::{Deserialize, Serialize};

use crate::lp::{solve_minmax, AffineExpr, LinearSystem, Row, SolverError, SolverOptions};
use crate::model::{QuestionType, SubjectDataset};
use crate::seu_meu::{add_concavity, add_log_v, add_prior_vars, ConcavityMode, PayoffVars};

/// `δ*` values this close to zero count as exact rationality.
pub const ZERO_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveForm {
    /// Per-type range `U_i − L_i`.
    #[default]
    Range,
    /// Both orientations of every same-type pair.
    Pairwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Seu,
    Meu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationResult {
    pub e_star: f64,
    pub delta_star: f64,
    #[serde(skip)]
    pub solution: Option<Vec<f64>>,
    /// Same-type observation pairs `(k, l)`, `k < l`, that enter the maximum.
    pub objective_pairs: usize,
}

impl PerturbationResult {
    pub fn is_zero(&self) -> bool {
        self.delta_star <= ZERO_TOL
    }
}

/// The assembled program plus where each observation's `T_k` lives.
#[derive(Clone, Debug)]
pub struct PerturbationProgram {
    pub system: LinearSystem,
    pub payoff: PayoffVars,
    /// Belief-weight variable on account 1 (MEU only).
    pub weight: Option<Vec<usize>>,
    pub objective_pairs: usize,
}

impl PerturbationProgram {
    /// `T_k` as an affine expression.
    fn t_expr(&self, ds: &SubjectDataset, k: usize) -> AffineExpr {
        let o = &ds.observations[k];
        let p = o.prices();
        let mut terms = vec![
            (self.payoff.log_v[k][0], 1.0),
            (self.payoff.log_v[k][1], -1.0),
        ];
        if let Some(w) = &self.weight {
            terms.push((w[k], 1.0));
        }
        AffineExpr::new(terms, p[1].ln() - p[0].ln())
    }

    /// Largest `(ε^k_s/ε^k_t)/(ε^l_s/ε^l_t)` over same-type pairs, with `ε`
    /// backed out from the perturbed first-order conditions at `z`.
    pub fn max_perturbation_ratio(&self, ds: &SubjectDataset, z: &[f64]) -> f64 {
        let mut worst = 1.0_f64;
        for (k, ok) in ds.observations.iter().enumerate() {
            for (l, ol) in ds.observations.iter().enumerate() {
                if ok.qtype != ol.qtype {
                    continue;
                }
                let lt = self.log_eps_ratio(ds, k, z) - self.log_eps_ratio(ds, l, z);
                worst = worst.max(lt.exp());
            }
        }
        worst
    }

    /// `log ε^k_1 − log ε^k_2`, with `λ^k` and the common belief terms cancelling.
    fn log_eps_ratio(&self, ds: &SubjectDataset, k: usize, z: &[f64]) -> f64 {
        self.t_expr(ds, k).eval(z)
    }
}

pub fn build_perturbation_program(
    ds: &SubjectDataset,
    model: Model,
    form: ObjectiveForm,
    mode: ConcavityMode,
) -> PerturbationProgram {
    let mut sys = LinearSystem::new();
    let payoff = add_log_v(&mut sys, ds);
    let weight = match model {
        Model::Seu => {
            // The belief weights cancel from the objective and only meet here.
            let has1 = ds.has_type(QuestionType::Type1);
            let has2 = ds.has_type(QuestionType::Type2);
            if has1 && has2 {
                let m23 = sys.add_var("log_mu23");
                let m12 = sys.add_var("log_mu12");
                sys.add_ge(vec![(m23, 1.0), (m12, 1.0)], 0.0);
            }
            None
        }
        Model::Meu => Some(add_prior_vars(&mut sys, ds).2),
    };
    add_concavity(&mut sys, ds, &payoff, mode);

    let mut program = PerturbationProgram {
        system: sys,
        payoff,
        weight,
        objective_pairs: 0,
    };
    let mut exprs = Vec::new();
    for t in QuestionType::ALL {
        let idx: Vec<usize> = (0..ds.observations.len())
            .filter(|&k| ds.observations[k].qtype == t)
            .collect();
        if idx.is_empty() {
            continue;
        }
        program.objective_pairs += idx.len() * (idx.len() - 1) / 2;
        match form {
            ObjectiveForm::Range => {
                let hi = program.system.add_var(format!("range_{t}_hi"));
                let lo = program.system.add_var(format!("range_{t}_lo"));
                for &k in &idx {
                    let e = program.t_expr(ds, k);
                    // hi − T_k ≥ 0 and T_k − lo ≥ 0
                    let mut up = vec![(hi, 1.0)];
                    up.extend(e.terms.iter().map(|(j, a)| (*j, -a)));
                    program.system.add_ge(up, e.offset);
                    let mut down = e.terms.clone();
                    down.push((lo, -1.0));
                    program.system.add_ge(down, -e.offset);
                }
                exprs.push(AffineExpr::new(vec![(hi, 1.0), (lo, -1.0)], 0.0));
            }
            ObjectiveForm::Pairwise => {
                for (i, &k) in idx.iter().enumerate() {
                    for &l in &idx[i + 1..] {
                        let (ek, el) = (program.t_expr(ds, k), program.t_expr(ds, l));
                        let diff = |a: &AffineExpr, b: &AffineExpr| {
                            let mut terms = a.terms.clone();
                            terms.extend(b.terms.iter().map(|(j, c)| (*j, -c)));
                            AffineExpr::new(terms, a.offset - b.offset)
                        };
                        exprs.push(diff(&ek, &el));
                        exprs.push(diff(&el, &ek));
                    }
                }
            }
        }
    }
    if !exprs.is_empty() {
        program.system.set_objective(exprs);
    }
    // MON is kept, but nothing else touches its variables, so it cannot bind.
    debug_assert!(
        model == Model::Meu || mon_is_isolated(&program.system),
        "belief variables leak out of the MON row"
    );
    program
}

fn mon_is_isolated(sys: &LinearSystem) -> bool {
    let beliefs: Vec<usize> = (0..sys.num_vars)
        .filter(|&j| sys.var_names[j].starts_with("log_mu"))
        .collect();
    let touches = |r: &Row| r.terms.iter().any(|(j, _)| beliefs.contains(j));
    let in_objective = sys
        .objective
        .iter()
        .flatten()
        .any(|e| e.terms.iter().any(|(j, _)| beliefs.contains(j)));
    !in_objective
        && sys
            .eq_rows
            .iter()
            .chain(&sys.ge_rows)
            .filter(|r| touches(r))
            .count()
            <= 1
}

pub fn minimal_e(
    ds: &SubjectDataset,
    model: Model,
    opts: &SolverOptions,
) -> Result<PerturbationResult, SolverError> {
    minimal_e_with(
        ds,
        model,
        ObjectiveForm::Range,
        ConcavityMode::Chained,
        opts,
    )
}

pub fn minimal_e_seu(
    ds: &SubjectDataset,
    opts: &SolverOptions,
) -> Result<PerturbationResult, SolverError> {
    minimal_e(ds, Model::Seu, opts)
}

pub fn minimal_e_meu(
    ds: &SubjectDataset,
    opts: &SolverOptions,
) -> Result<PerturbationResult, SolverError> {
    minimal_e(ds, Model::Meu, opts)
}

pub fn minimal_e_with(
    ds: &SubjectDataset,
    model: Model,
    form: ObjectiveForm,
    mode: ConcavityMode,
    opts: &SolverOptions,
) -> Result<PerturbationResult, SolverError> {
    let program = build_perturbation_program(ds, model, form, mode);
    if program.system.objective.is_none() {
        // At most one observation per type: nothing to compare.
        return Ok(PerturbationResult {
            e_star: 0.0,
            delta_star: 0.0,
            solution: None,
            objective_pairs: 0,
        });
    }
    let out = solve_minmax(&program.system, opts)?;
    let raw = out
        .objective_value
        .ok_or_else(|| SolverError::Numerical("min-max solve returned no objective".into()))?;
    if raw < -opts.tol.max(ZERO_TOL) {
        return Err(SolverError::Numerical(format!(
            "negative perturbation distance {raw:e}"
        )));
    }
    let delta_star = raw.max(0.0);
    Ok(PerturbationResult {
        e_star: delta_star.exp_m1(),
        delta_star,
        solution: out.solution,
        objective_pairs: program.objective_pairs,
    })
}

/// `e*` per type present and for the pooled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceByType {
    pub type1: Option<f64>,
    pub type2: Option<f64>,
    pub joint: f64,
}

pub fn minimal_e_by_type(
    ds: &SubjectDataset,
    model: Model,
    opts: &SolverOptions,
) -> Result<DistanceByType, SolverError> {
    let mut per = [None, None];
    for t in QuestionType::ALL {
        if ds.has_type(t) {
            per[t.index()] = Some(minimal_e(&ds.restricted_to(t), model, opts)?.e_star);
        }
    }
    Ok(DistanceByType {
        type1: per[0],
        type2: per[1],
        joint: minimal_e(ds, model, opts)?.e_star,
    })
}
