//! Exact SEU and MEU tests on a subject's pooled two-type dataset.
//!
//! Both tests are log-linearized Afriat systems. Type 1 questions bet on
//! `{ω1}` versus `{ω2,ω3}` and type 2 questions on `{ω1,ω2}` versus `{ω3}`;
//! beliefs enter through one relative weight per partition, and the two
//! partitions are tied together by event monotonicity (SEU) or by the ordering
//! of the prior bounds (MEU). Concavity of the utility index is imposed over
//! all observations of the task, since both types pay in the same money.

use serde::{Deserialize, Serialize};

use crate::lp::{solve_feasibility, LinearSystem, SolverError, SolverOptions};
use crate::model::{QuestionType, SubjectDataset};

/// Relative tolerance under which two payoffs are treated as equal.
pub const PAYOFF_TIE_TOL: f64 = 1e-9;

/// How the concavity rows `x_a > x_b ⇒ log v_a ≤ log v_b` are generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConcavityMode {
    /// Only between adjacent levels of the sorted distinct payoffs.
    #[default]
    Chained,
    /// One row for every strictly ordered pair.
    Full,
}

pub(crate) fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= PAYOFF_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Pairs `(a, b)` of payoff slots with `x_a > x_b`; each yields `v_a ≤ v_b`.
pub fn concavity_pairs(payoffs: &[f64], mode: ConcavityMode) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    match mode {
        ConcavityMode::Full => {
            for (a, xa) in payoffs.iter().enumerate() {
                for (b, xb) in payoffs.iter().enumerate() {
                    if xa > xb && !ties(*xa, *xb) {
                        pairs.push((a, b));
                    }
                }
            }
        }
        ConcavityMode::Chained => {
            let mut order: Vec<usize> = (0..payoffs.len()).collect();
            order.sort_by(|&a, &b| payoffs[a].total_cmp(&payoffs[b]).then(a.cmp(&b)));
            let mut groups: Vec<Vec<usize>> = Vec::new();
            let mut anchor = f64::NAN;
            for idx in order {
                let x = payoffs[idx];
                match groups.last_mut() {
                    Some(g) if ties(anchor, x) => g.push(idx),
                    _ => {
                        anchor = x;
                        groups.push(vec![idx]);
                    }
                }
            }
            for w in groups.windows(2) {
                for &hi in &w[1] {
                    for &lo in &w[0] {
                        pairs.push((hi, lo));
                    }
                }
            }
        }
    }
    pairs
}

/// Which of the two accounts pays more, up to the tie tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `x_1 = x_2`: on the 45-degree line.
    Diagonal,
    /// `x_1 < x_2`.
    Below,
    /// `x_1 > x_2`.
    Above,
}

pub fn classify_region(x1: f64, x2: f64) -> Region {
    if (x1 - x2).abs() <= PAYOFF_TIE_TOL * x1.abs().max(1.0) {
        Region::Diagonal
    } else if x1 < x2 {
        Region::Below
    } else {
        Region::Above
    }
}

/// Variable indices shared by the SEU/MEU exact and perturbed systems.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffVars {
    /// `log v^k_s` for observation `k` (dataset order) and account `s`.
    pub log_v: Vec<[usize; 2]>,
}

pub(crate) fn add_log_v(sys: &mut LinearSystem, ds: &SubjectDataset) -> PayoffVars {
    let log_v = ds
        .observations
        .iter()
        .map(|o| {
            [
                sys.add_var(format!("log_v_q{}_e1", o.question_id)),
                sys.add_var(format!("log_v_q{}_e2", o.question_id)),
            ]
        })
        .collect();
    PayoffVars { log_v }
}

pub(crate) fn add_concavity(
    sys: &mut LinearSystem,
    ds: &SubjectDataset,
    vars: &PayoffVars,
    mode: ConcavityMode,
) {
    let mut slots = Vec::with_capacity(2 * ds.observations.len());
    let mut payoffs = Vec::with_capacity(2 * ds.observations.len());
    for (k, o) in ds.observations.iter().enumerate() {
        for s in 0..2 {
            slots.push(vars.log_v[k][s]);
            payoffs.push(o.payoffs()[s]);
        }
    }
    for (hi, lo) in concavity_pairs(&payoffs, mode) {
        sys.add_ge(vec![(slots[lo], 1.0), (slots[hi], -1.0)], 0.0);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeuLayout {
    pub payoff: PayoffVars,
    /// `log μ̃23`, weight of `{ω2,ω3}` relative to `{ω1}` (type 1 present).
    pub log_mu23: Option<usize>,
    /// `log μ̃12`, weight of `{ω1,ω2}` relative to `{ω3}` (type 2 present).
    pub log_mu12: Option<usize>,
    pub log_lambda: Vec<usize>,
    pub u: usize,
}

impl SeuLayout {
    /// Variable carrying the belief weight of account `s` in a question of type `t`.
    pub fn belief_var(&self, t: QuestionType, s: usize) -> Option<usize> {
        match (t, s) {
            (QuestionType::Type1, 1) => self.log_mu23,
            (QuestionType::Type2, 0) => self.log_mu12,
            _ => None,
        }
    }
}

pub fn build_seu_system(ds: &SubjectDataset) -> LinearSystem {
    build_seu_system_with(ds, ConcavityMode::Chained).0
}

/// First-order conditions `log μ̃_s + log v^k_s − log λ^k − u·log p^k_s = 0`
/// (with `μ̃ = 1` on `{ω1}` and `{ω3}`), pooled concavity, and
/// `log μ̃23 + log μ̃12 ≥ 0` when both types are present.
pub fn build_seu_system_with(
    ds: &SubjectDataset,
    mode: ConcavityMode,
) -> (LinearSystem, SeuLayout) {
    let mut sys = LinearSystem::new();
    let payoff = add_log_v(&mut sys, ds);
    let has1 = ds.has_type(QuestionType::Type1);
    let has2 = ds.has_type(QuestionType::Type2);
    let log_mu23 = has1.then(|| sys.add_var("log_mu23"));
    let log_mu12 = has2.then(|| sys.add_var("log_mu12"));
    let log_lambda: Vec<usize> = ds
        .observations
        .iter()
        .map(|o| sys.add_var(format!("log_lambda_q{}", o.question_id)))
        .collect();
    let u = sys.add_var("u");
    let layout = SeuLayout {
        payoff,
        log_mu23,
        log_mu12,
        log_lambda,
        u,
    };

    for (k, o) in ds.observations.iter().enumerate() {
        let p = o.prices();
        for s in 0..2 {
            let mut terms = vec![
                (layout.payoff.log_v[k][s], 1.0),
                (layout.log_lambda[k], -1.0),
                (u, -p[s].ln()),
            ];
            if let Some(m) = layout.belief_var(o.qtype, s) {
                terms.push((m, 1.0));
            }
            sys.add_eq(terms, 0.0);
        }
    }
    add_concavity(&mut sys, ds, &layout.payoff, mode);
    if let (Some(a), Some(b)) = (log_mu23, log_mu12) {
        sys.add_ge(vec![(a, 1.0), (b, 1.0)], 0.0);
    }
    sys.set_strict(u);
    (sys, layout)
}

pub fn test_seu(ds: &SubjectDataset, opts: &SolverOptions) -> Result<bool, SolverError> {
    Ok(solve_feasibility(&build_seu_system(ds), opts)?.is_feasible())
}

/// Belief-bound variables of one partition in the MEU system.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorBounds {
    /// Upper bound (`θ̄` or `π̄`).
    pub hi: usize,
    /// Lower bound (`θ̲` or `π̲`).
    pub lo: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeuLayout {
    pub payoff: PayoffVars,
    pub log_lambda: Vec<usize>,
    /// `log θ` bounds: weight of `{ω1}` relative to `{ω2,ω3}`.
    pub theta: Option<PriorBounds>,
    /// `log π` bounds: weight of `{ω1,ω2}` relative to `{ω3}`.
    pub pi: Option<PriorBounds>,
    /// Weight variable used in the account-1 first-order condition of each observation.
    pub weight: Vec<usize>,
    pub regions: Vec<Region>,
    pub u: usize,
}

pub fn build_meu_system(ds: &SubjectDataset) -> LinearSystem {
    build_meu_system_with(ds, ConcavityMode::Chained).0
}

pub(crate) fn add_prior_vars(
    sys: &mut LinearSystem,
    ds: &SubjectDataset,
) -> (
    Option<PriorBounds>,
    Option<PriorBounds>,
    Vec<usize>,
    Vec<Region>,
) {
    let bounds = |sys: &mut LinearSystem, name: &str| PriorBounds {
        hi: sys.add_var(format!("log_{name}_hi")),
        lo: sys.add_var(format!("log_{name}_lo")),
    };
    let theta = ds
        .has_type(QuestionType::Type1)
        .then(|| bounds(sys, "theta"));
    let pi = ds.has_type(QuestionType::Type2).then(|| bounds(sys, "pi"));
    let mut weight = Vec::with_capacity(ds.observations.len());
    let mut regions = Vec::with_capacity(ds.observations.len());
    for o in &ds.observations {
        let (b, name) = match o.qtype {
            QuestionType::Type1 => (theta.as_ref().expect("type 1 bounds"), "theta"),
            QuestionType::Type2 => (pi.as_ref().expect("type 2 bounds"), "pi"),
        };
        let region = classify_region(o.x1, o.x2);
        // The worse-paying account gets the pessimistic (higher) relative weight.
        let w = match region {
            Region::Below => b.hi,
            Region::Above => b.lo,
            Region::Diagonal => {
                let w = sys.add_var(format!("log_{name}_q{}", o.question_id));
                sys.add_ge(vec![(w, 1.0), (b.lo, -1.0)], 0.0);
                sys.add_ge(vec![(b.hi, 1.0), (w, -1.0)], 0.0);
                w
            }
        };
        weight.push(w);
        regions.push(region);
    }
    for b in theta.iter().chain(pi.iter()) {
        sys.add_ge(vec![(b.hi, 1.0), (b.lo, -1.0)], 0.0);
    }
    if let (Some(t), Some(p)) = (&theta, &pi) {
        sys.add_ge(vec![(p.lo, 1.0), (t.lo, -1.0)], 0.0);
        sys.add_ge(vec![(p.hi, 1.0), (t.hi, -1.0)], 0.0);
    }
    (theta, pi, weight, regions)
}

/// `log w^k + log v^k_1 − log λ^k − u·log p^k_1 = 0` with `w^k` one of the
/// prior bounds (or a per-observation weight between them on the diagonal),
/// `log v^k_2 − log λ^k − u·log p^k_2 = 0`, prior-bound ordering, and pooled
/// concavity.
pub fn build_meu_system_with(
    ds: &SubjectDataset,
    mode: ConcavityMode,
) -> (LinearSystem, MeuLayout) {
    let mut sys = LinearSystem::new();
    let payoff = add_log_v(&mut sys, ds);
    let log_lambda: Vec<usize> = ds
        .observations
        .iter()
        .map(|o| sys.add_var(format!("log_lambda_q{}", o.question_id)))
        .collect();
    let (theta, pi, weight, regions) = add_prior_vars(&mut sys, ds);
    let u = sys.add_var("u");
    for (k, o) in ds.observations.iter().enumerate() {
        let p = o.prices();
        sys.add_eq(
            vec![
                (weight[k], 1.0),
                (payoff.log_v[k][0], 1.0),
                (log_lambda[k], -1.0),
                (u, -p[0].ln()),
            ],
            0.0,
        );
        sys.add_eq(
            vec![
                (payoff.log_v[k][1], 1.0),
                (log_lambda[k], -1.0),
                (u, -p[1].ln()),
            ],
            0.0,
        );
    }
    add_concavity(&mut sys, ds, &payoff, mode);
    sys.set_strict(u);
    let layout = MeuLayout {
        payoff,
        log_lambda,
        theta,
        pi,
        weight,
        regions,
        u,
    };
    (sys, layout)
}

pub fn test_meu(ds: &SubjectDataset, opts: &SolverOptions) -> Result<bool, SolverError> {
    Ok(solve_feasibility(&build_meu_system(ds), opts)?.is_feasible())
}

/// Per-type and joint verdicts; `None` for a type the subject never faced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub type1: Option<bool>,
    pub type2: Option<bool>,
    pub joint: bool,
}

pub fn seu_by_type(ds: &SubjectDataset, opts: &SolverOptions) -> Result<ModelVerdict, SolverError> {
    by_type(ds, opts, test_seu)
}

pub fn meu_by_type(ds: &SubjectDataset, opts: &SolverOptions) -> Result<ModelVerdict, SolverError> {
    by_type(ds, opts, test_meu)
}

fn by_type(
    ds: &SubjectDataset,
    opts: &SolverOptions,
    test: fn(&SubjectDataset, &SolverOptions) -> Result<bool, SolverError>,
) -> Result<ModelVerdict, SolverError> {
    let mut per = [None, None];
    for t in QuestionType::ALL {
        if ds.has_type(t) {
            per[t.index()] = Some(test(&ds.restricted_to(t), opts)?);
        }
    }
    Ok(ModelVerdict {
        type1: per[0],
        type2: per[1],
        joint: test(ds, opts)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_feasibility;
    use crate::model::{Observation, Task};

    fn ds(obs: Vec<Observation>) -> SubjectDataset {
        SubjectDataset::new("t", Task::MarketStock, obs, None, None).unwrap()
    }

    fn one_per_type() -> SubjectDataset {
        ds(vec![
            Observation::new(1, QuestionType::Type1, 0.30, 0.18, 40.0, 60.0).unwrap(),
            Observation::new(11, QuestionType::Type2, 0.14, 0.50, 30.0, 70.0).unwrap(),
        ])
    }

    #[test]
    fn seu_system_counts_for_one_observation_per_type() {
        let (sys, layout) = build_seu_system_with(&one_per_type(), ConcavityMode::Full);
        assert_eq!(sys.num_vars, 9);
        assert_eq!(sys.eq_rows.len(), 4);
        // ≤ 6 concavity rows plus the monotonicity row
        assert!(sys.ge_rows.len() <= 7);
        assert!(layout.log_mu12.is_some() && layout.log_mu23.is_some());
    }

    #[test]
    fn payoff_ties_create_no_rows() {
        assert!(concavity_pairs(&[5.0, 5.0], ConcavityMode::Full).is_empty());
        assert!(concavity_pairs(&[5.0, 5.0 + 1e-12], ConcavityMode::Chained).is_empty());
        assert_eq!(
            concavity_pairs(&[5.0, 4.0], ConcavityMode::Full),
            vec![(0, 1)]
        );
    }

    #[test]
    fn chained_is_adjacent_levels() {
        let p = concavity_pairs(&[3.0, 1.0, 2.0, 2.0], ConcavityMode::Chained);
        // levels: {1} < {2,3} < {0}
        assert_eq!(p.len(), 2 + 2);
        assert!(p.contains(&(2, 1)) && p.contains(&(3, 1)));
        assert!(p.contains(&(0, 2)) && p.contains(&(0, 3)));
    }

    #[test]
    fn one_observation_per_type_is_seu() {
        assert!(test_seu(&one_per_type(), &SolverOptions::default()).unwrap());
    }

    #[test]
    fn single_observation_seu_rational() {
        let d = ds(vec![Observation::new(
            1,
            QuestionType::Type1,
            0.50,
            0.24,
            35.0,
            65.0,
        )
        .unwrap()]);
        assert!(test_seu(&d, &SolverOptions::default()).unwrap());
        let sys = build_seu_system(&d);
        // single type: no monotonicity row, no μ̃12
        assert!(sys.var_names.iter().all(|n| n != "log_mu12"));
    }

    #[test]
    fn crossing_garp_violation_fails_seu() {
        // Type 1 at p2 = 2 buys only account 2; at p2 = 0.5 buys only account 1.
        let d = ds(vec![
            Observation::new(1, QuestionType::Type1, 0.2, 0.1, 0.0, 100.0).unwrap(),
            Observation::new(2, QuestionType::Type1, 0.1, 0.2, 100.0, 0.0).unwrap(),
        ]);
        assert!(!crate::garp::check_garp(&d).joint);
        assert!(!test_seu(&d, &SolverOptions::default()).unwrap());
    }

    #[test]
    fn region_classification() {
        assert_eq!(classify_region(10.0, 12.0), Region::Below);
        assert_eq!(classify_region(12.0, 10.0), Region::Above);
        assert_eq!(classify_region(10.0, 10.0 + 5e-9), Region::Diagonal);
    }

    #[test]
    fn meu_uses_lower_bound_above_the_diagonal() {
        let d = ds(vec![Observation::new(
            1,
            QuestionType::Type1,
            0.30,
            0.18,
            70.0,
            30.0,
        )
        .unwrap()]);
        let (_, layout) = build_meu_system_with(&d, ConcavityMode::Chained);
        assert_eq!(layout.regions[0], Region::Above);
        assert_eq!(layout.weight[0], layout.theta.as_ref().unwrap().lo);
    }

    #[test]
    fn diagonal_observations_get_their_own_weight() {
        // a1·z1 = a2·z2 ⇒ a1 = 100·z2/(z1+z2)
        let obs: Vec<Observation> = [(1, 0.30, 0.18), (2, 0.50, 0.12), (3, 0.40, 0.40)]
            .iter()
            .map(|&(q, z1, z2)| {
                let a1 = 100.0 * z2 / (z1 + z2);
                Observation::new(q, QuestionType::Type1, z1, z2, a1, 100.0 - a1).unwrap()
            })
            .collect();
        let d = ds(obs);
        let (sys, layout) = build_meu_system_with(&d, ConcavityMode::Chained);
        assert!(layout.regions.iter().all(|r| *r == Region::Diagonal));
        let own: std::collections::HashSet<usize> = layout.weight.iter().copied().collect();
        assert_eq!(own.len(), 3);
        assert!(solve_feasibility(&sys, &SolverOptions::default())
            .unwrap()
            .is_feasible());
    }
}
