//! Epstein's necessary condition for probabilistic sophistication and event
//! monotonicity on the fixed question pair.

use serde::{Deserialize, Serialize};

use crate::model::{Observation, QuestionType, SubjectDataset};

/// Relative tolerance for comparing prices and payoffs within an observation.
pub const COMPARE_TOL: f64 = 1e-9;

/// Default token margin for the descriptive monotonicity statistic.
pub const MONOTONICITY_MARGIN: f64 = 5.0;

fn gt(a: f64, b: f64) -> bool {
    a - b > COMPARE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn ge(a: f64, b: f64) -> bool {
    b - a <= COMPARE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `false` iff there are observations `k, k'` and events `s ≠ t` with
/// `p^k_t ≥ p^k_s`, `p^{k'}_s ≥ p^{k'}_t` (one of them strict) while the
/// subject strictly favours `t` at `k` and `s` at `k'`.
pub fn check_epstein(obs: &[&Observation]) -> bool {
    epstein_on(
        &obs.iter()
            .map(|o| (o.prices(), o.payoffs()))
            .collect::<Vec<_>>(),
    )
}

/// Same test on raw `(prices, payoffs)` pairs over two events.
pub fn epstein_on(data: &[([f64; 2], [f64; 2])]) -> bool {
    for (pk, xk) in data {
        for (pl, xl) in data {
            for (s, t) in [(0usize, 1usize), (1, 0)] {
                let prices_weak = ge(pk[t], pk[s]) && ge(pl[s], pl[t]);
                let one_strict = gt(pk[t], pk[s]) || gt(pl[s], pl[t]);
                if prices_weak && one_strict && gt(xk[t], xk[s]) && gt(xl[s], xl[t]) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Satisfied,
    SatisfiedWithMargin,
    Violated,
    Unavailable,
}

/// Compares tokens on account 1 in the equal-budget type 1 / type 2 pair:
/// the type 2 event `{ω1, ω2}` contains the type 1 event `{ω1}`.
pub fn check_event_monotonicity(ds: &SubjectDataset, margin: f64) -> Monotonicity {
    let Some((q1, q2)) = ds.fixed_pair else {
        return Monotonicity::Unavailable;
    };
    let (Some(t1), Some(t2)) = (ds.observation(q1), ds.observation(q2)) else {
        return Monotonicity::Unavailable;
    };
    classify_monotonicity(t1.a1, t2.a1, margin)
}

pub fn classify_monotonicity(type1_a1: f64, type2_a1: f64, margin: f64) -> Monotonicity {
    if ge(type2_a1, type1_a1) {
        Monotonicity::Satisfied
    } else if ge(type2_a1, type1_a1 - margin) {
        Monotonicity::SatisfiedWithMargin
    } else {
        Monotonicity::Violated
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsteinVerdict {
    pub type1: Option<bool>,
    pub type2: Option<bool>,
}

pub fn check_epstein_by_type(ds: &SubjectDataset) -> EpsteinVerdict {
    let per = |t| {
        let obs = ds.of_type(t);
        (!obs.is_empty()).then(|| check_epstein(&obs))
    };
    EpsteinVerdict {
        type1: per(QuestionType::Type1),
        type2: per(QuestionType::Type2),
    }
}

/// Not inconsistent with probabilistic sophistication: Epstein passes for both
/// types and event monotonicity holds exactly (no margin).
pub fn check_ps_joint(ds: &SubjectDataset) -> bool {
    let e = check_epstein_by_type(ds);
    e.type1 == Some(true)
        && e.type2 == Some(true)
        && check_event_monotonicity(ds, 0.0) == Monotonicity::Satisfied
}
