//! GARP per question type, jointly, and Afriat's critical cost efficiency index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, QuestionType, SubjectDataset};

/// Relative tie tolerance applied to expenditures.
pub const TIE_TOL: f64 = 1e-9;

/// Default bisection precision for the CCEI.
pub const CCEI_PRECISION: f64 = 1e-4;

/// Revealed preference relations over `K` observations, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RevealedRelation {
    pub size: usize,
    /// `direct[k*K + l]`: bundle `k` weakly revealed preferred to bundle `l`.
    pub direct: Vec<bool>,
    pub strict: Vec<bool>,
    pub closure: Vec<bool>,
}

impl RevealedRelation {
    pub fn direct(&self, k: usize, l: usize) -> bool {
        self.direct[k * self.size + l]
    }

    pub fn strict(&self, k: usize, l: usize) -> bool {
        self.strict[k * self.size + l]
    }

    pub fn closure(&self, k: usize, l: usize) -> bool {
        self.closure[k * self.size + l]
    }

    /// No `k R* l` together with `l P k`.
    pub fn satisfies_garp(&self) -> bool {
        let n = self.size;
        (0..n).all(|k| (0..n).all(|l| !(self.closure(k, l) && self.strict(l, k))))
    }
}

/// Prices and payoff bundle for one observation in its own two-event space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PricedBundle {
    pub prices: [f64; 2],
    pub bundle: [f64; 2],
}

impl PricedBundle {
    pub fn cost_of(&self, other: &PricedBundle) -> f64 {
        self.prices[0] * other.bundle[0] + self.prices[1] * other.bundle[1]
    }

    pub fn expenditure(&self) -> f64 {
        self.cost_of(self)
    }
}

impl From<&Observation> for PricedBundle {
    fn from(o: &Observation) -> Self {
        PricedBundle {
            prices: o.prices(),
            bundle: o.payoffs(),
        }
    }
}

pub fn build_relation(obs: &[&Observation], efficiency: f64) -> Result<RevealedRelation> {
    if obs.is_empty() {
        return Err(Error::validation(
            "revealed preference relation needs at least one observation",
        ));
    }
    if obs.iter().any(|o| o.qtype != obs[0].qtype) {
        return Err(Error::validation(
            "revealed preference relation mixes question types",
        ));
    }
    let bundles: Vec<PricedBundle> = obs.iter().map(|o| PricedBundle::from(*o)).collect();
    Ok(relation_from_bundles(&bundles, efficiency))
}

/// `direct[k][l] ⇔ p^k·x^l ≤ e·p^k·x^k`, `strict[k][l] ⇔ p^k·x^l < e·p^k·x^k`,
/// both with a tie band of [`TIE_TOL`] times the expenditure.
pub fn relation_from_bundles(bundles: &[PricedBundle], efficiency: f64) -> RevealedRelation {
    let n = bundles.len();
    let mut direct = vec![false; n * n];
    let mut strict = vec![false; n * n];
    for (k, bk) in bundles.iter().enumerate() {
        let budget = efficiency * bk.expenditure();
        let band = TIE_TOL * bk.expenditure().abs().max(1e-300);
        for (l, bl) in bundles.iter().enumerate() {
            let c = bk.cost_of(bl);
            direct[k * n + l] = c <= budget + band;
            strict[k * n + l] = c < budget - band;
        }
    }
    let closure = transitive_closure(&direct, n);
    RevealedRelation {
        size: n,
        direct,
        strict,
        closure,
    }
}

/// Warshall's algorithm.
pub fn transitive_closure(rel: &[bool], n: usize) -> Vec<bool> {
    let mut c = rel.to_vec();
    for m in 0..n {
        for i in 0..n {
            if !c[i * n + m] {
                continue;
            }
            for j in 0..n {
                if c[m * n + j] {
                    c[i * n + j] = true;
                }
            }
        }
    }
    c
}

pub fn garp_holds(bundles: &[PricedBundle], efficiency: f64) -> bool {
    bundles.is_empty() || relation_from_bundles(bundles, efficiency).satisfies_garp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GarpVerdict {
    /// `None` when the subject answered no question of that type.
    pub type1: Option<bool>,
    pub type2: Option<bool>,
    pub joint: bool,
}

fn bundles_of(ds: &SubjectDataset, t: QuestionType) -> Vec<PricedBundle> {
    ds.observations
        .iter()
        .filter(|o| o.qtype == t)
        .map(PricedBundle::from)
        .collect()
}

/// Per-type GARP; the joint verdict requires both types to pass. The two
/// types live in different commodity spaces, so there is no cross-type relation.
pub fn check_garp(ds: &SubjectDataset) -> GarpVerdict {
    let per = |t| {
        let b = bundles_of(ds, t);
        (!b.is_empty()).then(|| garp_holds(&b, 1.0))
    };
    let type1 = per(QuestionType::Type1);
    let type2 = per(QuestionType::Type2);
    GarpVerdict {
        type1,
        type2,
        joint: type1.unwrap_or(true) && type2.unwrap_or(true),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CceiValue {
    pub type1: Option<f64>,
    pub type2: Option<f64>,
    /// Minimum over the types present.
    pub joint: f64,
}

/// Supremum efficiency at which GARP holds, by bisection on `[0, 1]`.
pub fn ccei_of(bundles: &[PricedBundle], precision: f64) -> f64 {
    if garp_holds(bundles, 1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if garp_holds(bundles, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn compute_ccei(ds: &SubjectDataset, precision: f64) -> CceiValue {
    let per = |t| {
        let b = bundles_of(ds, t);
        (!b.is_empty()).then(|| ccei_of(&b, precision))
    };
    let type1 = per(QuestionType::Type1);
    let type2 = per(QuestionType::Type2);
    let joint = type1.unwrap_or(1.0).min(type2.unwrap_or(1.0));
    CceiValue {
        type1,
        type2,
        joint,
    }
}
