//! Downward-sloping demand correlation and Ellsberg ambiguity classes.

use serde::{Deserialize, Serialize};

use crate::model::{EllsbergAnswers, EllsbergChoice, QuestionType, SubjectDataset, TOKENS};

/// Slider resolution; corner allocations are clamped to it before taking logs.
pub const TOKEN_RESOLUTION: f64 = 0.01;

/// `|ρ|` cap before the Fisher transform.
pub const ATANH_CAP: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerPolicy {
    /// Clamp allocations to `[0.01, 99.99]` tokens.
    #[default]
    Clamp,
    /// Drop corner observations from the correlation.
    Drop,
}

/// Relative tolerance under which two values share a rank.
pub const RANK_TIE_TOL: f64 = 1e-12;

/// Average ranks, ties sharing the mean of their positions (1-based).
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let tied = |a: f64, b: f64| (a - b).abs() <= RANK_TIE_TOL * a.abs().max(b.abs()).max(1.0);
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && tied(v[idx[j + 1]], v[idx[i]]) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation via Pearson on midranks. `None` if either series is
/// constant (or shorter than 2).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `tanh(mean(atanh ρ_t))`, with `|ρ_t|` capped at [`ATANH_CAP`].
pub fn fisher_aggregate(rhos: &[f64]) -> Option<f64> {
    if rhos.is_empty() {
        return None;
    }
    if rhos.iter().all(|r| *r == rhos[0]) {
        return Some(rhos[0]);
    }
    let mean = rhos
        .iter()
        .map(|r| r.clamp(-ATANH_CAP, ATANH_CAP).atanh())
        .sum::<f64>()
        / rhos.len() as f64;
    Some(mean.tanh())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeCorrelation {
    pub rho: f64,
    /// The rank series had no variance and `rho` was set to 0.
    pub zero_variance: bool,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsdCorrelation {
    pub type1: Option<TypeCorrelation>,
    pub type2: Option<TypeCorrelation>,
    /// Fisher-aggregated `ρ^dsd`; `None` if no type had 3 usable observations.
    pub rho_dsd: Option<f64>,
}

/// Spearman correlation of `log(p2/p1)` with `log(x2/x1)` within each type,
/// Fisher-aggregated across types.
pub fn dsd_correlation(ds: &SubjectDataset, policy: CornerPolicy) -> DsdCorrelation {
    let per = |t: QuestionType| -> Option<TypeCorrelation> {
        let mut lp = Vec::new();
        let mut lx = Vec::new();
        for o in ds.observations.iter().filter(|o| o.qtype == t) {
            let (a1, a2) = match policy {
                CornerPolicy::Clamp => {
                    let a1 = o.a1.clamp(TOKEN_RESOLUTION, TOKENS - TOKEN_RESOLUTION);
                    (a1, TOKENS - a1)
                }
                CornerPolicy::Drop if o.is_corner() => continue,
                CornerPolicy::Drop => (o.a1, o.a2),
            };
            lp.push(o.budget.relative_price().ln());
            lx.push((a2 * o.budget.z2).ln() - (a1 * o.budget.z1).ln());
        }
        if lp.len() < 3 {
            return None;
        }
        Some(match spearman(&lp, &lx) {
            Some(rho) => TypeCorrelation {
                rho,
                zero_variance: false,
                n: lp.len(),
            },
            None => TypeCorrelation {
                rho: 0.0,
                zero_variance: true,
                n: lp.len(),
            },
        })
    };
    let type1 = per(QuestionType::Type1);
    let type2 = per(QuestionType::Type2);
    let rhos: Vec<f64> = type1.iter().chain(type2.iter()).map(|c| c.rho).collect();
    DsdCorrelation {
        type1,
        type2,
        rho_dsd: fisher_aggregate(&rhos),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityClass {
    StrictAA,
    WeakAA,
    NotAA,
    Unavailable,
}

impl AmbiguityClass {
    /// Strict aversion is a special case of weak aversion.
    pub fn is_weak(self) -> bool {
        matches!(self, AmbiguityClass::StrictAA | AmbiguityClass::WeakAA)
    }
}

pub fn classify_ambiguity(answers: Option<&EllsbergAnswers>) -> AmbiguityClass {
    use EllsbergChoice::Risky;
    match answers {
        None => AmbiguityClass::Unavailable,
        Some(a) if a.q1 == Risky && a.q2 == Risky && a.q3 == Risky => AmbiguityClass::StrictAA,
        Some(a) if a.q1 == Risky && a.q2 == Risky => AmbiguityClass::WeakAA,
        Some(_) => AmbiguityClass::NotAA,
    }
}
