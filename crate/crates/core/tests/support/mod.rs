//! Independent oracles and generators shared by the integration tests.
//!
//! Nothing here calls the library's LP builders or solver: systems are
//! rebuilt from the raw observations and decided by exact Fourier–Motzkin
//! elimination over the rationals.

#![allow(dead_code)]

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;

use seutest::model::{Observation, QuestionType, SubjectDataset, Task};

pub type Q = BigRational;

fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

/// `coef · v (≥ | =) rhs`.
#[derive(Clone, Debug)]
pub struct Row {
    pub coef: Vec<Q>,
    pub rhs: Q,
    pub eq: bool,
}

/// Linear system over `n` real variables.
#[derive(Clone, Debug, Default)]
pub struct Fm {
    pub n: usize,
    pub rows: Vec<Row>,
}

impl Fm {
    pub fn var(&mut self) -> usize {
        self.n += 1;
        for r in &mut self.rows {
            r.coef.push(Q::zero());
        }
        self.n - 1
    }

    fn row(&self, terms: &[(usize, f64)], rhs: Q, eq: bool) -> Row {
        let mut coef = vec![Q::zero(); self.n];
        for &(j, a) in terms {
            coef[j] += q(a);
        }
        Row { coef, rhs, eq }
    }

    pub fn ge(&mut self, terms: &[(usize, f64)], rhs: Q) {
        let r = self.row(terms, rhs, false);
        self.rows.push(r);
    }

    pub fn eq(&mut self, terms: &[(usize, f64)], rhs: Q) {
        let r = self.row(terms, rhs, true);
        self.rows.push(r);
    }

    /// Eliminates every variable except `keep`; returns the remaining
    /// inequalities `a·v_keep ≥ b`, or `None` if a contradiction `0 ≥ b > 0`
    /// (or `0 = b ≠ 0`) appears.
    fn project(&self, keep: Option<usize>) -> Option<Vec<(Q, Q)>> {
        let n = self.n;
        let mut eqs: Vec<Row> = self.rows.iter().filter(|r| r.eq).cloned().collect();
        let mut ges: Vec<Row> = self.rows.iter().filter(|r| !r.eq).cloned().collect();
        let mut eliminated = vec![false; n];

        // Substitute equalities away.
        while let Some(r) = eqs.pop() {
            let pivot = (0..n).find(|&j| Some(j) != keep && !r.coef[j].is_zero());
            let Some(j) = pivot else {
                match keep.filter(|&k| !r.coef[k].is_zero()) {
                    // a·v = b becomes two inequalities on the kept variable.
                    Some(_) => {
                        ges.push(Row {
                            eq: false,
                            ..r.clone()
                        });
                        ges.push(Row {
                            coef: r.coef.iter().map(|c| -c).collect(),
                            rhs: -r.rhs.clone(),
                            eq: false,
                        });
                        continue;
                    }
                    None if r.rhs.is_zero() => continue,
                    None => return None,
                }
            };
            let sub = |t: &mut Row| {
                if t.coef[j].is_zero() {
                    return;
                }
                let f = &t.coef[j] / &r.coef[j];
                for i in 0..n {
                    let d = &f * &r.coef[i];
                    t.coef[i] -= d;
                }
                t.rhs -= &f * &r.rhs;
            };
            eqs.iter_mut().for_each(sub);
            ges.iter_mut().for_each(sub);
            eliminated[j] = true;
        }

        let mut ges = dedup(ges, n)?;
        loop {
            // Variable with the smallest fan-out.
            let mut best: Option<(usize, usize)> = None;
            for j in 0..n {
                if Some(j) == keep || eliminated[j] {
                    continue;
                }
                let pos = ges.iter().filter(|r| r.coef[j].is_positive()).count();
                let neg = ges.iter().filter(|r| r.coef[j].is_negative()).count();
                if pos + neg == 0 {
                    eliminated[j] = true;
                    continue;
                }
                let cost = pos * neg;
                if best.is_none_or(|(_, c)| cost < c) {
                    best = Some((j, cost));
                }
            }
            let Some((j, _)) = best else { break };
            let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
            for r in ges {
                if r.coef[j].is_positive() {
                    pos.push(r);
                } else if r.coef[j].is_negative() {
                    neg.push(r);
                } else {
                    rest.push(r);
                }
            }
            for p in &pos {
                for m in &neg {
                    let a = p.coef[j].clone();
                    let b = -m.coef[j].clone();
                    let coef: Vec<Q> = (0..n).map(|i| &p.coef[i] * &b + &m.coef[i] * &a).collect();
                    rest.push(Row {
                        coef,
                        rhs: &p.rhs * &b + &m.rhs * &a,
                        eq: false,
                    });
                }
            }
            eliminated[j] = true;
            ges = dedup(rest, n)?;
        }
        Some(
            ges.into_iter()
                .map(|r| match keep {
                    Some(k) => (r.coef[k].clone(), r.rhs),
                    None => (Q::zero(), r.rhs),
                })
                .collect(),
        )
    }

    pub fn feasible(&self) -> bool {
        self.project(None).is_some()
    }

    /// Infimum of `v_target`, `None` if infeasible; panics if unbounded below.
    pub fn minimize(&self, target: usize) -> Option<Q> {
        let rows = self.project(Some(target))?;
        let mut lo: Option<Q> = None;
        let mut hi: Option<Q> = None;
        for (a, b) in rows {
            if a.is_positive() {
                let v = &b / &a;
                if lo.as_ref().is_none_or(|l| v > *l) {
                    lo = Some(v);
                }
            } else if a.is_negative() {
                let v = &b / &a;
                if hi.as_ref().is_none_or(|h| v < *h) {
                    hi = Some(v);
                }
            }
        }
        let lo = lo.expect("objective unbounded below");
        match hi {
            Some(h) if h < lo => None,
            _ => Some(lo),
        }
    }
}

/// Scales rows to a unit leading coefficient and keeps the tightest
/// right-hand side per direction; `None` on a contradiction.
fn dedup(rows: Vec<Row>, n: usize) -> Option<Vec<Row>> {
    let mut best: HashMap<Vec<Q>, Q> = HashMap::new();
    for r in rows {
        let Some(lead) = r.coef.iter().find(|c| !c.is_zero()).map(|c| c.abs()) else {
            if r.rhs.is_positive() {
                return None;
            }
            continue;
        };
        let coef: Vec<Q> = r.coef.iter().map(|c| c / &lead).collect();
        let rhs = &r.rhs / &lead;
        match best.get_mut(&coef) {
            Some(b) if *b >= rhs => {}
            Some(b) => *b = rhs,
            None => {
                best.insert(coef, rhs);
            }
        }
    }
    let mut out: Vec<Row> = best
        .into_iter()
        .map(|(coef, rhs)| Row {
            coef,
            rhs,
            eq: false,
        })
        .collect();
    out.sort_by(|a, b| a.coef.cmp(&b.coef).then(a.rhs.cmp(&b.rhs)));
    debug_assert!(out.iter().all(|r| r.coef.len() == n));
    Some(out)
}

/// `x_a` pays strictly more than `x_b`, beyond the shared relative tie band.
fn pays_more(a: f64, b: f64) -> bool {
    a - b > 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn ln_q(x: f64) -> Q {
    q(x.ln())
}

/// One `log v` variable per (observation, account). Payoffs are grouped into
/// tie classes; every member of a class pays more than every member of the
/// class below, so `log v_low − log v_high ≥ 0` across adjacent classes.
fn payoff_vars(fm: &mut Fm, ds: &SubjectDataset) -> Vec<[usize; 2]> {
    let lv: Vec<[usize; 2]> = ds
        .observations
        .iter()
        .map(|_| [fm.var(), fm.var()])
        .collect();
    let mut slots: Vec<(usize, f64)> = ds
        .observations
        .iter()
        .enumerate()
        .flat_map(|(k, o)| [(lv[k][0], o.x1), (lv[k][1], o.x2)])
        .collect();
    slots.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut classes: Vec<Vec<(usize, f64)>> = Vec::new();
    for s in slots {
        match classes.last_mut() {
            Some(c) if !pays_more(s.1, c[0].1) => c.push(s),
            _ => classes.push(vec![s]),
        }
    }
    for w in classes.windows(2) {
        for &(lo_var, _) in &w[0] {
            for &(hi_var, _) in &w[1] {
                fm.ge(&[(lo_var, 1.0), (hi_var, -1.0)], Q::zero());
            }
        }
    }
    lv
}

/// Exact SEU rationalizability with `λ` substituted out.
pub fn seu_oracle(ds: &SubjectDataset) -> bool {
    let mut fm = Fm::default();
    let lv = payoff_vars(&mut fm, ds);
    let m23 = ds.has_type(QuestionType::Type1).then(|| fm.var());
    let m12 = ds.has_type(QuestionType::Type2).then(|| fm.var());
    for (k, o) in ds.observations.iter().enumerate() {
        let [p1, p2] = o.prices();
        match o.qtype {
            // log v1 − log λ = log p1 and log μ̃23 + log v23 − log λ = log p23
            QuestionType::Type1 => fm.eq(
                &[(lv[k][0], 1.0), (lv[k][1], -1.0), (m23.unwrap(), -1.0)],
                ln_q(p1) - ln_q(p2),
            ),
            // log μ̃12 + log v12 − log λ = log p12 and log v3 − log λ = log p3
            QuestionType::Type2 => fm.eq(
                &[(lv[k][0], 1.0), (lv[k][1], -1.0), (m12.unwrap(), 1.0)],
                ln_q(p1) - ln_q(p2),
            ),
        }
    }
    if let (Some(a), Some(b)) = (m23, m12) {
        fm.ge(&[(a, 1.0), (b, 1.0)], Q::zero());
    }
    fm.feasible()
}

/// `log(1 + e*)` for SEU (`meu = false`) or MEU, minimized exactly over all
/// pairwise objective rows.
pub fn log_estar_oracle(ds: &SubjectDataset, meu: bool) -> f64 {
    let mut fm = Fm::default();
    let lv = payoff_vars(&mut fm, ds);
    let mut weight: Vec<Option<usize>> = vec![None; ds.observations.len()];
    if meu {
        let mut bounds: [Option<(usize, usize)>; 2] = [None, None];
        for t in QuestionType::ALL {
            if ds.has_type(t) {
                let (lo, hi) = (fm.var(), fm.var());
                fm.ge(&[(hi, 1.0), (lo, -1.0)], Q::zero());
                bounds[t.index()] = Some((lo, hi));
            }
        }
        if let [Some((tlo, thi)), Some((plo, phi))] = bounds {
            fm.ge(&[(plo, 1.0), (tlo, -1.0)], Q::zero());
            fm.ge(&[(phi, 1.0), (thi, -1.0)], Q::zero());
        }
        for (k, o) in ds.observations.iter().enumerate() {
            let (lo, hi) = bounds[o.qtype.index()].unwrap();
            let band = 1e-9 * o.x1.abs().max(1.0);
            weight[k] = Some(if o.x2 - o.x1 > band {
                hi
            } else if o.x1 - o.x2 > band {
                lo
            } else {
                let w = fm.var();
                fm.ge(&[(w, 1.0), (lo, -1.0)], Q::zero());
                fm.ge(&[(hi, 1.0), (w, -1.0)], Q::zero());
                w
            });
        }
    }
    let delta = fm.var();
    let mut pairs = 0;
    for (k, ok) in ds.observations.iter().enumerate() {
        for (l, ol) in ds.observations.iter().enumerate() {
            if k == l || ok.qtype != ol.qtype {
                continue;
            }
            pairs += 1;
            // δ − (T_k − T_l) ≥ 0 with T = log v1 − log v2 + w + log p2 − log p1
            let mut terms = vec![
                (delta, 1.0),
                (lv[k][0], -1.0),
                (lv[k][1], 1.0),
                (lv[l][0], 1.0),
                (lv[l][1], -1.0),
            ];
            if let (Some(wk), Some(wl)) = (weight[k], weight[l]) {
                terms.push((wk, -1.0));
                terms.push((wl, 1.0));
            }
            let [pk1, pk2] = ok.prices();
            let [pl1, pl2] = ol.prices();
            let offset = (ln_q(pk2) - ln_q(pk1)) - (ln_q(pl2) - ln_q(pl1));
            fm.ge(&terms, offset);
        }
    }
    if pairs == 0 {
        return 0.0;
    }
    fm.minimize(delta)
        .expect("perturbation program is always feasible")
        .to_f64()
        .expect("representable")
}

/// GARP by enumerating every simple cycle: a violation is a cycle of weak
/// revealed-preference edges with at least one strict edge.
pub fn garp_brute(obs: &[&Observation]) -> bool {
    let k = obs.len();
    let cost = |i: usize, j: usize| {
        let p = obs[i].prices();
        p[0] * obs[j].x1 + p[1] * obs[j].x2
    };
    let band = |i: usize| 1e-9 * cost(i, i).abs().max(1.0);
    let weak = |i: usize, j: usize| cost(i, j) <= cost(i, i) + band(i);
    let strict = |i: usize, j: usize| cost(i, j) < cost(i, i) - band(i);
    fn dfs(
        path: &mut Vec<usize>,
        k: usize,
        weak: &dyn Fn(usize, usize) -> bool,
        strict: &dyn Fn(usize, usize) -> bool,
    ) -> bool {
        let last = *path.last().unwrap();
        if path.len() >= 2 && weak(last, path[0]) {
            let mut cyc = path.clone();
            cyc.push(path[0]);
            if cyc.windows(2).any(|w| strict(w[0], w[1])) {
                return true;
            }
        }
        for next in 0..k {
            if !path.contains(&next) && weak(last, next) {
                path.push(next);
                if dfs(path, k, weak, strict) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    !(0..k).any(|s| dfs(&mut vec![s], k, &weak, &strict))
}

/// Small random dataset with coarse grids, so equal prices and equal
/// payoffs occur with positive probability.
pub fn random_small_dataset<R: Rng>(rng: &mut R, id: usize, max_k: usize) -> SubjectDataset {
    let k = rng.gen_range(1..=max_k);
    let obs = (0..k)
        .map(|i| {
            let qtype = if rng.gen_bool(0.5) {
                QuestionType::Type1
            } else {
                QuestionType::Type2
            };
            let (z1, z2) = if rng.gen_bool(0.3) {
                (
                    0.1 * rng.gen_range(1..=6) as f64,
                    0.1 * rng.gen_range(1..=6) as f64,
                )
            } else {
                (rng.gen_range(0.1..0.6), rng.gen_range(0.1..0.6))
            };
            let a1 = if rng.gen_bool(0.3) {
                10.0 * rng.gen_range(1..=9) as f64
            } else {
                rng.gen_range(1.0..99.0)
            };
            Observation::new(i as u32 + 1, qtype, z1, z2, a1, 100.0 - a1).unwrap()
        })
        .collect();
    SubjectDataset::new(format!("rnd{id}"), Task::MarketStock, obs, None, None).unwrap()
}

/// Optimal tokens on account 1 for a CRRA expected-utility maximizer with
/// weight `w` on account 1 and relative risk aversion `rho`.
pub fn crra_tokens(z1: f64, z2: f64, w: f64, rho: f64) -> f64 {
    // w·x1^{−ρ} / ((1 − w)·x2^{−ρ}) = p1 / p2 = z2 / z1
    let ratio = ((1.0 - w) * z2 / (w * z1)).powf(1.0 / rho); // x2 / x1
                                                             // a1 + a2 = 100 with x1 = a1·z1, x2 = a2·z2
    let x1 = 100.0 / (1.0 / z1 + ratio / z2);
    (x1 / z1).clamp(0.0, 100.0)
}

/// Subject whose choices maximize CRRA expected utility under the state
/// prior `prior` over (ω1, ω2, ω3).
pub fn seu_subject(
    design: &seutest::data_io::DesignTable,
    id: &str,
    prior: [f64; 3],
    rho: f64,
) -> SubjectDataset {
    let obs = design
        .rows
        .iter()
        .map(|r| {
            let w = match r.qtype {
                QuestionType::Type1 => prior[0],
                QuestionType::Type2 => prior[0] + prior[1],
            };
            let a1 = crra_tokens(r.z1, r.z2, w, rho);
            Observation::new(r.question_id, r.qtype, r.z1, r.z2, a1, 100.0 - a1).unwrap()
        })
        .collect();
    SubjectDataset::new(id, Task::MarketStock, obs, None, design.fixed_pair()).unwrap()
}

/// Draws a prior from the open simplex and a risk-aversion coefficient.
pub fn random_seu_subject<R: Rng>(
    rng: &mut R,
    design: &seutest::data_io::DesignTable,
    id: &str,
) -> SubjectDataset {
    let g: [f64; 3] = [
        rng.gen_range(0.2..1.0),
        rng.gen_range(0.2..1.0),
        rng.gen_range(0.2..1.0),
    ];
    let s: f64 = g.iter().sum();
    let prior = [g[0] / s, g[1] / s, g[2] / s];
    let rho = rng.gen_range(0.5..4.0);
    seu_subject(design, id, prior, rho)
}
