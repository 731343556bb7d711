//! Synthetic subjects (uniform random choice, bootstrap), power studies over
//! them, and geometric Brownian motion price paths.
//!
//! Every synthetic subject gets its own ChaCha8 stream keyed by
//! `(seed, subject index)`, so results do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::data_io::DesignTable;
use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::model::{Observation, State, SubjectDataset, Task, TOKENS};
use crate::report::{
    aggregate, evaluate_subject, Aggregate, AnalysisOptions, Column, Conventions, SubjectReport,
};

/// RNG for subject (or path) `index` under `seed`.
pub fn subject_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn dataset_from_allocations(
    design: &DesignTable,
    subject_id: String,
    task: Task,
    a1: impl Fn(usize) -> f64,
) -> SubjectDataset {
    let obs = design
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = a1(i);
            Observation::new(r.question_id, r.qtype, r.z1, r.z2, a, TOKENS - a)
                .expect("valid synthetic allocation")
        })
        .collect();
    SubjectDataset::new(subject_id, task, obs, None, design.fixed_pair())
        .expect("valid synthetic subject")
}

/// Tokens on account 1 drawn from `U[0, 100]` independently per budget.
pub fn gen_uniform_subject<R: Rng>(
    design: &DesignTable,
    subject_id: impl Into<String>,
    rng: &mut R,
) -> SubjectDataset {
    let draws: Vec<f64> = design
        .rows
        .iter()
        .map(|_| rng.gen::<f64>() * TOKENS)
        .collect();
    dataset_from_allocations(design, subject_id.into(), Task::MarketStock, |i| draws[i])
}

/// Observed account-1 allocations per question id, in source order.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapPool {
    pub task: Task,
    pub by_question: HashMap<u32, Vec<f64>>,
}

impl BootstrapPool {
    pub fn new(design: &DesignTable, source: &[SubjectDataset]) -> Result<Self> {
        let task = source
            .first()
            .map(|d| d.task)
            .ok_or_else(|| Error::validation("bootstrap source panel is empty"))?;
        let mut by_question: HashMap<u32, Vec<f64>> = HashMap::new();
        for ds in source {
            for o in &ds.observations {
                by_question.entry(o.question_id).or_default().push(o.a1);
            }
        }
        for r in &design.rows {
            if by_question.get(&r.question_id).is_none_or(Vec::is_empty) {
                return Err(Error::validation(format!(
                    "bootstrap source has no observations for question {}",
                    r.question_id
                )));
            }
        }
        Ok(BootstrapPool { task, by_question })
    }
}

/// For each budget, one allocation drawn uniformly from the source subjects.
pub fn gen_bootstrap_subject<R: Rng>(
    design: &DesignTable,
    pool: &BootstrapPool,
    subject_id: impl Into<String>,
    rng: &mut R,
) -> SubjectDataset {
    let draws: Vec<f64> = design
        .rows
        .iter()
        .map(|r| {
            let v = &pool.by_question[&r.question_id];
            v[rng.gen_range(0..v.len())]
        })
        .collect();
    dataset_from_allocations(design, subject_id.into(), pool.task, |i| draws[i])
}

#[derive(Clone, Debug)]
pub enum Dgp {
    Uniform,
    Bootstrap(Arc<BootstrapPool>),
}

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::Uniform => "uniform",
            Dgp::Bootstrap(_) => "bootstrap",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub design: DesignTable,
    pub dgp: Dgp,
    pub n_subjects: usize,
    pub seed: u64,
    pub analysis: AnalysisOptions,
    pub execution: Execution,
}

impl SimConfig {
    pub fn new(design: DesignTable, dgp: Dgp, n_subjects: usize, seed: u64) -> Self {
        SimConfig {
            design,
            dgp,
            n_subjects,
            seed,
            analysis: AnalysisOptions::default(),
            execution: Execution::default(),
        }
    }

    pub fn generate(&self, index: usize) -> SubjectDataset {
        let mut rng = subject_rng(self.seed, index as u64);
        let id = format!("sim{index:06}");
        match &self.dgp {
            Dgp::Uniform => gen_uniform_subject(&self.design, id, &mut rng),
            Dgp::Bootstrap(pool) => gen_bootstrap_subject(&self.design, pool, id, &mut rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub dgp: String,
    pub n_subjects: usize,
    pub seed: u64,
    pub design: String,
    pub conventions: Conventions,
    #[serde(flatten)]
    pub aggregate: Aggregate,
}

impl PowerTable {
    fn rate(&self, test: &str, col: Column) -> Option<f64> {
        let row = self.aggregate.pass_rates.iter().find(|r| r.test == test)?;
        match col {
            Column::Type1 => row.type1.rate,
            Column::Type2 => row.type2.rate,
            Column::Joint => row.joint.rate,
        }
    }

    pub fn pass_rate(&self, test: &str, col: Column) -> Option<f64> {
        self.rate(test, col)
    }

    pub fn distance(&self, measure: &str, col: Column) -> Option<&crate::report::DistanceSummary> {
        self.aggregate
            .distances
            .iter()
            .find(|d| d.measure == measure && d.column == col)
    }

    /// Pass rates laid out like the power table: one row, tests × columns.
    pub fn pass_rates_csv(&self) -> String {
        let mut head = vec!["dgp".to_string(), "n".to_string()];
        let mut row = vec![self.dgp.clone(), self.n_subjects.to_string()];
        for test in ["garp", "ps", "seu", "meu"] {
            for col in Column::ALL {
                head.push(format!("{test}_{}", col.as_str()));
                row.push(fmt_opt(self.rate(test, col)));
            }
        }
        head.push("indeterminate_subjects".into());
        row.push(self.aggregate.subjects_with_indeterminate.to_string());
        format!("{}\n{}\n", head.join(","), row.join(","))
    }

    /// Mean / median / SD rows with one column per measure and question type.
    pub fn distances_csv(&self) -> String {
        let measures = ["ccei", "estar_seu", "estar_meu"];
        let mut out = String::from("statistic");
        for m in measures {
            for col in Column::ALL {
                let _ = write!(out, ",{m}_{}", col.as_str());
            }
        }
        out.push('\n');
        type Pick = fn(&crate::report::DistanceSummary) -> Option<f64>;
        let stats: [(&str, Pick); 3] = [
            ("mean", |d| d.mean),
            ("median", |d| d.median),
            ("sd", |d| d.sd),
        ];
        for (name, pick) in stats {
            out.push_str(name);
            for m in measures {
                for col in Column::ALL {
                    let _ = write!(out, ",{}", fmt_opt(self.distance(m, col).and_then(pick)));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

pub fn simulate_reports(config: &SimConfig) -> Vec<SubjectReport> {
    map_indices(config.n_subjects, config.execution, |i| {
        evaluate_subject(&config.generate(i), &config.analysis)
    })
}

pub fn run_power_study(config: &SimConfig) -> Result<PowerTable> {
    if config.n_subjects == 0 {
        return Err(Error::validation(
            "a power study needs at least one subject",
        ));
    }
    config.design.validate()?;
    let reports = simulate_reports(config);
    let design = match config.design.scale {
        crate::data_io::DesignScale::Lab => "builtin:lab",
        crate::data_io::DesignScale::Panel => "builtin:panel",
        crate::data_io::DesignScale::Custom => "custom",
    };
    Ok(PowerTable {
        dgp: config.dgp.name().to_string(),
        n_subjects: config.n_subjects,
        seed: config.seed,
        design: design.to_string(),
        conventions: Conventions::from_options(&config.analysis),
        aggregate: aggregate(&reports),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub h: f64,
    pub n_steps: usize,
    pub threshold: f64,
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.s0 > 0.0
            && self.s0.is_finite()
            && self.mu.is_finite()
            && self.sigma >= 0.0
            && self.sigma.is_finite()
            && self.h > 0.0
            && self.h.is_finite()
            && self.threshold > 0.0
            && self.threshold < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "invalid GBM parameters: need s0 > 0, sigma ≥ 0, h > 0, 0 < R < 1 (got {self:?})"
            )))
        }
    }
}

/// Standard normals by the Box–Muller transform, caching the second variate.
#[derive(Clone, Debug, Default)]
pub struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 − U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - rng.gen::<f64>();
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// `S_{t+h} = S_t · exp((μ − σ²/2)h + σ√h·Z)`, returning `n_steps + 1` prices.
pub fn simulate_gbm_path<R: Rng>(params: &GbmParams, rng: &mut R) -> Vec<f64> {
    let drift = (params.mu - 0.5 * params.sigma * params.sigma) * params.h;
    let vol = params.sigma * params.h.sqrt();
    let mut normals = BoxMuller::default();
    let mut path = Vec::with_capacity(params.n_steps + 1);
    path.push(params.s0);
    // Neumaier-compensated running log price, so long paths do not drift.
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for _ in 0..params.n_steps {
        let step = drift + vol * normals.sample(rng);
        let t = sum + step;
        comp += if sum.abs() >= step.abs() {
            (sum - t) + step
        } else {
            (step - t) + sum
        };
        sum = t;
        path.push(params.s0 * (sum + comp).exp());
    }
    path
}

/// `ω1` if the return exceeds `R`, `ω3` if it falls below `−R`, `ω2` otherwise.
pub fn classify_state(start: f64, target: f64, threshold: f64) -> State {
    let ret = (target - start) / start;
    if ret > threshold {
        State::Omega1
    } else if ret < -threshold {
        State::Omega3
    } else {
        State::Omega2
    }
}
