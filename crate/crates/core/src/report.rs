//! Per-subject test reports and their aggregation into pass-rate and
//! distance tables.

use serde::{Deserialize, Serialize};

use crate::epstein::{
    check_epstein_by_type, check_event_monotonicity, check_ps_joint, EpsteinVerdict, Monotonicity,
    MONOTONICITY_MARGIN,
};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::garp::{check_garp, compute_ccei, CceiValue, GarpVerdict, CCEI_PRECISION};
use crate::lp::{SolverError, SolverOptions};
use crate::metrics::{
    classify_ambiguity, dsd_correlation, AmbiguityClass, CornerPolicy, DsdCorrelation,
};
use crate::minimal_e::{minimal_e, Model, ZERO_TOL};
use crate::model::{QuestionType, SubjectDataset, Task};
use crate::seu_meu::{test_meu, test_seu};

pub const SCHEMA_VERSION: &str = "1.0";

/// Which tests to run; `estar` covers both SEU and MEU distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSelection {
    pub garp: bool,
    pub ccei: bool,
    pub ps: bool,
    pub seu: bool,
    pub meu: bool,
    pub estar: bool,
    pub dsd: bool,
}

impl TestSelection {
    pub fn all() -> Self {
        TestSelection {
            garp: true,
            ccei: true,
            ps: true,
            seu: true,
            meu: true,
            estar: true,
            dsd: true,
        }
    }

    pub fn none() -> Self {
        TestSelection {
            garp: false,
            ccei: false,
            ps: false,
            seu: false,
            meu: false,
            estar: false,
            dsd: false,
        }
    }

    /// Comma-separated names, e.g. `garp,ccei,seu`.
    pub fn parse(s: &str) -> Result<Self> {
        let mut sel = Self::none();
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name.to_ascii_lowercase().as_str() {
                "all" => sel = Self::all(),
                "garp" => sel.garp = true,
                "ccei" => sel.ccei = true,
                "ps" => sel.ps = true,
                "seu" => sel.seu = true,
                "meu" => sel.meu = true,
                "estar" => sel.estar = true,
                "dsd" => sel.dsd = true,
                other => return Err(Error::validation(format!("unknown test '{other}'"))),
            }
        }
        if sel == Self::none() {
            return Err(Error::validation("no tests selected"));
        }
        Ok(sel)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalysisOptions {
    pub tests: TestSelection,
    pub solver: SolverOptions,
    pub ccei_precision: f64,
    pub corner_policy: CornerPolicy,
    pub monotonicity_margin: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            tests: TestSelection::all(),
            solver: SolverOptions::default(),
            ccei_precision: CCEI_PRECISION,
            corner_policy: CornerPolicy::Clamp,
            monotonicity_margin: MONOTONICITY_MARGIN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

impl Verdict {
    fn from_result(r: std::result::Result<bool, SolverError>) -> Self {
        match r {
            Ok(true) => Verdict::Pass,
            Ok(false) => Verdict::Fail,
            Err(_) => Verdict::Indeterminate,
        }
    }

    pub fn passed(self) -> Option<bool> {
        match self {
            Verdict::Pass => Some(true),
            Verdict::Fail => Some(false),
            Verdict::Indeterminate => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unresolved {
    Indeterminate,
}

/// A distance value, or the marker `"indeterminate"` if the solver failed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Distance {
    Value(f64),
    Failed(Unresolved),
}

impl Distance {
    pub fn value(self) -> Option<f64> {
        match self {
            Distance::Value(v) => Some(v),
            Distance::Failed(_) => None,
        }
    }
}

/// Per-type columns are absent when the subject never faced that type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ByType<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type1: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type2: Option<T>,
    pub joint: T,
}

impl<T: Copy> ByType<T> {
    pub fn get(&self, col: Column) -> Option<T> {
        match col {
            Column::Type1 => self.type1,
            Column::Type2 => self.type2,
            Column::Joint => Some(self.joint),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    Type1,
    Type2,
    Joint,
}

impl Column {
    pub const ALL: [Column; 3] = [Column::Type1, Column::Type2, Column::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            Column::Type1 => "type1",
            Column::Type2 => "type2",
            Column::Joint => "joint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsReport {
    pub epstein: EpsteinVerdict,
    pub monotonicity: Monotonicity,
    pub monotonicity_with_margin: Monotonicity,
    pub joint: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject_id: String,
    pub task: Task,
    pub observations: usize,
    pub corner_observations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub garp: Option<GarpVerdict>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ccei: Option<CceiValue>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ps: Option<PsReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seu: Option<ByType<Verdict>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub meu: Option<ByType<Verdict>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estar_seu: Option<ByType<Distance>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub estar_meu: Option<ByType<Distance>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dsd: Option<DsdCorrelation>,
    pub ambiguity: AmbiguityClass,
    /// Conventions that touched this subject (corner payoffs, zero-variance ρ, ...).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

impl SubjectReport {
    pub fn has_indeterminate(&self) -> bool {
        let verdicts = [self.seu, self.meu];
        let distances = [self.estar_seu, self.estar_meu];
        verdicts.iter().flatten().any(|v| {
            Column::ALL
                .iter()
                .any(|c| v.get(*c) == Some(Verdict::Indeterminate))
        }) || distances.iter().flatten().any(|d| {
            Column::ALL
                .iter()
                .any(|c| matches!(d.get(*c), Some(Distance::Failed(_))))
        })
    }
}

fn by_type<T>(ds: &SubjectDataset, f: impl Fn(&SubjectDataset) -> T) -> ByType<T> {
    let per = |t: QuestionType| ds.has_type(t).then(|| f(&ds.restricted_to(t)));
    ByType {
        type1: per(QuestionType::Type1),
        type2: per(QuestionType::Type2),
        joint: f(ds),
    }
}

pub fn evaluate_subject(ds: &SubjectDataset, opts: &AnalysisOptions) -> SubjectReport {
    let t = &opts.tests;
    let mut flags = Vec::new();
    if ds.corner_count() > 0 {
        flags.push("corner_payoffs_applied_verbatim".to_string());
    }

    let ps = t.ps.then(|| PsReport {
        epstein: check_epstein_by_type(ds),
        monotonicity: check_event_monotonicity(ds, 0.0),
        monotonicity_with_margin: check_event_monotonicity(ds, opts.monotonicity_margin),
        joint: check_ps_joint(ds),
    });
    let seu = t
        .seu
        .then(|| by_type(ds, |d| Verdict::from_result(test_seu(d, &opts.solver))));
    let meu = t
        .meu
        .then(|| by_type(ds, |d| Verdict::from_result(test_meu(d, &opts.solver))));
    let distance = |model| {
        by_type(ds, |d| match minimal_e(d, model, &opts.solver) {
            Ok(r) => Distance::Value(r.e_star),
            Err(_) => Distance::Failed(Unresolved::Indeterminate),
        })
    };
    let estar_seu = t.estar.then(|| distance(Model::Seu));
    let estar_meu = t.estar.then(|| distance(Model::Meu));
    let dsd = t.dsd.then(|| dsd_correlation(ds, opts.corner_policy));
    if let Some(d) = &dsd {
        if d.type1
            .iter()
            .chain(d.type2.iter())
            .any(|c| c.zero_variance)
        {
            flags.push("dsd_zero_variance".to_string());
        }
    }

    let report = SubjectReport {
        subject_id: ds.subject_id.clone(),
        task: ds.task,
        observations: ds.observations.len(),
        corner_observations: ds.corner_count(),
        garp: t.garp.then(|| check_garp(ds)),
        ccei: t.ccei.then(|| compute_ccei(ds, opts.ccei_precision)),
        ps,
        seu,
        meu,
        estar_seu,
        estar_meu,
        dsd,
        ambiguity: classify_ambiguity(ds.ellsberg.as_ref()),
        flags,
    };
    if report.has_indeterminate() {
        let mut r = report;
        r.flags.push("solver_indeterminate".to_string());
        return r;
    }
    report
}

pub fn evaluate_all(
    datasets: &[SubjectDataset],
    opts: &AnalysisOptions,
    exec: Execution,
) -> Vec<SubjectReport> {
    map_slice(datasets, exec, |ds| evaluate_subject(ds, opts))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub passed: usize,
    pub evaluated: usize,
    pub indeterminate: usize,
    /// `passed / evaluated`; indeterminate subjects are excluded from both.
    pub rate: Option<f64>,
}

impl RateCell {
    fn push(&mut self, v: Option<bool>) {
        match v {
            Some(p) => {
                self.evaluated += 1;
                if p {
                    self.passed += 1;
                }
            }
            None => self.indeterminate += 1,
        }
    }

    fn finish(&mut self) {
        self.rate = (self.evaluated > 0).then(|| self.passed as f64 / self.evaluated as f64);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub test: String,
    pub type1: RateCell,
    pub type2: RateCell,
    pub joint: RateCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub measure: String,
    pub column: Column,
    pub n: usize,
    pub indeterminate: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Sample standard deviation (divisor `n − 1`).
    pub sd: Option<f64>,
}

pub fn summarize(values: &[f64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    };
    let sd = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), Some(median), sd)
}

/// Counts of subjects that break a logical implication between tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplicationCheck {
    pub checked: usize,
    pub seu_not_meu: usize,
    pub seu_not_garp: usize,
    pub seu_not_epstein: usize,
    pub estar_seu_zero_mismatch: usize,
    pub estar_meu_zero_mismatch: usize,
    pub estar_meu_above_seu: usize,
    pub ccei_garp_mismatch: usize,
}

impl ImplicationCheck {
    pub fn violations(&self) -> usize {
        self.seu_not_meu
            + self.seu_not_garp
            + self.seu_not_epstein
            + self.estar_seu_zero_mismatch
            + self.estar_meu_zero_mismatch
            + self.estar_meu_above_seu
            + self.ccei_garp_mismatch
    }

    pub fn record(&mut self, r: &SubjectReport) {
        self.checked += 1;
        for col in Column::ALL {
            let seu = r.seu.and_then(|v| v.get(col)).and_then(Verdict::passed);
            let meu = r.meu.and_then(|v| v.get(col)).and_then(Verdict::passed);
            let garp = r.garp.and_then(|g| match col {
                Column::Type1 => g.type1,
                Column::Type2 => g.type2,
                Column::Joint => Some(g.joint),
            });
            let es = r
                .estar_seu
                .and_then(|d| d.get(col))
                .and_then(Distance::value);
            let em = r
                .estar_meu
                .and_then(|d| d.get(col))
                .and_then(Distance::value);
            if seu == Some(true) && meu == Some(false) {
                self.seu_not_meu += 1;
            }
            if seu == Some(true) && garp == Some(false) {
                self.seu_not_garp += 1;
            }
            if let (Some(e), Some(s)) = (es, seu) {
                if (e.ln_1p() <= ZERO_TOL) != s {
                    self.estar_seu_zero_mismatch += 1;
                }
            }
            if let (Some(e), Some(m)) = (em, meu) {
                if (e.ln_1p() <= ZERO_TOL) != m {
                    self.estar_meu_zero_mismatch += 1;
                }
            }
            if let (Some(e), Some(m)) = (es, em) {
                if m > e + ZERO_TOL {
                    self.estar_meu_above_seu += 1;
                }
            }
            let ccei = r.ccei.and_then(|c| match col {
                Column::Type1 => c.type1,
                Column::Type2 => c.type2,
                Column::Joint => Some(c.joint),
            });
            if let (Some(c), Some(g)) = (ccei, garp) {
                if (c == 1.0) != g {
                    self.ccei_garp_mismatch += 1;
                }
            }
        }
        if let (Some(seu), Some(ps)) = (r.seu, &r.ps) {
            let epstein_both = ps.epstein.type1.unwrap_or(true) && ps.epstein.type2.unwrap_or(true);
            if seu.joint == Verdict::Pass && !epstein_both {
                self.seu_not_epstein += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub subjects: usize,
    pub subjects_with_indeterminate: usize,
    pub pass_rates: Vec<RateRow>,
    pub distances: Vec<DistanceSummary>,
    pub implications: ImplicationCheck,
}

pub fn aggregate(reports: &[SubjectReport]) -> Aggregate {
    let mut pass_rates = Vec::new();
    let mut rate_row =
        |name: &str, pick: &dyn Fn(&SubjectReport, Column) -> Option<Option<bool>>| {
            let mut cells = [RateCell::default(); 3];
            let mut any = false;
            for r in reports {
                for (i, col) in Column::ALL.iter().enumerate() {
                    if let Some(v) = pick(r, *col) {
                        any = true;
                        cells[i].push(v);
                    }
                }
            }
            if any {
                for c in &mut cells {
                    c.finish();
                }
                pass_rates.push(RateRow {
                    test: name.to_string(),
                    type1: cells[0],
                    type2: cells[1],
                    joint: cells[2],
                });
            }
        };
    rate_row("garp", &|r, c| {
        r.garp.and_then(|g| match c {
            Column::Type1 => g.type1.map(Some),
            Column::Type2 => g.type2.map(Some),
            Column::Joint => Some(Some(g.joint)),
        })
    });
    rate_row("ps", &|r, c| {
        r.ps.as_ref().and_then(|p| match c {
            Column::Type1 => p.epstein.type1.map(Some),
            Column::Type2 => p.epstein.type2.map(Some),
            Column::Joint => Some(Some(p.joint)),
        })
    });
    rate_row("seu", &|r, c| {
        r.seu.and_then(|v| v.get(c)).map(Verdict::passed)
    });
    rate_row("meu", &|r, c| {
        r.meu.and_then(|v| v.get(c)).map(Verdict::passed)
    });

    let mut distances = Vec::new();
    let mut dist_rows =
        |name: &str, pick: &dyn Fn(&SubjectReport, Column) -> Option<Option<f64>>| {
            for col in Column::ALL {
                let mut vals = Vec::new();
                let mut bad = 0;
                let mut any = false;
                for r in reports {
                    match pick(r, col) {
                        Some(Some(v)) => {
                            any = true;
                            vals.push(v)
                        }
                        Some(None) => {
                            any = true;
                            bad += 1
                        }
                        None => {}
                    }
                }
                if !any {
                    continue;
                }
                let (mean, median, sd) = summarize(&vals);
                distances.push(DistanceSummary {
                    measure: name.to_string(),
                    column: col,
                    n: vals.len(),
                    indeterminate: bad,
                    mean,
                    median,
                    sd,
                });
            }
        };
    dist_rows("ccei", &|r, c| {
        r.ccei.and_then(|v| match c {
            Column::Type1 => v.type1.map(Some),
            Column::Type2 => v.type2.map(Some),
            Column::Joint => Some(Some(v.joint)),
        })
    });
    dist_rows("estar_seu", &|r, c| {
        r.estar_seu.and_then(|d| d.get(c)).map(Distance::value)
    });
    dist_rows("estar_meu", &|r, c| {
        r.estar_meu.and_then(|d| d.get(c)).map(Distance::value)
    });

    let mut implications = ImplicationCheck::default();
    for r in reports {
        implications.record(r);
    }
    Aggregate {
        subjects: reports.len(),
        subjects_with_indeterminate: reports.iter().filter(|r| r.has_indeterminate()).count(),
        pass_rates,
        distances,
        implications,
    }
}

/// Conventions echoed into every report so outputs are self-describing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub schema_version: String,
    pub joint_ccei_rule: String,
    pub ccei_precision: f64,
    pub solver_tolerance: f64,
    pub exact_reverification: bool,
    pub garp_tie_tolerance: String,
    pub payoff_tie_tolerance: String,
    pub estar_zero_tolerance: f64,
    pub estar_definition: String,
    pub ps_joint_rule: String,
    pub monotonicity_margin_tokens: f64,
    pub dsd_corner_policy: CornerPolicy,
    pub dsd_zero_variance_rule: String,
    pub single_type_models: String,
    pub corner_payoffs: String,
    pub rates_exclude_indeterminate: bool,
}

impl Conventions {
    pub fn from_options(opts: &AnalysisOptions) -> Self {
        Conventions {
            schema_version: SCHEMA_VERSION.to_string(),
            joint_ccei_rule: "min(type1, type2)".to_string(),
            ccei_precision: opts.ccei_precision,
            solver_tolerance: opts.solver.tol,
            exact_reverification: opts.solver.exact,
            garp_tie_tolerance: "1e-9 relative to expenditure".to_string(),
            payoff_tie_tolerance: "1e-9 relative".to_string(),
            estar_zero_tolerance: ZERO_TOL,
            estar_definition: "exp(delta*) - 1".to_string(),
            ps_joint_rule: "Epstein passes for both types and exact (margin 0) event monotonicity"
                .to_string(),
            monotonicity_margin_tokens: opts.monotonicity_margin,
            dsd_corner_policy: opts.corner_policy,
            dsd_zero_variance_rule: "rho = 0 and flagged".to_string(),
            single_type_models: "per-type SEU/MEU omit the monotonicity and cross-type rows"
                .to_string(),
            corner_payoffs:
                "zero payoffs enter the first-order conditions verbatim and are flagged".to_string(),
            rates_exclude_indeterminate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub conventions: Conventions,
    pub design: String,
    pub subjects: Vec<SubjectReport>,
    pub aggregate: Aggregate,
}

impl AnalysisReport {
    pub fn new(
        design: impl Into<String>,
        subjects: Vec<SubjectReport>,
        opts: &AnalysisOptions,
    ) -> Self {
        let aggregate = aggregate(&subjects);
        AnalysisReport {
            conventions: Conventions::from_options(opts),
            design: design.into(),
            subjects,
            aggregate,
        }
    }

    /// One row per subject with every selected column flattened.
    pub fn subjects_csv(&self) -> Result<String> {
        let mut header: Vec<String> = vec![
            "subject_id".into(),
            "task".into(),
            "observations".into(),
            "corners".into(),
        ];
        let mut rows: Vec<Vec<String>> = self
            .subjects
            .iter()
            .map(|r| {
                vec![
                    r.subject_id.clone(),
                    r.task.to_string(),
                    r.observations.to_string(),
                    r.corner_observations.to_string(),
                ]
            })
            .collect();
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut add = |name: String, f: &dyn Fn(&SubjectReport) -> Option<String>| {
            header.push(name);
            for (row, r) in rows.iter_mut().zip(&self.subjects) {
                row.push(opt(f(r)));
            }
        };
        let any = |f: &dyn Fn(&SubjectReport) -> bool| self.subjects.iter().any(f);
        let verdict = |v: Verdict| format!("{v:?}").to_ascii_lowercase();
        let dist = |d: Distance| match d {
            Distance::Value(v) => v.to_string(),
            Distance::Failed(_) => "indeterminate".to_string(),
        };
        for col in Column::ALL {
            if any(&|r| r.garp.is_some()) {
                add(format!("garp_{}", col.as_str()), &move |r| {
                    r.garp
                        .and_then(|g| match col {
                            Column::Type1 => g.type1,
                            Column::Type2 => g.type2,
                            Column::Joint => Some(g.joint),
                        })
                        .map(|b| b.to_string())
                });
            }
        }
        for col in Column::ALL {
            if any(&|r| r.ccei.is_some()) {
                add(format!("ccei_{}", col.as_str()), &move |r| {
                    r.ccei
                        .and_then(|c| match col {
                            Column::Type1 => c.type1,
                            Column::Type2 => c.type2,
                            Column::Joint => Some(c.joint),
                        })
                        .map(|v| v.to_string())
                });
            }
        }
        if any(&|r| r.ps.is_some()) {
            add("epstein_type1".into(), &|r| {
                r.ps.as_ref()
                    .and_then(|p| p.epstein.type1)
                    .map(|b| b.to_string())
            });
            add("epstein_type2".into(), &|r| {
                r.ps.as_ref()
                    .and_then(|p| p.epstein.type2)
                    .map(|b| b.to_string())
            });
            add("monotonicity".into(), &|r| {
                r.ps.as_ref().map(|p| json_name(&p.monotonicity))
            });
            add("monotonicity_margin".into(), &|r| {
                r.ps.as_ref()
                    .map(|p| json_name(&p.monotonicity_with_margin))
            });
            add("ps_joint".into(), &|r| {
                r.ps.as_ref().map(|p| p.joint.to_string())
            });
        }
        for (name, pick) in [
            (
                "seu",
                (|r: &SubjectReport| r.seu) as fn(&SubjectReport) -> Option<ByType<Verdict>>,
            ),
            ("meu", |r: &SubjectReport| r.meu),
        ] {
            if any(&|r| pick(r).is_some()) {
                for col in Column::ALL {
                    add(format!("{name}_{}", col.as_str()), &move |r| {
                        pick(r).and_then(|v| v.get(col)).map(verdict)
                    });
                }
            }
        }
        for (name, pick) in [
            (
                "estar_seu",
                (|r: &SubjectReport| r.estar_seu) as fn(&SubjectReport) -> Option<ByType<Distance>>,
            ),
            ("estar_meu", |r: &SubjectReport| r.estar_meu),
        ] {
            if any(&|r| pick(r).is_some()) {
                for col in Column::ALL {
                    add(format!("{name}_{}", col.as_str()), &move |r| {
                        pick(r).and_then(|v| v.get(col)).map(dist)
                    });
                }
            }
        }
        if any(&|r| r.dsd.is_some()) {
            add("rho_type1".into(), &|r| {
                r.dsd.and_then(|d| d.type1).map(|c| c.rho.to_string())
            });
            add("rho_type2".into(), &|r| {
                r.dsd.and_then(|d| d.type2).map(|c| c.rho.to_string())
            });
            add("rho_dsd".into(), &|r| {
                r.dsd.and_then(|d| d.rho_dsd).map(|v| v.to_string())
            });
        }
        add("ambiguity".into(), &|r| Some(json_name(&r.ambiguity)));
        add("flags".into(), &|r| Some(r.flags.join(";")));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}
