//! Domain types for the three-state portfolio-choice task.
//!
//! A question splits the state space `{ω1, ω2, ω3}` into two events. Type 1
//! questions bet on `{ω1}` versus `{ω2, ω3}`, type 2 questions on `{ω1, ω2}`
//! versus `{ω3}`. Subjects split 100 tokens between the two accounts; an
//! account's exchange value converts tokens into money.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Tokens a subject splits across the two accounts in every question.
pub const TOKENS: f64 = 100.0;

/// Tolerance for the `a1 + a2 = 100` and budget identities.
pub const ALLOCATION_TOL: f64 = 1e-6;

/// One of the three underlying states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum State {
    #[serde(rename = "omega1")]
    Omega1,
    #[serde(rename = "omega2")]
    Omega2,
    #[serde(rename = "omega3")]
    Omega3,
}

impl State {
    pub fn index(self) -> usize {
        match self {
            State::Omega1 => 0,
            State::Omega2 => 1,
            State::Omega3 => 2,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "omega{}", self.index() + 1)
    }
}

/// The fixed state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace;

impl StateSpace {
    pub const STATES: [State; 3] = [State::Omega1, State::Omega2, State::Omega3];

    pub fn states(&self) -> &'static [State; 3] {
        &Self::STATES
    }
}

/// An event as a subset of the three states (bit `i` set for `ω_{i+1}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Event(u8);

impl Event {
    pub const fn from_bits(bits: u8) -> Self {
        Event(bits & 0b111)
    }

    pub fn contains(self, state: State) -> bool {
        self.0 & (1 << state.index()) != 0
    }

    pub fn is_subset_of(self, other: Event) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn states(self) -> Vec<State> {
        StateSpace::STATES
            .iter()
            .copied()
            .filter(|s| self.contains(*s))
            .collect()
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.states().iter().map(|s| s.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Which event partition a question uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QuestionType {
    /// `{ω1}` versus `{ω2, ω3}`.
    Type1,
    /// `{ω1, ω2}` versus `{ω3}`.
    Type2,
}

impl QuestionType {
    pub const ALL: [QuestionType; 2] = [QuestionType::Type1, QuestionType::Type2];

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(QuestionType::Type1),
            2 => Ok(QuestionType::Type2),
            other => Err(Error::validation(format!("unknown question type {other}"))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            QuestionType::Type1 => 1,
            QuestionType::Type2 => 2,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize - 1
    }

    /// Event paid by account 1.
    pub fn event1(self) -> Event {
        match self {
            QuestionType::Type1 => Event::from_bits(0b001),
            QuestionType::Type2 => Event::from_bits(0b011),
        }
    }

    /// Event paid by account 2.
    pub fn event2(self) -> Event {
        match self {
            QuestionType::Type1 => Event::from_bits(0b110),
            QuestionType::Type2 => Event::from_bits(0b100),
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type{}", self.code())
    }
}

/// Prices and income implied by a pair of exchange values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub z1: f64,
    pub z2: f64,
    pub p1: f64,
    pub p2: f64,
    pub income: f64,
}

impl Budget {
    pub fn prices(&self) -> [f64; 2] {
        [self.p1, self.p2]
    }

    /// Relative price `p2 / p1`.
    pub fn relative_price(&self) -> f64 {
        self.p2 / self.p1
    }

    pub fn cost(&self, x: [f64; 2]) -> f64 {
        self.p1 * x[0] + self.p2 * x[1]
    }
}

/// Normalizes `p1 = 1`, so `p2 = z1 / z2` and income is `100 · z1`.
pub fn derive_prices(z1: f64, z2: f64) -> Result<Budget> {
    if !(z1.is_finite() && z2.is_finite()) || z1 <= 0.0 || z2 <= 0.0 {
        return Err(Error::validation(format!(
            "exchange values must be positive, got ({z1}, {z2})"
        )));
    }
    Ok(Budget {
        z1,
        z2,
        p1: 1.0,
        p2: z1 / z2,
        income: TOKENS * z1,
    })
}

/// Money paid by each account: `x_s = a_s · z_s`.
pub fn payoff_vector(a1: f64, a2: f64, budget: &Budget) -> Result<[f64; 2]> {
    check_allocation(a1, a2)?;
    Ok([a1 * budget.z1, a2 * budget.z2])
}

fn check_allocation(a1: f64, a2: f64) -> Result<()> {
    if !(a1.is_finite() && a2.is_finite()) || a1 < 0.0 || a2 < 0.0 {
        return Err(Error::validation(format!(
            "token allocation must be non-negative, got ({a1}, {a2})"
        )));
    }
    if (a1 + a2 - TOKENS).abs() > ALLOCATION_TOL {
        return Err(Error::validation(format!(
            "allocation sum {} differs from {TOKENS}",
            a1 + a2
        )));
    }
    Ok(())
}

/// One answered question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub question_id: u32,
    pub qtype: QuestionType,
    pub budget: Budget,
    pub a1: f64,
    pub a2: f64,
    pub x1: f64,
    pub x2: f64,
}

impl Observation {
    pub fn new(
        question_id: u32,
        qtype: QuestionType,
        z1: f64,
        z2: f64,
        a1: f64,
        a2: f64,
    ) -> Result<Self> {
        let budget = derive_prices(z1, z2)?;
        let [x1, x2] = payoff_vector(a1, a2, &budget)?;
        Ok(Observation {
            question_id,
            qtype,
            budget,
            a1,
            a2,
            x1,
            x2,
        })
    }

    pub fn payoffs(&self) -> [f64; 2] {
        [self.x1, self.x2]
    }

    pub fn prices(&self) -> [f64; 2] {
        self.budget.prices()
    }

    pub fn expenditure(&self) -> f64 {
        self.budget.cost(self.payoffs())
    }

    /// True if either account received no tokens.
    pub fn is_corner(&self) -> bool {
        self.a1 == 0.0 || self.a2 == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "stock")]
    MarketStock,
    #[serde(rename = "ellsberg")]
    MarketEllsberg,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "stock" | "market-stock" => Ok(Task::MarketStock),
            "ellsberg" | "market-ellsberg" => Ok(Task::MarketEllsberg),
            other => Err(Error::validation(format!("unknown task '{other}'"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::MarketStock => "stock",
            Task::MarketEllsberg => "ellsberg",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EllsbergChoice {
    Risky,
    Ambiguous,
}

impl EllsbergChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "risky" => Ok(EllsbergChoice::Risky),
            "ambiguous" => Ok(EllsbergChoice::Ambiguous),
            other => Err(Error::validation(format!(
                "unknown Ellsberg answer '{other}'"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EllsbergChoice::Risky => "risky",
            EllsbergChoice::Ambiguous => "ambiguous",
        }
    }
}

/// Answers to the three two-urn questions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EllsbergAnswers {
    pub q1: EllsbergChoice,
    pub q2: EllsbergChoice,
    pub q3: EllsbergChoice,
}

/// All observations of one subject in one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectDataset {
    pub subject_id: String,
    pub task: Task,
    pub observations: Vec<Observation>,
    pub ellsberg: Option<EllsbergAnswers>,
    /// Question ids of the equal-budget type 1 / type 2 questions.
    pub fixed_pair: Option<(u32, u32)>,
}

impl SubjectDataset {
    /// Validates ids, the fixed pair, and per-observation identities.
    pub fn new(
        subject_id: impl Into<String>,
        task: Task,
        observations: Vec<Observation>,
        ellsberg: Option<EllsbergAnswers>,
        fixed_pair: Option<(u32, u32)>,
    ) -> Result<Self> {
        let ds = SubjectDataset {
            subject_id: subject_id.into(),
            task,
            observations,
            ellsberg,
            fixed_pair,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.observations.iter().map(|o| o.question_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!(
                "subject {}: duplicate question {}",
                self.subject_id, w[0]
            )));
        }
        for o in &self.observations {
            check_allocation(o.a1, o.a2)?;
            let identity = o.expenditure() - o.budget.income;
            if identity.abs() > ALLOCATION_TOL * o.budget.income.max(1.0) {
                return Err(Error::validation(format!(
                    "subject {}: question {} violates the budget identity",
                    self.subject_id, o.question_id
                )));
            }
        }
        if let Some((q1, q2)) = self.fixed_pair {
            let first = self.observation(q1);
            let second = self.observation(q2);
            if let (Some(a), Some(b)) = (first, second) {
                if a.qtype != QuestionType::Type1 || b.qtype != QuestionType::Type2 {
                    return Err(Error::validation(format!(
                        "subject {}: fixed pair ({q1}, {q2}) must be one type 1 and one type 2 question",
                        self.subject_id
                    )));
                }
                if !same_value(a.budget.z1, b.budget.z1) || !same_value(a.budget.z2, b.budget.z2) {
                    return Err(Error::validation(format!(
                        "subject {}: fixed pair ({q1}, {q2}) has different exchange values",
                        self.subject_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn observation(&self, question_id: u32) -> Option<&Observation> {
        self.observations
            .iter()
            .find(|o| o.question_id == question_id)
    }

    pub fn of_type(&self, qtype: QuestionType) -> Vec<&Observation> {
        self.observations
            .iter()
            .filter(|o| o.qtype == qtype)
            .collect()
    }

    pub fn has_type(&self, qtype: QuestionType) -> bool {
        self.observations.iter().any(|o| o.qtype == qtype)
    }

    /// The same subject restricted to a single question type.
    pub fn restricted_to(&self, qtype: QuestionType) -> SubjectDataset {
        SubjectDataset {
            subject_id: self.subject_id.clone(),
            task: self.task,
            observations: self
                .observations
                .iter()
                .filter(|o| o.qtype == qtype)
                .cloned()
                .collect(),
            ellsberg: self.ellsberg,
            fixed_pair: None,
        }
    }

    pub fn corner_count(&self) -> usize {
        self.observations.iter().filter(|o| o.is_corner()).count()
    }
}

pub(crate) fn same_value(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
