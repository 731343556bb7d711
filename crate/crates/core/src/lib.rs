//! Nonparametric revealed-preference tests for portfolio choices under
//! uncertainty: GARP and CCEI, Epstein's probabilistic-sophistication
//! condition, exact SEU and MEU tests, the minimal perturbation `e*`, plus
//! the random-choice power simulations used to judge the tests.

pub mod data_io;
pub mod epstein;
pub mod error;
pub mod exec;
pub mod garp;
pub mod lp;
pub mod metrics;
pub mod minimal_e;
pub mod model;
pub mod report;
pub mod seu_meu;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{Observation, QuestionType, SubjectDataset, Task};
