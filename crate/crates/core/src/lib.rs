//! Meta Thompson sampling for structured bandits.
//!
//! Items carry feature vectors; their mean rewards are drawn around a
//! feature-based generalization model with an unknown parameter `gamma`.
//! Agents sample `gamma` and the item parameters jointly from the posterior
//! and choose actions for semi-bandit, cascading and MNL assortment problems.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod agents;
pub mod belief;
pub mod catalog;
pub mod env;
pub mod error;
pub mod genmodel;
pub mod harness;
pub mod history;
pub mod lmm;
pub mod optim;
pub mod par;
pub mod regret;
pub mod rng;

pub use action::{Action, Observation};
pub use belief::GaussianBelief;
pub use catalog::ItemCatalog;
pub use error::{Error, Result};
pub use history::{Event, InteractionHistory, ProblemKind, SufficientStats};
pub use regret::RegretTrace;
