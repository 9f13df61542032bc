//! Sequential causal optimization of process interventions.
//!
//! Policies for multi-step interventions in business processes are learned by
//! backward induction over per-decision-point causal learners, trained on
//! observational event logs. The crate also ships two process simulators with
//! counterfactual rollouts, the comparison baselines and an evaluation harness.

pub mod base_models;
pub mod baselines;
pub mod causal_learners;
pub mod config;
pub mod error;
pub mod eval;
pub mod event_log;
pub mod policy;
pub mod rng;
pub mod scope;
pub mod selftest;
pub mod simulators;

pub use error::{Error, Result};
pub use policy::{Direction, Policy};
