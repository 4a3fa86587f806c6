//! Mixture-of-POMDP student modelling.
//!
//! Students answering practice questions are modelled as partially
//! observable Markov decision processes over knowledge states (mastery
//! bit-vectors over a prerequisite concept graph). A cohort rarely
//! follows a single dynamic, so this crate fits a *mixture* of such
//! processes: every component shares the state space, question catalog,
//! observation function and reward, and differs only in how quickly
//! concepts are acquired. Fitting is an EM loop that clusters answer
//! sequences and re-estimates per-pattern parameters simultaneously.
//!
//! On top of the fitted model the crate provides:
//!
//! - hierarchical belief tracking (a belief over patterns, and per
//!   pattern a belief over knowledge states) with next-response
//!   prediction,
//! - finite-horizon question selection by expectimax over beliefs,
//!   exactly or with a receding horizon,
//! - simulated-cohort evaluation of selection strategies with
//!   proficiency/variance metrics and a two-sample t statistic,
//! - next-response prediction metrics (accuracy, ranking AUC, MAE,
//!   RMSE) with student-level cross-validation,
//! - answer-log ingestion with configurable column mappings and a
//!   versioned model file format.
//!
//! The `hpomdp` binary exposes the whole pipeline as subcommands; see
//! the repository README for a walkthrough.

pub mod belief;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod learning;
pub mod planning;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
