//! AUTOLYCUS: explanation-guided model extraction against decision tree
//! classifiers.
//!
//! The crate is organised around the attack pipeline:
//!
//! - [`data`] — dataset schemas, CSV ingestion, splits, seed selection and
//!   synthetic tree-labelled fixtures.
//! - [`tree`] — a CART classifier used both as the victim and the surrogate.
//! - [`explain`] — a LIME-style tabular explainer (quartile discretization,
//!   Bernoulli bin-agreement perturbation, weighted ridge fit).
//! - [`service`] — the ML-as-a-service boundary: query oracles, exact query
//!   counting, and the HTTP prediction/explanation endpoint.
//! - [`attack`] — the TRAV-A frontier traversal that turns explanation
//!   intervals into single-feature boundary-crossing queries.
//! - [`eval`] — accuracy / R_test metrics and the experiment sweep runner.

pub mod attack;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod service;
pub mod tree;

pub use error::{Error, Result};
