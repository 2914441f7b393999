//! Collaborative Bayesian optimisation with labelling experts.
//!
//! The objective is modelled with an exact GP and explored through its lower
//! confidence bound; an expert's accept/reject labels are modelled with a
//! likelihood-ratio confidence set over an RKHS ball. A primal-dual
//! acquisition mixes both, guarded by a no-harm gate (fall back to the
//! vanilla LCB candidate) and a handover gate (stop asking once the belief
//! interval is narrow).

pub mod acquisition;
pub mod bench;
pub mod belief;
pub mod config;
pub mod domain;
pub mod engine;
pub mod error;
pub mod experts;
pub mod gp;
pub mod hyperfit;
pub mod info_gain;
pub mod kernel;
pub mod linalg;
pub mod nlp;
pub mod record;
pub mod run;

pub use belief::{BeliefDataset, BeliefInterval, ConfidenceSetParams};
pub use domain::DomainBox;
pub use error::{CobolError, Result};
pub use gp::{beta_f, GpPosterior, ObjectiveDataset};
pub use kernel::KernelConfig;
