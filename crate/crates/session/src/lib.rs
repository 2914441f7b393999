//! Live labelling sessions.
//!
//! Each session wraps one optimisation engine. The service suspends the run
//! whenever the engine asks for a label (or, for external objectives, an
//! observation) and resumes it when the client answers. Every accepted
//! answer is appended to a per-session event log before it is acknowledged;
//! on restart the log is replayed to rebuild the engine state.

mod error;
pub mod http;
mod session;
mod store;

pub use error::SessionError;
pub use http::{router, serve};
pub use session::{
    CreateRequest, NextAction, ObjectiveSpec, PendingView, Phase, SessionManager, SessionMetrics, SessionState,
    Summary,
};
