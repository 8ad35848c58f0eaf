//! Session-based HTTP service for people playing the gluing task.
//!
//! Each session is an append-only JSONL log: a header with the trial order,
//! then every click, glue change, gravity run and score. State is always
//! rebuilt by replaying that log through the environment, so restarting the
//! server resumes sessions exactly and served scores can be audited offline.

pub mod api;
pub mod error;
pub mod events;
pub mod session;
pub mod stimuli;
pub mod store;

pub use api::{router, serve, ActRequest, CreateRequest, CreateResponse};
pub use error::ServiceError;
pub use events::{read_log, EventKind, Header, TrialEvent};
pub use session::{ActOutcome, FinishOutcome, Session, TrialScore, TrialView};
pub use stimuli::{Registry, StimulusSet, TrialRef, DEFAULT_SET};
pub use store::Store;
