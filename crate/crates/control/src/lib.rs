//! HTTP API and command-line front end for the care workbench.

pub mod api;
pub mod config;
pub mod error;
pub mod workbench;

pub use api::{router, AppState, Tokens};
pub use error::ApiError;
pub use workbench::{AgentChoice, Caller, Workbench};
