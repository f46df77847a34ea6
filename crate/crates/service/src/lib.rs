//! REST service and command line front end over `quickcue-core`.

pub mod cli;
pub mod config;
pub mod documents;
pub mod server;

pub use config::ServiceConfig;
pub use server::{router, AppState};
