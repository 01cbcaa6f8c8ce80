//! Command-line harness and live session service for langnav-core.

pub mod backend;
pub mod protocol;
pub mod session;
