//! Sessions, persistence, tracing, the command-line tool and the HTTP
//! service built on `bayesopt-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod command;
pub mod error;
pub mod service;
pub mod session;
pub mod store;
pub mod trace;
pub mod view;

pub use error::{Result, SessionError};
pub use session::{CreateSession, Session, SessionConfig, SessionDocument};
pub use store::SessionStore;
