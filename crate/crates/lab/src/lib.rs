//! Scenario files, reports, exports and the verification suite behind the
//! `delayfbsde` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod commands;
mod error;
pub mod export;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod verify;

pub use error::{LabError, LabResult};
