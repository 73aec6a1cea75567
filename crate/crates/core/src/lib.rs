// `!(x < t)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blaschke;
pub mod chains;
pub mod config;
pub mod duality;
pub mod encoding;
pub mod entire;
pub mod error;
pub mod halfspace;
pub mod linalg;
pub mod operator;
pub mod poly;
pub mod report;
pub mod resolvent;

pub use error::{AihsError, Result, Stage};
