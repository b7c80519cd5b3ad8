// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod mm;
pub mod myopic;
pub mod numerics;
pub mod policy;
pub mod registry;
pub mod router;
pub mod schedule;
pub mod sim;
pub mod venue;

pub use error::{Error, Result};
