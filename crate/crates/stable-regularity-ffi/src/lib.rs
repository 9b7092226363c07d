//! C ABI over the stable-regularity library: opaque handles, integer status
//! codes, and JSON strings for structured results.

pub mod capi;

pub use capi::*;
