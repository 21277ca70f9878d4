//! Linear Rayleigh-Taylor stability of a stratified viscous fluid between
//! Navier-slip walls.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod critical;
pub mod dispersion;
pub mod error;
pub mod forms;
pub mod growth;
pub mod profile;
pub mod spectrum;
