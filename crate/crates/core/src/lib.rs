//! Simulation of quantum and classical channels sharing a few-mode fiber
//! link: mode sets and scenario files, power-flow mode coupling, MUX/DeMUX
//! and filter transfer, coincidence counting, and end-to-end pipelines.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod devices;
pub mod model;
pub mod pipeline;
pub mod powerflow;
pub mod units;
