//! Airbrake deployment control for a coasting sounding rocket: an RK4 apogee
//! oracle, a dense MLP surrogate trained on oracle labels, and the tooling to
//! generate data, evaluate and benchmark the two.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod evalbench;
pub mod flight;
pub mod integrator;
pub mod neuralnet;
pub mod pipeline;
