//! Synthesis and evaluation of piecewise-constant quantum control pulses that
//! stay accurate under clock noise: per-channel latency and per-edge timing
//! jitter of the waveform generator.
//!
//! The crate provides
//! - unitary propagation on ideal and clock-perturbed timing grids ([`system`]),
//! - the clock-noise model and its second moments ([`noise`]),
//! - the perturbative average-error estimator `J_N` ([`estimator`]),
//! - GRAPE, homotopic refinement and batch-stochastic b-GRAPE ([`optimizers`]),
//! - Monte-Carlo robustness tests and latency sweeps ([`montecarlo`]),
//! - a configuration-driven experiment runner ([`config`], [`runner`]).

pub mod config;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod noise;
pub mod operators;
pub mod optimizers;
pub mod presets;
pub mod runner;
pub mod system;

pub use error::{Error, Result};
