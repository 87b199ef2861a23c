//! Stealthily biased sampling.
//!
//! A decision-maker who must disclose a benchmark subset can pick the subset so
//! that a fairness metric (demographic parity) looks clean while the subset's
//! feature distribution stays as close as possible, in Wasserstein distance, to
//! an honest uniform sample. This crate implements both sides:
//!
//! * the attacker: [`stealth::stealth_measure`] reduces the problem to a
//!   min-cost flow ([`flow`]) and [`stealth::draw_sample`] turns the optimal
//!   measure into a concrete subset; [`stealth::case_control_sample`] is the
//!   naive baseline;
//! * the detector: Kolmogorov-Smirnov tests, empirical Wasserstein distance,
//!   the distinguishing-game advantage and the KS advantage bound ([`detect`]);
//! * the experiment harness that pits the two against each other
//!   ([`experiment`]).

pub mod data;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod flow;
pub mod seed;
pub mod stealth;
pub mod synthetic;
pub mod transport;

pub use data::{BinLabel, BinSpec, Dataset, Record, Schema, WeightedMeasure};
pub use error::{Error, Result};
pub use flow::{FlowNetwork, FlowSolution};
pub use stealth::{SampleDraw, StealthPlan};
pub use transport::{CostKind, GroundCost};
