//! Mobility-panel analytics: raw GPS pings are turned into stop events and
//! stop locations, labelled semantically, and then analysed for routines,
//! co-locations, behaviour-change metrics and a Bayesian model of daily POI
//! visits.
//!
//! Each stage lives in its own module and is usable on its own; [`pipeline`]
//! wires them together and the `mobility` binary exposes every stage as a
//! subcommand.

pub mod clock;
pub mod colocation;
pub mod error;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod routines;
pub mod semantics;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
