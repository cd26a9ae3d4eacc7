//! Exact and Monte Carlo toolkit for the one-dimensional spiking-neuron
//! interacting particle system with leak rate `gamma`.
//!
//! Active neurons spike at rate 1 (resetting themselves and activating both
//! lattice neighbours) and leak at rate `gamma` (resetting silently). The
//! crate provides the transition maps and their duals, Harris graphical
//! realizations with forward and dual sweeps, a direct-method simulator for
//! extinction times, an exact CTMC oracle for small windows, the statistics
//! used to test the exponential extinction law, and the experiment drivers
//! behind the `spiking-ips` command-line tool.

pub mod cli;
pub mod ctmc;
pub mod error;
pub mod experiments;
pub mod gillespie;
pub mod graphical;
pub mod lazy;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use graphical::{ContaminationFlag, Direction, Event, EventKind, GraphicalRealization, PathQuery};
pub use model::{all_one, Configuration, RateParams, Site, Window, WindowKind};
