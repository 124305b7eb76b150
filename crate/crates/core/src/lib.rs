//! Core of the temperature-field reconstruction toolkit.
//!
//! Problem definitions ([`layout`]), a finite-difference steady conduction
//! solver ([`solver`]), dataset generation and the binary sample container
//! ([`dataset`]), sensor placement ([`observation`]), the four field metrics
//! ([`metrics`]) and the classical interpolation baselines ([`baselines`]).
//!
//! Data-parallel loops go through [`exec::Exec`], which runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod grid;
pub mod hashing;
pub mod layout;
pub mod metrics;
pub mod observation;
pub mod solver;

pub use error::{Error, Result};
pub use exec::Exec;
pub use grid::Grid;
pub use layout::{HeatSource, Layout, LayoutHash, PowerField, Sink};
pub use observation::{Normalization, ObservationPlan, ObservationSet, SparseImage, Strategy};
pub use solver::{SteadySolver, TemperatureField};
