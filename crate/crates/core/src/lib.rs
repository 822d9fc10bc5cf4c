//! Multidimensional poverty measurement, livelihood-asset scoring, a
//! two-period pension model and the panel econometrics used to relate them.

pub mod econometrics;
pub mod entropy;
pub mod error;
pub mod mpi;
pub mod olg;
pub mod panel;
pub mod synth;

pub use error::{Error, Result};
pub use panel::{MissingReport, Panel, PanelKeys};
