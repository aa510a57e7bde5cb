//! Trajectory recovery for indoor path surveys.
//!
//! A wall-constrained particle filter corrects the dead-reckoned walk, magnetic
//! sequence matching finds revisits on the corrected path, and a second,
//! finer filter pass fuses walls, straight-walking runs and loop closures.
//! The recovered path labels WiFi scans for Gaussian-process signal maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filter;
pub mod formats;
pub mod geometry;
pub mod loopclosure;
pub mod pipeline;
pub mod sensors;
pub mod signalmap;
pub mod sim;
pub mod straightline;

pub use error::{Error, Result};
