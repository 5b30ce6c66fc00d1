//! Simulation of electromagnetic leakage from capacitive touchscreens and the
//! attack pipeline that turns that leakage back into handwriting.
//!
//! The crate is organised as the pipeline runs:
//!
//! * [`emsim`] models the TX/RX electrode circuit and synthesizes probe traces
//!   for a sequentially scanned panel.
//! * [`sigproc`] cuts traces into feature cycles and normalizes them.
//! * [`posnet`] is a convolutional front end plus transformer encoder that
//!   classifies each cycle into a screen zone.
//! * [`traj`] turns per-cycle zones into strokes, rasterizes them and scores
//!   them with the Jaccard index.
//! * [`harness`] drives datasets, training runs, attacks and reports.

pub mod emsim;
pub mod error;
pub mod geom;
pub mod harness;
pub mod par;
pub mod posnet;
pub mod sigproc;
pub mod traj;

pub use error::{Error, ErrorKind, Result};
pub use geom::Point;
pub use par::ExecMode;
