//! Cosserat-rod statics for pressurized eversion-robot tubes with
//! diameter-reducing bands: simulation, virtual characterization, parameter
//! identification and band-layout design.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod designer;
pub mod domain;
pub mod io;
pub mod lab;
pub mod so3;
pub mod solver;

pub use domain::{BandSpec, CrossSection, MaterialModel, RodSpec, StiffnessMatrices};
pub use solver::{Equilibrium, LoadCase, LoadMode, RodModel, RodState, SolverSettings, WarmStart};
