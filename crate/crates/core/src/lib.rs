//! Two-scale traffic simulation: a 2D follow-the-leader particle model, a 2D
//! second-order macroscopic model solved by finite volumes, and the planar
//! Riemann problem of the macroscopic system.

pub mod cli;
pub mod fvm;
pub mod micro;
pub mod model;
pub mod riemann;
pub mod scenarios;
