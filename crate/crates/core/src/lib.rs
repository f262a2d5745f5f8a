//! Fuel-cell airpath control toolkit.
//!
//! A third-order nonlinear cathode airpath plant, a MIMO internal-model
//! controller, efficiency-optimal set-point maps, maximal admissible sets and
//! reference governors, tied together by a fixed-step closed-loop simulator.

pub mod io;
pub mod analysis;
pub mod cli;
pub mod imc;
pub mod lti;
pub mod mas;
pub mod plant;
pub mod rg;
pub mod setpoints;
pub mod sim;
