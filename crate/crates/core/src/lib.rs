//! Visit-slot allocation under infection risk.

pub mod allocation;
pub mod dataset;
pub mod full_infection;
pub mod par;
pub mod partial_infection;
pub mod simulator;
pub mod gp;
pub mod cli;
