//! Data I/O, synthetic generators and experiment orchestration.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod pgm;
pub mod rundir;
pub mod synth;
