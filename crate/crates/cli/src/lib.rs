//! Command implementations and the operator console bridge behind the
//! `flexinst` binary.

pub mod bridge;
pub mod commands;
pub mod runner;
