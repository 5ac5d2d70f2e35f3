//! Host-side tooling for the delivery-fleet simulator: file formats, run
//! configuration, experiment sweeps and the live session server.

pub mod config;
pub mod io;
pub mod server;
pub mod session;
pub mod sweep;
