//! Host-side companion to `prfa-core`: image and annotation files, the
//! version-1 detection wire protocol (client and toy server), parallel batch
//! execution, run reports and the `prfa` command line.

pub mod batch;
pub mod cli;
pub mod config;
pub mod io;
pub mod remote;
pub mod report;
pub mod server;
pub mod wire;

pub use prfa_core as core;
