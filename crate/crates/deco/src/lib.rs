//! Std companion to `deco_core`: file formats, HTTP model clients, the
//! end-to-end editing pipeline and the command-line front end.

pub mod cli;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod remote;
