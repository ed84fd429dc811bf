//! File formats, command-line plumbing and the Monte-Carlo harness around
//! [`medconf_core`].

pub mod artifact;
pub mod config;
pub mod evaluation;
pub mod io;

pub use medconf_core as core;
