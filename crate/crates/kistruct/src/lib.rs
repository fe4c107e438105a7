//! File formats and the command-line front end for [`kistruct_core`].

pub mod cli;
pub mod io;
pub mod report;
