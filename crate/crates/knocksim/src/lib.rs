//! File formats, validation protocols and the command-line front end of the
//! knock-intensity simulator. The numerical core lives in `knocksim-core`.

pub mod cli;
pub mod formats;
pub mod harness;
