//! File formats, the experiment harness and the command-line front end for
//! [`recal_core`].

pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;

pub use error::{RecalError, Result};
pub use recal_core;
