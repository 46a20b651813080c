pub mod error;
pub mod inference;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod parallel;
pub mod simharness;
pub mod solvers;

pub use error::{Error, Result};
