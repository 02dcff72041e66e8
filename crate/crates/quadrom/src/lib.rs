//! File formats, experiment pipelines and the `quadrom` command line for
//! the reduced-order models in `quadrom-core`.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod rom;

pub use error::{Error, Result};
