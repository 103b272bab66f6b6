pub mod error;
pub mod harmonics;
pub mod lab;
pub mod meta;
pub mod model;
pub mod ntk;
pub mod numkit;
pub mod train;

pub use error::{Error, Result};
