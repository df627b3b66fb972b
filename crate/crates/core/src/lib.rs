pub mod condvec;
pub mod data;
pub mod demo;
pub mod error;
pub mod evaluate;
pub mod gan;
pub mod neural;
pub mod transform;
pub mod workspace;
pub use error::{Error, Result};
