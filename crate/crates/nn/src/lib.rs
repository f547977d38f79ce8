pub mod error;
pub mod numerics;
pub mod tst;

pub use error::{NnError, Result};
