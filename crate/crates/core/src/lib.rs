pub mod error;
pub mod field;
pub mod geometry;
pub mod envelope;
pub mod mesh;
pub mod construction;
pub mod holder;
pub mod verify;
pub mod io;

pub use error::{Error, Result};
pub use field::{Field, FnField};
