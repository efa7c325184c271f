pub mod eppf;
pub mod error;
pub mod fragcoag;
pub mod partitions;
pub mod quad;
pub mod samplers;
pub mod special_fn;
pub mod stable_density;
pub mod tilt;
pub mod verify;

pub use error::{Error, Result};
