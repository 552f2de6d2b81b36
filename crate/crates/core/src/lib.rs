//! Families of two-impulse optimal transfers (TIOTs) between Keplerian orbits.

pub mod dual;
pub mod error;
pub mod kepler;
pub mod lambert;
pub mod cost;
pub mod continuation;
pub mod seeds;
pub mod porkchop;
pub mod pvt;
pub mod scenario;
pub mod pipeline;
pub mod io;
pub mod atlas;

pub use error::{Error, Result};
