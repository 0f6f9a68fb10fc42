//! Quantum instruments, LOCC protocol trees, channel-class checks and
//! W-class monotones for small multipartite systems.

pub mod caratheodory;
pub mod classes;
pub mod error;
pub mod gap;
pub mod instrument;
pub mod linalg;
pub mod protocol;
pub mod random;
pub mod wclass;

pub use error::{Error, Result};
pub use instrument::{
    choi_of_map, instrument_choi_distance, mix_instruments, Choi, Instrument, KrausMap,
};
pub use linalg::{CMatrix, C64, DEFAULT_TOL};
