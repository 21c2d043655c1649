//! Idempotent quantum channels: structure, emulation capacity, and the
//! numerical certificates around them.

pub mod approx;
pub mod capacity;
pub mod channel;
pub mod discrimination;
pub mod emulation;
pub mod error;
pub mod io;
pub mod linalg;
pub mod random;
pub mod structure;

pub use channel::{BlockData, BlockSpec, Channel, ChoiMatrix, Equality};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ToleranceConfig};
