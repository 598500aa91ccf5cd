//! The discrete-event core: clocks, channels, windows, tile kernels, PL
//! stages and the tick loop that drives them deterministically.

pub mod channel;
pub mod clock;
pub mod kernel;
pub mod sim;
pub mod window;

pub use clock::ClockConfig;
pub use sim::{FabricConfig, RunStats, SimError};
