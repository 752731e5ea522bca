pub mod el;
pub mod error;
pub mod riccati;
pub mod scenario;
pub mod sdc;
pub mod sim;
pub mod swarm;
pub mod trace;
pub mod verify;
pub mod transform;

pub use error::{Error, Result};
