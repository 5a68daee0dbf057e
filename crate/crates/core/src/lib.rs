//! Simulation and optimization of sparse, foldable multilayer transmissive
//! surfaces mounted at the user side of an uplink.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: layer grids, the fold-angle set and folded element positions
//! - [`channel`]: spherical-wave line-of-sight channels between all endpoints
//! - [`beamforming`]: cascade products and the alternating combiner / phase /
//!   precoder optimization
//! - [`search`]: tabu search over element activation and fold angles
//! - [`metrics`]: incident power maps and the element activation ratio
//! - [`scenario`] and [`harness`]: physical scenarios, the joint two-stage
//!   pipeline and the experiment drivers behind the `usris` binary

pub mod beamforming;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod scenario;
pub mod search;

pub use error::{Error, Result};
