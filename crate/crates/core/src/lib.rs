//! Simulator and optimizer for a single-cell OFDMA uplink assisted by one
//! amplify-and-forward UAV relay.
//!
//! Each time slot the BS jointly chooses, per user, between the direct
//! (cellular) and the relayed mode, assigns subchannels, places the UAV and
//! allocates transmit powers. The joint problem is attacked by block
//! coordinate ascent over three blocks:
//!
//! - [`matching`]: mode selection and subchannel allocation as a many-to-one
//!   matching game solved by swap operations,
//! - [`trajectory`]: UAV placement by successive convex programming on the
//!   horizontal plane and then on the altitude,
//! - [`power_alloc`]: power allocation by successive convex programming on a
//!   difference-of-concave split of the rates.
//!
//! [`orchestrator`] runs the per-slot loop, proportional-fair episodes, the
//! random and cellular-only baselines and parameter sweeps.

pub mod channel;
pub mod convex;
pub mod error;
pub mod geometry;
pub mod link_rate;
pub mod matching;
pub mod orchestrator;
pub mod power_alloc;
pub mod scenario;
pub mod trajectory;
pub mod uav_power;
pub mod units;

pub use error::{Error, Result};
pub use geometry::Point3;
pub use scenario::{Scenario, UavState};
