//! Simulator of an indoor visible-light positioning system with an ACO-OFDM
//! downlink and an OOK baseline.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiment;
pub mod frontend;
pub mod geometry;
pub mod ofdm;
pub mod ook;
pub mod positioning;
pub mod qam;

pub use channel::{
    dc_gain, rms_delay_spread, simulate_impulse_response, ImpulseResponse, RayTraceParams,
};
pub use error::{Error, Result};
pub use experiment::{ErrorMap, ExperimentConfig, Modulation, Preset, Summary};
pub use frontend::{LedModel, NoiseModel};
pub use geometry::{Luminaire, ReceiverSpec, RoomModel, Vec3};
pub use ofdm::{GainEstimate, OfdmFrame, OfdmParams};
pub use ook::OokParams;
pub use positioning::{Anchor, PositionResult};
