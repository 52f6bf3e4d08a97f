//! Simulation and analysis toolkit for hybrid LiFi/femtocell indoor networks
//! and integrated RF/optical links for vehicles.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: optical (Lambertian LOS) and RF (Hata, femto indoor) link budgets.
//! - [`zoning`]: LiFi AP grid planning and the four-zone coverage model.
//! - [`selection`]: AHP weighting and LiFi/femtocell ranking.
//! - [`policy`]: admission, handover decision and FAP idle-mode rules.
//! - [`protocol`]: handover call flows as message-driven state machines.
//! - [`engine`]: the indoor discrete-event simulator and its experiments.
//! - [`transport`]: vehicle relay capacity, outage, car-to-car reliability and
//!   group handover signalling.
//!
//! Every stochastic routine takes an explicit seed; see [`rng`] for how
//! streams are split per subsystem.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod engine;
mod error;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod transport;
pub mod zoning;

pub use error::{Error, Result};

/// Version of every CSV layout emitted by this crate. Bump on any header or
/// column-semantics change.
pub const SCHEMA_VERSION: u32 = 1;
