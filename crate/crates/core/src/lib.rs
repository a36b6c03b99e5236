//! Pedestrian-aware allocation of a plug-in hybrid's electric energy.
//!
//! Given the routes a driver has taken before, the vehicle predicts which
//! segments it is likely to drive next ([`predict`]), looks up how many
//! pedestrians are on them ([`density`]) and how much electric energy each
//! takes ([`history`]), then decides how much of every segment to drive in
//! emission-free electric mode ([`optimize`]). The [`sim`] module replays
//! that decision loop segment by segment for single vehicles and fleets.

pub mod density;
pub mod history;
pub mod ids;
pub mod io;
pub mod network;
pub mod optimize;
pub mod predict;
pub mod sim;

pub use ids::{RouteId, SegmentId};
