//! Mobile parcel locker planning.
//!
//! The pipeline runs generate → site → compile tasks → solve → score:
//!
//! * [`model`] holds the instance types, generator and file format.
//! * [`siting`] places parking spaces by k-means.
//! * [`taskgen`] turns parking windows into time-sliced delivery tasks.
//! * [`routing`] decodes candidate states into timed schedules.
//! * [`objective`] scores and validates schedules.
//! * [`hqm`], [`ga`] and [`oracle`] search the state space.
//! * [`stats`] and [`harness`] back the experiment CLI.

pub mod ga;
pub mod harness;
pub mod hqm;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod rng;
pub mod search;
pub mod routing;
pub mod siting;
pub mod stats;
pub mod taskgen;

pub use model::{Coord, Customer, ParkingSpace, ProblemInstance, Stopover, TimeWindow};
pub use routing::{AdjustPolicy, Schedule, State};
pub use taskgen::Task;
