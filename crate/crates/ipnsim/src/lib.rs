//! Deterministic discrete-event simulator for interplanetary DTN constellations.
//!
//! The library is organized bottom-up:
//!
//! * [`ephemeris`] - 2D coplanar circular orbital geometry, line of sight,
//!   synodic periods.
//! * [`linkmodel`] - free-space path loss, one-way light time, achievable
//!   data rates with bandwidth asymmetry.
//! * [`contactplan`] - sampled visibility windows compiled into directed
//!   contact plans, plus a plain-text interchange format.
//! * [`routing`] - earliest-arrival contact-graph routing with region-first
//!   late-binding endpoint resolution.
//! * [`bundle`] - store-and-forward bundle agents: custody transfer via
//!   hop-by-hop acks, expiry, file fragmentation and reassembly.
//! * [`ltp`] - red-part LTP sessions (checkpoint / report retransmission
//!   loops) and a loss-free reliable convergence layer for ground segments.
//! * [`simcore`] - the event queue, simulation clock, per-link FIFO
//!   serialization and seeded per-link RNG streams.
//! * [`scenario`] - scenario configuration, built-in constellations, the
//!   network engine that wires everything together, and metrics output.
//!
//! All units are SI: meters, seconds, bits, bits/s, Hz. Decibel values are
//! explicitly suffixed `_db`.

pub mod bundle;
pub mod cli;
pub mod contactplan;
pub mod ephemeris;
pub mod linkmodel;
pub mod ltp;
pub mod routing;
pub mod scenario;
pub mod simcore;

pub use contactplan::{Contact, ContactPlan, NodeId};
pub use ephemeris::{BodyId, Ephemeris, Position};
pub use routing::EndpointId;
pub use scenario::{run_scenario, RunOptions, RunOutput, ScenarioConfig};
