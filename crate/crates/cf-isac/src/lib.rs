//! Link-level Monte Carlo simulator for dynamic-TDD cell-free MIMO
//! integrated sensing and communication (ISAC).
//!
//! The crate models a cell-free network of half-duplex multi-antenna access
//! points that is split between uplink and downlink duty on the same
//! time-frequency resource. Downlink APs radiate precoded user data plus a
//! probing signal toward a sensing hot-spot; uplink APs receive user data
//! together with the target echoes and cross-link interference. On top of
//! that physical layer the crate provides:
//!
//! - centralized and distributed GLRT target detectors with MAP/ML RCS
//!   estimators, their exact decomposition, and BCRLB benchmarking
//!   ([`detection`]),
//! - joint uplink-symbol/RCS estimation with hard-decision symbol error
//!   evaluation ([`joint`]),
//! - RZF user precoding, target- and user-centric sensing precoders
//!   ([`precoding`]), SINR/SE/SCNR evaluation ([`performance`]),
//! - traffic-based AP mode scheduling with a target-centric correction and
//!   exhaustive-search baselines ([`scheduling`]),
//! - a reproducible experiment harness with CSV/JSON emission
//!   ([`experiment`]).
//!
//! Trials are data-parallel (rayon) behind the `parallel` feature; per-trial
//! RNG substreams are counter-derived so results do not depend on worker
//! count.

pub mod channel;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod joint;
pub mod linalg;
pub mod performance;
pub mod precoding;
pub mod rng;
pub mod scenario;
pub mod scheduling;

pub use error::{Error, Result};
