//! Deterministic discrete-event simulation of an autoscaled container cluster.
//!
//! The crate compares a proactive three-tier controller (strategic policy selection,
//! forecast-driven replica and node planning, make-before-break execution) against a
//! reactive pod-autoscaler plus node-autoscaler baseline on identical demand traces.
//!
//! ```
//! use autoscale_sim::scenario::parse_scenario;
//! use autoscale_sim::runner::simulate;
//!
//! let config = parse_scenario("workload = \"heartbeat\"\ncontroller = \"hpa_ca\"\n", "doc").unwrap();
//! let run = simulate(&config).unwrap();
//! assert!(run.summary.max_running_replicas <= 3);
//! ```

pub mod control;
pub mod engine;
pub mod error;
pub mod forecast;
pub mod invariants;
pub mod metrics;
pub mod planning;
pub mod runner;
pub mod scenario;
pub mod workload;

pub use error::{ForecastError, PlanError, SimError, TraceError};
