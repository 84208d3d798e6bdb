//! Loss-driven grouping of high-cardinality categorical codes.
//!
//! Linear expenditure models over individual diagnostic codes are
//! unidentifiable once the code vocabulary runs into the hundreds; grouping
//! codes into a handful of risk groups restores identifiability but makes
//! the grouping itself a combinatorial unknown. This crate searches the
//! space of labeled set partitions of the code vocabulary with a
//! Metropolis-Hastings / simulated-annealing chain whose energy is the
//! out-of-sample loss of an OLS regression using the induced group history
//! dummies.
//!
//! The pieces, bottom up:
//!
//! * [`partition`]: the state space. Assignment vectors over a shared
//!   [`partition::Vocabulary`], the reassignment (Hamming) metric, exact
//!   big-integer neighborhood counts, the truncated-Poisson move kernel,
//!   and its symmetric proposal probability.
//! * [`ols`]: a rank-revealing least-squares fitter with deterministic
//!   first-kept handling of collinear columns.
//! * [`data`]: dataset schema, CSV ingestion with a prevalence screen, and
//!   deterministic person-keyed train/test and k-fold splitting.
//! * [`energy`]: design-matrix assembly (demographics plus group history
//!   dummies), the train/test energy of a partition, predictive-ratio
//!   diagnostics, and a cached [`energy::EnergyModel`] for tight chain loops.
//! * [`mcmc`]: the chain itself. Temperature schedules, the acceptance
//!   rule, trace recording, and seeded multistart over a worker pool.
//! * [`synth`]: a synthetic-data generator with a planted grouping for
//!   end-to-end validation.
//! * [`config`] / [`runner`] / [`report`]: the TOML run configuration and
//!   the four workflows (`generate`, `optimize`, `cv`, `report`) exposed by
//!   the `riskpart` binary.
//!
//! Every randomized component takes an explicit seed and is deterministic
//! given it; file outputs are written atomically and are byte-stable across
//! reruns of the same configuration.
//!
//! Runnable walkthroughs live in `examples/` (one per capability):
//!
//! ```text
//! cargo run --example partition_distances
//! cargo run --example neighborhood_counts
//! cargo run --example sample_neighbors
//! cargo run --example generate_data
//! cargo run --example single_chain
//! cargo run --example multistart_grid
//! cargo run --example cross_validation
//! cargo run --example planted_recovery
//! ```

pub mod config;
pub mod data;
pub mod energy;
pub mod error;
pub mod mcmc;
pub mod ols;
pub mod partition;
pub mod report;
pub mod runner;
pub mod synth;
pub(crate) mod util;

pub use error::{Error, Result};
