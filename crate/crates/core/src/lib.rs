//! Exact laws and Monte Carlo for the Bernoulli sieve.
//!
//! `n` uniform balls on `[0,1]` fall into the boxes `]P_j, P_{j-1}[` cut by
//! the stick-breaking sequence `P_j = W_1 ... W_j`. The crate provides
//!
//! * [`stick_law`]: the law of `W` with moments, `mu`, `nu` and `W0` sampling;
//! * [`exact`]: exact occupancy-pattern probabilities for finite `n` and for
//!   the `n -> inf` limit, with enumeration and tail bounds;
//! * [`sieve`]: a binomial-chain simulator of the finite-`n` scheme;
//! * [`point_process`]: the limit model (self-similar renewal set and unit
//!   Poisson process) and its gap occupancy counts;
//! * [`stats`]: total variation, chi-square and Kolmogorov–Smirnov tools;
//! * [`verify`]: the end-to-end check suites run by the CLI.

pub mod error;
pub mod exact;
pub mod extended;
pub mod par;
pub mod point_process;
pub mod quadrature;
pub mod sieve;
pub mod stats;
pub mod stick_law;
pub mod verify;

pub use error::{Result, SieveError};
pub use extended::Extended;
pub use stick_law::StickLaw;
