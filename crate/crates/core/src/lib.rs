//! Hidden-regime jump-diffusion market engine.
//!
//! End-to-end machinery for a market whose price is a geometric
//! jump-diffusion modulated by an unobservable finite-state regime process
//! with common jump times:
//!
//! * [`model`] — model description, assumption validation, jump kernels and
//!   the Markov generators;
//! * [`simulate`] — path simulation under the physical and minimal
//!   martingale measures;
//! * [`filter`] — finite-dimensional Kushner-Stratonovich regime filters and
//!   innovation processes;
//! * [`mmm`] — structure-condition quantities, admissibility, starred jump
//!   rates and the Doléans-Dade density of the minimal measure;
//! * [`valuefn`] — the value function g(t, x, s, π) by exact tree recursion
//!   and by least-squares Monte Carlo regression, and the value process;
//! * [`decomp`] — the locally risk-minimizing hedge integrand under partial
//!   information and its residual processes;
//! * [`oracle`] — independent brute-force validators: exact discrete Bayes
//!   filter, observation trees, discrete-time quadratic-hedging recursion,
//!   orthogonality estimators and one-step generator expectations;
//! * [`scenarios`] — the shipped desk-scale scenarios;
//! * [`verify`] — the acceptance suite driven by the CLI `verify` command.

pub mod error;
pub mod model;
pub mod filter;
pub mod mmm;
pub mod simulate;
pub mod oracle;
pub mod valuefn;
pub mod decomp;
pub mod scenarios;
pub mod verify;

pub use error::{Error, Result};
