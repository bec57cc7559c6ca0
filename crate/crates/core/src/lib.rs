//! Multicell massive-MIMO uplink simulator for studying how estimated
//! channel covariance matrices affect channel estimation and spectral
//! efficiency.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`] builds the cell layout, pathloss and the one-ring
//!   covariance matrices `R` and pilot covariances `Q`.
//! - [`channels`] draws correlated Rayleigh channels and pilot observations.
//! - [`covest`] estimates `Q` and `R` from finite observations with diagonal
//!   shrinkage ("R direct" and "Via Q").
//! - [`chanest`] builds MMSE, approximate-MMSE and LS filters and evaluates
//!   their mean-squared error in closed form.
//! - [`se`] evaluates the use-and-then-forget spectral-efficiency bound, in
//!   closed form for MRC and by Monte Carlo for any combiner.
//! - [`runner`] orchestrates the NMSE and SE sweeps and writes CSV.
//!
//! Monte-Carlo loops run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel task owns an RNG substream keyed by its
//! index, so results are identical for any worker count.

pub mod chanest;
pub mod channels;
pub mod covest;
mod error;
pub mod linalg;
pub mod parallel;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod se;

pub use error::{Error, Result};
pub use linalg::{c64, HermitianMatrix};
pub use scenario::{CovarianceSet, SystemParams};
