//! Joint-advertising auctions: bundles of one retailer and one supplier
//! compete for ad slots.
//!
//! The crate holds the pure algorithmic side of the laboratory and needs
//! only `alloc`:
//!
//! * [`distributions`]: regular value priors and their virtual values.
//! * [`market`]: bipartite retailer/supplier graphs and auction instances.
//! * [`exact`]: the revenue-optimal single-slot mechanism.
//! * [`vcg`]: the RVCG multi-slot baseline.
//! * [`diff`]: tensors, reverse-mode tape, MLPs and Adam.
//! * [`batch`]: padded batch layout shared by the network and the estimators.
//! * [`mechanism`]: a common interface over all mechanisms.
//! * [`bundlenet`]: the learned multi-slot mechanism.
//! * [`training`]: bundle regret, misreport ascent and the augmented
//!   Lagrangian training loop.
//! * [`evaluation`]: Monte-Carlo revenue/regret estimators and allocation grids.
//!
//! Enable the `std` feature for runtime SIMD detection in the matrix kernel.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod batch;
pub mod bundlenet;
pub mod distributions;
pub mod diff;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod market;
pub mod mechanism;
pub mod outcome;
pub mod rng;
pub mod training;
pub mod vcg;

pub use distributions::{DistKind, Distribution, Priors};
pub use error::{ConfigError, DistError, GraphError, MechanismError};
pub use market::{AuctionInstance, Bundle, MarketGraph, Side};
pub use outcome::AuctionOutcome;
