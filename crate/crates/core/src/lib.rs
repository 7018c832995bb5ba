//! Numerical laboratory for two-stage tournament auctions with one strong bidder.
//!
//! The weak bidders `1..=N` draw values from `F` on `[0, v̄]` and bid for the
//! right to meet bidder `N + 1` (value `w ~ G`) in a second-price contest.
//! This crate solves the symmetric equilibrium bid schedule, simulates the
//! competing mechanisms, computes the optimal-auction benchmark and runs the
//! limit experiments along families of strong-bidder laws that collapse onto
//! an atom above `v̄`.

pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod mechanisms;
pub mod myerson;
pub mod quad;
pub mod rng;
pub mod sequences;
pub mod stats;

pub use dist::{Component, Distribution, StrongLaw, SupportInterval};
pub use equilibrium::{BestResponseReport, BidFunction, SolveMethod, SolveReport};
pub use error::{Error, Result};
pub use mechanisms::{AuctionSpec, DiscreteAtom, Mechanism, Outcome, StrongBidder};
pub use stats::RevenueEstimate;
