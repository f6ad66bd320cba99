//! Exact, desk-scale multiplayer Nash preference optimization.
//!
//! Tabular game instances with general (possibly cyclic) preference oracles, a
//! multiplicative-weights self-play solver, duality-gap and exploitability diagnostics, and
//! the time-dependent / external-opponent loss family together with its classic
//! preference-optimization special cases.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at the crate root
//! fix the scalar to `f64`, which is what the tolerances quoted throughout the docs assume.

pub mod equilibrium;
pub mod error;
pub mod format;
pub mod instances;
pub mod losses;
pub mod objectives;
pub mod random;
pub mod reward_learning;
pub mod rng;
pub mod scalar;
pub mod solvers;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Tolerance for per-prompt normalization and oracle skew-symmetry (`f64`).
pub const NORMALIZATION_TOL: f64 = 1e-12;

pub type Policy = instances::TabularPolicy<f64>;
pub type Instance = instances::GameInstance<f64>;
pub type Preference = instances::PairwisePreference<f64>;
pub type Rewards = instances::RewardTable<f64>;

pub type PolicyF32 = instances::TabularPolicy<f32>;
pub type InstanceF32 = instances::GameInstance<f32>;
