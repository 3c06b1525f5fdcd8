//! Simulation and analysis of systems with uncertain but fixed parameters,
//! side by side with the Brownian-motion SDE obtained by substituting
//! `θ dt = θ̄ dt + Bθ dW`.
//!
//! The two models share marginal means but not much else: the random-parameter
//! ODE has smooth, fully correlated paths whose variance grows like `t²`,
//! while the SDE has rough, independent-increment paths whose variance grows
//! like `t`. The modules here simulate both ([`integrate`]), provide their
//! closed forms ([`analytic`]), measure the differences ([`stats`]), and
//! compare stability and joint chance constraints ([`safety`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod evidence;
pub mod integrate;
pub mod numerics;
pub mod rng;
pub mod safety;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
pub use integrate::{IntegrationSettings, PathEnsemble, SdeScheme, TimeGrid};
pub use systems::{catalog_lookup, CatalogOptions, SystemKind, SystemSpec};
