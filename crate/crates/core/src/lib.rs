//! Simulation and analysis toolkit for the dynamical discrete web (DyDW).
//!
//! The web is a field of ±1 arrows on the even lattice whose values are
//! resampled at the rings of independent rate-one Poisson clocks. Every arrow
//! history is a pure function of `(seed, web, site)`, so arbitrary regions of
//! the infinite lattice can be revisited at arbitrary dynamical times.
//!
//! Modules, bottom-up:
//!
//! * [`rng`]: keyed counter-based pseudorandom function and seed splitting.
//! * [`web`]: arrow streams, the main/secondary web pair, path tracing.
//! * [`geometry`]: rectangle stacks and the envelope `σ_γ`.
//! * [`events`]: lattice events `B_k`, `C_k`, `Â_k`, `Υ_k` and their
//!   dependence regions.
//! * [`tau`]: exact sets of dynamical times on which an event holds.
//! * [`sticking`]: sticking-time classification, time-changed path splitting,
//!   coupling diagnostics, modulus of continuity.
//! * [`mc`]: replicated Monte Carlo estimators.
//! * [`bounds`]: Hausdorff-dimension bound formulas.

// `!(x > y)` is used deliberately so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
mod error;
pub mod events;
pub mod exec;
pub mod geometry;
pub mod mc;
pub mod rng;
pub mod special;
pub mod sticking;
pub mod tau;
pub mod web;

pub use error::{Error, Result};
pub use events::{DependenceRegion, EventKind, EventSpec};
pub use exec::{Execution, Replicates};
pub use geometry::RectangleStack;
pub use mc::Estimate;
pub use tau::{SwitchEvent, TauIntervalSet};
pub use web::{ArrowField, ArrowStream, PathTrace, SiteAddress, WebId, WebPair};
