//! Lagrangian ocean-drifter modeling toolkit.
//!
//! The crate combines a reduced-order inertial drifter model, derived from
//! the Maxey-Riley equation by slow-manifold reduction, with a recurrent
//! network correction trained on the residual between modeled and observed
//! drifter velocities. It covers the full workflow:
//!
//! * [`flowfield`] — gridded current/wind fields, interpolation, Ekman
//!   velocity, analytic oracle fields;
//! * [`dynamics`] — the full (stiff) and reduced drifter equations and the
//!   nondimensional groups connecting them;
//! * [`integrate`] — RK4 trajectory integration in geographic coordinates,
//!   ensembles, median paths;
//! * [`learn`] — feature extraction, an LSTM residual model trained with
//!   truncated backpropagation through time, the blended velocity model;
//! * [`metrics`] — skill scores, velocity RMSE, trajectory-similarity
//!   statistics;
//! * [`dataio`] — drifter track ingestion, resampling, train/test splits,
//!   synthetic dataset generation.

pub mod dataio;
pub mod dynamics;
pub mod flowfield;
pub mod geo;
pub mod integrate;
pub mod learn;
pub mod metrics;
pub mod timebase;

pub use flowfield::Vec2;
