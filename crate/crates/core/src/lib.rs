//! Interaction energies of one-dimensional measures under power-law
//! potentials `V(x) = |x|^p/p - |x|^q/q` with `p > q >= 2`.
//!
//! The numerical core is generic over [`Scalar`] (implemented for `f32` and
//! `f64`); the `*64` aliases below fix the usual double-precision choice.

// `!(x > 0)` is how argument checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod energy;
pub mod error;
pub mod flow;
pub mod measure;
pub mod moment_inequality;
pub mod phase;
pub mod potential;
pub mod rng;
pub mod roots;
pub mod scalar;
pub mod search;
pub mod transport;

pub use classify::{classify_analytic, Classification, Verdict};
pub use energy::{interaction_energy, position_gradient, steady_residual, velocity_field};
pub use error::{Error, Result};
pub use flow::{simulate, FlowOptions, FlowTrajectory, Termination};
pub use measure::{Atom, DiscreteMeasure, MeasureFile};
pub use potential::{Potential, Radii};
pub use scalar::Scalar;
pub use search::{global_search, local_minimize, perturb_probe, SearchOptions, SearchResult};
pub use transport::{d_inf, d_lambda, lp_oracle, monotone_coupling, Coupling};

pub type Potential64 = Potential<f64>;
pub type Measure64 = DiscreteMeasure<f64>;
pub type Trajectory64 = FlowTrajectory<f64>;
pub type SearchResult64 = SearchResult<f64>;
pub type Potential32 = Potential<f32>;
pub type Measure32 = DiscreteMeasure<f32>;
