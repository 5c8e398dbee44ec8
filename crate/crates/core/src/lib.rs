//! Open multitype SIR epidemics on directed trade networks with demography.
//!
//! The numerical core (`linalg`, `spectral`, `outbreak`, `ode`, `ldp`) is
//! generic over [`Scalar`]; stochastic simulation works in `f64`.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read closer to the matrix formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod calibration;
pub mod error;
pub mod ldp;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod ode;
pub mod outbreak;
pub mod scalar;
pub mod spectral;
pub mod ssa;

pub use error::{Error, ErrorKind, Result};
pub use linalg::Matrix;
pub use model::{
    load_model, validate_connectivity, Connectivity, LoadedConfig, NetworkModel, PopulationState, ScalingConfig,
    SirState,
};
pub use outbreak::{eval_g, extinction_probs, major_outbreak_prob, FixedPointOptions, PgfPoint};
pub use scalar::Scalar;
pub use spectral::{analyze, OutbreakAnalysis};

pub type Model = NetworkModel<f64>;
pub type ModelF32 = NetworkModel<f32>;
pub type Scaling = ScalingConfig<f64>;
pub type Analysis = OutbreakAnalysis<f64>;
