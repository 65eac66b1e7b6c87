//! Linear, threshold and smooth-transition autoregressions for matrix-valued
//! time series.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod experiments;
pub mod io;
pub mod linearity;
pub mod model;
pub mod series;
pub mod tensor;

pub use error::{Error, Result};
pub use estimation::{FitResult, IlsOptions, SlopeThresholdGrid, ThresholdGrid};
pub use exec::Exec;
pub use model::{CoefficientSet, ModelKind, ModelSpec, TransitionFunction, TransitionSource};
pub use series::{LaggedSample, MatrixSeries};
pub use tensor::{MatrixNormalSpec, RealMatrix};
