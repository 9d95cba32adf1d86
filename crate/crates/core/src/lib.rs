//! Spectral mean inference for stationary processes on a regular 2-D
//! lattice: periodogram-based estimators, subsampling variance components,
//! the frequency-domain wild bootstrap and its hybrid rescaling, the
//! isotropy test and the simulation models used to study them.

pub mod bootstrap;
pub mod density;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod infer;
pub mod io;
pub mod lattice;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod subsample;

pub use bootstrap::{bootstrap_distribution, BootstrapDraws, BootstrapKind};
pub use density::{kernel_density_estimate, DensityOptions, Kernel, SpectralDensityEstimate};
pub use error::{Error, Result};
pub use infer::{
    confidence_interval, isotropy_test, ConfidenceInterval, FieldAnalysis, IsotropyTestResult, Method, TestForm,
};
pub use lattice::{periodogram, FrequencyGrid, LatticeField, Periodogram};
pub use rng::SeedSequence;
pub use simulate::{CovarianceModel, Simulator};
pub use spectral::{spectral_mean, Lag, PsiFunction, PsiSpec, SpectralMeanValue};
pub use subsample::{subsample_ensemble, variance_estimates, BlockSpec, SubsampleEnsemble, VarianceEstimates};
