//! Bayesian linear mixed model of daily POI visits with a sigmoid risk
//! adaptation term, fitted by adaptive Metropolis, with Bayesian R² and
//! PSIS-LOO model comparison.

mod data;
mod density;
mod diagnostics;
mod fit;
mod optimize;
mod psis;
mod sampler;

pub use data::{ModelData, ModelInputRow, ModelSpec, Observation, Outcome, Standardization, Variant};
pub use density::{
    log_likelihood, log_posterior, log_prior, predict_mean, student_t_logpdf, Layout, Params, Posterior, GAMMA_SHIFT,
    PHI_SHIFT,
};
pub use diagnostics::{effective_sample_size, split_rhat};
pub use fit::{
    bayesian_r2, compare_models, fingerprint, fit_model, ComparisonRow, FitConfig, ModelFit, ParamSummary, R2Summary,
    RHAT_WARN,
};
pub use optimize::{laplace_covariance, maximize};
pub use psis::{gpd_fit, lppd, psis_log_weights, psis_loo, LooResult, PARETO_K_WARN};
pub use sampler::{sample, Chain, LogDensity, SamplerConfig};
