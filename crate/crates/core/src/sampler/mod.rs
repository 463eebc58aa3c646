//! Posterior inference for log densities with gradients: static-trajectory
//! HMC with warmup adaptation, a MAP optimiser, and convergence diagnostics.

mod diagnostics;
mod fit;
mod hmc;
mod map;

pub use diagnostics::{ess, r_hat, summarize, ChainDiagnostics, DiagError, ParamDiagnostics};
pub use fit::{build_model, fit_behavioral, fit_behavioral_with, BehavioralFit, FitConfig, FitError, FitMethod};
pub use hmc::{hmc_chain, hmc_sample, leapfrog, ChainSet, ChainStats, HmcConfig, HmcError};
pub use map::{map_fit, MapConfig, MapResult};

/// A differentiable log density on `R^dim`.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density. May
    /// return a non-finite value outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for crate::prospect::HierarchicalModel {
    fn dim(&self) -> usize {
        crate::prospect::HierarchicalModel::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior(x, grad).unwrap_or(f64::NAN)
    }
}

/// Adapts a closure `(x, grad) -> log density` to [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}
