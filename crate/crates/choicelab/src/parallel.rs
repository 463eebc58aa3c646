//! Rayon versions of the sequential runners in the core crate. Each chain
//! and each tree has its own seed, so results match the sequential ones bit
//! for bit.

use rayon::prelude::*;

use choicelab_core::baselines::{rf_train_tree, BaselineError, Forest, ForestConfig};
use choicelab_core::sampler::{
    fit_behavioral_with, hmc_chain, BehavioralFit, ChainSet, FitConfig, FitError, HmcConfig, HmcError, LogDensity,
};
use choicelab_core::ChoiceRecord;

/// Runs `config.chains` chains concurrently.
pub fn hmc_sample_par<D: LogDensity + Sync + ?Sized>(
    density: &D,
    init: &[f64],
    config: &HmcConfig,
) -> Result<ChainSet, HmcError> {
    config.validate()?;
    let runs = (0..config.chains)
        .into_par_iter()
        .map(|c| hmc_chain(density, init, config, c))
        .collect::<Result<Vec<_>, _>>()?;
    let (chains, stats) = runs.into_iter().unzip();
    ChainSet::from_chains(density.dim(), chains, stats)
}

pub fn fit_behavioral_par(records: &[ChoiceRecord], config: &FitConfig) -> Result<BehavioralFit, FitError> {
    fit_behavioral_with(records, config, |model, init, cfg| hmc_sample_par(model, init, cfg))
}

pub fn rf_train_par(samples: &[(Vec<f64>, bool)], config: &ForestConfig) -> Result<Forest, BaselineError> {
    config.validate()?;
    let dim = samples.first().map(|s| s.0.len()).ok_or(BaselineError::EmptySamples)?;
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| rf_train_tree(samples, config, t))
        .collect::<Result<Vec<_>, _>>()?;
    Forest::from_trees(dim, trees)
}

#[cfg(test)]
mod tests {
    use super::*;
    use choicelab_core::baselines::rf_train;
    use choicelab_core::sampler::{hmc_sample, FnDensity};

    #[test]
    fn parallel_chains_match_sequential() {
        let d = FnDensity::new(2, |x: &[f64], g: &mut [f64]| {
            g[0] = -x[0];
            g[1] = -4.0 * x[1];
            -0.5 * x[0] * x[0] - 2.0 * x[1] * x[1]
        });
        let cfg = HmcConfig { chains: 3, iterations: 200, warmup: 100, seed: 9, ..HmcConfig::default() };
        let a = hmc_sample(&d, &[0.0, 0.0], &cfg).unwrap();
        let b = hmc_sample_par(&d, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_forest_matches_sequential() {
        let samples: Vec<(Vec<f64>, bool)> =
            (0..60).map(|i| (vec![i as f64, (i * 7 % 11) as f64], (i * 7 % 11) > 5)).collect();
        let cfg = ForestConfig { n_trees: 8, seed: 4, ..ForestConfig::default() };
        assert_eq!(rf_train(&samples, &cfg).unwrap(), rf_train_par(&samples, &cfg).unwrap());
        assert!(rf_train_par(&[], &cfg).is_err());
    }
}
