use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::diagnostics::{summarize, ChainDiagnostics};
use super::hmc::{hmc_sample, ChainSet, HmcConfig, HmcError};
use super::map::{map_fit, MapConfig, MapResult};
use crate::data::{ChoiceRecord, UserId};
use crate::math;
use crate::prospect::{choice_prob, HierarchicalModel, RawParams, SVParams, UserTrials, GROUP_DIM, N_PARAMS, PARAM_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Hmc,
    Map,
}

impl FitMethod {
    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Hmc => "hmc",
            FitMethod::Map => "map",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "hmc" => Some(FitMethod::Hmc),
            "map" => Some(FitMethod::Map),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub method: FitMethod,
    pub hmc: HmcConfig,
    pub map: MapConfig,
    /// Start the chains from the MAP point instead of the prior centre.
    pub init_from_map: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { method: FitMethod::Hmc, hmc: HmcConfig::default(), map: MapConfig::default(), init_from_map: true }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("no training records")]
    EmptyRecords,
    #[error(transparent)]
    Sampler(#[from] HmcError),
}

/// Per-user prospect parameters from a fitted hierarchical model.
#[derive(Debug, Clone, PartialEq)]
pub struct BehavioralFit {
    pub method: FitMethod,
    pub user_ids: Vec<UserId>,
    pub params: Vec<SVParams>,
    /// Parameters of a user absent from training: the group location.
    pub population: SVParams,
    pub diagnostics: Option<ChainDiagnostics>,
    pub map: Option<MapResult>,
    index: BTreeMap<UserId, usize>,
}

impl BehavioralFit {
    pub fn new(method: FitMethod, user_ids: Vec<UserId>, params: Vec<SVParams>, population: SVParams) -> Self {
        let index = user_ids.iter().cloned().enumerate().map(|(i, u)| (u, i)).collect();
        BehavioralFit { method, user_ids, params, population, diagnostics: None, map: None, index }
    }

    pub fn params_for(&self, user: &UserId) -> Option<&SVParams> {
        self.index.get(user).map(|&i| &self.params[i])
    }

    /// Probability of choosing option 1.
    pub fn predict(&self, record: &ChoiceRecord) -> f64 {
        let p = self.params_for(&record.user_id).unwrap_or(&self.population);
        choice_prob(&record.scenario, p)
    }

    pub fn predict_all(&self, records: &[ChoiceRecord]) -> Vec<f64> {
        records.iter().map(|r| self.predict(r)).collect()
    }
}

/// Builds the hierarchical model over every user that appears in `records`,
/// in sorted id order.
pub fn build_model(records: &[ChoiceRecord]) -> (Vec<UserId>, HierarchicalModel) {
    let mut by_user: BTreeMap<&UserId, Vec<&ChoiceRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let ids = by_user.keys().map(|u| (*u).clone()).collect();
    let users = by_user.into_values().map(UserTrials::from_records).collect();
    (ids, HierarchicalModel::new(users))
}

fn quantity_names(user_ids: &[UserId]) -> Vec<String> {
    let mut names = Vec::with_capacity(GROUP_DIM + N_PARAMS * user_ids.len());
    for p in PARAM_NAMES {
        names.push(format!("location[{p}]"));
    }
    for p in PARAM_NAMES {
        names.push(format!("scale[{p}]"));
    }
    for u in user_ids {
        for p in PARAM_NAMES {
            names.push(format!("{p}[{u}]"));
        }
    }
    names
}

/// Group location, group scale, then per-user raw parameters.
fn quantity(theta: &[f64], k: usize) -> f64 {
    if k < N_PARAMS {
        theta[k]
    } else if k < GROUP_DIM {
        math::exp(theta[k])
    } else {
        let p = (k - GROUP_DIM) % N_PARAMS;
        theta[p] + math::exp(theta[N_PARAMS + p]) * theta[k]
    }
}

fn raw_to_params(raw: &[f64]) -> SVParams {
    SVParams::from_raw(&RawParams([raw[0], raw[1], raw[2], raw[3]]))
}

/// Fits every user in `records` with chains run sequentially.
pub fn fit_behavioral(records: &[ChoiceRecord], config: &FitConfig) -> Result<BehavioralFit, FitError> {
    fit_behavioral_with(records, config, |model, init, cfg| hmc_sample(model, init, cfg))
}

/// As [`fit_behavioral`], with a caller-supplied chain runner (for example a
/// parallel one). HMC summaries average draws on the raw scale, then
/// transform.
pub fn fit_behavioral_with<R>(records: &[ChoiceRecord], config: &FitConfig, run_chains: R) -> Result<BehavioralFit, FitError>
where
    R: FnOnce(&HierarchicalModel, &[f64], &HmcConfig) -> Result<ChainSet, HmcError>,
{
    if records.is_empty() {
        return Err(FitError::EmptyRecords);
    }
    let (user_ids, model) = build_model(records);
    let zero = alloc::vec![0.0; model.dim()];

    let map = if config.method == FitMethod::Map || config.init_from_map {
        Some(map_fit(&model, &zero, &config.map)?)
    } else {
        None
    };

    match config.method {
        FitMethod::Map => {
            let map = map.expect("map run above");
            let theta = &map.x;
            let params = (0..user_ids.len())
                .map(|j| {
                    let raw: Vec<f64> = (0..N_PARAMS).map(|p| quantity(theta, GROUP_DIM + j * N_PARAMS + p)).collect();
                    raw_to_params(&raw)
                })
                .collect();
            let mut fit = BehavioralFit::new(FitMethod::Map, user_ids, params, raw_to_params(&theta[..N_PARAMS]));
            fit.map = Some(map);
            Ok(fit)
        }
        FitMethod::Hmc => {
            let init = map.as_ref().map(|m| m.x.as_slice()).unwrap_or(&zero);
            let set = run_chains(&model, init, &config.hmc)?;
            let names = quantity_names(&user_ids);
            let diagnostics = summarize(&set, &names, quantity);
            let means: Vec<f64> = diagnostics.params.iter().map(|p| p.mean).collect();
            let params = means[GROUP_DIM..].chunks_exact(N_PARAMS).map(raw_to_params).collect();
            let mut fit = BehavioralFit::new(FitMethod::Hmc, user_ids, params, raw_to_params(&means[..N_PARAMS]));
            fit.diagnostics = Some(diagnostics);
            fit.map = map;
            Ok(fit)
        }
    }
}
