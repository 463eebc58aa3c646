//! Config-driven experiments. A run splits the records, trains or fits each
//! requested model on both validation/test role assignments, pools the fold
//! counts and writes everything under `<out_dir>/<timestamp>-<confighash>/`:
//!
//! ```text
//! config.toml  report.csv  report.md
//! checkpoints/<label>[-fold<k>].ckpt
//! behavioral/<label>-params.csv  behavioral/<label>-diagnostics.csv
//! ```
//!
//! Report contents do not depend on the timestamp, so two runs of the same
//! config produce byte-identical reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use choicelab_core::baselines::{mlp_baseline, rf_predict, BaselineError, BaselineInputs, FeatureSource, ForestConfig};
use choicelab_core::data::{make_split, DataError, Split, SplitSpec, DEMOGRAPHIC_DIM};
use choicelab_core::harness::{
    evaluate, permute_labels, simulate_agents, AgentSpec, HarnessError, Metrics, MetricsReport, ModelKind,
};
use choicelab_core::nnkit::{accuracy_and_loss, Classifier, Matrix, NnError, TrainConfig};
use choicelab_core::repr::{
    encode_records, train_beh2vec, train_demo_model, train_text_model, user_centroids, user_demographics,
    Architecture, FusionModel, ReprError, TrainInputs, WordVectorTable,
};
use choicelab_core::sampler::{FitConfig, FitError, FitMethod, HmcConfig, MapConfig};
use choicelab_core::{ChoiceRecord, Dataset, Participant, UserId};

use crate::checkpoint::{self, BaselineContext, Checkpoint};
use crate::parallel::{fit_behavioral_par, rf_train_par};
use crate::report::{render_csv, render_diagnostics_csv, render_markdown, render_params_csv};
use crate::schema::Schema;
use crate::{ingest, vectors, IoError};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Repr(#[from] ReprError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl ExperimentError {
    /// Bad configuration or input data, as opposed to a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            ExperimentError::Config(_) | ExperimentError::Data(_) => true,
            ExperimentError::Io(e) => !matches!(e, IoError::Io { .. }),
            ExperimentError::Nn(NnError::InvalidConfig(_)) => true,
            ExperimentError::Baseline(BaselineError::InvalidConfig(_)) => true,
            ExperimentError::Harness(HarnessError::InvalidSpec(_)) => true,
            _ => false,
        }
    }
}

type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Model kinds by name (`rf`, `mlp`, `beh2vec_id`, ...).
    pub models: Vec<String>,
    /// Input variants for `rf` and `mlp` (`G`, `G+ID`, `G+demo`, `G+text`);
    /// empty means all four.
    #[serde(default)]
    pub variants: Vec<String>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub forest: ForestSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    /// Shuffle all choice labels before splitting (null-model runs).
    #[serde(default)]
    pub permute_labels: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `choices.csv` and optionally `participants.csv`;
    /// falls back to `CHOICELAB_DATA`.
    pub dir: Option<PathBuf>,
    pub choices: Option<PathBuf>,
    pub participants: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    /// Use simulated agents instead of files.
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub n_users: usize,
    pub trials_per_user: usize,
    pub seed: u64,
    /// Also generate demographics, text tokens and a word-vector table.
    pub side_info: bool,
    pub word_dim: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let a = AgentSpec::default();
        SimulateSection { n_users: a.n_users, trials_per_user: a.trials_per_user, seed: 0, side_info: false, word_dim: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_fraction: SplitSpec::default().train_fraction }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// `paper` for the published layer sizes, `small` for smoke runs.
    pub arch: String,
    /// Hidden and output sizes of the plain MLP baseline.
    pub mlp_layers: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            arch: "paper".into(),
            mlp_layers: Architecture::default().trunk_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSection {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestSection {
    fn default() -> Self {
        let f = ForestConfig::default();
        ForestSection {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_leaf: f.min_leaf,
            features_per_split: f.features_per_split,
            bootstrap: f.bootstrap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub leapfrog_steps: usize,
    /// Literal leapfrog step size; unset adapts the step towards
    /// `target_accept` during warmup.
    pub step_size: Option<f64>,
    /// Relative per-transition step jitter; 0 disables it.
    pub step_jitter: f64,
    pub init_from_map: bool,
    pub map_max_iterations: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let h = HmcConfig::default();
        SamplerSection {
            chains: h.chains,
            iterations: h.iterations,
            warmup: h.warmup,
            target_accept: h.target_accept,
            leapfrog_steps: h.leapfrog_steps,
            step_size: None,
            step_jitter: h.step_jitter,
            init_from_map: true,
            map_max_iterations: MapConfig::default().max_iterations,
        }
    }
}

impl ExperimentConfig {
    pub fn new(seed: u64, models: &[ModelKind]) -> Self {
        ExperimentConfig {
            seed,
            models: models.iter().map(|m| m.name().to_string()).collect(),
            variants: Vec::new(),
            data: DataSection::default(),
            split: SplitSection::default(),
            train: TrainSection::default(),
            forest: ForestSection::default(),
            sampler: SamplerSection::default(),
            permute_labels: false,
            out_dir: default_out_dir(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        self.models
            .iter()
            .map(|m| ModelKind::from_name(m).ok_or_else(|| ExperimentError::Config(format!("unknown model {m:?}"))))
            .collect()
    }

    pub fn baseline_variants(&self) -> Result<Vec<BaselineInputs>> {
        if self.variants.is_empty() {
            return Ok(BaselineInputs::ALL.to_vec());
        }
        self.variants
            .iter()
            .map(|v| BaselineInputs::from_name(v).ok_or_else(|| ExperimentError::Config(format!("unknown variant {v:?}"))))
            .collect()
    }

    pub fn architecture(&self) -> Result<Architecture> {
        match self.train.arch.as_str() {
            "paper" => Ok(Architecture::default()),
            "small" => Ok(Architecture::small(self.word_dim())),
            other => Err(ExperimentError::Config(format!("unknown architecture {other:?}"))),
        }
    }

    fn word_dim(&self) -> usize {
        self.data.simulate.as_ref().map_or(300, |s| s.word_dim)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            max_epochs: self.train.max_epochs,
            patience: self.train.patience,
            seed: self.seed,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.forest.n_trees,
            max_depth: self.forest.max_depth,
            min_leaf: self.forest.min_leaf,
            features_per_split: self.forest.features_per_split,
            bootstrap: self.forest.bootstrap,
            seed: self.seed,
        }
    }

    pub fn fit_config(&self, method: FitMethod) -> FitConfig {
        let s = &self.sampler;
        FitConfig {
            method,
            hmc: HmcConfig {
                chains: s.chains,
                iterations: s.iterations,
                warmup: s.warmup,
                target_accept: s.target_accept,
                leapfrog_steps: s.leapfrog_steps,
                step_size: s.step_size,
                step_jitter: s.step_jitter,
                seed: self.seed,
                ..HmcConfig::default()
            },
            map: MapConfig { max_iterations: s.map_max_iterations, ..MapConfig::default() },
            init_from_map: s.init_from_map,
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.split.train_fraction, seed: self.seed, ..SplitSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(ExperimentError::Config("at least one model is required".into()));
        }
        self.model_kinds()?;
        self.baseline_variants()?;
        self.architecture()?;
        self.train_config().validate()?;
        self.forest_config().validate()?;
        self.fit_config(FitMethod::Hmc).hmc.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(ExperimentError::Config("split.train_fraction must lie in (0, 1)".into()));
        }
        if self.data.simulate.is_some() && (self.data.dir.is_some() || self.data.choices.is_some()) {
            return Err(ExperimentError::Config("data.simulate excludes data.dir and data.choices".into()));
        }
        Ok(())
    }
}

/// Dataset plus the optional word-vector table.
pub struct LoadedData {
    pub dataset: Dataset,
    pub vectors: Option<WordVectorTable>,
}

/// Demographics and text tokens for every user of a simulated dataset, plus
/// a random word-vector table covering the tokens. None of it carries signal
/// about the choices.
pub fn synthetic_side_info(dataset: &Dataset, word_dim: usize, seed: u64) -> Result<LoadedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_51de);
    let words: Vec<String> = (0..64).map(|i| format!("word{i}")).collect();
    let mut table = WordVectorTable::new(word_dim);
    for w in &words {
        let v: Vec<f64> = (0..word_dim).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
        table.insert(w, v)?;
    }
    let mut people = BTreeMap::new();
    for id in dataset.user_ids() {
        let mut demographics = [0.0; DEMOGRAPHIC_DIM];
        demographics.iter_mut().for_each(|d| *d = rng.random_range(0..5) as f64);
        let n = rng.random_range(2..8);
        let text_tokens = (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect();
        people.insert(id.clone(), Participant { user_id: id, demographics, text_tokens });
    }
    Ok(LoadedData { dataset: Dataset::new(people, dataset.records().to_vec())?, vectors: Some(table) })
}

pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    let d = &config.data;
    if let Some(sim) = &d.simulate {
        let spec = AgentSpec {
            n_users: sim.n_users,
            trials_per_user: sim.trials_per_user,
            seed: sim.seed,
            ..AgentSpec::default()
        };
        let (dataset, _) = simulate_agents(&spec)?;
        return if sim.side_info {
            synthetic_side_info(&dataset, sim.word_dim, sim.seed)
        } else {
            Ok(LoadedData { dataset, vectors: None })
        };
    }
    let env_dir = std::env::var_os("CHOICELAB_DATA").map(PathBuf::from);
    let dir = d.dir.as_deref().or(env_dir.as_deref());
    let schema = match &d.choices {
        Some(c) => Schema::resolve_in(d.schema.as_deref(), c.parent())?,
        None => Schema::resolve_in(d.schema.as_deref(), dir)?,
    };
    let dataset = match (&d.choices, dir) {
        (Some(c), _) => ingest::load_dataset(c, d.participants.as_deref(), &schema)?,
        (None, Some(dir)) => ingest::load_data_dir(dir, &schema)?,
        (None, None) => {
            return Err(ExperimentError::Config(
                "no data: set data.dir, data.choices, data.simulate or CHOICELAB_DATA".into(),
            ))
        }
    };
    let vectors = d.vectors.as_deref().map(vectors::load_word_vectors).transpose()?;
    Ok(LoadedData { dataset, vectors })
}

/// Everything shared by the models of one run.
pub struct Prepared {
    pub split: Split,
    pub user_ids: Vec<UserId>,
    pub user_index: BTreeMap<UserId, usize>,
    pub demographics: Option<Matrix>,
    pub centroids: Option<Matrix>,
}

pub fn prepare(data: &LoadedData, config: &ExperimentConfig) -> Result<Prepared> {
    let dataset = if config.permute_labels {
        Dataset::new(data.dataset.participants().clone(), permute_labels(data.dataset.records(), config.seed))?
    } else {
        data.dataset.clone()
    };
    let split = make_split(&dataset, &config.split_spec())?;
    let user_ids = dataset.user_ids();
    let user_index = dataset.user_index();
    let (demographics, centroids) = if dataset.has_participants() {
        let demo = user_demographics(&dataset, &user_index)?;
        let cent = match &data.vectors {
            Some(table) => {
                let (m, stats) = user_centroids(table, &dataset, &user_index)?;
                log::info!(
                    "text: {} users, {} with no known token, token OOV rate {:.3}",
                    stats.users,
                    stats.all_oov_users,
                    stats.token_oov_rate()
                );
                Some(m)
            }
            None => None,
        };
        (Some(demo), cent)
    } else {
        (None, None)
    };
    Ok(Prepared { split, user_ids, user_index, demographics, centroids })
}

/// Result of one model (or one baseline variant).
pub struct ModelRun {
    pub report: MetricsReport,
    pub checkpoints: Vec<(String, Checkpoint)>,
    /// Relative path and contents of additional text artifacts.
    pub files: Vec<(String, String)>,
}

impl ModelRun {
    fn skipped(kind: ModelKind, variant: &str, reason: &str) -> Self {
        log::warn!("{kind:?} {variant}: skipped ({reason})");
        ModelRun { report: MetricsReport::skipped(kind, variant, reason), checkpoints: Vec::new(), files: Vec::new() }
    }
}

fn folds(split: &Split) -> [Split; 2] {
    [split.clone(), split.swapped()]
}

fn fusion_probs(model: &FusionModel, records: &[ChoiceRecord], index: &BTreeMap<UserId, usize>) -> Result<Vec<f64>> {
    Ok(encode_records(records, index)?.iter().map(|(x, _)| model.predict(x)).collect())
}

fn fusion_run(kind: ModelKind, prep: &Prepared, config: &ExperimentConfig) -> Result<ModelRun> {
    let user_rows = match kind {
        ModelKind::Beh2vecDemo => match &prep.demographics {
            Some(m) => Some(m),
            None => return Ok(ModelRun::skipped(kind, "", "no demographic columns in the data")),
        },
        ModelKind::Beh2vecText => match &prep.centroids {
            Some(m) => Some(m),
            None => return Ok(ModelRun::skipped(kind, "", "no text columns or word vectors")),
        },
        _ => None,
    };
    let mut arch = config.architecture()?;
    if let Some(c) = &prep.centroids {
        // The text encoder reads whatever word-vector width was loaded.
        arch.text_encoder[0] = c.cols();
    }
    let train = config.train_config();
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let mut train_accuracy = None;
    for (k, split) in folds(&prep.split).iter().enumerate() {
        let inputs = TrainInputs { split, user_index: &prep.user_index, arch: &arch, config: &train };
        let (model, history) = match kind {
            ModelKind::Beh2vecId => train_beh2vec(inputs)?,
            ModelKind::Beh2vecDemo => train_demo_model(inputs, user_rows.unwrap())?,
            _ => train_text_model(inputs, user_rows.unwrap())?,
        };
        log::info!("{} fold {}: best epoch {} of {}", kind.name(), k + 1, history.best_epoch, history.epochs.len());
        metrics.push(evaluate(&fusion_probs(&model, &split.test, &prep.user_index)?, &split.test)?);
        if k == 0 {
            let samples = encode_records(&split.train, &prep.user_index)?;
            train_accuracy = Some(accuracy_and_loss(&model, &samples).0);
        }
        checkpoints.push((
            format!("{}-fold{}", kind.name(), k + 1),
            Checkpoint::Fusion { user_ids: prep.user_ids.clone(), model },
        ));
    }
    Ok(ModelRun { report: MetricsReport::done(kind, "", metrics, train_accuracy), checkpoints, files: Vec::new() })
}

fn baseline_run(kind: ModelKind, inputs: BaselineInputs, prep: &Prepared, config: &ExperimentConfig) -> Result<ModelRun> {
    let variant = inputs.name();
    let mut source = FeatureSource::new(inputs, &prep.user_index);
    source.demographics = prep.demographics.as_ref();
    source.centroids = prep.centroids.as_ref();
    if let Err(BaselineError::MissingInput(what)) = source.dim() {
        return Ok(ModelRun::skipped(kind, variant, &format!("no {what} inputs in the data")));
    }
    let context = BaselineContext {
        inputs,
        user_ids: prep.user_ids.clone(),
        demographics: source.demographics.cloned(),
        centroids: source.centroids.cloned(),
    };
    let label = format!("{}-{}", kind.name(), variant.replace('+', "_"));
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let train_accuracy;
    if kind == ModelKind::Rf {
        // The training part is the same in both role assignments.
        let train = source.samples(&prep.split.train)?;
        let forest = rf_train_par(&train, &config.forest_config())?;
        let predict = |records: &[ChoiceRecord]| -> Result<Vec<f64>> {
            source.samples(records)?.iter().map(|(x, _)| Ok(rf_predict(&forest, x)?)).collect()
        };
        let hits = predict(&prep.split.train)?.iter().zip(&train).filter(|(p, (_, y))| (**p > 0.5) == *y).count();
        train_accuracy = Some(hits as f64 / train.len() as f64);
        for split in folds(&prep.split) {
            metrics.push(evaluate(&predict(&split.test)?, &split.test)?);
        }
        checkpoints.push((label, Checkpoint::Forest { context, forest }));
    } else {
        let layers = &config.train.mlp_layers;
        let mut acc = None;
        for (k, split) in folds(&prep.split).iter().enumerate() {
            let (model, _) = mlp_baseline(split, &source, layers, &config.train_config())?;
            let probs = source.samples(&split.test)?.iter().map(|(x, _)| model.predict(x)).collect::<Vec<_>>();
            metrics.push(evaluate(&probs, &split.test)?);
            if k == 0 {
                acc = Some(accuracy_and_loss(&model, &source.samples(&split.train)?).0);
            }
            checkpoints.push((format!("{label}-fold{}", k + 1), Checkpoint::Mlp { context: context.clone(), model }));
        }
        train_accuracy = acc;
    }
    Ok(ModelRun { report: MetricsReport::done(kind, variant, metrics, train_accuracy), checkpoints, files: Vec::new() })
}

fn behavioral_run(kind: ModelKind, prep: &Prepared, config: &ExperimentConfig) -> Result<ModelRun> {
    let method = if kind == ModelKind::BehavioralHmc { FitMethod::Hmc } else { FitMethod::Map };
    let fit = fit_behavioral_par(&prep.split.train, &config.fit_config(method))?;
    let mut files = vec![(format!("behavioral/{}-params.csv", kind.name()), render_params_csv(&fit))];
    if let Some(d) = &fit.diagnostics {
        log::info!("{}: max R-hat {:.4}, min ESS {:.1}, {} divergences", kind.name(), d.max_r_hat(), d.min_ess(), d.divergences);
        files.push((format!("behavioral/{}-diagnostics.csv", kind.name()), render_diagnostics_csv(d)));
    }
    if let Some(m) = &fit.map {
        if !m.converged {
            log::warn!("{}: optimizer stopped at gradient norm {:.3e}", kind.name(), m.grad_norm);
        }
    }
    let metrics = folds(&prep.split)
        .iter()
        .map(|s| evaluate(&fit.predict_all(&s.test), &s.test))
        .collect::<Result<Vec<Metrics>, _>>()?;
    let train = evaluate(&fit.predict_all(&prep.split.train), &prep.split.train)?;
    Ok(ModelRun {
        report: MetricsReport::done(kind, "", metrics, Some(train.accuracy_all())),
        checkpoints: vec![(kind.name().to_string(), Checkpoint::Behavioral(fit))],
        files,
    })
}

/// Trains/fits every model in the config, without touching the disk.
pub fn run_models(prep: &Prepared, config: &ExperimentConfig) -> Result<Vec<ModelRun>> {
    let mut runs = Vec::new();
    for kind in config.model_kinds()? {
        log::info!("running {}", kind.name());
        match kind {
            ModelKind::Rf | ModelKind::Mlp => {
                for v in config.baseline_variants()? {
                    runs.push(baseline_run(kind, v, prep, config)?);
                }
            }
            ModelKind::Beh2vecId | ModelKind::Beh2vecDemo | ModelKind::Beh2vecText => {
                runs.push(fusion_run(kind, prep, config)?)
            }
            ModelKind::BehavioralHmc | ModelKind::BehavioralMap => runs.push(behavioral_run(kind, prep, config)?),
        }
    }
    let hash = config.hash();
    for r in &mut runs {
        r.report.seed = config.seed;
        r.report.config_hash = hash.clone();
    }
    Ok(runs)
}

/// Run directory name: UTC timestamp and config hash.
pub fn run_dir_name(config: &ExperimentConfig) -> String {
    format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), config.hash())
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub reports: Vec<MetricsReport>,
}

/// Runs the experiment into `<out_dir>/<timestamp>-<hash>/`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    let dir = config.out_dir.join(run_dir_name(config));
    run_experiment_in(config, &dir)
}

/// Runs the experiment into `dir`, which must not exist yet. On failure the
/// directory is removed again.
pub fn run_experiment_in(config: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    if dir.exists() {
        return Err(ExperimentError::Config(format!("run directory {} already exists", dir.display())));
    }
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    match execute(config, dir) {
        Ok(reports) => Ok(RunOutput { dir: dir.to_path_buf(), reports }),
        Err(e) => {
            if let Err(rm) = std::fs::remove_dir_all(dir) {
                log::error!("could not remove partial run {}: {rm}", dir.display());
            }
            Err(e)
        }
    }
}

fn write(dir: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| IoError::io(&path, e))?;
    Ok(())
}

fn execute(config: &ExperimentConfig, dir: &Path) -> Result<Vec<MetricsReport>> {
    write(dir, "config.toml", &config.to_toml())?;
    let data = load_data(config)?;
    let prep = prepare(&data, config)?;
    let runs = run_models(&prep, config)?;
    std::fs::create_dir_all(dir.join("checkpoints")).map_err(|e| IoError::io(dir, e))?;
    for run in &runs {
        for (name, ckpt) in &run.checkpoints {
            checkpoint::save(&dir.join("checkpoints").join(format!("{name}.ckpt")), ckpt)?;
        }
        for (rel, contents) in &run.files {
            write(dir, rel, contents)?;
        }
    }
    let reports: Vec<MetricsReport> = runs.into_iter().map(|r| r.report).collect();
    write(dir, "report.csv", &render_csv(&reports))?;
    write(dir, "report.md", &render_markdown(&reports))?;
    Ok(reports)
}
