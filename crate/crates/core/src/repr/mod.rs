//! Per-user representation models fused with the six scenario features.
//!
//! All three models share one shape: a user vector (trainable embedding row,
//! frozen text centroid, or coded demographics) passes through an encoder
//! stack, is concatenated with the standardized scenario features and fed to
//! a sigmoid-output trunk.

mod words;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{encode_features, ChoiceRecord, DataError, Dataset, Split, UserId, DEMOGRAPHIC_DIM, FEATURE_DIM};
use crate::nnkit::{
    cross_entropy, train_classifier, Classifier, EmbeddingGrads, EmbeddingTable, Matrix, Mlp, MlpGrads, MlpSpec,
    NnError, Standardizer, TrainConfig, TrainHistory,
};

pub use words::{resolve_tokens, user_text_vector, TokenResolution, WordVectorTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReprError {
    #[error("unknown user index {0}")]
    UnknownUser(usize),
    #[error("user {0} is not in the user index")]
    UnknownUserId(UserId),
    #[error("no observations for the new user")]
    EmptyObservations,
    #[error("no token of the user is in the vocabulary")]
    NoValidTokens,
    #[error("word vector has dimension {got}, table expects {expected}")]
    VectorDimension { expected: usize, got: usize },
    #[error("only ID-embedding models can take new users")]
    NotAnEmbeddingModel,
    #[error("participant {0} has no demographics/text entry")]
    MissingParticipant(UserId),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RepKind {
    /// Trainable per-user ID embedding.
    UserId,
    Demographics,
    Text,
}

impl RepKind {
    pub fn name(self) -> &'static str {
        match self {
            RepKind::UserId => "user_id",
            RepKind::Demographics => "demographics",
            RepKind::Text => "text",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "user_id" => Some(RepKind::UserId),
            "demographics" => Some(RepKind::Demographics),
            "text" => Some(RepKind::Text),
            _ => None,
        }
    }
}

/// Layer sizes for the three representation models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub embedding_dim: usize,
    /// Dense stack after the ID embedding, input = `embedding_dim`.
    pub id_encoder: Vec<usize>,
    /// Dense stack over the text centroid, input = word-vector dim.
    pub text_encoder: Vec<usize>,
    /// Dense stack over the coded demographics.
    pub demo_encoder: Vec<usize>,
    /// Trunk sizes after the fused input layer.
    pub trunk_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embedding_dim: 200,
            id_encoder: vec![200, 200],
            text_encoder: vec![300, 128, 64, 64],
            demo_encoder: vec![DEMOGRAPHIC_DIM, 64, 64],
            trunk_hidden: vec![128, 64, 32, 4, 1],
        }
    }
}

impl Architecture {
    /// Shrunk layer sizes with the same topology, for tests and smoke runs.
    pub fn small(word_dim: usize) -> Self {
        Architecture {
            embedding_dim: 8,
            id_encoder: vec![8, 8],
            text_encoder: vec![word_dim, 8, 6],
            demo_encoder: vec![DEMOGRAPHIC_DIM, 8, 6],
            trunk_hidden: vec![8, 4, 1],
        }
    }

    fn encoder_dims(&self, kind: RepKind) -> &[usize] {
        match kind {
            RepKind::UserId => &self.id_encoder,
            RepKind::Demographics => &self.demo_encoder,
            RepKind::Text => &self.text_encoder,
        }
    }

    fn trunk_dims(&self, encoder_out: usize) -> Vec<usize> {
        let mut dims = vec![encoder_out + FEATURE_DIM];
        dims.extend_from_slice(&self.trunk_hidden);
        dims
    }
}

/// Where the per-user input vector comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum UserSource {
    /// One trainable row per user.
    Embedding(EmbeddingTable),
    /// One frozen row per user.
    Fixed(Matrix),
}

impl UserSource {
    pub fn row(&self, user: usize) -> Option<&[f64]> {
        match self {
            UserSource::Embedding(t) => t.lookup(user),
            UserSource::Fixed(m) => (user < m.rows()).then(|| m.row(user)),
        }
    }

    pub fn n_users(&self) -> usize {
        match self {
            UserSource::Embedding(t) => t.len(),
            UserSource::Fixed(m) => m.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            UserSource::Embedding(t) => t.dim(),
            UserSource::Fixed(m) => m.cols(),
        }
    }
}

/// One training/inference example: a dense user index plus raw features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionInput {
    pub user: usize,
    pub features: [f64; FEATURE_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    kind: RepKind,
    source: UserSource,
    encoder: Mlp,
    trunk: Mlp,
    scaler: Standardizer,
}

pub type Beh2vecModel = FusionModel;
pub type TextRepModel = FusionModel;
pub type DemoRepModel = FusionModel;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub embedding: EmbeddingGrads,
    pub encoder: MlpGrads,
    pub trunk: MlpGrads,
}

impl FusionModel {
    /// ID-embedding model with `n_users` rows.
    pub fn beh2vec<R: Rng + ?Sized>(
        n_users: usize,
        arch: &Architecture,
        scaler: Standardizer,
        rng: &mut R,
    ) -> Result<Self, ReprError> {
        let table = EmbeddingTable::new(n_users, arch.embedding_dim, rng)?;
        Self::assemble(RepKind::UserId, UserSource::Embedding(table), arch, scaler, rng)
    }

    /// Text or demographic model over frozen per-user vectors.
    pub fn with_fixed<R: Rng + ?Sized>(
        kind: RepKind,
        user_vectors: Matrix,
        arch: &Architecture,
        scaler: Standardizer,
        rng: &mut R,
    ) -> Result<Self, ReprError> {
        Self::assemble(kind, UserSource::Fixed(user_vectors), arch, scaler, rng)
    }

    fn assemble<R: Rng + ?Sized>(
        kind: RepKind,
        source: UserSource,
        arch: &Architecture,
        scaler: Standardizer,
        rng: &mut R,
    ) -> Result<Self, ReprError> {
        let enc_dims = arch.encoder_dims(kind);
        if enc_dims.first() != Some(&source.dim()) {
            return Err(NnError::DimensionMismatch { expected: source.dim(), got: enc_dims.first().copied().unwrap_or(0) }
                .into());
        }
        let encoder = Mlp::new(&MlpSpec::encoder(enc_dims), rng)?;
        let trunk = Mlp::new(&MlpSpec::classifier(&arch.trunk_dims(encoder.output_dim())), rng)?;
        Self::from_parts(kind, source, encoder, trunk, scaler)
    }

    pub fn from_parts(
        kind: RepKind,
        source: UserSource,
        encoder: Mlp,
        trunk: Mlp,
        scaler: Standardizer,
    ) -> Result<Self, ReprError> {
        crate::nnkit::check_dim(source.dim(), encoder.input_dim())?;
        crate::nnkit::check_dim(encoder.output_dim() + FEATURE_DIM, trunk.input_dim())?;
        crate::nnkit::check_dim(FEATURE_DIM, scaler.dim())?;
        crate::nnkit::mlp_check_classifier(&trunk)?;
        Ok(FusionModel { kind, source, encoder, trunk, scaler })
    }

    /// Every parameter set to zero (predicts exactly 0.5 everywhere).
    pub fn zeroed(mut self) -> Self {
        for s in self.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }

    pub fn kind(&self) -> RepKind {
        self.kind
    }

    pub fn source(&self) -> &UserSource {
        &self.source
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    pub fn n_users(&self) -> usize {
        self.source.n_users()
    }

    /// Encoded user representation (encoder output) for one user.
    pub fn user_representation(&self, user: usize) -> Result<Vec<f64>, ReprError> {
        let row = self.source.row(user).ok_or(ReprError::UnknownUser(user))?;
        Ok(self.encoder.predict(row)?)
    }

    /// Probability that option 1 is chosen.
    pub fn forward(&self, user: usize, features: &[f64; FEATURE_DIM]) -> Result<f64, ReprError> {
        let rep = self.user_representation(user)?;
        Ok(self.trunk.predict(&self.fuse(&rep, features))?[0])
    }

    fn fuse(&self, rep: &[f64], features: &[f64; FEATURE_DIM]) -> Vec<f64> {
        let mut x = Vec::with_capacity(rep.len() + FEATURE_DIM);
        x.extend_from_slice(rep);
        self.scaler.transform_into(features, &mut x);
        x
    }

    fn accumulate_checked(&self, x: &FusionInput, label: bool, grads: &mut FusionGrads) -> Result<f64, ReprError> {
        let row = self.source.row(x.user).ok_or(ReprError::UnknownUser(x.user))?;
        let enc_cache = self.encoder.forward(row)?;
        let fused = self.fuse(enc_cache.output(), &x.features);
        let trunk_cache = self.trunk.forward(&fused)?;
        let p = trunk_cache.output()[0];
        let y = if label { 1.0 } else { 0.0 };
        let d_fused = self.trunk.backward_logit(&trunk_cache, p - y, &mut grads.trunk)?;
        let rep_dim = self.encoder.output_dim();
        let d_row = self.encoder.backward_from(&enc_cache, &d_fused[..rep_dim], &mut grads.encoder)?;
        if let UserSource::Embedding(t) = &self.source {
            t.accumulate(&mut grads.embedding, x.user, &d_row)?;
        }
        Ok(cross_entropy(p, label))
    }

    /// Appends a row for an unseen user and fits only that row by SGD on
    /// `observed`; every other parameter is left bit-identical.
    pub fn add_new_user(
        &self,
        observed: &[([f64; FEATURE_DIM], bool)],
        config: &NewUserConfig,
    ) -> Result<(FusionModel, usize), ReprError> {
        if observed.is_empty() {
            return Err(ReprError::EmptyObservations);
        }
        let UserSource::Embedding(table) = &self.source else {
            return Err(ReprError::NotAnEmbeddingModel);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = EmbeddingTable::init_bound(table.dim());
        let init: Vec<f64> = (0..table.dim()).map(|_| rng.random_range(-a..a)).collect();
        let mut model = self.clone();
        let user = match &mut model.source {
            UserSource::Embedding(t) => t.push_row(&init)?,
            UserSource::Fixed(_) => unreachable!(),
        };
        let mut order: Vec<usize> = (0..observed.len()).collect();
        let mut grads = model.zero_grads();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let (features, label) = observed[i];
                model.clear_grads(&mut grads);
                model.accumulate_checked(&FusionInput { user, features }, label, &mut grads)?;
                let g = grads.embedding.rows.get(&user).cloned().unwrap_or_default();
                if let UserSource::Embedding(t) = &mut model.source {
                    crate::nnkit::sgd_step(t.row_mut(user), &g, config.learning_rate)?;
                }
            }
        }
        Ok((model, user))
    }
}

/// SGD settings for fitting a new user's embedding row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewUserConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for NewUserConfig {
    fn default() -> Self {
        NewUserConfig { learning_rate: 0.05, epochs: 50, seed: 0 }
    }
}

impl Classifier for FusionModel {
    type Input = FusionInput;
    type Grads = FusionGrads;

    fn predict(&self, x: &FusionInput) -> f64 {
        self.forward(x.user, &x.features).expect("sample references a known user")
    }

    fn zero_grads(&self) -> FusionGrads {
        FusionGrads {
            embedding: EmbeddingGrads::default(),
            encoder: self.encoder.zero_grads(),
            trunk: self.trunk.zero_grads(),
        }
    }

    fn clear_grads(&self, grads: &mut FusionGrads) {
        grads.embedding.clear();
        grads.encoder.clear();
        grads.trunk.clear();
    }

    fn accumulate(&self, x: &FusionInput, label: bool, grads: &mut FusionGrads) -> f64 {
        self.accumulate_checked(x, label, grads).expect("sample references a known user")
    }

    fn apply(&mut self, grads: &FusionGrads, lr: f64) {
        if let UserSource::Embedding(t) = &mut self.source {
            t.sgd_step(&grads.embedding, lr).expect("embedding gradient shape");
        }
        self.encoder.sgd_step(&grads.encoder, lr).expect("encoder gradient shape");
        self.trunk.sgd_step(&grads.trunk, lr).expect("trunk gradient shape");
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        if let UserSource::Embedding(t) = &mut self.source {
            out.push(t.as_mut_slice());
        }
        out.extend(self.encoder.param_slices_mut());
        out.extend(self.trunk.param_slices_mut());
        out
    }

    fn flatten_grads(&self, grads: &FusionGrads) -> Vec<f64> {
        let mut out = Vec::new();
        if let UserSource::Embedding(t) = &self.source {
            grads.embedding.flatten_into(t.len(), t.dim(), &mut out);
        }
        grads.encoder.flatten_into(&mut out);
        grads.trunk.flatten_into(&mut out);
        out
    }

    fn predict_signed(&self, x: &FusionInput, signs: &mut Vec<bool>) -> f64 {
        let row = self.source.row(x.user).expect("sample references a known user");
        let enc = self.encoder.forward(row).expect("encoder input matches the user source");
        self.encoder.relu_signs(&enc, signs);
        let trunk = self.trunk.forward(&self.fuse(enc.output(), &x.features)).expect("fused width matches the trunk");
        self.trunk.relu_signs(&trunk, signs);
        trunk.output()[0]
    }
}

/// Labelled examples for a set of records (label = option 1 chosen).
pub fn encode_records(
    records: &[ChoiceRecord],
    user_index: &BTreeMap<UserId, usize>,
) -> Result<Vec<(FusionInput, bool)>, ReprError> {
    records
        .iter()
        .map(|r| {
            let user = *user_index.get(&r.user_id).ok_or_else(|| ReprError::UnknownUserId(r.user_id.clone()))?;
            Ok((FusionInput { user, features: encode_features(&r.scenario) }, r.choice.label()))
        })
        .collect()
}

/// Z-score for the scenario features, fitted on training records.
pub fn feature_scaler(train: &[ChoiceRecord]) -> Standardizer {
    let rows: Vec<[f64; FEATURE_DIM]> = train.iter().map(|r| encode_features(&r.scenario)).collect();
    Standardizer::fit(FEATURE_DIM, rows.iter().map(|r| &r[..]))
}

/// Shared inputs for training any representation model on a split.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub split: &'a Split,
    pub user_index: &'a BTreeMap<UserId, usize>,
    pub arch: &'a Architecture,
    pub config: &'a TrainConfig,
}

fn train_fusion(
    inputs: TrainInputs<'_>,
    build: impl FnOnce(Standardizer, &mut ChaCha8Rng) -> Result<FusionModel, ReprError>,
) -> Result<(FusionModel, TrainHistory), ReprError> {
    let train = encode_records(&inputs.split.train, inputs.user_index)?;
    let val = encode_records(&inputs.split.val, inputs.user_index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.config.seed);
    let model = build(feature_scaler(&inputs.split.train), &mut rng)?;
    Ok(train_classifier(model, &train, &val, inputs.config)?)
}

/// Embedding table, ID encoder and trunk trained jointly.
pub fn train_beh2vec(inputs: TrainInputs<'_>) -> Result<(FusionModel, TrainHistory), ReprError> {
    let n_users = inputs.user_index.len();
    train_fusion(inputs, |scaler, rng| FusionModel::beh2vec(n_users, inputs.arch, scaler, rng))
}

/// Encoder and trunk trained end to end over frozen per-user text centroids.
pub fn train_text_model(inputs: TrainInputs<'_>, centroids: &Matrix) -> Result<(FusionModel, TrainHistory), ReprError> {
    train_fusion(inputs, |scaler, rng| {
        FusionModel::with_fixed(RepKind::Text, centroids.clone(), inputs.arch, scaler, rng)
    })
}

/// Encoder and trunk over standardized coded demographics.
pub fn train_demo_model(
    inputs: TrainInputs<'_>,
    demographics: &Matrix,
) -> Result<(FusionModel, TrainHistory), ReprError> {
    train_fusion(inputs, |scaler, rng| {
        FusionModel::with_fixed(RepKind::Demographics, demographics.clone(), inputs.arch, scaler, rng)
    })
}

/// Summary of how text centroids were built.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TextStats {
    pub users: usize,
    /// Users with no in-vocabulary token, given the corpus-mean vector.
    pub all_oov_users: usize,
    pub tokens: usize,
    pub oov_tokens: usize,
}

impl TextStats {
    pub fn token_oov_rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.oov_tokens as f64 / self.tokens as f64
        }
    }
}

/// One centroid row per indexed user. Users whose tokens are all
/// out-of-vocabulary get the mean of the other users' centroids (or the
/// table mean when nobody has a valid token).
pub fn user_centroids(
    table: &WordVectorTable,
    dataset: &Dataset,
    user_index: &BTreeMap<UserId, usize>,
) -> Result<(Matrix, TextStats), ReprError> {
    let dim = table.dim();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; user_index.len()];
    let mut stats = TextStats { users: user_index.len(), ..TextStats::default() };
    for (id, &i) in user_index {
        let p = dataset.participant(id).ok_or_else(|| ReprError::MissingParticipant(id.clone()))?;
        let res = resolve_tokens(table, &p.text_tokens);
        stats.tokens += res.used.len() + res.oov;
        stats.oov_tokens += res.oov;
        match user_text_vector(table, &p.text_tokens) {
            Ok(v) => rows[i] = Some(v),
            Err(ReprError::NoValidTokens) => stats.all_oov_users += 1,
            Err(e) => return Err(e),
        }
    }
    let valid: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let fallback = if valid.is_empty() {
        table.mean_vector()
    } else {
        let mut m = vec![0.0; dim];
        for v in &valid {
            for (a, x) in m.iter_mut().zip(v.iter()) {
                *a += x;
            }
        }
        let n = valid.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    };
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in &rows {
        data.extend_from_slice(r.as_deref().unwrap_or(&fallback));
    }
    Ok((Matrix::from_vec(rows.len(), dim, data)?, stats))
}

/// Standardized demographics, one row per indexed user.
pub fn user_demographics(dataset: &Dataset, user_index: &BTreeMap<UserId, usize>) -> Result<Matrix, ReprError> {
    let mut raw = vec![[0.0; DEMOGRAPHIC_DIM]; user_index.len()];
    for (id, &i) in user_index {
        let p = dataset.participant(id).ok_or_else(|| ReprError::MissingParticipant(id.clone()))?;
        raw[i] = p.demographics;
    }
    let scaler = Standardizer::fit(DEMOGRAPHIC_DIM, raw.iter().map(|r| &r[..]));
    let mut data = Vec::with_capacity(raw.len() * DEMOGRAPHIC_DIM);
    for r in &raw {
        scaler.transform_into(r, &mut data);
    }
    Ok(Matrix::from_vec(raw.len(), DEMOGRAPHIC_DIM, data)?)
}
