use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BaselineError, FeatureSource};
use crate::data::Split;
use crate::nnkit::{cross_entropy, train_classifier, Classifier, Mlp, MlpGrads, MlpSpec, Standardizer, TrainConfig, TrainHistory};

/// Sigmoid-output MLP over standardized raw feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    net: Mlp,
    scaler: Standardizer,
}

impl MlpClassifier {
    pub fn new(net: Mlp, scaler: Standardizer) -> Result<Self, BaselineError> {
        crate::nnkit::mlp_check_classifier(&net)?;
        if scaler.dim() != net.input_dim() {
            return Err(BaselineError::DimensionMismatch { expected: net.input_dim(), got: scaler.dim() });
        }
        Ok(MlpClassifier { net, scaler })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn scaler(&self) -> &Standardizer {
        &self.scaler
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn try_predict(&self, x: &[f64]) -> Result<f64, BaselineError> {
        if x.len() != self.input_dim() {
            return Err(BaselineError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(self.net.predict(&self.scaler.transform(x))?[0])
    }
}

impl Classifier for MlpClassifier {
    type Input = Vec<f64>;
    type Grads = MlpGrads;

    fn predict(&self, x: &Vec<f64>) -> f64 {
        self.try_predict(x).expect("feature dimension matches the network")
    }

    fn zero_grads(&self) -> MlpGrads {
        self.net.zero_grads()
    }

    fn clear_grads(&self, grads: &mut MlpGrads) {
        grads.clear();
    }

    fn accumulate(&self, x: &Vec<f64>, label: bool, grads: &mut MlpGrads) -> f64 {
        let cache = self.net.forward(&self.scaler.transform(x)).expect("feature dimension matches the network");
        let p = cache.output()[0];
        let y = if label { 1.0 } else { 0.0 };
        self.net.backward_logit(&cache, p - y, grads).expect("output is a single unit");
        cross_entropy(p, label)
    }

    fn apply(&mut self, grads: &MlpGrads, lr: f64) {
        self.net.sgd_step(grads, lr).expect("gradient shape matches the network");
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.param_slices_mut()
    }

    fn flatten_grads(&self, grads: &MlpGrads) -> Vec<f64> {
        let mut out = Vec::new();
        grads.flatten_into(&mut out);
        out
    }

    fn predict_signed(&self, x: &Vec<f64>, signs: &mut Vec<bool>) -> f64 {
        let cache = self.net.forward(&self.scaler.transform(x)).expect("feature dimension matches the network");
        self.net.relu_signs(&cache, signs);
        cache.output()[0]
    }
}

/// Trains a plain MLP with layer sizes `[input, hidden...]` on the split's
/// train part, selecting the epoch on its validation part.
pub fn mlp_baseline(
    split: &Split,
    source: &FeatureSource<'_>,
    hidden: &[usize],
    config: &TrainConfig,
) -> Result<(MlpClassifier, TrainHistory), BaselineError> {
    let train = source.samples(&split.train)?;
    if train.is_empty() {
        return Err(BaselineError::EmptySamples);
    }
    let val = source.samples(&split.val)?;
    let dim = source.dim()?;
    let scaler = Standardizer::fit(dim, train.iter().map(|(x, _)| x.as_slice()));
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    dims.push(dim);
    dims.extend_from_slice(hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let net = Mlp::new(&MlpSpec::classifier(&dims), &mut rng)?;
    let model = MlpClassifier::new(net, scaler)?;
    Ok(train_classifier(model, &train, &val, config)?)
}
