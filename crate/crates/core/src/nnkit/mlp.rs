use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{check_dim, Activation, Dense, DenseGrads, NnError};
use crate::math;

/// Layer widths plus activations. `[206, 128, 1]` is two dense layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// ReLU hidden layers with a single sigmoid output unit.
    pub fn classifier(layer_dims: &[usize]) -> Self {
        MlpSpec {
            layer_dims: layer_dims.to_vec(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Sigmoid,
        }
    }

    /// ReLU on every layer, used for representation encoders.
    pub fn encoder(layer_dims: &[usize]) -> Self {
        MlpSpec {
            layer_dims: layer_dims.to_vec(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_dims.len() < 2 {
            return Err(NnError::InvalidSpec("an MLP needs at least two layer dims"));
        }
        if self.layer_dims.contains(&0) {
            return Err(NnError::InvalidSpec("layer dims must be positive"));
        }
        Ok(())
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_dims.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<DenseGrads>,
}

impl MlpGrads {
    pub fn clear(&mut self) {
        self.layers.iter_mut().for_each(DenseGrads::clear);
    }

    /// Flattened in the same order as [`Mlp::param_slices_mut`].
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }
}

/// Parameter gradients plus the gradient w.r.t. the network input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: MlpGrads,
    pub input: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = spec
            .layer_dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::glorot(w[0], w[1], spec.activation_for(i), rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn zeros(spec: &MlpSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = spec
            .layer_dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::zeros(w[0], w[1], spec.activation_for(i)))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::InvalidSpec("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            check_dim(w[0].output_dim(), w[1].input_dim())?;
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn spec(&self) -> MlpSpec {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::output_dim));
        let n = self.layers.len();
        MlpSpec {
            layer_dims: dims,
            // single-layer nets have no hidden layer; report the output activation
            hidden_activation: self.layers[0].activation(),
            output_activation: self.layers[n - 1].activation(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights().as_slice().len() + l.bias().len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<MlpCache, NnError> {
        check_dim(self.input_dim(), input.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post.last().map(Vec::as_slice).unwrap_or(input);
            let mut z = vec![0.0; layer.output_dim()];
            let mut a = vec![0.0; layer.output_dim()];
            layer.forward_into(x, &mut z, &mut a);
            pre.push(z);
            post.push(a);
        }
        Ok(MlpCache { input: input.to_vec(), pre, post })
    }

    /// Appends `z > 0` for every ReLU unit of a forward pass.
    pub fn relu_signs(&self, cache: &MlpCache, out: &mut Vec<bool>) {
        for (layer, z) in self.layers.iter().zip(&cache.pre) {
            if layer.activation() == Activation::Relu {
                out.extend(z.iter().map(|&v| v > 0.0));
            }
        }
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(input)?.post.pop().unwrap_or_default())
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads { layers: self.layers.iter().map(Dense::zero_grads).collect() }
    }

    /// Accumulates parameter gradients given dL/d(output) and returns dL/d(input).
    pub fn backward_from(&self, cache: &MlpCache, d_out: &[f64], grads: &mut MlpGrads) -> Result<Vec<f64>, NnError> {
        check_dim(self.output_dim(), d_out.len())?;
        check_dim(self.layers.len(), cache.post.len())?;
        let mut d_a = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            let mut d_x = vec![0.0; layer.input_dim()];
            layer.backward_into(x, &cache.pre[i], &cache.post[i], &d_a, &mut grads.layers[i], &mut d_x);
            d_a = d_x;
        }
        Ok(d_a)
    }

    /// Backward pass for a single sigmoid output unit under cross-entropy,
    /// given dL/dz at the output (`p - y`). Returns dL/d(input).
    pub fn backward_logit(&self, cache: &MlpCache, d_logit: f64, grads: &mut MlpGrads) -> Result<Vec<f64>, NnError> {
        check_dim(1, self.output_dim())?;
        check_dim(self.layers.len(), cache.post.len())?;
        let n = self.layers.len();
        let x_of = |i: usize| if i == 0 { cache.input.as_slice() } else { cache.post[i - 1].as_slice() };
        let last = &self.layers[n - 1];
        let mut d_x = vec![0.0; last.input_dim()];
        last.backward_delta(x_of(n - 1), &[d_logit], &mut grads.layers[n - 1], &mut d_x);
        for i in (0..n - 1).rev() {
            let layer = &self.layers[i];
            let mut d_below = vec![0.0; layer.input_dim()];
            layer.backward_into(x_of(i), &cache.pre[i], &cache.post[i], &d_x, &mut grads.layers[i], &mut d_below);
            d_x = d_below;
        }
        Ok(d_x)
    }

    /// `p <- p - lr * g` over every layer.
    pub fn sgd_step(&mut self, grads: &MlpGrads, lr: f64) -> Result<(), NnError> {
        check_dim(self.layers.len(), grads.layers.len())?;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            super::sgd_step(layer.weights_mut().as_mut_slice(), &g.weights, lr)?;
            super::sgd_step(layer.bias_mut(), &g.bias, lr)?;
        }
        Ok(())
    }

    /// Parameter slices in a fixed order: per layer, weights then bias.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            let (w, b) = layer.params_mut();
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Cross-entropy with the probability clamped to `[eps, 1 - eps]`.
pub fn cross_entropy(probability: f64, label: bool) -> f64 {
    let p = math::clamp_prob(probability);
    if label {
        -math::ln(p)
    } else {
        -math::ln(1.0 - p)
    }
}

/// Forward pass of a single sigmoid-output classifier network.
pub fn mlp_forward(net: &Mlp, input: &[f64]) -> Result<(f64, MlpCache), NnError> {
    check_classifier(net)?;
    let cache = net.forward(input)?;
    Ok((cache.output()[0], cache))
}

/// Exact gradients of the cross-entropy w.r.t. every parameter and the input.
pub fn backward(net: &Mlp, cache: &MlpCache, label: bool) -> Result<Gradients, NnError> {
    check_classifier(net)?;
    let mut params = net.zero_grads();
    let p = cache.output()[0];
    let y = if label { 1.0 } else { 0.0 };
    let input = net.backward_logit(cache, p - y, &mut params)?;
    Ok(Gradients { params, input })
}

pub(crate) fn check_classifier(net: &Mlp) -> Result<(), NnError> {
    check_dim(1, net.output_dim())?;
    if net.layers[net.layers.len() - 1].activation() != Activation::Sigmoid {
        return Err(NnError::InvalidSpec("classifier output layer must be a sigmoid unit"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_predicts_half() {
        let net = Mlp::zeros(&MlpSpec::classifier(&[3, 4, 1])).unwrap();
        let (p, _) = mlp_forward(&net, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn saturated_bias_gives_probability_one() {
        let mut net = Mlp::zeros(&MlpSpec::classifier(&[2, 1])).unwrap();
        net.layers_mut()[0].bias_mut()[0] = 1e3;
        let (p, _) = mlp_forward(&net, &[0.3, 0.1]).unwrap();
        assert!(p > 1.0 - 1e-12);
        assert!(p <= 1.0);
    }

    #[test]
    fn hand_computed_two_by_two_forward() {
        // hidden: relu([[0.5, -1.0], [1.0, 1.0]] x + [0.1, -0.2]); out: sigmoid([2, -1] h + 0.3)
        let hidden = Dense::from_parts(
            Matrix::from_vec(2, 2, vec![0.5, -1.0, 1.0, 1.0]).unwrap(),
            vec![0.1, -0.2],
            Activation::Relu,
        )
        .unwrap();
        let out = Dense::from_parts(Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap(), vec![0.3], Activation::Sigmoid)
            .unwrap();
        let net = Mlp::from_layers(vec![hidden, out]).unwrap();
        // x = (2, 0.5): z1 = 1 - 0.5 + 0.1 = 0.6, z2 = 2.5 - 0.2 = 2.3
        // logit = 1.2 - 2.3 + 0.3 = -0.8
        let (p, _) = mlp_forward(&net, &[2.0, 0.5]).unwrap();
        let expected = 1.0 / (1.0 + crate::math::exp(0.8));
        assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy(0.5, true) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(1.0, true) < 1e-11);
        assert!((cross_entropy(0.9, false) - 2.302585092994045).abs() < 1e-12);
        assert!(cross_entropy(0.0, true).is_finite());
    }

    #[test]
    fn dimension_mismatch_reported() {
        let net = Mlp::zeros(&MlpSpec::classifier(&[3, 1])).unwrap();
        assert_eq!(mlp_forward(&net, &[1.0]).unwrap_err(), NnError::DimensionMismatch { expected: 3, got: 1 });
    }

    #[test]
    fn duplicated_sample_doubles_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&MlpSpec::classifier(&[4, 5, 3, 1]), &mut rng).unwrap();
        let x = [0.2, -0.7, 1.1, 0.4];
        let (_, cache) = mlp_forward(&net, &x).unwrap();
        let once = backward(&net, &cache, true).unwrap();
        let mut twice = net.zero_grads();
        for _ in 0..2 {
            net.backward_logit(&cache, cache.output()[0] - 1.0, &mut twice).unwrap();
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        once.params.flatten_into(&mut a);
        twice.flatten_into(&mut b);
        for (x1, x2) in a.iter().zip(&b) {
            assert_eq!(2.0 * x1, *x2);
        }
    }

    #[test]
    fn symmetric_optimum_has_zero_gradient() {
        // p = 0.5 with label split evenly: the summed gradient over both labels vanishes
        let net = Mlp::zeros(&MlpSpec::classifier(&[2, 3, 1])).unwrap();
        let (_, cache) = mlp_forward(&net, &[1.0, 2.0]).unwrap();
        let mut g = net.zero_grads();
        net.backward_logit(&cache, 0.5 - 1.0, &mut g).unwrap();
        net.backward_logit(&cache, 0.5 - 0.0, &mut g).unwrap();
        let mut flat = Vec::new();
        g.flatten_into(&mut flat);
        assert!(flat.iter().all(|&v| v == 0.0));
    }
}
