use alloc::vec::Vec;

use super::{cross_entropy, Classifier};

/// Gradients below this magnitude are compared absolutely rather than
/// relatively, since central differences cannot resolve them.
const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat parameter index of the worst entry.
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Entries left out because a perturbation crossed a ReLU kink.
    pub kinks: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(ABS_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Summed loss plus the unit sign pattern over all samples.
fn total_loss<M: Classifier>(model: &M, samples: &[(M::Input, bool)], signs: &mut Vec<bool>) -> f64 {
    signs.clear();
    samples.iter().map(|(x, y)| cross_entropy(model.predict_signed(x, signs), *y)).sum()
}

/// Compares analytic gradients of the summed loss over `samples` with central
/// finite differences for every parameter.
pub fn grad_check<M: Classifier>(model: &M, samples: &[(M::Input, bool)], step: f64, tolerance: f64) -> GradCheckReport {
    grad_check_strided(model, samples, step, tolerance, 1)
}

/// Finite-difference formula used for the numeric derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, error O(h^2).
    Central,
    /// `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`, error O(h^4). Allows
    /// larger steps, so rounding noise on tiny gradients drops.
    FivePoint,
}

/// Like [`grad_check`] but only every `stride`-th parameter is perturbed.
pub fn grad_check_strided<M: Classifier>(
    model: &M,
    samples: &[(M::Input, bool)],
    step: f64,
    tolerance: f64,
    stride: usize,
) -> GradCheckReport {
    grad_check_with(model, samples, step, tolerance, stride, Stencil::Central)
}

pub fn grad_check_with<M: Classifier>(
    model: &M,
    samples: &[(M::Input, bool)],
    step: f64,
    tolerance: f64,
    stride: usize,
    stencil: Stencil,
) -> GradCheckReport {
    assert!(step > 0.0, "finite-difference step must be positive");
    let stride = stride.max(1);
    let mut grads = model.zero_grads();
    for (x, y) in samples {
        model.accumulate(x, *y, &mut grads);
    }
    let analytic = model.flatten_grads(&grads);

    let mut work = model.clone();
    let lens: Vec<usize> = work.param_slices_mut().iter().map(|s| s.len()).collect();
    assert_eq!(lens.iter().sum::<usize>(), analytic.len(), "parameter/gradient layout mismatch");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        kinks: 0,
        tolerance,
    };
    let mut base = Vec::new();
    total_loss(model, samples, &mut base);
    let mut signs = Vec::new();
    let mut flat = 0usize;
    for (s, &len) in lens.iter().enumerate() {
        for i in 0..len {
            if flat % stride == 0 {
                let orig = work.param_slices_mut()[s][i];
                let mut kinked = false;
                let mut at = |d: f64| {
                    work.param_slices_mut()[s][i] = orig + d;
                    let loss = total_loss(&work, samples, &mut signs);
                    kinked |= signs != base;
                    loss
                };
                let numeric = match stencil {
                    Stencil::Central => (at(step) - at(-step)) / (2.0 * step),
                    Stencil::FivePoint => {
                        (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step)
                    }
                };
                work.param_slices_mut()[s][i] = orig;
                if kinked {
                    report.kinks += 1;
                    flat += 1;
                    continue;
                }
                let err = relative_error(analytic[flat], numeric);
                if err > report.max_rel_error || report.checked == 0 {
                    report.max_rel_error = err;
                    report.worst_param = flat;
                    report.analytic = analytic[flat];
                    report.numeric = numeric;
                }
                report.checked += 1;
            }
            flat += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::MlpClassifier;
    use crate::nnkit::{Activation, Dense, Matrix, Mlp, MlpGrads, MlpSpec, Standardizer};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> MlpClassifier {
        let net = Mlp::new(&MlpSpec::classifier(&[3, 5, 1]), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        MlpClassifier::new(net, Standardizer::identity(3)).unwrap()
    }

    fn samples() -> Vec<(Vec<f64>, bool)> {
        vec![(vec![0.3, -1.2, 0.8], true), (vec![-0.5, 0.4, 1.1], false)]
    }

    #[test]
    fn both_stencils_pass_on_a_correct_gradient() {
        for (stencil, step) in [(Stencil::Central, 1e-5), (Stencil::FivePoint, 1e-3)] {
            let r = grad_check_with(&model(), &samples(), step, 1e-5, 1, stencil);
            assert!(r.passed(), "{stencil:?}: {r:?}");
            assert_eq!(r.checked + r.kinks, 26);
        }
    }

    /// Reports the negated gradient.
    #[derive(Clone)]
    struct Flipped(MlpClassifier);

    impl Classifier for Flipped {
        type Input = Vec<f64>;
        type Grads = MlpGrads;
        fn predict(&self, x: &Vec<f64>) -> f64 {
            self.0.predict(x)
        }
        fn zero_grads(&self) -> MlpGrads {
            self.0.zero_grads()
        }
        fn clear_grads(&self, g: &mut MlpGrads) {
            self.0.clear_grads(g)
        }
        fn accumulate(&self, x: &Vec<f64>, y: bool, g: &mut MlpGrads) -> f64 {
            self.0.accumulate(x, y, g)
        }
        fn apply(&mut self, g: &MlpGrads, lr: f64) {
            self.0.apply(g, lr)
        }
        fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
            self.0.param_slices_mut()
        }
        fn flatten_grads(&self, g: &MlpGrads) -> Vec<f64> {
            self.0.flatten_grads(g).into_iter().map(|v| -v).collect()
        }
    }

    #[test]
    fn sign_flipped_gradient_fails() {
        let r = grad_check(&Flipped(model()), &samples(), 1e-5, 1e-5);
        assert!(!r.passed());
        assert!(r.max_rel_error > 1.0);
    }

    #[test]
    fn perturbations_across_a_kink_are_excluded() {
        // The hidden unit sits exactly at zero, so moving either of its
        // weights or its bias flips it; only the output layer is compared.
        let hidden = Dense::from_parts(Matrix::zeros(1, 2), vec![0.0], Activation::Relu).unwrap();
        let out = Dense::from_parts(Matrix::from_vec(1, 1, vec![1.0]).unwrap(), vec![0.1], Activation::Sigmoid).unwrap();
        let m = MlpClassifier::new(Mlp::from_layers(vec![hidden, out]).unwrap(), Standardizer::identity(2)).unwrap();
        let r = grad_check(&m, &[(vec![0.5, -0.5], true)], 1e-5, 1e-5);
        assert_eq!(r.kinks, 3);
        assert_eq!(r.checked, 2);
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!((relative_error(1e-9, 2e-9) - 1e-2).abs() < 1e-15);
    }
}
