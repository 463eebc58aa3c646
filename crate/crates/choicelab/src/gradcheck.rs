//! Finite-difference checks of every analytic gradient in the models, on
//! randomly initialised instances at the configured layer sizes.
//!
//! The numeric side uses a five-point stencil with a step large enough that
//! rounding noise stays far below the tolerance even for gradients near the
//! relative-error floor. Perturbations that flip a ReLU sign are excluded
//! and counted, since finite differences are undefined across a kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use choicelab_core::data::{DEMOGRAPHIC_DIM, FEATURE_DIM};
use choicelab_core::harness::{simulate_agents, AgentSpec};
use choicelab_core::nnkit::{grad_check_with, relative_error, Classifier, Matrix, Standardizer, Stencil};
use choicelab_core::repr::{Architecture, FusionInput, FusionModel, RepKind};
use choicelab_core::sampler::build_model;

pub const STEP: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-5;

/// Worst entry over all instances of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSummary {
    pub model: &'static str,
    pub instances: usize,
    pub checked: usize,
    /// Entries skipped because a perturbation crossed a ReLU kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst_instance: usize,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub seed: u64,
    /// Upper bound on perturbed parameters per network instance.
    pub max_params: usize,
    pub n_users: usize,
    pub samples: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { instances: 10, seed: 0, max_params: 1000, n_users: 5, samples: 4 }
    }
}

fn normal_matrix(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal) * sd).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_scaler(rng: &mut ChaCha8Rng) -> Standardizer {
    let mean = (0..FEATURE_DIM).map(|_| rng.random_range(-5.0..5.0)).collect();
    let scale = (0..FEATURE_DIM).map(|_| rng.random_range(0.3..8.0)).collect();
    Standardizer::from_parts(mean, scale).expect("positive scales")
}

fn random_samples(cfg: &GradCheckConfig, rng: &mut ChaCha8Rng) -> Vec<(FusionInput, bool)> {
    let outcomes = [-20.0, -10.0, -5.0, 5.0, 10.0, 20.0];
    let probs = [0.25, 0.5, 1.0];
    (0..cfg.samples)
        .map(|_| {
            let mut features = [0.0; FEATURE_DIM];
            for o in 0..2 {
                features[3 * o] = outcomes[rng.random_range(0..6)];
                features[3 * o + 1] = probs[rng.random_range(0..3)];
                features[3 * o + 2] = rng.random_range(0..2) as f64;
            }
            (FusionInput { user: rng.random_range(0..cfg.n_users), features }, rng.random_bool(0.5))
        })
        .collect()
}

fn check_fusion(
    name: &'static str,
    cfg: &GradCheckConfig,
    build: impl Fn(&mut ChaCha8Rng) -> FusionModel,
) -> GradCheckSummary {
    let mut s = GradCheckSummary { model: name, instances: cfg.instances, checked: 0, kinks: 0, max_rel_error: 0.0, worst_instance: 0 };
    for i in 0..cfg.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let model = build(&mut rng);
        let samples = random_samples(cfg, &mut rng);
        let n_params = model.flatten_grads(&model.zero_grads()).len();
        // An odd stride spreads the checked entries over every layer.
        let stride = (n_params / cfg.max_params.max(1)).max(1) | 1;
        let r = grad_check_with(&model, &samples, STEP, TOLERANCE, stride, Stencil::FivePoint);
        s.checked += r.checked;
        s.kinks += r.kinks;
        if r.max_rel_error > s.max_rel_error {
            s.max_rel_error = r.max_rel_error;
            s.worst_instance = i;
        }
    }
    s
}

pub fn check_beh2vec(cfg: &GradCheckConfig, arch: &Architecture) -> GradCheckSummary {
    check_fusion("beh2vec", cfg, |rng| {
        let scaler = random_scaler(rng);
        FusionModel::beh2vec(cfg.n_users, arch, scaler, rng).expect("valid architecture")
    })
}

pub fn check_text(cfg: &GradCheckConfig, arch: &Architecture) -> GradCheckSummary {
    check_fusion("text", cfg, |rng| {
        let centroids = normal_matrix(cfg.n_users, arch.text_encoder[0], 0.3, rng);
        let scaler = random_scaler(rng);
        FusionModel::with_fixed(RepKind::Text, centroids, arch, scaler, rng).expect("valid architecture")
    })
}

pub fn check_demo(cfg: &GradCheckConfig, arch: &Architecture) -> GradCheckSummary {
    check_fusion("demo", cfg, |rng| {
        let demo = normal_matrix(cfg.n_users, DEMOGRAPHIC_DIM, 1.0, rng);
        let scaler = random_scaler(rng);
        FusionModel::with_fixed(RepKind::Demographics, demo, arch, scaler, rng).expect("valid architecture")
    })
}

/// Hierarchical log-posterior over simulated agents, every coordinate.
pub fn check_prospect(cfg: &GradCheckConfig) -> GradCheckSummary {
    let mut s = GradCheckSummary { model: "prospect", instances: cfg.instances, checked: 0, kinks: 0, max_rel_error: 0.0, worst_instance: 0 };
    for i in 0..cfg.instances {
        let seed = cfg.seed.wrapping_add(i as u64);
        let spec = AgentSpec { n_users: cfg.n_users, trials_per_user: 24, seed, ..AgentSpec::default() };
        let (data, _) = simulate_agents(&spec).expect("valid spec");
        let (_, model) = build_model(data.records());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grad = vec![0.0; model.dim()];
        let mut scratch = vec![0.0; model.dim()];
        model.log_posterior(&theta, &mut grad).expect("dimension");
        for k in 0..model.dim() {
            let mut at = |d: f64| {
                let mut x = theta.clone();
                x[k] += d;
                model.log_posterior(&x, &mut scratch).expect("dimension")
            };
            let numeric = (-at(2.0 * STEP) + 8.0 * at(STEP) - 8.0 * at(-STEP) + at(-2.0 * STEP)) / (12.0 * STEP);
            let err = relative_error(grad[k], numeric);
            s.checked += 1;
            if err > s.max_rel_error {
                s.max_rel_error = err;
                s.worst_instance = i;
            }
        }
    }
    s
}

/// All four checks, run concurrently.
pub fn check_all(cfg: &GradCheckConfig, arch: &Architecture) -> Vec<GradCheckSummary> {
    let ((a, b), (c, d)) = rayon::join(
        || rayon::join(|| check_beh2vec(cfg, arch), || check_text(cfg, arch)),
        || rayon::join(|| check_demo(cfg, arch), || check_prospect(cfg)),
    );
    vec![a, b, c, d]
}
