use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HmcError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("initial point has dimension {got}, density expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("log density is not finite near the initial point (chain {chain})")]
    NonFiniteDensity { chain: usize },
}

/// Static-trajectory HMC settings. `iterations` counts warmup.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub leapfrog_steps: usize,
    pub seed: u64,
    /// Fixed integrator step size. `None` adapts it during warmup towards
    /// `target_accept`.
    pub step_size: Option<f64>,
    pub adapt_mass: bool,
    /// Each chain starts at `init + U(-init_jitter, init_jitter)` per coordinate.
    pub init_jitter: f64,
    /// Energy error above which a transition is flagged divergent.
    pub max_energy_error: f64,
    /// Each transition uses `step * (1 + step_jitter * U(-1, 1))`, which
    /// breaks up trajectories that return near their start.
    pub step_jitter: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            target_accept: 0.9,
            leapfrog_steps: 16,
            seed: 0,
            step_size: None,
            adapt_mass: true,
            init_jitter: 0.5,
            max_energy_error: 1000.0,
            step_jitter: 0.2,
        }
    }
}

impl HmcConfig {
    /// 7000 iterations per chain, half of them warmup.
    pub fn paper() -> Self {
        HmcConfig { iterations: 7000, warmup: 3500, ..Self::default() }
    }

    pub fn draws(&self) -> usize {
        self.iterations.saturating_sub(self.warmup)
    }

    pub fn validate(&self) -> Result<(), HmcError> {
        if self.chains == 0 {
            return Err(HmcError::InvalidConfig("chains must be positive"));
        }
        if self.warmup >= self.iterations {
            return Err(HmcError::InvalidConfig("warmup must be shorter than iterations"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(HmcError::InvalidConfig("target_accept must lie in (0, 1)"));
        }
        if self.leapfrog_steps == 0 {
            return Err(HmcError::InvalidConfig("leapfrog_steps must be positive"));
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(HmcError::InvalidConfig("step_size must be positive"));
            }
        }
        if !(self.step_jitter >= 0.0 && self.step_jitter < 1.0) {
            return Err(HmcError::InvalidConfig("step_jitter must lie in [0, 1)"));
        }
        if !(self.init_jitter >= 0.0) {
            return Err(HmcError::InvalidConfig("init_jitter must be non-negative"));
        }
        Ok(())
    }
}

/// Per-chain sampler statistics over the post-warmup draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub step_size: f64,
    pub mean_accept: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub inv_metric: Vec<f64>,
}

/// Post-warmup draws of every chain, each stored row-major (draw by dim).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    dim: usize,
    draws: usize,
    chains: Vec<Vec<f64>>,
    stats: Vec<ChainStats>,
}

impl ChainSet {
    /// Builds a set from per-chain row-major draws of equal length.
    pub fn from_chains(dim: usize, chains: Vec<Vec<f64>>, stats: Vec<ChainStats>) -> Result<Self, HmcError> {
        if dim == 0 || chains.is_empty() || chains.len() != stats.len() {
            return Err(HmcError::InvalidConfig("chain set needs matching chains and stats"));
        }
        let len = chains[0].len();
        if len % dim != 0 || chains.iter().any(|c| c.len() != len) {
            return Err(HmcError::InvalidConfig("chains must hold equal whole draws"));
        }
        Ok(ChainSet { dim, draws: len / dim, chains, stats })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws
    }

    pub fn stats(&self) -> &[ChainStats] {
        &self.stats
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        &self.chains[chain][i * self.dim..(i + 1) * self.dim]
    }

    pub fn draws_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(move |c| c.chunks_exact(self.dim))
    }

    /// One series per chain for coordinate `k`.
    pub fn param_series(&self, k: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.chunks_exact(self.dim).map(|d| d[k]).collect()).collect()
    }

    /// Per-chain series of a derived quantity.
    pub fn map_series<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.chunks_exact(self.dim).map(&f).collect()).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for d in self.draws_iter() {
            for (a, x) in acc.iter_mut().zip(d) {
                *a += x;
            }
        }
        let n = (self.draws * self.chains.len()) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().map(|s| s.divergences).sum()
    }
}

/// Runs `steps` leapfrog steps in place. `grad` must hold the gradient at `x`
/// on entry and holds the gradient at the final position on return. Returns
/// the final log density, or NaN as soon as the density leaves its support.
pub fn leapfrog<D: LogDensity + ?Sized>(
    density: &D,
    x: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    inv_metric: &[f64],
    step: f64,
    steps: usize,
) -> f64 {
    let mut logp = f64::NAN;
    for i in 0..steps {
        let half = if i == 0 { 0.5 * step } else { step };
        for (pi, g) in p.iter_mut().zip(grad.iter()) {
            *pi += half * g;
        }
        for ((xi, pi), m) in x.iter_mut().zip(p.iter()).zip(inv_metric) {
            *xi += step * m * pi;
        }
        logp = density.log_density_grad(x, grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return f64::NAN;
        }
    }
    for (pi, g) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * step * g;
    }
    logp
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(pi, m)| pi * pi * m).sum::<f64>()
}

struct State {
    x: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

struct Transition {
    accept_prob: f64,
    divergent: bool,
}

struct Kernel<'a, D: ?Sized> {
    density: &'a D,
    inv_metric: Vec<f64>,
    steps: usize,
    max_energy_error: f64,
    // scratch
    x: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
}

impl<D: LogDensity + ?Sized> Kernel<'_, D> {
    fn transition(&mut self, state: &mut State, step: f64, rng: &mut ChaCha8Rng) -> Transition {
        for (pi, m) in self.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *pi = n / math::sqrt(*m);
        }
        let h0 = -state.logp + kinetic(&self.p, &self.inv_metric);
        self.x.copy_from_slice(&state.x);
        self.grad.copy_from_slice(&state.grad);
        let logp = leapfrog(self.density, &mut self.x, &mut self.p, &mut self.grad, &self.inv_metric, step, self.steps);
        let h1 = -logp + kinetic(&self.p, &self.inv_metric);
        let u: f64 = rng.random();
        let err = h1 - h0;
        if !err.is_finite() || err > self.max_energy_error {
            return Transition { accept_prob: 0.0, divergent: true };
        }
        let accept_prob = if err <= 0.0 { 1.0 } else { math::exp(-err) };
        if u < accept_prob {
            state.x.copy_from_slice(&self.x);
            state.grad.copy_from_slice(&self.grad);
            state.logp = logp;
        }
        Transition { accept_prob, divergent: false }
    }

    /// Doubles or halves a step size until a single leapfrog step crosses an
    /// acceptance probability of one half.
    fn reasonable_step(&mut self, state: &State, start: f64, rng: &mut ChaCha8Rng) -> f64 {
        let mut step = start;
        let trial = |step: f64, kern: &mut Self, rng: &mut ChaCha8Rng| -> f64 {
            for (pi, m) in kern.p.iter_mut().zip(&kern.inv_metric) {
                let n: f64 = rng.sample(StandardNormal);
                *pi = n / math::sqrt(*m);
            }
            let h0 = -state.logp + kinetic(&kern.p, &kern.inv_metric);
            kern.x.copy_from_slice(&state.x);
            kern.grad.copy_from_slice(&state.grad);
            let logp = leapfrog(kern.density, &mut kern.x, &mut kern.p, &mut kern.grad, &kern.inv_metric, step, 1);
            let h1 = -logp + kinetic(&kern.p, &kern.inv_metric);
            let d = h0 - h1;
            if d.is_finite() { d } else { f64::NEG_INFINITY }
        };
        let ln_half = math::ln(0.5);
        let up = trial(step, self, rng) > ln_half;
        for _ in 0..60 {
            let next = if up { step * 2.0 } else { step * 0.5 };
            let crossed = (trial(next, self, rng) > ln_half) != up;
            if crossed {
                return if up { step } else { next };
            }
            step = next;
        }
        step
    }
}

struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_step: f64,
    log_step_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(step: f64, target: f64) -> Self {
        DualAveraging {
            mu: math::ln(10.0 * step),
            target,
            h_bar: 0.0,
            log_step: math::ln(step),
            log_step_bar: 0.0,
            t: 0.0,
        }
    }

    fn update(&mut self, accept_prob: f64) -> f64 {
        self.t += 1.0;
        let eta = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        self.log_step = self.mu - math::sqrt(self.t) / Self::GAMMA * self.h_bar;
        let w = math::powf(self.t, -Self::KAPPA);
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar;
        math::exp(self.log_step)
    }

    fn final_step(&self) -> f64 {
        math::exp(self.log_step_bar)
    }
}

/// End points (exclusive) of the slow metric-estimation windows.
fn metric_windows(warmup: usize) -> Vec<(usize, usize)> {
    let (init, term, base) = if warmup >= 150 {
        (75, 50, 25)
    } else {
        let init = warmup * 15 / 100;
        let term = warmup / 10;
        (init, term, warmup - init - term)
    };
    let end = warmup - term;
    let mut out = Vec::new();
    let mut start = init;
    let mut size = base.max(1);
    while start < end {
        let mut stop = start + size;
        if stop + 2 * size > end {
            stop = end;
        }
        out.push((start, stop));
        start = stop;
        size *= 2;
    }
    out
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = xi - *m;
            *m += d / n;
            *s += d * (xi - *m);
        }
    }

    /// Sample variance shrunk towards a small constant.
    fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        let w = n / (n + 5.0);
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                w * var + 1e-3 * (1.0 - w)
            })
            .collect()
    }
}

/// Runs one chain; returns row-major post-warmup draws and statistics.
/// Chain `c` draws from a generator seeded with `seed + c`.
pub fn hmc_chain<D: LogDensity + ?Sized>(
    density: &D,
    init: &[f64],
    config: &HmcConfig,
    chain: usize,
) -> Result<(Vec<f64>, ChainStats), HmcError> {
    config.validate()?;
    let dim = density.dim();
    if init.len() != dim {
        return Err(HmcError::Dimension { expected: dim, got: init.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(chain as u64));

    let mut state = State { x: vec![0.0; dim], grad: vec![0.0; dim], logp: f64::NAN };
    let mut found = false;
    for _ in 0..100 {
        for (x, x0) in state.x.iter_mut().zip(init) {
            let u: f64 = if config.init_jitter > 0.0 { rng.random_range(-1.0..1.0) } else { 0.0 };
            *x = x0 + config.init_jitter * u;
        }
        state.logp = density.log_density_grad(&state.x, &mut state.grad);
        if state.logp.is_finite() && state.grad.iter().all(|g| g.is_finite()) {
            found = true;
            break;
        }
    }
    if !found {
        return Err(HmcError::NonFiniteDensity { chain });
    }

    let mut kern = Kernel {
        density,
        inv_metric: vec![1.0; dim],
        steps: config.leapfrog_steps,
        max_energy_error: config.max_energy_error,
        x: vec![0.0; dim],
        p: vec![0.0; dim],
        grad: vec![0.0; dim],
    };

    let adapt_step = config.step_size.is_none();
    let mut step = match config.step_size {
        Some(s) => s,
        None => kern.reasonable_step(&state, 1.0, &mut rng),
    };
    let mut dual = DualAveraging::new(step, config.target_accept);
    let windows = if config.adapt_mass { metric_windows(config.warmup) } else { Vec::new() };
    let mut window_idx = 0;
    let mut welford = Welford::new(dim);

    let mut warmup_divergences = 0;
    let jittered = |step: f64, rng: &mut ChaCha8Rng| {
        if config.step_jitter > 0.0 {
            step * (1.0 + config.step_jitter * rng.random_range(-1.0..1.0))
        } else {
            step
        }
    };
    for it in 0..config.warmup {
        let eps = jittered(step, &mut rng);
        let tr = kern.transition(&mut state, eps, &mut rng);
        warmup_divergences += tr.divergent as usize;
        if adapt_step {
            step = dual.update(tr.accept_prob);
        }
        if let Some(&(start, stop)) = windows.get(window_idx) {
            if it >= start {
                welford.push(&state.x);
            }
            if it + 1 == stop {
                kern.inv_metric = welford.regularized();
                welford = Welford::new(dim);
                window_idx += 1;
                if adapt_step {
                    step = kern.reasonable_step(&state, step, &mut rng);
                    dual = DualAveraging::new(step, config.target_accept);
                }
            }
        }
    }
    if adapt_step && config.warmup > 0 {
        step = dual.final_step();
    }

    let n_draws = config.draws();
    let mut draws = Vec::with_capacity(n_draws * dim);
    let mut accept_sum = 0.0;
    let mut divergences = 0;
    for _ in 0..n_draws {
        let eps = jittered(step, &mut rng);
        let tr = kern.transition(&mut state, eps, &mut rng);
        accept_sum += tr.accept_prob;
        divergences += tr.divergent as usize;
        draws.extend_from_slice(&state.x);
    }
    let stats = ChainStats {
        step_size: step,
        mean_accept: accept_sum / n_draws as f64,
        divergences,
        warmup_divergences,
        inv_metric: kern.inv_metric,
    };
    Ok((draws, stats))
}

/// Runs every chain in turn from `init`.
pub fn hmc_sample<D: LogDensity + ?Sized>(density: &D, init: &[f64], config: &HmcConfig) -> Result<ChainSet, HmcError> {
    let mut chains = Vec::with_capacity(config.chains);
    let mut stats = Vec::with_capacity(config.chains);
    for c in 0..config.chains {
        let (d, s) = hmc_chain(density, init, config, c)?;
        chains.push(d);
        stats.push(s);
    }
    ChainSet::from_chains(density.dim(), chains, stats)
}
