use alloc::string::String;
use alloc::vec::Vec;

use super::hmc::ChainSet;
use crate::math;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagError {
    #[error("need at least 2 chains of at least 4 draws")]
    InsufficientDraws,
    #[error("chains have different lengths")]
    RaggedChains,
    #[error("within-chain variance is zero")]
    DegenerateChains,
}

/// Halves each chain (dropping a middle draw when odd).
fn split_chains(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>, DiagError> {
    if chains.len() < 2 || chains.iter().any(|c| c.len() < 4) {
        return Err(DiagError::InsufficientDraws);
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagError::RaggedChains);
    }
    let half = n / 2;
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        out.push(&c[..half]);
        out.push(&c[n - half..]);
    }
    Ok(out)
}

struct Moments {
    means: Vec<f64>,
    w: f64,
    b_over_n: f64,
    n: f64,
}

fn moments(chains: &[&[f64]]) -> Result<Moments, DiagError> {
    let means: Vec<f64> = chains.iter().map(|c| math::mean(c)).collect();
    let vars: Vec<f64> = chains.iter().map(|c| math::variance(c)).collect();
    let w = math::mean(&vars);
    if !(w > 0.0) {
        return Err(DiagError::DegenerateChains);
    }
    Ok(Moments { b_over_n: math::variance(&means), w, means, n: chains[0].len() as f64 })
}

/// Split-chain potential scale reduction factor.
pub fn r_hat(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    let split = split_chains(chains)?;
    let m = moments(&split)?;
    let var_plus = (m.n - 1.0) / m.n * m.w + m.b_over_n;
    Ok(math::sqrt(var_plus / m.w))
}

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let s: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum();
    s / n as f64
}

/// Effective sample size over split chains, with the autocorrelation sum
/// truncated by Geyer's initial monotone positive sequence. Capped at the
/// total number of draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    let split = split_chains(chains)?;
    let mo = moments(&split)?;
    let n = split[0].len();
    let total = (n * split.len()) as f64;
    let var_plus = (mo.n - 1.0) / mo.n * mo.w + mo.b_over_n;

    let rho = |lag: usize| -> f64 {
        let mean_acov: f64 =
            split.iter().zip(&mo.means).map(|(c, m)| autocovariance(c, *m, lag)).sum::<f64>() / split.len() as f64;
        1.0 - (mo.w - mean_acov) / var_plus
    };

    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / math::ln(total).max(1.0));
    Ok((total / tau).min(total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub r_hat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub params: Vec<ParamDiagnostics>,
    pub divergences: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
}

impl ChainDiagnostics {
    pub fn max_r_hat(&self) -> f64 {
        self.params.iter().map(|p| p.r_hat).fold(f64::NAN, f64::max)
    }

    pub fn min_r_hat(&self) -> f64 {
        self.params.iter().map(|p| p.r_hat).fold(f64::NAN, f64::min)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::NAN, f64::min)
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }
}

/// Diagnostics for named derived quantities of every draw. A quantity whose
/// chains are degenerate reports R-hat 1 and an ESS equal to the draw count
/// when all its draws agree, and NaN otherwise.
pub fn summarize<F>(set: &ChainSet, names: &[String], quantity: F) -> ChainDiagnostics
where
    F: Fn(&[f64], usize) -> f64,
{
    let params = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let series = set.map_series(|d| quantity(d, k));
            let all: Vec<f64> = series.iter().flatten().copied().collect();
            let mean = math::mean(&all);
            let constant = all.iter().all(|v| *v == all[0]);
            let (r, e) = match (r_hat(&series), ess(&series)) {
                (Ok(r), Ok(e)) => (r, e),
                _ if constant => (1.0, all.len() as f64),
                _ => (f64::NAN, f64::NAN),
            };
            ParamDiagnostics { name: name.clone(), mean, r_hat: r, ess: e }
        })
        .collect();
    ChainDiagnostics {
        params,
        divergences: set.divergences(),
        chains: set.n_chains(),
        draws_per_chain: set.n_draws(),
    }
}
