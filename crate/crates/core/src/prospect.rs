//! Subjective-value choice model with framing-specific risk exponents and
//! recipient-specific value weights, plus its hierarchical posterior.
//!
//! Per user there are four parameters. On the unconstrained ("raw") scale the
//! exponents are pre-logistic values, `alpha = 1.5 * logistic(raw)`, and the
//! weights are used as-is.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{ChoiceRecord, GambleOption, GambleScenario, Recipient};
use crate::math::{self, PROB_EPS};

/// Upper bound of both risk exponents.
pub const ALPHA_MAX: f64 = 1.5;
/// Parameters per user.
pub const N_PARAMS: usize = 4;
pub const PARAM_NAMES: [&str; N_PARAMS] = ["alpha_gain", "alpha_loss", "beta_self", "beta_other"];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2: f64 = core::f64::consts::LN_2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProspectError {
    #[error("user has no records")]
    EmptyRecords,
    #[error("parameter vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Per-user parameters on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SVParams {
    pub alpha_gain: f64,
    pub alpha_loss: f64,
    pub beta_self: f64,
    pub beta_other: f64,
}

/// Per-user parameters on the unconstrained scale, in [`PARAM_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawParams(pub [f64; N_PARAMS]);

impl SVParams {
    pub fn from_raw(raw: &RawParams) -> Self {
        let r = raw.0;
        SVParams { alpha_gain: alpha_from_raw(r[0]), alpha_loss: alpha_from_raw(r[1]), beta_self: r[2], beta_other: r[3] }
    }

    /// Inverse of [`SVParams::from_raw`]; alphas must lie in (0, 1.5).
    pub fn to_raw(&self) -> RawParams {
        RawParams([raw_from_alpha(self.alpha_gain), raw_from_alpha(self.alpha_loss), self.beta_self, self.beta_other])
    }

    pub fn as_array(&self) -> [f64; N_PARAMS] {
        [self.alpha_gain, self.alpha_loss, self.beta_self, self.beta_other]
    }

    fn beta(&self, r: Recipient) -> f64 {
        match r {
            Recipient::Own => self.beta_self,
            Recipient::Other => self.beta_other,
        }
    }
}

/// `1.5 * logistic(raw)`, a strictly increasing bijection onto (0, 1.5).
pub fn alpha_from_raw(raw: f64) -> f64 {
    ALPHA_MAX * math::logistic(raw)
}

pub fn raw_from_alpha(alpha: f64) -> f64 {
    math::ln(alpha / (ALPHA_MAX - alpha))
}

/// `sign(V) * p * |V|^alpha`, with `alpha_gain` for `V >= 0` and
/// `alpha_loss` otherwise. Zero outcomes are worth zero.
pub fn subjective_value(p: f64, v: f64, params: &SVParams) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    if v > 0.0 {
        p * math::powf(v, params.alpha_gain)
    } else {
        -p * math::powf(-v, params.alpha_loss)
    }
}

fn option_value(o: &GambleOption, params: &SVParams) -> f64 {
    subjective_value(o.prob, o.outcome, params)
}

/// Probability of choosing option 1:
/// `logistic(beta_1 * SV_1 - beta_2 * SV_2)` with each beta picked by recipient.
pub fn choice_prob(scenario: &GambleScenario, params: &SVParams) -> f64 {
    math::logistic(choice_logit(scenario, params))
}

pub fn choice_logit(scenario: &GambleScenario, params: &SVParams) -> f64 {
    let (a, b) = (&scenario.option1, &scenario.option2);
    params.beta(a.recipient) * option_value(a, params) - params.beta(b.recipient) * option_value(b, params)
}

/// Precomputed per-option quantities for fast likelihood evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OptionTerms {
    prob: f64,
    sign: f64,
    abs_v: f64,
    ln_abs_v: f64,
    /// 0 = gain exponent, 1 = loss exponent.
    alpha_slot: usize,
    /// 2 = own weight, 3 = other weight.
    beta_slot: usize,
    /// Index into the owning [`UserTrials`] magnitude table.
    mag_idx: usize,
}

impl OptionTerms {
    fn new(o: &GambleOption) -> Self {
        let abs_v = o.outcome.abs();
        OptionTerms {
            prob: o.prob,
            sign: if o.outcome > 0.0 {
                1.0
            } else if o.outcome < 0.0 {
                -1.0
            } else {
                0.0
            },
            abs_v,
            ln_abs_v: if abs_v > 0.0 { math::ln(abs_v) } else { 0.0 },
            alpha_slot: if o.outcome >= 0.0 { 0 } else { 1 },
            beta_slot: match o.recipient {
                Recipient::Own => 2,
                Recipient::Other => 3,
            },
            mag_idx: 0,
        }
    }

    /// SV and dSV/dalpha for the given exponents.
    #[inline]
    fn value(&self, alphas: &[f64; 2]) -> (f64, f64) {
        if self.sign == 0.0 {
            return (0.0, 0.0);
        }
        let m = math::powf(self.abs_v, alphas[self.alpha_slot]);
        let sv = self.sign * self.prob * m;
        (sv, sv * self.ln_abs_v)
    }

    /// As [`OptionTerms::value`] with `|v|^alpha` already looked up.
    #[inline]
    fn value_pow(&self, pow: f64) -> (f64, f64) {
        let sv = self.sign * self.prob * pow;
        (sv, sv * self.ln_abs_v)
    }
}

/// One user's trials in likelihood-ready form.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserTrials {
    trials: Vec<([OptionTerms; 2], bool)>,
    /// Distinct outcome magnitudes; powers are computed once per evaluation.
    magnitudes: Vec<f64>,
}

impl UserTrials {
    pub fn from_records<'a, I: IntoIterator<Item = &'a ChoiceRecord>>(records: I) -> Self {
        let mut trials: Vec<([OptionTerms; 2], bool)> = records
            .into_iter()
            .map(|r| {
                (
                    [OptionTerms::new(&r.scenario.option1), OptionTerms::new(&r.scenario.option2)],
                    r.choice.label(),
                )
            })
            .collect();
        let mut magnitudes: Vec<f64> = trials.iter().flat_map(|(o, _)| [o[0].abs_v, o[1].abs_v]).collect();
        magnitudes.sort_by(f64::total_cmp);
        magnitudes.dedup();
        for (opts, _) in &mut trials {
            for o in opts.iter_mut() {
                o.mag_idx = magnitudes.partition_point(|m| *m < o.abs_v);
            }
        }
        UserTrials { trials, magnitudes }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Log-likelihood and its gradient w.r.t. the raw parameters. Empty
    /// trial sets contribute zero.
    pub fn log_likelihood_grad(&self, raw: &RawParams) -> (f64, [f64; N_PARAMS]) {
        let r = raw.0;
        let alphas = [alpha_from_raw(r[0]), alpha_from_raw(r[1])];
        // d alpha / d raw = alpha * (1 - alpha / 1.5)
        let d_alpha = [alphas[0] * (1.0 - alphas[0] / ALPHA_MAX), alphas[1] * (1.0 - alphas[1] / ALPHA_MAX)];
        let pows: Vec<[f64; 2]> =
            self.magnitudes.iter().map(|m| [math::powf(*m, alphas[0]), math::powf(*m, alphas[1])]).collect();
        let mut ll = 0.0;
        let mut grad = [0.0; N_PARAMS];
        for (opts, chose1) in &self.trials {
            let (sv1, dsv1) = opts[0].value_pow(pows[opts[0].mag_idx][opts[0].alpha_slot]);
            let (sv2, dsv2) = opts[1].value_pow(pows[opts[1].mag_idx][opts[1].alpha_slot]);
            let b1 = r[opts[0].beta_slot];
            let b2 = r[opts[1].beta_slot];
            let z = b1 * sv1 - b2 * sv2;
            let (term, dz) = clamped_bernoulli(z, *chose1);
            ll += term;
            if dz != 0.0 {
                grad[opts[0].beta_slot] += dz * sv1;
                grad[opts[1].beta_slot] -= dz * sv2;
                grad[opts[0].alpha_slot] += dz * b1 * dsv1 * d_alpha[opts[0].alpha_slot];
                grad[opts[1].alpha_slot] -= dz * b2 * dsv2 * d_alpha[opts[1].alpha_slot];
            }
        }
        (ll, grad)
    }

    pub fn log_likelihood(&self, raw: &RawParams) -> f64 {
        self.log_likelihood_grad(raw).0
    }

    /// Fraction of trials where the more probable option was the one chosen
    /// (`p > 0.5` predicts option 1).
    pub fn accuracy(&self, params: &SVParams) -> f64 {
        let p = params.as_array();
        let alphas = [params.alpha_gain, params.alpha_loss];
        let mut correct = 0usize;
        for (opts, chose1) in &self.trials {
            let z = p[opts[0].beta_slot] * opts[0].value(&alphas).0 - p[opts[1].beta_slot] * opts[1].value(&alphas).0;
            if (math::logistic(z) > 0.5) == *chose1 {
                correct += 1;
            }
        }
        correct as f64 / self.trials.len().max(1) as f64
    }
}

/// ln P(observation) with the probability clamped to `[eps, 1 - eps]`, and
/// its derivative w.r.t. the logit (zero where the clamp is active).
#[inline]
fn clamped_bernoulli(z: f64, chose1: bool) -> (f64, f64) {
    let lo = math::ln(PROB_EPS);
    let hi = math::ln_1p(-PROB_EPS);
    // One exponential serves both the log-probability and the derivative.
    let e = math::exp(-z.abs());
    let l1p = math::ln_1p(e);
    let s = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
    let (ln_s, ln_not_s) = if z >= 0.0 { (-l1p, -z - l1p) } else { (z - l1p, -l1p) };
    let (l, d) = if chose1 { (ln_s, 1.0 - s) } else { (ln_not_s, -s) };
    if l < lo {
        (lo, 0.0)
    } else if l > hi {
        (hi, 0.0)
    } else {
        (l, d)
    }
}

/// Sum of log choice probabilities of one user's records.
pub fn user_log_likelihood(records: &[ChoiceRecord], params: &SVParams) -> Result<f64, ProspectError> {
    if records.is_empty() {
        return Err(ProspectError::EmptyRecords);
    }
    Ok(UserTrials::from_records(records).log_likelihood(&params.to_raw()))
}

/// Group-level location and scale per raw parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupPrior {
    pub location: [f64; N_PARAMS],
    pub scale: [f64; N_PARAMS],
}

impl Default for GroupPrior {
    fn default() -> Self {
        GroupPrior { location: [0.0; N_PARAMS], scale: [1.0; N_PARAMS] }
    }
}

/// Hierarchical posterior over every user, non-centered.
///
/// Parameter layout: `[location(4), ln scale(4), z_1(4), ..., z_J(4)]` with
/// `raw_j = location + scale * z_j`. Density terms:
/// - likelihood of each user's trials at `raw_j`,
/// - `z_jk ~ N(0, 1)`,
/// - `location_k ~ N(0, 1)`,
/// - `scale_k ~ half-N(0, 1)`, plus the log-Jacobian of `scale = exp(ln scale)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HierarchicalModel {
    users: Vec<UserTrials>,
}

pub const GROUP_DIM: usize = 2 * N_PARAMS;

impl HierarchicalModel {
    pub fn new(users: Vec<UserTrials>) -> Self {
        HierarchicalModel { users }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserTrials] {
        &self.users
    }

    pub fn dim(&self) -> usize {
        GROUP_DIM + N_PARAMS * self.users.len()
    }

    /// Splits a position into the group prior and per-user raw parameters.
    pub fn unpack(&self, theta: &[f64]) -> Result<(GroupPrior, Vec<RawParams>), ProspectError> {
        self.check(theta)?;
        let prior = group_of(theta);
        let raws = theta[GROUP_DIM..]
            .chunks_exact(N_PARAMS)
            .map(|z| {
                let mut r = [0.0; N_PARAMS];
                for k in 0..N_PARAMS {
                    r[k] = prior.location[k] + prior.scale[k] * z[k];
                }
                RawParams(r)
            })
            .collect();
        Ok((prior, raws))
    }

    /// Position whose users sit exactly at `raws` under `prior`.
    pub fn pack(&self, prior: &GroupPrior, raws: &[RawParams]) -> Result<Vec<f64>, ProspectError> {
        if raws.len() != self.users.len() {
            return Err(ProspectError::Dimension { expected: self.users.len(), got: raws.len() });
        }
        let mut theta = Vec::with_capacity(self.dim());
        theta.extend_from_slice(&prior.location);
        theta.extend(prior.scale.iter().map(|s| math::ln(*s)));
        for r in raws {
            for k in 0..N_PARAMS {
                theta.push((r.0[k] - prior.location[k]) / prior.scale[k]);
            }
        }
        Ok(theta)
    }

    fn check(&self, theta: &[f64]) -> Result<(), ProspectError> {
        if theta.len() != self.dim() {
            return Err(ProspectError::Dimension { expected: self.dim(), got: theta.len() });
        }
        Ok(())
    }

    /// Log prior density (hyperprior plus standard-normal offsets).
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64, ProspectError> {
        self.check(theta)?;
        let mut lp = 0.0;
        for k in 0..N_PARAMS {
            let mu = theta[k];
            let tau = theta[N_PARAMS + k];
            let sigma = math::exp(tau);
            lp += -0.5 * mu * mu - LN_SQRT_2PI;
            lp += LN_2 - 0.5 * sigma * sigma - LN_SQRT_2PI + tau;
        }
        for z in &theta[GROUP_DIM..] {
            lp += -0.5 * z * z - LN_SQRT_2PI;
        }
        Ok(lp)
    }

    /// Log posterior (up to the evidence) and its gradient.
    pub fn log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ProspectError> {
        self.check(theta)?;
        if grad.len() != theta.len() {
            return Err(ProspectError::Dimension { expected: theta.len(), got: grad.len() });
        }
        let prior = group_of(theta);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut user_ll = vec![0.0; self.users.len()];
        for (j, user) in self.users.iter().enumerate() {
            let base = GROUP_DIM + N_PARAMS * j;
            let z = &theta[base..base + N_PARAMS];
            let mut raw = [0.0; N_PARAMS];
            for k in 0..N_PARAMS {
                raw[k] = prior.location[k] + prior.scale[k] * z[k];
            }
            let (ll, g) = user.log_likelihood_grad(&RawParams(raw));
            user_ll[j] = ll;
            for k in 0..N_PARAMS {
                grad[base + k] = g[k] * prior.scale[k] - z[k];
                grad[k] += g[k];
                grad[N_PARAMS + k] += g[k] * z[k] * prior.scale[k];
            }
        }
        for k in 0..N_PARAMS {
            let sigma = prior.scale[k];
            grad[k] -= theta[k];
            grad[N_PARAMS + k] += 1.0 - sigma * sigma;
        }
        Ok(math::pairwise_sum(&user_ll) + self.log_prior(theta)?)
    }
}

fn group_of(theta: &[f64]) -> GroupPrior {
    let mut location = [0.0; N_PARAMS];
    let mut scale = [0.0; N_PARAMS];
    location.copy_from_slice(&theta[..N_PARAMS]);
    for k in 0..N_PARAMS {
        scale[k] = math::exp(theta[N_PARAMS + k]);
    }
    GroupPrior { location, scale }
}
