//! Metrics, synthetic agents and report rows shared by every experiment.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{frame_of, Choice, ChoiceRecord, Dataset, Frame, GambleOption, GambleScenario, Recipient, UserId};
use crate::prospect::{choice_prob, GroupPrior, RawParams, SVParams, N_PARAMS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("{predictions} predictions for {records} records")]
    LengthMismatch { predictions: usize, records: usize },
    #[error("invalid agent spec: {0}")]
    InvalidSpec(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Rf,
    Mlp,
    Beh2vecId,
    Beh2vecDemo,
    Beh2vecText,
    BehavioralHmc,
    BehavioralMap,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Rf,
        ModelKind::Mlp,
        ModelKind::Beh2vecId,
        ModelKind::Beh2vecDemo,
        ModelKind::Beh2vecText,
        ModelKind::BehavioralHmc,
        ModelKind::BehavioralMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
            ModelKind::Beh2vecId => "beh2vec_id",
            ModelKind::Beh2vecDemo => "beh2vec_demo",
            ModelKind::Beh2vecText => "beh2vec_text",
            ModelKind::BehavioralHmc => "behavioral_hmc",
            ModelKind::BehavioralMap => "behavioral_map",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Correct and total predictions within one slice of the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

impl Counts {
    /// Zero for an empty slice.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: Counts) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Accuracy bookkeeping overall and split by frame. `all` is always the
/// sum of `gains` and `losses`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Metrics {
    pub gains: Counts,
    pub losses: Counts,
}

impl Metrics {
    pub fn all(&self) -> Counts {
        let mut c = self.gains;
        c.add(self.losses);
        c
    }

    pub fn accuracy_all(&self) -> f64 {
        self.all().accuracy()
    }

    pub fn accuracy_gains(&self) -> f64 {
        self.gains.accuracy()
    }

    pub fn accuracy_losses(&self) -> f64 {
        self.losses.accuracy()
    }

    /// Counts summed over folds, so each accuracy is the count-weighted
    /// mean of the per-fold accuracies.
    pub fn pooled<'a, I: IntoIterator<Item = &'a Metrics>>(folds: I) -> Metrics {
        let mut m = Metrics::default();
        for f in folds {
            m.gains.add(f.gains);
            m.losses.add(f.losses);
        }
        m
    }
}

/// Scores probabilities of choosing option 1 against the recorded choices.
/// Option 1 is predicted iff the probability exceeds 0.5, so an exact 0.5
/// predicts option 2.
pub fn evaluate(probs: &[f64], records: &[ChoiceRecord]) -> Result<Metrics, HarnessError> {
    if probs.len() != records.len() {
        return Err(HarnessError::LengthMismatch { predictions: probs.len(), records: records.len() });
    }
    let mut m = Metrics::default();
    for (p, r) in probs.iter().zip(records) {
        let predicted = if *p > 0.5 { Choice::Option1 } else { Choice::Option2 };
        let c = match frame_of(r) {
            Frame::Gain => &mut m.gains,
            Frame::Loss => &mut m.losses,
        };
        c.total += 1;
        c.correct += (predicted == r.choice) as usize;
    }
    Ok(m)
}

/// One experiment row: a model kind, its input variant, and either pooled
/// metrics or the reason it was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model: ModelKind,
    /// Input variant, e.g. `G+ID`; empty when the kind has only one.
    pub variant: String,
    pub outcome: ReportOutcome,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportOutcome {
    Done {
        metrics: Metrics,
        folds: Vec<Metrics>,
        /// Accuracy on the training records, when measured.
        train_accuracy: Option<f64>,
    },
    Skipped { reason: String },
}

impl MetricsReport {
    pub fn done(model: ModelKind, variant: &str, folds: Vec<Metrics>, train_accuracy: Option<f64>) -> Self {
        MetricsReport {
            model,
            variant: String::from(variant),
            outcome: ReportOutcome::Done { metrics: Metrics::pooled(&folds), folds, train_accuracy },
            seed: 0,
            config_hash: String::new(),
        }
    }

    pub fn skipped(model: ModelKind, variant: &str, reason: &str) -> Self {
        MetricsReport {
            model,
            variant: String::from(variant),
            outcome: ReportOutcome::Skipped { reason: String::from(reason) },
            seed: 0,
            config_hash: String::new(),
        }
    }

    pub fn metrics(&self) -> Option<&Metrics> {
        match &self.outcome {
            ReportOutcome::Done { metrics, .. } => Some(metrics),
            ReportOutcome::Skipped { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        if self.variant.is_empty() {
            String::from(self.model.name())
        } else {
            format!("{}[{}]", self.model.name(), self.variant)
        }
    }
}

/// Canonical report order: by model kind, then variant.
pub fn sort_reports(reports: &mut [MetricsReport]) {
    reports.sort_by(|a, b| (a.model, &a.variant).cmp(&(b.model, &b.variant)));
}

/// Every outcome/probability pair a simulated option can take.
fn option_grid() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for v in [5.0, 10.0, 20.0] {
        for p in [0.25, 0.5, 1.0] {
            out.push((v, p));
        }
    }
    out
}

fn design(keep: impl Fn((f64, f64), (f64, f64)) -> bool) -> Vec<GambleScenario> {
    let recipients = [Recipient::Own, Recipient::Other];
    let grid = option_grid();
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        for &a in &grid {
            for &b in &grid {
                if !keep(a, b) {
                    continue;
                }
                for ra in recipients {
                    for rb in recipients {
                        out.push(GambleScenario::new(
                            GambleOption::new(sign * a.0, a.1, ra).expect("grid values are valid"),
                            GambleOption::new(sign * b.0, b.1, rb).expect("grid values are valid"),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Same-frame pairs where one option has the larger amount and the other
/// the larger probability, for each recipient combination: 72 scenarios.
/// Option order is randomized per trial by [`simulate_agents`].
pub fn tradeoff_design() -> Vec<GambleScenario> {
    design(|a, b| a.0 > b.0 && a.1 < b.1)
}

/// Every ordered same-frame pair of distinct options: 576 scenarios.
pub fn full_design() -> Vec<GambleScenario> {
    design(|a, b| a != b)
}

/// Synthetic participants whose raw parameters are drawn independently
/// from `prior` (per parameter location and scale).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub n_users: usize,
    pub trials_per_user: usize,
    pub prior: GroupPrior,
    pub gambles: Vec<GambleScenario>,
    /// Swap option order with probability one half on every trial.
    pub shuffle_options: bool,
    pub seed: u64,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            n_users: 200,
            trials_per_user: 64,
            prior: GroupPrior { location: [0.0, 0.0, 1.0, 1.0], scale: [1.5, 1.5, 0.8, 0.8] },
            gambles: tradeoff_design(),
            shuffle_options: true,
            seed: 0,
        }
    }
}

/// Simulated dataset plus each agent's true parameters, in user order.
/// Each agent sees distinct scenarios from `gambles` (cycling when it asks
/// for more trials than there are scenarios) and chooses by a Bernoulli
/// draw from the prospect choice probability.
pub fn simulate_agents(spec: &AgentSpec) -> Result<(Dataset, Vec<(UserId, SVParams)>), HarnessError> {
    if spec.n_users == 0 {
        return Err(HarnessError::InvalidSpec("n_users must be at least 1"));
    }
    if spec.gambles.is_empty() {
        return Err(HarnessError::InvalidSpec("no gambles to present"));
    }
    if spec.prior.scale.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(HarnessError::InvalidSpec("prior scales must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = (spec.n_users - 1).to_string().len().max(3);
    let mut truth = Vec::with_capacity(spec.n_users);
    let mut records = Vec::with_capacity(spec.n_users * spec.trials_per_user);
    let mut order: Vec<usize> = (0..spec.gambles.len()).collect();
    for u in 0..spec.n_users {
        let id = UserId(format!("agent{u:0width$}"));
        let mut raw = [0.0; N_PARAMS];
        for (k, r) in raw.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *r = spec.prior.location[k] + spec.prior.scale[k] * z;
        }
        let params = SVParams::from_raw(&RawParams(raw));
        order.shuffle(&mut rng);
        for t in 0..spec.trials_per_user {
            let mut scenario = spec.gambles[order[t % order.len()]];
            if spec.shuffle_options && rng.random_bool(0.5) {
                scenario = scenario.swapped();
            }
            let p = choice_prob(&scenario, &params);
            let choice = Choice::from_label(rng.random::<f64>() < p);
            records.push(ChoiceRecord { user_id: id.clone(), scenario, choice });
        }
        truth.push((id, params));
    }
    Ok((Dataset::from_records(records), truth))
}

/// Copy of `records` with the choices randomly permuted among them.
pub fn permute_labels(records: &[ChoiceRecord], seed: u64) -> Vec<ChoiceRecord> {
    let mut choices: Vec<Choice> = records.iter().map(|r| r.choice).collect();
    choices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    records.iter().zip(choices).map(|(r, c)| ChoiceRecord { choice: c, ..r.clone() }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(outcome: f64, choice: Choice) -> ChoiceRecord {
        ChoiceRecord {
            user_id: UserId::from("u"),
            scenario: GambleScenario::new(
                GambleOption::new(outcome, 0.5, Recipient::Own).unwrap(),
                GambleOption::new(outcome, 1.0, Recipient::Other).unwrap(),
            ),
            choice,
        }
    }

    #[test]
    fn perfect_predictions() {
        let recs = vec![rec(5.0, Choice::Option1), rec(-5.0, Choice::Option1)];
        let m = evaluate(&[1.0, 1.0], &recs).unwrap();
        assert_eq!((m.accuracy_all(), m.accuracy_gains(), m.accuracy_losses()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_predicts_option_two() {
        let recs = vec![rec(5.0, Choice::Option1), rec(5.0, Choice::Option2), rec(-5.0, Choice::Option2), rec(10.0, Choice::Option2)];
        let m = evaluate(&[0.5; 4], &recs).unwrap();
        assert_eq!(m.accuracy_all(), 0.75);
        assert_eq!(m.gains, Counts { correct: 2, total: 3 });
        assert_eq!(m.losses, Counts { correct: 1, total: 1 });
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            evaluate(&[0.1], &[]).unwrap_err(),
            HarnessError::LengthMismatch { predictions: 1, records: 0 }
        );
    }

    #[test]
    fn pooling_keeps_counts() {
        let a = Metrics { gains: Counts { correct: 3, total: 4 }, losses: Counts { correct: 1, total: 2 } };
        let b = Metrics { gains: Counts { correct: 2, total: 2 }, losses: Counts { correct: 0, total: 3 } };
        let p = Metrics::pooled(&[a, b]);
        assert_eq!(p.all(), Counts { correct: 6, total: 11 });
        let r = MetricsReport::done(ModelKind::Mlp, "G", vec![a, b], None);
        assert_eq!(r.metrics(), Some(&p));
        assert_eq!(r.label(), "mlp[G]");
    }

    #[test]
    fn design_sizes() {
        assert_eq!(tradeoff_design().len(), 72);
        assert_eq!(full_design().len(), 576);
        for s in tradeoff_design() {
            assert_eq!(s.option1.outcome.signum(), s.option2.outcome.signum());
        }
    }

    #[test]
    fn zero_weight_agents_flip_coins() {
        let spec = AgentSpec {
            n_users: 10,
            trials_per_user: 1000,
            prior: GroupPrior { location: [0.0; 4], scale: [1.0, 1.0, 0.0, 0.0] },
            ..AgentSpec::default()
        };
        let (ds, truth) = simulate_agents(&spec).unwrap();
        assert!(truth.iter().all(|(_, p)| p.beta_self == 0.0 && p.beta_other == 0.0));
        let rate = ds.records().iter().filter(|r| r.choice == Choice::Option1).count() as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "{rate}");
    }

    #[test]
    fn huge_weights_are_deterministic() {
        let spec = AgentSpec {
            n_users: 5,
            prior: GroupPrior { location: [0.0, 0.0, 200.0, 200.0], scale: [1.0, 1.0, 0.0, 0.0] },
            ..AgentSpec::default()
        };
        let (ds, truth) = simulate_agents(&spec).unwrap();
        for r in ds.records() {
            let (_, params) = truth.iter().find(|(id, _)| *id == r.user_id).unwrap();
            let z = crate::prospect::choice_logit(&r.scenario, params);
            if z.abs() > 40.0 {
                assert_eq!(r.choice.label(), z > 0.0);
            }
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let spec = AgentSpec { n_users: 3, ..AgentSpec::default() };
        assert_eq!(simulate_agents(&spec).unwrap(), simulate_agents(&spec).unwrap());
        let other = AgentSpec { seed: 1, ..spec.clone() };
        assert_ne!(simulate_agents(&spec).unwrap().0, simulate_agents(&other).unwrap().0);
        assert!(simulate_agents(&AgentSpec { n_users: 0, ..spec }).is_err());
    }

    #[test]
    fn permutation_keeps_label_counts() {
        let recs: Vec<_> = (0..50).map(|i| rec(5.0, Choice::from_label(i % 3 == 0))).collect();
        let p = permute_labels(&recs, 4);
        let count = |rs: &[ChoiceRecord]| rs.iter().filter(|r| r.choice == Choice::Option1).count();
        assert_eq!(count(&recs), count(&p));
        assert_ne!(recs, p);
    }
}
