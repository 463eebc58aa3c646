//! Choice records, participants and dataset splits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of scenario features produced by [`encode_features`].
pub const FEATURE_DIM: usize = 6;
/// Number of coded demographic attributes per participant.
pub const DEMOGRAPHIC_DIM: usize = 11;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("record {row} references unknown user {user}")]
    UnknownUser { row: usize, user: String },
    #[error("probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { value: f64 },
    #[error("outcome is not finite")]
    NonFiniteOutcome,
    #[error("invalid split: {0}")]
    InvalidSplit(&'static str),
}

/// Opaque participant key as it appears in the source data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(String::from(s))
    }
}

/// Who receives the outcome of a gamble option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Recipient {
    /// The decision maker.
    Own,
    /// Another participant.
    Other,
}

impl Recipient {
    /// Feature code: own = 0, other = 1.
    pub fn code(self) -> f64 {
        match self {
            Recipient::Own => 0.0,
            Recipient::Other => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GambleOption {
    /// Signed dollars; negative outcomes are losses.
    pub outcome: f64,
    pub prob: f64,
    pub recipient: Recipient,
}

impl GambleOption {
    pub fn new(outcome: f64, prob: f64, recipient: Recipient) -> Result<Self, DataError> {
        if !outcome.is_finite() {
            return Err(DataError::NonFiniteOutcome);
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(DataError::ProbabilityOutOfRange { value: prob });
        }
        Ok(GambleOption { outcome, prob, recipient })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GambleScenario {
    pub option1: GambleOption,
    pub option2: GambleOption,
}

impl GambleScenario {
    pub fn new(option1: GambleOption, option2: GambleOption) -> Self {
        GambleScenario { option1, option2 }
    }

    /// The same gamble with the two options presented in the other order.
    pub fn swapped(&self) -> Self {
        GambleScenario { option1: self.option2, option2: self.option1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choice {
    Option1,
    Option2,
}

impl Choice {
    /// Binary label used by every classifier: 1 for option 1.
    pub fn label(self) -> bool {
        self == Choice::Option1
    }

    pub fn from_label(label: bool) -> Self {
        if label {
            Choice::Option1
        } else {
            Choice::Option2
        }
    }
}

/// Gain/loss framing of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Frame {
    Gain,
    Loss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceRecord {
    pub user_id: UserId,
    pub scenario: GambleScenario,
    pub choice: Choice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub user_id: UserId,
    /// Codebook levels (or raw numbers for numeric columns).
    pub demographics: [f64; DEMOGRAPHIC_DIM],
    /// Tokens from both open-ended answers, see [`tokenize`].
    pub text_tokens: Vec<String>,
}

/// Participants plus their choice records. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    participants: BTreeMap<UserId, Participant>,
    records: Vec<ChoiceRecord>,
}

impl Dataset {
    /// Builds a dataset. When `participants` is non-empty every record must
    /// resolve to a participant.
    pub fn new(
        participants: BTreeMap<UserId, Participant>,
        records: Vec<ChoiceRecord>,
    ) -> Result<Self, DataError> {
        if !participants.is_empty() {
            if let Some((row, r)) = records
                .iter()
                .enumerate()
                .find(|(_, r)| !participants.contains_key(&r.user_id))
            {
                return Err(DataError::UnknownUser { row, user: r.user_id.0.clone() });
            }
        }
        Ok(Dataset { participants, records })
    }

    pub fn from_records(records: Vec<ChoiceRecord>) -> Self {
        Dataset { participants: BTreeMap::new(), records }
    }

    pub fn records(&self) -> &[ChoiceRecord] {
        &self.records
    }

    pub fn participants(&self) -> &BTreeMap<UserId, Participant> {
        &self.participants
    }

    pub fn participant(&self, id: &UserId) -> Option<&Participant> {
        self.participants.get(id)
    }

    pub fn has_participants(&self) -> bool {
        !self.participants.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct user ids across participants and records.
    pub fn user_ids(&self) -> Vec<UserId> {
        let mut ids: Vec<UserId> = self.participants.keys().cloned().collect();
        ids.extend(self.records.iter().map(|r| r.user_id.clone()));
        ids.sort();
        ids.dedup();
        ids
    }

    /// Dense 0-based index per user, in sorted id order.
    pub fn user_index(&self) -> BTreeMap<UserId, usize> {
        self.user_ids().into_iter().enumerate().map(|(i, u)| (u, i)).collect()
    }

    /// Mean number of text tokens per participant (0 when there are none).
    pub fn mean_tokens_per_participant(&self) -> f64 {
        if self.participants.is_empty() {
            return 0.0;
        }
        let total: usize = self.participants.values().map(|p| p.text_tokens.len()).sum();
        total as f64 / self.participants.len() as f64
    }
}

/// Fixed-order scenario features:
/// (outcome.1, prob.1, recipient.1, outcome.2, prob.2, recipient.2).
pub fn encode_features(scenario: &GambleScenario) -> [f64; FEATURE_DIM] {
    let a = &scenario.option1;
    let b = &scenario.option2;
    [a.outcome, a.prob, a.recipient.code(), b.outcome, b.prob, b.recipient.code()]
}

/// A trial is a loss trial when any option has a negative outcome.
pub fn frame_of(record: &ChoiceRecord) -> Frame {
    scenario_frame(&record.scenario)
}

pub fn scenario_frame(scenario: &GambleScenario) -> Frame {
    if scenario.option1.outcome < 0.0 || scenario.option2.outcome < 0.0 {
        Frame::Loss
    } else {
        Frame::Gain
    }
}

/// Lowercases, splits on commas then whitespace and strips non-alphanumeric
/// characters. A multiword comma-delimited phrase yields the underscore-joined
/// phrase followed by its individual words.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for phrase in text.split(',') {
        let words: Vec<String> = phrase
            .split_whitespace()
            .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
            .filter(|w| !w.is_empty())
            .collect();
        if words.len() > 1 {
            out.push(words.join("_"));
        }
        out.extend(words);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.8, test_folds: 2, seed: 0 }
    }
}

/// Record-level split: the held-out part is halved into validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<ChoiceRecord>,
    pub val: Vec<ChoiceRecord>,
    pub test: Vec<ChoiceRecord>,
}

impl Split {
    /// Validation and test exchanged, for the second fold assignment.
    pub fn swapped(&self) -> Split {
        Split { train: self.train.clone(), val: self.test.clone(), test: self.val.clone() }
    }
}

/// Index form of [`make_split`], useful when records live elsewhere.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>), DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::InvalidSplit("train_fraction must lie in (0, 1)"));
    }
    if spec.test_folds != 2 {
        return Err(DataError::InvalidSplit("only two test folds (validation + test) are supported"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let n_train = (crate::math::round(spec.train_fraction * n as f64) as usize).min(n);
    let rest = n - n_train;
    let n_val = rest / 2;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok((idx, val, test))
}

pub fn make_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, DataError> {
    let (tr, va, te) = split_indices(dataset.len(), spec)?;
    let pick = |ix: &[usize]| ix.iter().map(|&i| dataset.records[i].clone()).collect::<Vec<_>>();
    Ok(Split { train: pick(&tr), val: pick(&va), test: pick(&te) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn opt(v: f64, p: f64, r: Recipient) -> GambleOption {
        GambleOption::new(v, p, r).unwrap()
    }

    fn rec(user: &str, a: f64, b: f64) -> ChoiceRecord {
        ChoiceRecord {
            user_id: user.into(),
            scenario: GambleScenario::new(opt(a, 0.5, Recipient::Own), opt(b, 0.5, Recipient::Own)),
            choice: Choice::Option1,
        }
    }

    #[test]
    fn features_follow_fixed_order() {
        let s = GambleScenario::new(opt(10.0, 0.5, Recipient::Own), opt(20.0, 0.25, Recipient::Own));
        assert_eq!(encode_features(&s), [10.0, 0.5, 0.0, 20.0, 0.25, 0.0]);

        let s = GambleScenario::new(opt(3.0, 0.25, Recipient::Other), opt(-5.0, 1.0, Recipient::Other));
        assert_eq!(encode_features(&s)[3..], [-5.0, 1.0, 1.0]);

        let o = opt(7.0, 0.5, Recipient::Other);
        let f = encode_features(&GambleScenario::new(o, o));
        assert_eq!(f[..3], f[3..]);
    }

    #[test]
    fn frames() {
        assert_eq!(frame_of(&rec("a", 10.0, 20.0)), Frame::Gain);
        assert_eq!(frame_of(&rec("a", -10.0, -5.0)), Frame::Loss);
        assert_eq!(frame_of(&rec("a", 0.0, 5.0)), Frame::Gain);
    }

    #[test]
    fn option_rejects_bad_probability() {
        assert_eq!(
            GambleOption::new(1.0, 1.7, Recipient::Own),
            Err(DataError::ProbabilityOutOfRange { value: 1.7 })
        );
        assert!(GambleOption::new(f64::NAN, 0.5, Recipient::Own).is_err());
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("politics, history, sports"), vec!["politics", "history", "sports"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" , ,").is_empty());
        assert_eq!(tokenize("Video Games!, climate"), vec!["video_games", "video", "games", "climate"]);
    }

    #[test]
    fn unknown_user_rejected() {
        let mut ps = BTreeMap::new();
        ps.insert(
            UserId::from("a"),
            Participant { user_id: "a".into(), demographics: [0.0; DEMOGRAPHIC_DIM], text_tokens: vec![] },
        );
        let err = Dataset::new(ps, vec![rec("a", 1.0, 2.0), rec("b", 1.0, 2.0)]).unwrap_err();
        assert_eq!(err, DataError::UnknownUser { row: 1, user: "b".into() });
    }

    #[test]
    fn split_sizes_for_published_count() {
        let (tr, va, te) = split_indices(77_120, &SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (61_696, 7_712, 7_712));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let spec = SplitSpec { seed: 42, ..SplitSpec::default() };
        let a = split_indices(1000, &spec).unwrap();
        let b = split_indices(1000, &spec).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.0.iter().chain(&a.1).chain(&a.2).copied().collect();
        all.sort();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        assert_eq!(split_indices(0, &SplitSpec::default()), Err(DataError::EmptyDataset));
        let bad = SplitSpec { test_folds: 3, ..SplitSpec::default() };
        assert!(matches!(split_indices(10, &bad), Err(DataError::InvalidSplit(_))));
    }
}
