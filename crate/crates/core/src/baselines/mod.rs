//! Baselines without learned user representations: a random forest and a
//! plain MLP over concatenated raw inputs.

mod forest;
mod mlp;

pub use forest::{rf_predict, rf_train, rf_train_tree, Forest, ForestConfig, Tree, TreeNode};
pub use mlp::{mlp_baseline, MlpClassifier};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{encode_features, ChoiceRecord, UserId, FEATURE_DIM};
use crate::nnkit::{Matrix, NnError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("no training samples")]
    EmptySamples,
    #[error("feature vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid baseline configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed tree: {0}")]
    MalformedTree(&'static str),
    #[error("input {0} is not available")]
    MissingInput(&'static str),
    #[error("record references unknown user {0}")]
    UnknownUser(UserId),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Which raw inputs are concatenated after the six scenario features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BaselineInputs {
    Gamble,
    GambleUserId,
    GambleDemographics,
    GambleText,
}

impl BaselineInputs {
    pub const ALL: [BaselineInputs; 4] =
        [BaselineInputs::Gamble, BaselineInputs::GambleUserId, BaselineInputs::GambleDemographics, BaselineInputs::GambleText];

    pub fn name(self) -> &'static str {
        match self {
            BaselineInputs::Gamble => "G",
            BaselineInputs::GambleUserId => "G+ID",
            BaselineInputs::GambleDemographics => "G+demo",
            BaselineInputs::GambleText => "G+text",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.name().eq_ignore_ascii_case(s))
    }
}

/// Builds raw feature rows for records: the scenario features, then the user
/// index as one number, the user's demographics row, or their text centroid.
#[derive(Debug, Clone, Copy)]
pub struct FeatureSource<'a> {
    pub inputs: BaselineInputs,
    pub user_index: &'a BTreeMap<UserId, usize>,
    /// Rows indexed like `user_index`.
    pub demographics: Option<&'a Matrix>,
    pub centroids: Option<&'a Matrix>,
}

impl<'a> FeatureSource<'a> {
    pub fn new(inputs: BaselineInputs, user_index: &'a BTreeMap<UserId, usize>) -> Self {
        FeatureSource { inputs, user_index, demographics: None, centroids: None }
    }

    fn user_rows(&self) -> Result<Option<&'a Matrix>, BaselineError> {
        match self.inputs {
            BaselineInputs::Gamble | BaselineInputs::GambleUserId => Ok(None),
            BaselineInputs::GambleDemographics => {
                self.demographics.map(Some).ok_or(BaselineError::MissingInput("demographics"))
            }
            BaselineInputs::GambleText => self.centroids.map(Some).ok_or(BaselineError::MissingInput("text")),
        }
    }

    pub fn dim(&self) -> Result<usize, BaselineError> {
        Ok(FEATURE_DIM
            + match self.inputs {
                BaselineInputs::Gamble => 0,
                BaselineInputs::GambleUserId => 1,
                _ => self.user_rows()?.map_or(0, |m| m.cols()),
            })
    }

    pub fn row(&self, record: &ChoiceRecord) -> Result<Vec<f64>, BaselineError> {
        let mut out = Vec::with_capacity(self.dim()?);
        out.extend_from_slice(&encode_features(&record.scenario));
        if self.inputs == BaselineInputs::Gamble {
            return Ok(out);
        }
        let user = *self.user_index.get(&record.user_id).ok_or_else(|| BaselineError::UnknownUser(record.user_id.clone()))?;
        match self.user_rows()? {
            None => out.push(user as f64),
            Some(m) => out.extend_from_slice(m.row(user)),
        }
        Ok(out)
    }

    /// Feature rows paired with labels (option 1 chosen).
    pub fn samples(&self, records: &[ChoiceRecord]) -> Result<Vec<(Vec<f64>, bool)>, BaselineError> {
        records.iter().map(|r| Ok((self.row(r)?, r.choice.label()))).collect()
    }
}
