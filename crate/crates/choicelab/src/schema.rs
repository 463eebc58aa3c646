//! Column mapping from arbitrary CSV headers to canonical fields, plus the
//! codebook that turns categorical demographic answers into numbers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::IoError;

/// Headers of the choices table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceColumns {
    pub user_id: String,
    pub outcome1: String,
    pub prob1: String,
    pub recipient1: String,
    pub outcome2: String,
    pub prob2: String,
    pub recipient2: String,
    pub choice: String,
}

/// How cell values decode. Matching ignores case and surrounding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueCodes {
    pub recipient_self: Vec<String>,
    pub recipient_other: Vec<String>,
    pub choice_option1: Vec<String>,
    pub choice_option2: Vec<String>,
    /// Divide probabilities by 100 (for columns given in percent).
    #[serde(default)]
    pub prob_percent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantColumns {
    pub user_id: String,
    /// Exactly eleven demographic columns, in coding order.
    pub demographics: Vec<String>,
    /// Free-text answers; their tokens are concatenated.
    pub text: Vec<String>,
    /// Text cells already hold space-separated tokens (canonical files).
    #[serde(default)]
    pub pretokenized: bool,
}

/// Per demographic column: either numeric (parsed as is) or a map from
/// answer text to code. Unlisted answers are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnCoding {
    Numeric { numeric: bool },
    Levels(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub version: u32,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub choices: ChoiceColumns,
    pub values: ValueCodes,
    pub participants: Option<ParticipantColumns>,
    #[serde(default)]
    pub codebook: BTreeMap<String, ColumnCoding>,
}

fn default_delimiter() -> char {
    ','
}

pub const SCHEMA_VERSION: u32 = 1;

/// Best guess at the published file layout. Headers follow the scenario
/// feature names used in the study; anything else must be mapped
/// explicitly, and a missing column is reported with the headers found.
pub const DEFAULT_SCHEMA: &str = r#"version = 1
delimiter = ","

[choices]
user_id = "user_id"
outcome1 = "outcome.1"
prob1 = "prob.1"
recipient1 = "recepient.1"
outcome2 = "outcome.2"
prob2 = "prob.2"
recipient2 = "recepient.2"
choice = "choice"

[values]
recipient_self = ["0", "self", "you"]
recipient_other = ["1", "other"]
choice_option1 = ["1", "option1"]
choice_option2 = ["2", "0", "option2"]
prob_percent = false
"#;

/// Layout of the files written by the canonical serializer.
pub fn canonical_schema() -> Schema {
    let mut demographics = Vec::new();
    let mut codebook = BTreeMap::new();
    for i in 1..=choicelab_core::data::DEMOGRAPHIC_DIM {
        let name = format!("demo{i}");
        codebook.insert(name.clone(), ColumnCoding::Numeric { numeric: true });
        demographics.push(name);
    }
    Schema {
        version: SCHEMA_VERSION,
        delimiter: ',',
        choices: ChoiceColumns {
            user_id: "user_id".into(),
            outcome1: "outcome1".into(),
            prob1: "prob1".into(),
            recipient1: "recipient1".into(),
            outcome2: "outcome2".into(),
            prob2: "prob2".into(),
            recipient2: "recipient2".into(),
            choice: "choice".into(),
        },
        values: ValueCodes {
            recipient_self: vec!["self".into()],
            recipient_other: vec!["other".into()],
            choice_option1: vec!["1".into()],
            choice_option2: vec!["2".into()],
            prob_percent: false,
        },
        participants: Some(ParticipantColumns {
            user_id: "user_id".into(),
            demographics,
            text: vec!["tokens".into()],
            pretokenized: true,
        }),
        codebook,
    }
}

impl Schema {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let schema: Schema = toml::from_str(text).map_err(|e| IoError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn default_guess() -> Self {
        Self::parse(DEFAULT_SCHEMA).expect("built-in schema parses")
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text)
    }

    /// Explicit path, else `CHOICELAB_SCHEMA`, else the built-in guess.
    pub fn resolve(path: Option<&Path>) -> Result<Self, IoError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os("CHOICELAB_SCHEMA") {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default_guess()),
            },
        }
    }

    /// Like [`Schema::resolve`], but a `schema.toml` inside `dir` is preferred
    /// over the built-in guess.
    pub fn resolve_in(path: Option<&Path>, dir: Option<&Path>) -> Result<Self, IoError> {
        if path.is_none() && std::env::var_os("CHOICELAB_SCHEMA").is_none() {
            if let Some(local) = dir.map(|d| d.join("schema.toml")).filter(|p| p.exists()) {
                return Self::load(&local);
            }
        }
        Self::resolve(path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if self.version != SCHEMA_VERSION {
            return Err(IoError::Schema(format!("unsupported schema version {}", self.version)));
        }
        if !self.delimiter.is_ascii() {
            return Err(IoError::Schema("delimiter must be a single ASCII character".into()));
        }
        if let Some(p) = &self.participants {
            if p.demographics.len() != choicelab_core::data::DEMOGRAPHIC_DIM {
                return Err(IoError::Schema(format!(
                    "expected {} demographic columns, got {}",
                    choicelab_core::data::DEMOGRAPHIC_DIM,
                    p.demographics.len()
                )));
            }
            for c in &p.demographics {
                if !self.codebook.contains_key(c) {
                    return Err(IoError::Schema(format!("demographic column {c:?} has no codebook entry")));
                }
            }
        }
        Ok(())
    }
}
