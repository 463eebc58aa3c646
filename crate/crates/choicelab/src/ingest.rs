//! CSV loaders driven by a [`Schema`], and the canonical serializer whose
//! output loads back under [`canonical_schema`] to identical records.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use choicelab_core::data::{tokenize, Choice, DEMOGRAPHIC_DIM};
use choicelab_core::{ChoiceRecord, Dataset, GambleOption, GambleScenario, Participant, Recipient, UserId};

use crate::schema::{canonical_schema, ColumnCoding, Schema, ValueCodes};
use crate::IoError;

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read<R: Read>(path: &Path, reader: R, delimiter: char) -> Result<Self, IoError> {
        let csv_err = |e: csv::Error| IoError::Csv { path: path.to_path_buf(), message: e.to_string() };
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter as u8).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        Ok(Table { path: path.to_path_buf(), headers, rows })
    }

    fn open(path: &Path, delimiter: char) -> Result<Self, IoError> {
        let f = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
        Self::read(path, std::io::BufReader::new(f), delimiter)
    }

    fn column(&self, name: &str) -> Result<usize, IoError> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| IoError::MissingColumn {
            path: self.path.clone(),
            column: name.to_string(),
            available: self.headers.clone(),
        })
    }

    fn unparsable(&self, row: usize, column: &str, value: &str) -> IoError {
        IoError::UnparsableValue {
            path: self.path.clone(),
            row: row + 1,
            column: column.to_string(),
            value: value.to_string(),
        }
    }

    fn cell<'a>(&self, rec: &'a csv::StringRecord, col: usize) -> &'a str {
        rec.get(col).unwrap_or("").trim()
    }

    fn number(&self, rec: &csv::StringRecord, row: usize, col: usize) -> Result<f64, IoError> {
        let v = self.cell(rec, col);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.unparsable(row, &self.headers[col], v))
    }
}

fn matches(codes: &[String], value: &str) -> bool {
    codes.iter().any(|c| c.trim().eq_ignore_ascii_case(value))
}

fn recipient(codes: &ValueCodes, value: &str) -> Option<Recipient> {
    if matches(&codes.recipient_self, value) {
        Some(Recipient::Own)
    } else if matches(&codes.recipient_other, value) {
        Some(Recipient::Other)
    } else {
        None
    }
}

fn choice(codes: &ValueCodes, value: &str) -> Option<Choice> {
    if matches(&codes.choice_option1, value) {
        Some(Choice::Option1)
    } else if matches(&codes.choice_option2, value) {
        Some(Choice::Option2)
    } else {
        None
    }
}

fn parse_choices(table: &Table, schema: &Schema) -> Result<Vec<ChoiceRecord>, IoError> {
    let c = &schema.choices;
    let user = table.column(&c.user_id)?;
    let opts = [
        (table.column(&c.outcome1)?, table.column(&c.prob1)?, table.column(&c.recipient1)?),
        (table.column(&c.outcome2)?, table.column(&c.prob2)?, table.column(&c.recipient2)?),
    ];
    let choice_col = table.column(&c.choice)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (row, rec) in table.rows.iter().enumerate() {
        let mut parsed = [None; 2];
        for (slot, &(oc, pc, rc)) in parsed.iter_mut().zip(&opts) {
            let outcome = table.number(rec, row, oc)?;
            let mut prob = table.number(rec, row, pc)?;
            if schema.values.prob_percent {
                prob /= 100.0;
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(IoError::ProbabilityOutOfRange { path: table.path.clone(), row: row + 1, value: prob });
            }
            let rv = table.cell(rec, rc);
            let r = recipient(&schema.values, rv).ok_or_else(|| table.unparsable(row, &table.headers[rc], rv))?;
            *slot = Some(GambleOption::new(outcome, prob, r)?);
        }
        let cv = table.cell(rec, choice_col);
        let ch = choice(&schema.values, cv).ok_or_else(|| table.unparsable(row, &table.headers[choice_col], cv))?;
        let uid = table.cell(rec, user);
        if uid.is_empty() {
            return Err(table.unparsable(row, &table.headers[user], uid));
        }
        out.push(ChoiceRecord {
            user_id: UserId::from(uid),
            scenario: GambleScenario::new(parsed[0].unwrap(), parsed[1].unwrap()),
            choice: ch,
        });
    }
    Ok(out)
}

fn parse_participants(table: &Table, schema: &Schema) -> Result<BTreeMap<UserId, Participant>, IoError> {
    let cols = schema
        .participants
        .as_ref()
        .ok_or_else(|| IoError::Schema("schema has no [participants] section".into()))?;
    let user = table.column(&cols.user_id)?;
    let demo = cols.demographics.iter().map(|c| table.column(c)).collect::<Result<Vec<_>, _>>()?;
    let text = cols.text.iter().map(|c| table.column(c)).collect::<Result<Vec<_>, _>>()?;
    let mut out = BTreeMap::new();
    for (row, rec) in table.rows.iter().enumerate() {
        let mut demographics = [0.0; DEMOGRAPHIC_DIM];
        for (k, &col) in demo.iter().enumerate() {
            let name = &cols.demographics[k];
            demographics[k] = match &schema.codebook[name] {
                ColumnCoding::Numeric { .. } => table.number(rec, row, col)?,
                ColumnCoding::Levels(levels) => {
                    let v = table.cell(rec, col);
                    *levels.get(v).ok_or_else(|| IoError::UnknownCategoryLevel {
                        path: table.path.clone(),
                        row: row + 1,
                        column: name.clone(),
                        value: v.to_string(),
                    })?
                }
            };
        }
        let mut text_tokens = Vec::new();
        for &col in &text {
            let cell = table.cell(rec, col);
            if cols.pretokenized {
                text_tokens.extend(cell.split_whitespace().map(str::to_string));
            } else {
                text_tokens.extend(tokenize(cell));
            }
        }
        let uid = UserId::from(table.cell(rec, user));
        if uid.as_str().is_empty() {
            return Err(table.unparsable(row, &table.headers[user], ""));
        }
        if out.contains_key(&uid) {
            return Err(IoError::DuplicateParticipant { path: table.path.clone(), row: row + 1, user: uid.0 });
        }
        out.insert(uid.clone(), Participant { user_id: uid, demographics, text_tokens });
    }
    Ok(out)
}

pub fn load_choices(path: &Path, schema: &Schema) -> Result<Vec<ChoiceRecord>, IoError> {
    parse_choices(&Table::open(path, schema.delimiter)?, schema)
}

/// Parses choices from any reader; `name` is only used in error messages.
pub fn read_choices<R: Read>(name: &Path, reader: R, schema: &Schema) -> Result<Vec<ChoiceRecord>, IoError> {
    parse_choices(&Table::read(name, reader, schema.delimiter)?, schema)
}

pub fn load_participants(path: &Path, schema: &Schema) -> Result<BTreeMap<UserId, Participant>, IoError> {
    parse_participants(&Table::open(path, schema.delimiter)?, schema)
}

pub fn read_participants<R: Read>(
    name: &Path,
    reader: R,
    schema: &Schema,
) -> Result<BTreeMap<UserId, Participant>, IoError> {
    parse_participants(&Table::read(name, reader, schema.delimiter)?, schema)
}

pub fn load_dataset(choices: &Path, participants: Option<&Path>, schema: &Schema) -> Result<Dataset, IoError> {
    let records = load_choices(choices, schema)?;
    let people = match participants {
        Some(p) => load_participants(p, schema)?,
        None => BTreeMap::new(),
    };
    log::info!("loaded {} choice records, {} participants", records.len(), people.len());
    Ok(Dataset::new(people, records)?)
}

/// Files named by a data directory: `choices.csv` and optional
/// `participants.csv`.
pub fn load_data_dir(dir: &Path, schema: &Schema) -> Result<Dataset, IoError> {
    let participants = dir.join("participants.csv");
    load_dataset(&dir.join("choices.csv"), participants.exists().then_some(participants.as_path()), schema)
}

fn recipient_name(r: Recipient) -> &'static str {
    match r {
        Recipient::Own => "self",
        Recipient::Other => "other",
    }
}

fn write_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Canonical choices table. Numbers use the shortest exact decimal form.
pub fn write_choices<W: Write>(writer: W, records: &[ChoiceRecord]) -> std::io::Result<()> {
    let s = canonical_schema();
    let c = &s.choices;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record([&c.user_id, &c.outcome1, &c.prob1, &c.recipient1, &c.outcome2, &c.prob2, &c.recipient2, &c.choice])
        .map_err(write_err)?;
    for r in records {
        let (a, b) = (&r.scenario.option1, &r.scenario.option2);
        w.write_record([
            r.user_id.as_str(),
            &a.outcome.to_string(),
            &a.prob.to_string(),
            recipient_name(a.recipient),
            &b.outcome.to_string(),
            &b.prob.to_string(),
            recipient_name(b.recipient),
            if r.choice == Choice::Option1 { "1" } else { "2" },
        ])
        .map_err(write_err)?;
    }
    w.flush()
}

/// Canonical participants table: coded demographics and space-joined tokens.
pub fn write_participants<'a, W: Write>(
    writer: W,
    participants: impl IntoIterator<Item = &'a Participant>,
) -> std::io::Result<()> {
    let s = canonical_schema();
    let cols = s.participants.expect("canonical schema has participants");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec![cols.user_id.clone()];
    header.extend(cols.demographics.iter().cloned());
    header.extend(cols.text.iter().cloned());
    w.write_record(&header).map_err(write_err)?;
    for p in participants {
        let mut row = vec![p.user_id.0.clone()];
        row.extend(p.demographics.iter().map(|v| v.to_string()));
        row.push(p.text_tokens.join(" "));
        w.write_record(&row).map_err(write_err)?;
    }
    w.flush()
}

/// Writes `choices.csv` (and `participants.csv` when present) into `dir`,
/// plus the `schema.toml` that reads them back.
pub fn write_canonical(dir: &Path, dataset: &Dataset) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let path = dir.join("schema.toml");
    std::fs::write(&path, canonical_schema().to_toml()).map_err(|e| IoError::io(&path, e))?;
    let path = dir.join("choices.csv");
    let f = std::fs::File::create(&path).map_err(|e| IoError::io(&path, e))?;
    write_choices(std::io::BufWriter::new(f), dataset.records()).map_err(|e| IoError::io(&path, e))?;
    if dataset.has_participants() {
        let path = dir.join("participants.csv");
        let f = std::fs::File::create(&path).map_err(|e| IoError::io(&path, e))?;
        write_participants(std::io::BufWriter::new(f), dataset.participants().values())
            .map_err(|e| IoError::io(&path, e))?;
    }
    Ok(())
}
