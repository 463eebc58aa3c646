//! Metrics tables (CSV and markdown), per-user parameter tables and
//! sampler diagnostics. Output is LF-terminated and byte-stable: rows are
//! sorted by model kind then variant, floats use fixed precision.

use std::fmt::Write as _;
use std::path::Path;

use choicelab_core::harness::{sort_reports, Counts, Metrics, MetricsReport, ModelKind, ReportOutcome};
use choicelab_core::sampler::{BehavioralFit, ChainDiagnostics};

use crate::IoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "markdown" | "md" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

pub const CSV_HEADER: &str = "model,variant,status,accuracy_all,accuracy_gains,accuracy_losses,\
correct_gains,total_gains,correct_losses,total_losses,fold_accuracies,fold_counts,train_accuracy,seed,config_hash,note";

fn acc(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.4}")
    }
}

fn fold_counts(folds: &[Metrics]) -> String {
    folds
        .iter()
        .map(|m| format!("{}/{} {}/{}", m.gains.correct, m.gains.total, m.losses.correct, m.losses.total))
        .collect::<Vec<_>>()
        .join(";")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sorted(reports: &[MetricsReport]) -> Vec<MetricsReport> {
    let mut r = reports.to_vec();
    sort_reports(&mut r);
    r
}

pub fn render_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in sorted(reports) {
        let fields: Vec<String> = match &r.outcome {
            ReportOutcome::Done { metrics, folds, train_accuracy } => vec![
                r.model.name().into(),
                r.variant.clone(),
                "ok".into(),
                acc(metrics.accuracy_all()),
                acc(metrics.accuracy_gains()),
                acc(metrics.accuracy_losses()),
                metrics.gains.correct.to_string(),
                metrics.gains.total.to_string(),
                metrics.losses.correct.to_string(),
                metrics.losses.total.to_string(),
                folds.iter().map(|m| acc(m.accuracy_all())).collect::<Vec<_>>().join(";"),
                fold_counts(folds),
                train_accuracy.map(acc).unwrap_or_default(),
                r.seed.to_string(),
                r.config_hash.clone(),
                String::new(),
            ],
            ReportOutcome::Skipped { reason } => {
                let mut f = vec![r.model.name().into(), r.variant.clone(), "SKIPPED".into()];
                f.extend(std::iter::repeat_n(String::new(), 10));
                f.extend([r.seed.to_string(), r.config_hash.clone(), reason.clone()]);
                f
            }
        };
        let line: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn render_markdown(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    out.push_str("| Model | Inputs | All | Gains | Losses | N (gains/losses) | Fold accuracies | Train accuracy |\n");
    out.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in sorted(reports) {
        let variant = if r.variant.is_empty() { "-" } else { r.variant.as_str() };
        match &r.outcome {
            ReportOutcome::Done { metrics, folds, train_accuracy } => {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {}/{} | {} | {} |",
                    r.model.name(),
                    variant,
                    acc(metrics.accuracy_all()),
                    acc(metrics.accuracy_gains()),
                    acc(metrics.accuracy_losses()),
                    metrics.gains.total,
                    metrics.losses.total,
                    folds.iter().map(|m| acc(m.accuracy_all())).collect::<Vec<_>>().join(", "),
                    train_accuracy.map(acc).unwrap_or_else(|| "-".into()),
                );
            }
            ReportOutcome::Skipped { reason } => {
                let reason = reason.replace('|', "\\|");
                let _ = writeln!(out, "| {} | {} | SKIPPED: {reason} | | | | | |", r.model.name(), variant);
            }
        }
    }
    out
}

pub fn render(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(reports),
        ReportFormat::Markdown => render_markdown(reports),
    }
}

pub fn emit_report(reports: &[MetricsReport], format: ReportFormat, path: &Path) -> Result<(), IoError> {
    if reports.is_empty() {
        return Err(IoError::Schema("no reports to emit".into()));
    }
    std::fs::write(path, render(reports, format)).map_err(|e| IoError::io(path, e))
}

fn parse_counts(s: &str) -> Option<Counts> {
    let (c, t) = s.split_once('/')?;
    Some(Counts { correct: c.parse().ok()?, total: t.parse().ok()? })
}

/// Reads a CSV written by [`render_csv`]. Metrics are rebuilt from the
/// integer counts, so nothing is lost to rounding.
pub fn read_report_csv(path: &Path, text: &str) -> Result<Vec<MetricsReport>, IoError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| IoError::Csv { path: path.into(), message: e.to_string() })?.clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::MissingColumn {
            path: path.into(),
            column: CSV_HEADER.into(),
            available: headers.iter().map(String::from).collect(),
        });
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| IoError::Csv { path: path.into(), message: e.to_string() })?;
        let bad = |col: usize| IoError::UnparsableValue {
            path: path.into(),
            row: row + 1,
            column: expected[col].into(),
            value: rec[col].into(),
        };
        let model = ModelKind::from_name(&rec[0]).ok_or_else(|| bad(0))?;
        let seed: u64 = rec[13].parse().map_err(|_| bad(13))?;
        let mut report = match &rec[2] {
            "ok" => {
                let n = |col: usize| rec[col].parse::<usize>().map_err(|_| bad(col));
                let metrics = Metrics {
                    gains: Counts { correct: n(6)?, total: n(7)? },
                    losses: Counts { correct: n(8)?, total: n(9)? },
                };
                let folds = if rec[11].is_empty() {
                    vec![metrics]
                } else {
                    rec[11]
                        .split(';')
                        .map(|f| {
                            let (g, l) = f.split_once(' ')?;
                            Some(Metrics { gains: parse_counts(g)?, losses: parse_counts(l)? })
                        })
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad(11))?
                };
                let train = if rec[12].is_empty() { None } else { Some(rec[12].parse().map_err(|_| bad(12))?) };
                let mut r = MetricsReport::done(model, &rec[1], folds, train);
                if let ReportOutcome::Done { metrics: m, .. } = &mut r.outcome {
                    *m = metrics;
                }
                r
            }
            "SKIPPED" => MetricsReport::skipped(model, &rec[1], &rec[15]),
            _ => return Err(bad(2)),
        };
        report.seed = seed;
        report.config_hash = rec[14].to_string();
        out.push(report);
    }
    Ok(out)
}

pub fn load_report_csv(path: &Path) -> Result<Vec<MetricsReport>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    read_report_csv(path, &text)
}

/// `user_id,alpha_gain,alpha_loss,beta_self,beta_other`, with the
/// population row first under the id `*population*`.
pub fn render_params_csv(fit: &BehavioralFit) -> String {
    let mut out = String::from("user_id,alpha_gain,alpha_loss,beta_self,beta_other\n");
    let mut row = |id: &str, v: [f64; 4]| {
        let _ = writeln!(out, "{},{},{},{},{}", csv_field(id), v[0], v[1], v[2], v[3]);
    };
    row("*population*", fit.population.as_array());
    for (id, p) in fit.user_ids.iter().zip(&fit.params) {
        row(id.as_str(), p.as_array());
    }
    out
}

/// `parameter,r_hat,ess,divergences`; divergences are the post-warmup total
/// over all chains and repeat on every row.
pub fn render_diagnostics_csv(diag: &ChainDiagnostics) -> String {
    let mut out = String::from("parameter,r_hat,ess,divergences\n");
    for p in &diag.params {
        let _ = writeln!(out, "{},{:.6},{:.1},{}", csv_field(&p.name), p.r_hat, p.ess, diag.divergences);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(g: (usize, usize), l: (usize, usize)) -> Metrics {
        Metrics { gains: Counts { correct: g.0, total: g.1 }, losses: Counts { correct: l.0, total: l.1 } }
    }

    fn sample() -> Vec<MetricsReport> {
        let mut a = MetricsReport::done(ModelKind::Mlp, "G", vec![m((7, 10), (3, 5)), m((6, 10), (4, 5))], Some(0.8));
        a.seed = 3;
        a.config_hash = "abc".into();
        let b = MetricsReport::skipped(ModelKind::Beh2vecText, "", "no text columns, in data");
        let c = MetricsReport::done(ModelKind::Rf, "G+ID", vec![m((1, 2), (1, 2))], None);
        vec![a, b, c]
    }

    #[test]
    fn single_report_has_header_and_row() {
        let csv = render_csv(&sample()[2..]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }

    #[test]
    fn order_is_canonical() {
        let mut r = sample();
        let a = render_csv(&r);
        r.reverse();
        assert_eq!(render_csv(&r), a);
        let models: Vec<&str> = a.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(models, ["rf", "mlp", "beh2vec_text"]);
        assert_eq!(render_markdown(&r), render_markdown(&sample()));
    }

    #[test]
    fn csv_reads_back() {
        let r = sample();
        let back = read_report_csv(Path::new("r.csv"), &render_csv(&r)).unwrap();
        let mut want = r.clone();
        sort_reports(&mut want);
        assert_eq!(back, want);
    }

    #[test]
    fn skipped_rows_are_explicit() {
        let md = render_markdown(&sample());
        assert!(md.contains("| beh2vec_text | - | SKIPPED: no text columns, in data |"));
        assert!(render_csv(&sample()).contains(",SKIPPED,"));
    }
}
