//! Acceptance suite. Prints one `PASS`, `FAIL` or `SKIPPED` line per
//! criterion and exits non-zero if any criterion fails.
//!
//! Criteria 6 to 9 need the published Experiment 1 data: point
//! `CHOICELAB_DATA` at a directory holding `choices.csv` (and
//! `participants.csv` when available). Word vectors are read from
//! `CHOICELAB_VECTORS`, else `$CHOICELAB_DATA/vectors.txt` when present.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use choicelab::checkpoint::Checkpoint;
use choicelab::experiment::{load_data, prepare, run_models, ExperimentConfig, SimulateSection};
use choicelab::gradcheck::{check_all, GradCheckConfig, TOLERANCE};
use choicelab::parallel::fit_behavioral_par;
use choicelab_core::data::{encode_features, split_indices, SplitSpec};
use choicelab_core::harness::{evaluate, simulate_agents, AgentSpec, Metrics, MetricsReport, ModelKind, ReportOutcome};
use choicelab_core::math::{mean, pearson};
use choicelab_core::nnkit::{Classifier, Standardizer};
use choicelab_core::repr::{user_text_vector, Architecture, FusionInput, FusionModel, WordVectorTable};
use choicelab_core::sampler::{ess, hmc_sample, r_hat, FitConfig, FitMethod, HmcConfig, LogDensity};
use choicelab_core::{ChoiceRecord, GambleOption, GambleScenario, Recipient, UserId};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skipped,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Outcome {
    Outcome { status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn skipped(detail: &str) -> Outcome {
    Outcome { status: Status::Skipped, detail: detail.into() }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// 1

fn gradient_fidelity() -> Outcome {
    let cfg = GradCheckConfig::default();
    let summaries = check_all(&cfg, &Architecture::default());
    let ok = summaries.iter().all(|s| s.passed() && s.instances == 10);
    let parts: Vec<String> = summaries
        .iter()
        .map(|s| format!("{} {:.2e} ({} coords, {} kinks skipped)", s.model, s.max_rel_error, s.checked, s.kinks))
        .collect();
    verdict(ok, format!("max relative error per model vs {TOLERANCE:e}: {}", parts.join("; ")))
}

// 2

/// N(mu, D R D) with R an AR(1) correlation matrix; the precision is
/// tridiagonal in closed form.
struct CorrelatedGaussian {
    mu: Vec<f64>,
    sd: Vec<f64>,
    rho: f64,
}

impl CorrelatedGaussian {
    fn precision_times(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let c = 1.0 / (1.0 - self.rho * self.rho);
        (0..n)
            .map(|i| {
                let diag = if i == 0 || i == n - 1 { 1.0 } else { 1.0 + self.rho * self.rho };
                let mut v = diag * z[i];
                if i > 0 {
                    v -= self.rho * z[i - 1];
                }
                if i + 1 < n {
                    v -= self.rho * z[i + 1];
                }
                c * v
            })
            .collect()
    }
}

impl LogDensity for CorrelatedGaussian {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(&self.mu).zip(&self.sd).map(|((x, m), s)| (x - m) / s).collect();
        let pz = self.precision_times(&z);
        for ((g, p), s) in grad.iter_mut().zip(&pz).zip(&self.sd) {
            *g = -p / s;
        }
        -0.5 * z.iter().zip(&pz).map(|(a, b)| a * b).sum::<f64>()
    }
}

fn sampler_calibration() -> Outcome {
    let target = CorrelatedGaussian {
        mu: (0..10).map(|i| i as f64 * 0.5 - 2.0).collect(),
        sd: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
        rho: 0.6,
    };
    let cfg = HmcConfig { chains: 4, iterations: 5000, warmup: 1000, seed: 17, ..HmcConfig::default() };
    let start = Instant::now();
    let set = match hmc_sample(&target, &[0.0; 10], &cfg) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("sampler error: {e}")),
    };
    let elapsed = start.elapsed();
    let draws = (set.n_chains() * set.n_draws()) as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_rhat: f64 = 0.0;
    let mut min_ess = f64::INFINITY;
    for k in 0..10 {
        let series = set.param_series(k);
        let all: Vec<f64> = series.iter().flatten().copied().collect();
        worst_mean = worst_mean.max((mean(&all) - target.mu[k]).abs());
        worst_rhat = worst_rhat.max(r_hat(&series).unwrap_or(f64::INFINITY));
        min_ess = min_ess.min(ess(&series).unwrap_or(0.0));
    }
    let ok = worst_mean < 0.05 && worst_rhat < 1.01 && min_ess > draws / 100.0 && elapsed < Duration::from_secs(60);
    verdict(
        ok,
        format!(
            "max |mean error| {worst_mean:.4} (< 0.05), max R-hat {worst_rhat:.4} (< 1.01), min ESS {min_ess:.0} of {draws:.0} draws (> {:.0}), {:.1} s (< 60 s)",
            draws / 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

// 3

fn parameter_recovery() -> Outcome {
    let spec = AgentSpec::default();
    let start = Instant::now();
    let (dataset, truth) = simulate_agents(&spec).expect("default spec is valid");
    let cfg = FitConfig { method: FitMethod::Map, ..FitConfig::default() };
    let fit = match fit_behavioral_par(dataset.records(), &cfg) {
        Ok(f) => f,
        Err(e) => return verdict(false, format!("fit failed: {e}")),
    };
    let elapsed = start.elapsed();
    let fitted: BTreeMap<&UserId, [f64; 4]> = fit.user_ids.iter().zip(&fit.params).map(|(u, p)| (u, p.as_array())).collect();
    let names = ["alpha_gain", "alpha_loss", "beta_self", "beta_other"];
    let mut rs = [0.0; 4];
    for (k, r) in rs.iter_mut().enumerate() {
        let t: Vec<f64> = truth.iter().map(|(_, p)| p.as_array()[k]).collect();
        let f: Vec<f64> = truth.iter().map(|(u, _)| fitted[u][k]).collect();
        *r = pearson(&t, &f);
    }
    let ok = rs.iter().all(|r| *r >= 0.8) && elapsed < Duration::from_secs(120);
    let parts: Vec<String> = names.iter().zip(&rs).map(|(n, r)| format!("{n} r={r:.3}")).collect();
    verdict(
        ok,
        format!(
            "{} agents x {} gambles, MAP: {} (>= 0.8), {:.1} s (< 120 s)",
            spec.n_users,
            spec.trials_per_user,
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

// 4

fn runner() -> TestRunner {
    let config = PropConfig { cases: 256, failure_persistence: None, ..PropConfig::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn scenario() -> impl Strategy<Value = GambleScenario> {
    let recipient = prop_oneof![Just(Recipient::Own), Just(Recipient::Other)];
    let option = (-20.0..20.0f64, 0.0..=1.0f64, recipient).prop_map(|(v, p, r)| GambleOption::new(v, p, r).unwrap());
    (option.clone(), option).prop_map(|(a, b)| GambleScenario::new(a, b))
}

fn embedding_row_isolation() -> Result<(), String> {
    let strategy = (2usize..8, prop::collection::vec((scenario(), any::<bool>(), any::<prop::sample::Index>()), 1..8), any::<u64>());
    runner()
        .run(&strategy, |(n_users, samples, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = FusionModel::beh2vec(n_users, &Architecture::small(4), Standardizer::identity(6), &mut rng).unwrap();
            let dim = m.source().dim();
            for (s, y, user) in samples {
                let x = FusionInput { user: user.index(n_users), features: encode_features(&s) };
                let mut g = m.zero_grads();
                m.accumulate(&x, y, &mut g);
                let flat = m.flatten_grads(&g);
                for u in (0..n_users).filter(|&u| u != x.user) {
                    prop_assert!(flat[u * dim..(u + 1) * dim].iter().all(|&v| v == 0.0));
                }
            }
            Ok(())
        })
        .map_err(|e| format!("embedding-row isolation: {e}"))
}

fn centroid_permutation_invariance() -> Result<(), String> {
    let strategy = (
        prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 1..10),
        prop::collection::vec(any::<prop::sample::Index>(), 1..25),
        any::<u64>(),
    );
    runner()
        .run(&strategy, |(vocab, picks, seed)| {
            use rand::seq::SliceRandom;
            let mut table = WordVectorTable::new(4);
            for (i, v) in vocab.iter().enumerate() {
                table.insert(&format!("w{i}"), v.clone()).unwrap();
            }
            let tokens: Vec<String> = picks.iter().map(|p| format!("w{}", p.index(vocab.len()))).collect();
            let mut shuffled = tokens.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(user_text_vector(&table, &tokens).unwrap(), user_text_vector(&table, &shuffled).unwrap());
            Ok(())
        })
        .map_err(|e| format!("centroid permutation invariance: {e}"))
}

fn accuracy_bookkeeping() -> Result<(), String> {
    let strategy = prop::collection::vec((scenario(), any::<bool>(), 0.0..=1.0f64), 1..150);
    runner()
        .run(&strategy, |rows| {
            let records: Vec<ChoiceRecord> = rows
                .iter()
                .map(|(s, c, _)| ChoiceRecord { user_id: UserId("u".into()), scenario: *s, choice: choicelab_core::data::Choice::from_label(*c) })
                .collect();
            let probs: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let m = evaluate(&probs, &records).unwrap();
            let n = m.all().total;
            prop_assert_eq!(n, records.len());
            prop_assert_eq!(m.all().correct, m.gains.correct + m.losses.correct);
            let lhs = m.accuracy_all() * n as f64;
            let rhs = m.accuracy_gains() * m.gains.total as f64 + m.accuracy_losses() * m.losses.total as f64;
            prop_assert!((lhs - rhs).abs() < 1e-9);
            Ok(())
        })
        .map_err(|e| format!("accuracy bookkeeping: {e}"))
}

fn split_determinism() -> Result<(), String> {
    let strategy = (5usize..2000, 0.05..0.95f64, any::<u64>());
    runner()
        .run(&strategy, |(n, f, seed)| {
            let spec = SplitSpec { train_fraction: f, test_folds: 2, seed };
            let a = split_indices(n, &spec).unwrap();
            prop_assert_eq!(&a, &split_indices(n, &spec).unwrap());
            prop_assert!((a.0.len() as f64 - f * n as f64).abs() <= 0.5 + 1e-9);
            let mut all: Vec<usize> = a.0.iter().chain(&a.1).chain(&a.2).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            Ok(())
        })
        .map_err(|e| format!("split determinism: {e}"))
}

fn invariant_suites() -> Outcome {
    let results = [embedding_row_isolation(), centroid_permutation_invariance(), accuracy_bookkeeping(), split_determinism()];
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if failures.is_empty() {
        verdict(true, "embedding-row isolation, centroid permutation invariance, accuracy bookkeeping, split determinism: 4/4 suites, 256 cases each".into())
    } else {
        verdict(false, failures.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "))
    }
}

// 5

fn all_kinds() -> Vec<ModelKind> {
    vec![
        ModelKind::Rf,
        ModelKind::Mlp,
        ModelKind::Beh2vecId,
        ModelKind::Beh2vecDemo,
        ModelKind::Beh2vecText,
        ModelKind::BehavioralHmc,
        ModelKind::BehavioralMap,
    ]
}

fn null_model() -> Outcome {
    let mut c = ExperimentConfig::new(11, &all_kinds());
    c.data.simulate = Some(SimulateSection { n_users: 200, trials_per_user: 64, seed: 11, side_info: true, word_dim: 300 });
    c.permute_labels = true;
    c.sampler.iterations = 600;
    c.sampler.warmup = 300;
    let reports = match load_data(&c).and_then(|d| prepare(&d, &c)).and_then(|p| run_models(&p, &c)) {
        Ok(runs) => runs.into_iter().map(|r| r.report).collect::<Vec<_>>(),
        Err(e) => return verdict(false, format!("run failed: {e}")),
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &reports {
        match r.metrics() {
            Some(m) => {
                let a = m.accuracy_all();
                ok &= within(a, 0.5, 0.03);
                parts.push(format!("{} {a:.3}", r.label()));
            }
            None => {
                ok = false;
                parts.push(format!("{} not run", r.label()));
            }
        }
    }
    let seen: Vec<ModelKind> = all_kinds().into_iter().filter(|k| reports.iter().any(|r| r.model == *k)).collect();
    ok &= seen.len() == 7;
    verdict(ok, format!("accuracy on permuted labels (0.5 +/- 0.03): {}", parts.join(", ")))
}

// 6 to 9

struct RealRun {
    reports: Vec<MetricsReport>,
    hmc_rhats: Vec<(String, f64)>,
}

fn real_data_dir() -> Option<PathBuf> {
    std::env::var_os("CHOICELAB_DATA").map(PathBuf::from).filter(|p| p.join("choices.csv").exists())
}

fn real_run(dir: &PathBuf) -> Result<RealRun, String> {
    let mut c = ExperimentConfig::new(0, &all_kinds());
    c.data.dir = Some(dir.clone());
    c.data.vectors = std::env::var_os("CHOICELAB_VECTORS")
        .map(PathBuf::from)
        .or_else(|| Some(dir.join("vectors.txt")).filter(|p| p.exists()));
    c.sampler.chains = 4;
    c.sampler.iterations = 7000;
    c.sampler.warmup = 3500;
    let data = load_data(&c).map_err(|e| e.to_string())?;
    let prep = prepare(&data, &c).map_err(|e| e.to_string())?;
    let runs = run_models(&prep, &c).map_err(|e| e.to_string())?;
    let mut hmc_rhats = Vec::new();
    for r in &runs {
        for (_, ck) in &r.checkpoints {
            if let Checkpoint::Behavioral(fit) = ck {
                if fit.method == FitMethod::Hmc {
                    if let Some(d) = &fit.diagnostics {
                        hmc_rhats = d.params.iter().map(|p| (p.name.clone(), p.r_hat)).collect();
                    }
                }
            }
        }
    }
    Ok(RealRun { reports: runs.into_iter().map(|r| r.report).collect(), hmc_rhats })
}

fn find<'a>(run: &'a RealRun, kind: ModelKind, variant: &str) -> Option<&'a MetricsReport> {
    run.reports.iter().find(|r| r.model == kind && r.variant == variant)
}

fn metrics<'a>(run: &'a RealRun, kind: ModelKind, variant: &str) -> Option<&'a Metrics> {
    find(run, kind, variant).and_then(MetricsReport::metrics)
}

fn scenario_only(run: &RealRun) -> Outcome {
    let mlp = metrics(run, ModelKind::Mlp, "G").map(Metrics::accuracy_all);
    let rf = metrics(run, ModelKind::Rf, "G").map(Metrics::accuracy_all);
    match (mlp, rf) {
        (Some(m), Some(r)) => verdict(
            within(m, 0.701, 0.02) && within(r, 0.700, 0.03),
            format!("MLP(G) {m:.4} (0.701 +/- 0.02), RF(G) {r:.4} (0.700 +/- 0.03)"),
        ),
        _ => verdict(false, "G-only baseline rows missing".into()),
    }
}

fn representation_models(run: &RealRun) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, target, optional) in
        [(ModelKind::Beh2vecId, 0.734, false), (ModelKind::Beh2vecDemo, 0.735, true), (ModelKind::Beh2vecText, 0.757, true)]
    {
        match find(run, kind, "") {
            Some(r) => match &r.outcome {
                ReportOutcome::Done { metrics, .. } => {
                    let a = metrics.accuracy_all();
                    ok &= within(a, target, 0.02);
                    parts.push(format!("{} {a:.4} ({target} +/- 0.02)", kind.name()));
                }
                ReportOutcome::Skipped { reason } => {
                    ok &= optional;
                    parts.push(format!("{} SKIPPED ({reason})", kind.name()));
                }
            },
            None => {
                ok = false;
                parts.push(format!("{} missing", kind.name()));
            }
        }
    }
    verdict(ok, parts.join(", "))
}

fn orderings(run: &RealRun) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, variant) in [(ModelKind::Beh2vecId, "G+ID"), (ModelKind::Beh2vecDemo, "G+demo"), (ModelKind::Beh2vecText, "G+text")] {
        match (metrics(run, kind, ""), metrics(run, ModelKind::Mlp, variant)) {
            (Some(b), Some(m)) => {
                let holds = b.accuracy_all() > m.accuracy_all();
                ok &= holds;
                parts.push(format!("{} {:.4} > MLP({variant}) {:.4}: {holds}", kind.name(), b.accuracy_all(), m.accuracy_all()));
            }
            _ => parts.push(format!("{variant} not available")),
        }
    }
    let rf_g = metrics(run, ModelKind::Rf, "G").map(Metrics::accuracy_all);
    let rf_id = find(run, ModelKind::Rf, "G+ID");
    match (rf_g, rf_id.map(|r| &r.outcome)) {
        (Some(g), Some(ReportOutcome::Done { metrics, train_accuracy, .. })) => {
            let id = metrics.accuracy_all();
            let train = train_accuracy.unwrap_or(0.0);
            ok &= id < g && train > 0.95;
            parts.push(format!("RF(G+ID) {id:.4} < RF(G) {g:.4}: {}; RF(G+ID) train accuracy {train:.4} (> 0.95)", id < g));
        }
        _ => {
            ok = false;
            parts.push("RF rows missing".into());
        }
    }
    verdict(ok, parts.join("; "))
}

fn behavioral(run: &RealRun) -> Outcome {
    let Some(m) = metrics(run, ModelKind::BehavioralHmc, "") else {
        return verdict(false, "behavioral_hmc row missing".into());
    };
    let (all, gains, losses) = (m.accuracy_all(), m.accuracy_gains(), m.accuracy_losses());
    let mut ok = within(all, 0.749, 0.02) && within(gains, 0.770, 0.02) && within(losses, 0.726, 0.02);
    let rhat_ok = !run.hmc_rhats.is_empty() && run.hmc_rhats.iter().all(|(_, r)| *r > 0.99 && *r < 1.01);
    ok &= rhat_ok;
    let worst = run.hmc_rhats.iter().map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max);
    let mut detail = format!(
        "all {all:.4} (0.749), gains {gains:.4} (0.770), losses {losses:.4} (0.726), tolerance 0.02; R-hat within (0.99, 1.01): {rhat_ok} (max |R-hat - 1| {worst:.4})"
    );
    match metrics(run, ModelKind::Beh2vecText, "") {
        Some(t) => {
            let holds = t.accuracy_losses() >= losses;
            ok &= holds;
            detail.push_str(&format!("; beh2vec_text losses {:.4} >= {losses:.4}: {holds}", t.accuracy_losses()));
        }
        None => detail.push_str("; text model unavailable, loss ordering SKIPPED"),
    }
    verdict(ok, detail)
}

fn main() {
    // Cargo passes libtest flags to custom harnesses; `--list` must not run anything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();

    let mut lines: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let line = (n, name, out, start.elapsed());
        println!("{}", format_line(&line));
        lines.push(line);
    };

    println!("property suite (no external data)");
    let suite = Instant::now();
    timed(1, "gradient fidelity", &gradient_fidelity);
    timed(2, "sampler calibration", &sampler_calibration);
    timed(3, "parameter recovery", &parameter_recovery);
    timed(4, "invariant suites", &invariant_suites);
    timed(5, "null-model sanity", &null_model);
    let suite_time = suite.elapsed();
    let suite_ok = suite_time < Duration::from_secs(300);
    println!(
        "{} property suite runtime: {:.1} s (< 300 s)",
        if suite_ok { "PASS" } else { "FAIL" },
        suite_time.as_secs_f64()
    );

    println!("published-data reproduction");
    match real_data_dir() {
        None => {
            let reason = "CHOICELAB_DATA not set or has no choices.csv";
            timed(6, "scenario-only baselines", &|| skipped(reason));
            timed(7, "representation models", &|| skipped(reason));
            timed(8, "ordering claims", &|| skipped(reason));
            timed(9, "behavioral model", &|| skipped(reason));
        }
        Some(dir) => match real_run(&dir) {
            Ok(run) => {
                timed(6, "scenario-only baselines", &|| scenario_only(&run));
                timed(7, "representation models", &|| representation_models(&run));
                timed(8, "ordering claims", &|| orderings(&run));
                timed(9, "behavioral model", &|| behavioral(&run));
            }
            Err(e) => {
                for (n, name) in [(6, "scenario-only baselines"), (7, "representation models"), (8, "ordering claims"), (9, "behavioral model")] {
                    timed(n, name, &|| verdict(false, format!("run on {} failed: {e}", dir.display())));
                }
            }
        },
    }
    timed(10, "synthetic-data mixing", &|| skipped("NOT REPRODUCED: out of scope"));

    let failed = !suite_ok || lines.iter().any(|l| l.2.status == Status::Fail);
    let count = |s: Status| lines.iter().filter(|l| l.2.status == s).count();
    println!(
        "acceptance: {} passed, {} failed, {} skipped",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Skipped)
    );
    if failed {
        std::process::exit(1);
    }
}

fn format_line((n, name, out, t): &(usize, &str, Outcome, Duration)) -> String {
    let tag = match out.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skipped => "SKIPPED",
    };
    format!("{tag} criterion {n} ({name}, {:.1} s): {}", t.as_secs_f64(), out.detail)
}
