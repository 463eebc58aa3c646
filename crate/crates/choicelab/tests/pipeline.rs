use std::fs;

use choicelab::experiment::{load_data, run_experiment_in, ExperimentConfig, SimulateSection};
use choicelab::ingest::{load_data_dir, write_canonical};
use choicelab::report::{load_report_csv, render_csv};
use choicelab::schema::Schema;
use choicelab_core::harness::{simulate_agents, AgentSpec, ModelKind, ReportOutcome};

fn small_config(seed: u64, models: &[ModelKind]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(seed, models);
    c.data.simulate = Some(SimulateSection {
        n_users: 12,
        trials_per_user: 20,
        seed: 5,
        side_info: true,
        word_dim: 8,
    });
    c.train.arch = "small".into();
    c.train.max_epochs = 4;
    c.forest.n_trees = 5;
    c.sampler.chains = 2;
    c.sampler.iterations = 60;
    c.sampler.warmup = 30;
    c
}

#[test]
fn canonical_files_reload_to_the_same_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config(1, &[ModelKind::Rf]);
    c.data.simulate.as_mut().unwrap().n_users = 7;
    let data = load_data(&c).unwrap();
    write_canonical(tmp.path(), &data.dataset).unwrap();
    let schema = Schema::resolve_in(None, Some(tmp.path())).unwrap();
    let back = load_data_dir(tmp.path(), &schema).unwrap();
    assert_eq!(back, data.dataset);

    let again = tmp.path().join("again");
    write_canonical(&again, &back).unwrap();
    for f in ["choices.csv", "participants.csv", "schema.toml"] {
        assert_eq!(fs::read(tmp.path().join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn identical_configs_give_byte_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let kinds = [ModelKind::Rf, ModelKind::Mlp, ModelKind::Beh2vecText, ModelKind::BehavioralMap, ModelKind::BehavioralHmc];
    let c = small_config(9, &kinds);
    let a = run_experiment_in(&c, &tmp.path().join("a")).unwrap();
    let b = run_experiment_in(&c, &tmp.path().join("b")).unwrap();
    assert_eq!(a.reports, b.reports);
    for f in ["report.csv", "report.md", "config.toml", "checkpoints/rf-G.ckpt", "behavioral/behavioral_hmc-diagnostics.csv"] {
        let x = fs::read(a.dir.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert_eq!(x, fs::read(b.dir.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.dir.join("report.csv")).unwrap();
    assert!(!text.contains('\r'));
    assert_eq!(render_csv(&load_report_csv(&a.dir.join("report.csv")).unwrap()), text);
}

#[test]
fn failed_run_leaves_no_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config(2, &[ModelKind::Rf]);
    c.data.simulate = None;
    c.data.choices = Some(tmp.path().join("missing.csv"));
    let dir = tmp.path().join("run");
    assert!(run_experiment_in(&c, &dir).is_err());
    assert!(!dir.exists());
}

#[test]
fn existing_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let c = small_config(2, &[ModelKind::Rf]);
    let e = run_experiment_in(&c, tmp.path()).unwrap_err();
    assert!(e.is_validation());
    assert!(tmp.path().exists());
}

#[test]
fn missing_side_information_gives_skipped_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = small_config(3, &[ModelKind::Rf, ModelKind::Beh2vecDemo, ModelKind::Beh2vecText]);
    c.data.simulate.as_mut().unwrap().side_info = false;
    let out = run_experiment_in(&c, &tmp.path().join("r")).unwrap();
    let skipped: Vec<String> = out
        .reports
        .iter()
        .filter(|r| matches!(r.outcome, ReportOutcome::Skipped { .. }))
        .map(|r| r.label())
        .collect();
    assert_eq!(skipped.len(), 4, "{skipped:?}");
    assert!(skipped.iter().any(|l| l.contains("beh2vec_demo")));
    assert!(skipped.iter().any(|l| l.contains("beh2vec_text")));
    let md = fs::read_to_string(out.dir.join("report.md")).unwrap();
    assert_eq!(md.matches("SKIPPED").count(), 4);
}

#[test]
fn simulated_data_is_seeded() {
    let spec = AgentSpec { n_users: 5, trials_per_user: 10, seed: 77, ..AgentSpec::default() };
    assert_eq!(simulate_agents(&spec).unwrap(), simulate_agents(&spec).unwrap());
}
