use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use choicelab::checkpoint;
use choicelab::experiment::{self, ExperimentConfig, ExperimentError, LoadedData, SimulateSection};
use choicelab::gradcheck::{check_all, GradCheckConfig, TOLERANCE};
use choicelab::ingest;
use choicelab::report::{self, ReportFormat};
use choicelab::schema::Schema;
use choicelab::vectors;
use choicelab::IoError;
use choicelab_core::harness::{evaluate, simulate_agents, AgentSpec, MetricsReport, ModelKind};
use choicelab_core::repr::{user_centroids, Architecture};
use choicelab_core::ChoiceRecord;

#[derive(Parser)]
#[command(name = "choicelab", version, about = "Predict individual choices in two-option gambles")]
struct Cli {
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output location: run root for train/fit-behavioral, directory for
    /// ingest/simulate, file for report/evaluate.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// Directory with choices.csv and optionally participants.csv
    /// (default: $CHOICELAB_DATA).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    choices: Option<PathBuf>,
    #[arg(long)]
    participants: Option<PathBuf>,
    /// Column mapping (default: $CHOICELAB_SCHEMA, else the built-in guess).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Word vectors, text format.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Use this many simulated agents instead of data files.
    #[arg(long)]
    simulate_users: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct SamplerArgs {
    /// hmc or map.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
    #[arg(long)]
    leapfrog: Option<usize>,
    /// Fixed leapfrog step size instead of adapting towards --target-accept.
    #[arg(long)]
    step_size: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load raw CSVs through the schema and write canonical files to --out.
    Ingest(DataArgs),
    /// Train representation models and baselines.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Model kinds (default: every non-behavioral kind).
        #[arg(long = "model")]
        models: Vec<String>,
        /// Baseline input variants (default: all).
        #[arg(long = "variant")]
        variants: Vec<String>,
        /// paper or small.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Shuffle labels before splitting (null model).
        #[arg(long)]
        permute_labels: bool,
    },
    /// Fit the hierarchical prospect model.
    FitBehavioral {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        permute_labels: bool,
    },
    /// Score a checkpoint on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
    /// Write a simulated dataset and the true parameters to --out.
    Simulate {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 64)]
        trials: usize,
        /// Also write participants.csv and vectors.txt.
        #[arg(long)]
        side_info: bool,
        #[arg(long, default_value_t = 300)]
        word_dim: usize,
    },
    /// Finite-difference check of every model gradient.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value = "paper")]
        arch: String,
    },
    /// Merge report CSVs into one table.
    Report {
        files: Vec<PathBuf>,
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Failure(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        ExperimentError::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn base_config(cli: &Cli, default_models: &[ModelKind]) -> Result<ExperimentConfig> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let seed = cli.seed.ok_or_else(|| invalid("a seed is required: pass --seed or --config"))?;
            ExperimentConfig::new(seed, default_models)
        }
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(o) = &cli.out {
        c.out_dir = o.clone();
    }
    Ok(c)
}

fn apply_data(c: &mut ExperimentConfig, d: &DataArgs) {
    if let Some(n) = d.simulate_users {
        c.data.simulate = Some(SimulateSection { n_users: n, seed: c.seed, ..SimulateSection::default() });
        c.data.dir = None;
        c.data.choices = None;
    }
    if d.data.is_some() {
        c.data.dir = d.data.clone();
        c.data.choices = None;
    }
    if d.choices.is_some() {
        c.data.choices = d.choices.clone();
    }
    if d.participants.is_some() {
        c.data.participants = d.participants.clone();
    }
    if d.schema.is_some() {
        c.data.schema = d.schema.clone();
    }
    if d.vectors.is_some() {
        c.data.vectors = d.vectors.clone();
    }
}

fn print_run(out: &experiment::RunOutput) {
    println!("{}", report::render_markdown(&out.reports));
    println!("artifacts: {}", out.dir.display());
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| IoError::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn format_arg(s: &str) -> Result<ReportFormat> {
    ReportFormat::from_name(s).ok_or_else(|| invalid(format!("unknown format {s:?}, expected csv or markdown")))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(d) => {
            let out = cli.out.as_deref().ok_or_else(|| invalid("ingest needs --out DIR"))?;
            let mut c = ExperimentConfig::new(cli.seed.unwrap_or(0), &[ModelKind::Rf]);
            apply_data(&mut c, d);
            let data = experiment::load_data(&c)?;
            ingest::write_canonical(out, &data.dataset)?;
            let ds = &data.dataset;
            println!("records: {}", ds.len());
            println!("users: {}", ds.user_ids().len());
            println!("participants: {}", ds.participants().len());
            if ds.has_participants() {
                println!("mean tokens per participant: {:.2}", ds.mean_tokens_per_participant());
            }
            if let Some(table) = &data.vectors {
                if ds.has_participants() {
                    let (_, stats) = user_centroids(table, ds, &ds.user_index()).map_err(ExperimentError::from)?;
                    println!("token OOV rate: {:.3}", stats.token_oov_rate());
                    println!("users without known tokens: {}", stats.all_oov_users);
                }
            }
            println!("written to {}", out.display());
            Ok(())
        }
        Command::Train { data, models, variants, arch, epochs, permute_labels } => {
            let defaults = [ModelKind::Rf, ModelKind::Mlp, ModelKind::Beh2vecId, ModelKind::Beh2vecDemo, ModelKind::Beh2vecText];
            let mut c = base_config(cli, &defaults)?;
            apply_data(&mut c, data);
            if !models.is_empty() {
                c.models = models.clone();
            }
            if !variants.is_empty() {
                c.variants = variants.clone();
            }
            if let Some(a) = arch {
                c.train.arch = a.clone();
            }
            if let Some(e) = epochs {
                c.train.max_epochs = *e;
            }
            c.permute_labels |= permute_labels;
            c.validate()?;
            print_run(&experiment::run_experiment(&c)?);
            Ok(())
        }
        Command::FitBehavioral { data, sampler, permute_labels } => {
            let mut c = base_config(cli, &[ModelKind::BehavioralHmc])?;
            apply_data(&mut c, data);
            if let Some(m) = &sampler.method {
                c.models = vec![match m.as_str() {
                    "hmc" => ModelKind::BehavioralHmc.name().into(),
                    "map" => ModelKind::BehavioralMap.name().into(),
                    other => return Err(invalid(format!("unknown method {other:?}, expected hmc or map"))),
                }];
            }
            let s = &mut c.sampler;
            s.chains = sampler.chains.unwrap_or(s.chains);
            s.iterations = sampler.iters.unwrap_or(s.iterations);
            s.warmup = sampler.warmup.unwrap_or(s.warmup);
            s.target_accept = sampler.target_accept.unwrap_or(s.target_accept);
            s.leapfrog_steps = sampler.leapfrog.unwrap_or(s.leapfrog_steps);
            if sampler.step_size.is_some() {
                s.step_size = sampler.step_size;
            }
            c.permute_labels |= permute_labels;
            c.validate()?;
            print_run(&experiment::run_experiment(&c)?);
            Ok(())
        }
        Command::Evaluate { data, checkpoint: path, format } => {
            let format = format_arg(format)?;
            let ckpt = checkpoint::load(path)?;
            let mut c = ExperimentConfig::new(cli.seed.unwrap_or(0), &[ModelKind::Rf]);
            apply_data(&mut c, data);
            let LoadedData { dataset, .. } = experiment::load_data(&c)?;
            let probs = ckpt.predict(dataset.records());
            let (kept, p): (Vec<ChoiceRecord>, Vec<f64>) = dataset
                .records()
                .iter()
                .zip(&probs)
                .filter_map(|(r, p)| p.map(|p| (r.clone(), p)))
                .unzip();
            let dropped = probs.len() - p.len();
            if dropped > 0 {
                log::warn!("{dropped} records belong to users the checkpoint does not know; not scored");
            }
            if kept.is_empty() {
                return Err(invalid("no record could be scored by this checkpoint"));
            }
            let metrics = evaluate(&p, &kept).map_err(ExperimentError::from)?;
            let (kind, variant) = ckpt.label();
            let r = MetricsReport::done(kind, &variant, vec![metrics], None);
            write_or_print(cli.out.as_deref(), &report::render(&[r], format))
        }
        Command::Simulate { users, trials, side_info, word_dim } => {
            let out = cli.out.as_deref().ok_or_else(|| invalid("simulate needs --out DIR"))?;
            let seed = cli.seed.unwrap_or(0);
            let spec = AgentSpec { n_users: *users, trials_per_user: *trials, seed, ..AgentSpec::default() };
            let (dataset, truth) = simulate_agents(&spec).map_err(ExperimentError::from)?;
            let data = if *side_info {
                experiment::synthetic_side_info(&dataset, *word_dim, seed)?
            } else {
                LoadedData { dataset, vectors: None }
            };
            ingest::write_canonical(out, &data.dataset)?;
            if let Some(t) = &data.vectors {
                let p = out.join("vectors.txt");
                let f = std::fs::File::create(&p).map_err(|e| IoError::io(&p, e))?;
                vectors::write_word_vectors(std::io::BufWriter::new(f), t).map_err(|e| IoError::io(&p, e))?;
            }
            let mut params = String::from("user_id,alpha_gain,alpha_loss,beta_self,beta_other\n");
            for (id, p) in &truth {
                params.push_str(&format!("{id},{},{},{},{}\n", p.alpha_gain, p.alpha_loss, p.beta_self, p.beta_other));
            }
            let p = out.join("true_params.csv");
            std::fs::write(&p, params).map_err(|e| IoError::io(&p, e))?;
            println!("{} agents, {} records written to {}", users, data.dataset.len(), out.display());
            Ok(())
        }
        Command::Gradcheck { instances, arch } => {
            let arch = match arch.as_str() {
                "paper" => Architecture::default(),
                "small" => Architecture::small(8),
                other => return Err(invalid(format!("unknown architecture {other:?}"))),
            };
            let cfg = GradCheckConfig { instances: *instances, seed: cli.seed.unwrap_or(0), ..GradCheckConfig::default() };
            let mut ok = true;
            println!("model,instances,checked,kinks,max_rel_error,status");
            for s in check_all(&cfg, &arch) {
                ok &= s.passed();
                let status = if s.passed() { "PASS" } else { "FAIL" };
                println!("{},{},{},{},{:.3e},{status}", s.model, s.instances, s.checked, s.kinks, s.max_rel_error);
            }
            if ok {
                Ok(())
            } else {
                Err(CliError::Failure(format!("relative error above {TOLERANCE:e}")))
            }
        }
        Command::Report { files, format } => {
            let format = format_arg(format)?;
            if files.is_empty() {
                return Err(invalid("report needs at least one report CSV"));
            }
            let mut all = Vec::new();
            for f in files {
                all.extend(report::load_report_csv(f)?);
            }
            write_or_print(cli.out.as_deref(), &report::render(&all, format))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    // Resolve the schema early so a bad CHOICELAB_SCHEMA fails before any work.
    if let Err(e) = Schema::resolve(None) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
