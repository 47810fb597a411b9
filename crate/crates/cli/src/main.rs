//! `rhumo`: ingest datasets, run labeling sessions through the service,
//! run seeded campaigns and the scaling benchmark.
//!
//! Every verb exits 0 only when the criteria it asserts hold.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rhumo_client::Client;
use rhumo_core::api::{CreateSessionRequest, WorkloadSource};
use rhumo_core::campaign::{run_campaign, scaling_benchmark, trajectory_csv, Campaign};
use rhumo_core::ingest::{build_workload, DatasetSpec, GroundTruth, Workload};
use rhumo_core::oracle::{OracleConfig, SimulatedOracle};
use rhumo_core::synth::{self, Profile, SynthSpec};
use rhumo_core::{EngineConfig, Mode, QualityRequirement, Strategy};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] rhumo_core::Error),
    #[error(transparent)]
    Client(#[from] rhumo_client::ClientError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "rhumo", version, about = "Human/machine labeling with precision and recall guarantees")]
struct Cli {
    /// Log progress to stderr; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Block a dataset into candidate pairs and summarize it.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset as CSV files plus a dataset TOML.
    Synth(SynthArgs),
    /// Run one labeling session through the service with a simulated labeler.
    Run(RunArgs),
    /// Run a seeded multi-run campaign and write result tables.
    Campaign(CampaignArgs),
    /// Time full runs on subsamples of a workload.
    Bench(BenchArgs),
    /// Serve the session API.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Dataset TOML naming the record and match files.
    #[arg(long, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,
    /// Generated workload profile instead of a dataset file.
    #[arg(long, value_enum)]
    synthetic: Option<ProfileArg>,
    /// Size of the generated workload relative to the full profile.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Seed of the generated workload.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Ds,
    Ab,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Realtime,
    Batch,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Rhumo,
    Humo,
    Rand,
    Cos,
}

impl SourceArgs {
    fn source(&self) -> Result<WorkloadSource> {
        match (&self.dataset, self.synthetic) {
            (Some(path), None) => {
                let mut spec = DatasetSpec::from_toml_file(path)?;
                // the server may run elsewhere; hand it absolute paths
                let cwd = std::env::current_dir().map_err(|e| CliError::Io { path: ".".into(), source: e })?;
                spec.resolve_relative(&cwd);
                Ok(WorkloadSource::Dataset { spec })
            }
            (None, Some(p)) => {
                let profile = match p {
                    ProfileArg::Ds => Profile::Ds,
                    ProfileArg::Ab => Profile::Ab,
                };
                let spec = SynthSpec::new(profile, self.scale, self.data_seed);
                spec.validate()?;
                Ok(WorkloadSource::Synthetic { spec })
            }
            _ => Err(CliError::Usage("give exactly one of --dataset or --synthetic".into())),
        }
    }
}

fn load(source: &WorkloadSource) -> Result<(Workload, GroundTruth)> {
    Ok(match source {
        WorkloadSource::Dataset { spec } => build_workload(spec)?,
        WorkloadSource::Synthetic { spec } => synth::build(spec)?,
    })
}

#[derive(Args, Clone)]
struct RequirementArgs {
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
}

impl RequirementArgs {
    fn requirement(&self) -> Result<QualityRequirement> {
        Ok(QualityRequirement::new(self.alpha, self.beta, self.theta)?)
    }
}

/// Engine settings. A TOML file sets the base; flags override it.
#[derive(Args, Clone)]
struct EngineArgs {
    /// Engine configuration TOML.
    #[arg(long)]
    engine_config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long)]
    min_inspect_threshold: Option<usize>,
    #[arg(long)]
    max_batch: Option<usize>,
    /// Human budget for the rand and cos strategies.
    #[arg(long)]
    budget: Option<usize>,
    /// Use true subset proportions instead of sampling.
    #[arg(long)]
    ground_truth_proportions: bool,
}

impl EngineArgs {
    fn config(&self) -> Result<EngineConfig> {
        let mut c = match &self.engine_config {
            Some(path) => read_toml(path)?,
            None => EngineConfig::default(),
        };
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Realtime => Mode::Realtime,
                ModeArg::Batch => Mode::Batch,
            };
        }
        if let Some(s) = self.strategy {
            c.strategy = match s {
                StrategyArg::Rhumo => Strategy::Rhumo,
                StrategyArg::Humo => Strategy::Humo,
                StrategyArg::Rand => Strategy::Rand,
                StrategyArg::Cos => Strategy::Cos,
            };
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.subset_size {
            c.subset_size = v;
        }
        if let Some(v) = self.min_inspect_threshold {
            c.min_inspect_threshold = v;
        }
        if self.max_batch.is_some() {
            c.max_batch = self.max_batch;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        c.ground_truth_proportions |= self.ground_truth_proportions;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "out/ingest")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    profile: ProfileArg,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    requirement: RequirementArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Base URL of a running service; an embedded one is started otherwise.
    #[arg(long)]
    server: Option<String>,
    /// Probability that the simulated labeler answers wrongly.
    #[arg(long, default_value_t = 0.0)]
    flip_probability: f64,
    #[arg(long, default_value = "out/run")]
    out: PathBuf,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign TOML: a `source` table plus the campaign fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out/campaign")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    requirement: RequirementArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0])]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[arg(long, default_value = "out/bench")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Debug, Deserialize)]
struct CampaignFile {
    source: WorkloadSource,
    #[serde(flatten)]
    campaign: Campaign,
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    name: String,
    pairs: usize,
    equivalent_pairs: usize,
    listed_matches: usize,
    /// Listed matches that survived blocking.
    blocking_recall: f64,
    mean_metric: f64,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    session_id: String,
    server: String,
    status: rhumo_core::api::StatusSnapshot,
    labels_answered: usize,
    labels_flipped: usize,
}

/// One asserted criterion and whether it held.
#[derive(Debug, Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.into(), source: e })?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.into(), source: e })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io { path, source: e })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, name, serde_json::to_string_pretty(value).expect("result serializes"))
}

/// Prints the checks, stores them as `checks.json` and folds them into one verdict.
fn report(dir: &Path, checks: &[Check]) -> Result<bool> {
    for c in checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    write_json(dir, "checks.json", &checks)?;
    Ok(checks.iter().all(|c| c.passed))
}

async fn on_blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f).await.expect("worker panicked")
}

fn ingest(args: IngestArgs) -> Result<bool> {
    let (w, t) = load(&args.source.source()?)?;
    let equivalent = t.equivalent.iter().filter(|&&e| e).count();
    let summary = IngestSummary {
        name: w.name.clone(),
        pairs: w.len(),
        equivalent_pairs: equivalent,
        listed_matches: t.listed_matches,
        blocking_recall: if t.listed_matches == 0 { 0.0 } else { equivalent as f64 / t.listed_matches as f64 },
        mean_metric: w.pairs.iter().map(|p| p.metric).sum::<f64>() / w.len().max(1) as f64,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    write_json(&args.out, "summary.json", &summary)?;
    report(&args.out, &[Check::new("workload is non-empty", w.len() > 0, format!("{} pairs", w.len()))])
}

fn synth_verb(args: SynthArgs) -> Result<bool> {
    let profile = match args.profile {
        ProfileArg::Ds => Profile::Ds,
        ProfileArg::Ab => Profile::Ab,
    };
    let spec = SynthSpec::new(profile, args.scale, args.seed);
    spec.validate()?;
    synth::generate(&spec)?.write(&args.out)?;
    println!("wrote {}", args.out.join("dataset.toml").display());
    Ok(true)
}

async fn run(args: RunArgs) -> Result<bool> {
    let source = args.source.source()?;
    let requirement = args.requirement.requirement()?;
    let config = args.engine.config()?;
    let oracle_cfg = OracleConfig { flip_probability: args.flip_probability, seed: config.seed, ..Default::default() };
    oracle_cfg.validate()?;
    let truth_source = source.clone();
    let mut oracle = on_blocking(move || {
        let (w, t) = load(&truth_source)?;
        Ok(SimulatedOracle::new(w.pairs.iter().zip(&t.equivalent).map(|(p, &e)| (p.pair_id, e)), oracle_cfg)?)
    })
    .await?;

    let base = match &args.server {
        Some(url) => url.clone(),
        None => {
            let (tx, rx) = tokio::sync::oneshot::channel();
            tokio::spawn(rhumo_service::serve("127.0.0.1:0".parse().expect("literal address"), move |a| {
                let _ = tx.send(a);
            }));
            let addr = rx.await.map_err(|_| CliError::Usage("embedded service failed to start".into()))?;
            format!("http://{addr}")
        }
    };
    let client = Client::new(base.clone());
    let request = CreateSessionRequest { source, requirement, config };
    let created = client.create_session(&request).await?;
    tracing::info!(session = %created.session_id, server = %base, "session created");
    let outcome = client.drive(&created.session_id, &mut oracle).await?;
    let log = client.run_log(&created.session_id).await?;
    let status = outcome.status;

    write(&args.out, "trajectory.csv", trajectory_csv(&log)?)?;
    let summary = RunSummary {
        session_id: created.session_id,
        server: base,
        status: status.clone(),
        labels_answered: oracle.answered(),
        labels_flipped: oracle.flipped(),
    };
    write_json(&args.out, "summary.json", &summary)?;
    println!(
        "precision >= {:.4}, recall >= {:.4}, human labels {} (sampling {}, inspected {}), {} interactions",
        status.precision_lower,
        status.recall_lower,
        status.human_cost,
        status.sampling_cost,
        status.dh_cost,
        status.interactions
    );
    report(
        &args.out,
        &[
            Check::new("session finished", status.done, format!("phase {:?}", status.phase)),
            Check::new(
                "bounds meet the requirement",
                status.success,
                format!(
                    "precision >= {:.4} (target {}), recall >= {:.4} (target {})",
                    status.precision_lower, requirement.alpha, status.recall_lower, requirement.beta
                ),
            ),
        ],
    )
}

fn campaign(args: CampaignArgs) -> Result<bool> {
    let file: CampaignFile = read_toml(&args.config)?;
    let mut source = file.source;
    if let WorkloadSource::Dataset { spec } = &mut source {
        spec.resolve_relative(args.config.parent().unwrap_or(Path::new(".")));
    }
    let campaign = file.campaign;
    campaign.validate()?;
    let (w, t) = load(&source)?;
    let result = run_campaign(&campaign, Arc::new(w), &t)?;
    result.write(&args.out)?;
    print!("{}", result.table());
    let checks: Vec<Check> = result
        .cells
        .iter()
        .filter(|c| c.arm.starts_with("rhumo"))
        .map(|c| {
            Check::new(
                format!("{} at {:.3}: success rate >= {}", c.arm, c.level, campaign.theta),
                c.success_rate >= campaign.theta,
                format!("{:.1}% over {} runs", 100.0 * c.success_rate, c.runs),
            )
        })
        .collect();
    report(&args.out, &checks)
}

fn bench(args: BenchArgs) -> Result<bool> {
    let requirement = args.requirement.requirement()?;
    let config = args.engine.config()?;
    let (w, t) = load(&args.source.source()?)?;
    let result = scaling_benchmark(&w, &t, &args.fractions, requirement, &config, args.repetitions)?;
    write(&args.out, "scaling.csv", result.csv()?)?;
    write_json(&args.out, "scaling.json", &result)?;
    for p in &result.points {
        println!("{:>6.2}  {:>8} pairs  {:>9.3}s  {} human labels", p.fraction, p.pairs, p.seconds, p.human_cost);
    }
    let monotone = result.points.windows(2).all(|w| w[1].seconds >= w[0].seconds);
    report(
        &args.out,
        &[
            Check::new("runtime grows with workload size", monotone, "median seconds per fraction"),
            Check::new(
                "log-log exponent in [1, 2.5]",
                (1.0..=2.5).contains(&result.exponent),
                format!("exponent {:.3}", result.exponent),
            ),
        ],
    )
}

async fn serve(args: ServeArgs) -> Result<bool> {
    rhumo_service::serve(args.addr, |a| println!("listening on http://{a}"))
        .await
        .map_err(|e| CliError::Io { path: args.addr.to_string().into(), source: e })?;
    Ok(true)
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    let outcome = match cli.verb {
        Verb::Ingest(a) => on_blocking(move || ingest(a)).await,
        Verb::Synth(a) => on_blocking(move || synth_verb(a)).await,
        Verb::Run(a) => run(a).await,
        Verb::Campaign(a) => on_blocking(move || campaign(a)).await,
        Verb::Bench(a) => on_blocking(move || bench(a)).await,
        Verb::Serve(a) => serve(a).await,
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
