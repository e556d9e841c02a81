use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use concord_core::aggregate::MeanKind;
use concord_core::agreement::Binning;
use concord_core::engine::EngineConfig;
use concord_core::feedback::DEFAULT_CAP;
use concord_core::session::{Session, Status};
use concord_core::simulate::{simulate_many, Policy, SimulationSpec, Truth};

mod report;

#[derive(Parser)]
#[command(
    name = "concord",
    version,
    about = "Group aggregation of incomplete pairwise comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a session file and print the aggregate and agreement.
    Evaluate(EvaluateArgs),
    /// Print the feedback rounds recorded in a session file.
    Trace {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the feedback loop on synthetic expert groups.
    Simulate(SimulateArgs),
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session files; sessions stay in memory without it.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeanArg {
    Geometric,
    Arithmetic,
}

impl From<MeanArg> for MeanKind {
    fn from(m: MeanArg) -> Self {
        match m {
            MeanArg::Geometric => MeanKind::Geometric,
            MeanArg::Arithmetic => MeanKind::Arithmetic,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    file: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, value_enum)]
    mean: Option<MeanArg>,
    /// Write one `grade<TAB>mass` table per coordinate into this directory.
    #[arg(long)]
    spectrums: Option<PathBuf>,
    /// Save the evaluated session back to the file.
    #[arg(long)]
    write: bool,
    /// Print the results as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Accept,
    Decline,
    Compromise,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Comma-separated ground-truth weights; random when omitted.
    #[arg(long, value_delimiter = ',')]
    truth: Option<Vec<f64>>,
    /// Largest ratio of a random ground truth.
    #[arg(long, default_value_t = 6.0)]
    spread: f64,
    /// Multiplicative jitter in grades.
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    /// Comma-separated grade counts, one per expert.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<u32>>,
    /// Report grades rather than jittered ratios.
    #[arg(long)]
    snap: bool,
    #[arg(long, value_enum, default_value = "accept")]
    policy: PolicyArg,
    /// Share of the way toward the suggestion for the compromise policy.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.7)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "geometric")]
    mean: MeanArg,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Evaluate(args) => evaluate(args),
        Command::Trace { file, json } => {
            let session = load(&file)?;
            let trace = session.trace();
            if json {
                println!("{}", serde_json::to_string_pretty(&trace)?);
            } else {
                print!("{}", report::trace_table(&session, &trace));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => simulate(args),
        Command::Serve { addr, data_dir } => serve(addr, data_dir),
    }
}

fn load(path: &Path) -> Result<Session> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Session::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

/// Exit code for a session status: 0 passing, 2 incomplete, 3 below threshold.
fn exit_code(status: Status) -> u8 {
    match status {
        Status::Converged => 0,
        Status::Incomplete => 2,
        _ => 3,
    }
}

fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let mut session = load(&args.file)?;
    let mut config = session.config.clone();
    if let Some(e) = args.epsilon {
        config.epsilon = e;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(c) = args.cap {
        config.cap = c;
    }
    if let Some(m) = args.mean {
        config.mean = m.into();
    }
    if config != session.config {
        session.reconfigure(config)?;
    }
    let results = session.evaluate()?.clone();
    if let Some(dir) = &args.spectrums {
        if results.status == Status::Incomplete {
            bail!("cannot export spectrums of an incomplete session");
        }
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (l, spectrum) in session.spectrums()?.iter().enumerate() {
            let path = dir.join(format!("spectrum_{l}.tsv"));
            std::fs::write(&path, spectrum.to_table())
                .with_context(|| format!("writing {}", path.display()))?;
        }
    }
    if args.json {
        println!("{}", serde_json::to_string(&results)?);
    } else {
        print!("{}", report::evaluation(&session, &results));
    }
    if args.write {
        std::fs::write(&args.file, session.to_json())
            .with_context(|| format!("writing {}", args.file.display()))?;
    }
    Ok(ExitCode::from(exit_code(results.status)))
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let config = EngineConfig {
        binning: Binning::from_epsilon(args.epsilon)?,
        threshold: args.threshold,
        mean: args.mean.into(),
        ..EngineConfig::default()
    };
    let spec = SimulationSpec {
        n: args.n,
        m: args.m,
        truth: match args.truth {
            Some(w) => Truth::Given(w),
            None => Truth::Random {
                spread: args.spread,
            },
        },
        jitter: args.jitter,
        snap_to_grade: args.snap,
        scales: args.scales.unwrap_or_default(),
        policy: match args.policy {
            PolicyArg::Accept => Policy::Accept,
            PolicyArg::Decline => Policy::Decline,
            PolicyArg::Compromise => Policy::Compromise(args.fraction),
        },
        seed: args.seed,
        cap: args.cap,
        config,
    };
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let (runs, summary) = simulate_many(&spec, args.runs)?;
    if args.json {
        let out = serde_json::json!({ "summary": summary, "runs": runs });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        print!("{}", report::simulation(&runs, &summary));
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(addr: SocketAddr, data_dir: Option<PathBuf>) -> Result<ExitCode> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let store = match data_dir {
            Some(dir) => concord_service::SessionStore::open(dir).await?,
            None => concord_service::SessionStore::in_memory(),
        };
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        concord_service::serve(listener, Arc::new(store)).await?;
        Ok(ExitCode::SUCCESS)
    })
}
