use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use socbal::analytics::ReportOptions;
use socbal::gateway::check_golden_prompts;
use socbal::runner::{self, RunConfig};
use socbal::PromptDialect;

/// Balance dynamics of signed agent networks.
#[derive(Parser)]
#[command(name = "socbal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a sweep and write its reports.
    Run(RunArgs),
    /// Re-run logged simulations through the current parser and compare.
    Replay {
        /// Experiment directory (`<out>/<experiment-id>`).
        dir: PathBuf,
        /// Where to write replayed reports; defaults to `<dir>/replay`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        refusal_threshold: Option<f64>,
        /// Exit non-zero when any answer parses differently.
        #[arg(long)]
        fail_on_diff: bool,
    },
    /// Rebuild reports from an experiment's logs.
    Report {
        dir: PathBuf,
        #[arg(long)]
        refusal_threshold: Option<f64>,
    },
    /// Compare rendered prompts with golden files named `<dialect>-<kind>-<mechanism>-m<m>.txt`.
    ValidatePrompts {
        #[arg(default_value = "fixtures/prompts")]
        dir: PathBuf,
    },
}

/// Every flag overrides the matching key of `--config`.
#[derive(Args)]
struct RunArgs {
    /// TOML file with the same keys as the flags (underscored).
    #[arg(long)]
    config: Option<PathBuf>,
    /// rule | constant-positive | constant-negative | constant-neutral | llm | scripted
    #[arg(long)]
    backend: Option<String>,
    /// Chat-completions API root, e.g. http://localhost:8000/v1
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dialect: Option<PromptDialect>,
    /// relationship | appraisal | opinion | all (comma-separated allowed)
    #[arg(long)]
    kind: Option<String>,
    /// homophily | influence | all
    #[arg(long)]
    mechanism: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Simulations per initialization (exhaustive) or in total (random).
    #[arg(short, long)]
    n: Option<usize>,
    /// Iterations per simulation.
    #[arg(short = 't', long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    refusal_threshold: Option<f64>,
    /// auto | exhaustive | random
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transcript for the scripted back-end.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Name of the environment variable holding the API token.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(self) -> socbal::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        let args = self;
        overlay!(
            cfg, args, backend, endpoint, model, dialect, kind, mechanism, m, n, iterations, seed,
            refusal_threshold, init, out, api_key_env, temperature, max_tokens, timeout_secs, retries,
            max_in_flight,
        );
        if args.workers.is_some() {
            cfg.workers = args.workers;
        }
        if args.transcript.is_some() {
            cfg.transcript = args.transcript;
        }
        Ok(cfg)
    }
}

fn report_options(refusal_threshold: Option<f64>) -> ReportOptions {
    let mut opts = ReportOptions::default();
    if let Some(t) = refusal_threshold {
        opts.refusal_threshold = t;
    }
    opts
}

fn print_balance(set: &socbal::analytics::ReportSet) {
    println!(
        "{:<52} {:>6} {:>6} {:>9} {:>4} {:>9}",
        "setting", "valid", "sims", "balanced%", "type", "refusal%"
    );
    for r in &set.balance.rows {
        let freq = match (r.reported, r.frequency) {
            (false, _) => "---".to_string(),
            (true, Some(f)) => format!("{f:.1}"),
            (true, None) => "-".to_string(),
        };
        println!(
            "{:<52} {:>6} {:>6} {:>9} {:>4} {:>9.1}",
            r.setting.to_string(),
            r.valid,
            r.simulations,
            freq,
            r.strictness.map(|s| format!("{s:?}")).unwrap_or_default(),
            100.0 * r.refusal_rate
        );
    }
}

fn validate_prompts(dir: &Path) -> socbal::Result<bool> {
    let checks = check_golden_prompts(dir)?;
    let mut ok = !checks.is_empty();
    for c in &checks {
        match c.mismatch_at {
            None => println!("ok        {}", c.file.display()),
            Some(at) => {
                ok = false;
                println!("MISMATCH  {} (first difference at byte {at})", c.file.display());
            }
        }
    }
    if checks.is_empty() {
        println!("no golden prompt files in {}", dir.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => args.resolve().and_then(|cfg| {
            let summary = runner::run_experiment(&cfg.sweep()?, &cfg.run_options())?;
            println!("experiment {}", summary.experiment_dir.display());
            print_balance(&summary.reports);
            Ok(true)
        }),
        Command::Report { dir, refusal_threshold } => {
            runner::report(&dir, &report_options(refusal_threshold)).map(|set| {
                print_balance(&set);
                true
            })
        }
        Command::Replay {
            dir,
            out,
            refusal_threshold,
            fail_on_diff,
        } => runner::replay(&dir, out.as_deref(), &report_options(refusal_threshold)).map(|s| {
            println!(
                "replayed {} simulation(s); {} changed answer(s); {} record(s) from another parser version; {} unreadable line(s)",
                s.simulations,
                s.diffs.len(),
                s.version_mismatches,
                s.corrupt
            );
            !(fail_on_diff && s.flagged())
        }),
        Command::ValidatePrompts { dir } => validate_prompts(&dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
