//! Sweeps, append-only logs, resumption, replay and report generation.
//!
//! Layout of one experiment directory:
//!
//! ```text
//! <out>/<experiment-id>/
//!     manifest.json
//!     settings/<setting-slug>/decisions.jsonl
//!     settings/<setting-slug>/simulations.jsonl
//!     reports/*.csv, reports/*.svg
//! ```
//!
//! Logs are the source of truth; reports are always rebuilt from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentBackend, ConstantAgent, RuleAgent, ScriptedAgent, TranscriptEntry};
use crate::analytics::{compute_reports, write_reports, KeywordTally, ReportOptions, ReportSet, SettingKey};
use crate::dynamics::{
    run_simulation, Decision, ExperimentConfig, InitMode, InteractionKind, Trajectory, UpdateMechanism,
};
use crate::error::{Error, Result};
use crate::gateway::{ChatClient, EndpointConfig, LlmAgent, PromptDialect};
use crate::graph::{InteractionMatrix, Sign};
use crate::parser::{scan_keywords, KeywordHits, KeywordSpec, ParsedAnswer, PARSER_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const SIMULATIONS_FILE: &str = "simulations.jsonl";
pub const REPORTS_DIR: &str = "reports";
pub const REPLAY_DIR: &str = "replay";

/// Which agent answers the prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    Rule,
    Constant { sign: Sign },
    Llm { endpoint: EndpointConfig, dialect: PromptDialect },
    /// One transcript, keyed by (iteration, focal, target), answers every simulation.
    Scripted { path: PathBuf, dialect: PromptDialect },
}

impl BackendSpec {
    /// Model label used in setting keys.
    pub fn label(&self) -> String {
        match self {
            BackendSpec::Rule => RuleAgent.label(),
            BackendSpec::Constant { sign } => ConstantAgent::new(*sign).label(),
            BackendSpec::Llm { endpoint, .. } => endpoint.model.clone(),
            BackendSpec::Scripted { .. } => "scripted".to_string(),
        }
    }

    pub fn dialect(&self) -> PromptDialect {
        match self {
            BackendSpec::Llm { dialect, .. } | BackendSpec::Scripted { dialect, .. } => *dialect,
            _ => PromptDialect::default(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn AgentBackend>> {
        Ok(match self {
            BackendSpec::Rule => Box::new(RuleAgent),
            BackendSpec::Constant { sign } => Box::new(ConstantAgent::new(*sign)),
            BackendSpec::Llm { endpoint, dialect } => {
                if endpoint.model.is_empty() {
                    return Err(Error::Config("an LLM back-end needs a model name".into()));
                }
                Box::new(LlmAgent::new(ChatClient::new(endpoint.clone()), *dialect))
            }
            BackendSpec::Scripted { path, dialect } => Box::new(ScriptedAgent::from_file(path, *dialect)?),
        })
    }
}

/// A list of settings run against one back-end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub seed: u64,
    pub backend: BackendSpec,
    pub settings: Vec<ExperimentConfig>,
}

impl Sweep {
    /// Cartesian product of kinds and mechanisms for one population size.
    /// `init` defaults to exhaustive for three agents and random otherwise.
    #[allow(clippy::too_many_arguments)]
    pub fn grid(
        kinds: &[InteractionKind],
        mechanisms: &[UpdateMechanism],
        m: usize,
        simulations: usize,
        iterations: usize,
        seed: u64,
        init: Option<InitMode>,
        backend: BackendSpec,
    ) -> Self {
        let mut settings = Vec::new();
        for &kind in kinds {
            for &mechanism in mechanisms {
                let mut cfg = ExperimentConfig::new(m, kind, mechanism);
                cfg.simulations = simulations;
                cfg.iterations = iterations;
                cfg.seed = seed;
                if let Some(init) = init {
                    cfg.init = init;
                }
                settings.push(cfg);
            }
        }
        Sweep {
            seed,
            backend,
            settings,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for cfg in &self.settings {
            cfg.validate()?;
            if !seen.insert(self.key(cfg)) {
                return Err(Error::Config(format!("setting {} listed twice", self.key(cfg))));
            }
        }
        Ok(())
    }

    pub fn key(&self, cfg: &ExperimentConfig) -> SettingKey {
        SettingKey::new(cfg.kind, cfg.mechanism, cfg.m, self.backend.label())
    }

    /// First 16 hex digits of the SHA-256 of the sweep's JSON form. Identical
    /// sweeps share an id, so rerunning one resumes it.
    pub fn experiment_id(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("sweep serializes");
        hex::encode(Sha256::digest(&canonical))[..16].to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingEntry {
    pub key: SettingKey,
    pub config: ExperimentConfig,
    /// Relative to the experiment directory.
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment_id: String,
    pub seed: u64,
    /// Seconds since the Unix epoch of the first run.
    pub created_at: u64,
    pub parser_version: u32,
    pub sweep: Sweep,
    pub settings: Vec<SettingEntry>,
    pub reports: PathBuf,
}

impl RunManifest {
    pub fn new(sweep: Sweep) -> Self {
        let settings = sweep
            .settings
            .iter()
            .map(|cfg| {
                let key = sweep.key(cfg);
                SettingEntry {
                    dir: Path::new("settings").join(key.slug()),
                    key,
                    config: cfg.clone(),
                }
            })
            .collect();
        RunManifest {
            experiment_id: sweep.experiment_id(),
            seed: sweep.seed,
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            parser_version: PARSER_VERSION,
            sweep,
            settings,
            reports: PathBuf::from(REPORTS_DIR),
        }
    }

    pub fn load(experiment_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(
            experiment_dir.join(MANIFEST_FILE),
        )?))?)
    }

    fn save(&self, experiment_dir: &Path) -> Result<()> {
        let tmp = experiment_dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        fs::rename(tmp, experiment_dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    fn expected_responses(&self) -> impl Fn(&SettingKey) -> Option<usize> + '_ {
        move |key| {
            self.settings
                .iter()
                .find(|s| &s.key == key)
                .map(|s| s.config.total_simulations() * s.config.decisions_per_simulation())
        }
    }
}

/// One agent decision as persisted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub experiment_id: String,
    pub setting: String,
    pub simulation: usize,
    pub init_index: Option<usize>,
    pub iteration: usize,
    pub focal: usize,
    pub target: usize,
    /// SHA-256 of the rendered prompt, for back-ends that render one.
    pub prompt_hash: Option<String>,
    pub raw: String,
    pub parsed: ParsedAnswer,
    pub sign: Sign,
    pub keywords: KeywordHits,
    pub refusal: bool,
    pub latency_ms: u64,
    pub parser_version: u32,
}

/// Written after all of a simulation's decisions; its presence marks the simulation complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub simulation: usize,
    pub init_index: Option<usize>,
    pub initial: InteractionMatrix,
    pub steps: usize,
    pub decisions: usize,
    pub refusals: usize,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    pub report: ReportOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            out_dir: PathBuf::from("runs"),
            workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
            report: ReportOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SettingProgress {
    pub skipped: usize,
    pub ran: usize,
    pub aborted: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub experiment_dir: PathBuf,
    pub manifest: RunManifest,
    pub progress: BTreeMap<SettingKey, SettingProgress>,
    pub reports: ReportSet,
}

/// Reads a JSONL file, returning parsed records (with their source lines)
/// and the number of lines that failed to parse.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Vec<(T, String)>, usize)> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    let mut corrupt = 0;
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push((rec, line)),
            Err(_) => corrupt += 1,
        }
    }
    Ok((out, corrupt))
}

fn rewrite_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for l in lines {
            w.write_all(l.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Drops partial simulations and unreadable lines left by an interrupted run,
/// returning the simulations already complete.
fn prepare_resume(dir: &Path) -> Result<BTreeSet<usize>> {
    let sims_path = dir.join(SIMULATIONS_FILE);
    let dec_path = dir.join(DECISIONS_FILE);
    let (sims, bad_sims) = read_jsonl::<SimulationRecord>(&sims_path)?;
    let done: BTreeSet<usize> = sims.iter().map(|(r, _)| r.simulation).collect();
    let (decisions, bad_dec) = read_jsonl::<DecisionRecord>(&dec_path)?;
    let kept: Vec<String> = decisions
        .into_iter()
        .filter(|(r, _)| done.contains(&r.simulation))
        .map(|(_, l)| l)
        .collect();
    let partial = kept.len() != read_jsonl::<serde_json::Value>(&dec_path)?.0.len();
    if bad_sims > 0 || bad_dec > 0 || partial {
        log::info!(
            "{}: dropping {} unreadable line(s) and partial simulations",
            dir.display(),
            bad_sims + bad_dec
        );
        rewrite_lines(&sims_path, sims.into_iter().map(|(_, l)| l))?;
        rewrite_lines(&dec_path, kept)?;
    }
    Ok(done)
}

fn hash_prompt(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

fn decision_record(
    experiment_id: &str,
    setting: &str,
    simulation: usize,
    init_index: Option<usize>,
    d: &Decision,
    keywords: &KeywordSpec,
) -> DecisionRecord {
    DecisionRecord {
        experiment_id: experiment_id.to_string(),
        setting: setting.to_string(),
        simulation,
        init_index,
        iteration: d.iteration,
        focal: d.focal,
        target: d.target,
        prompt_hash: d.prompt.as_deref().map(hash_prompt),
        raw: d.raw.clone(),
        parsed: d.parsed,
        sign: d.sign,
        keywords: scan_keywords(&d.raw, keywords),
        refusal: d.refusal,
        latency_ms: d.latency.as_millis() as u64,
        parser_version: PARSER_VERSION,
    }
}

fn simulation_record(simulation: usize, init_index: Option<usize>, t: &Trajectory) -> SimulationRecord {
    SimulationRecord {
        simulation,
        init_index,
        initial: t.initial().clone(),
        steps: t.steps(),
        decisions: t.decisions.len(),
        refusals: t.refusals,
        aborted: t.aborted.clone(),
    }
}

struct Finished {
    simulation: usize,
    init_index: Option<usize>,
    trajectory: Trajectory,
}

fn simulate(cfg: &ExperimentConfig, sim: usize, agent: &dyn AgentBackend) -> Result<Finished> {
    let (init_index, init) = cfg.initialization(sim)?;
    Ok(Finished {
        simulation: sim,
        init_index,
        trajectory: run_simulation(cfg, init, agent)?,
    })
}

/// Runs `pending` simulations on a worker pool; a single writer appends
/// them to the logs in simulation order.
fn run_pending(
    cfg: &ExperimentConfig,
    pending: &[usize],
    agent: &dyn AgentBackend,
    workers: usize,
    mut sink: impl FnMut(Finished) -> Result<()>,
) -> Result<()> {
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        let (tx, rx) = mpsc::channel::<(usize, Result<Finished>)>();
        for _ in 0..workers.max(1).min(pending.len().max(1)) {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(&sim) = pending.get(n) else { break };
                if tx.send((n, simulate(cfg, sim, agent))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer = BTreeMap::new();
        let mut want = 0;
        for (n, out) in rx {
            buffer.insert(n, out);
            while let Some(out) = buffer.remove(&want) {
                if let Err(e) = out.and_then(&mut sink) {
                    // stop handing out work; in-flight simulations finish and are discarded
                    next.store(pending.len(), Ordering::Relaxed);
                    return Err(e);
                }
                want += 1;
            }
        }
        Ok(())
    })
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?))
}

fn write_line(w: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Runs every simulation of `sweep` not already logged under its experiment
/// directory, then rebuilds all reports from the logs.
pub fn run_experiment(sweep: &Sweep, opts: &RunOptions) -> Result<RunSummary> {
    sweep.validate()?;
    let mut manifest = RunManifest::new(sweep.clone());
    let dir = opts.out_dir.join(&manifest.experiment_id);
    fs::create_dir_all(&dir)?;
    if let Ok(previous) = RunManifest::load(&dir) {
        manifest.created_at = previous.created_at;
    }
    manifest.save(&dir)?;
    let agent = sweep.backend.build()?;
    let mut progress = BTreeMap::new();

    for entry in &manifest.settings {
        let sdir = dir.join(&entry.dir);
        fs::create_dir_all(&sdir)?;
        let done = prepare_resume(&sdir)?;
        let total = entry.config.total_simulations();
        let pending: Vec<usize> = (0..total).filter(|s| !done.contains(s)).collect();
        log::info!("{}: {} of {total} simulations to run", entry.key, pending.len());

        let mut decisions = open_append(&sdir.join(DECISIONS_FILE))?;
        let mut sims = open_append(&sdir.join(SIMULATIONS_FILE))?;
        let slug = entry.key.slug();
        let mut stats = SettingProgress {
            skipped: total - pending.len(),
            ..SettingProgress::default()
        };
        run_pending(&entry.config, &pending, agent.as_ref(), opts.workers, |f| {
            for d in &f.trajectory.decisions {
                let rec = decision_record(
                    &manifest.experiment_id,
                    &slug,
                    f.simulation,
                    f.init_index,
                    d,
                    &opts.report.keywords,
                );
                write_line(&mut decisions, &rec)?;
            }
            decisions.flush()?;
            write_line(&mut sims, &simulation_record(f.simulation, f.init_index, &f.trajectory))?;
            sims.flush()?;
            stats.ran += 1;
            stats.aborted += usize::from(f.trajectory.is_aborted());
            Ok(())
        })?;
        decisions.get_ref().sync_all()?;
        sims.get_ref().sync_all()?;
        if stats.aborted > 0 {
            log::warn!("{}: {} simulation(s) aborted", entry.key, stats.aborted);
        }
        progress.insert(entry.key.clone(), stats);
    }

    let reports = report(&dir, &opts.report)?;
    Ok(RunSummary {
        experiment_dir: dir,
        manifest,
        progress,
        reports,
    })
}

/// Everything recovered from an experiment directory.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    /// Trajectories per setting in simulation order. Decisions carry signs
    /// but not response text.
    pub trajectories: BTreeMap<SettingKey, Vec<Trajectory>>,
    pub keywords: BTreeMap<SettingKey, KeywordTally>,
    /// Decision records per setting, grouped by simulation.
    pub records: BTreeMap<SettingKey, BTreeMap<usize, Vec<DecisionRecord>>>,
    pub simulations: BTreeMap<SettingKey, Vec<SimulationRecord>>,
    /// Unreadable log lines skipped.
    pub corrupt: usize,
}

/// Rebuilds a trajectory from its initial state and logged decisions.
pub fn reconstruct_trajectory(sim: &SimulationRecord, decisions: &[DecisionRecord]) -> Result<Trajectory> {
    let mut matrices = vec![sim.initial.clone()];
    let mut by_step: BTreeMap<usize, Vec<&DecisionRecord>> = BTreeMap::new();
    for d in decisions {
        by_step.entry(d.iteration).or_default().push(d);
    }
    let mut replayed = Vec::with_capacity(decisions.len());
    for t in 1..=sim.steps {
        let mut next = matrices[t - 1].clone();
        for d in by_step.get(&t).map(Vec::as_slice).unwrap_or_default() {
            next.set(d.focal, d.target, d.sign)?;
            replayed.push(Decision {
                iteration: d.iteration,
                focal: d.focal,
                target: d.target,
                raw: String::new(),
                parsed: d.parsed,
                sign: d.sign,
                refusal: d.refusal,
                latency: Duration::from_millis(d.latency_ms),
                prompt: None,
            });
        }
        matrices.push(next);
    }
    Ok(Trajectory {
        matrices,
        decisions: replayed,
        refusals: sim.refusals,
        aborted: sim.aborted.clone(),
    })
}

/// Loads the manifest and every setting's logs. Settings without logs
/// contribute empty groups.
pub fn load_run(experiment_dir: &Path) -> Result<LoadedRun> {
    let manifest = RunManifest::load(experiment_dir)?;
    let mut run = LoadedRun {
        trajectories: BTreeMap::new(),
        keywords: BTreeMap::new(),
        records: BTreeMap::new(),
        simulations: BTreeMap::new(),
        corrupt: 0,
        manifest,
    };
    for entry in &run.manifest.settings {
        let sdir = experiment_dir.join(&entry.dir);
        let (mut sims, bad_sims) = read_jsonl::<SimulationRecord>(&sdir.join(SIMULATIONS_FILE))?;
        let (decs, bad_decs) = read_jsonl::<DecisionRecord>(&sdir.join(DECISIONS_FILE))?;
        run.corrupt += bad_sims + bad_decs;
        sims.sort_by_key(|(s, _)| s.simulation);
        sims.dedup_by_key(|(s, _)| s.simulation);
        let complete: BTreeSet<usize> = sims.iter().map(|(s, _)| s.simulation).collect();

        let mut grouped: BTreeMap<usize, Vec<DecisionRecord>> = BTreeMap::new();
        let mut tally = KeywordTally::default();
        for (d, _) in decs.into_iter().filter(|(d, _)| complete.contains(&d.simulation)) {
            tally.add(&d.keywords);
            grouped.entry(d.simulation).or_default().push(d);
        }
        let mut trajectories = Vec::with_capacity(sims.len());
        for (s, _) in &sims {
            let ds = grouped.get(&s.simulation).map(Vec::as_slice).unwrap_or_default();
            trajectories.push(reconstruct_trajectory(s, ds)?);
        }
        run.trajectories.insert(entry.key.clone(), trajectories);
        run.keywords.insert(entry.key.clone(), tally);
        run.records.insert(entry.key.clone(), grouped);
        run.simulations
            .insert(entry.key.clone(), sims.into_iter().map(|(s, _)| s).collect());
    }
    if run.corrupt > 0 {
        log::warn!("skipped {} unreadable log line(s)", run.corrupt);
    }
    Ok(run)
}

/// Recomputes every report from the logs and writes them to `reports/`.
pub fn report(experiment_dir: &Path, opts: &ReportOptions) -> Result<ReportSet> {
    let run = load_run(experiment_dir)?;
    let set = compute_reports(&run.trajectories, &run.keywords, run.manifest.expected_responses(), opts);
    write_reports(&experiment_dir.join(&run.manifest.reports), &set)?;
    Ok(set)
}

/// A logged answer the current parser reads differently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParseDiff {
    pub setting: String,
    pub simulation: usize,
    pub iteration: usize,
    pub focal: usize,
    pub target: usize,
    pub logged: ParsedAnswer,
    pub replayed: ParsedAnswer,
}

#[derive(Clone, Debug, Default)]
pub struct ReplaySummary {
    pub reports: ReportSet,
    pub diffs: Vec<ParseDiff>,
    /// Records written by a different parser version.
    pub version_mismatches: usize,
    pub corrupt: usize,
    pub simulations: usize,
}

impl ReplaySummary {
    /// True when the replay differs in any way from the logged run.
    pub fn flagged(&self) -> bool {
        !self.diffs.is_empty() || self.version_mismatches > 0
    }
}

/// Re-runs every logged simulation with its recorded responses fed back
/// through the current parser, and writes the resulting reports to `out`
/// (default `<experiment>/replay`). A `diffs.csv` lists answers the parser
/// now reads differently.
pub fn replay(experiment_dir: &Path, out: Option<&Path>, opts: &ReportOptions) -> Result<ReplaySummary> {
    let run = load_run(experiment_dir)?;
    let dialect = run.manifest.sweep.backend.dialect();
    let mut summary = ReplaySummary {
        corrupt: run.corrupt,
        ..ReplaySummary::default()
    };
    let mut groups = BTreeMap::new();
    let mut tallies = BTreeMap::new();
    for entry in &run.manifest.settings {
        let slug = entry.key.slug();
        let sims = &run.simulations[&entry.key];
        let records = &run.records[&entry.key];
        let mut trajectories = Vec::with_capacity(sims.len());
        let mut tally = KeywordTally::default();
        for sim in sims {
            let logged = records.get(&sim.simulation).map(Vec::as_slice).unwrap_or_default();
            summary.version_mismatches += logged.iter().filter(|d| d.parser_version != PARSER_VERSION).count();
            let agent = ScriptedAgent::new(
                logged.iter().map(|d| TranscriptEntry {
                    iteration: d.iteration,
                    focal: d.focal,
                    target: d.target,
                    raw: d.raw.clone(),
                }),
                dialect,
            );
            let mut cfg = entry.config.clone();
            cfg.iterations = sim.steps;
            let mut t = run_simulation(&cfg, sim.initial.clone(), &agent)?;
            // a logged abort happened after the last complete step
            if sim.aborted.is_some() {
                t.aborted = sim.aborted.clone();
            }
            let by_key: BTreeMap<_, _> = logged.iter().map(|d| ((d.iteration, d.focal, d.target), d)).collect();
            for d in &t.decisions {
                tally.add(&scan_keywords(&d.raw, &opts.keywords));
                if let Some(old) = by_key.get(&(d.iteration, d.focal, d.target)) {
                    if old.parsed != d.parsed {
                        summary.diffs.push(ParseDiff {
                            setting: slug.clone(),
                            simulation: sim.simulation,
                            iteration: d.iteration,
                            focal: d.focal,
                            target: d.target,
                            logged: old.parsed,
                            replayed: d.parsed,
                        });
                    }
                }
            }
            trajectories.push(t);
        }
        summary.simulations += trajectories.len();
        groups.insert(entry.key.clone(), trajectories);
        tallies.insert(entry.key.clone(), tally);
    }
    summary.reports = compute_reports(&groups, &tallies, run.manifest.expected_responses(), opts);
    let out = out.map_or_else(|| experiment_dir.join(REPLAY_DIR), Path::to_path_buf);
    write_reports(&out, &summary.reports)?;
    let diff_path = out.join("diffs.csv");
    if summary.diffs.is_empty() {
        if diff_path.exists() {
            fs::remove_file(diff_path)?;
        }
    } else {
        let mut w = csv::Writer::from_path(diff_path)?;
        for d in &summary.diffs {
            w.serialize(d)?;
        }
        w.flush()?;
    }
    if summary.flagged() {
        log::warn!(
            "replay differs from the log: {} changed answer(s), {} record(s) from parser version other than {PARSER_VERSION}",
            summary.diffs.len(),
            summary.version_mismatches
        );
    }
    Ok(summary)
}

/// Key-value run configuration; every field mirrors a command-line flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `rule`, `constant-positive`, `constant-negative`, `constant-neutral`, `llm` or `scripted`.
    pub backend: String,
    pub endpoint: String,
    pub model: String,
    pub dialect: PromptDialect,
    /// One interaction kind or `all`.
    pub kind: String,
    /// One update mechanism or `all`.
    pub mechanism: String,
    pub m: usize,
    pub n: usize,
    pub iterations: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub refusal_threshold: f64,
    /// `auto`, `exhaustive` or `random`.
    pub init: String,
    pub out: PathBuf,
    pub transcript: Option<PathBuf>,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let endpoint = EndpointConfig::default();
        RunConfig {
            backend: "rule".into(),
            endpoint: endpoint.base_url,
            model: String::new(),
            dialect: PromptDialect::Llama,
            kind: "all".into(),
            mechanism: "all".into(),
            m: 3,
            n: crate::dynamics::DEFAULT_SIMULATIONS,
            iterations: crate::dynamics::DEFAULT_ITERATIONS,
            seed: 0,
            workers: None,
            refusal_threshold: crate::analytics::DEFAULT_REFUSAL_THRESHOLD,
            init: "auto".into(),
            out: PathBuf::from("runs"),
            transcript: None,
            api_key_env: endpoint.api_key_env,
            temperature: endpoint.temperature,
            max_tokens: endpoint.max_tokens,
            timeout_secs: endpoint.timeout_secs,
            retries: endpoint.retries,
            max_in_flight: endpoint.max_in_flight,
        }
    }
}

fn expand<T: Copy + std::str::FromStr<Err = Error>>(value: &str, all: &[T]) -> Result<Vec<T>> {
    if value.eq_ignore_ascii_case("all") {
        Ok(all.to_vec())
    } else {
        value.split(',').map(|v| v.trim().parse()).collect()
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn backend_spec(&self) -> Result<BackendSpec> {
        Ok(match self.backend.as_str() {
            "rule" => BackendSpec::Rule,
            "constant-positive" => BackendSpec::Constant { sign: Sign::Positive },
            "constant-negative" => BackendSpec::Constant { sign: Sign::Negative },
            "constant-neutral" => BackendSpec::Constant { sign: Sign::Neutral },
            "llm" => BackendSpec::Llm {
                endpoint: EndpointConfig {
                    base_url: self.endpoint.clone(),
                    model: self.model.clone(),
                    temperature: self.temperature,
                    max_tokens: self.max_tokens,
                    timeout_secs: self.timeout_secs,
                    retries: self.retries,
                    api_key_env: self.api_key_env.clone(),
                    max_in_flight: self.max_in_flight,
                    ..EndpointConfig::default()
                },
                dialect: self.dialect,
            },
            "scripted" => BackendSpec::Scripted {
                path: self
                    .transcript
                    .clone()
                    .ok_or_else(|| Error::Config("the scripted back-end needs a transcript".into()))?,
                dialect: self.dialect,
            },
            other => return Err(Error::Config(format!("unknown back-end `{other}`"))),
        })
    }

    pub fn sweep(&self) -> Result<Sweep> {
        let init = match self.init.as_str() {
            "auto" => None,
            "exhaustive" => Some(InitMode::ExhaustiveTriad),
            "random" => Some(InitMode::RademacherRandom),
            other => return Err(Error::Config(format!("unknown initialization `{other}`"))),
        };
        let sweep = Sweep::grid(
            &expand(&self.kind, &InteractionKind::ALL)?,
            &expand(&self.mechanism, &UpdateMechanism::ALL)?,
            self.m,
            self.n,
            self.iterations,
            self.seed,
            init,
            self.backend_spec()?,
        );
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn run_options(&self) -> RunOptions {
        let mut opts = RunOptions {
            out_dir: self.out.clone(),
            ..RunOptions::default()
        };
        if let Some(w) = self.workers {
            opts.workers = w;
        }
        opts.report.refusal_threshold = self.refusal_threshold;
        opts
    }
}
