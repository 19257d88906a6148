//! Aggregate metrics over finished trajectories, plus CSV and SVG emitters.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{InteractionKind, Trajectory, UpdateMechanism};
use crate::error::Result;
use crate::graph::{BalancedTriadClass, EdgeCycleCounts, InteractionMatrix};
use crate::parser::{KeywordHits, KeywordSpec, COGNITIVE, COGNITIVE_DISSONANCE};

/// Settings whose refusal rate exceeds this are marked unreported.
pub const DEFAULT_REFUSAL_THRESHOLD: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SettingKey {
    pub kind: InteractionKind,
    pub mechanism: UpdateMechanism,
    pub m: usize,
    pub model: String,
}

impl SettingKey {
    pub fn new(kind: InteractionKind, mechanism: UpdateMechanism, m: usize, model: impl Into<String>) -> Self {
        SettingKey {
            kind,
            mechanism,
            m,
            model: model.into(),
        }
    }

    /// File-name friendly form, e.g. `appraisal-homophily-m3-rule`.
    pub fn slug(&self) -> String {
        let model: String = self
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' })
            .collect();
        format!("{}-{}-m{}-{}", self.kind, self.mechanism, self.m, model)
    }
}

impl fmt::Display for SettingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / m={} / {}", self.kind, self.mechanism, self.m, self.model)
    }
}

/// `S` when every balanced outcome is structurally balanced, `C` when some are only clustering-balanced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strictness {
    S,
    C,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct BalanceCounts {
    simulations: usize,
    aborted: usize,
    refusal_invalid: usize,
    balanced: usize,
    structural: usize,
    balanced_inclusive: usize,
    refusals: usize,
    decisions: usize,
}

impl BalanceCounts {
    fn of(t: &Trajectory) -> Self {
        let fin = t.final_matrix();
        let balanced = !t.is_aborted() && fin.is_clustering_balanced();
        BalanceCounts {
            simulations: 1,
            aborted: usize::from(t.is_aborted()),
            refusal_invalid: usize::from(!t.is_aborted() && t.refusals > 0),
            balanced: usize::from(t.is_valid() && balanced),
            structural: usize::from(t.is_valid() && balanced && fin.is_structurally_balanced()),
            balanced_inclusive: usize::from(balanced),
            refusals: t.refusals,
            decisions: t.decisions.len(),
        }
    }

    fn merge(self, o: Self) -> Self {
        BalanceCounts {
            simulations: self.simulations + o.simulations,
            aborted: self.aborted + o.aborted,
            refusal_invalid: self.refusal_invalid + o.refusal_invalid,
            balanced: self.balanced + o.balanced,
            structural: self.structural + o.structural,
            balanced_inclusive: self.balanced_inclusive + o.balanced_inclusive,
            refusals: self.refusals + o.refusals,
            decisions: self.decisions + o.decisions,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub setting: SettingKey,
    pub simulations: usize,
    pub aborted: usize,
    /// Completed simulations with at least one refusal.
    pub refusal_invalid: usize,
    /// Neither aborted nor refusal-touched.
    pub valid: usize,
    /// Valid simulations ending clustering-balanced.
    pub balanced: usize,
    /// ... of which structurally balanced.
    pub structural: usize,
    /// Balanced finals among all completed simulations, refusals included.
    pub balanced_inclusive: usize,
    pub refusals: usize,
    pub decisions: usize,
    /// `balanced / valid`, in percent.
    pub frequency: Option<f64>,
    /// `balanced_inclusive / (simulations − aborted)`, in percent.
    pub inclusive_frequency: Option<f64>,
    pub strictness: Option<Strictness>,
    pub refusal_rate: f64,
    /// False once the refusal rate passes the threshold.
    pub reported: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    pub fn get(&self, key: &SettingKey) -> Option<&BalanceRow> {
        self.rows.iter().find(|r| &r.setting == key)
    }
}

fn percent(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Share of simulations whose final state is clustering-balanced, per setting.
/// Empty groups produce no row.
pub fn balance_frequency(groups: &BTreeMap<SettingKey, Vec<Trajectory>>, refusal_threshold: f64) -> BalanceReport {
    let rows = groups
        .iter()
        .filter(|(_, ts)| !ts.is_empty())
        .map(|(key, ts)| {
            let c = ts
                .par_iter()
                .map(BalanceCounts::of)
                .reduce(BalanceCounts::default, BalanceCounts::merge);
            let valid = c.simulations - c.aborted - c.refusal_invalid;
            let refusal_rate = if c.decisions == 0 {
                0.0
            } else {
                c.refusals as f64 / c.decisions as f64
            };
            BalanceRow {
                setting: key.clone(),
                simulations: c.simulations,
                aborted: c.aborted,
                refusal_invalid: c.refusal_invalid,
                valid,
                balanced: c.balanced,
                structural: c.structural,
                balanced_inclusive: c.balanced_inclusive,
                refusals: c.refusals,
                decisions: c.decisions,
                frequency: percent(c.balanced, valid),
                inclusive_frequency: percent(c.balanced_inclusive, c.simulations - c.aborted),
                strictness: (c.balanced > 0).then_some(if c.structural == c.balanced {
                    Strictness::S
                } else {
                    Strictness::C
                }),
                refusal_rate,
                reported: refusal_rate <= refusal_threshold,
            }
        })
        .collect();
    BalanceReport { rows }
}

/// Counts per balanced triad class, in [`BalancedTriadClass::ALL`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriadHistogram(pub [usize; 5]);

impl TriadHistogram {
    pub fn count(&self, class: BalancedTriadClass) -> usize {
        self.0[class.bin()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn merge(mut self, o: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
        self
    }
}

/// Class histogram of the triads of balanced final states. Every triad of a
/// clustering-balanced population is counted; unbalanced finals add nothing.
pub fn triad_class_histogram<'a>(finals: impl IntoIterator<Item = &'a InteractionMatrix>) -> TriadHistogram {
    let mut h = TriadHistogram::default();
    for m in finals.into_iter().filter(|m| m.is_clustering_balanced()) {
        for class in m.triads().filter_map(|t| t.balanced_class()) {
            h.0[class.bin()] += 1;
        }
    }
    h
}

fn histogram_of_valid(ts: &[Trajectory]) -> TriadHistogram {
    ts.par_iter()
        .filter(|t| t.is_valid())
        .map(|t| triad_class_histogram([t.final_matrix()]))
        .reduce(TriadHistogram::default, TriadHistogram::merge)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityTally {
    pub stable: usize,
    pub total: usize,
}

impl StabilityTally {
    pub fn fraction(&self) -> Option<f64> {
        (self.total > 0).then(|| self.stable as f64 / self.total as f64)
    }

    fn merge(self, o: Self) -> Self {
        StabilityTally {
            stable: self.stable + o.stable,
            total: self.total + o.total,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityCriterion {
    /// No interaction changes at any step.
    #[default]
    AllIterationsIdentical,
    /// Only the end state is compared with the start; transient flips are forgiven.
    FinalMatchesInitial,
}

pub fn is_unchanged(t: &Trajectory, criterion: StabilityCriterion) -> bool {
    match criterion {
        StabilityCriterion::AllIterationsIdentical => t.matrices.iter().all(|m| m == t.initial()),
        StabilityCriterion::FinalMatchesInitial => t.final_matrix() == t.initial(),
    }
}

/// Among completed trajectories that start clustering-balanced, how many never move.
pub fn stability_initially_balanced<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    criterion: StabilityCriterion,
) -> StabilityTally {
    trajectories
        .into_iter()
        .filter(|t| !t.is_aborted() && t.initial().is_clustering_balanced())
        .fold(StabilityTally::default(), |acc, t| {
            acc.merge(StabilityTally {
                stable: usize::from(is_unchanged(t, criterion)),
                total: 1,
            })
        })
}

/// Number of final update rounds examined by [`stability_last_half`] for horizon `t`.
pub fn last_half_window(t: usize) -> usize {
    t.div_ceil(2)
}

static WINDOW_WARNED: AtomicBool = AtomicBool::new(false);

/// True when states `t = T − w ..= T` are identical, `w` defaulting to `⌈T/2⌉`.
pub fn is_stable_last_half(t: &Trajectory, window: Option<usize>) -> bool {
    let horizon = t.steps();
    let w = window.unwrap_or_else(|| last_half_window(horizon)).min(horizon);
    let tail = &t.matrices[horizon - w..];
    tail.iter().all(|m| m == &tail[0])
}

/// Share of completed trajectories that hold still over their last rounds.
pub fn stability_last_half<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    window: Option<usize>,
) -> StabilityTally {
    trajectories
        .into_iter()
        .filter(|t| !t.is_aborted())
        .fold(StabilityTally::default(), |acc, t| {
            if window.is_none() && t.steps() != 10 && !WINDOW_WARNED.swap(true, Ordering::Relaxed) {
                log::warn!(
                    "horizon T = {}; last-half stability uses the final {} rounds",
                    t.steps(),
                    last_half_window(t.steps())
                );
            }
            acc.merge(StabilityTally {
                stable: usize::from(is_stable_last_half(t, window)),
                total: 1,
            })
        })
}

pub fn time_series(t: &Trajectory) -> Vec<EdgeCycleCounts> {
    t.matrices.iter().map(InteractionMatrix::edge_and_cycle_counts).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanPoint {
    pub positive_edges: f64,
    pub negative_edges: f64,
    pub positive_cycles: f64,
}

/// Per-`t` averages over completed trajectories.
pub fn mean_time_series(trajectories: &[Trajectory]) -> Vec<MeanPoint> {
    let done: Vec<_> = trajectories.iter().filter(|t| !t.is_aborted()).collect();
    let len = done.iter().map(|t| t.matrices.len()).min().unwrap_or(0);
    let mut sums = vec![[0usize; 3]; len];
    for t in &done {
        for (s, c) in sums.iter_mut().zip(time_series(t)) {
            s[0] += c.positive_edges;
            s[1] += c.negative_edges;
            s[2] += c.positive_cycles;
        }
    }
    let n = done.len().max(1) as f64;
    sums.into_iter()
        .map(|s| MeanPoint {
            positive_edges: s[0] as f64 / n,
            negative_edges: s[1] as f64 / n,
            positive_cycles: s[2] as f64 / n,
        })
        .collect()
}

/// Running keyword counts for one setting.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTally {
    pub responses: usize,
    /// Responses mentioning each term at least once.
    pub responses_with: BTreeMap<String, usize>,
    /// Raw occurrence totals.
    pub occurrences: BTreeMap<String, u64>,
    pub with_cognitive: usize,
    pub cognitive_without_phrase: usize,
}

impl KeywordTally {
    pub fn add(&mut self, hits: &KeywordHits) {
        self.responses += 1;
        for (term, n) in hits.iter() {
            *self.responses_with.entry(term.to_string()).or_default() += 1;
            *self.occurrences.entry(term.to_string()).or_default() += u64::from(n);
        }
        if hits.contains(COGNITIVE) {
            self.with_cognitive += 1;
            if !hits.contains(COGNITIVE_DISSONANCE) {
                self.cognitive_without_phrase += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordRow {
    pub setting: SettingKey,
    pub term: String,
    pub responses_with_term: usize,
    pub occurrences: u64,
    pub responses: usize,
    pub expected_responses: Option<usize>,
    pub percent: Option<f64>,
}

/// Percentage of responses mentioning each tracked term, per setting.
///
/// `expected` supplies the closed-form response count for a setting; a
/// mismatch with the actual record count is logged.
pub fn keyword_frequency_report(
    tallies: &BTreeMap<SettingKey, KeywordTally>,
    spec: &KeywordSpec,
    expected: impl Fn(&SettingKey) -> Option<usize>,
) -> Vec<KeywordRow> {
    let mut rows = Vec::new();
    for (key, tally) in tallies {
        let exp = expected(key);
        if let Some(e) = exp.filter(|&e| e != tally.responses) {
            log::warn!("{key}: {} responses logged, {e} expected", tally.responses);
        }
        for term in spec.terms() {
            let with = tally.responses_with.get(term).copied().unwrap_or(0);
            rows.push(KeywordRow {
                setting: key.clone(),
                term: term.clone(),
                responses_with_term: with,
                occurrences: tally.occurrences.get(term).copied().unwrap_or(0),
                responses: tally.responses,
                expected_responses: exp,
                percent: percent(with, tally.responses),
            });
        }
    }
    rows
}

/// Everything written to a report directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSet {
    pub balance: BalanceReport,
    pub histograms: BTreeMap<SettingKey, TriadHistogram>,
    pub initially_balanced: BTreeMap<SettingKey, [StabilityTally; 2]>,
    pub last_half: BTreeMap<SettingKey, StabilityTally>,
    pub series: BTreeMap<SettingKey, Vec<MeanPoint>>,
    pub keywords: Vec<KeywordRow>,
    pub cooccurrence: BTreeMap<SettingKey, (usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub refusal_threshold: f64,
    pub last_half_window: Option<usize>,
    pub keywords: KeywordSpec,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            refusal_threshold: DEFAULT_REFUSAL_THRESHOLD,
            last_half_window: None,
            keywords: KeywordSpec::default(),
        }
    }
}

pub fn compute_reports(
    groups: &BTreeMap<SettingKey, Vec<Trajectory>>,
    keywords: &BTreeMap<SettingKey, KeywordTally>,
    expected_responses: impl Fn(&SettingKey) -> Option<usize>,
    opts: &ReportOptions,
) -> ReportSet {
    let mut set = ReportSet {
        balance: balance_frequency(groups, opts.refusal_threshold),
        keywords: keyword_frequency_report(keywords, &opts.keywords, expected_responses),
        ..ReportSet::default()
    };
    for (key, ts) in groups.iter().filter(|(_, ts)| !ts.is_empty()) {
        set.histograms.insert(key.clone(), histogram_of_valid(ts));
        set.initially_balanced.insert(
            key.clone(),
            [
                stability_initially_balanced(ts, StabilityCriterion::AllIterationsIdentical),
                stability_initially_balanced(ts, StabilityCriterion::FinalMatchesInitial),
            ],
        );
        set.last_half.insert(key.clone(), stability_last_half(ts, opts.last_half_window));
        set.series.insert(key.clone(), mean_time_series(ts));
    }
    for (key, tally) in keywords {
        set.cooccurrence
            .insert(key.clone(), (tally.with_cognitive, tally.cognitive_without_phrase));
    }
    set
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

fn setting_cols(k: &SettingKey) -> [String; 4] {
    [k.kind.to_string(), k.mechanism.to_string(), k.m.to_string(), k.model.clone()]
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

const SETTING_HEADER: [&str; 4] = ["kind", "mechanism", "m", "model"];

fn with_setting(k: &SettingKey, rest: impl IntoIterator<Item = String>) -> Vec<String> {
    setting_cols(k).into_iter().chain(rest).collect()
}

/// Writes CSV tables and SVG charts into `dir`, replacing earlier ones.
pub fn write_reports(dir: &Path, set: &ReportSet) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = |cols: &[&'static str]| -> Vec<&'static str> { SETTING_HEADER.iter().chain(cols).copied().collect() };

    write_csv(
        &dir.join("balance.csv"),
        &header(&[
            "simulations",
            "aborted",
            "refusal_invalid",
            "valid",
            "balanced",
            "structural",
            "balanced_inclusive",
            "frequency_pct",
            "inclusive_frequency_pct",
            "strictness",
            "refusals",
            "decisions",
            "refusal_rate",
            "reported",
        ]),
        set.balance.rows.iter().map(|r| {
            with_setting(
                &r.setting,
                [
                    r.simulations.to_string(),
                    r.aborted.to_string(),
                    r.refusal_invalid.to_string(),
                    r.valid.to_string(),
                    r.balanced.to_string(),
                    r.structural.to_string(),
                    r.balanced_inclusive.to_string(),
                    fmt_opt(r.frequency),
                    fmt_opt(r.inclusive_frequency),
                    r.strictness.map(|s| format!("{s:?}")).unwrap_or_default(),
                    r.refusals.to_string(),
                    r.decisions.to_string(),
                    format!("{:.4}", r.refusal_rate),
                    r.reported.to_string(),
                ],
            )
        }),
    )?;

    write_csv(
        &dir.join("triad_histogram.csv"),
        &header(&["class", "count"]),
        set.histograms.iter().flat_map(|(k, h)| {
            BalancedTriadClass::ALL
                .map(|c| with_setting(k, [c.label(), h.count(c).to_string()]))
        }),
    )?;

    let mut stability = Vec::new();
    for (k, [all, fin]) in &set.initially_balanced {
        for (metric, t) in [("initially_balanced", all), ("initially_balanced_final_only", fin)] {
            stability.push((k, metric, *t));
        }
        if let Some(t) = set.last_half.get(k) {
            stability.push((k, "last_half", *t));
        }
    }
    write_csv(
        &dir.join("stability.csv"),
        &header(&["metric", "stable", "total", "pct"]),
        stability.into_iter().map(|(k, metric, t)| {
            with_setting(
                k,
                [
                    metric.to_string(),
                    t.stable.to_string(),
                    t.total.to_string(),
                    fmt_opt(t.fraction().map(|f| f * 100.0)),
                ],
            )
        }),
    )?;

    write_csv(
        &dir.join("keywords.csv"),
        &header(&["term", "responses_with_term", "occurrences", "responses", "expected_responses", "pct"]),
        set.keywords.iter().map(|r| {
            with_setting(
                &r.setting,
                [
                    r.term.clone(),
                    r.responses_with_term.to_string(),
                    r.occurrences.to_string(),
                    r.responses.to_string(),
                    r.expected_responses.map(|e| e.to_string()).unwrap_or_default(),
                    fmt_opt(r.percent),
                ],
            )
        }),
    )?;

    write_csv(
        &dir.join("cooccurrence.csv"),
        &header(&["with_cognitive", "cognitive_without_dissonance", "fraction"]),
        set.cooccurrence.iter().map(|(k, &(with, without))| {
            let frac = (with > 0).then(|| without as f64 / with as f64);
            with_setting(k, [with.to_string(), without.to_string(), frac.map(|f| format!("{f:.4}")).unwrap_or_default()])
        }),
    )?;

    write_csv(
        &dir.join("timeseries.csv"),
        &header(&["t", "positive_edges", "negative_edges", "positive_cycles"]),
        set.series.iter().flat_map(|(k, pts)| {
            pts.iter().enumerate().map(move |(t, p)| {
                with_setting(
                    k,
                    [
                        t.to_string(),
                        format!("{:.4}", p.positive_edges),
                        format!("{:.4}", p.negative_edges),
                        format!("{:.4}", p.positive_cycles),
                    ],
                )
            })
        }),
    )?;

    for (k, h) in &set.histograms {
        fs::write(dir.join(format!("triad_histogram-{}.svg", k.slug())), histogram_svg(k, h))?;
    }
    for (k, pts) in &set.series {
        fs::write(dir.join(format!("timeseries-{}.svg", k.slug())), series_svg(k, pts))?;
    }
    Ok(())
}

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{}\" y=\"16\" text-anchor=\"middle\">{}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        escape(title),
        H - PAD,
        W - PAD / 2.0,
        H - PAD
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn histogram_svg(key: &SettingKey, h: &TriadHistogram) -> String {
    let mut s = svg_open(&format!("Balanced triads: {key}"));
    let max = h.0.iter().copied().max().unwrap_or(0).max(1) as f64;
    let slot = (W - 1.5 * PAD) / 5.0;
    for class in BalancedTriadClass::ALL {
        let n = h.count(class);
        let bh = (H - 2.0 * PAD) * n as f64 / max;
        let x = PAD + slot * class.bin() as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{n}</text>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            H - PAD - bh,
            slot * 0.7,
            if class.is_structural() { "#4c72b0" } else { "#dd8452" },
            x + slot * 0.35,
            H - PAD - bh - 4.0,
            x + slot * 0.35,
            H - PAD + 14.0,
            escape(&class.label()),
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn series_svg(key: &SettingKey, pts: &[MeanPoint]) -> String {
    let mut s = svg_open(&format!("Mean counts per iteration: {key}"));
    let max = pts
        .iter()
        .flat_map(|p| [p.positive_edges, p.negative_edges, p.positive_cycles])
        .fold(1.0_f64, f64::max);
    let span = pts.len().saturating_sub(1).max(1) as f64;
    let xy = |t: usize, v: f64| {
        (
            PAD + (W - 1.5 * PAD) * t as f64 / span,
            H - PAD - (H - 2.0 * PAD) * v / max,
        )
    };
    let lines: [(&str, &str, fn(&MeanPoint) -> f64); 3] = [
        ("positive cycles", "#1f77b4", |p| p.positive_cycles),
        ("positive edges", "#2ca02c", |p| p.positive_edges),
        ("negative edges", "#d62728", |p| p.negative_edges),
    ];
    for (row, (label, colour, get)) in lines.iter().enumerate() {
        let points: Vec<String> = pts
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let (x, y) = xy(t, get(p));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" fill=\"{colour}\">{label}</text>",
            points.join(" "),
            PAD + 6.0,
            30.0 + 13.0 * row as f64,
        );
    }
    for t in 0..pts.len() {
        let (x, _) = xy(t, 0.0);
        let _ = writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t}</text>", H - PAD + 14.0);
    }
    s.push_str("</svg>\n");
    s
}
