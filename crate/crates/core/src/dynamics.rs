//! Synchronous update protocol.
//!
//! At every iteration each agent `i` revises its interaction toward every
//! other agent `j`. All decisions of one iteration are made from the same
//! snapshot of the previous iteration; the new matrix is assembled only once
//! every decision is in.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentBackend;
use crate::error::{Error, Result};
use crate::graph::{triad_initialization, InteractionMatrix, Sign, TRIAD_INITIALIZATIONS};
use crate::parser::ParsedAnswer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    Relationship,
    Appraisal,
    Opinion,
}

impl InteractionKind {
    pub const ALL: [InteractionKind; 3] = [
        InteractionKind::Relationship,
        InteractionKind::Appraisal,
        InteractionKind::Opinion,
    ];

    pub fn noun(self) -> &'static str {
        match self {
            InteractionKind::Relationship => "relationship",
            InteractionKind::Appraisal => "appraisal",
            InteractionKind::Opinion => "opinion",
        }
    }
}

impl fmt::Display for InteractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.noun())
    }
}

impl FromStr for InteractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InteractionKind::ALL
            .into_iter()
            .find(|k| k.noun() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown interaction kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMechanism {
    Homophily,
    Influence,
}

impl UpdateMechanism {
    pub const ALL: [UpdateMechanism; 2] = [UpdateMechanism::Homophily, UpdateMechanism::Influence];

    pub fn name(self) -> &'static str {
        match self {
            UpdateMechanism::Homophily => "homophily",
            UpdateMechanism::Influence => "influence",
        }
    }
}

impl fmt::Display for UpdateMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateMechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UpdateMechanism::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown update mechanism `{s}`")))
    }
}

/// How a third agent `k` relates to the focal agent `i` and the target `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerView {
    pub peer: usize,
    /// `s_ik`
    pub focal_to_peer: Sign,
    /// `s_jk`
    pub target_to_peer: Sign,
    /// `s_ki`
    pub peer_to_focal: Sign,
}

/// Everything agent `focal` is shown before deciding its new interaction toward `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateContext {
    /// Iteration being computed; signs come from iteration `iteration - 1`.
    pub iteration: usize,
    pub m: usize,
    pub focal: usize,
    pub target: usize,
    pub kind: InteractionKind,
    pub mechanism: UpdateMechanism,
    /// `s_ij`
    pub focal_to_target: Sign,
    /// `s_ji`
    pub target_to_focal: Sign,
    /// Every `k ∉ {i, j}`, ascending.
    pub peers: Vec<PeerView>,
}

impl UpdateContext {
    /// The direct link used for comparison: `s_ij` under homophily, `s_ji` under influence.
    pub fn reference(&self) -> Sign {
        match self.mechanism {
            UpdateMechanism::Homophily => self.focal_to_target,
            UpdateMechanism::Influence => self.target_to_focal,
        }
    }
}

pub fn build_context(
    matrix: &InteractionMatrix,
    focal: usize,
    target: usize,
    kind: InteractionKind,
    mechanism: UpdateMechanism,
) -> Result<UpdateContext> {
    let focal_to_target = matrix.try_get(focal, target)?;
    let target_to_focal = matrix.try_get(target, focal)?;
    let peers = (0..matrix.m())
        .filter(|&k| k != focal && k != target)
        .map(|k| PeerView {
            peer: k,
            focal_to_peer: matrix[(focal, k)],
            target_to_peer: matrix[(target, k)],
            peer_to_focal: matrix[(k, focal)],
        })
        .collect();
    Ok(UpdateContext {
        iteration: 0,
        m: matrix.m(),
        focal,
        target,
        kind,
        mechanism,
        focal_to_target,
        target_to_focal,
        peers,
    })
}

/// `None` for a refusal, which carries no sign.
pub fn coerce_reported_sign(parsed: ParsedAnswer) -> Option<Sign> {
    match parsed {
        ParsedAnswer::Positive | ParsedAnswer::NeutralOrPositive => Some(Sign::Positive),
        ParsedAnswer::Negative | ParsedAnswer::NeutralOrNegative => Some(Sign::Negative),
        ParsedAnswer::Neutral => Some(Sign::Neutral),
        ParsedAnswer::Refusal => None,
    }
}

/// One agent decision inside a step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub iteration: usize,
    pub focal: usize,
    pub target: usize,
    pub raw: String,
    pub parsed: ParsedAnswer,
    /// Sign in effect after the decision; the prior sign on refusal.
    pub sign: Sign,
    pub refusal: bool,
    pub latency: Duration,
    pub prompt: Option<String>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub matrix: InteractionMatrix,
    pub decisions: Vec<Decision>,
}

/// Updates every ordered pair from `matrix` (the previous iteration) and
/// assembles the next matrix. Decisions come back ordered by focal then target.
///
/// A refusal keeps the previous sign. A transport failure is returned as an error.
pub fn synchronous_step(
    matrix: &InteractionMatrix,
    agent: &dyn AgentBackend,
    kind: InteractionKind,
    mechanism: UpdateMechanism,
    iteration: usize,
) -> Result<StepOutcome> {
    let pairs: Vec<(usize, usize)> = matrix.iter().map(|(i, j, _)| (i, j)).collect();
    let decisions = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut ctx = build_context(matrix, i, j, kind, mechanism)?;
            ctx.iteration = iteration;
            let out = agent.decide(&ctx)?;
            let coerced = coerce_reported_sign(out.parsed);
            Ok(Decision {
                iteration,
                focal: i,
                target: j,
                raw: out.justification,
                parsed: out.parsed,
                sign: coerced.unwrap_or(ctx.focal_to_target),
                refusal: coerced.is_none(),
                latency: out.latency,
                prompt: out.prompt,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let next = InteractionMatrix::from_entries(matrix.m(), decisions.iter().map(|d| d.sign).collect())?;
    Ok(StepOutcome {
        matrix: next,
        decisions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All 64 signed three-agent states, `n` simulations each.
    ExhaustiveTriad,
    /// Independent fair ±1 draws per simulation.
    RademacherRandom,
}

/// One setting of the protocol: population, horizon, interaction kind and mechanism.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub m: usize,
    /// Simulations per initialization (exhaustive) or in total (random).
    pub simulations: usize,
    pub iterations: usize,
    pub kind: InteractionKind,
    pub mechanism: UpdateMechanism,
    pub seed: u64,
    pub init: InitMode,
}

pub const DEFAULT_ITERATIONS: usize = 10;
pub const DEFAULT_SIMULATIONS: usize = 10;

impl ExperimentConfig {
    pub fn new(m: usize, kind: InteractionKind, mechanism: UpdateMechanism) -> Self {
        ExperimentConfig {
            m,
            simulations: DEFAULT_SIMULATIONS,
            iterations: DEFAULT_ITERATIONS,
            kind,
            mechanism,
            seed: 0,
            init: if m == 3 {
                InitMode::ExhaustiveTriad
            } else {
                InitMode::RademacherRandom
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::PopulationTooSmall(self.m));
        }
        if self.init == InitMode::ExhaustiveTriad && self.m != 3 {
            return Err(Error::Config(format!(
                "exhaustive triad initialization needs m = 3, got {}",
                self.m
            )));
        }
        Ok(())
    }

    pub fn total_simulations(&self) -> usize {
        match self.init {
            InitMode::ExhaustiveTriad => self.simulations * TRIAD_INITIALIZATIONS,
            InitMode::RademacherRandom => self.simulations,
        }
    }

    /// `T · m · (m − 1)`
    pub fn decisions_per_simulation(&self) -> usize {
        self.iterations * self.m * (self.m - 1)
    }

    /// Initial state of simulation `sim` and, for exhaustive runs, its initialization index.
    ///
    /// Exhaustive runs lay out simulations initialization-major:
    /// `sim = init_index · n + repetition`.
    pub fn initialization(&self, sim: usize) -> Result<(Option<usize>, InteractionMatrix)> {
        match self.init {
            InitMode::ExhaustiveTriad => {
                let index = sim / self.simulations.max(1);
                let matrix = triad_initialization(index)
                    .ok_or_else(|| Error::Config(format!("simulation {sim} out of range")))?;
                Ok((Some(index), matrix))
            }
            InitMode::RademacherRandom => {
                Ok((None, random_initialization(self.m, &mut simulation_rng(self.seed, sim))?))
            }
        }
    }
}

/// Per-simulation generator: the master seed with the simulation index as stream,
/// so any simulation can be reproduced on its own.
pub fn simulation_rng(seed: u64, sim: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sim as u64);
    rng
}

/// Every entry independently −1 or +1 with probability ½.
pub fn random_initialization(m: usize, rng: &mut impl Rng) -> Result<InteractionMatrix> {
    InteractionMatrix::from_fn(m, |_, _| if rng.random::<bool>() { Sign::Positive } else { Sign::Negative })
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// States for `t = 0..=T` (fewer if aborted).
    pub matrices: Vec<InteractionMatrix>,
    pub decisions: Vec<Decision>,
    pub refusals: usize,
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn initial(&self) -> &InteractionMatrix {
        &self.matrices[0]
    }

    pub fn final_matrix(&self) -> &InteractionMatrix {
        self.matrices.last().expect("trajectory holds its initial state")
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Neither aborted nor touched by a refusal.
    pub fn is_valid(&self) -> bool {
        !self.is_aborted() && self.refusals == 0
    }
}

/// Runs `cfg.iterations` synchronous steps from `init`.
///
/// A failing back-end (transport exhausted, malformed reply, missing
/// recording) ends the run early with `aborted` set; refusals do not.
pub fn run_simulation(
    cfg: &ExperimentConfig,
    init: InteractionMatrix,
    agent: &dyn AgentBackend,
) -> Result<Trajectory> {
    init.check_initial()?;
    let mut trajectory = Trajectory {
        matrices: vec![init],
        decisions: Vec::with_capacity(cfg.decisions_per_simulation()),
        refusals: 0,
        aborted: None,
    };
    for t in 1..=cfg.iterations {
        let current = trajectory.final_matrix();
        match synchronous_step(current, agent, cfg.kind, cfg.mechanism, t) {
            Ok(step) => {
                trajectory.refusals += step.decisions.iter().filter(|d| d.refusal).count();
                trajectory.decisions.extend(step.decisions);
                trajectory.matrices.push(step.matrix);
            }
            Err(e) => {
                log::warn!("simulation aborted at t = {t}: {e}");
                trajectory.aborted = Some(e.to_string());
                break;
            }
        }
    }
    Ok(trajectory)
}
