//! Signed-network balance dynamics driven by language-model or rule agents.
//!
//! A population of `m` agents holds a directed signed matrix. Each round every
//! agent re-decides its sign toward every other agent from a snapshot of the
//! previous round; the resulting trajectories are checked for structural and
//! clustering balance.

pub mod agents;
pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod gateway;
pub mod graph;
pub mod parser;
pub mod runner;

pub use agents::{AgentBackend, AgentDecision, ConstantAgent, RuleAgent, ScriptedAgent, TranscriptEntry};
pub use dynamics::{
    build_context, run_simulation, synchronous_step, ExperimentConfig, InitMode, InteractionKind, Trajectory,
    UpdateContext, UpdateMechanism,
};
pub use error::{Error, Result};
pub use gateway::{render_prompt, ChatClient, EndpointConfig, LlmAgent, PromptDialect};
pub use graph::{BalancedTriadClass, InteractionMatrix, Sign};
pub use parser::{extract_sign, scan_keywords, KeywordHits, ParsedAnswer};
