//! Agent decision interface and the deterministic back-ends.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dynamics::UpdateContext;
use crate::error::{Error, Result};
use crate::gateway::PromptDialect;
use crate::graph::Sign;
use crate::parser::{extract_sign, ParsedAnswer};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentDecision {
    pub parsed: ParsedAnswer,
    /// Full response text, answer and explanation.
    pub justification: String,
    pub latency: Duration,
    /// Prompt sent to the model, for back-ends that render one.
    pub prompt: Option<String>,
}

/// Something that can decide agent `i`'s new interaction toward `j`.
///
/// `decide` must not mutate simulation state and must tolerate concurrent calls.
pub trait AgentBackend: Send + Sync {
    fn decide(&self, ctx: &UpdateContext) -> Result<AgentDecision>;

    fn label(&self) -> String;
}

fn answer_for(sign: Sign) -> ParsedAnswer {
    match sign {
        Sign::Positive => ParsedAnswer::Positive,
        Sign::Negative => ParsedAnswer::Negative,
        Sign::Neutral => ParsedAnswer::Neutral,
    }
}

fn statement(ctx: &UpdateContext, sign: Sign) -> String {
    format!("My new {} of Individual {} will be {}.", ctx.kind, ctx.target, sign)
}

/// Heider-style majority rule over triads: `sign(Σ_k s_ik · s_jk)`, falling
/// back to the displayed reference sign on a tie. Neutral peer links count as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct RuleAgent;

impl RuleAgent {
    pub fn rule_sign(ctx: &UpdateContext) -> (Sign, i64) {
        let sum: i64 = ctx
            .peers
            .iter()
            .map(|p| i64::from((p.focal_to_peer * p.target_to_peer).value()))
            .sum();
        let sign = match Sign::of_sum(sum) {
            Sign::Neutral => ctx.reference(),
            s => s,
        };
        (sign, sum)
    }
}

impl AgentBackend for RuleAgent {
    fn decide(&self, ctx: &UpdateContext) -> Result<AgentDecision> {
        let (sign, sum) = Self::rule_sign(ctx);
        let reason = if sum == 0 {
            format!("The shared links balance out, so I keep the {} shown to me.", ctx.reference())
        } else {
            format!("Agreement with Individual {} over common acquaintances totals {sum}.", ctx.target)
        };
        Ok(AgentDecision {
            parsed: answer_for(sign),
            justification: format!("{}\n\nExplanation: {reason}", statement(ctx, sign)),
            latency: Duration::ZERO,
            prompt: None,
        })
    }

    fn label(&self) -> String {
        "rule".to_string()
    }
}

/// Always answers the configured sign.
#[derive(Clone, Copy, Debug)]
pub struct ConstantAgent {
    sign: Sign,
}

impl ConstantAgent {
    pub fn new(sign: Sign) -> Self {
        ConstantAgent { sign }
    }
}

impl AgentBackend for ConstantAgent {
    fn decide(&self, ctx: &UpdateContext) -> Result<AgentDecision> {
        Ok(AgentDecision {
            parsed: answer_for(self.sign),
            justification: statement(ctx, self.sign),
            latency: Duration::ZERO,
            prompt: None,
        })
    }

    fn label(&self) -> String {
        format!("constant-{}", self.sign)
    }
}

/// One recorded response. Decision logs share these field names, so a run
/// log can be loaded directly as a transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub iteration: usize,
    pub focal: usize,
    pub target: usize,
    pub raw: String,
}

/// Reads one transcript entry per line; blank lines are skipped and extra fields ignored.
pub fn load_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line)?);
    }
    Ok(entries)
}

/// Replays recorded responses through the real parser.
#[derive(Clone, Debug)]
pub struct ScriptedAgent {
    responses: HashMap<(usize, usize, usize), String>,
    dialect: PromptDialect,
}

impl ScriptedAgent {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>, dialect: PromptDialect) -> Self {
        ScriptedAgent {
            responses: entries
                .into_iter()
                .map(|e| ((e.iteration, e.focal, e.target), e.raw))
                .collect(),
            dialect,
        }
    }

    pub fn from_file(path: &Path, dialect: PromptDialect) -> Result<Self> {
        Ok(Self::new(load_transcript(path)?, dialect))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl AgentBackend for ScriptedAgent {
    fn decide(&self, ctx: &UpdateContext) -> Result<AgentDecision> {
        let raw = self
            .responses
            .get(&(ctx.iteration, ctx.focal, ctx.target))
            .ok_or(Error::MissingFixture {
                iteration: ctx.iteration,
                focal: ctx.focal,
                target: ctx.target,
            })?;
        Ok(AgentDecision {
            parsed: extract_sign(raw, ctx.kind, self.dialect),
            justification: raw.clone(),
            latency: Duration::ZERO,
            prompt: None,
        })
    }

    fn label(&self) -> String {
        "scripted".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_context, InteractionKind, PeerView, UpdateMechanism};
    use crate::graph::InteractionMatrix;
    use Sign::{Negative as N, Neutral as Z, Positive as P};

    fn ctx_with(reference: Sign, peers: &[(Sign, Sign)]) -> UpdateContext {
        UpdateContext {
            iteration: 1,
            m: peers.len() + 2,
            focal: 0,
            target: 1,
            kind: InteractionKind::Appraisal,
            mechanism: UpdateMechanism::Homophily,
            focal_to_target: reference,
            target_to_focal: -reference,
            peers: peers
                .iter()
                .enumerate()
                .map(|(n, &(ik, jk))| PeerView {
                    peer: n + 2,
                    focal_to_peer: ik,
                    target_to_peer: jk,
                    peer_to_focal: P,
                })
                .collect(),
        }
    }

    #[test]
    fn rule_agent_examples() {
        for reference in [P, N] {
            let d = RuleAgent.decide(&ctx_with(reference, &[(P, P)])).unwrap();
            assert_eq!(d.parsed, ParsedAnswer::Positive);
        }
        let d = RuleAgent.decide(&ctx_with(N, &[(P, Z)])).unwrap();
        assert_eq!(d.parsed, ParsedAnswer::Negative);
        // products +1, +1, -1, -1 sum to zero
        let d = RuleAgent.decide(&ctx_with(P, &[(P, P), (N, N), (P, N), (N, P)])).unwrap();
        assert_eq!(d.parsed, ParsedAnswer::Positive);
    }

    #[test]
    fn rule_agent_text_parses_back() {
        let m = InteractionMatrix::uniform(4, N).unwrap();
        for kind in InteractionKind::ALL {
            let ctx = build_context(&m, 2, 0, kind, UpdateMechanism::Influence).unwrap();
            let d = RuleAgent.decide(&ctx).unwrap();
            for dialect in [PromptDialect::Llama, PromptDialect::Mistral] {
                assert_eq!(extract_sign(&d.justification, kind, dialect), d.parsed);
            }
        }
    }

    #[test]
    fn constant_agent() {
        let ctx = ctx_with(N, &[(N, P)]);
        assert_eq!(ConstantAgent::new(P).decide(&ctx).unwrap().parsed, ParsedAnswer::Positive);
        assert_eq!(ConstantAgent::new(N).decide(&ctx).unwrap().parsed, ParsedAnswer::Negative);
        assert_eq!(ConstantAgent::new(Z).decide(&ctx).unwrap().parsed, ParsedAnswer::Neutral);
    }

    #[test]
    fn scripted_agent_replays_and_reports_gaps() {
        let agent = ScriptedAgent::new(
            [TranscriptEntry {
                iteration: 1,
                focal: 0,
                target: 1,
                raw: "My new appraisal of Individual 0 will be negative.\n\nExplanation: …".into(),
            }],
            PromptDialect::Llama,
        );
        let ctx = ctx_with(P, &[(P, P)]);
        assert_eq!(agent.decide(&ctx).unwrap().parsed, ParsedAnswer::Negative);
        let mut other = ctx;
        other.iteration = 2;
        assert!(matches!(
            agent.decide(&other),
            Err(Error::MissingFixture { iteration: 2, focal: 0, target: 1 })
        ));
    }
}
