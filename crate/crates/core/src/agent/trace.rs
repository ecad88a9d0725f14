use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{AgentVariant, CriticVerdict};
use crate::memory::Belief;
use crate::observer::TextObservation;
use crate::world::{Feedback, RawObservation, WorldConfig};

/// Why an episode stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Termination {
    GoalReached,
    BudgetExhausted,
    /// The open-loop baseline ran out of plans or hit its second error.
    PlanExhausted,
    InfrastructureFailure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub score: usize,
    pub max_score: usize,
    pub steps_used: u64,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Model,
    Rule,
}

/// One loop event. Records appear in loop order within a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        task: String,
        instruction: String,
        variant: AgentVariant,
        seed: u64,
        world: WorldConfig,
        digest: String,
    },
    Perturbation {
        digest: String,
    },
    Observe {
        observations: Vec<RawObservation>,
    },
    Describe {
        observations: Vec<TextObservation>,
    },
    Belief {
        belief: Belief,
    },
    Plan {
        subgoal: String,
        actions: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        diagnostics: Vec<String>,
    },
    PlanFailed {
        error: String,
    },
    Verdict {
        action: String,
        verdict: CriticVerdict,
        source: VerdictSource,
    },
    Execute {
        action: String,
        feedback: Feedback,
        digest: String,
    },
    Skip {
        action: String,
        feedback: Feedback,
    },
    PlanDiscarded {
        rejections: u32,
    },
    Milestone {
        index: usize,
        label: String,
    },
    End {
        outcome: EpisodeOutcome,
        digest: String,
    },
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Start { .. } => "start",
            TraceEvent::Perturbation { .. } => "perturbation",
            TraceEvent::Observe { .. } => "observe",
            TraceEvent::Describe { .. } => "describe",
            TraceEvent::Belief { .. } => "belief",
            TraceEvent::Plan { .. } => "plan",
            TraceEvent::PlanFailed { .. } => "plan_failed",
            TraceEvent::Verdict { .. } => "verdict",
            TraceEvent::Execute { .. } => "execute",
            TraceEvent::Skip { .. } => "skip",
            TraceEvent::PlanDiscarded { .. } => "plan_discarded",
            TraceEvent::Milestone { .. } => "milestone",
            TraceEvent::End { .. } => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// Append-only, monotonically stepped record list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    pub fn push(&mut self, step: u64, event: TraceEvent) {
        debug_assert!(self.records.last().is_none_or(|r| r.step <= step));
        self.records.push(TraceRecord { step, event });
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().map(|r| &r.event)
    }

    pub fn outcome(&self) -> Option<&EpisodeOutcome> {
        self.events().find_map(|e| match e {
            TraceEvent::End { outcome, .. } => Some(outcome),
            _ => None,
        })
    }

    /// Number of distinct loop steps that produced records.
    pub fn step_count(&self) -> usize {
        let mut steps: Vec<u64> = self
            .records
            .iter()
            .filter(|r| !matches!(r.event, TraceEvent::Start { .. } | TraceEvent::End { .. }))
            .map(|r| r.step)
            .collect();
        steps.dedup();
        steps.len()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Self> {
        let mut records = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        Ok(Self { records })
    }
}
