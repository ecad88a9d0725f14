//! The planner-critic controller and its two comparison variants.
//!
//! [`run_episode`] drives one task to completion:
//!
//! 1. apply scheduled perturbations
//! 2. observe every robot and describe the scene graphs as text
//! 3. summarize the history buffer into a belief
//! 4. plan when there is no active plan or a replan was requested
//! 5. critique the next pending action; a rejection records a skipped entry
//! 6. execute, record feedback, latch milestones, check the goal
//!
//! `no_critic` drops step 5. `open_loop_baseline` keeps neither memory nor
//! critic: it plans once, replans once on its first error, and stops on the
//! second.

mod critic;
mod planner;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend};
use crate::memory::{self, Belief, HistoryBuffer, HistoryEntry, SKIPPED};
use crate::observer::{self, TextObservation};
use crate::skills::render_catalog;
use crate::world::{state_digest, Feedback, PerturbationEvent, Simulator, Status, WorldState};

pub use critic::{critique, CriticCategory, CriticVerdict, RuleCritic};
pub use planner::{parse_plan, plan, Plan, PlanError, PlanInput, PlanOutput};
pub use trace::{EpisodeOutcome, EpisodeTrace, Termination, TraceEvent, TraceRecord, VerdictSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    Clea,
    NoCritic,
    OpenLoopBaseline,
}

impl AgentVariant {
    pub const ALL: [AgentVariant; 3] = [
        AgentVariant::Clea,
        AgentVariant::NoCritic,
        AgentVariant::OpenLoopBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentVariant::Clea => "clea",
            AgentVariant::NoCritic => "no_critic",
            AgentVariant::OpenLoopBaseline => "open_loop_baseline",
        }
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "clea" => Ok(AgentVariant::Clea),
            "no_critic" => Ok(AgentVariant::NoCritic),
            "baseline" | "open_loop_baseline" => Ok(AgentVariant::OpenLoopBaseline),
            other => Err(format!(
                "unknown variant `{other}` (expected clea, no-critic or baseline)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_steps: u64,
    pub max_rejections: u32,
    pub max_parse_retries: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            max_steps: 50,
            max_rejections: 3,
            max_parse_retries: 1,
        }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 || self.max_rejections == 0 || self.max_parse_retries == 0 {
            return Err("budgets must be positive".into());
        }
        Ok(())
    }
}

/// Backend per language-model role. `None` selects the deterministic path
/// (template observer, template summarizer, rule critic). The planner has no
/// deterministic path and is required.
#[derive(Clone)]
pub struct RoleBackends {
    pub observer: Option<Arc<dyn ChatBackend>>,
    pub summarizer: Option<Arc<dyn ChatBackend>>,
    pub planner: Arc<dyn ChatBackend>,
    pub critic: Option<Arc<dyn ChatBackend>>,
    /// Use the deterministic path when a model call fails.
    pub allow_fallback: bool,
}

impl RoleBackends {
    pub fn planner_only(planner: Arc<dyn ChatBackend>) -> Self {
        Self {
            observer: None,
            summarizer: None,
            planner,
            critic: None,
            allow_fallback: true,
        }
    }
}

/// Task progress measure supplied by the harness. Milestones are latched by
/// the episode loop: once achieved they stay achieved.
pub trait Objective {
    fn milestone_labels(&self) -> Vec<String>;
    fn milestones(&self, sim: &Simulator, state: &WorldState) -> Vec<bool>;
    fn goal(&self, sim: &Simulator, state: &WorldState, latched: &[bool]) -> bool;
}

pub struct EpisodeSpec<'a> {
    pub task_id: &'a str,
    pub instruction: &'a str,
    pub perturbations: &'a [PerturbationEvent],
    pub objective: &'a dyn Objective,
    pub seed: u64,
    pub history_capacity: usize,
}

/// Runs one episode. Action errors never abort; a backend error on a path
/// without fallback ends the episode with an infrastructure failure.
pub fn run_episode(
    sim: &Simulator,
    initial: WorldState,
    variant: AgentVariant,
    backends: &RoleBackends,
    spec: &EpisodeSpec<'_>,
    budgets: Budgets,
) -> (EpisodeOutcome, EpisodeTrace) {
    let mut ep = Episode {
        sim,
        variant,
        backends,
        spec,
        budgets,
        catalog: render_catalog(),
        rules: RuleCritic::new(sim),
        state: initial,
        trace: EpisodeTrace::default(),
        history: HistoryBuffer::new(spec.history_capacity.max(1)).expect("capacity is positive"),
        labels: spec.objective.milestone_labels(),
        latched: Vec::new(),
        plan: None,
        context: Context::Fresh,
        rejections: 0,
        plan_calls: 0,
    };
    ep.latched = vec![false; ep.labels.len()];
    let mut world = sim.config().clone();
    world.perturbations = spec.perturbations.to_vec();
    ep.trace.push(
        0,
        TraceEvent::Start {
            task: spec.task_id.to_string(),
            instruction: spec.instruction.to_string(),
            variant,
            seed: spec.seed,
            world,
            digest: state_digest(&ep.state),
        },
    );
    let (termination, steps) = ep.run();
    ep.finish(termination, steps)
}

/// What the next planner call should be told beyond task, belief and scene.
enum Context {
    Fresh,
    Continue { subgoal: String },
    Rejected { subgoal: String, verdict: CriticVerdict },
    Discarded { rejections: u32 },
    ExecutionFailed { subgoal: String, feedback: Feedback },
    PlanFailed { error: String },
}

impl Context {
    fn render(&self) -> String {
        match self {
            Context::Fresh => String::new(),
            Context::Continue { subgoal } => {
                format!("PREVIOUS SUBGOAL FINISHED: {subgoal}\nChoose the next sub-goal.")
            }
            Context::Rejected { subgoal, verdict } => format!(
                "CURRENT SUBGOAL: {subgoal}\nCRITIC FEEDBACK: {}\nCRITIC ADVICE: {}\nRefine the sub-goal and actions.",
                verdict.feedback, verdict.advice
            ),
            Context::Discarded { rejections } => {
                format!("PLAN DISCARDED after {rejections} rejected actions. Choose a fresh sub-goal.")
            }
            Context::ExecutionFailed { subgoal, feedback } => {
                format!("CURRENT SUBGOAL: {subgoal}\nEXECUTION FEEDBACK: {}", feedback.message)
            }
            Context::PlanFailed { error } => format!("PREVIOUS PLAN REJECTED: {error}"),
        }
    }
}

struct Episode<'a> {
    sim: &'a Simulator,
    variant: AgentVariant,
    backends: &'a RoleBackends,
    spec: &'a EpisodeSpec<'a>,
    budgets: Budgets,
    catalog: String,
    rules: RuleCritic<'a>,
    state: WorldState,
    trace: EpisodeTrace,
    history: HistoryBuffer,
    labels: Vec<String>,
    latched: Vec<bool>,
    plan: Option<Plan>,
    context: Context,
    rejections: u32,
    plan_calls: u32,
}

enum StepEnd {
    Continue,
    Stop(Termination),
}

impl Episode<'_> {
    fn baseline(&self) -> bool {
        self.variant == AgentVariant::OpenLoopBaseline
    }

    fn run(&mut self) -> (Termination, u64) {
        for i in 0..self.budgets.max_steps {
            match self.step(i) {
                Ok(StepEnd::Continue) => {}
                Ok(StepEnd::Stop(t)) => return (t, i + 1),
                Err(e) => return (Termination::InfrastructureFailure(e.to_string()), i + 1),
            }
        }
        (Termination::BudgetExhausted, self.budgets.max_steps)
    }

    fn step(&mut self, i: u64) -> Result<StepEnd, BackendError> {
        let perturbed = self.sim.apply_perturbations(&self.state, self.spec.perturbations, i);
        if perturbed != self.state {
            self.state = perturbed;
            self.trace.push(
                i,
                TraceEvent::Perturbation {
                    digest: state_digest(&self.state),
                },
            );
        }

        let raws = self.sim.observe_all(&self.state);
        self.trace.push(
            i,
            TraceEvent::Observe {
                observations: raws.clone(),
            },
        );
        let texts = raws
            .iter()
            .map(|raw| match &self.backends.observer {
                Some(b) => observer::describe(b.as_ref(), raw, self.spec.instruction, self.backends.allow_fallback),
                None => Ok(observer::describe_deterministic(raw, self.spec.instruction)),
            })
            .collect::<Result<Vec<TextObservation>, _>>()?;
        let observation = observer::join_observations(&texts);
        self.trace.push(i, TraceEvent::Describe { observations: texts });

        let belief = if self.baseline() {
            Belief::default()
        } else {
            let entries = self.history.to_vec();
            let belief = match &self.backends.summarizer {
                Some(b) => memory::summarize(
                    b.as_ref(),
                    &entries,
                    self.spec.instruction,
                    self.backends.allow_fallback,
                )
                .map_err(|e| match e {
                    memory::MemoryError::Backend(b) => b,
                    other => BackendError::Malformed(other.to_string()),
                })?,
                None => memory::summarize_deterministic(&entries, self.spec.instruction),
            };
            self.trace.push(i, TraceEvent::Belief { belief: belief.clone() });
            belief
        };

        if self.plan.is_none() {
            if self.baseline() && self.plan_calls >= 2 {
                return Ok(self.close_step(i, Some(Termination::PlanExhausted)));
            }
            if let Some(end) = self.make_plan(i, &belief, &observation)? {
                return Ok(end);
            }
            if self.plan.is_none() {
                return Ok(self.close_step(i, None));
            }
        }

        let plan = self.plan.as_mut().expect("plan present");
        let action = plan.pending.pop_front().expect("plans are non-empty");
        let subgoal = plan.subgoal.clone();
        let action_text = action.to_string();

        if self.variant == AgentVariant::Clea {
            let recent = self.history.to_vec();
            let (verdict, source) = match &self.backends.critic {
                Some(b) => critique(
                    b.as_ref(),
                    &self.rules,
                    &action,
                    &belief,
                    &raws,
                    &recent,
                    self.spec.instruction,
                    self.backends.allow_fallback,
                )?,
                None => (self.rules.check(&action, &raws, &belief, &recent), VerdictSource::Rule),
            };
            self.trace.push(
                i,
                TraceEvent::Verdict {
                    action: action_text.clone(),
                    verdict: verdict.clone(),
                    source,
                },
            );
            if !verdict.valid {
                let feedback = Feedback {
                    status: Status::Err,
                    kind: None,
                    message: format!("critic rejected {action_text}: {}", verdict.feedback),
                };
                self.trace.push(
                    i,
                    TraceEvent::Skip {
                        action: action_text,
                        feedback: feedback.clone(),
                    },
                );
                self.remember(i, observation, SKIPPED.to_string(), feedback);
                self.rejections += 1;
                self.plan = None;
                if self.rejections >= self.budgets.max_rejections {
                    self.trace.push(
                        i,
                        TraceEvent::PlanDiscarded {
                            rejections: self.rejections,
                        },
                    );
                    self.context = Context::Discarded {
                        rejections: self.rejections,
                    };
                    self.rejections = 0;
                } else {
                    self.context = Context::Rejected { subgoal, verdict };
                }
                return Ok(self.close_step(i, None));
            }
        }

        let (next, feedback) = self.sim.step(&self.state, &action);
        self.state = next;
        self.trace.push(
            i,
            TraceEvent::Execute {
                action: action_text.clone(),
                feedback: feedback.clone(),
                digest: state_digest(&self.state),
            },
        );
        self.rejections = 0;
        let failed = !feedback.is_ok();
        if !self.baseline() {
            self.remember(i, observation, action_text, feedback.clone());
        }

        let mut stop = None;
        if failed {
            if self.baseline() && self.plan_calls >= 2 {
                stop = Some(Termination::PlanExhausted);
            }
            self.plan = None;
            self.context = Context::ExecutionFailed { subgoal, feedback };
        } else if self.plan.as_ref().is_some_and(|p| p.pending.is_empty()) {
            self.plan = None;
            if self.baseline() {
                // A baseline that finished its plan gets no further plans.
                self.plan_calls = 2;
            }
            self.context = Context::Continue { subgoal };
        }
        Ok(self.close_step(i, stop))
    }

    /// Returns `Some` when the episode must stop.
    fn make_plan(&mut self, i: u64, belief: &Belief, observation: &str) -> Result<Option<StepEnd>, BackendError> {
        let belief_text = if self.baseline() {
            "(no memory)".to_string()
        } else {
            belief.render()
        };
        let context = self.context.render();
        let input = PlanInput {
            task: self.spec.instruction,
            catalog: &self.catalog,
            belief: &belief_text,
            observation,
            context: &context,
        };
        self.plan_calls += 1;
        match plan(
            self.backends.planner.as_ref(),
            &input,
            i,
            self.budgets.max_parse_retries,
        ) {
            Ok(out) => {
                self.trace.push(
                    i,
                    TraceEvent::Plan {
                        subgoal: out.plan.subgoal.clone(),
                        actions: out.plan.pending.iter().map(ToString::to_string).collect(),
                        diagnostics: out.diagnostics,
                    },
                );
                self.plan = Some(out.plan);
                Ok(None)
            }
            Err(PlanError::Unparseable(error)) => {
                self.trace.push(i, TraceEvent::PlanFailed { error: error.clone() });
                self.context = Context::PlanFailed { error };
                if self.baseline() && self.plan_calls >= 2 {
                    return Ok(Some(self.close_step(i, Some(Termination::PlanExhausted))));
                }
                Ok(None)
            }
            Err(PlanError::Backend(e)) => Err(e),
        }
    }

    fn remember(&mut self, step: u64, observation: String, action: String, feedback: Feedback) {
        self.history
            .push(HistoryEntry {
                step,
                observation,
                action,
                feedback,
            })
            .expect("loop steps increase");
    }

    /// Latches milestones and checks the goal at the end of a step.
    fn close_step(&mut self, i: u64, stop: Option<Termination>) -> StepEnd {
        let now = self.spec.objective.milestones(self.sim, &self.state);
        for (idx, hit) in now.into_iter().enumerate() {
            if hit && !self.latched[idx] {
                self.latched[idx] = true;
                self.trace.push(
                    i,
                    TraceEvent::Milestone {
                        index: idx,
                        label: self.labels[idx].clone(),
                    },
                );
            }
        }
        if self.spec.objective.goal(self.sim, &self.state, &self.latched) {
            return StepEnd::Stop(Termination::GoalReached);
        }
        match stop {
            Some(t) => StepEnd::Stop(t),
            None => StepEnd::Continue,
        }
    }

    fn finish(mut self, termination: Termination, steps: u64) -> (EpisodeOutcome, EpisodeTrace) {
        let score = self.latched.iter().filter(|m| **m).count();
        let max_score = self.latched.len();
        let success = termination == Termination::GoalReached && score == max_score;
        let outcome = EpisodeOutcome {
            success,
            score,
            max_score,
            steps_used: steps,
            termination,
        };
        let last = self.trace.records.last().map_or(0, |r| r.step);
        self.trace.push(
            last,
            TraceEvent::End {
                outcome: outcome.clone(),
                digest: state_digest(&self.state),
            },
        );
        (outcome, self.trace)
    }
}
