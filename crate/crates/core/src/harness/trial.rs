use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::suite::{trial_world, Family, Suite, TaskSpec};
use crate::agent::{
    run_episode, AgentVariant, Budgets, CriticCategory, EpisodeSpec, EpisodeTrace, RoleBackends, Termination,
    TraceEvent,
};
use crate::backend::{ChatBackend, RemoteBackend, Role, ScriptedBackend};
use crate::memory::DEFAULT_CAPACITY;
use crate::world::{FeedbackKind, Simulator, Status, WorldConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    None,
    InvalidActions,
    CriticFailure,
    MultiRobot,
    BudgetExhausted,
    Infrastructure,
}

impl FailureClass {
    pub const FAILURES: [FailureClass; 5] = [
        FailureClass::InvalidActions,
        FailureClass::CriticFailure,
        FailureClass::MultiRobot,
        FailureClass::BudgetExhausted,
        FailureClass::Infrastructure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::None => "none",
            FailureClass::InvalidActions => "invalid_actions",
            FailureClass::CriticFailure => "critic_failure",
            FailureClass::MultiRobot => "multi_robot",
            FailureClass::BudgetExhausted => "budget_exhausted",
            FailureClass::Infrastructure => "infrastructure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub task: String,
    pub family: Family,
    pub variant: AgentVariant,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub score: usize,
    pub max_score: usize,
    pub steps: u64,
    pub failure: FailureClass,
}

/// Which engine answers the language-model roles.
#[derive(Clone)]
pub enum BackendMode {
    /// Each task's script rules drive the planner; other roles use the
    /// deterministic path unless the script has rules tagged for them.
    Scripted,
    Remote(Arc<RemoteBackend>),
}

impl BackendMode {
    fn role_backends(&self, task: &TaskSpec) -> RoleBackends {
        match self {
            BackendMode::Scripted => {
                let script = ScriptedBackend::new(task.script.clone()).expect("suite validated the script");
                let session: Arc<dyn ChatBackend> = Arc::from(script.session());
                let tagged = |role: Role| {
                    task.script
                        .iter()
                        .any(|r| r.role == Some(role))
                        .then(|| Arc::clone(&session))
                };
                RoleBackends {
                    observer: tagged(Role::Observer),
                    summarizer: tagged(Role::Summarizer),
                    critic: tagged(Role::Critic),
                    planner: Arc::clone(&session),
                    allow_fallback: true,
                }
            }
            BackendMode::Remote(remote) => {
                let shared: Arc<dyn ChatBackend> = remote.clone();
                RoleBackends {
                    observer: Some(Arc::clone(&shared)),
                    summarizer: Some(Arc::clone(&shared)),
                    critic: Some(Arc::clone(&shared)),
                    planner: shared,
                    allow_fallback: true,
                }
            }
        }
    }
}

/// Seed for trial `trial` of task `task_index` under a base seed. Variants
/// share seeds so they face the same worlds.
pub fn trial_seed(base: u64, task_index: usize, trial: usize) -> u64 {
    base.wrapping_mul(1_000_003)
        .wrapping_add((task_index as u64) << 16)
        .wrapping_add(trial as u64)
}

pub struct TrialSetup<'a> {
    pub task: &'a TaskSpec,
    pub world: &'a WorldConfig,
    pub variant: AgentVariant,
    pub trial: usize,
    pub seed: u64,
    pub budgets: Budgets,
}

/// Runs one trial. Never panics on agent or backend failures; those end up
/// in the failure class.
pub fn run_trial(setup: &TrialSetup<'_>, mode: &BackendMode) -> (TrialResult, EpisodeTrace) {
    let task = setup.task;
    let cfg = trial_world(task, setup.world, setup.seed);
    let sim = Simulator::new(cfg).expect("suite validated the world");
    let state = sim.initial_state();
    let backends = mode.role_backends(task);
    let spec = EpisodeSpec {
        task_id: &task.id,
        instruction: &task.instruction,
        perturbations: &task.perturbations,
        objective: task,
        seed: setup.seed,
        history_capacity: DEFAULT_CAPACITY,
    };
    let (outcome, trace) = run_episode(&sim, state, setup.variant, &backends, &spec, setup.budgets);
    let failure = classify_failure(&trace);
    let result = TrialResult {
        task: task.id.clone(),
        family: task.family,
        variant: setup.variant,
        trial: setup.trial,
        seed: setup.seed,
        success: outcome.success,
        score: outcome.score,
        max_score: outcome.max_score,
        steps: outcome.steps_used,
        failure,
    };
    (result, trace)
}

/// Failure class of a finished trace, decided by the last error event.
///
/// - success: `none`
/// - backend failure without fallback: `infrastructure`
/// - planner output unusable, or an action naming unknown entities or wrong
///   argument kinds: `invalid_actions`
/// - an action the robot could not perform because of its embodiment, or a
///   wrong-planning rejection: `multi_robot`
/// - an action the critic approved that then failed: `critic_failure`
/// - anything else, including running out of steps or plans: `budget_exhausted`
pub fn classify_failure(trace: &EpisodeTrace) -> FailureClass {
    let Some(outcome) = trace.outcome() else {
        return FailureClass::Infrastructure;
    };
    if outcome.success {
        return FailureClass::None;
    }
    if matches!(outcome.termination, Termination::InfrastructureFailure(_)) {
        return FailureClass::Infrastructure;
    }
    let mut last_approved = None;
    let mut last_error = None;
    for ev in trace.events() {
        match ev {
            TraceEvent::Verdict { action, verdict, .. } => {
                if verdict.valid {
                    last_approved = Some(action.clone());
                } else if verdict.category == CriticCategory::WrongPlanning {
                    last_error = Some(FailureClass::MultiRobot);
                }
            }
            TraceEvent::PlanFailed { .. } => last_error = Some(FailureClass::InvalidActions),
            TraceEvent::Plan { diagnostics, .. } if !diagnostics.is_empty() => {
                last_error = Some(FailureClass::InvalidActions)
            }
            TraceEvent::Execute { action, feedback, .. } if feedback.status == Status::Err => {
                last_error = Some(match feedback.kind {
                    Some(FeedbackKind::UnknownEntity | FeedbackKind::MalformedAction) => FailureClass::InvalidActions,
                    Some(FeedbackKind::ImmobileRobot) => FailureClass::MultiRobot,
                    _ if last_approved.as_deref() == Some(action.as_str()) => FailureClass::CriticFailure,
                    _ => FailureClass::BudgetExhausted,
                });
                last_approved = None;
            }
            TraceEvent::Execute { .. } => last_approved = None,
            _ => {}
        }
    }
    last_error.unwrap_or(FailureClass::BudgetExhausted)
}

/// Counts of critic rejection categories and failure classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub critic: BTreeMap<CriticCategory, usize>,
    pub failures: BTreeMap<FailureClass, usize>,
}

impl Tallies {
    pub fn merge(&mut self, other: &Tallies) {
        for (k, v) in &other.critic {
            *self.critic.entry(*k).or_default() += v;
        }
        for (k, v) in &other.failures {
            *self.failures.entry(*k).or_default() += v;
        }
    }
}

/// Rejection categories of every vetoed action plus the trace's failure
/// class (successful traces add no failure).
pub fn classify_trace(trace: &EpisodeTrace) -> Tallies {
    let mut t = Tallies::default();
    for ev in trace.events() {
        if let TraceEvent::Verdict { verdict, .. } = ev {
            if !verdict.valid {
                *t.critic.entry(verdict.category).or_default() += 1;
            }
        }
    }
    let class = classify_failure(trace);
    if class != FailureClass::None {
        *t.failures.entry(class).or_default() += 1;
    }
    t
}

pub struct SuiteRun {
    pub results: Vec<TrialResult>,
    pub traces: Vec<EpisodeTrace>,
}

/// Runs every (variant, task, trial) combination on up to `workers`
/// threads. Output order is variant, then task, then trial.
pub fn run_suite(
    suite: &Suite,
    variants: &[AgentVariant],
    mode: &BackendMode,
    base_seed: u64,
    workers: usize,
    budgets: Budgets,
) -> SuiteRun {
    use rayon::prelude::*;

    let mut jobs = Vec::new();
    for &variant in variants {
        for (ti, task) in suite.tasks.iter().enumerate() {
            for trial in 0..suite.trials_per_task {
                jobs.push(TrialSetup {
                    task,
                    world: suite.world_for(task),
                    variant,
                    trial,
                    seed: trial_seed(base_seed, ti, trial),
                    budgets,
                });
            }
        }
    }
    let run = || jobs.par_iter().map(|j| run_trial(j, mode)).collect::<Vec<_>>();
    let pairs = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            tracing::warn!(error = %e, "falling back to the global thread pool");
            run()
        }
    };
    let (results, traces) = pairs.into_iter().unzip();
    SuiteRun { results, traces }
}
