use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::metrics::{render_ratio_table, Metrics};
use super::suite::Family;
use super::trial::{FailureClass, Tallies, TrialResult};
use crate::agent::{AgentVariant, CriticCategory, EpisodeTrace, TraceEvent};
use crate::skills::parse_action;
use crate::world::{state_digest, Simulator};

/// Trace file name for one trial.
pub fn trace_file_name(r: &TrialResult) -> String {
    format!("trace-{}-{}-{}.jsonl", r.variant, r.task, r.trial)
}

/// Writes `trials.jsonl`, `summary.md` and one `trace-*.jsonl` per trial.
/// Output depends only on the inputs, so scripted reruns are byte-identical.
pub fn emit_report(
    out_dir: &Path,
    results: &[TrialResult],
    traces: &[EpisodeTrace],
    metrics: &Metrics,
    tallies: &Tallies,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let trials = out_dir.join("trials.jsonl");
    let mut w = BufWriter::new(fs::File::create(&trials)?);
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    written.push(trials);

    let summary = out_dir.join("summary.md");
    fs::write(&summary, render_summary(metrics, tallies))?;
    written.push(summary);

    for (r, t) in results.iter().zip(traces) {
        let path = out_dir.join(trace_file_name(r));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        t.write_jsonl(&mut w)?;
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Variant comparison table (SR and AS per family and overall) followed by
/// the critic rejection and failure reason tables.
pub fn render_summary(metrics: &Metrics, tallies: &Tallies) -> String {
    let variants: Vec<AgentVariant> = AgentVariant::ALL
        .into_iter()
        .filter(|v| metrics.overall(*v).is_some())
        .collect();
    let mut out = String::from("# Trial summary\n\n");

    out.push_str("| group |");
    for v in &variants {
        out.push_str(&format!(" {v} SR | {v} AS |"));
    }
    out.push_str("\n|---|");
    for _ in &variants {
        out.push_str("---:|---:|");
    }
    out.push('\n');
    let rows: Vec<(String, Option<Family>)> = Family::ALL
        .into_iter()
        .map(|f| (f.to_string(), Some(f)))
        .chain([("overall".to_string(), None)])
        .collect();
    for (label, fam) in rows {
        if variants.iter().all(|v| metrics.get(*v, fam).is_none()) {
            continue;
        }
        out.push_str(&format!("| {label} |"));
        for v in &variants {
            match metrics.get(*v, fam) {
                Some(g) => out.push_str(&format!(
                    " {}/{} ({:.3}) | {:.2}/{} |",
                    g.successes, g.trials, g.sr, g.avg_score, g.max_points
                )),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }

    out.push_str("\n## Critic rejections\n\n");
    let critic: Vec<(&str, usize)> = CriticCategory::REJECTIONS
        .iter()
        .map(|c| (c.as_str(), tallies.critic.get(c).copied().unwrap_or(0)))
        .collect();
    out.push_str(&render_ratio_table("reason", &critic));

    out.push_str("\n## Failures\n\n");
    let failures: Vec<(&str, usize)> = FailureClass::FAILURES
        .iter()
        .map(|c| (c.as_str(), tallies.failures.get(c).copied().unwrap_or(0)))
        .collect();
    out.push_str(&render_ratio_table("reason", &failures));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("trace has no start record")]
    MissingStart,
    #[error("trace has no end record")]
    MissingEnd,
    #[error("world config in trace is invalid: {0}")]
    World(String),
    #[error("step {step}: cannot parse recorded action `{action}`")]
    BadAction { step: u64, action: String },
    #[error("step {step}: {what} digest mismatch (recorded {recorded}, replayed {replayed})")]
    Mismatch {
        step: u64,
        what: &'static str,
        recorded: String,
        replayed: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplaySummary {
    pub executed: usize,
    pub perturbations: usize,
    pub final_digest: String,
}

/// Re-executes a stored trace against its recorded world and checks every
/// recorded digest, ending with the final one.
pub fn replay(trace: &EpisodeTrace) -> Result<ReplaySummary, ReplayError> {
    let mut records = trace.records.iter();
    let (world, start_digest) = match records.next().map(|r| &r.event) {
        Some(TraceEvent::Start { world, digest, .. }) => (world.clone(), digest.clone()),
        _ => return Err(ReplayError::MissingStart),
    };
    let schedule = world.perturbations.clone();
    let sim = Simulator::new(world).map_err(|e| ReplayError::World(e.to_string()))?;
    let mut state = sim.initial_state();
    let check = |step: u64, what: &'static str, recorded: &str, replayed: String| {
        if recorded == replayed {
            Ok(())
        } else {
            Err(ReplayError::Mismatch {
                step,
                what,
                recorded: recorded.to_string(),
                replayed,
            })
        }
    };
    check(0, "initial", &start_digest, state_digest(&state))?;

    let mut executed = 0;
    let mut perturbations = 0;
    for rec in records {
        match &rec.event {
            TraceEvent::Perturbation { digest } => {
                state = sim.apply_perturbations(&state, &schedule, rec.step);
                perturbations += 1;
                check(rec.step, "perturbation", digest, state_digest(&state))?;
            }
            TraceEvent::Execute { action, digest, .. } => {
                let parsed = parse_action(action).map_err(|_| ReplayError::BadAction {
                    step: rec.step,
                    action: action.clone(),
                })?;
                state = sim.step(&state, &parsed).0;
                executed += 1;
                check(rec.step, "execute", digest, state_digest(&state))?;
            }
            TraceEvent::End { digest, .. } => {
                let final_digest = state_digest(&state);
                check(rec.step, "final", digest, final_digest.clone())?;
                return Ok(ReplaySummary {
                    executed,
                    perturbations,
                    final_digest,
                });
            }
            _ => {}
        }
    }
    Err(ReplayError::MissingEnd)
}
