use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::suite::Family;
use super::trial::TrialResult;
use crate::agent::AgentVariant;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no trial results")]
    EmptyInput,
}

/// Success rate and average score of one group of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub variant: AgentVariant,
    /// `None` aggregates every family.
    pub family: Option<Family>,
    pub trials: usize,
    pub successes: usize,
    pub sr: f64,
    pub avg_score: f64,
    pub max_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub groups: Vec<GroupMetrics>,
}

impl Metrics {
    pub fn get(&self, variant: AgentVariant, family: Option<Family>) -> Option<&GroupMetrics> {
        self.groups.iter().find(|g| g.variant == variant && g.family == family)
    }

    pub fn overall(&self, variant: AgentVariant) -> Option<&GroupMetrics> {
        self.get(variant, None)
    }
}

fn group(variant: AgentVariant, family: Option<Family>, rs: &[&TrialResult]) -> GroupMetrics {
    let trials = rs.len();
    let successes = rs.iter().filter(|r| r.success).count();
    let points: usize = rs.iter().map(|r| r.score).sum();
    GroupMetrics {
        variant,
        family,
        trials,
        successes,
        sr: successes as f64 / trials as f64,
        avg_score: points as f64 / trials as f64,
        max_points: rs.iter().map(|r| r.max_score).max().unwrap_or(0),
    }
}

/// SR = successes / trials and AS = mean milestone points, per
/// (variant, family) and per variant overall.
pub fn compute_metrics(results: &[TrialResult]) -> Result<Metrics, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_key: BTreeMap<(AgentVariant, Option<Family>), Vec<&TrialResult>> = BTreeMap::new();
    for r in results {
        by_key.entry((r.variant, Some(r.family))).or_default().push(r);
        by_key.entry((r.variant, None)).or_default().push(r);
    }
    Ok(Metrics {
        groups: by_key.into_iter().map(|((v, f), rs)| group(v, f, &rs)).collect(),
    })
}

/// Percentage of `count` in `total`, one decimal, e.g. `44.4%`.
pub fn format_ratio(count: usize, total: usize) -> String {
    if total == 0 {
        return "0.0%".into();
    }
    format!("{:.1}%", count as f64 * 100.0 / total as f64)
}

/// Markdown table of reasons with counts and their share of the total.
pub fn render_ratio_table(title: &str, rows: &[(&str, usize)]) -> String {
    let total: usize = rows.iter().map(|(_, n)| n).sum();
    let mut out = format!("| {title} | count | ratio |\n|---|---:|---:|\n");
    for (label, n) in rows {
        out.push_str(&format!("| {label} | {n} | {} |\n", format_ratio(*n, total)));
    }
    out
}
