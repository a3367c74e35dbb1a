//! AOS rationality and aggregate statistics.
//!
//! A chain is rational when its action-object set (the grasped
//! objects with their destinations) equals the reference chain's,
//! order-insensitive: permuting unrelated grasps is fine, redundant or
//! missing grasps are not. The first step is rational when it belongs
//! to the reference set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pomdp::Destination;
use crate::scene::ObjectId;
use crate::sim::AnnotatedChain;

use super::{EpisodeReport, PlannerId, TaskKind};

/// Scores an executed chain against the reference: returns
/// `(first_step_rational, chain_rational)`.
pub fn metric_aos_rationality(
    executed: &[(ObjectId, Destination)],
    reference: &AnnotatedChain,
) -> (bool, bool) {
    let executed_set: BTreeSet<(ObjectId, Destination)> = executed.iter().copied().collect();
    let whole = executed_set == reference.aos;
    let first = match executed.first() {
        Some(step) => reference.aos.contains(step),
        None => reference.aos.is_empty(),
    };
    (first, whole)
}

/// Mean and a 95% normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanWithCi {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn rate_ci(hits: usize, n: usize) -> MeanWithCi {
    if n == 0 {
        return MeanWithCi {
            mean: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        };
    }
    let p = hits as f64 / n as f64;
    let half = 1.96 * (p * (1.0 - p) / n as f64).sqrt();
    MeanWithCi {
        mean: p,
        ci_low: (p - half).max(0.0),
        ci_high: (p + half).min(1.0),
    }
}

fn mean_ci(values: &[f64]) -> MeanWithCi {
    if values.is_empty() {
        return MeanWithCi {
            mean: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1.0);
    let half = 1.96 * (var / n).sqrt();
    MeanWithCi {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

/// Aggregate metrics of one (planner, task) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub planner: PlannerId,
    pub task: TaskKind,
    pub episodes: usize,
    pub ar_f: MeanWithCi,
    pub ar_w: MeanWithCi,
    pub success_rate: MeanWithCi,
    pub mean_grasps: MeanWithCi,
    pub mean_minutes: f64,
}

/// Full evaluation summary: exact means of the per-episode records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
}

impl AggregateReport {
    pub fn row(&self, planner: PlannerId, task: TaskKind) -> Option<&AggregateRow> {
        self.rows
            .iter()
            .find(|r| r.planner == planner && r.task == task)
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<4} {:>6} {:>8} {:>8} {:>9} {:>8} {:>9}\n",
            "planner", "task", "n", "AR_f", "AR_w", "success", "grasps", "time(min)"
        ));
        out.push_str(&"-".repeat(70));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<4} {:>6} {:>7.1}% {:>7.1}% {:>8.1}% {:>8.2} {:>9.2}\n",
                r.planner.code(),
                r.task.code(),
                r.episodes,
                100.0 * r.ar_f.mean,
                100.0 * r.ar_w.mean,
                100.0 * r.success_rate.mean,
                r.mean_grasps.mean,
                r.mean_minutes,
            ));
        }
        out
    }
}

/// Exact aggregation of per-episode records, grouped by planner and
/// task in a fixed order.
pub fn aggregate(reports: &[EpisodeReport]) -> AggregateReport {
    let mut groups: BTreeMap<(PlannerId, TaskKind), Vec<&EpisodeReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.planner, r.task)).or_default().push(r);
    }
    let rows = groups
        .into_iter()
        .map(|((planner, task), group)| {
            let n = group.len();
            let grasps: Vec<f64> = group.iter().map(|r| r.grasp_count as f64).collect();
            AggregateRow {
                planner,
                task,
                episodes: n,
                ar_f: rate_ci(group.iter().filter(|r| r.first_step_rational).count(), n),
                ar_w: rate_ci(group.iter().filter(|r| r.chain_rational).count(), n),
                success_rate: rate_ci(group.iter().filter(|r| r.success).count(), n),
                mean_grasps: mean_ci(&grasps),
                mean_minutes: group.iter().map(|r| r.simulated_minutes).sum::<f64>()
                    / n.max(1) as f64,
            }
        })
        .collect();
    AggregateReport { rows }
}
