//! Batch evaluation: task sampling, episode execution, AOS rationality
//! metrics and aggregation.

mod corpus;
mod episode;
mod metrics;

pub use corpus::{
    evaluate, generate_scenes, read_corpus, read_episode_records, write_corpus,
    write_episode_records, CorpusManifest, EvaluateOptions, SceneManifestEntry,
};
pub use episode::{designations_for_scene, run_episode, DesignationCase};
pub use metrics::{aggregate, metric_aos_rationality, AggregateReport, AggregateRow};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::planner::PlannerError;
use crate::pomdp::Destination;
use crate::scene::{ObjectId, SceneError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown planner id `{0}`; known: pomdp, one_by_one, rule_only")]
    UnknownPlanner(String),
    #[error("unknown task id `{0}`; known: st, mt, tc")]
    UnknownTask(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Task setting: single target, multiple targets, or table clean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SingleTarget,
    MultiTarget,
    TableClear,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::SingleTarget,
        TaskKind::MultiTarget,
        TaskKind::TableClear,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TaskKind::SingleTarget => "st",
            TaskKind::MultiTarget => "mt",
            TaskKind::TableClear => "tc",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TaskKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "st" => Ok(TaskKind::SingleTarget),
            "mt" => Ok(TaskKind::MultiTarget),
            "tc" => Ok(TaskKind::TableClear),
            other => Err(EvalError::UnknownTask(other.to_string())),
        }
    }
}

/// Planner under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerId {
    Pomdp,
    OneByOne,
    RuleOnly,
}

impl PlannerId {
    pub const ALL: [PlannerId; 3] = [PlannerId::Pomdp, PlannerId::OneByOne, PlannerId::RuleOnly];

    pub fn code(self) -> &'static str {
        match self {
            PlannerId::Pomdp => "pomdp",
            PlannerId::OneByOne => "one_by_one",
            PlannerId::RuleOnly => "rule_only",
        }
    }
}

impl fmt::Display for PlannerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PlannerId {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pomdp" => Ok(PlannerId::Pomdp),
            "one_by_one" | "one-by-one" => Ok(PlannerId::OneByOne),
            "rule_only" | "rule-only" => Ok(PlannerId::RuleOnly),
            other => Err(EvalError::UnknownPlanner(other.to_string())),
        }
    }
}

/// Everything measured about one executed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub planner: PlannerId,
    pub task: TaskKind,
    pub scene_seed: u64,
    pub designation: usize,
    pub episode_seed: u64,
    pub targets: Vec<ObjectId>,
    pub first_step_rational: bool,
    pub chain_rational: bool,
    pub grasp_count: usize,
    pub success: bool,
    pub simulated_minutes: f64,
    pub executed_aos: Vec<(ObjectId, Destination)>,
    pub failure: Option<String>,
}
