//! Target grouping, action-space pruning, belief-space lookahead, the
//! closed replan loop, and the comparison baselines.
//!
//! Planning works on a *working copy* of the believed scene in which
//! stable support between targets and non-targets is downgraded to
//! weak: targets and non-targets must never be grasped together, so a
//! mixed stable pair is treated as separable and the weak-child rule
//! forces the non-target off first. Targets connected by stable
//! support form groups deliverable with one grasp of the group root;
//! groups are processed leaf to root, one at a time.

mod baselines;
mod closed_loop;
mod grouping;
mod lookahead;

pub use baselines::{baseline_one_by_one, baseline_rule_only};
pub use closed_loop::{
    replan_loop, run_policy_loop, EpisodeFailure, ExecutedChain, ExecutedStep, Executor,
    OneByOneStep, PomdpStep, RuleOnlyStep, StepPolicy,
};
pub use grouping::group_targets;
pub use lookahead::{action_space, plan_lookahead, DEFAULT_HORIZON_FACTOR};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pomdp::{Action, Destination, JointState, NoiseProfile, PomdpError, RewardParams};
use crate::scene::{ObjectId, SceneError, SceneGraph};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("target designation is empty")]
    EmptyTargets,
    #[error("designated target {0} does not exist in the scene")]
    UnknownTarget(ObjectId),
    #[error("lookahead horizon must be at least 1")]
    HorizonTooSmall,
    #[error("scene has more objects than the planner supports (max 64)")]
    TooManyObjects,
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Nonempty set of objects the task must deliver to the target area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDesignation {
    targets: BTreeSet<ObjectId>,
}

impl TargetDesignation {
    pub fn new(targets: BTreeSet<ObjectId>) -> Result<Self, PlannerError> {
        if targets.is_empty() {
            return Err(PlannerError::EmptyTargets);
        }
        Ok(TargetDesignation { targets })
    }

    pub fn ids(&self) -> &BTreeSet<ObjectId> {
        &self.targets
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.targets.contains(&id)
    }

    pub fn validate_against(&self, graph: &SceneGraph) -> Result<(), PlannerError> {
        for &t in &self.targets {
            if t.index() >= graph.object_count() {
                return Err(PlannerError::UnknownTarget(t));
            }
        }
        Ok(())
    }
}

/// Maximal set of targets connected through stable support, deliverable
/// by one grasp of its root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetGroup {
    pub members: BTreeSet<ObjectId>,
    pub root: ObjectId,
}

/// One planned grasp: the action, everything it is expected to move
/// (the stable closure at execution time), and the drop-off area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    #[serde(flatten)]
    pub action: Action,
    pub moved: Vec<ObjectId>,
    pub dest: Destination,
}

/// Ordered manipulation decision chain with its expected discounted
/// return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub value: f64,
}

impl Plan {
    /// Action-object set of the chain: the grasped objects with their
    /// destinations. Objects merely carried along are not included.
    pub fn aos(&self) -> BTreeSet<(ObjectId, Destination)> {
        self.steps
            .iter()
            .filter_map(|s| s.action.grasped().map(|o| (o, s.dest)))
            .collect()
    }

    pub fn grasp_count(&self) -> usize {
        self.steps.iter().filter(|s| s.action.grasped().is_some()).count()
    }

    /// Discounted return of the chain on a concrete scene assuming
    /// every grasp succeeds. Used to attach honest values to baseline
    /// chains, which are not produced by a value search.
    pub fn evaluate_deterministic(
        &self,
        graph: &SceneGraph,
        params: &RewardParams,
    ) -> Result<f64, PlannerError> {
        let mut state = JointState::from_scene(graph);
        let mut value = 0.0;
        let mut discount = 1.0;
        for step in &self.steps {
            value += discount * crate::pomdp::reward(&state, step.action, params)?;
            discount *= params.discount;
            if let Some(o) = step.action.grasped() {
                let closure = state.stable_closure(o);
                state.remove_all(&closure);
            }
        }
        Ok(value)
    }
}

/// Model handles the planner needs: perception noise, grasp success and
/// reward shaping.
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub noise: &'a NoiseProfile,
    pub reward: &'a RewardParams,
}
