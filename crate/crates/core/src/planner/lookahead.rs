//! Belief-space lookahead: expectimax over the pruned action space.
//!
//! Action nodes branch over the two grasp outcomes weighted by the
//! grasped category's success probability. Observation branching is
//! collapsed to the most likely observation per outcome, which simply
//! confirms the predicted state, so every reachable search node is
//! characterised by the set of objects still believed present and the
//! remaining depth; values are memoised on that pair. Rewards are the
//! exact expectation of the grasp reward over the working pair
//! marginals conditioned on the node's present set. Completion (and a
//! dead end, which only noise-corrupted estimates can produce) is worth
//! zero, matching the terminal state value.

use std::collections::HashMap;

use crate::pomdp::{Action, BeliefState, Destination, PairState};
use crate::scene::{DescendantTable, ObjectId, RelationClass, SceneGraph};

use super::grouping::WorkingView;
use super::{Models, Plan, PlanStep, PlannerError, TargetDesignation, TargetGroup};

/// Default lookahead horizon is this factor times the tracked object
/// count: enough depth for a grasp and a retry of every object.
pub const DEFAULT_HORIZON_FACTOR: u32 = 2;

#[derive(Clone)]
struct Candidate {
    action: Action,
    expected_reward: f64,
    closure: u64,
    success: f64,
}

struct Search<'a> {
    view: &'a WorkingView,
    models: Models<'a>,
    candidates: HashMap<u64, Vec<Candidate>>,
    values: HashMap<(u64, u32), (f64, Option<usize>)>,
}

impl<'a> Search<'a> {
    fn new(view: &'a WorkingView, models: Models<'a>) -> Self {
        Search {
            view,
            models,
            candidates: HashMap::new(),
            values: HashMap::new(),
        }
    }

    /// Legal grasps at a node, target deliveries first, ascending id.
    fn candidates_for(&mut self, mask: u64) -> &[Candidate] {
        if !self.candidates.contains_key(&mask) {
            let list = self.enumerate(mask);
            self.candidates.insert(mask, list);
        }
        &self.candidates[&mask]
    }

    fn enumerate(&self, mask: u64) -> Vec<Candidate> {
        let view = self.view;
        let Some(group) = view.active_group(mask) else {
            return Vec::new();
        };
        let subtree = view.subtree(group.root, mask);
        let mut deliveries = Vec::new();
        let mut removals = Vec::new();
        for o in view.ids_in(subtree) {
            let Some(p) = view.grasp_success(o) else {
                continue;
            };
            // An object under an ordinary child cannot be grasped yet.
            if view.ordinary_child_count(o, mask) > 0 {
                continue;
            }
            let closure = view.stable_closure(o, mask);
            let closure_targets = closure & view.targets_mask();
            let is_target = view.targets.contains(&o);
            if is_target {
                // Targets and non-targets must not travel together.
                if closure_targets == closure {
                    deliveries.push((o, p, closure, Action::GraspToTarget(o)));
                }
            } else if closure_targets == 0 {
                removals.push((o, p, closure, Action::GraspToNonTarget(o)));
            }
        }
        deliveries
            .into_iter()
            .chain(removals)
            .map(|(o, success, closure, action)| Candidate {
                action,
                expected_reward: self.node_expected_reward(o, mask),
                closure,
                success,
            })
            .collect()
    }

    /// Expected grasp reward of `o` against the working pair marginals,
    /// conditioned on exactly the objects in `mask` being present.
    fn node_expected_reward(&self, o: ObjectId, mask: u64) -> f64 {
        let np_idx = PairState::Relation(RelationClass::NaturalParent).index();
        let op_idx = PairState::Relation(RelationClass::OrdinaryParent).index();
        let nc_idx = PairState::Relation(RelationClass::NaturalChild).index();
        let weights: Vec<(f64, f64, f64)> = self
            .view
            .ids_in(mask)
            .filter(|&j| j != o)
            .map(|j| {
                let w = self.view.class_weights(o, j);
                (w[np_idx], w[op_idx], w[nc_idx])
            })
            .collect();
        crate::pomdp::expected_reward_from_weights(&weights, self.models.reward)
    }

    fn value(&mut self, mask: u64, horizon: u32) -> f64 {
        if horizon == 0 {
            return 0.0;
        }
        if let Some(&(v, _)) = self.values.get(&(mask, horizon)) {
            return v;
        }
        let candidates = self.candidates_for(mask).to_vec();
        let gamma = self.models.reward.discount;
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = None;
        for (k, c) in candidates.iter().enumerate() {
            let mut v = c.expected_reward;
            if c.success > 0.0 {
                v += gamma * c.success * self.value(mask & !c.closure, horizon - 1);
            }
            let fail = 1.0 - c.success;
            if fail > 0.0 {
                v += gamma * fail * self.value(mask, horizon - 1);
            }
            if v > best {
                best = v;
                best_idx = Some(k);
            }
        }
        // Task complete or dead end: terminal value zero.
        if best_idx.is_none() {
            best = 0.0;
        }
        self.values.insert((mask, horizon), (best, best_idx));
        best
    }

    /// Greedy chain: follow the argmax action down success branches.
    fn extract_plan(&mut self, mut mask: u64, mut horizon: u32) -> Plan {
        let value = self.value(mask, horizon);
        let mut steps = Vec::new();
        while horizon > 0 {
            let Some(&(_, Some(idx))) = self.values.get(&(mask, horizon)) else {
                break;
            };
            let c = self.candidates[&mask][idx].clone();
            steps.push(PlanStep {
                action: c.action,
                moved: self.view.ids_in(c.closure).collect(),
                dest: c.action.destination().unwrap_or(Destination::NonTarget),
            });
            mask &= !c.closure;
            horizon -= 1;
        }
        Plan { steps, value }
    }
}

/// Expectimax lookahead from the current belief: returns the value-
/// maximising action (Report when nothing is left to do) and the
/// greedy decision chain with its expected discounted return.
/// Deterministic: value ties prefer target deliveries, then lower ids.
pub fn plan_lookahead(
    belief: &BeliefState,
    targets: &TargetDesignation,
    models: &Models,
    horizon: u32,
) -> Result<(Action, Plan), PlannerError> {
    if horizon == 0 {
        return Err(PlannerError::HorizonTooSmall);
    }
    let view = WorkingView::from_belief(belief, targets, models.noise)?;
    let mut search = Search::new(&view, *models);
    let plan = search.extract_plan(view.present, horizon);
    let first = plan
        .steps
        .first()
        .map_or(Action::Report, |s| s.action);
    Ok((first, plan))
}

/// Candidate actions while `group` is active on a concrete working
/// graph: deliveries of targets whose stable closure is target-pure and
/// removals of non-target descendants with target-free closures, both
/// restricted to objects free of ordinary children; Report exactly when
/// no designated target remains.
pub fn action_space(
    graph: &SceneGraph,
    table: &DescendantTable,
    group: &TargetGroup,
    remaining: &std::collections::BTreeSet<ObjectId>,
    targets: &TargetDesignation,
) -> Vec<Action> {
    if targets.ids().iter().all(|t| !remaining.contains(t)) {
        return vec![Action::Report];
    }
    let mut deliveries = Vec::new();
    let mut removals = Vec::new();
    for &o in table.entry(group.root) {
        if !remaining.contains(&o) {
            continue;
        }
        let ordinary_children = graph
            .children(o)
            .iter()
            .filter(|&&(c, kind)| kind == crate::scene::SupportKind::Weak && remaining.contains(&c))
            .count();
        if ordinary_children > 0 {
            continue;
        }
        let closure: std::collections::BTreeSet<ObjectId> = graph
            .stable_closure(o)
            .into_iter()
            .filter(|c| remaining.contains(c))
            .collect();
        let target_members = closure.iter().filter(|c| targets.contains(**c)).count();
        if targets.contains(o) {
            if target_members == closure.len() {
                deliveries.push(Action::GraspToTarget(o));
            }
        } else if target_members == 0 {
            removals.push(Action::GraspToNonTarget(o));
        }
    }
    deliveries.sort();
    removals.sort();
    deliveries.into_iter().chain(removals).collect()
}
