//! Closed-loop execution: plan, act, observe, update, repeat.
//!
//! The loop re-plans from the updated belief after every action, so a
//! failed grasp is simply retried and a newly revealed object joins
//! the next plan. Per-object retry caps bound the episode length.

use std::collections::BTreeMap;

use crate::pomdp::{Action, BeliefState, Destination, Observation};
use crate::scene::ObjectId;

use super::baselines::{one_by_one_step, rule_only_step, SceneEstimate};
use super::lookahead::{plan_lookahead, DEFAULT_HORIZON_FACTOR};
use super::{Models, PlannerError, TargetDesignation};

/// Environment handle: a fresh scan, and action execution returning the
/// post-action scan.
pub trait Executor {
    fn observe(&mut self) -> Observation;
    fn execute(&mut self, action: &Action) -> Observation;
}

/// One executed step with what the agent believed it would move.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedStep {
    pub action: Action,
    pub believed_moved: Vec<ObjectId>,
    pub observation_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeFailure {
    /// One object was attempted more often than the retry cap allows.
    RetryCapExceeded(ObjectId),
    /// The global step budget `2 * N * retry_cap` ran out.
    StepBudgetExhausted,
}

/// Everything the loop executed, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedChain {
    pub steps: Vec<ExecutedStep>,
    pub reported: bool,
    pub failure: Option<EpisodeFailure>,
}

impl ExecutedChain {
    /// Action-object set of the executed chain: grasp attempts with
    /// their destinations, duplicates collapsed.
    pub fn aos(&self) -> std::collections::BTreeSet<(ObjectId, Destination)> {
        self.steps
            .iter()
            .filter_map(|s| {
                s.action
                    .grasped()
                    .map(|o| (o, s.action.destination().expect("grasp has destination")))
            })
            .collect()
    }

    pub fn grasp_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action.grasped().is_some())
            .count()
    }
}

/// A per-cycle decision rule: given the current belief, pick the next
/// action and say what it is expected to move.
pub trait StepPolicy {
    fn decide(
        &mut self,
        belief: &BeliefState,
        targets: &TargetDesignation,
        models: &Models,
    ) -> Result<(Action, Vec<ObjectId>), PlannerError>;
}

/// Value-search policy: one lookahead per cycle.
pub struct PomdpStep {
    pub horizon: Option<u32>,
}

impl StepPolicy for PomdpStep {
    fn decide(
        &mut self,
        belief: &BeliefState,
        targets: &TargetDesignation,
        models: &Models,
    ) -> Result<(Action, Vec<ObjectId>), PlannerError> {
        let tracked = belief.tracked_ids().count().max(1) as u32;
        let horizon = self.horizon.unwrap_or(DEFAULT_HORIZON_FACTOR * tracked);
        let (action, _) = plan_lookahead(belief, targets, models, horizon)?;
        let moved = match action.grasped() {
            Some(o) => belief.map_stable_closure(o).into_iter().collect(),
            None => Vec::new(),
        };
        Ok((action, moved))
    }
}

/// One-object-per-grasp traversal policy.
pub struct OneByOneStep;

impl StepPolicy for OneByOneStep {
    fn decide(
        &mut self,
        belief: &BeliefState,
        targets: &TargetDesignation,
        _models: &Models,
    ) -> Result<(Action, Vec<ObjectId>), PlannerError> {
        let est = SceneEstimate::from_belief(belief);
        Ok(match one_by_one_step(&est, targets) {
            Some((o, Destination::Target)) => (Action::GraspToTarget(o), vec![o]),
            Some((o, Destination::NonTarget)) => (Action::GraspToNonTarget(o), vec![o]),
            None => (Action::Report, Vec::new()),
        })
    }
}

/// Stable-rule policy: grasp pending pile roots to the target area.
pub struct RuleOnlyStep;

impl StepPolicy for RuleOnlyStep {
    fn decide(
        &mut self,
        belief: &BeliefState,
        targets: &TargetDesignation,
        _models: &Models,
    ) -> Result<(Action, Vec<ObjectId>), PlannerError> {
        let est = SceneEstimate::from_belief(belief);
        Ok(match rule_only_step(&est, targets) {
            Some((root, _)) => {
                let moved = belief.map_stable_closure(root).into_iter().collect();
                (Action::GraspToTarget(root), moved)
            }
            None => (Action::Report, Vec::new()),
        })
    }
}

/// Scans folded into the belief before the first decision; a single
/// frame cannot distinguish a real support edge from a misread, so the
/// loop integrates a short burst up front.
pub const DEFAULT_INITIAL_SCANS: u32 = 3;

/// Runs the closed loop until the policy reports, a cap trips, or the
/// step budget runs out. Returns the executed chain and final belief.
pub fn run_policy_loop(
    executor: &mut dyn Executor,
    targets: &TargetDesignation,
    models: &Models,
    policy: &mut dyn StepPolicy,
    retry_cap: u32,
    initial_scans: u32,
) -> Result<(ExecutedChain, BeliefState), PlannerError> {
    let first_scan = executor.observe();
    let mut belief = BeliefState::initial(targets.ids(), &first_scan, models.noise)?;
    for _ in 1..initial_scans.max(1) {
        let scan = executor.observe();
        belief = belief.update(Action::Report, &scan, models.noise)?;
    }
    let mut attempts: BTreeMap<ObjectId, u32> = BTreeMap::new();
    let mut chain = ExecutedChain {
        steps: Vec::new(),
        reported: false,
        failure: None,
    };
    loop {
        let budget = 2 * belief.tracked_ids().count().max(1) * retry_cap as usize;
        if chain.steps.len() >= budget {
            chain.failure = Some(EpisodeFailure::StepBudgetExhausted);
            break;
        }
        // Every decision starts from a fresh scan: relation evidence
        // accumulates across cycles instead of resting on one frame.
        let scan = executor.observe();
        belief = belief.update(Action::Report, &scan, models.noise)?;
        let (action, believed_moved) = policy.decide(&belief, targets, models)?;
        let Some(object) = action.grasped() else {
            chain.reported = true;
            break;
        };
        let tries = attempts.entry(object).or_insert(0);
        if *tries >= retry_cap {
            chain.failure = Some(EpisodeFailure::RetryCapExceeded(object));
            break;
        }
        *tries += 1;
        let obs = executor.execute(&action);
        chain.steps.push(ExecutedStep {
            action,
            believed_moved,
            observation_digest: obs.digest(),
        });
        belief = belief.update(action, &obs, models.noise)?;
    }
    Ok((chain, belief))
}

/// The closed replan loop with the value-search policy: repeats
/// lookahead, execution and belief update until Report.
pub fn replan_loop(
    executor: &mut dyn Executor,
    targets: &TargetDesignation,
    models: &Models,
    horizon: Option<u32>,
    retry_cap: u32,
) -> Result<(ExecutedChain, BeliefState), PlannerError> {
    let mut policy = PomdpStep { horizon };
    run_policy_loop(
        executor,
        targets,
        models,
        &mut policy,
        retry_cap,
        DEFAULT_INITIAL_SCANS,
    )
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::pomdp::{Destination, NoiseProfile, RewardParams};
    use crate::scene::{Category, SceneGraph, SupportEdge, SupportKind};
    use crate::sim::{annotate_reference, generate_scene, GeneratorConfig, SimEnv, SimScript};

    fn bowl_spoon() -> SceneGraph {
        SceneGraph::new(
            vec![Category::new("bowl"), Category::new("spoon")],
            vec![SupportEdge {
                parent: ObjectId(0),
                child: ObjectId(1),
                kind: SupportKind::Stable,
            }],
        )
        .unwrap()
    }

    fn designate(ids: &[u32]) -> TargetDesignation {
        TargetDesignation::new(ids.iter().map(|&i| ObjectId(i)).collect()).unwrap()
    }

    #[test]
    fn deterministic_loop_reproduces_the_one_shot_plan() {
        let params = RewardParams::default();
        for seed in 0..40 {
            let scene = generate_scene(&GeneratorConfig::default(), seed);
            let noise = NoiseProfile::uniform(scene.graph.categories().iter(), 1.0, 1.0);
            let models = Models {
                noise: &noise,
                reward: &params,
            };
            let targets = designate(&[0, (seed % scene.graph.object_count() as u64) as u32]);
            let reference = annotate_reference(&scene.graph, &targets, &params).unwrap();
            let mut env = SimEnv::new(scene.graph.clone(), noise.clone(), seed);
            let (chain, _) = replan_loop(&mut env, &targets, &models, None, 3).unwrap();
            let executed: Vec<Action> = chain.steps.iter().map(|s| s.action).collect();
            let planned: Vec<Action> = reference.plan.steps.iter().map(|s| s.action).collect();
            assert_eq!(executed, planned, "seed {seed}");
            assert!(chain.reported);
        }
    }

    #[test]
    fn forced_failure_is_retried_and_still_succeeds() {
        let graph = bowl_spoon();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 0.8);
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let targets = designate(&[0, 1]);
        let script = SimScript {
            forced_failures: BTreeSet::from([0]),
            force_success: true,
            ..SimScript::default()
        };
        let mut env = SimEnv::new(graph.clone(), noise.clone(), 1).with_script(script);
        let (chain, _) = replan_loop(&mut env, &targets, &models, None, 3).unwrap();
        let executed: Vec<Action> = chain.steps.iter().map(|s| s.action).collect();
        assert_eq!(
            executed,
            vec![
                Action::GraspToTarget(ObjectId(0)),
                Action::GraspToTarget(ObjectId(0))
            ],
            "the failed grasp is reissued on the next cycle"
        );
        assert!(env.all_targets_delivered(targets.ids()));
    }

    #[test]
    fn child_revealed_after_failure_changes_the_plan() {
        // The spoon inside the bowl is invisible at first; only the
        // bowl is wanted. The first grasp fails, the next scan reveals
        // the spoon, and the loop adapts: spoon out first, then bowl.
        let graph = bowl_spoon();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 0.8);
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let targets = designate(&[0]);
        let script = SimScript {
            forced_failures: BTreeSet::from([0]),
            force_success: true,
            hide_until_grasp: BTreeMap::from([(ObjectId(1), 1)]),
        };
        let mut env = SimEnv::new(graph.clone(), noise.clone(), 2).with_script(script);
        let (chain, _) = replan_loop(&mut env, &targets, &models, None, 3).unwrap();
        let executed: Vec<Action> = chain.steps.iter().map(|s| s.action).collect();
        assert_eq!(
            executed,
            vec![
                Action::GraspToTarget(ObjectId(0)),
                Action::GraspToNonTarget(ObjectId(1)),
                Action::GraspToTarget(ObjectId(0)),
            ]
        );
        let reference = annotate_reference(&graph, &targets, &params).unwrap();
        assert_eq!(chain.aos(), reference.aos, "final chain matches the reference");
        assert_eq!(
            chain.aos(),
            BTreeSet::from([
                (ObjectId(1), Destination::NonTarget),
                (ObjectId(0), Destination::Target)
            ])
        );
    }

    #[test]
    fn retry_cap_marks_the_episode_failed() {
        let graph = SceneGraph::new(vec![Category::new("plate")], vec![]).unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 0.5);
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let targets = designate(&[0]);
        let script = SimScript {
            forced_failures: (0..100).collect(),
            ..SimScript::default()
        };
        let mut env = SimEnv::new(graph.clone(), noise.clone(), 3).with_script(script);
        let (chain, _) = replan_loop(&mut env, &targets, &models, None, 3).unwrap();
        assert_eq!(chain.grasp_count(), 3);
        assert_eq!(
            chain.failure,
            Some(EpisodeFailure::RetryCapExceeded(ObjectId(0)))
        );
        assert!(!chain.reported);
    }
}
