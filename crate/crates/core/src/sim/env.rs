//! The episode environment: noisy scans and stochastic grasp execution
//! over a mutable ground-truth state.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serde::Serialize;

use crate::planner::Executor;
use crate::pomdp::{Action, Destination, JointState, NoiseProfile, Observation, PairState};
use crate::scene::{ObjectId, RelationClass, SceneGraph};

/// Scripted overrides for tests and robustness scenarios.
#[derive(Debug, Clone, Default)]
pub struct SimScript {
    /// Grasp indexes (0-based over executed grasps) forced to fail.
    pub forced_failures: BTreeSet<usize>,
    /// Every legal grasp not forced to fail succeeds, regardless of the
    /// profile's success probability.
    pub force_success: bool,
    /// Objects suppressed from observations while fewer grasps than the
    /// given count have been executed.
    pub hide_until_grasp: BTreeMap<ObjectId, usize>,
}

/// What one executed action actually did in the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionRecord {
    pub step: usize,
    pub action: Action,
    pub success: bool,
    pub moved: Vec<ObjectId>,
}

/// Mutable simulation environment for one episode.
pub struct SimEnv {
    graph: SceneGraph,
    state: JointState,
    delivered: BTreeMap<ObjectId, Destination>,
    records: Vec<ExecutionRecord>,
    noise: NoiseProfile,
    rng: ChaCha8Rng,
    script: SimScript,
    grasps_executed: usize,
}

impl SimEnv {
    pub fn new(graph: SceneGraph, noise: NoiseProfile, episode_seed: u64) -> Self {
        let state = JointState::from_scene(&graph);
        SimEnv {
            graph,
            state,
            delivered: BTreeMap::new(),
            records: Vec::new(),
            noise,
            rng: ChaCha8Rng::seed_from_u64(episode_seed),
            script: SimScript::default(),
            grasps_executed: 0,
        }
    }

    pub fn with_script(mut self, script: SimScript) -> Self {
        self.script = script;
        self
    }

    pub fn graph(&self) -> &SceneGraph {
        &self.graph
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn records(&self) -> &[ExecutionRecord] {
        &self.records
    }

    pub fn delivered(&self) -> &BTreeMap<ObjectId, Destination> {
        &self.delivered
    }

    /// Task success: every target rests in the target area.
    pub fn all_targets_delivered(&self, targets: &BTreeSet<ObjectId>) -> bool {
        targets
            .iter()
            .all(|t| self.delivered.get(t) == Some(&Destination::Target))
    }

    /// Samples a noisy scan of the current state: each present object
    /// is detected with its category recall (absent objects never
    /// are), and each detected pair's relation is reported correctly
    /// with the product of the endpoint recalls, otherwise as a
    /// uniformly random wrong class, mirrored for symmetry.
    fn sample_observation(&mut self) -> Observation {
        let mut detected = BTreeSet::new();
        let mut categories = BTreeMap::new();
        for id in self.state.ids() {
            if !self.state.is_present(id) {
                continue;
            }
            let rc = self
                .noise
                .recall_of(self.state.category(id))
                .expect("scene categories are covered by the profile");
            let seen = self.rng.random_bool(rc);
            let hidden = self
                .script
                .hide_until_grasp
                .get(&id)
                .is_some_and(|&until| self.grasps_executed < until);
            if seen && !hidden {
                detected.insert(id);
                categories.insert(id, self.state.category(id).clone());
            }
        }
        let mut relations = BTreeMap::new();
        for &i in &detected {
            for &j in &detected {
                if i >= j {
                    continue;
                }
                let PairState::Relation(actual) = self.state.pair(i, j) else {
                    continue;
                };
                let rc = self.noise.recall_of(self.state.category(i)).unwrap()
                    * self.noise.recall_of(self.state.category(j)).unwrap();
                let reported = if self.rng.random_bool(rc) {
                    actual
                } else {
                    let wrong: Vec<RelationClass> = RelationClass::ALL
                        .into_iter()
                        .filter(|&c| c != actual)
                        .collect();
                    wrong[self.rng.random_range(0..wrong.len())]
                };
                relations.insert((i, j), reported);
            }
        }
        Observation::new(detected, categories, relations)
            .expect("sampled observation is structurally valid")
    }

    /// Resolves a grasp attempt: an absent object is an automatic
    /// failure, otherwise the grasp succeeds with the category's
    /// success probability (unless the script forces a failure) and
    /// removes the true stable closure to the action's destination.
    fn resolve(&mut self, action: &Action) {
        let step = self.records.len();
        let Some(o) = action.grasped() else {
            self.records.push(ExecutionRecord {
                step,
                action: *action,
                success: true,
                moved: Vec::new(),
            });
            return;
        };
        let grasp_index = self.grasps_executed;
        self.grasps_executed += 1;
        let legal = o.index() < self.state.object_count() && self.state.is_present(o);
        let success = if !legal {
            // Consume no randomness: there is nothing to resolve.
            false
        } else {
            let p = self
                .noise
                .grasp_success_of(self.state.category(o))
                .expect("scene categories are covered by the profile");
            let rolled = self.rng.random_bool(p);
            if self.script.forced_failures.contains(&grasp_index) {
                false
            } else {
                rolled || self.script.force_success
            }
        };
        let mut moved = Vec::new();
        if success {
            let closure = self.state.stable_closure(o);
            let dest = action.destination().expect("grasp has destination");
            for &m in &closure {
                self.delivered.insert(m, dest);
            }
            self.state.remove_all(&closure);
            moved = closure.into_iter().collect();
        }
        self.records.push(ExecutionRecord {
            step,
            action: *action,
            success,
            moved,
        });
    }
}

impl Executor for SimEnv {
    fn observe(&mut self) -> Observation {
        self.sample_observation()
    }

    fn execute(&mut self, action: &Action) -> Observation {
        self.resolve(action);
        self.sample_observation()
    }
}
