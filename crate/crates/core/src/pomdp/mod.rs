//! POMDP core: factored state, actions, observations, noise and reward
//! models, and the Bayes belief filter.
//!
//! The scene state is factored per object into a presence bit and a
//! relation entry per other object. Grasping a present object removes
//! its stable closure with the per-category success probability and
//! leaves the state unchanged otherwise. Observations are noisy object
//! detections plus pairwise relation reports among detected objects.

mod belief;
mod models;
mod reward;

pub use belief::{BeliefState, ObjectBelief, PairBelief, PRESENCE_THRESHOLD};
pub use models::{observation_probability, transition_outcomes};
pub use reward::{expected_reward, reward, RelationCounts};
pub(crate) use reward::expected_reward_from_weights;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{Category, ObjectId, RelationClass, SceneError, SceneGraph};

#[derive(Debug, Error)]
pub enum PomdpError {
    #[error("action grasps {0}, which is absent")]
    GraspAbsentObject(ObjectId),
    #[error("object {0} is not part of this state or belief")]
    UnknownObject(ObjectId),
    #[error("category {0} has no entry in the noise profile table `{1}`")]
    MissingCategory(Category, &'static str),
    #[error("noise profile value {value} for {category} in `{table}` is outside (0, 1]")]
    ProfileValueOutOfRange {
        category: Category,
        table: &'static str,
        value: f64,
    },
    #[error("observation is impossible under the model (evidence probability 0 for {0})")]
    ImpossibleObservation(ObjectId),
    #[error("observation is malformed: {0}")]
    MalformedObservation(String),
    #[error("noise profile file is malformed: {0}")]
    MalformedProfile(String),
    #[error("reward parameters are invalid: {0}")]
    BadRewardParams(&'static str),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Where a grasped object is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Target,
    NonTarget,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Destination::Target => f.write_str("target"),
            Destination::NonTarget => f.write_str("non_target"),
        }
    }
}

/// One of the `2 * N_obj + 1` task actions: grasp an object to either
/// area, or report that no grasp remains to perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "action", content = "object", rename_all = "snake_case")]
pub enum Action {
    GraspToTarget(ObjectId),
    GraspToNonTarget(ObjectId),
    Report,
}

impl Action {
    pub fn grasped(self) -> Option<ObjectId> {
        match self {
            Action::GraspToTarget(o) | Action::GraspToNonTarget(o) => Some(o),
            Action::Report => None,
        }
    }

    pub fn destination(self) -> Option<Destination> {
        match self {
            Action::GraspToTarget(_) => Some(Destination::Target),
            Action::GraspToNonTarget(_) => Some(Destination::NonTarget),
            Action::Report => None,
        }
    }

    /// Full action space for a scene of `n` objects.
    pub fn space(n: usize) -> Vec<Action> {
        let mut out = Vec::with_capacity(2 * n + 1);
        for i in 0..n as u32 {
            out.push(Action::GraspToTarget(ObjectId(i)));
            out.push(Action::GraspToNonTarget(ObjectId(i)));
        }
        out.push(Action::Report);
        out
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::GraspToTarget(o) => write!(f, "grasp {o} -> target"),
            Action::GraspToNonTarget(o) => write!(f, "grasp {o} -> non-target"),
            Action::Report => f.write_str("report"),
        }
    }
}

/// State of one ordered pair: a relation class, or absent when either
/// object has been removed from the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairState {
    Relation(RelationClass),
    Absent,
}

impl PairState {
    pub const COUNT: usize = 6;

    pub const ALL: [PairState; 6] = [
        PairState::Relation(RelationClass::OrdinaryParent),
        PairState::Relation(RelationClass::OrdinaryChild),
        PairState::Relation(RelationClass::NaturalParent),
        PairState::Relation(RelationClass::NaturalChild),
        PairState::Relation(RelationClass::NoRelation),
        PairState::Absent,
    ];

    pub fn index(self) -> usize {
        match self {
            PairState::Relation(RelationClass::OrdinaryParent) => 0,
            PairState::Relation(RelationClass::OrdinaryChild) => 1,
            PairState::Relation(RelationClass::NaturalParent) => 2,
            PairState::Relation(RelationClass::NaturalChild) => 3,
            PairState::Relation(RelationClass::NoRelation) => 4,
            PairState::Absent => 5,
        }
    }

    pub fn inverse(self) -> PairState {
        match self {
            PairState::Relation(c) => PairState::Relation(c.inverse()),
            PairState::Absent => PairState::Absent,
        }
    }
}

/// Joint scene state: per-object presence plus the full pair matrix.
///
/// Removal is the only mutation: a removed object's presence bit drops
/// and every pair entry touching it becomes absent.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    categories: Vec<Category>,
    present: Vec<bool>,
    pairs: Vec<PairState>, // n * n, diagonal fixed to Absent
}

impl JointState {
    pub fn from_scene(graph: &SceneGraph) -> Self {
        let n = graph.object_count();
        let mut pairs = vec![PairState::Absent; n * n];
        let matrix = graph.relation_matrix();
        for i in graph.ids() {
            for j in graph.ids() {
                if i != j {
                    pairs[i.index() * n + j.index()] =
                        PairState::Relation(matrix.get(i, j).expect("off-diagonal"));
                }
            }
        }
        JointState {
            categories: graph.categories().to_vec(),
            present: vec![true; n],
            pairs,
        }
    }

    pub fn object_count(&self) -> usize {
        self.categories.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.categories.len() as u32).map(ObjectId)
    }

    pub fn category(&self, id: ObjectId) -> &Category {
        &self.categories[id.index()]
    }

    pub fn is_present(&self, id: ObjectId) -> bool {
        self.present[id.index()]
    }

    pub fn present_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.ids().filter(|&id| self.is_present(id))
    }

    pub fn pair(&self, i: ObjectId, j: ObjectId) -> PairState {
        if i == j {
            return PairState::Absent;
        }
        self.pairs[i.index() * self.object_count() + j.index()]
    }

    /// Stable closure of `o` among present objects: `o` plus everything
    /// reachable over natural-parent entries.
    pub fn stable_closure(&self, o: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::from([o]);
        let mut queue = vec![o];
        while let Some(x) = queue.pop() {
            for j in self.present_ids() {
                if !out.contains(&j)
                    && self.pair(x, j) == PairState::Relation(RelationClass::NaturalParent)
                {
                    out.insert(j);
                    queue.push(j);
                }
            }
        }
        out
    }

    /// Removes every object in `set`: presence drops and all touching
    /// pair entries become absent.
    pub fn remove_all(&mut self, set: &BTreeSet<ObjectId>) {
        let n = self.object_count();
        for &o in set {
            self.present[o.index()] = false;
            for k in 0..n {
                self.pairs[o.index() * n + k] = PairState::Absent;
                self.pairs[k * n + o.index()] = PairState::Absent;
            }
        }
    }
}

/// Noisy perception of the scene: detected objects (with the detector's
/// category labels) and pairwise relation reports among detected pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub detected: BTreeSet<ObjectId>,
    pub categories: BTreeMap<ObjectId, Category>,
    relations: BTreeMap<(ObjectId, ObjectId), RelationClass>,
}

impl Observation {
    /// Builds an observation from per-unordered-pair relation reports,
    /// mirroring each entry so the relation map is symmetric.
    pub fn new(
        detected: BTreeSet<ObjectId>,
        categories: BTreeMap<ObjectId, Category>,
        relations: BTreeMap<(ObjectId, ObjectId), RelationClass>,
    ) -> Result<Self, PomdpError> {
        let mut full = BTreeMap::new();
        for (&(i, j), &class) in &relations {
            if i == j {
                return Err(PomdpError::MalformedObservation(format!(
                    "relation report for {i} with itself"
                )));
            }
            for id in [i, j] {
                if !detected.contains(&id) {
                    return Err(PomdpError::MalformedObservation(format!(
                        "relation report references undetected {id}"
                    )));
                }
            }
            if let Some(&prev) = full.get(&(i, j)) {
                if prev != class {
                    return Err(PomdpError::MalformedObservation(format!(
                        "conflicting relation reports for ({i}, {j})"
                    )));
                }
            }
            full.insert((i, j), class);
            full.insert((j, i), class.inverse());
        }
        Ok(Observation {
            detected,
            categories,
            relations: full,
        })
    }

    pub fn is_detected(&self, id: ObjectId) -> bool {
        self.detected.contains(&id)
    }

    pub fn relation(&self, i: ObjectId, j: ObjectId) -> Option<RelationClass> {
        self.relations.get(&(i, j)).copied()
    }

    pub fn relations(&self) -> impl Iterator<Item = (ObjectId, ObjectId, RelationClass)> + '_ {
        self.relations.iter().map(|(&(i, j), &c)| (i, j, c))
    }

    /// Stable short digest of the observation content, for audit traces.
    pub fn digest(&self) -> String {
        // FNV-1a over a canonical byte rendering; stable across builds.
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &id in &self.detected {
            eat(&id.0.to_le_bytes());
            if let Some(cat) = self.categories.get(&id) {
                eat(cat.as_str().as_bytes());
            }
        }
        for (&(i, j), &c) in &self.relations {
            eat(&i.0.to_le_bytes());
            eat(&j.0.to_le_bytes());
            eat(&[c as u8]);
        }
        format!("{hash:016x}")
    }
}

/// Per-category perception recall and grasp success tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub recall: BTreeMap<Category, f64>,
    pub grasp_success: BTreeMap<Category, f64>,
}

impl NoiseProfile {
    /// Uniform profile: every category shares one recall and one grasp
    /// success value. Handy for tests and noiseless runs.
    pub fn uniform<'a>(
        categories: impl IntoIterator<Item = &'a Category>,
        recall: f64,
        grasp_success: f64,
    ) -> Self {
        let mut r = BTreeMap::new();
        let mut g = BTreeMap::new();
        for c in categories {
            r.insert(c.clone(), recall);
            g.insert(c.clone(), grasp_success);
        }
        NoiseProfile {
            recall: r,
            grasp_success: g,
        }
    }

    pub fn validate(&self) -> Result<(), PomdpError> {
        for (table, map) in [("recall", &self.recall), ("grasp_success", &self.grasp_success)] {
            for (category, &value) in map {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(PomdpError::ProfileValueOutOfRange {
                        category: category.clone(),
                        table,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn recall_of(&self, category: &Category) -> Result<f64, PomdpError> {
        self.recall
            .get(category)
            .copied()
            .ok_or_else(|| PomdpError::MissingCategory(category.clone(), "recall"))
    }

    pub fn grasp_success_of(&self, category: &Category) -> Result<f64, PomdpError> {
        self.grasp_success
            .get(category)
            .copied()
            .ok_or_else(|| PomdpError::MissingCategory(category.clone(), "grasp_success"))
    }

    pub fn from_json(text: &str) -> Result<Self, PomdpError> {
        let profile: NoiseProfile =
            serde_json::from_str(text).map_err(|e| PomdpError::MalformedProfile(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Reward shaping constants and the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub base_penalty: f64,
    pub nc_gain: f64,
    pub oc_gain: f64,
    pub np_penalty: f64,
    pub discount: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            base_penalty: -10.0,
            nc_gain: 5.0,
            oc_gain: -10.0,
            np_penalty: -2.0,
            discount: 0.8,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), PomdpError> {
        if self.base_penalty >= 0.0 || self.base_penalty.is_nan() {
            return Err(PomdpError::BadRewardParams(
                "base_penalty must be negative",
            ));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(PomdpError::BadRewardParams("discount must lie in (0, 1)"));
        }
        Ok(())
    }
}
