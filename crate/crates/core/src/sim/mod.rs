//! Seeded scene generation and the episode environment.
//!
//! Scenes are synthesised topologically: container objects land on the
//! table first, then each remaining object either stacks stably into a
//! container, leans weakly on one or two larger objects, or sits on
//! the table. The environment samples noisy observations, resolves
//! grasp attempts stochastically, and records what actually moved
//! where, so episodes are fully reproducible from their seeds.

mod env;
mod generate;

pub use env::{ExecutionRecord, SimEnv, SimScript};
pub use generate::generate_scene;

use serde::{Deserialize, Serialize};

use crate::planner::{plan_lookahead, Models, Plan, PlannerError, TargetDesignation};
use crate::pomdp::{BeliefState, Destination, NoiseProfile, RewardParams};
use crate::scene::{Category, ObjectId, SceneGraph};

/// One category the generator can draw, with its sampling weight,
/// container flag (containers may take stable children) and coarse
/// size rank used for weak-support candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: Category,
    pub weight: f64,
    pub container: bool,
    pub size: u8,
}

impl CategorySpec {
    fn new(name: &str, weight: f64, container: bool, size: u8) -> Self {
        CategorySpec {
            name: Category::new(name),
            weight,
            container,
            size,
        }
    }
}

/// Scene generator knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Chance a non-container stacks stably into a container.
    pub p_stable: f64,
    /// Chance a non-container leans weakly on larger objects instead.
    pub p_weak: f64,
    /// Chance a weakly supported object gets a second supporter.
    pub extra_weak_parent_prob: f64,
    /// Chance a container stacks stably onto an earlier container of
    /// at least its size (plate piles, bowls on plates).
    pub p_container_stack: f64,
    /// Force at least one container per scene so stable stacking is
    /// always possible.
    pub ensure_container: bool,
    pub categories: Vec<CategorySpec>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            min_objects: 8,
            max_objects: 12,
            p_stable: 0.35,
            p_weak: 0.25,
            extra_weak_parent_prob: 0.3,
            p_container_stack: 0.25,
            ensure_container: true,
            categories: default_categories(),
        }
    }
}

/// The 15 tableware and fruit categories the generator knows.
pub fn default_categories() -> Vec<CategorySpec> {
    vec![
        CategorySpec::new("plate", 1.0, true, 9),
        CategorySpec::new("bowl", 1.0, true, 8),
        CategorySpec::new("saucer", 1.0, true, 7),
        CategorySpec::new("mug", 1.0, true, 6),
        CategorySpec::new("cup", 1.0, true, 6),
        CategorySpec::new("spoon", 1.0, false, 3),
        CategorySpec::new("fork", 1.0, false, 3),
        CategorySpec::new("knife", 1.0, false, 3),
        CategorySpec::new("chopsticks", 1.0, false, 3),
        CategorySpec::new("apple", 1.0, false, 4),
        CategorySpec::new("banana", 1.0, false, 4),
        CategorySpec::new("orange", 1.0, false, 4),
        CategorySpec::new("pear", 1.0, false, 4),
        CategorySpec::new("peach", 1.0, false, 4),
        CategorySpec::new("lemon", 1.0, false, 3),
    ]
}

/// A generated scene with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    pub graph: SceneGraph,
    pub seed: u64,
}

/// Reference chain for scoring: the action-object set of the noiseless
/// optimal plan on the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedChain {
    pub aos: std::collections::BTreeSet<(ObjectId, Destination)>,
    pub plan: Plan,
}

/// Derives the reference chain by planning on the ground truth with
/// perfect perception and deterministic grasps.
pub fn annotate_reference(
    graph: &SceneGraph,
    targets: &TargetDesignation,
    params: &RewardParams,
) -> Result<AnnotatedChain, PlannerError> {
    targets.validate_against(graph)?;
    let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 1.0);
    let belief = BeliefState::certain(graph);
    let models = Models {
        noise: &noise,
        reward: params,
    };
    let horizon =
        crate::planner::DEFAULT_HORIZON_FACTOR * (graph.object_count().max(1) as u32);
    let (_, plan) = plan_lookahead(&belief, targets, &models, horizon)?;
    Ok(AnnotatedChain {
        aos: plan.aos(),
        plan,
    })
}
