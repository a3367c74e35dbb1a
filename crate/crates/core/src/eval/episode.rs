//! Single-episode execution and task sampling.
//!
//! Targets are designated from a scan of the scene, the way an
//! operator picks objects off the detector output. The designation
//! scan is the episode's first observation: every planner evaluated on
//! the same designation also starts from the same initial perception,
//! and shares the environment's random stream, so planner comparisons
//! run under common random numbers.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::HarnessConfig;
use crate::planner::{
    run_policy_loop, Models, OneByOneStep, PomdpStep, RuleOnlyStep, StepPolicy,
    TargetDesignation,
};
use crate::scene::{ObjectId, SceneGraph};
use crate::sim::{annotate_reference, AnnotatedChain, SimEnv};

use super::{EpisodeReport, EvalError, PlannerId, TaskKind};

/// splitmix64: cheap, stable seed derivation.
pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

/// One sampled task instance on a scene, shared across planners.
#[derive(Debug, Clone)]
pub struct DesignationCase {
    pub task: TaskKind,
    pub draw: usize,
    pub targets: TargetDesignation,
    pub reference: AnnotatedChain,
    /// Seed of the episode environment; identical for every planner so
    /// they face the same initial scan and random stream.
    pub episode_seed: u64,
}

fn sample_targets(
    task: TaskKind,
    graph: &SceneGraph,
    detected: &BTreeSet<ObjectId>,
    rng: &mut ChaCha8Rng,
) -> BTreeSet<ObjectId> {
    let pool: Vec<ObjectId> = if detected.is_empty() {
        graph.ids().collect()
    } else {
        detected.iter().copied().collect()
    };
    match task {
        TaskKind::TableClear => graph.ids().collect(),
        TaskKind::SingleTarget => BTreeSet::from([pool[rng.random_range(0..pool.len())]]),
        TaskKind::MultiTarget => {
            let want = rng.random_range(2..=4usize).min(pool.len()).max(1);
            let mut remaining = pool;
            let mut out = BTreeSet::new();
            while out.len() < want && !remaining.is_empty() {
                let k = rng.random_range(0..remaining.len());
                out.insert(remaining.swap_remove(k));
            }
            out
        }
    }
}

/// Samples the designations for one scene: two single-target and two
/// multi-target draws plus one table clean, restricted to the
/// requested tasks. The designation pool is what the episode's first
/// scan detects.
pub fn designations_for_scene(
    graph: &SceneGraph,
    scene_seed: u64,
    master_seed: u64,
    tasks: &[TaskKind],
    config: &HarnessConfig,
) -> Result<Vec<DesignationCase>, EvalError> {
    let mut cases = Vec::new();
    for &task in tasks {
        let draws = match task {
            TaskKind::SingleTarget | TaskKind::MultiTarget => 2,
            TaskKind::TableClear => 1,
        };
        for draw in 0..draws {
            let episode_seed = mix_seed(&[master_seed, scene_seed, task as u64 + 1, draw as u64]);
            // The designation scan replays the episode's first
            // observation: same seed, same stream prefix.
            let mut probe = SimEnv::new(graph.clone(), config.noise.clone(), episode_seed);
            let scan = crate::planner::Executor::observe(&mut probe);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                master_seed,
                scene_seed,
                0xde51,
                task as u64 + 1,
                draw as u64,
            ]));
            let ids = sample_targets(task, graph, &scan.detected, &mut rng);
            let targets = TargetDesignation::new(ids)?;
            let reference = annotate_reference(graph, &targets, &config.reward)?;
            cases.push(DesignationCase {
                task,
                draw,
                targets,
                reference,
                episode_seed,
            });
        }
    }
    Ok(cases)
}

/// Runs one planner through one designation case and scores it.
pub fn run_episode(
    graph: &SceneGraph,
    scene_seed: u64,
    case: &DesignationCase,
    planner: PlannerId,
    config: &HarnessConfig,
) -> Result<EpisodeReport, EvalError> {
    let mut env = SimEnv::new(graph.clone(), config.noise.clone(), case.episode_seed);
    let models = Models {
        noise: &config.noise,
        reward: &config.reward,
    };
    let mut policy: Box<dyn StepPolicy> = match planner {
        PlannerId::Pomdp => Box::new(PomdpStep {
            horizon: config.horizon,
        }),
        PlannerId::OneByOne => Box::new(OneByOneStep),
        PlannerId::RuleOnly => Box::new(RuleOnlyStep),
    };
    let (chain, _) = run_policy_loop(
        &mut env,
        &case.targets,
        &models,
        &mut *policy,
        config.retry_cap,
        config.initial_scans,
    )?;

    let executed_aos: Vec<(ObjectId, crate::pomdp::Destination)> = chain
        .steps
        .iter()
        .filter_map(|s| {
            s.action
                .grasped()
                .map(|o| (o, s.action.destination().expect("grasp")))
        })
        .collect();
    let (first_step_rational, chain_rational) =
        super::metric_aos_rationality(&executed_aos, &case.reference);
    let grasp_count = chain.grasp_count();
    Ok(EpisodeReport {
        planner,
        task: case.task,
        scene_seed,
        designation: case.draw,
        episode_seed: case.episode_seed,
        targets: case.targets.ids().iter().copied().collect(),
        first_step_rational,
        chain_rational,
        grasp_count,
        success: env.all_targets_delivered(case.targets.ids()),
        simulated_minutes: grasp_count as f64 * config.grasp_time_minutes,
        executed_aos,
        failure: chain.failure.map(|f| format!("{f:?}")),
    })
}
