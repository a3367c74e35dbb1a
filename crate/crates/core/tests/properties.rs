//! Cross-module invariants over generated scenes and episodes.

use std::collections::BTreeSet;

use proptest::prelude::*;

use stackplan_core::config::HarnessConfig;
use stackplan_core::eval::{
    aggregate, designations_for_scene, evaluate, generate_scenes, run_episode, EvaluateOptions,
    PlannerId, TaskKind,
};
use stackplan_core::planner::{
    baseline_one_by_one, group_targets, plan_lookahead, replan_loop, Models, TargetDesignation,
    DEFAULT_HORIZON_FACTOR,
};
use stackplan_core::pomdp::{
    reward, Action, BeliefState, Destination, JointState, NoiseProfile, RewardParams,
};
use stackplan_core::scene::{DescendantTable, ObjectId, RelationClass, SceneGraph, SupportKind};
use stackplan_core::sim::{generate_scene, GeneratorConfig, SimEnv};

fn deterministic_noise(graph: &SceneGraph) -> NoiseProfile {
    NoiseProfile::uniform(graph.categories().iter(), 1.0, 1.0)
}

fn seeded_targets(graph: &SceneGraph, seed: u64, count: usize) -> TargetDesignation {
    let n = graph.object_count() as u64;
    let ids: BTreeSet<ObjectId> = (0..count as u64)
        .map(|k| ObjectId(((seed.wrapping_mul(6364136223846793005).wrapping_add(k * 97)) % n) as u32))
        .collect();
    TargetDesignation::new(ids).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Relation classes are antisymmetric across every ordered pair of
    /// every generated scene.
    #[test]
    fn relation_matrix_is_antisymmetric(seed in 0u64..1_000_000) {
        let scene = generate_scene(&GeneratorConfig::default(), seed);
        let matrix = scene.graph.relation_matrix();
        for i in scene.graph.ids() {
            for j in scene.graph.ids() {
                if i == j {
                    prop_assert!(matrix.get(i, j).is_err());
                    continue;
                }
                let forward = matrix.get(i, j).unwrap();
                let backward = matrix.get(j, i).unwrap();
                prop_assert_eq!(forward.inverse(), backward);
                prop_assert_eq!(forward == RelationClass::NoRelation,
                                backward == RelationClass::NoRelation);
            }
        }
    }

    /// Descendant entries cover exactly the subtree, end on the owner,
    /// and list every member before its in-subtree ancestors.
    #[test]
    fn descendant_entries_are_leaf_to_root(seed in 0u64..1_000_000) {
        let scene = generate_scene(&GeneratorConfig::default(), seed);
        let table = DescendantTable::build(&scene.graph).unwrap();
        for o in scene.graph.ids() {
            let entry = table.entry(o);
            prop_assert_eq!(*entry.last().unwrap(), o);
            let mut expected = scene.graph.descendants(o);
            expected.insert(o);
            let as_set: BTreeSet<ObjectId> = entry.iter().copied().collect();
            prop_assert_eq!(as_set.len(), entry.len(), "no duplicates");
            prop_assert_eq!(as_set, expected);
            for (k, &member) in entry.iter().enumerate() {
                for later in &entry[k + 1..] {
                    prop_assert!(
                        !scene.graph.descendants(member).contains(later),
                        "descendant {later} listed after its ancestor {member}"
                    );
                }
            }
            // Stable closure stays within the subtree entry.
            for c in scene.graph.stable_closure(o) {
                prop_assert!(entry.contains(&c));
            }
        }
    }
}

#[test]
fn generated_scenes_always_validate() {
    let config = GeneratorConfig::default();
    for seed in 0..10_000 {
        let scene = generate_scene(&config, seed);
        let report = scene.graph.validate();
        assert!(report.is_ok(), "seed {seed}: {:?}", report.violations);
    }
}

#[test]
fn belief_invariants_hold_through_noisy_episodes() {
    let config = HarnessConfig::default();
    for seed in 0..300 {
        let scene = generate_scene(&config.generator, seed);
        let noise = &config.noise;
        let mut env = SimEnv::new(scene.graph.clone(), noise.clone(), seed ^ 0xabcd);
        let targets = seeded_targets(&scene.graph, seed, 2);
        let first = stackplan_core::planner::Executor::observe(&mut env);
        let mut belief = BeliefState::initial(targets.ids(), &first, noise).unwrap();
        belief.check_invariants(1e-9).unwrap();
        let params = RewardParams::default();
        let models = Models {
            noise,
            reward: &params,
        };
        for _ in 0..6 {
            let (action, _) = plan_lookahead(&belief, &targets, &models, 8).unwrap();
            if action == Action::Report {
                break;
            }
            let obs = stackplan_core::planner::Executor::execute(&mut env, &action);
            belief = belief.update(action, &obs, noise).unwrap();
            belief.check_invariants(1e-9).unwrap();
        }
    }
}

/// With perfect perception and deterministic grasps the belief remains
/// a point mass equal to the simulator's ground truth all episode.
#[test]
fn noiseless_belief_is_exact_state_tracking() {
    let config = GeneratorConfig::default();
    for seed in 0..100 {
        let scene = generate_scene(&config, seed);
        let noise = deterministic_noise(&scene.graph);
        let mut env = SimEnv::new(scene.graph.clone(), noise.clone(), seed);
        let targets = seeded_targets(&scene.graph, seed, 2);
        let first = stackplan_core::planner::Executor::observe(&mut env);
        let mut belief = BeliefState::initial(targets.ids(), &first, &noise).unwrap();
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let horizon = DEFAULT_HORIZON_FACTOR * scene.graph.object_count() as u32;
        loop {
            for id in scene.graph.ids() {
                let truth = env.state().is_present(id);
                assert_eq!(belief.presence(id) > 0.5, truth, "seed {seed} object {id}");
                if truth {
                    assert_eq!(belief.presence(id), 1.0);
                }
            }
            let (action, _) = plan_lookahead(&belief, &targets, &models, horizon).unwrap();
            if action == Action::Report {
                break;
            }
            let obs = stackplan_core::planner::Executor::execute(&mut env, &action);
            belief = belief.update(action, &obs, &noise).unwrap();
        }
    }
}

/// The value search never plans more grasps than the one-by-one
/// traversal, and strictly fewer whenever a target group has at least
/// two members.
#[test]
fn lookahead_dominates_one_by_one_on_grasp_count() {
    let config = GeneratorConfig {
        p_container_stack: 0.4,
        ..GeneratorConfig::default()
    };
    let mut strict_checked = 0usize;
    for seed in 0..300 {
        let scene = generate_scene(&config, seed);
        let noise = deterministic_noise(&scene.graph);
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let targets = seeded_targets(&scene.graph, seed, 1 + (seed % 3) as usize);
        let belief = BeliefState::certain(&scene.graph);
        let horizon = DEFAULT_HORIZON_FACTOR * scene.graph.object_count() as u32;
        let (_, plan) = plan_lookahead(&belief, &targets, &models, horizon).unwrap();
        let baseline = baseline_one_by_one(&scene.graph, &targets).unwrap();
        assert!(
            plan.grasp_count() <= baseline.grasp_count(),
            "seed {seed}: {} vs {}",
            plan.grasp_count(),
            baseline.grasp_count()
        );
        let (_, groups) = group_targets(&scene.graph, &targets).unwrap();
        if groups.iter().any(|g| g.members.len() >= 2) {
            strict_checked += 1;
            assert!(
                plan.grasp_count() < baseline.grasp_count(),
                "seed {seed}: multi-member group must save grasps"
            );
        }
    }
    assert!(strict_checked > 20, "corpus too sparse to exercise groups");
}

/// Complete deterministic plans never move a non-target into the
/// target area or a target into the non-target area, and never grasp
/// an object while it still has ordinary children in the working
/// graph.
#[test]
fn plans_are_safe_and_order_sound() {
    let config = GeneratorConfig::default();
    for seed in 0..300 {
        let scene = generate_scene(&config, seed);
        let noise = deterministic_noise(&scene.graph);
        let params = RewardParams::default();
        let models = Models {
            noise: &noise,
            reward: &params,
        };
        let targets = seeded_targets(&scene.graph, seed, 1 + (seed % 4) as usize);
        let belief = BeliefState::certain(&scene.graph);
        let horizon = DEFAULT_HORIZON_FACTOR * scene.graph.object_count() as u32;
        let (_, plan) = plan_lookahead(&belief, &targets, &models, horizon).unwrap();

        let (working, _) = group_targets(&scene.graph, &targets).unwrap();
        let mut remaining: BTreeSet<ObjectId> = scene.graph.ids().collect();
        for step in &plan.steps {
            let Some(o) = step.action.grasped() else {
                continue;
            };
            let moved: BTreeSet<ObjectId> = step.moved.iter().copied().collect();
            match step.dest {
                Destination::Target => {
                    assert!(
                        moved.iter().all(|m| targets.contains(*m)),
                        "seed {seed}: non-target moved to target area"
                    );
                }
                Destination::NonTarget => {
                    assert!(
                        moved.iter().all(|m| !targets.contains(*m)),
                        "seed {seed}: target moved to non-target area"
                    );
                }
            }
            let blockers = working
                .children(o)
                .iter()
                .filter(|&&(c, kind)| kind == SupportKind::Weak && remaining.contains(&c))
                .count();
            assert_eq!(blockers, 0, "seed {seed}: grasped {o} under ordinary children");
            for m in &moved {
                remaining.remove(m);
            }
        }
        // Complete plan: every target delivered exactly once.
        let delivered: Vec<ObjectId> = plan
            .steps
            .iter()
            .filter(|s| s.dest == Destination::Target)
            .flat_map(|s| s.moved.iter().copied())
            .collect();
        let delivered_set: BTreeSet<ObjectId> = delivered.iter().copied().collect();
        assert_eq!(delivered.len(), delivered_set.len(), "seed {seed}: double delivery");
        assert_eq!(&delivered_set, targets.ids(), "seed {seed}: incomplete plan");
    }
}

/// Identical inputs give bit-identical plans and episode traces.
#[test]
fn planning_and_episodes_are_deterministic() {
    let config = HarnessConfig::default();
    for seed in [3u64, 77, 4242] {
        let scene = generate_scene(&config.generator, seed);
        let targets = seeded_targets(&scene.graph, seed, 2);
        let params = RewardParams::default();
        let models = Models {
            noise: &config.noise,
            reward: &params,
        };
        let belief = BeliefState::certain(&scene.graph);
        let a = plan_lookahead(&belief, &targets, &models, 20).unwrap();
        let b = plan_lookahead(&belief, &targets, &models, 20).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(
            serde_json::to_string(&a.1).unwrap(),
            serde_json::to_string(&b.1).unwrap()
        );

        let run = |s| {
            let mut env = SimEnv::new(scene.graph.clone(), config.noise.clone(), s);
            let (chain, _) =
                replan_loop(&mut env, &targets, &models, None, config.retry_cap).unwrap();
            chain
        };
        assert_eq!(run(seed), run(seed));
    }
}

/// Full-pipeline determinism: one seed, byte-identical reports.
#[test]
fn evaluation_reports_are_byte_identical() {
    let config = HarnessConfig::default();
    let scenes = generate_scenes(&config, 10, 5);
    let options = EvaluateOptions {
        planners: vec![PlannerId::Pomdp, PlannerId::OneByOne],
        tasks: vec![TaskKind::SingleTarget, TaskKind::TableClear],
        master_seed: 33,
    };
    let (reports_a, agg_a) = evaluate(&scenes, &config, &options).unwrap();
    let (reports_b, agg_b) = evaluate(&scenes, &config, &options).unwrap();
    assert_eq!(
        serde_json::to_string(&reports_a).unwrap(),
        serde_json::to_string(&reports_b).unwrap()
    );
    assert_eq!(agg_a.render_table(), agg_b.render_table());
}

/// Aggregates are exact means of the per-episode records.
#[test]
fn aggregates_match_naive_recomputation() {
    let config = HarnessConfig::default();
    let scenes = generate_scenes(&config, 15, 8);
    let options = EvaluateOptions::default();
    let (reports, agg) = evaluate(&scenes, &config, &options).unwrap();
    let recomputed = aggregate(&reports);
    assert_eq!(agg, recomputed);
    for row in &agg.rows {
        let group: Vec<_> = reports
            .iter()
            .filter(|r| r.planner == row.planner && r.task == row.task)
            .collect();
        assert_eq!(group.len(), row.episodes);
        let ar_w = group.iter().filter(|r| r.chain_rational).count() as f64 / group.len() as f64;
        assert!((row.ar_w.mean - ar_w).abs() < 1e-12);
        let grasps = group.iter().map(|r| r.grasp_count as f64).sum::<f64>() / group.len() as f64;
        assert!((row.mean_grasps.mean - grasps).abs() < 1e-12);
        assert!(row.ar_f.mean >= 0.0 && row.ar_f.mean <= 1.0);
    }
}

/// Every reward over randomly generated graphs is strictly negative
/// and within the analytic bound.
#[test]
fn rewards_are_strictly_negative_and_bounded() {
    let config = GeneratorConfig::default();
    let params = RewardParams::default();
    for seed in 10_000..20_000 {
        let scene = generate_scene(&config, seed);
        let state = JointState::from_scene(&scene.graph);
        let n = scene.graph.object_count() as f64;
        let upper = -10.0 + 5.0 * n.tanh();
        for o in scene.graph.ids() {
            let r = reward(&state, Action::GraspToTarget(o), &params).unwrap();
            assert!(r < 0.0, "seed {seed}: reward {r} not negative");
            assert!(r > -20.0 && r <= upper + 1e-12, "seed {seed}: {r} out of bounds");
        }
    }
}

/// Hostile configurations must degrade gracefully: caps trip and
/// chains go irrational, but nothing panics or faults.
#[test]
fn harsh_configs_never_fault() {
    let corners = [
        (1usize, 2usize, 0.3f64, 0.3f64),
        (1, 1, 0.05, 0.9),
        (12, 12, 0.5, 0.4),
        (8, 12, 0.99, 0.99),
    ];
    for (min_objects, max_objects, recall, grasp) in corners {
        let mut config = HarnessConfig::default();
        config.generator = GeneratorConfig {
            min_objects,
            max_objects,
            p_container_stack: 0.6,
            ..GeneratorConfig::default()
        };
        config.noise = NoiseProfile::uniform(
            config.generator.categories.iter().map(|c| &c.name),
            recall,
            grasp,
        );
        let scenes = generate_scenes(&config, 25, 31 + min_objects as u64);
        let options = EvaluateOptions::default();
        let (reports, _) = evaluate(&scenes, &config, &options).unwrap();
        assert!(!reports.is_empty());
        for r in &reports {
            let bound = 2 * 64 * config.retry_cap as usize;
            assert!(r.grasp_count <= bound);
        }
    }
}

/// A noiseless episode reproduces the annotated reference chain for
/// every planner-visible designation (planner self-consistency).
#[test]
fn noiseless_episodes_match_reference_chains() {
    let mut config = HarnessConfig::default();
    config.noise = NoiseProfile::uniform(
        config.generator.categories.iter().map(|c| &c.name),
        1.0,
        1.0,
    );
    for seed in 0..60 {
        let scene = generate_scene(&config.generator, seed);
        let cases = designations_for_scene(&scene.graph, scene.seed, 1234, &TaskKind::ALL, &config)
            .unwrap();
        for case in &cases {
            let report = run_episode(&scene.graph, scene.seed, case, PlannerId::Pomdp, &config)
                .unwrap();
            assert!(report.chain_rational, "seed {seed} task {}", case.task);
            assert!(report.first_step_rational);
            assert!(report.success);
        }
    }
}
