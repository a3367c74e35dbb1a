//! Topological scene synthesis.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scene::{ObjectId, SceneGraph, SupportEdge, SupportKind};

use super::{CategorySpec, GeneratorConfig, GroundTruthScene};

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    for (k, &w) in weights.iter().enumerate() {
        if pick < w {
            return k;
        }
        pick -= w;
    }
    weights.len() - 1
}

/// Generates one valid scene: object count within the configured
/// bounds, containers placed first, every other object stacked stably
/// into a container with `p_stable`, leaned weakly on one or two
/// larger objects with `p_weak`, and set on the table otherwise.
/// Identical seeds yield identical scenes.
pub fn generate_scene(config: &GeneratorConfig, seed: u64) -> GroundTruthScene {
    assert!(
        config.min_objects >= 1 && config.min_objects <= config.max_objects,
        "object count bounds must satisfy 1 <= min <= max"
    );
    assert!(!config.categories.is_empty(), "no categories configured");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(config.min_objects..=config.max_objects);

    let weights: Vec<f64> = config.categories.iter().map(|c| c.weight).collect();
    let mut drawn: Vec<&CategorySpec> = (0..n)
        .map(|_| &config.categories[weighted_index(&mut rng, &weights)])
        .collect();

    let container_specs: Vec<&CategorySpec> =
        config.categories.iter().filter(|c| c.container).collect();
    if config.ensure_container
        && !container_specs.is_empty()
        && !drawn.iter().any(|c| c.container)
    {
        let cw: Vec<f64> = container_specs.iter().map(|c| c.weight).collect();
        drawn[0] = container_specs[weighted_index(&mut rng, &cw)];
    }

    // Containers first, keeping draw order within each class.
    let mut placed: Vec<&CategorySpec> = Vec::with_capacity(n);
    placed.extend(drawn.iter().filter(|c| c.container));
    placed.extend(drawn.iter().filter(|c| !c.container));
    let container_count = placed.iter().filter(|c| c.container).count();

    let mut edges: Vec<SupportEdge> = Vec::new();
    // Containers go down first; later ones may pile stably onto an
    // earlier container of at least their size.
    for idx in 1..container_count {
        let spec = placed[idx];
        if !rng.random_bool(config.p_container_stack) {
            continue;
        }
        let candidates: Vec<ObjectId> = (0..idx)
            .filter(|&k| placed[k].size >= spec.size)
            .map(|k| ObjectId(k as u32))
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let parent = candidates[rng.random_range(0..candidates.len())];
        edges.push(SupportEdge {
            parent,
            child: ObjectId(idx as u32),
            kind: SupportKind::Stable,
        });
    }
    for (idx, spec) in placed.iter().enumerate().skip(container_count) {
        let child = ObjectId(idx as u32);
        let roll: f64 = rng.random();
        if roll < config.p_stable && container_count > 0 {
            let parent = ObjectId(rng.random_range(0..container_count) as u32);
            edges.push(SupportEdge {
                parent,
                child,
                kind: SupportKind::Stable,
            });
            continue;
        }
        if roll < config.p_stable + config.p_weak {
            let candidates: Vec<ObjectId> = (0..idx)
                .filter(|&k| placed[k].size > spec.size)
                .map(|k| ObjectId(k as u32))
                .collect();
            if !candidates.is_empty() {
                let first = candidates[rng.random_range(0..candidates.len())];
                edges.push(SupportEdge {
                    parent: first,
                    child,
                    kind: SupportKind::Weak,
                });
                if candidates.len() > 1 && rng.random_bool(config.extra_weak_parent_prob) {
                    let rest: Vec<ObjectId> =
                        candidates.into_iter().filter(|&c| c != first).collect();
                    let second = rest[rng.random_range(0..rest.len())];
                    edges.push(SupportEdge {
                        parent: second,
                        child,
                        kind: SupportKind::Weak,
                    });
                }
                continue;
            }
        }
        // Table placement: no edge.
    }

    let categories = placed.iter().map(|c| c.name.clone()).collect();
    let graph = SceneGraph::new(categories, edges).expect("generated ids are dense");
    debug_assert!(graph.validate().is_ok(), "generator must emit valid scenes");
    GroundTruthScene { graph, seed }
}
