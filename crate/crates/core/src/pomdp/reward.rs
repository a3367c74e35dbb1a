//! Relation-based grasping reward.
//!
//! Each grasp costs a base penalty, adjusted by the first matching
//! branch of an ordered case list over the grasped object's relations:
//! natural children earn a bonus (they ride along), ordinary children a
//! steep penalty (they would be disturbed), a natural parent a slight
//! penalty, and an isolated object nothing. Report costs nothing, and
//! every grasp reward is strictly negative.

use crate::scene::{ObjectId, RelationClass};

use super::{Action, BeliefState, JointState, PairState, PomdpError, RewardParams};

/// Relation counts of one object against the rest of the scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RelationCounts {
    pub natural_children: usize,
    pub ordinary_children: usize,
    pub natural_parents: usize,
}

impl RelationCounts {
    pub fn of(state: &JointState, o: ObjectId) -> Self {
        let mut counts = RelationCounts::default();
        for j in state.ids() {
            if j == o {
                continue;
            }
            match state.pair(o, j) {
                PairState::Relation(RelationClass::NaturalParent) => {
                    counts.natural_children += 1;
                }
                PairState::Relation(RelationClass::OrdinaryParent) => {
                    counts.ordinary_children += 1;
                }
                PairState::Relation(RelationClass::NaturalChild) => {
                    counts.natural_parents += 1;
                }
                _ => {}
            }
        }
        counts
    }
}

/// Case value on top of the base penalty, first match wins.
fn branch_value(counts: RelationCounts, params: &RewardParams) -> f64 {
    if counts.natural_children > 0 {
        params.nc_gain * (counts.natural_children as f64).tanh()
    } else if counts.ordinary_children > 0 {
        params.oc_gain * (counts.ordinary_children as f64).tanh()
    } else if counts.natural_parents > 0 {
        params.np_penalty
    } else {
        0.0
    }
}

/// Immediate reward of an action in a concrete (believed) scene state.
/// Grasping an absent object is a fault; Report is free.
pub fn reward(state: &JointState, action: Action, params: &RewardParams) -> Result<f64, PomdpError> {
    let Some(o) = action.grasped() else {
        return Ok(0.0);
    };
    if o.index() >= state.object_count() {
        return Err(PomdpError::UnknownObject(o));
    }
    if !state.is_present(o) {
        return Err(PomdpError::GraspAbsentObject(o));
    }
    Ok(params.base_penalty + branch_value(RelationCounts::of(state, o), params))
}

/// Per-pair contribution probabilities to the grasped object's counts.
#[derive(Debug, Clone, Copy)]
struct PairWeights {
    natural_child: f64,
    ordinary_child: f64,
    natural_parent: f64,
}

/// Exact expectation of the branch value over independent per-pair
/// distributions: a dynamic program over the joint distribution of
/// (natural-child count, ordinary-child count, any-natural-parent).
fn expected_branch_value(pairs: &[PairWeights], params: &RewardParams) -> f64 {
    let n = pairs.len();
    // dist[nc][oc] split by whether a natural parent has been seen.
    let mut with_np = vec![vec![0.0_f64; n + 1]; n + 1];
    let mut without_np = vec![vec![0.0_f64; n + 1]; n + 1];
    without_np[0][0] = 1.0;
    for (k, w) in pairs.iter().enumerate() {
        let other = 1.0 - w.natural_child - w.ordinary_child - w.natural_parent;
        let mut next_with = vec![vec![0.0_f64; n + 1]; n + 1];
        let mut next_without = vec![vec![0.0_f64; n + 1]; n + 1];
        for nc in 0..=k {
            for oc in 0..=(k - nc) {
                for (src, has_np) in [(&without_np, false), (&with_np, true)] {
                    let p = src[nc][oc];
                    if p == 0.0 {
                        continue;
                    }
                    let bump = |grid: &mut Vec<Vec<f64>>, a: usize, b: usize, q: f64| {
                        if q > 0.0 {
                            grid[a][b] += p * q;
                        }
                    };
                    let stay = if has_np {
                        &mut next_with
                    } else {
                        &mut next_without
                    };
                    bump(stay, nc + 1, oc, w.natural_child);
                    bump(stay, nc, oc + 1, w.ordinary_child);
                    bump(stay, nc, oc, other.max(0.0));
                    bump(&mut next_with, nc, oc, w.natural_parent);
                }
            }
        }
        with_np = next_with;
        without_np = next_without;
    }

    let mut value = 0.0;
    for nc in 0..=n {
        for oc in 0..=n {
            for (grid, has_np) in [(&without_np, false), (&with_np, true)] {
                let p = grid[nc][oc];
                if p == 0.0 {
                    continue;
                }
                let counts = RelationCounts {
                    natural_children: nc,
                    ordinary_children: oc,
                    natural_parents: usize::from(has_np),
                };
                value += p * branch_value(counts, params);
            }
        }
    }
    value
}

/// Expected immediate reward of an action under a factored belief: the
/// exact expectation of the branch value over the belief's per-pair
/// relation marginals. With a point-mass belief this equals [`reward`].
pub fn expected_reward(
    belief: &BeliefState,
    action: Action,
    params: &RewardParams,
) -> Result<f64, PomdpError> {
    let Some(o) = action.grasped() else {
        return Ok(0.0);
    };
    if !belief.tracks(o) {
        return Err(PomdpError::UnknownObject(o));
    }
    let pairs: Vec<PairWeights> = belief
        .tracked_ids()
        .filter(|&j| j != o)
        .map(|j| {
            let dist = belief.pair(o, j);
            PairWeights {
                natural_child: dist.prob(PairState::Relation(RelationClass::NaturalParent)),
                ordinary_child: dist.prob(PairState::Relation(RelationClass::OrdinaryParent)),
                natural_parent: dist.prob(PairState::Relation(RelationClass::NaturalChild)),
            }
        })
        .collect();
    Ok(params.base_penalty + expected_branch_value(&pairs, params))
}

/// Expected branch value from explicit per-pair weights; used by the
/// planner, which conditions the pair marginals on a hypothesised set
/// of present objects before calling in.
pub(crate) fn expected_reward_from_weights(
    weights: &[(f64, f64, f64)],
    params: &RewardParams,
) -> f64 {
    let pairs: Vec<PairWeights> = weights
        .iter()
        .map(|&(nc, oc, np)| PairWeights {
            natural_child: nc,
            ordinary_child: oc,
            natural_parent: np,
        })
        .collect();
    params.base_penalty + expected_branch_value(&pairs, params)
}
