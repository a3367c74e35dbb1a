//! Transition and observation models.
//!
//! A grasp of a present object succeeds with the grasped category's
//! success probability, removing the object's whole stable closure;
//! on failure the state is unchanged. Report is the identity.
//!
//! `observation_probability` scores a full observation against a
//! successor state: detection of a present object flips with the
//! per-category recall, an absent object is reported absent with the
//! same recall (so verifying a grasped closure contributes the product
//! of its members' recalls), and a relation report among a detected
//! pair is correct with the product of the endpoints' recalls, the
//! residual mass spread uniformly over the wrong classes.

use crate::scene::RelationClass;

use super::{Action, JointState, NoiseProfile, Observation, PairState, PomdpError};

/// Distribution over successor states for one action. Zero-probability
/// branches are dropped, so deterministic grasps yield one outcome.
pub fn transition_outcomes(
    state: &JointState,
    action: Action,
    noise: &NoiseProfile,
) -> Result<Vec<(JointState, f64)>, PomdpError> {
    let Some(o) = action.grasped() else {
        return Ok(vec![(state.clone(), 1.0)]);
    };
    if o.index() >= state.object_count() {
        return Err(PomdpError::UnknownObject(o));
    }
    if !state.is_present(o) {
        return Err(PomdpError::GraspAbsentObject(o));
    }
    let p = noise.grasp_success_of(state.category(o))?;
    let mut success = state.clone();
    success.remove_all(&state.stable_closure(o));

    let mut outcomes = Vec::with_capacity(2);
    if p > 0.0 {
        outcomes.push((success, p));
    }
    let fail = 1.0 - p;
    if fail > 0.0 {
        outcomes.push((state.clone(), fail));
    }
    Ok(outcomes)
}

/// Likelihood `p(z | s', a)` of a full observation given the successor
/// state, factored per object and per detected unordered pair.
pub fn observation_probability(
    next_state: &JointState,
    _action: Action,
    obs: &Observation,
    noise: &NoiseProfile,
) -> Result<f64, PomdpError> {
    for &id in &obs.detected {
        if id.index() >= next_state.object_count() {
            return Err(PomdpError::UnknownObject(id));
        }
    }

    let mut prob = 1.0;
    for id in next_state.ids() {
        let rc = noise.recall_of(next_state.category(id))?;
        let detected = obs.is_detected(id);
        // Recall is the chance the object's true presence state is
        // reported correctly, for present and removed objects alike.
        let factor = if next_state.is_present(id) == detected {
            rc
        } else {
            1.0 - rc
        };
        prob *= factor;
    }

    for (i, j, reported) in obs.relations() {
        if i >= j {
            continue; // score each unordered pair once
        }
        let rc = noise.recall_of(next_state.category(i))?
            * noise.recall_of(next_state.category(j))?;
        let factor = match next_state.pair(i, j) {
            PairState::Relation(actual) if actual == reported => rc,
            PairState::Relation(_) => (1.0 - rc) / (RelationClass::ALL.len() as f64 - 1.0),
            // A report about an object that is actually gone carries no
            // relation information; any class is equally likely.
            PairState::Absent => 1.0 / RelationClass::ALL.len() as f64,
        };
        prob *= factor;
    }
    Ok(prob)
}
