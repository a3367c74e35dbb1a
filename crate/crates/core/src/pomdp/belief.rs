//! Factored belief state and its Bayes update.
//!
//! The joint belief is maintained as independent per-object presence
//! probabilities and per-unordered-pair relation distributions (the
//! ordered mirror entry is derived, so symmetry holds structurally).
//! After every action the filter predicts through the grasp transition
//! marginals and corrects against the executed observation.
//!
//! The correction conditions on the executor's actual detection
//! process: a detection is conclusive evidence of presence (removed
//! objects are never reported), while a missed detection is weak
//! evidence weighted by the category recall. This keeps the posterior
//! presence probabilities calibrated against simulated episodes.
//! Objects enter the belief when first designated or detected; a
//! designated object is trusted to exist.

use std::collections::{BTreeMap, BTreeSet};

use crate::scene::{Category, ObjectId, RelationClass, SceneGraph};

use super::{Action, NoiseProfile, Observation, PairState, PomdpError};

/// Presence probability at or above which an object is treated as
/// present when extracting a concrete scene estimate.
pub const PRESENCE_THRESHOLD: f64 = 0.5;

const REL_CLASSES: usize = 5;

/// Prior mass a fresh pair puts on having no relation. Stacked scenes
/// are sparse (most pairs are unrelated), so a single noisy relation
/// report cannot invent an edge, while consistent reports across scans
/// quickly dominate the prior.
const NO_RELATION_PRIOR: f64 = 0.9;

/// Belief about one object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBelief {
    /// Probability that the object is still in the scene.
    pub presence: f64,
    /// Detector-reported category; unknown until first detected.
    pub category: Option<Category>,
}

/// Categorical distribution over the six pair states.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBelief {
    probs: [f64; PairState::COUNT],
}

impl PairBelief {
    fn point(state: PairState) -> Self {
        let mut probs = [0.0; PairState::COUNT];
        probs[state.index()] = 1.0;
        PairBelief { probs }
    }

    /// Sparsity prior over the five relation classes, weighted by the
    /// chance both endpoints still exist; the rest of the mass is
    /// absent.
    fn fresh(p_both_present: f64) -> Self {
        let edge_class = p_both_present * (1.0 - NO_RELATION_PRIOR) / (REL_CLASSES as f64 - 1.0);
        let mut probs = [edge_class; PairState::COUNT];
        probs[PairState::Relation(RelationClass::NoRelation).index()] =
            p_both_present * NO_RELATION_PRIOR;
        probs[PairState::Absent.index()] = 1.0 - p_both_present;
        PairBelief { probs }
    }

    pub fn prob(&self, state: PairState) -> f64 {
        self.probs[state.index()]
    }

    pub fn sum(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Most likely pair state; ties prefer no-relation, then absence,
    /// then the class order, so a flat prior never invents an edge.
    pub fn map(&self) -> PairState {
        let scan = [
            PairState::Relation(RelationClass::NoRelation),
            PairState::Absent,
            PairState::Relation(RelationClass::OrdinaryParent),
            PairState::Relation(RelationClass::OrdinaryChild),
            PairState::Relation(RelationClass::NaturalParent),
            PairState::Relation(RelationClass::NaturalChild),
        ];
        let mut best = scan[0];
        for &s in &scan[1..] {
            if self.prob(s) > self.prob(best) {
                best = s;
            }
        }
        best
    }

    /// Class distribution conditioned on the pair existing (absence
    /// mass removed). Falls back to a no-relation point mass when the
    /// pair is almost surely gone.
    pub fn classes_given_present(&self) -> [f64; REL_CLASSES] {
        let mut out = [0.0; REL_CLASSES];
        let live: f64 = 1.0 - self.prob(PairState::Absent);
        if live <= 1e-12 {
            out[PairState::Relation(RelationClass::NoRelation).index()] = 1.0;
            return out;
        }
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.probs[k] / live;
        }
        out
    }

    fn inverse(&self) -> Self {
        let mut probs = [0.0; PairState::COUNT];
        for state in PairState::ALL {
            probs[state.inverse().index()] = self.prob(state);
        }
        PairBelief { probs }
    }

    /// Mixes absence in: with probability `p_remove` the pair is gone.
    fn predict_removal(&mut self, p_remove: f64) {
        for p in &mut self.probs {
            *p *= 1.0 - p_remove;
        }
        self.probs[PairState::Absent.index()] += p_remove;
    }

    fn correct(&mut self, likelihood: &[f64; PairState::COUNT]) -> Result<(), PomdpError> {
        let mut total = 0.0;
        for (p, &l) in self.probs.iter_mut().zip(likelihood) {
            *p *= l;
            total += *p;
        }
        if total <= 0.0 {
            return Err(PomdpError::MalformedObservation(
                "relation report has zero evidence probability".into(),
            ));
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(())
    }
}

/// Factored belief over every object seen or designated so far.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    objects: BTreeMap<ObjectId, ObjectBelief>,
    /// Keyed by `(i, j)` with `i < j`; the mirrored entry is derived.
    pairs: BTreeMap<(ObjectId, ObjectId), PairBelief>,
}

impl BeliefState {
    /// Point-mass belief matching a known scene exactly.
    pub fn certain(graph: &SceneGraph) -> Self {
        let matrix = graph.relation_matrix();
        let mut objects = BTreeMap::new();
        let mut pairs = BTreeMap::new();
        for i in graph.ids() {
            objects.insert(
                i,
                ObjectBelief {
                    presence: 1.0,
                    category: Some(graph.category(i).clone()),
                },
            );
            for j in graph.ids() {
                if i < j {
                    let class = matrix.get(i, j).expect("off-diagonal");
                    pairs.insert((i, j), PairBelief::point(PairState::Relation(class)));
                }
            }
        }
        BeliefState { objects, pairs }
    }

    /// Belief at episode start: designated targets are trusted to
    /// exist, and the first scan is folded in as evidence.
    pub fn initial(
        targets: &BTreeSet<ObjectId>,
        first_scan: &Observation,
        noise: &NoiseProfile,
    ) -> Result<Self, PomdpError> {
        let mut belief = BeliefState {
            objects: BTreeMap::new(),
            pairs: BTreeMap::new(),
        };
        for &t in targets {
            belief.track(t, None);
        }
        belief.correct(first_scan, noise)?;
        Ok(belief)
    }

    pub fn tracks(&self, id: ObjectId) -> bool {
        self.objects.contains_key(&id)
    }

    pub fn tracked_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.objects.keys().copied()
    }

    pub fn presence(&self, id: ObjectId) -> f64 {
        self.objects.get(&id).map_or(0.0, |o| o.presence)
    }

    pub fn category(&self, id: ObjectId) -> Option<&Category> {
        self.objects.get(&id).and_then(|o| o.category.as_ref())
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectBelief> {
        self.objects.get(&id)
    }

    /// Pair distribution for the ordered pair `(i, j)`. The diagonal
    /// and untracked pairs are a point mass on absence.
    pub fn pair(&self, i: ObjectId, j: ObjectId) -> PairBelief {
        if i == j {
            return PairBelief::point(PairState::Absent);
        }
        let (key, flip) = if i < j { ((i, j), false) } else { ((j, i), true) };
        match self.pairs.get(&key) {
            Some(p) if flip => p.inverse(),
            Some(p) => p.clone(),
            None => PairBelief::point(PairState::Absent),
        }
    }

    pub fn map_relation(&self, i: ObjectId, j: ObjectId) -> PairState {
        self.pair(i, j).map()
    }

    /// Objects currently believed present.
    pub fn believed_present(&self) -> BTreeSet<ObjectId> {
        self.objects
            .iter()
            .filter(|(_, o)| o.presence >= PRESENCE_THRESHOLD)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Stable closure of `o` in the most-likely relation graph,
    /// restricted to objects believed present.
    pub fn map_stable_closure(&self, o: ObjectId) -> BTreeSet<ObjectId> {
        let present = self.believed_present();
        let mut out = BTreeSet::from([o]);
        let mut queue = vec![o];
        while let Some(x) = queue.pop() {
            for &j in &present {
                if !out.contains(&j)
                    && self.map_relation(x, j)
                        == PairState::Relation(RelationClass::NaturalParent)
                {
                    out.insert(j);
                    queue.push(j);
                }
            }
        }
        out
    }

    /// Bayes update after executing `action` and observing `obs`.
    pub fn update(
        &self,
        action: Action,
        obs: &Observation,
        noise: &NoiseProfile,
    ) -> Result<BeliefState, PomdpError> {
        let mut next = self.clone();
        next.predict(action, noise)?;
        next.correct(obs, noise)?;
        Ok(next)
    }

    /// Verifies the belief invariants within `tol`; returns the first
    /// violation as a message.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        for (&id, o) in &self.objects {
            if !(-tol..=1.0 + tol).contains(&o.presence) {
                return Err(format!("presence of {id} out of range: {}", o.presence));
            }
        }
        for (&(i, j), p) in &self.pairs {
            let sum = p.sum();
            if (sum - 1.0).abs() > tol {
                return Err(format!("pair ({i}, {j}) sums to {sum}"));
            }
            if p.probs.iter().any(|&x| x < -tol) {
                return Err(format!("pair ({i}, {j}) has negative mass"));
            }
        }
        Ok(())
    }

    fn track(&mut self, id: ObjectId, category: Option<Category>) {
        if self.objects.contains_key(&id) {
            return;
        }
        let existing: Vec<(ObjectId, f64)> = self
            .objects
            .iter()
            .map(|(&other, o)| (other, o.presence))
            .collect();
        self.objects.insert(
            id,
            ObjectBelief {
                presence: 1.0,
                category,
            },
        );
        for (other, other_presence) in existing {
            let key = if id < other { (id, other) } else { (other, id) };
            self.pairs.insert(key, PairBelief::fresh(other_presence));
        }
    }

    fn predict(&mut self, action: Action, noise: &NoiseProfile) -> Result<(), PomdpError> {
        let Some(grasped) = action.grasped() else {
            return Ok(());
        };
        if !self.tracks(grasped) {
            return Err(PomdpError::UnknownObject(grasped));
        }
        let category = self
            .category(grasped)
            .cloned()
            .ok_or(PomdpError::UnknownObject(grasped))?;
        let p = noise.grasp_success_of(&category)?;
        let closure = self.map_stable_closure(grasped);
        for &o in &closure {
            if let Some(obj) = self.objects.get_mut(&o) {
                obj.presence *= 1.0 - p;
            }
        }
        for (&(i, j), pair) in self.pairs.iter_mut() {
            if closure.contains(&i) || closure.contains(&j) {
                pair.predict_removal(p);
            }
        }
        Ok(())
    }

    fn correct(&mut self, obs: &Observation, noise: &NoiseProfile) -> Result<(), PomdpError> {
        // New detections join the belief; detections of tracked objects
        // fill in categories the detector reports.
        for &id in &obs.detected {
            let category = obs.categories.get(&id).cloned();
            if let Some(o) = self.objects.get_mut(&id) {
                if o.category.is_none() {
                    o.category = category;
                }
            } else {
                self.track(id, category);
            }
        }

        // Presence: a detection is conclusive; a miss is weighed by the
        // category recall. Objects never yet categorised carry no
        // detection model, so a miss says nothing about them.
        for (&id, o) in self.objects.iter_mut() {
            if obs.is_detected(id) {
                if o.presence <= 0.0 {
                    return Err(PomdpError::ImpossibleObservation(id));
                }
                o.presence = 1.0;
            } else if let Some(cat) = &o.category {
                let rc = noise.recall_of(cat)?;
                let num = (1.0 - rc) * o.presence;
                let den = num + (1.0 - o.presence);
                if den <= 0.0 {
                    return Err(PomdpError::ImpossibleObservation(id));
                }
                o.presence = num / den;
            }
        }

        // Relations among detected pairs: the report is correct with
        // the product of the endpoint recalls, anything else lands
        // uniformly on the wrong classes. Both endpoints being detected
        // rules the absent state out.
        for (i, j, reported) in obs.relations() {
            if i >= j {
                continue;
            }
            let rc_i = match self.category(i) {
                Some(c) => noise.recall_of(c)?,
                None => continue,
            };
            let rc_j = match self.category(j) {
                Some(c) => noise.recall_of(c)?,
                None => continue,
            };
            let rc = rc_i * rc_j;
            let mut likelihood = [0.0; PairState::COUNT];
            for class in RelationClass::ALL {
                let state = PairState::Relation(class);
                likelihood[state.index()] = if class == reported {
                    rc
                } else {
                    (1.0 - rc) / (REL_CLASSES as f64 - 1.0)
                };
            }
            let pair = self
                .pairs
                .get_mut(&(i, j))
                .expect("both endpoints tracked");
            pair.correct(&likelihood)?;
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn set_pair_for_tests(
        &mut self,
        i: ObjectId,
        j: ObjectId,
        masses: &[(PairState, f64)],
    ) {
        let mut probs = [0.0; PairState::COUNT];
        for &(state, p) in masses {
            let state = if i < j { state } else { state.inverse() };
            probs[state.index()] = p;
        }
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.insert(key, PairBelief { probs });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SupportEdge, SupportKind};

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

    fn observation_of(ids: &[(u32, &str)], rels: &[(u32, u32, RelationClass)]) -> Observation {
        let detected = ids.iter().map(|&(i, _)| ObjectId(i)).collect();
        let categories = ids
            .iter()
            .map(|&(i, c)| (ObjectId(i), Category::new(c)))
            .collect();
        let relations = rels
            .iter()
            .map(|&(i, j, c)| ((ObjectId(i), ObjectId(j)), c))
            .collect();
        Observation::new(detected, categories, relations).unwrap()
    }

    #[test]
    fn point_mass_stays_point_mass_under_deterministic_models() {
        let graph = bowl_spoon();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 1.0);
        let belief = BeliefState::certain(&graph);
        // Successful joint grasp, then an exact observation of the
        // empty scene.
        let obs = observation_of(&[], &[]);
        let next = belief
            .update(Action::GraspToTarget(ObjectId(0)), &obs, &noise)
            .unwrap();
        assert_eq!(next.presence(ObjectId(0)), 0.0);
        assert_eq!(next.presence(ObjectId(1)), 0.0);
        assert_eq!(next.map_relation(ObjectId(0), ObjectId(1)), PairState::Absent);
        next.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn detection_is_conclusive_evidence_of_presence() {
        // Uncertain presence, no grasp, detected with rc 0.9: the
        // posterior is 1 because removed objects are never reported.
        let graph = SceneGraph::new(vec![Category::new("bowl")], vec![]).unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.9);
        let mut belief = BeliefState::certain(&graph);
        belief.objects.get_mut(&ObjectId(0)).unwrap().presence = 0.5;
        let obs = observation_of(&[(0, "bowl")], &[]);
        let next = belief.update(Action::Report, &obs, &noise).unwrap();
        assert_eq!(next.presence(ObjectId(0)), 1.0);
    }

    #[test]
    fn failed_grasp_seen_as_still_present_restores_certainty() {
        // Grasp with success 0.9 from certain presence; the object is
        // then observed still there with rc 1: only the unchanged
        // branch explains it.
        let graph = SceneGraph::new(vec![Category::new("bowl")], vec![]).unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 0.9);
        let belief = BeliefState::certain(&graph);
        let obs = observation_of(&[(0, "bowl")], &[]);
        let next = belief
            .update(Action::GraspToTarget(ObjectId(0)), &obs, &noise)
            .unwrap();
        assert_eq!(next.presence(ObjectId(0)), 1.0);
    }

    #[test]
    fn miss_after_grasp_weighs_recall_against_success() {
        let graph = SceneGraph::new(vec![Category::new("bowl")], vec![]).unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.8);
        let belief = BeliefState::certain(&graph);
        let obs = observation_of(&[], &[]);
        let next = belief
            .update(Action::GraspToTarget(ObjectId(0)), &obs, &noise)
            .unwrap();
        // present mass 0.2 * miss 0.1 vs absent mass 0.8 * 1
        let expect = 0.02 / (0.02 + 0.8);
        assert!((next.presence(ObjectId(0)) - expect).abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_faults() {
        let graph = SceneGraph::new(vec![Category::new("apple")], vec![]).unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 1.0);
        let belief = BeliefState::certain(&graph);
        // Deterministic grasp removes the apple; seeing it afterwards
        // has evidence probability zero.
        let obs = observation_of(&[(0, "apple")], &[]);
        let err = belief.update(Action::GraspToTarget(ObjectId(0)), &obs, &noise);
        assert!(matches!(err, Err(PomdpError::ImpossibleObservation(_))));
    }

    #[test]
    fn relation_evidence_accumulates_towards_truth() {
        let graph = bowl_spoon();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.9);
        let targets = BTreeSet::from([ObjectId(0)]);
        let obs = observation_of(
            &[(0, "bowl"), (1, "spoon")],
            &[(0, 1, RelationClass::NaturalParent)],
        );
        let mut belief = BeliefState::initial(&targets, &obs, &noise).unwrap();
        for _ in 0..3 {
            belief = belief.update(Action::Report, &obs, &noise).unwrap();
        }
        assert_eq!(
            belief.map_relation(ObjectId(0), ObjectId(1)),
            PairState::Relation(RelationClass::NaturalParent)
        );
        assert_eq!(
            belief.map_relation(ObjectId(1), ObjectId(0)),
            PairState::Relation(RelationClass::NaturalChild)
        );
        belief.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn designated_but_unseen_target_is_tracked_as_present() {
        let graph = bowl_spoon();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.9);
        let targets = BTreeSet::from([ObjectId(1)]);
        let obs = observation_of(&[(0, "bowl")], &[]);
        let belief = BeliefState::initial(&targets, &obs, &noise).unwrap();
        assert_eq!(belief.presence(ObjectId(1)), 1.0);
        assert!(belief.category(ObjectId(1)).is_none());
        // Revealed later: category fills in.
        let obs2 = observation_of(&[(0, "bowl"), (1, "spoon")], &[]);
        let belief = belief.update(Action::Report, &obs2, &noise).unwrap();
        assert_eq!(belief.category(ObjectId(1)), Some(&Category::new("spoon")));
    }

    #[test]
    fn fresh_pair_prior_maps_to_no_relation() {
        let graph = SceneGraph::new(
            vec![Category::new("bowl"), Category::new("mug")],
            vec![],
        )
        .unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.9);
        let targets = BTreeSet::from([ObjectId(0), ObjectId(1)]);
        let obs = observation_of(&[], &[]);
        let belief = BeliefState::initial(&targets, &obs, &noise).unwrap();
        assert_eq!(
            belief.map_relation(ObjectId(0), ObjectId(1)),
            PairState::Relation(RelationClass::NoRelation)
        );
        // The diagonal is a fixed point mass on absence.
        assert_eq!(belief.pair(ObjectId(0), ObjectId(0)).prob(PairState::Absent), 1.0);
        belief.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn one_noisy_report_cannot_invent_an_edge() {
        // A single weak-support report on a fresh pair loses to the
        // sparsity prior; a second consistent report wins.
        let graph = SceneGraph::new(
            vec![Category::new("bowl"), Category::new("mug")],
            vec![],
        )
        .unwrap();
        let noise = NoiseProfile::uniform(graph.categories().iter(), 0.9, 0.9);
        let targets = BTreeSet::from([ObjectId(0), ObjectId(1)]);
        let obs = observation_of(
            &[(0, "bowl"), (1, "mug")],
            &[(0, 1, RelationClass::OrdinaryParent)],
        );
        let belief = BeliefState::initial(&targets, &obs, &noise).unwrap();
        assert_eq!(
            belief.map_relation(ObjectId(0), ObjectId(1)),
            PairState::Relation(RelationClass::NoRelation)
        );
        let belief = belief.update(Action::Report, &obs, &noise).unwrap();
        assert_eq!(
            belief.map_relation(ObjectId(0), ObjectId(1)),
            PairState::Relation(RelationClass::OrdinaryParent)
        );
    }
}
