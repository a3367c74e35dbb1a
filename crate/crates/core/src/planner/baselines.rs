//! Comparison planners.
//!
//! `one_by_one` ignores the stable/weak distinction entirely: every
//! descendant of every target is removed individually, leaf first,
//! then the targets themselves, one object per grasp.
//!
//! `rule_only` applies just the stable-support rule: for each pending
//! target, grasp the root of its stable pile straight to the target
//! area. It never removes weak children first and happily carries
//! non-targets along, which is exactly the failure mode the value
//! search exists to avoid.

use std::collections::{BTreeMap, BTreeSet};

use crate::pomdp::{Action, BeliefState, Destination, PairState};
use crate::scene::{ObjectId, RelationClass, SceneGraph};

use super::{Plan, PlanStep, PlannerError, TargetDesignation};

/// Raw most-likely scene estimate: presence plus support adjacency,
/// with no downgrade applied. Baselines consume this view.
pub(crate) struct SceneEstimate {
    pub present: BTreeSet<ObjectId>,
    /// Objects the detector has categorised; only these are graspable,
    /// since an uncategorised object has no grasp model yet.
    categorized: BTreeSet<ObjectId>,
    stable_children: BTreeMap<ObjectId, Vec<ObjectId>>,
    weak_children: BTreeMap<ObjectId, Vec<ObjectId>>,
    stable_parents: BTreeMap<ObjectId, Vec<ObjectId>>,
    any_parents: BTreeMap<ObjectId, Vec<ObjectId>>,
}

impl SceneEstimate {
    pub fn from_scene(graph: &SceneGraph) -> Self {
        let mut est = SceneEstimate::empty();
        est.present = graph.ids().collect();
        est.categorized = graph.ids().collect();
        for e in graph.edges() {
            if e.parent == e.child {
                continue;
            }
            est.add_edge(e.parent, e.child, e.kind == crate::scene::SupportKind::Stable);
        }
        est
    }

    pub fn from_belief(belief: &BeliefState) -> Self {
        let mut est = SceneEstimate::empty();
        est.present = belief.believed_present();
        est.categorized = est
            .present
            .iter()
            .copied()
            .filter(|&id| belief.category(id).is_some())
            .collect();
        let ids: Vec<ObjectId> = est.present.iter().copied().collect();
        for &i in &ids {
            for &j in &ids {
                if i == j {
                    continue;
                }
                match belief.map_relation(i, j) {
                    PairState::Relation(RelationClass::NaturalParent) => {
                        est.add_edge(i, j, true);
                    }
                    PairState::Relation(RelationClass::OrdinaryParent) => {
                        est.add_edge(i, j, false);
                    }
                    _ => {}
                }
            }
        }
        est
    }

    fn empty() -> Self {
        SceneEstimate {
            present: BTreeSet::new(),
            categorized: BTreeSet::new(),
            stable_children: BTreeMap::new(),
            weak_children: BTreeMap::new(),
            stable_parents: BTreeMap::new(),
            any_parents: BTreeMap::new(),
        }
    }

    fn add_edge(&mut self, parent: ObjectId, child: ObjectId, stable: bool) {
        if stable {
            self.stable_children.entry(parent).or_default().push(child);
            self.stable_parents.entry(child).or_default().push(parent);
        } else {
            self.weak_children.entry(parent).or_default().push(child);
        }
        self.any_parents.entry(child).or_default().push(parent);
    }

    fn children_of(&self, id: ObjectId) -> impl Iterator<Item = ObjectId> + '_ {
        self.stable_children
            .get(&id)
            .into_iter()
            .flatten()
            .chain(self.weak_children.get(&id).into_iter().flatten())
            .copied()
    }

    /// All present descendants of `id` over any edge kind; cycle-safe.
    fn descendants(&self, id: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::new();
        let mut queue = vec![id];
        let mut seen = BTreeSet::from([id]);
        while let Some(x) = queue.pop() {
            for c in self.children_of(x) {
                if self.present.contains(&c) && seen.insert(c) {
                    out.insert(c);
                    queue.push(c);
                }
            }
        }
        out
    }

    /// Stable pile containing `id`: connectivity over stable edges in
    /// both directions, restricted to present objects.
    fn stable_component(&self, id: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::from([id]);
        let mut queue = vec![id];
        while let Some(x) = queue.pop() {
            let up = self.stable_parents.get(&x).into_iter().flatten();
            let down = self.stable_children.get(&x).into_iter().flatten();
            for &n in up.chain(down) {
                if self.present.contains(&n) && out.insert(n) {
                    queue.push(n);
                }
            }
        }
        out
    }

    /// Root of a stable pile: the member without a stable parent in the
    /// pile; falls back to the minimal id on degenerate input.
    fn pile_root(&self, pile: &BTreeSet<ObjectId>) -> ObjectId {
        pile.iter()
            .copied()
            .find(|m| {
                !self
                    .stable_parents
                    .get(m)
                    .into_iter()
                    .flatten()
                    .any(|p| pile.contains(p))
            })
            .unwrap_or_else(|| *pile.iter().next().expect("pile is nonempty"))
    }

    /// Longest support path from the table down to `id`; cycle-safe.
    fn depth(&self, id: ObjectId) -> usize {
        fn go(
            est: &SceneEstimate,
            id: ObjectId,
            visiting: &mut BTreeSet<ObjectId>,
            memo: &mut BTreeMap<ObjectId, usize>,
        ) -> usize {
            if let Some(&d) = memo.get(&id) {
                return d;
            }
            if !visiting.insert(id) {
                return 0;
            }
            let d = est
                .any_parents
                .get(&id)
                .into_iter()
                .flatten()
                .filter(|p| est.present.contains(p))
                .map(|&p| 1 + go(est, p, visiting, memo))
                .max()
                .unwrap_or(0);
            visiting.remove(&id);
            memo.insert(id, d);
            d
        }
        go(self, id, &mut BTreeSet::new(), &mut BTreeMap::new())
    }
}

/// Leaf-to-root order over a set: repeatedly emit the smallest id whose
/// in-set children are all emitted.
fn leaf_to_root_order(est: &SceneEstimate, set: &BTreeSet<ObjectId>) -> Vec<ObjectId> {
    let mut emitted: BTreeSet<ObjectId> = BTreeSet::new();
    let mut order = Vec::with_capacity(set.len());
    while emitted.len() < set.len() {
        let next = set.iter().copied().find(|&o| {
            !emitted.contains(&o)
                && est
                    .children_of(o)
                    .all(|c| !set.contains(&c) || emitted.contains(&c))
        });
        match next {
            Some(o) => {
                emitted.insert(o);
                order.push(o);
            }
            None => break, // cyclic estimate; emit what we can
        }
    }
    order
}

/// Next grasp of the one-by-one traversal, or None when done.
pub(crate) fn one_by_one_step(
    est: &SceneEstimate,
    targets: &TargetDesignation,
) -> Option<(ObjectId, Destination)> {
    let mut pool: BTreeSet<ObjectId> = BTreeSet::new();
    for &t in targets.ids() {
        if est.present.contains(&t) {
            pool.insert(t);
            pool.extend(est.descendants(t));
        }
    }
    // Objects without a detected category cannot be grasped yet; they
    // carry no relations either, so dropping them keeps the order.
    pool.retain(|o| est.categorized.contains(o));
    if !pool.iter().any(|o| targets.contains(*o)) {
        return None;
    }
    leaf_to_root_order(est, &pool).first().map(|&o| {
        let dest = if targets.contains(o) {
            Destination::Target
        } else {
            Destination::NonTarget
        };
        (o, dest)
    })
}

/// Next grasp of the stable-rule traversal, or None when done: the root
/// of the deepest pending pile containing a target, straight to the
/// target area.
pub(crate) fn rule_only_step(
    est: &SceneEstimate,
    targets: &TargetDesignation,
) -> Option<(ObjectId, Destination)> {
    let mut pending: Vec<ObjectId> = Vec::new();
    let mut covered: BTreeSet<ObjectId> = BTreeSet::new();
    for &t in targets.ids() {
        if !est.present.contains(&t) || covered.contains(&t) {
            continue;
        }
        let pile = est.stable_component(t);
        covered.extend(pile.iter().copied());
        let root = est.pile_root(&pile);
        if est.categorized.contains(&root) {
            pending.push(root);
        }
    }
    pending.sort_by_key(|&root| (std::cmp::Reverse(est.depth(root)), root));
    pending.first().map(|&root| (root, Destination::Target))
}

fn chain_to_plan(
    graph: &SceneGraph,
    steps: Vec<(ObjectId, Destination, Vec<ObjectId>)>,
    params: &crate::pomdp::RewardParams,
) -> Result<Plan, PlannerError> {
    let steps: Vec<PlanStep> = steps
        .into_iter()
        .map(|(o, dest, moved)| PlanStep {
            action: match dest {
                Destination::Target => Action::GraspToTarget(o),
                Destination::NonTarget => Action::GraspToNonTarget(o),
            },
            moved,
            dest,
        })
        .collect();
    let mut plan = Plan { steps, value: 0.0 };
    plan.value = plan.evaluate_deterministic(graph, params)?;
    Ok(plan)
}

/// Full one-by-one chain on a concrete scene: every descendant of every
/// target removed individually bottom-up, then the targets.
pub fn baseline_one_by_one(
    graph: &SceneGraph,
    targets: &TargetDesignation,
) -> Result<Plan, PlannerError> {
    targets.validate_against(graph)?;
    let mut est = SceneEstimate::from_scene(graph);
    let mut steps = Vec::new();
    while let Some((o, dest)) = one_by_one_step(&est, targets) {
        steps.push((o, dest, vec![o]));
        est.present.remove(&o);
    }
    chain_to_plan(graph, steps, &crate::pomdp::RewardParams::default())
}

/// Full stable-rule chain on a concrete scene: one grasp per pending
/// target pile, deepest root first, always to the target area.
pub fn baseline_rule_only(
    graph: &SceneGraph,
    targets: &TargetDesignation,
) -> Result<Plan, PlannerError> {
    targets.validate_against(graph)?;
    let mut est = SceneEstimate::from_scene(graph);
    let mut steps = Vec::new();
    while let Some((root, dest)) = rule_only_step(&est, targets) {
        let moved: Vec<ObjectId> = graph
            .stable_closure(root)
            .into_iter()
            .filter(|o| est.present.contains(o))
            .collect();
        for &o in &moved {
            est.present.remove(&o);
        }
        steps.push((root, dest, moved));
    }
    chain_to_plan(graph, steps, &crate::pomdp::RewardParams::default())
}
