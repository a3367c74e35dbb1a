//! The planner's working view of the believed scene: downgraded pair
//! marginals, the most-likely support graph, and ordered target groups.

use std::collections::{BTreeMap, BTreeSet};

use crate::pomdp::{BeliefState, NoiseProfile, PairState};
use crate::scene::{Category, ObjectId, RelationClass, SceneGraph, SupportEdge, SupportKind};

use super::{PlannerError, TargetDesignation, TargetGroup};

/// Conditional class weights of one ordered pair, after downgrading.
/// Index order follows [`PairState::index`] for the five classes.
pub(crate) type ClassWeights = [f64; 5];

/// Planner-internal snapshot of the believed scene after the working
/// downgrade. All relation mass between a target and a non-target that
/// sat on stable support is moved onto the corresponding weak class.
pub(crate) struct WorkingView {
    pub ids: Vec<ObjectId>,
    index: BTreeMap<ObjectId, usize>,
    pub targets: BTreeSet<ObjectId>,
    pub present: u64,
    categories: BTreeMap<ObjectId, Option<Category>>,
    grasp_success: BTreeMap<ObjectId, Option<f64>>,
    /// Downgraded class weights conditioned on the pair existing,
    /// keyed by ordered pair.
    class_weights: BTreeMap<(ObjectId, ObjectId), ClassWeights>,
    /// Most-likely support edges of the downgraded view.
    stable_children: BTreeMap<ObjectId, Vec<ObjectId>>,
    weak_children: BTreeMap<ObjectId, Vec<ObjectId>>,
    /// Ordered leaf-to-root; unprocessable groups contain members whose
    /// category (and thus grasp model) is still unknown.
    pub groups: Vec<TargetGroup>,
    processable: Vec<bool>,
}

impl WorkingView {
    pub fn from_belief(
        belief: &BeliefState,
        targets: &TargetDesignation,
        noise: &NoiseProfile,
    ) -> Result<Self, PlannerError> {
        let ids: Vec<ObjectId> = belief.tracked_ids().collect();
        if ids.len() > 64 {
            return Err(PlannerError::TooManyObjects);
        }
        let index: BTreeMap<ObjectId, usize> =
            ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let target_set: BTreeSet<ObjectId> = targets
            .ids()
            .iter()
            .copied()
            .filter(|t| belief.tracks(*t))
            .collect();

        let mut present = 0u64;
        let mut categories = BTreeMap::new();
        let mut grasp_success = BTreeMap::new();
        let believed = belief.believed_present();
        for &id in &ids {
            if believed.contains(&id) {
                present |= 1 << index[&id];
            }
            let category = belief.category(id).cloned();
            let p = match &category {
                Some(c) => Some(noise.grasp_success_of(c)?),
                None => None,
            };
            categories.insert(id, category);
            grasp_success.insert(id, p);
        }

        // Downgraded, existence-conditioned class weights per ordered pair.
        let mut class_weights = BTreeMap::new();
        for &i in &ids {
            for &j in &ids {
                if i == j {
                    continue;
                }
                let mut w = belief.pair(i, j).classes_given_present();
                let mixed = target_set.contains(&i) != target_set.contains(&j);
                if mixed {
                    let np = PairState::Relation(RelationClass::NaturalParent).index();
                    let nc = PairState::Relation(RelationClass::NaturalChild).index();
                    let op = PairState::Relation(RelationClass::OrdinaryParent).index();
                    let oc = PairState::Relation(RelationClass::OrdinaryChild).index();
                    w[op] += w[np];
                    w[oc] += w[nc];
                    w[np] = 0.0;
                    w[nc] = 0.0;
                }
                class_weights.insert((i, j), w);
            }
        }

        // Most-likely edges of the downgraded view, parent side only.
        let mut stable_children: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
        let mut weak_children: BTreeMap<ObjectId, Vec<ObjectId>> = BTreeMap::new();
        for &i in &ids {
            for &j in &ids {
                if i == j {
                    continue;
                }
                match map_class(&class_weights[&(i, j)]) {
                    RelationClass::NaturalParent => {
                        stable_children.entry(i).or_default().push(j);
                    }
                    RelationClass::OrdinaryParent => {
                        weak_children.entry(i).or_default().push(j);
                    }
                    _ => {}
                }
            }
        }

        let mut view = WorkingView {
            ids,
            index,
            targets: target_set,
            present,
            categories,
            grasp_success,
            class_weights,
            stable_children,
            weak_children,
            groups: Vec::new(),
            processable: Vec::new(),
        };
        let groups = view.compute_groups();
        view.processable = groups
            .iter()
            .map(|g| {
                g.members
                    .iter()
                    .all(|m| view.categories.get(m).is_some_and(Option::is_some))
            })
            .collect();
        view.groups = groups;
        Ok(view)
    }

    pub fn bit(&self, id: ObjectId) -> u64 {
        1 << self.index[&id]
    }

    pub fn contains(&self, mask: u64, id: ObjectId) -> bool {
        mask & self.bit(id) != 0
    }

    pub fn ids_in(&self, mask: u64) -> impl Iterator<Item = ObjectId> + '_ {
        self.ids.iter().copied().filter(move |&id| self.contains(mask, id))
    }

    pub fn grasp_success(&self, id: ObjectId) -> Option<f64> {
        self.grasp_success.get(&id).copied().flatten()
    }

    pub fn class_weights(&self, i: ObjectId, j: ObjectId) -> &ClassWeights {
        &self.class_weights[&(i, j)]
    }

    pub fn stable_children_of(&self, id: ObjectId) -> &[ObjectId] {
        self.stable_children.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn weak_children_of(&self, id: ObjectId) -> &[ObjectId] {
        self.weak_children.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Stable closure of `o` among the objects in `mask`.
    pub fn stable_closure(&self, o: ObjectId, mask: u64) -> u64 {
        let mut closure = self.bit(o);
        let mut queue = vec![o];
        while let Some(x) = queue.pop() {
            for &c in self.stable_children_of(x) {
                let b = self.bit(c);
                if mask & b != 0 && closure & b == 0 {
                    closure |= b;
                    queue.push(c);
                }
            }
        }
        closure
    }

    /// Subtree of `root` (any edge kind) among the objects in `mask`,
    /// including the root. Cycle-safe.
    pub fn subtree(&self, root: ObjectId, mask: u64) -> u64 {
        if !self.contains(mask, root) {
            return 0;
        }
        let mut seen = self.bit(root);
        let mut queue = vec![root];
        while let Some(x) = queue.pop() {
            for &c in self
                .stable_children_of(x)
                .iter()
                .chain(self.weak_children_of(x))
            {
                let b = self.bit(c);
                if mask & b != 0 && seen & b == 0 {
                    seen |= b;
                    queue.push(c);
                }
            }
        }
        seen
    }

    pub fn ordinary_child_count(&self, o: ObjectId, mask: u64) -> usize {
        self.weak_children_of(o)
            .iter()
            .filter(|&&c| self.contains(mask, c))
            .count()
    }

    pub fn targets_mask(&self) -> u64 {
        self.targets.iter().map(|&t| self.bit(t)).sum()
    }

    /// First unfinished processable group in leaf-to-root order.
    pub fn active_group(&self, mask: u64) -> Option<&TargetGroup> {
        self.groups
            .iter()
            .zip(&self.processable)
            .filter(|&(_, &ok)| ok)
            .map(|(g, _)| g)
            .find(|g| g.members.iter().any(|&m| self.contains(mask, m)))
    }

    /// Targets connected through stable support in the working view,
    /// sorted leaf to root: a group whose root lies inside another
    /// group's subtree is processed first, ties by ascending minimal
    /// member id.
    fn compute_groups(&self) -> Vec<TargetGroup> {
        // Union targets over stable edges whose both endpoints are targets.
        let targets: Vec<ObjectId> = self.targets.iter().copied().collect();
        let mut component: BTreeMap<ObjectId, usize> =
            targets.iter().enumerate().map(|(k, &t)| (t, k)).collect();
        loop {
            let mut changed = false;
            for &t in &targets {
                for &c in self.stable_children_of(t) {
                    if let (Some(&a), Some(&b)) = (component.get(&t), component.get(&c)) {
                        if a != b {
                            let lo = a.min(b);
                            for v in component.values_mut() {
                                if *v == a || *v == b {
                                    *v = lo;
                                }
                            }
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut by_component: BTreeMap<usize, BTreeSet<ObjectId>> = BTreeMap::new();
        for (&t, &c) in &component {
            by_component.entry(c).or_default().insert(t);
        }

        let groups: Vec<TargetGroup> = by_component
            .into_values()
            .map(|members| {
                // Root: the member without a stable parent inside the
                // group; falls back to the minimal id on noisy input.
                let root = members
                    .iter()
                    .copied()
                    .find(|&m| {
                        !members.iter().any(|&p| {
                            p != m && self.stable_children_of(p).contains(&m)
                        })
                    })
                    .unwrap_or_else(|| *members.iter().next().expect("nonempty"));
                TargetGroup { members, root }
            })
            .collect();

        // Leaf-to-root order by iterative selection: pick a group whose
        // subtree contains no other remaining group's root.
        let full = self.ids.iter().map(|&id| self.bit(id)).sum::<u64>();
        let subtrees: Vec<u64> = groups.iter().map(|g| self.subtree(g.root, full)).collect();
        let mut remaining: Vec<usize> = (0..groups.len()).collect();
        let mut order = Vec::with_capacity(groups.len());
        while !remaining.is_empty() {
            let pick = remaining
                .iter()
                .position(|&g| {
                    remaining
                        .iter()
                        .all(|&h| h == g || subtrees[g] & self.bit(groups[h].root) == 0)
                })
                .unwrap_or(0);
            order.push(remaining.remove(pick));
        }
        // `remaining` was built in ascending-min-member order already
        // (groups come from a BTreeMap keyed by min member).
        order.into_iter().map(|k| groups[k].clone()).collect()
    }

    /// Reconstructs the downgraded working graph as a concrete scene.
    /// Only meaningful for views built from point-mass beliefs.
    pub fn to_scene_graph(&self, original: &SceneGraph) -> SceneGraph {
        let mut edges = Vec::new();
        for &i in &self.ids {
            for &j in self.stable_children_of(i) {
                edges.push(SupportEdge {
                    parent: i,
                    child: j,
                    kind: SupportKind::Stable,
                });
            }
            for &j in self.weak_children_of(i) {
                edges.push(SupportEdge {
                    parent: i,
                    child: j,
                    kind: SupportKind::Weak,
                });
            }
        }
        SceneGraph::new(original.categories().to_vec(), edges)
            .expect("working edges reference known ids")
    }
}

/// Most likely class of a weight vector; ties prefer no-relation so a
/// flat distribution never invents an edge.
fn map_class(w: &ClassWeights) -> RelationClass {
    let scan = [
        RelationClass::NoRelation,
        RelationClass::OrdinaryParent,
        RelationClass::OrdinaryChild,
        RelationClass::NaturalParent,
        RelationClass::NaturalChild,
    ];
    let mut best = scan[0];
    for &c in &scan[1..] {
        if w[PairState::Relation(c).index()] > w[PairState::Relation(best).index()] {
            best = c;
        }
    }
    best
}

/// Groups the designated targets on a concrete scene: stable-connected
/// targets merge into one group, stable edges between targets and
/// non-targets are downgraded to weak in the returned working graph,
/// and groups come back sorted leaf to root.
pub fn group_targets(
    graph: &SceneGraph,
    targets: &TargetDesignation,
) -> Result<(SceneGraph, Vec<TargetGroup>), PlannerError> {
    targets.validate_against(graph)?;
    let belief = BeliefState::certain(graph);
    let noise = NoiseProfile::uniform(graph.categories().iter(), 1.0, 1.0);
    let view = WorkingView::from_belief(&belief, targets, &noise)?;
    Ok((view.to_scene_graph(graph), view.groups.clone()))
}
