//! Scene model: objects, typed support edges, and derived structures.
//!
//! A scene is a set of categorised objects plus directed support edges.
//! An edge `parent -> child` means the parent supports the child (the
//! child rests on or in the parent). Edges come in two kinds:
//!
//! - `Stable`: the parent fully supports the child; translating the
//!   parent carries the child along. A stable child has exactly one
//!   parent.
//! - `Weak`: the parent partially supports the child; the child may
//!   have several weak parents (including, implicitly, the table).
//!
//! The operating table acts as a virtual root: every object without a
//! parent rests on it. The virtual root never appears as an object id.
//!
//! All types here are immutable after construction and safe to share.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense per-scene object index, stable for the scene's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

/// Object category label from a closed, config-declared set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Category(pub String);

impl Category {
    pub fn new(name: impl Into<String>) -> Self {
        Category(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Kind of a directed support edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportKind {
    Stable,
    Weak,
}

/// Pairwise relationship class between two objects, as seen from the
/// first object of an ordered pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationClass {
    /// First object weakly supports the second.
    OrdinaryParent,
    /// First object is weakly supported by the second.
    OrdinaryChild,
    /// First object stably supports the second.
    NaturalParent,
    /// First object is stably supported by the second.
    NaturalChild,
    /// No direct support edge either way.
    NoRelation,
}

impl RelationClass {
    pub const ALL: [RelationClass; 5] = [
        RelationClass::OrdinaryParent,
        RelationClass::OrdinaryChild,
        RelationClass::NaturalParent,
        RelationClass::NaturalChild,
        RelationClass::NoRelation,
    ];

    /// The class of the reversed pair: `rel(i, j).inverse() == rel(j, i)`.
    pub fn inverse(self) -> RelationClass {
        match self {
            RelationClass::OrdinaryParent => RelationClass::OrdinaryChild,
            RelationClass::OrdinaryChild => RelationClass::OrdinaryParent,
            RelationClass::NaturalParent => RelationClass::NaturalChild,
            RelationClass::NaturalChild => RelationClass::NaturalParent,
            RelationClass::NoRelation => RelationClass::NoRelation,
        }
    }

    pub fn from_edge(kind: SupportKind, is_parent: bool) -> RelationClass {
        match (kind, is_parent) {
            (SupportKind::Stable, true) => RelationClass::NaturalParent,
            (SupportKind::Stable, false) => RelationClass::NaturalChild,
            (SupportKind::Weak, true) => RelationClass::OrdinaryParent,
            (SupportKind::Weak, false) => RelationClass::OrdinaryChild,
        }
    }
}

/// Directed support edge: `parent` supports `child`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SupportEdge {
    pub parent: ObjectId,
    pub child: ObjectId,
    pub kind: SupportKind,
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("edge references object {id} but the scene has {count} objects")]
    EdgeOutOfBounds { id: ObjectId, count: usize },
    #[error("relation of an object with itself is undefined (asked for {0})")]
    SelfRelation(ObjectId),
    #[error("cycle detected among support edges: {0:?}")]
    Cycle(Vec<ObjectId>),
    #[error("unknown object id {0}")]
    UnknownObject(ObjectId),
    #[error("scene file is malformed: {0}")]
    Malformed(String),
    #[error("object ids are not dense: expected {expected} got {got}")]
    NonDenseIds { expected: u32, got: u32 },
    #[error("category {category} of object {id} has no entry in the noise profile table `{table}`")]
    UnknownCategory {
        id: ObjectId,
        category: Category,
        table: &'static str,
    },
}

/// A single violated scene invariant. Violations are data, not faults:
/// `validate` reports all of them instead of failing on the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop {
        object: ObjectId,
    },
    DuplicateEdge {
        parent: ObjectId,
        child: ObjectId,
    },
    /// Both `i -> j` and `j -> i` exist, breaking parent/child symmetry.
    SymmetryBreach {
        a: ObjectId,
        b: ObjectId,
    },
    /// A child with an incoming stable edge must have exactly one parent.
    StableChildExtraParents {
        child: ObjectId,
        parents: usize,
    },
    Cycle {
        members: Vec<ObjectId>,
    },
    /// Object cannot be reached from the virtual root (the table).
    Unreachable {
        object: ObjectId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { object } => write!(f, "self loop on {object}"),
            Violation::DuplicateEdge { parent, child } => {
                write!(f, "duplicate edge {parent} -> {child}")
            }
            Violation::SymmetryBreach { a, b } => {
                write!(f, "both {a} -> {b} and {b} -> {a} present")
            }
            Violation::StableChildExtraParents { child, parents } => {
                write!(f, "stable child {child} has {parents} parents")
            }
            Violation::Cycle { members } => write!(f, "cycle through {members:?}"),
            Violation::Unreachable { object } => {
                write!(f, "{object} unreachable from the table")
            }
        }
    }
}

/// Result of validating a scene graph.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scene graph: categorised objects plus directed support edges.
///
/// Weak support permits multiple parents, so the structure is a rooted
/// DAG rather than a strict tree. The virtual root (table) is implicit:
/// parentless objects rest on it.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    categories: Vec<Category>,
    edges: Vec<SupportEdge>,
    children: Vec<Vec<(ObjectId, SupportKind)>>,
    parents: Vec<Vec<(ObjectId, SupportKind)>>,
}

impl SceneGraph {
    /// Builds a graph, rejecting only edges that reference unknown ids.
    /// Everything else (cycles, duplicate edges, ...) is reported by
    /// [`SceneGraph::validate`].
    pub fn new(categories: Vec<Category>, mut edges: Vec<SupportEdge>) -> Result<Self, SceneError> {
        let n = categories.len();
        for e in &edges {
            for id in [e.parent, e.child] {
                if id.index() >= n {
                    return Err(SceneError::EdgeOutOfBounds { id, count: n });
                }
            }
        }
        edges.sort();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for e in &edges {
            if e.parent != e.child {
                children[e.parent.index()].push((e.child, e.kind));
                parents[e.child.index()].push((e.parent, e.kind));
            }
        }
        Ok(SceneGraph {
            categories,
            edges,
            children,
            parents,
        })
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

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn edges(&self) -> &[SupportEdge] {
        &self.edges
    }

    pub fn children(&self, id: ObjectId) -> &[(ObjectId, SupportKind)] {
        &self.children[id.index()]
    }

    pub fn parents(&self, id: ObjectId) -> &[(ObjectId, SupportKind)] {
        &self.parents[id.index()]
    }

    /// Checks every scene invariant and returns the full list of
    /// violations; an empty list means the scene is well formed.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.object_count();

        let mut seen_pairs: BTreeSet<(ObjectId, ObjectId)> = BTreeSet::new();
        for e in &self.edges {
            if e.parent == e.child {
                violations.push(Violation::SelfLoop { object: e.parent });
                continue;
            }
            if !seen_pairs.insert((e.parent, e.child)) {
                violations.push(Violation::DuplicateEdge {
                    parent: e.parent,
                    child: e.child,
                });
            }
        }
        for &(a, b) in &seen_pairs {
            if a < b && seen_pairs.contains(&(b, a)) {
                violations.push(Violation::SymmetryBreach { a, b });
            }
        }

        for id in self.ids() {
            let incoming = self.parents(id);
            let has_stable = incoming.iter().any(|&(_, k)| k == SupportKind::Stable);
            if has_stable && incoming.len() > 1 {
                violations.push(Violation::StableChildExtraParents {
                    child: id,
                    parents: incoming.len(),
                });
            }
        }

        // Cycle detection: iterative DFS with colors.
        let mut color = vec![0u8; n]; // 0 white, 1 gray, 2 black
        let mut cycle_members: BTreeSet<ObjectId> = BTreeSet::new();
        for start in self.ids() {
            if color[start.index()] != 0 {
                continue;
            }
            // stack of (node, next-child-index)
            let mut stack: Vec<(ObjectId, usize)> = vec![(start, 0)];
            color[start.index()] = 1;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let kids = self.children(node);
                if *next < kids.len() {
                    let (child, _) = kids[*next];
                    *next += 1;
                    match color[child.index()] {
                        0 => {
                            color[child.index()] = 1;
                            stack.push((child, 0));
                        }
                        1 => {
                            // back edge: everything from `child` up the stack is cyclic
                            let pos = stack.iter().position(|&(x, _)| x == child).unwrap_or(0);
                            for &(x, _) in &stack[pos..] {
                                cycle_members.insert(x);
                            }
                        }
                        _ => {}
                    }
                } else {
                    color[node.index()] = 2;
                    stack.pop();
                }
            }
        }
        if !cycle_members.is_empty() {
            violations.push(Violation::Cycle {
                members: cycle_members.iter().copied().collect(),
            });
        }

        // Reachability from the virtual root: BFS from all parentless objects.
        let mut reached = vec![false; n];
        let mut queue: VecDeque<ObjectId> =
            self.ids().filter(|&id| self.parents(id).is_empty()).collect();
        for &id in &queue {
            reached[id.index()] = true;
        }
        while let Some(id) = queue.pop_front() {
            for &(child, _) in self.children(id) {
                if !reached[child.index()] {
                    reached[child.index()] = true;
                    queue.push_back(child);
                }
            }
        }
        for id in self.ids() {
            if !reached[id.index()] {
                violations.push(Violation::Unreachable { object: id });
            }
        }

        ValidationReport { violations }
    }

    /// Relation class of the ordered pair `(i, j)`, from direct edges
    /// only (no transitive closure). Errors when `i == j`.
    pub fn relation(&self, i: ObjectId, j: ObjectId) -> Result<RelationClass, SceneError> {
        if i == j {
            return Err(SceneError::SelfRelation(i));
        }
        for id in [i, j] {
            if id.index() >= self.object_count() {
                return Err(SceneError::UnknownObject(id));
            }
        }
        if let Some(&(_, kind)) = self.children(i).iter().find(|&&(c, _)| c == j) {
            return Ok(RelationClass::from_edge(kind, true));
        }
        if let Some(&(_, kind)) = self.children(j).iter().find(|&&(c, _)| c == i) {
            return Ok(RelationClass::from_edge(kind, false));
        }
        Ok(RelationClass::NoRelation)
    }

    /// Full ordered-pair relation matrix.
    pub fn relation_matrix(&self) -> RelationMatrix {
        let n = self.object_count();
        let mut classes = vec![RelationClass::NoRelation; n * n];
        for e in &self.edges {
            if e.parent == e.child {
                continue;
            }
            classes[e.parent.index() * n + e.child.index()] =
                RelationClass::from_edge(e.kind, true);
            classes[e.child.index() * n + e.parent.index()] =
                RelationClass::from_edge(e.kind, false);
        }
        RelationMatrix { n, classes }
    }

    /// The object together with everything reachable over stable edges
    /// only: the set physically moved when the object is grasped.
    pub fn stable_closure(&self, o: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([o]);
        out.insert(o);
        while let Some(x) = queue.pop_front() {
            for &(child, kind) in self.children(x) {
                if kind == SupportKind::Stable && out.insert(child) {
                    queue.push_back(child);
                }
            }
        }
        out
    }

    /// All objects reachable from `o` over any edge kind, excluding `o`.
    /// Cycle-safe.
    pub fn descendants(&self, o: ObjectId) -> BTreeSet<ObjectId> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([o]);
        let mut seen = BTreeSet::from([o]);
        while let Some(x) = queue.pop_front() {
            for &(child, _) in self.children(x) {
                if seen.insert(child) {
                    out.insert(child);
                    queue.push_back(child);
                }
            }
        }
        out
    }
}

/// Relation class for every ordered pair of a fixed scene.
#[derive(Debug, Clone)]
pub struct RelationMatrix {
    n: usize,
    classes: Vec<RelationClass>,
}

impl RelationMatrix {
    pub fn get(&self, i: ObjectId, j: ObjectId) -> Result<RelationClass, SceneError> {
        if i == j {
            return Err(SceneError::SelfRelation(i));
        }
        for id in [i, j] {
            if id.index() >= self.n {
                return Err(SceneError::UnknownObject(id));
            }
        }
        Ok(self.classes[i.index() * self.n + j.index()])
    }
}

/// Per-object leaf-to-root ordering of its subtree; the entry's last
/// element is the object itself. Each object appears once even when
/// weak edges make the subtree a DAG; ties are broken by ascending id
/// so the ordering is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescendantTable {
    entries: Vec<Vec<ObjectId>>,
}

impl DescendantTable {
    /// Builds the table for a validated graph. Faults on cycles, which
    /// cannot occur after validation.
    pub fn build(graph: &SceneGraph) -> Result<Self, SceneError> {
        let report = graph.validate();
        if let Some(Violation::Cycle { members }) = report
            .violations
            .iter()
            .find(|v| matches!(v, Violation::Cycle { .. }))
        {
            return Err(SceneError::Cycle(members.clone()));
        }
        Ok(Self::build_unchecked(graph))
    }

    /// Builds the table without the cycle pre-check; objects trapped in
    /// a cycle simply never become emittable and are left out of the
    /// affected entries. Used on noisy estimated graphs.
    pub fn build_unchecked(graph: &SceneGraph) -> Self {
        let entries = graph
            .ids()
            .map(|root| Self::subtree_leaf_to_root(graph, root))
            .collect();
        DescendantTable { entries }
    }

    /// Leaf-to-root order of the subtree under `root`: repeatedly emit
    /// the smallest-id member whose in-subtree children are all emitted.
    fn subtree_leaf_to_root(graph: &SceneGraph, root: ObjectId) -> Vec<ObjectId> {
        let mut members = graph.descendants(root);
        members.insert(root);
        let mut emitted: BTreeSet<ObjectId> = BTreeSet::new();
        let mut order = Vec::with_capacity(members.len());
        while emitted.len() < members.len() {
            let next = members.iter().copied().find(|&m| {
                !emitted.contains(&m)
                    && graph
                        .children(m)
                        .iter()
                        .all(|&(c, _)| !members.contains(&c) || emitted.contains(&c))
            });
            match next {
                Some(m) => {
                    emitted.insert(m);
                    order.push(m);
                }
                None => break, // only possible on cyclic input
            }
        }
        order
    }

    pub fn entry(&self, o: ObjectId) -> &[ObjectId] {
        &self.entries[o.index()]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// --- scene file format -------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SceneFileObject {
    id: u32,
    category: Category,
}

#[derive(Serialize, Deserialize)]
struct SceneFileEdge {
    parent: u32,
    child: u32,
    kind: SupportKind,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    objects: Vec<SceneFileObject>,
    edges: Vec<SceneFileEdge>,
}

impl SceneGraph {
    /// Parses the scene file format. Ids must be dense in `[0, N)`.
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| SceneError::Malformed(e.to_string()))?;
        let mut objects = file.objects;
        objects.sort_by_key(|o| o.id);
        for (i, obj) in objects.iter().enumerate() {
            if obj.id != i as u32 {
                return Err(SceneError::NonDenseIds {
                    expected: i as u32,
                    got: obj.id,
                });
            }
        }
        let categories = objects.into_iter().map(|o| o.category).collect();
        let edges = file
            .edges
            .into_iter()
            .map(|e| SupportEdge {
                parent: ObjectId(e.parent),
                child: ObjectId(e.child),
                kind: e.kind,
            })
            .collect();
        SceneGraph::new(categories, edges)
    }

    pub fn to_json(&self) -> String {
        let file = SceneFile {
            objects: self
                .ids()
                .map(|id| SceneFileObject {
                    id: id.0,
                    category: self.category(id).clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| SceneFileEdge {
                    parent: e.parent.0,
                    child: e.child.0,
                    kind: e.kind,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
    }

    /// Verifies that every category appears in the given tables; the
    /// error names the first missing entry.
    pub fn check_categories(
        &self,
        tables: &[(&'static str, &BTreeMap<Category, f64>)],
    ) -> Result<(), SceneError> {
        for id in self.ids() {
            let cat = self.category(id);
            for (table, map) in tables {
                if !map.contains_key(cat) {
                    return Err(SceneError::UnknownCategory {
                        id,
                        category: cat.clone(),
                        table,
                    });
                }
            }
        }
        Ok(())
    }
}
