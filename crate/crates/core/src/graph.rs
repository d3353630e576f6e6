//! Typed DAGs over SNP, trait, and latent nodes with tier constraints.
//!
//! Arc rules: SNP→SNP and SNP→trait are always permitted; trait→SNP never is.
//! Trait→trait arcs must not go from a later tier to an earlier one, and arcs
//! between traits of the same tier may take either direction. Latent genetic
//! effect nodes follow the SNP rules.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Snp,
    Trait,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// Temporal tier; only meaningful for traits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<u32>,
}

impl Node {
    pub fn snp(id: &str) -> Self {
        Node {
            id: id.to_string(),
            kind: NodeKind::Snp,
            tier: None,
        }
    }

    pub fn trait_node(id: &str, tier: u32) -> Self {
        Node {
            id: id.to_string(),
            kind: NodeKind::Trait,
            tier: Some(tier),
        }
    }

    pub fn latent(id: &str) -> Self {
        Node {
            id: id.to_string(),
            kind: NodeKind::Latent,
            tier: None,
        }
    }

    pub fn is_trait(&self) -> bool {
        self.kind == NodeKind::Trait
    }

    pub fn is_snp(&self) -> bool {
        self.kind == NodeKind::Snp
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate node id '{0}'")]
    DuplicateNode(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("self-loop on '{0}'")]
    SelfLoop(String),
    #[error("arc {0} -> {1} already present")]
    DuplicateArc(String, String),
    #[error("arc would create a cycle through {}", .path.join(" -> "))]
    Cycle { path: Vec<String> },
    #[error("arc {parent} -> {child} violates tier constraints: {reason}")]
    TierViolation {
        parent: String,
        child: String,
        reason: String,
    },
    #[error("invalid separation query: {0}")]
    InvalidQuery(String),
}

/// Whether `parent → child` is admissible by node kinds and tiers alone.
pub fn arc_permitted(parent: &Node, child: &Node) -> Result<(), String> {
    match (parent.kind, child.kind) {
        (NodeKind::Trait, NodeKind::Snp | NodeKind::Latent) => {
            Err("traits cannot be parents of genetic nodes".into())
        }
        (NodeKind::Trait, NodeKind::Trait) => {
            let (pt, ct) = (parent.tier.unwrap_or(0), child.tier.unwrap_or(0));
            if pt > ct {
                Err(format!("tier {pt} trait cannot precede tier {ct} trait"))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    parents: Vec<BTreeSet<usize>>,
    children: Vec<BTreeSet<usize>>,
}

impl Dag {
    pub fn new(nodes: Vec<Node>) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        let p = nodes.len();
        Ok(Dag {
            nodes,
            index,
            parents: vec![BTreeSet::new(); p],
            children: vec![BTreeSet::new(); p],
        })
    }

    /// Build a graph and add `arcs` in order, validating each.
    pub fn with_arcs<S: AsRef<str>>(nodes: Vec<Node>, arcs: &[(S, S)]) -> Result<Self, GraphError> {
        let mut d = Dag::new(nodes)?;
        for (a, b) in arcs {
            d.add_arc(a.as_ref(), b.as_ref())?;
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.nodes[i].id
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &str) -> Result<usize, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn parents(&self, i: usize) -> &BTreeSet<usize> {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &BTreeSet<usize> {
        &self.children[i]
    }

    pub fn has_arc(&self, parent: usize, child: usize) -> bool {
        self.children[parent].contains(&child)
    }

    pub fn n_arcs(&self) -> usize {
        self.children.iter().map(BTreeSet::len).sum()
    }

    /// Arcs as index pairs, sorted by (parent, child) index.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect()
    }

    /// Arcs as id pairs, sorted lexicographically.
    pub fn arc_ids(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = self
            .arcs()
            .into_iter()
            .map(|(p, c)| (self.id(p).to_string(), self.id(c).to_string()))
            .collect();
        v.sort();
        v
    }

    /// Directed path `from ⇝ to` as node indices, if one exists.
    pub fn directed_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.len()];
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for &c in &self.children[v] {
                if !seen[c] {
                    seen[c] = true;
                    prev[c] = v;
                    queue.push_back(c);
                }
            }
        }
        None
    }

    /// Check whether `parent → child` could be added without touching the graph.
    pub fn check_arc(&self, parent: usize, child: usize) -> Result<(), GraphError> {
        let (pn, cn) = (&self.nodes[parent], &self.nodes[child]);
        if parent == child {
            return Err(GraphError::SelfLoop(pn.id.clone()));
        }
        if self.has_arc(parent, child) {
            return Err(GraphError::DuplicateArc(pn.id.clone(), cn.id.clone()));
        }
        arc_permitted(pn, cn).map_err(|reason| GraphError::TierViolation {
            parent: pn.id.clone(),
            child: cn.id.clone(),
            reason,
        })?;
        if let Some(path) = self.directed_path(child, parent) {
            return Err(GraphError::Cycle {
                path: path.into_iter().map(|i| self.id(i).to_string()).collect(),
            });
        }
        Ok(())
    }

    pub fn add_arc_idx(&mut self, parent: usize, child: usize) -> Result<(), GraphError> {
        self.check_arc(parent, child)?;
        self.parents[child].insert(parent);
        self.children[parent].insert(child);
        Ok(())
    }

    pub fn add_arc(&mut self, parent: &str, child: &str) -> Result<(), GraphError> {
        let (p, c) = (self.require(parent)?, self.require(child)?);
        self.add_arc_idx(p, c)
    }

    /// Copy of the graph with one more arc.
    pub fn with_arc(&self, parent: &str, child: &str) -> Result<Dag, GraphError> {
        let mut d = self.clone();
        d.add_arc(parent, child)?;
        Ok(d)
    }

    pub fn remove_arc_idx(&mut self, parent: usize, child: usize) -> bool {
        self.parents[child].remove(&parent) && self.children[parent].remove(&child)
    }

    /// Unchecked insertion used by search code that has already validated the move.
    pub(crate) fn insert_arc_unchecked(&mut self, parent: usize, child: usize) {
        self.parents[child].insert(parent);
        self.children[parent].insert(child);
    }

    pub fn markov_blanket_idx(&self, target: usize) -> BTreeSet<usize> {
        let mut mb: BTreeSet<usize> = self.parents[target].clone();
        for &c in &self.children[target] {
            mb.insert(c);
            mb.extend(self.parents[c].iter().copied());
        }
        mb.remove(&target);
        mb
    }

    /// Parents, children, and co-parents of `target`.
    pub fn markov_blanket(&self, target: &str) -> Result<BTreeSet<String>, GraphError> {
        let t = self.require(target)?;
        Ok(self
            .markov_blanket_idx(t)
            .into_iter()
            .map(|i| self.id(i).to_string())
            .collect())
    }

    fn ancestors_of(&self, set: &BTreeSet<usize>) -> Vec<bool> {
        let mut anc = vec![false; self.len()];
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if anc[v] {
                continue;
            }
            anc[v] = true;
            stack.extend(self.parents[v].iter().copied());
        }
        anc
    }

    /// d-separation of `x` and `y` given `z` by the reachability ("Bayes ball")
    /// traversal over (node, direction) states.
    pub fn d_separated_idx(&self, x: usize, y: usize, z: &BTreeSet<usize>) -> bool {
        let in_z = |v: usize| z.contains(&v);
        let anc = self.ancestors_of(z);
        // direction: true = arrived from a child (moving up), false = from a parent
        let mut visited = vec![[false; 2]; self.len()];
        let mut stack = vec![(x, true)];
        while let Some((v, up)) = stack.pop() {
            let slot = usize::from(up);
            if visited[v][slot] {
                continue;
            }
            visited[v][slot] = true;
            if v == y {
                return false;
            }
            if up {
                if !in_z(v) {
                    stack.extend(self.parents[v].iter().map(|&p| (p, true)));
                    stack.extend(self.children[v].iter().map(|&c| (c, false)));
                }
            } else {
                if !in_z(v) {
                    stack.extend(self.children[v].iter().map(|&c| (c, false)));
                }
                if anc[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, true)));
                }
            }
        }
        true
    }

    pub fn d_separated<S: AsRef<str>>(&self, x: &str, y: &str, z: &[S]) -> Result<bool, GraphError> {
        let (xi, yi) = (self.require(x)?, self.require(y)?);
        let zi = z
            .iter()
            .map(|s| self.require(s.as_ref()))
            .collect::<Result<BTreeSet<usize>, _>>()?;
        if xi == yi || zi.contains(&xi) || zi.contains(&yi) {
            return Err(GraphError::InvalidQuery(format!(
                "x and y must be distinct and outside the conditioning set ({x}, {y})"
            )));
        }
        Ok(self.d_separated_idx(xi, yi, &zi))
    }

    /// Topological order; among nodes ready at the same time the smallest id
    /// comes first.
    pub fn topological_order(&self) -> Result<Vec<usize>, GraphError> {
        let mut indegree: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut ready: BinaryHeap<Reverse<(&str, usize)>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse((self.id(i), i)))
            .collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(Reverse((_, v))) = ready.pop() {
            order.push(v);
            for &c in &self.children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse((self.id(c), c)));
                }
            }
        }
        if order.len() != self.len() {
            let stuck = (0..self.len()).find(|&i| indegree[i] > 0).unwrap();
            return Err(GraphError::Cycle {
                path: vec![self.id(stuck).to_string()],
            });
        }
        Ok(order)
    }

    pub fn topological_ids(&self) -> Result<Vec<String>, GraphError> {
        Ok(self
            .topological_order()?
            .into_iter()
            .map(|i| self.id(i).to_string())
            .collect())
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_ok()
    }

    /// Every arc respects the kind and tier rules.
    pub fn is_tier_valid(&self) -> bool {
        self.arcs()
            .into_iter()
            .all(|(p, c)| arc_permitted(&self.nodes[p], &self.nodes[c]).is_ok())
    }

    /// Same arcs over a larger node universe (which must contain every node).
    pub fn embed(&self, universe: &[Node]) -> Result<Dag, GraphError> {
        let mut d = Dag::new(universe.to_vec())?;
        for n in &self.nodes {
            match d.index_of(&n.id) {
                Some(i) if d.nodes[i] == *n => {}
                _ => return Err(GraphError::UnknownNode(n.id.clone())),
            }
        }
        for (p, c) in self.arcs() {
            let (pi, ci) = (d.require(self.id(p))?, d.require(self.id(c))?);
            d.insert_arc_unchecked(pi, ci);
        }
        Ok(d)
    }

    /// Subgraph induced by the nodes with `keep[i] == true`, in original order.
    pub fn induced(&self, keep: &[bool]) -> Dag {
        let nodes: Vec<Node> = self
            .nodes
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(n, _)| n.clone())
            .collect();
        let mut d = Dag::new(nodes).expect("ids already unique");
        for (p, c) in self.arcs() {
            if keep[p] && keep[c] {
                let (pi, ci) = (d.index[self.id(p)], d.index[self.id(c)]);
                d.insert_arc_unchecked(pi, ci);
            }
        }
        d
    }

    /// Node is a SNP with no arcs at all.
    pub fn is_isolated(&self, i: usize) -> bool {
        self.parents[i].is_empty() && self.children[i].is_empty()
    }
}
