//! Federated Byzantine quorum systems.
//!
//! Node sets are 64-bit masks, so a universe holds at most 64 nodes. Anything
//! that enumerates subsets (quorum listing, intact-set search) is further
//! capped by [`ENUMERATION_CAP`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Largest universe accepted by the exhaustive enumeration routines.
pub const ENUMERATION_CAP: usize = 12;

/// Largest universe a [`NodeSet`] can represent.
pub const MAX_NODES: usize = 64;

/// A node index. Displayed one-based as `v1`, `v2`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u8);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0 as usize + 1)
    }
}

impl FromStr for NodeId {
    type Err = FbqsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('v')
            .ok_or_else(|| FbqsError::BadNodeName(s.to_string()))?;
        let n: usize = digits
            .parse()
            .map_err(|_| FbqsError::BadNodeName(s.to_string()))?;
        if n == 0 || n > MAX_NODES {
            return Err(FbqsError::BadNodeName(s.to_string()));
        }
        Ok(NodeId((n - 1) as u8))
    }
}

/// A set of nodes.
///
/// The `Ord` impl is the canonical order used for every listing: first by
/// cardinality, then lexicographically by sorted member ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NodeSet(u64);

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);

    pub fn from_bits(bits: u64) -> Self {
        NodeSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// `{v0, ..., v(n-1)}`.
    pub fn first(n: usize) -> Self {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(v: NodeId) -> Self {
        NodeSet(1u64 << v.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, v: NodeId) -> bool {
        self.0 >> v.0 & 1 == 1
    }

    pub fn insert(&mut self, v: NodeId) {
        self.0 |= 1u64 << v.0;
    }

    pub fn remove(&mut self, v: NodeId) {
        self.0 &= !(1u64 << v.0);
    }

    pub fn with(mut self, v: NodeId) -> Self {
        self.insert(v);
        self
    }

    pub fn union(self, other: NodeSet) -> NodeSet {
        NodeSet(self.0 | other.0)
    }

    pub fn intersection(self, other: NodeSet) -> NodeSet {
        NodeSet(self.0 & other.0)
    }

    pub fn difference(self, other: NodeSet) -> NodeSet {
        NodeSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: NodeSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn iter(self) -> impl Iterator<Item = NodeId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros();
                bits &= bits - 1;
                Some(NodeId(i as u8))
            }
        })
    }

    /// All subsets of `self`, including the empty set, in mask order.
    pub fn subsets(self) -> impl Iterator<Item = NodeSet> {
        let full = self.0;
        let mut cur = 0u64;
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let out = NodeSet(cur);
            if cur == full {
                done = true;
            } else {
                cur = (cur.wrapping_sub(full)) & full;
            }
            Some(out)
        })
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<T: IntoIterator<Item = NodeId>>(iter: T) -> Self {
        let mut s = NodeSet::EMPTY;
        for v in iter {
            s.insert(v);
        }
        s
    }
}

impl Ord for NodeSet {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for NodeSet {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for NodeSet {
    type Err = FbqsError;

    /// Parses `{v1,v2}`; braces are optional.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim();
        let inner = inner
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .unwrap_or(inner);
        let mut set = NodeSet::EMPTY;
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            set.insert(part.parse()?);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FbqsError {
    #[error("node {0} has no slices")]
    NoSlices(NodeId),
    #[error("a slice of {node} does not contain {node}: {slice}")]
    SliceMissingSelf { node: NodeId, slice: NodeSet },
    #[error("a slice of {node} leaves the universe: {slice}")]
    SliceOutsideUniverse { node: NodeId, slice: NodeSet },
    #[error("node {0} is not in the universe")]
    UnknownNode(NodeId),
    #[error("universe has {size} nodes, enumeration is capped at {cap}")]
    Capacity { size: usize, cap: usize },
    #[error("bad node name {0:?}")]
    BadNodeName(String),
    #[error("view of {viewer} disagrees with the slices of correct node {node}")]
    ViewDisagreement { viewer: NodeId, node: NodeId },
    #[error("correct node {0} has no view")]
    MissingView(NodeId),
}

/// A federated Byzantine quorum system: a universe and the slices of each member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fbqs {
    universe: NodeSet,
    slices: BTreeMap<NodeId, Vec<NodeSet>>,
}

impl Fbqs {
    /// Validates and builds a system. Slices are deduplicated and sorted.
    pub fn new(
        universe: NodeSet,
        slices: BTreeMap<NodeId, Vec<NodeSet>>,
    ) -> Result<Self, FbqsError> {
        let mut out = BTreeMap::new();
        for v in universe.iter() {
            let mut list = slices.get(&v).cloned().unwrap_or_default();
            if list.is_empty() {
                return Err(FbqsError::NoSlices(v));
            }
            for q in &list {
                if !q.contains(v) {
                    return Err(FbqsError::SliceMissingSelf { node: v, slice: *q });
                }
                if !q.is_subset(universe) {
                    return Err(FbqsError::SliceOutsideUniverse { node: v, slice: *q });
                }
            }
            list.sort();
            list.dedup();
            out.insert(v, list);
        }
        if let Some(v) = slices.keys().find(|v| !universe.contains(**v)) {
            return Err(FbqsError::UnknownNode(*v));
        }
        Ok(Fbqs {
            universe,
            slices: out,
        })
    }

    /// Builds a system over `{v1..vn}` from per-node slice lists, indexed by node.
    pub fn from_lists(lists: &[Vec<NodeSet>]) -> Result<Self, FbqsError> {
        let universe = NodeSet::first(lists.len());
        let slices = lists
            .iter()
            .enumerate()
            .map(|(i, l)| (NodeId(i as u8), l.clone()))
            .collect();
        Fbqs::new(universe, slices)
    }

    pub fn universe(&self) -> NodeSet {
        self.universe
    }

    pub fn slices(&self, v: NodeId) -> &[NodeSet] {
        self.slices.get(&v).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Replaces the slices of one member. Used to build per-node views.
    pub fn with_slices(&self, v: NodeId, list: Vec<NodeSet>) -> Result<Fbqs, FbqsError> {
        let mut slices = self.slices.clone();
        slices.insert(v, list);
        Fbqs::new(self.universe, slices)
    }

    /// A non-empty set containing a slice of each of its members.
    pub fn is_quorum(&self, u: NodeSet) -> bool {
        !u.is_empty()
            && u.is_subset(self.universe)
            && u.iter()
                .all(|v| self.slices(v).iter().any(|q| q.is_subset(u)))
    }

    /// `b` meets every slice of `v`.
    pub fn is_v_blocking(&self, v: NodeId, b: NodeSet) -> bool {
        let slices = self.slices(v);
        !slices.is_empty() && slices.iter().all(|q| q.intersects(b))
    }

    /// The largest quorum contained in `s`, or the empty set if there is none.
    ///
    /// Quorums are closed under union, so this is the union of every quorum
    /// inside `s`; it is found by repeatedly discarding members that have no
    /// slice inside the remaining set.
    pub fn greatest_quorum_within(&self, s: NodeSet) -> NodeSet {
        let mut cur = s.intersection(self.universe);
        loop {
            let next: NodeSet = cur
                .iter()
                .filter(|v| self.slices(*v).iter().any(|q| q.is_subset(cur)))
                .collect();
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    /// Some quorum containing `v` lies inside `s`.
    pub fn has_quorum_with(&self, v: NodeId, s: NodeSet) -> bool {
        self.greatest_quorum_within(s).contains(v)
    }

    /// Every quorum, in canonical order.
    pub fn enumerate_quorums(&self) -> Result<Vec<NodeSet>, FbqsError> {
        self.check_cap()?;
        let mut out: Vec<NodeSet> = self
            .universe
            .subsets()
            .filter(|u| self.is_quorum(*u))
            .collect();
        out.sort();
        Ok(out)
    }

    /// Quorums with no proper sub-quorum, in canonical order.
    pub fn minimal_quorums(&self) -> Result<Vec<NodeSet>, FbqsError> {
        let all = self.enumerate_quorums()?;
        Ok(minimal_elements(&all))
    }

    /// Every pair of quorums shares a node.
    pub fn has_quorum_intersection(&self) -> Result<bool, FbqsError> {
        let mins = self.minimal_quorums()?;
        Ok(mins.iter().all(|a| mins.iter().all(|b| a.intersects(*b))))
    }

    /// The system restricted to `i`: universe `i`, slices `q ∩ i` for members of `i`.
    pub fn project(&self, i: NodeSet) -> Fbqs {
        let i = i.intersection(self.universe);
        let mut slices = BTreeMap::new();
        for v in i.iter() {
            let mut list: Vec<NodeSet> = self.slices(v).iter().map(|q| q.intersection(i)).collect();
            list.sort();
            list.dedup();
            slices.insert(v, list);
        }
        Fbqs {
            universe: i,
            slices,
        }
    }

    /// Both nodes are correct and every quorum containing one meets every
    /// quorum containing the other in a correct node.
    pub fn intertwined(&self, correct: NodeSet, v1: NodeId, v2: NodeId) -> Result<bool, FbqsError> {
        if !correct.contains(v1) || !correct.contains(v2) {
            return Ok(false);
        }
        let quorums = self.minimal_quorums_containing(v1, v2)?;
        let (q1, q2) = quorums;
        Ok(q1
            .iter()
            .all(|a| q2.iter().all(|b| a.intersection(*b).intersects(correct))))
    }

    fn minimal_quorums_containing(
        &self,
        v1: NodeId,
        v2: NodeId,
    ) -> Result<(Vec<NodeSet>, Vec<NodeSet>), FbqsError> {
        // Intersection in a correct node is upward closed, so checking the
        // minimal quorums containing each node is enough.
        let all = self.enumerate_quorums()?;
        let with = |v: NodeId| {
            let qs: Vec<NodeSet> = all.iter().copied().filter(|q| q.contains(v)).collect();
            minimal_elements(&qs)
        };
        Ok((with(v1), with(v2)))
    }

    /// `i` is a quorum of correct nodes whose members are pairwise intertwined
    /// in the projection onto `i`.
    pub fn is_intact_set(&self, correct: NodeSet, i: NodeSet) -> Result<bool, FbqsError> {
        if i.is_empty() || !i.is_subset(correct) || !self.is_quorum(i) {
            return Ok(false);
        }
        // Inside the projection every node is correct, so pairwise
        // intertwinedness is plain quorum intersection.
        self.project(i).has_quorum_intersection()
    }

    /// The maximal intact sets, in canonical order. They are pairwise disjoint.
    pub fn maximal_intact_sets(&self, correct: NodeSet) -> Result<Vec<NodeSet>, FbqsError> {
        self.check_cap()?;
        let correct = correct.intersection(self.universe);
        let mut intact = Vec::new();
        for i in correct.subsets() {
            if self.is_intact_set(correct, i)? {
                intact.push(i);
            }
        }
        let mut maximal: Vec<NodeSet> = intact
            .iter()
            .copied()
            .filter(|i| !intact.iter().any(|j| j != i && i.is_subset(*j)))
            .collect();
        maximal.sort();
        Ok(maximal)
    }

    fn check_cap(&self) -> Result<(), FbqsError> {
        let size = self.universe.len();
        if size > ENUMERATION_CAP {
            return Err(FbqsError::Capacity {
                size,
                cap: ENUMERATION_CAP,
            });
        }
        Ok(())
    }
}

fn minimal_elements(sets: &[NodeSet]) -> Vec<NodeSet> {
    let mut out: Vec<NodeSet> = sets
        .iter()
        .copied()
        .filter(|a| !sets.iter().any(|b| b != a && b.is_subset(*a)))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// How a faulty node misbehaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Follows the protocol until it stops for good.
    Crash,
    /// Arbitrary behaviour.
    Malicious,
}

/// Which nodes are faulty and how.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultModel {
    pub faulty: BTreeMap<NodeId, FaultKind>,
}

impl FaultModel {
    pub fn new(faulty: BTreeMap<NodeId, FaultKind>) -> Self {
        FaultModel { faulty }
    }

    pub fn faulty_set(&self) -> NodeSet {
        self.faulty.keys().copied().collect()
    }

    pub fn malicious(&self) -> NodeSet {
        self.faulty
            .iter()
            .filter(|(_, k)| **k == FaultKind::Malicious)
            .map(|(v, _)| *v)
            .collect()
    }

    pub fn correct(&self, universe: NodeSet) -> NodeSet {
        universe.difference(self.faulty_set())
    }

    /// Correct nodes plus crash-only nodes.
    pub fn honest(&self, universe: NodeSet) -> NodeSet {
        universe.difference(self.malicious())
    }
}

/// Per-node views of the slices. Correct nodes agree on the slices of correct
/// nodes; faulty nodes may advertise different slices to different viewers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectiveFbqs {
    correct: NodeSet,
    views: BTreeMap<NodeId, Fbqs>,
}

impl SubjectiveFbqs {
    pub fn new(correct: NodeSet, views: BTreeMap<NodeId, Fbqs>) -> Result<Self, FbqsError> {
        for v in correct.iter() {
            if !views.contains_key(&v) {
                return Err(FbqsError::MissingView(v));
            }
        }
        let reference = views.values().next();
        if let Some(reference) = reference {
            for (viewer, view) in &views {
                for c in correct.iter() {
                    if view.slices(c) != reference.slices(c)
                        || view.universe() != reference.universe()
                    {
                        return Err(FbqsError::ViewDisagreement {
                            viewer: *viewer,
                            node: c,
                        });
                    }
                }
            }
        }
        Ok(SubjectiveFbqs { correct, views })
    }

    /// Every correct node sees the same objective system.
    pub fn objective(correct: NodeSet, fbqs: &Fbqs) -> Self {
        let views = correct.iter().map(|v| (v, fbqs.clone())).collect();
        SubjectiveFbqs { correct, views }
    }

    pub fn correct(&self) -> NodeSet {
        self.correct
    }

    pub fn view(&self, v: NodeId) -> Option<&Fbqs> {
        self.views.get(&v)
    }

    pub fn views(&self) -> impl Iterator<Item = (&NodeId, &Fbqs)> {
        self.views.iter()
    }

    /// Intact in every correct node's view.
    pub fn is_intact_set(&self, i: NodeSet) -> Result<bool, FbqsError> {
        for view in self.views.values() {
            if !view.is_intact_set(self.correct, i)? {
                return Ok(false);
            }
        }
        Ok(!self.views.is_empty())
    }

    /// Maximal intact sets; every correct view yields the same answer, and
    /// the first view is used.
    pub fn maximal_intact_sets(&self) -> Result<Vec<NodeSet>, FbqsError> {
        match self.views.values().next() {
            Some(view) => view.maximal_intact_sets(self.correct),
            None => Ok(Vec::new()),
        }
    }

    /// Nodes intertwined in every correct view.
    pub fn intertwined(&self, v1: NodeId, v2: NodeId) -> Result<bool, FbqsError> {
        for view in self.views.values() {
            if !view.intertwined(self.correct, v1, v2)? {
                return Ok(false);
            }
        }
        Ok(!self.views.is_empty())
    }
}
