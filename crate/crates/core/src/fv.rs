//! Federated voting: one instance per (node, tag).
//!
//! A node votes at most once, readies at most once and delivers at most once.
//! Both quorum rules require the quorum to contain the node itself.

use std::collections::BTreeMap;

use crate::fbqs::{Fbqs, NodeId, NodeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FvKind {
    Vote,
    Ready,
}

impl FvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FvKind::Vote => "VOTE",
            FvKind::Ready => "READY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FvMessage<T, V> {
    pub kind: FvKind,
    pub tag: T,
    pub value: V,
}

/// What a single handler call produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FvOutput<V> {
    /// Value to broadcast a READY for.
    pub ready: Option<V>,
    /// Value delivered by this call.
    pub deliver: Option<V>,
}

impl<V> Default for FvOutput<V> {
    fn default() -> Self {
        FvOutput {
            ready: None,
            deliver: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FvState<V> {
    pub voted: Option<V>,
    pub readied: Option<V>,
    pub delivered: Option<V>,
    votes: BTreeMap<V, NodeSet>,
    readys: BTreeMap<V, NodeSet>,
}

impl<V> Default for FvState<V> {
    fn default() -> Self {
        FvState {
            voted: None,
            readied: None,
            delivered: None,
            votes: BTreeMap::new(),
            readys: BTreeMap::new(),
        }
    }
}

impl<V: Ord + Copy> FvState<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Casts the node's vote. Returns `false` if it already voted.
    pub fn vote(&mut self, a: V) -> bool {
        if self.voted.is_some() {
            return false;
        }
        self.voted = Some(a);
        true
    }

    pub fn vote_senders(&self, a: V) -> NodeSet {
        self.votes.get(&a).copied().unwrap_or_default()
    }

    pub fn ready_senders(&self, a: V) -> NodeSet {
        self.readys.get(&a).copied().unwrap_or_default()
    }

    /// Records a message and applies the READY and deliver rules for its value.
    pub fn on_message(
        &mut self,
        view: &Fbqs,
        me: NodeId,
        from: NodeId,
        kind: FvKind,
        a: V,
    ) -> FvOutput<V> {
        let table = match kind {
            FvKind::Vote => &mut self.votes,
            FvKind::Ready => &mut self.readys,
        };
        table.entry(a).or_default().insert(from);
        let mut out = FvOutput::default();
        if self.readied.is_none()
            && (view.has_quorum_with(me, self.vote_senders(a))
                || view.is_v_blocking(me, self.ready_senders(a)))
        {
            self.readied = Some(a);
            out.ready = Some(a);
        }
        if self.delivered.is_none() && view.has_quorum_with(me, self.ready_senders(a)) {
            self.delivered = Some(a);
            out.deliver = Some(a);
        }
        out
    }
}
