//! Ballot voting: federated voting over prepare and commit statements with
//! constant-size watermarks instead of one instance per ballot.
//!
//! A `PREP b` statement stands for "abort every ballot less than and
//! incompatible with `b`". A `CMT b` statement stands for "commit `b`".

use std::collections::{BTreeMap, BTreeSet};

use crate::ballot::{ballots_up_to, prep_covers, Ballot};
use crate::fbqs::{Fbqs, NodeId, NodeSet};
use crate::fv::FvKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Prep,
    Cmt,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Prep => "PREP",
            Phase::Cmt => "CMT",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "PREP" => Some(Phase::Prep),
            "CMT" => Some(Phase::Cmt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Statement {
    pub phase: Phase,
    pub ballot: Ballot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BvMessage {
    pub kind: FvKind,
    pub stmt: Statement,
}

impl BvMessage {
    pub fn new(kind: FvKind, phase: Phase, ballot: Ballot) -> Self {
        BvMessage {
            kind,
            stmt: Statement { phase, ballot },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvIndication {
    Prepared(Ballot),
    Committed(Ballot),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BvOutput {
    pub sends: Vec<BvMessage>,
    pub indications: Vec<BvIndication>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BvState {
    k: u32,
    pub max_voted_prep: Ballot,
    pub max_readied_prep: Ballot,
    pub max_delivered_prep: Ballot,
    pub voted_cmt: BTreeSet<Ballot>,
    pub readied_cmt: BTreeSet<Ballot>,
    pub delivered_cmt: BTreeSet<Ballot>,
    vote_prep: BTreeMap<NodeId, BTreeSet<Ballot>>,
    ready_prep: BTreeMap<NodeId, BTreeSet<Ballot>>,
    vote_cmt: BTreeMap<Ballot, NodeSet>,
    ready_cmt: BTreeMap<Ballot, NodeSet>,
}

impl BvState {
    pub fn new(k: u32) -> Self {
        BvState {
            k,
            max_voted_prep: Ballot::Null,
            max_readied_prep: Ballot::Null,
            max_delivered_prep: Ballot::Null,
            voted_cmt: BTreeSet::new(),
            readied_cmt: BTreeSet::new(),
            delivered_cmt: BTreeSet::new(),
            vote_prep: BTreeMap::new(),
            ready_prep: BTreeMap::new(),
            vote_cmt: BTreeMap::new(),
            ready_cmt: BTreeMap::new(),
        }
    }

    /// Watermarks plus commit bookkeeping; the received-statement tables are
    /// not counted.
    pub fn footprint(&self) -> usize {
        3 + self.voted_cmt.len() + self.readied_cmt.len() + self.delivered_cmt.len()
    }

    pub fn prepare(&mut self, b: Ballot) -> Option<BvMessage> {
        if b > self.max_voted_prep {
            self.max_voted_prep = b;
            Some(BvMessage::new(FvKind::Vote, Phase::Prep, b))
        } else {
            None
        }
    }

    /// Votes to commit `b` unless already done or the node has voted to
    /// prepare a higher ballot.
    pub fn commit(&mut self, b: Ballot) -> Option<BvMessage> {
        if !self.voted_cmt.contains(&b) && self.max_voted_prep <= b {
            self.voted_cmt.insert(b);
            Some(BvMessage::new(FvKind::Vote, Phase::Cmt, b))
        } else {
            None
        }
    }

    /// Senders that have sent some `PREP` statement covering `b`.
    pub fn covering(&self, kind: FvKind, b: Ballot) -> NodeSet {
        let table = match kind {
            FvKind::Vote => &self.vote_prep,
            FvKind::Ready => &self.ready_prep,
        };
        table
            .iter()
            .filter(|(_, bs)| bs.iter().any(|bu| prep_covers(*bu, b, self.k)))
            .map(|(u, _)| *u)
            .collect()
    }

    fn max_mentioned(&self, kind: FvKind) -> Option<Ballot> {
        let table = match kind {
            FvKind::Vote => &self.vote_prep,
            FvKind::Ready => &self.ready_prep,
        };
        table
            .values()
            .filter_map(|bs| bs.iter().next_back())
            .max()
            .copied()
    }

    /// Largest `b > floor` whose covering set satisfies `guard`.
    fn max_satisfying(
        &self,
        kind: FvKind,
        floor: Ballot,
        guard: impl Fn(NodeSet) -> bool,
    ) -> Option<Ballot> {
        let top = self.max_mentioned(kind)?;
        ballots_up_to(top.round(), self.k)
            .into_iter()
            .rev()
            .filter(|b| *b > floor && *b <= top)
            .find(|b| guard(self.covering(kind, *b)))
    }

    pub fn on_message(
        &mut self,
        view: &Fbqs,
        me: NodeId,
        from: NodeId,
        msg: BvMessage,
    ) -> BvOutput {
        let mut out = BvOutput::default();
        let b = msg.stmt.ballot;
        match msg.stmt.phase {
            Phase::Prep => {
                let table = match msg.kind {
                    FvKind::Vote => &mut self.vote_prep,
                    FvKind::Ready => &mut self.ready_prep,
                };
                table.entry(from).or_default().insert(b);
                if let Some(r) = self.max_satisfying(FvKind::Vote, self.max_readied_prep, |s| {
                    view.has_quorum_with(me, s)
                }) {
                    self.max_readied_prep = r;
                    out.sends
                        .push(BvMessage::new(FvKind::Ready, Phase::Prep, r));
                }
                if let Some(r) = self.max_satisfying(FvKind::Ready, self.max_readied_prep, |s| {
                    view.is_v_blocking(me, s)
                }) {
                    self.max_readied_prep = r;
                    out.sends
                        .push(BvMessage::new(FvKind::Ready, Phase::Prep, r));
                }
                if let Some(d) = self.max_satisfying(FvKind::Ready, self.max_delivered_prep, |s| {
                    view.has_quorum_with(me, s)
                }) {
                    self.max_delivered_prep = d;
                    out.indications.push(BvIndication::Prepared(d));
                }
            }
            Phase::Cmt => {
                let table = match msg.kind {
                    FvKind::Vote => &mut self.vote_cmt,
                    FvKind::Ready => &mut self.ready_cmt,
                };
                table.entry(b).or_default().insert(from);
                let votes = self.vote_cmt.get(&b).copied().unwrap_or_default();
                let readys = self.ready_cmt.get(&b).copied().unwrap_or_default();
                if !self.readied_cmt.contains(&b)
                    && (view.has_quorum_with(me, votes) || view.is_v_blocking(me, readys))
                {
                    self.readied_cmt.insert(b);
                    out.sends.push(BvMessage::new(FvKind::Ready, Phase::Cmt, b));
                }
                if !self.delivered_cmt.contains(&b) && view.has_quorum_with(me, readys) {
                    self.delivered_cmt.insert(b);
                    out.indications.push(BvIndication::Committed(b));
                }
            }
        }
        out
    }
}
