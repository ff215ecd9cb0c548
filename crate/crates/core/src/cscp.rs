//! Concrete consensus: the abstract protocol with per-ballot voting replaced
//! by a single ballot-voting instance per node.

use std::collections::BTreeMap;

use crate::ascp::timer_round;
use crate::ballot::{Ballot, Value};
use crate::bv::{BvIndication, BvMessage, BvState};
use crate::fbqs::{Fbqs, NodeId};
use crate::node::Output;
use crate::trace::{EventKind, Message};

#[derive(Debug, Clone)]
pub struct CscpNode {
    me: NodeId,
    view: Fbqs,
    pub bv: BvState,
    pub candidate: Ballot,
    pub prepared: Ballot,
    pub round: u32,
    proposed: bool,
    halted: bool,
    witness: BTreeMap<NodeId, u32>,
}

impl CscpNode {
    pub fn new(me: NodeId, k: u32, view: Fbqs) -> Self {
        CscpNode {
            me,
            view,
            bv: BvState::new(k),
            candidate: Ballot::Null,
            prepared: Ballot::Null,
            round: 0,
            proposed: false,
            halted: false,
            witness: BTreeMap::new(),
        }
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    /// Scalars plus the ballot-voting watermarks and commit sets.
    pub fn footprint(&self) -> usize {
        3 + self.bv.footprint()
    }

    fn prepare_candidate(&mut self, out: &mut Vec<Output>) {
        out.push(Output::Event(EventKind::Prepare(self.candidate)));
        if let Some(m) = self.bv.prepare(self.candidate) {
            out.push(Output::Broadcast(Message::Bv(m)));
        }
    }

    pub fn propose(&mut self, x: Value) -> Vec<Output> {
        if self.proposed || self.halted {
            return Vec::new();
        }
        self.proposed = true;
        self.candidate = Ballot::Round { n: 1, x };
        let mut out = vec![Output::Event(EventKind::Propose(x))];
        self.prepare_candidate(&mut out);
        out
    }

    pub fn on_message(&mut self, from: NodeId, msg: BvMessage) -> Vec<Output> {
        if self.halted {
            return Vec::new();
        }
        let e = self.witness.entry(from).or_insert(0);
        *e = (*e).max(msg.stmt.ballot.round());
        let r = self.bv.on_message(&self.view, self.me, from, msg);
        let mut out: Vec<Output> = r
            .sends
            .into_iter()
            .map(|m| Output::Broadcast(Message::Bv(m)))
            .collect();
        for ind in r.indications {
            match ind {
                BvIndication::Prepared(b) => {
                    out.push(Output::Event(EventKind::Prepared(b)));
                    self.prepared = b;
                    if self.candidate <= b {
                        self.candidate = b;
                        out.push(Output::Event(EventKind::Commit(b)));
                        if let Some(m) = self.bv.commit(b) {
                            out.push(Output::Broadcast(Message::Bv(m)));
                        }
                    }
                }
                BvIndication::Committed(b) => {
                    out.push(Output::Event(EventKind::Committed(b)));
                    if let Some(x) = b.value() {
                        out.push(Output::Event(EventKind::Decide(x)));
                        out.push(Output::Halt);
                        self.halted = true;
                        return out;
                    }
                }
            }
        }
        if let Some(r) = timer_round(&self.view, self.me, self.round, &self.witness) {
            self.round = r;
            out.push(Output::StartTimer(r));
        }
        out
    }

    pub fn on_timeout(&mut self) -> Vec<Output> {
        if self.halted {
            return Vec::new();
        }
        let mut out = vec![Output::Event(EventKind::Timeout)];
        if let Some(x) = self.prepared.value().or(self.candidate.value()) {
            self.candidate = Ballot::Round {
                n: self.round + 1,
                x,
            };
            self.prepare_candidate(&mut out);
        }
        out
    }
}
