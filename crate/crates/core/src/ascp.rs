//! Abstract consensus: one federated voting instance per ballot, with
//! boolean votes meaning abort (`false`) or commit (`true`).
//!
//! All messages a handler produces for one recipient go out as batches, one
//! per message kind and value, with ballots in ascending order.

use std::collections::{BTreeMap, BTreeSet};

use crate::ballot::{ballots_up_to, lic_set, Ballot, Value};
use crate::fbqs::{Fbqs, NodeId, NodeSet};
use crate::fv::{FvKind, FvMessage, FvState};
use crate::node::Output;
use crate::trace::{BallotMsg, EventKind, Message};

#[derive(Debug, Clone)]
pub struct AscpNode {
    me: NodeId,
    k: u32,
    view: Fbqs,
    instances: BTreeMap<Ballot, FvState<bool>>,
    pub candidate: Ballot,
    pub prepared: Ballot,
    pub round: u32,
    proposed: bool,
    halted: bool,
    delivered_false: BTreeSet<Ballot>,
    witness: BTreeMap<NodeId, u32>,
}

/// New timer round if some quorum containing `me` has members whose
/// statements all reach a round above `round`.
///
/// Among the qualifying quorums the greatest one is used, which yields the
/// smallest new round.
pub(crate) fn timer_round(
    view: &Fbqs,
    me: NodeId,
    round: u32,
    witness: &BTreeMap<NodeId, u32>,
) -> Option<u32> {
    let eligible: NodeSet = witness
        .iter()
        .filter(|(_, w)| **w > round)
        .map(|(u, _)| *u)
        .collect();
    let q = view.greatest_quorum_within(eligible);
    if !q.contains(me) {
        return None;
    }
    q.iter().map(|u| witness[&u]).min()
}

fn batch(kind: FvKind, value: bool, ballots: &[Ballot]) -> Message {
    let mut bs = ballots.to_vec();
    bs.sort();
    bs.dedup();
    Message::Batch(
        bs.into_iter()
            .map(|b| FvMessage {
                kind,
                tag: b,
                value,
            })
            .collect(),
    )
}

/// Largest ballot all of whose smaller incompatible ballots are in `delivered`.
///
/// Only rounds up to one past the largest delivered round are searched; with
/// two or more values no ballot beyond that can qualify.
pub fn max_preparable(delivered: &BTreeSet<Ballot>, k: u32) -> Ballot {
    preparable(delivered, k)
        .last()
        .copied()
        .unwrap_or(Ballot::Null)
}

/// Every ballot all of whose smaller incompatible ballots are in `delivered`, ascending.
pub fn preparable(delivered: &BTreeSet<Ballot>, k: u32) -> Vec<Ballot> {
    let top = delivered
        .iter()
        .map(|b| b.round())
        .max()
        .map_or(0, |r| r + 1);
    if delivered.is_empty() {
        return vec![Ballot::Null];
    }
    ballots_up_to(top, k)
        .into_iter()
        .filter(|b| lic_set(*b, k).iter().all(|c| delivered.contains(c)))
        .collect()
}

impl AscpNode {
    pub fn new(me: NodeId, k: u32, view: Fbqs) -> Self {
        AscpNode {
            me,
            k,
            view,
            instances: BTreeMap::new(),
            candidate: Ballot::Null,
            prepared: Ballot::Null,
            round: 0,
            proposed: false,
            halted: false,
            delivered_false: BTreeSet::new(),
            witness: BTreeMap::new(),
        }
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn instance(&self, b: Ballot) -> Option<&FvState<bool>> {
        self.instances.get(&b)
    }

    fn vote_abort_below_candidate(&mut self, out: &mut Vec<Output>) {
        let lic = lic_set(self.candidate, self.k);
        let fresh: Vec<Ballot> = lic
            .iter()
            .copied()
            .filter(|b| self.instances.entry(*b).or_default().vote(false))
            .collect();
        out.push(Output::Event(EventKind::VoteBatch {
            ballots: lic,
            value: false,
        }));
        if !fresh.is_empty() {
            out.push(Output::Broadcast(batch(FvKind::Vote, false, &fresh)));
        }
    }

    pub fn propose(&mut self, x: Value) -> Vec<Output> {
        if self.proposed || self.halted {
            return Vec::new();
        }
        self.proposed = true;
        self.candidate = Ballot::Round { n: 1, x };
        let mut out = vec![Output::Event(EventKind::Propose(x))];
        self.vote_abort_below_candidate(&mut out);
        out
    }

    fn on_delivered_false(&mut self, b: Ballot, vote_true: &mut Vec<Ballot>) {
        self.delivered_false.insert(b);
        for p in preparable(&self.delivered_false, self.k) {
            if p <= self.prepared {
                continue;
            }
            self.prepared = p;
            if self.candidate <= p {
                self.candidate = p;
                if self.instances.entry(p).or_default().vote(true) {
                    vote_true.push(p);
                }
            }
        }
    }

    pub fn on_batch(&mut self, from: NodeId, msgs: &[BallotMsg]) -> Vec<Output> {
        if self.halted {
            return Vec::new();
        }
        let mut ready = [Vec::new(), Vec::new()];
        let mut delivered = [Vec::new(), Vec::new()];
        let mut vote_true = Vec::new();
        let mut decided = None;
        for m in msgs {
            let b = m.tag;
            let w = if m.value {
                b.round()
            } else {
                b.succ(self.k).round()
            };
            let e = self.witness.entry(from).or_insert(0);
            *e = (*e).max(w);
            let inst = self.instances.entry(b).or_default();
            let r = inst.on_message(&self.view, self.me, from, m.kind, m.value);
            if let Some(a) = r.ready {
                ready[a as usize].push(b);
            }
            if let Some(a) = r.deliver {
                delivered[a as usize].push(b);
                if a {
                    decided = b.value();
                    break;
                }
                self.on_delivered_false(b, &mut vote_true);
            }
        }
        let mut out = Vec::new();
        if !delivered[0].is_empty() {
            out.push(Output::Event(EventKind::DeliverBatch {
                ballots: delivered[0].clone(),
                value: false,
            }));
        }
        if !vote_true.is_empty() {
            out.push(Output::Event(EventKind::VoteBatch {
                ballots: vote_true.clone(),
                value: true,
            }));
        }
        if !delivered[1].is_empty() {
            out.push(Output::Event(EventKind::DeliverBatch {
                ballots: delivered[1].clone(),
                value: true,
            }));
        }
        if let Some(x) = decided {
            out.push(Output::Event(EventKind::Decide(x)));
        } else if let Some(r) = timer_round(&self.view, self.me, self.round, &self.witness) {
            self.round = r;
            out.push(Output::StartTimer(r));
        }
        for (value, bs) in [(false, &ready[0]), (true, &ready[1])] {
            if !bs.is_empty() {
                out.push(Output::Broadcast(batch(FvKind::Ready, value, bs)));
            }
        }
        if !vote_true.is_empty() {
            out.push(Output::Broadcast(batch(FvKind::Vote, true, &vote_true)));
        }
        if decided.is_some() {
            self.halted = true;
            out.push(Output::Halt);
        }
        out
    }

    pub fn on_timeout(&mut self) -> Vec<Output> {
        if self.halted {
            return Vec::new();
        }
        let mut out = vec![Output::Event(EventKind::Timeout)];
        let x = self.prepared.value().or(self.candidate.value());
        if let Some(x) = x {
            self.candidate = Ballot::Round {
                n: self.round + 1,
                x,
            };
            self.vote_abort_below_candidate(&mut out);
        }
        out
    }
}
