//! Refinement of the concrete protocol by the abstract one.
//!
//! `sigma` rewrites a concrete trace, restricted to an intact set, into an
//! abstract trace: ballot-voting statements become batches of per-ballot
//! messages. `check_abstract` then replays that trace against the abstract
//! protocol's rules, node by node, and reports the first event no abstract
//! node could have produced.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::ascp::{max_preparable, preparable};
use crate::ballot::{lic_set, Ballot, Value};
use crate::bv::{BvMessage, Phase};
use crate::fbqs::{Fbqs, FbqsError, NodeId, NodeSet};
use crate::fv::{FvKind, FvMessage};
use crate::scenario::Scenario;
use crate::trace::{BallotMsg, EventKind, Message, SimEvent, Trace};

/// Events of nodes in `i` only; sequence numbers and times are kept.
pub fn project(trace: &Trace, i: NodeSet) -> Trace {
    Trace {
        events: trace
            .events
            .iter()
            .filter(|e| e.node.is_some_and(|v| i.contains(v)))
            .cloned()
            .collect(),
    }
}

/// Propose and decide events, in trace order.
pub fn history(trace: &Trace) -> Vec<(NodeId, EventKind)> {
    trace
        .events
        .iter()
        .filter_map(|e| match (&e.node, &e.kind) {
            (Some(v), k @ (EventKind::Propose(_) | EventKind::Decide(_))) => Some((*v, k.clone())),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {seq}: {msg}")]
pub struct SigmaError {
    pub seq: u64,
    pub msg: String,
}

type Key = (FvKind, Ballot, bool);

fn key(m: &BallotMsg) -> Key {
    (m.kind, m.tag, m.value)
}

fn msg(kind: FvKind, tag: Ballot, value: bool) -> BallotMsg {
    FvMessage { kind, tag, value }
}

#[derive(Debug, Clone, Default)]
struct SigmaNode {
    candidate: Ballot,
    delivered: BTreeSet<Ballot>,
    phi_prev: Ballot,
    voted: BTreeMap<Ballot, bool>,
}

/// Not yet seen on this link; a vote counts as seen whichever way it went.
fn fresh(seen: &BTreeSet<Key>, m: &BallotMsg) -> bool {
    match m.kind {
        FvKind::Vote => {
            !seen.contains(&(FvKind::Vote, m.tag, false))
                && !seen.contains(&(FvKind::Vote, m.tag, true))
        }
        FvKind::Ready => !seen.contains(&key(m)),
    }
}

/// Per-ballot messages a statement stands for, read literally.
fn literal_batch(m: &BvMessage, k: u32) -> Vec<BallotMsg> {
    let b = m.stmt.ballot;
    match m.stmt.phase {
        Phase::Prep => lic_set(b, k)
            .into_iter()
            .map(|c| msg(m.kind, c, false))
            .collect(),
        Phase::Cmt => vec![msg(m.kind, b, true)],
    }
}

/// Streaming form of the mapping; each concrete event is translated as soon
/// as it is pushed, so the output for a prefix is a prefix of the output.
#[derive(Debug, Clone)]
pub struct Sigma {
    k: u32,
    next_seq: u64,
    nodes: BTreeMap<NodeId, SigmaNode>,
    sent: BTreeMap<(NodeId, NodeId), BTreeSet<Key>>,
    received: BTreeMap<(NodeId, NodeId), BTreeSet<Key>>,
    links: BTreeMap<(NodeId, NodeId, BvMessage), VecDeque<Vec<BallotMsg>>>,
}

impl Sigma {
    pub fn new(k: u32) -> Self {
        Sigma {
            k,
            next_seq: 0,
            nodes: BTreeMap::new(),
            sent: BTreeMap::new(),
            received: BTreeMap::new(),
            links: BTreeMap::new(),
        }
    }

    fn emit(&mut self, out: &mut Vec<SimEvent>, e: &SimEvent, kind: EventKind) {
        out.push(SimEvent {
            seq: self.next_seq,
            time: e.time,
            node: e.node,
            kind,
        });
        self.next_seq += 1;
    }

    /// Everything a statement from `v` stands for given what `v` has voted:
    /// a prepare vote skips ballots `v` voted to commit, and a commit vote
    /// carries every commit vote up to its ballot.
    fn statement_batch(&mut self, v: NodeId, m: &BvMessage) -> Vec<BallotMsg> {
        let b = m.stmt.ballot;
        let voted = &self.nodes.entry(v).or_default().voted;
        match (m.kind, m.stmt.phase) {
            (FvKind::Vote, Phase::Prep) => lic_set(b, self.k)
                .into_iter()
                .filter(|c| voted.get(c) != Some(&true))
                .map(|c| msg(FvKind::Vote, c, false))
                .collect(),
            (FvKind::Vote, Phase::Cmt) => voted
                .iter()
                .filter(|(c, a)| **a && **c <= b)
                .map(|(c, _)| msg(FvKind::Vote, *c, true))
                .collect(),
            _ => literal_batch(m, self.k),
        }
    }

    pub fn push(&mut self, e: &SimEvent) -> Result<Vec<SimEvent>, SigmaError> {
        let err = |msg: String| SigmaError { seq: e.seq, msg };
        let mut out = Vec::new();
        let Some(v) = e.node else {
            return Ok(out);
        };
        let k = self.k;
        match &e.kind {
            EventKind::Propose(x) => {
                self.nodes.entry(v).or_default().candidate = Ballot::Round { n: 1, x: *x };
                self.emit(&mut out, e, e.kind.clone());
            }
            EventKind::Decide(_) | EventKind::StartTimer(_) | EventKind::Timeout => {
                self.emit(&mut out, e, e.kind.clone());
            }
            EventKind::Crash | EventKind::Stop | EventKind::End(_) => {}
            EventKind::Prepare(b) => {
                let st = self.nodes.entry(v).or_default();
                let lic = lic_set(*b, k);
                for c in &lic {
                    st.voted.entry(*c).or_insert(false);
                }
                st.candidate = *b;
                self.emit(
                    &mut out,
                    e,
                    EventKind::VoteBatch {
                        ballots: lic,
                        value: false,
                    },
                );
            }
            EventKind::Commit(b) => {
                let st = self.nodes.entry(v).or_default();
                let t: Vec<Ballot> = preparable(&st.delivered, k)
                    .into_iter()
                    .filter(|c| *c > st.phi_prev && c <= b && *c >= st.candidate)
                    .filter(|c| !st.voted.contains_key(c))
                    .collect();
                for c in &t {
                    st.voted.insert(*c, true);
                }
                st.candidate = *b;
                if !t.is_empty() {
                    self.emit(
                        &mut out,
                        e,
                        EventKind::VoteBatch {
                            ballots: t,
                            value: true,
                        },
                    );
                }
            }
            EventKind::Prepared(b) => {
                let st = self.nodes.entry(v).or_default();
                st.phi_prev = max_preparable(&st.delivered, k);
                let fresh: Vec<Ballot> = lic_set(*b, k)
                    .into_iter()
                    .filter(|c| !st.delivered.contains(c))
                    .collect();
                st.delivered.extend(fresh.iter().copied());
                let phi = max_preparable(&st.delivered, k);
                if phi != *b {
                    return Err(err(format!(
                        "prepared {b} but the delivered aborts make {phi} the greatest preparable ballot"
                    )));
                }
                if !fresh.is_empty() {
                    self.emit(
                        &mut out,
                        e,
                        EventKind::DeliverBatch {
                            ballots: fresh,
                            value: false,
                        },
                    );
                }
            }
            EventKind::Committed(b) => {
                self.emit(
                    &mut out,
                    e,
                    EventKind::DeliverBatch {
                        ballots: vec![*b],
                        value: true,
                    },
                );
            }
            EventKind::Send {
                peer,
                msg: Message::Bv(m),
            } => {
                let full = self.statement_batch(v, m);
                let sent = self.sent.entry((v, *peer)).or_default();
                let batch: Vec<BallotMsg> =
                    full.iter().filter(|x| fresh(sent, x)).copied().collect();
                sent.extend(batch.iter().map(key));
                self.links
                    .entry((v, *peer, *m))
                    .or_default()
                    .push_back(full);
                if !batch.is_empty() {
                    self.emit(
                        &mut out,
                        e,
                        EventKind::Send {
                            peer: *peer,
                            msg: Message::Batch(batch),
                        },
                    );
                }
            }
            EventKind::Receive {
                peer,
                msg: Message::Bv(m),
            } => {
                let u = *peer;
                let full = match self.links.get_mut(&(u, v, *m)).and_then(|q| q.pop_front()) {
                    Some(full) => full,
                    None => literal_batch(m, k),
                };
                let recv = self.received.entry((v, u)).or_default();
                let batch: Vec<BallotMsg> =
                    full.iter().filter(|x| fresh(recv, x)).copied().collect();
                recv.extend(batch.iter().map(key));
                if !batch.is_empty() {
                    self.emit(
                        &mut out,
                        e,
                        EventKind::Receive {
                            peer: u,
                            msg: Message::Batch(batch),
                        },
                    );
                }
            }
            other => {
                return Err(err(format!(
                    "`{}` does not occur in a concrete consensus trace",
                    other.name()
                )))
            }
        }
        Ok(out)
    }
}

/// Maps a concrete trace (normally already projected onto an intact set) to
/// an abstract one. Abstract events are renumbered from zero.
pub fn sigma(trace: &Trace, k: u32) -> Result<Trace, SigmaError> {
    let mut s = Sigma::new(k);
    let mut events = Vec::new();
    for e in &trace.events {
        events.extend(s.push(e)?);
    }
    Ok(Trace { events })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("abstract event {seq} at {node}: {msg}")]
pub struct Violation {
    pub seq: u64,
    pub node: NodeId,
    pub msg: String,
}

#[derive(Debug, Clone, Default)]
struct AbstractNode {
    proposed: bool,
    decided: bool,
    candidate: Ballot,
    prepared: Ballot,
    round: u32,
    armed: bool,
    /// Set by propose and timeout: the next false vote batch is owed.
    owes_abort_votes: bool,
    voted: BTreeMap<Ballot, bool>,
    readied: BTreeMap<Ballot, bool>,
    delivered: BTreeMap<Ballot, bool>,
    delivered_false: BTreeSet<Ballot>,
    may_vote_true: BTreeSet<Ballot>,
    votes: BTreeMap<(Ballot, bool), NodeSet>,
    readies: BTreeMap<(Ballot, bool), NodeSet>,
    witness: BTreeMap<NodeId, BTreeSet<u32>>,
}

struct Checker {
    k: u32,
    i: NodeSet,
    views: BTreeMap<NodeId, Fbqs>,
    nodes: BTreeMap<NodeId, AbstractNode>,
    sent: BTreeMap<(NodeId, NodeId), BTreeSet<Key>>,
}

impl Checker {
    fn step(&mut self, e: &SimEvent) -> Result<(), String> {
        let Some(v) = e.node else {
            return Ok(());
        };
        if !self.i.contains(v) {
            return Err("event of a node outside the intact set".into());
        }
        let k = self.k;
        let view = &self.views[&v];
        let st = self.nodes.entry(v).or_default();
        if st.decided && !matches!(e.kind, EventKind::Receive { .. }) {
            return Err(format!("`{}` after decide", e.kind.name()));
        }
        match &e.kind {
            EventKind::Propose(x) => {
                if st.proposed {
                    return Err("second propose".into());
                }
                st.proposed = true;
                st.candidate = Ballot::Round { n: 1, x: *x };
                st.owes_abort_votes = true;
            }
            EventKind::VoteBatch {
                ballots,
                value: false,
            } => {
                if !st.owes_abort_votes {
                    return Err("false votes without a propose or timeout".into());
                }
                let want = lic_set(st.candidate, k);
                if *ballots != want {
                    return Err(format!(
                        "false votes on {ballots:?}, expected the ballots below and incompatible with {}",
                        st.candidate
                    ));
                }
                st.owes_abort_votes = false;
                for b in ballots {
                    st.voted.entry(*b).or_insert(false);
                }
            }
            EventKind::VoteBatch {
                ballots,
                value: true,
            } => {
                for b in ballots {
                    if !st.may_vote_true.remove(b) {
                        return Err(format!("true vote on {b}, which was not newly prepared at or above the candidate"));
                    }
                    if st.voted.contains_key(b) {
                        return Err(format!("true vote on {b}, already voted"));
                    }
                    st.voted.insert(*b, true);
                }
            }
            EventKind::DeliverBatch { ballots, value } => {
                for b in ballots {
                    if st.delivered.contains_key(b) {
                        return Err(format!("{b} delivered twice"));
                    }
                    let readies = st.readies.get(&(*b, *value)).copied().unwrap_or_default();
                    if !view.has_quorum_with(v, readies) {
                        return Err(format!("delivered {b} {value} without a quorum of READY"));
                    }
                    st.delivered.insert(*b, *value);
                    if !*value {
                        st.delivered_false.insert(*b);
                        for p in preparable(&st.delivered_false, k) {
                            if p <= st.prepared {
                                continue;
                            }
                            st.prepared = p;
                            if st.candidate <= p {
                                st.candidate = p;
                                st.may_vote_true.insert(p);
                            }
                        }
                    }
                }
            }
            EventKind::Decide(x) => {
                let ok = st
                    .delivered
                    .iter()
                    .any(|(b, a)| *a && b.value() == Some(*x));
                if !ok {
                    return Err(format!("decide {x} without a delivered commit"));
                }
                st.decided = true;
                st.armed = false;
            }
            EventKind::StartTimer(n) => {
                if *n <= st.round {
                    return Err(format!("timer for round {n} at round {}", st.round));
                }
                let eligible: NodeSet = st
                    .witness
                    .iter()
                    .filter(|(_, w)| w.last().is_some_and(|m| m >= n))
                    .map(|(u, _)| *u)
                    .collect();
                let q = view.greatest_quorum_within(eligible);
                if !q.contains(v) {
                    return Err(format!("no quorum containing the node witnesses round {n}"));
                }
                if !q.iter().any(|u| st.witness[&u].contains(n)) {
                    return Err(format!("round {n} is not a round witnessed by the quorum"));
                }
                st.round = *n;
                st.armed = true;
            }
            EventKind::Timeout => {
                if !st.armed {
                    return Err("timeout without a running timer".into());
                }
                st.armed = false;
                if let Some(x) = st.prepared.value().or(st.candidate.value()) {
                    st.candidate = Ballot::Round { n: st.round + 1, x };
                    st.owes_abort_votes = true;
                }
            }
            EventKind::Send {
                peer,
                msg: Message::Batch(ms),
            } => {
                for m in ms {
                    match m.kind {
                        FvKind::Vote => {
                            if st.voted.get(&m.tag) != Some(&m.value) {
                                return Err(format!(
                                    "sent VOTE {} {} without voting it",
                                    m.tag, m.value
                                ));
                            }
                        }
                        FvKind::Ready => match st.readied.get(&m.tag) {
                            Some(a) if *a == m.value => {}
                            Some(_) => {
                                return Err(format!("sent READY {} both ways", m.tag));
                            }
                            None => {
                                let votes =
                                    st.votes.get(&(m.tag, m.value)).copied().unwrap_or_default();
                                let readies = st
                                    .readies
                                    .get(&(m.tag, m.value))
                                    .copied()
                                    .unwrap_or_default();
                                if !view.has_quorum_with(v, votes)
                                    && !view.is_v_blocking(v, readies)
                                {
                                    return Err(format!(
                                        "sent READY {} {} without a voting quorum or a blocking set of READY",
                                        m.tag, m.value
                                    ));
                                }
                                st.readied.insert(m.tag, m.value);
                            }
                        },
                    }
                }
                self.sent
                    .entry((v, *peer))
                    .or_default()
                    .extend(ms.iter().map(key));
            }
            EventKind::Receive {
                peer,
                msg: Message::Batch(ms),
            } => {
                let u = *peer;
                if self.i.contains(u) {
                    let sent = self.sent.get(&(u, v));
                    if let Some(m) = ms
                        .iter()
                        .find(|m| !sent.is_some_and(|s| s.contains(&key(m))))
                    {
                        return Err(format!(
                            "received {} {} {} from {u}, which never sent it",
                            m.kind.as_str(),
                            m.tag,
                            m.value
                        ));
                    }
                }
                if st.decided {
                    return Ok(());
                }
                for m in ms {
                    let w = if m.value {
                        m.tag.round()
                    } else {
                        m.tag.succ(k).round()
                    };
                    st.witness.entry(u).or_default().insert(w);
                    let map = match m.kind {
                        FvKind::Vote => &mut st.votes,
                        FvKind::Ready => &mut st.readies,
                    };
                    map.entry((m.tag, m.value)).or_default().insert(u);
                }
            }
            other => {
                return Err(format!(
                    "`{}` is not an abstract consensus event",
                    other.name()
                ))
            }
        }
        Ok(())
    }
}

/// Replays `abstract_trace` against the abstract protocol for the nodes of
/// `i`, each using its own view. Messages from nodes outside `i` are taken
/// as given.
pub fn check_abstract(
    abstract_trace: &Trace,
    scenario: &Scenario,
    i: NodeSet,
) -> Result<(), Violation> {
    let mut c = Checker {
        k: scenario.values,
        i,
        views: i.iter().map(|v| (v, scenario.view(v))).collect(),
        nodes: BTreeMap::new(),
        sent: BTreeMap::new(),
    };
    for e in &abstract_trace.events {
        c.step(e).map_err(|msg| Violation {
            seq: e.seq,
            node: e.node.unwrap_or(NodeId(0)),
            msg,
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error("mapping failed at concrete {0}")]
    Sigma(#[from] SigmaError),
    #[error("not an abstract execution: {0}")]
    Abstract(#[from] Violation),
}

#[derive(Debug, Clone)]
pub struct SetRefinement {
    pub set: NodeSet,
    pub abstract_trace: Trace,
    pub outcome: Result<(), RefineError>,
    pub history_equal: bool,
}

impl SetRefinement {
    pub fn ok(&self) -> bool {
        self.outcome.is_ok() && self.history_equal
    }
}

#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub sets: Vec<SetRefinement>,
}

impl RefinementReport {
    pub fn ok(&self) -> bool {
        self.sets.iter().all(SetRefinement::ok)
    }
}

impl fmt::Display for RefinementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sets {
            let status = match (&s.outcome, s.history_equal) {
                (Ok(()), true) => "ok".to_string(),
                (Ok(()), false) => "FAIL history differs".to_string(),
                (Err(e), _) => format!("FAIL {e}"),
            };
            writeln!(
                f,
                "intact {} abstract-events {} {status}",
                s.set,
                s.abstract_trace.events.len()
            )?;
        }
        Ok(())
    }
}

/// Checks the refinement for every maximal intact set of the scenario.
pub fn refinement_report(
    concrete: &Trace,
    scenario: &Scenario,
) -> Result<RefinementReport, FbqsError> {
    let sets = scenario.subjective()?.maximal_intact_sets()?;
    let sets = sets
        .into_iter()
        .map(|i| {
            let proj = project(concrete, i);
            match sigma(&proj, scenario.values) {
                Ok(abs) => {
                    let outcome = check_abstract(&abs, scenario, i).map_err(RefineError::from);
                    let history_equal = history(&proj) == history(&abs);
                    SetRefinement {
                        set: i,
                        abstract_trace: abs,
                        outcome,
                        history_equal,
                    }
                }
                Err(e) => SetRefinement {
                    set: i,
                    abstract_trace: Trace::default(),
                    outcome: Err(e.into()),
                    history_equal: false,
                },
            }
        })
        .collect();
    Ok(RefinementReport { sets })
}

/// Value each node of the abstract trace decided, if any.
pub fn decisions(trace: &Trace) -> BTreeMap<NodeId, Value> {
    trace
        .events
        .iter()
        .filter_map(|e| match (e.node, &e.kind) {
            (Some(v), EventKind::Decide(x)) => Some((v, *x)),
            _ => None,
        })
        .collect()
}
