//! Property verdicts over a finished trace.
//!
//! Safety properties are decided on any trace. Liveness properties are only
//! decided on traces that ended quiescent; a run cut off at its time limit
//! yields `Inconclusive` for them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ascp::preparable;
use crate::ballot::{Ballot, Value};
use crate::bv::Phase;
use crate::fbqs::{FbqsError, NodeId, NodeSet};
use crate::fv::FvKind;
use crate::scenario::{ProtocolKind, Scenario};
use crate::trace::{EndReason, EventKind, Message, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Inconclusive => "inconclusive",
            Status::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub property: &'static str,
    pub status: Status,
    pub detail: String,
    /// Sequence numbers of the events that witness a failure.
    pub witnesses: Vec<u64>,
}

impl Verdict {
    fn pass(property: &'static str, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            status: Status::Pass,
            detail: detail.into(),
            witnesses: Vec::new(),
        }
    }

    fn fail(property: &'static str, detail: impl Into<String>, witnesses: Vec<u64>) -> Self {
        Verdict {
            property,
            status: Status::Fail,
            detail: detail.into(),
            witnesses,
        }
    }

    fn with(property: &'static str, status: Status, detail: impl Into<String>) -> Self {
        Verdict {
            property,
            status,
            detail: detail.into(),
            witnesses: Vec::new(),
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {:<12} {}",
            self.property,
            self.status.as_str(),
            self.detail
        )?;
        if !self.witnesses.is_empty() {
            let seqs: Vec<String> = self.witnesses.iter().map(u64::to_string).collect();
            write!(f, " (seq {})", seqs.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub intact_sets: Vec<NodeSet>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn get(&self, property: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.property == property)
    }

    /// No verdict failed.
    pub fn ok(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| v.status == Status::Fail)
    }
}

/// Checks every property relevant to the scenario's protocol.
pub fn check(scenario: &Scenario, trace: &Trace) -> Result<Report, FbqsError> {
    let sub = scenario.subjective()?;
    let intact = sub.maximal_intact_sets()?;
    let mut verdicts = network_verdicts(scenario, trace);
    match scenario.protocol {
        ProtocolKind::Fv => verdicts.extend(fv_verdicts(scenario, trace, &intact, &|a, b| {
            sub.intertwined(a, b)
        })?),
        ProtocolKind::Ascp | ProtocolKind::Cscp => {
            verdicts.extend(consensus_verdicts(scenario, trace, &intact));
            verdicts.push(match scenario.protocol {
                ProtocolKind::Ascp => abstract_lemmas(scenario, trace, &intact),
                _ => concrete_lemmas(scenario, trace, &intact),
            });
        }
    }
    Ok(Report {
        intact_sets: intact,
        verdicts,
    })
}

fn quiescent(trace: &Trace) -> bool {
    trace.end_reason() == Some(EndReason::Quiescent)
}

fn network_verdicts(scenario: &Scenario, trace: &Trace) -> Vec<Verdict> {
    let mut out = Vec::new();

    let mut order = Verdict::pass("trace-order", "sequence numbers and times are monotone");
    for (i, w) in trace.events.windows(2).enumerate() {
        if w[1].seq <= w[0].seq || w[1].time < w[0].time {
            order = Verdict::fail(
                "trace-order",
                format!("event {} goes backwards", i + 1),
                vec![w[0].seq, w[1].seq],
            );
            break;
        }
    }
    if let Some(first) = trace.events.first() {
        if first.seq != 0 && order.status == Status::Pass {
            order = Verdict::fail(
                "trace-order",
                "sequence numbers do not start at 0",
                vec![first.seq],
            );
        }
    }
    out.push(order);

    // Match each receive with the earliest unmatched identical send.
    let mut pending: BTreeMap<(NodeId, NodeId, String), Vec<(u64, u64)>> = BTreeMap::new();
    let mut forged = None;
    let mut late = None;
    let delta = scenario.timing.delta;
    let gst = scenario.timing.gst;
    let mut stopped: BTreeMap<NodeId, u64> = BTreeMap::new();
    for e in &trace.events {
        let Some(v) = e.node else { continue };
        match &e.kind {
            EventKind::Send { peer, msg } => {
                pending
                    .entry((v, *peer, msg.to_string()))
                    .or_default()
                    .push((e.seq, e.time));
            }
            EventKind::Receive { peer, msg } => {
                let q = pending.get_mut(&(*peer, v, msg.to_string()));
                match q.filter(|q| !q.is_empty()) {
                    Some(q) => {
                        let (sseq, stime) = q.remove(0);
                        if stime >= gst && e.time - stime > delta && late.is_none() {
                            late = Some((sseq, e.seq, e.time - stime));
                        }
                    }
                    None => {
                        if forged.is_none() {
                            forged = Some(e.seq);
                        }
                    }
                }
            }
            EventKind::Crash | EventKind::Stop => {
                stopped.entry(v).or_insert(e.seq);
            }
            _ => {}
        }
    }
    out.push(match forged {
        None => Verdict::pass("no-forgery", "every receive matches an earlier send"),
        Some(s) => Verdict::fail("no-forgery", "receive without a matching send", vec![s]),
    });
    let lost: Vec<u64> = pending
        .iter()
        .filter(|((_, to, _), _)| !stopped.contains_key(to))
        .flat_map(|(_, q)| q.iter().map(|(s, _)| *s))
        .collect();
    out.push(if lost.is_empty() {
        Verdict::pass("perfect-links", "every message to a live node arrived once")
    } else if quiescent(trace) {
        let mut w = lost;
        w.sort();
        w.truncate(5);
        Verdict::fail("perfect-links", "messages to live nodes never arrived", w)
    } else {
        Verdict::with(
            "perfect-links",
            Status::Inconclusive,
            format!("{} messages in flight at the time limit", lost.len()),
        )
    });
    out.push(match late {
        None => Verdict::pass(
            "post-gst-delay",
            format!("post-GST messages arrived within {delta}"),
        ),
        Some((s, r, d)) => Verdict::fail(
            "post-gst-delay",
            format!("delivered after {d} > {delta}"),
            vec![s, r],
        ),
    });
    out
}

fn in_any(intact: &[NodeSet], v: NodeId) -> Option<NodeSet> {
    intact.iter().copied().find(|i| i.contains(v))
}

fn consensus_verdicts(scenario: &Scenario, trace: &Trace, intact: &[NodeSet]) -> Vec<Verdict> {
    let correct = scenario.correct();
    let mut decides: BTreeMap<NodeId, Vec<(u64, Value)>> = BTreeMap::new();
    let mut proposed: BTreeSet<Value> = BTreeSet::new();
    for e in &trace.events {
        match (&e.kind, e.node) {
            (EventKind::Decide(x), Some(v)) => decides.entry(v).or_default().push((e.seq, *x)),
            (EventKind::Propose(x), Some(v)) if scenario.honest().contains(v) => {
                proposed.insert(*x);
            }
            _ => {}
        }
    }
    let mut out = Vec::new();

    out.push(
        match decides
            .iter()
            .find(|(v, ds)| correct.contains(**v) && ds.len() > 1)
        {
            None => Verdict::pass("integrity", "no correct node decided twice"),
            Some((v, ds)) => Verdict::fail(
                "integrity",
                format!("{v} decided {} times", ds.len()),
                ds.iter().map(|d| d.0).collect(),
            ),
        },
    );

    let mut agreement = Verdict::pass("agreement", "decisions agree within each intact set");
    'outer: for i in intact {
        let mut first: Option<(NodeId, u64, Value)> = None;
        for v in i.iter() {
            for (seq, x) in decides.get(&v).into_iter().flatten() {
                match first {
                    None => first = Some((v, *seq, *x)),
                    Some((u, s, y)) if y != *x => {
                        agreement = Verdict::fail(
                            "agreement",
                            format!("{u} decided {y} but {v} decided {x} in {i}"),
                            vec![s, *seq],
                        );
                        break 'outer;
                    }
                    _ => {}
                }
            }
        }
    }
    out.push(agreement);

    if !scenario.malicious().is_empty() {
        out.push(Verdict::with(
            "weak-validity",
            Status::NotApplicable,
            "malicious nodes present",
        ));
    } else {
        let honest_inputs = scenario.proposed_values(scenario.honest());
        let unanimous = match honest_inputs.split_first() {
            Some((x, rest)) if rest.iter().all(|y| y == x) => Some(*x),
            _ => None,
        };
        let mut v = Verdict::pass("weak-validity", "every decided value was proposed");
        for (node, ds) in &decides {
            if in_any(intact, *node).is_none() {
                continue;
            }
            for (seq, x) in ds {
                if let Some(u) = unanimous {
                    if *x != u {
                        v = Verdict::fail(
                            "weak-validity",
                            format!("{node} decided {x} though every node proposed {u}"),
                            vec![*seq],
                        );
                    }
                }
                if !proposed.contains(x) {
                    v = Verdict::fail(
                        "weak-validity",
                        format!("{node} decided unproposed {x}"),
                        vec![*seq],
                    );
                }
            }
        }
        out.push(v);
    }

    let undecided: Vec<NodeId> = intact
        .iter()
        .flat_map(|i| i.iter())
        .filter(|v| !decides.contains_key(v))
        .collect();
    out.push(if undecided.is_empty() {
        Verdict::pass("non-blocking", "every intact node decided")
    } else {
        let names: Vec<String> = undecided.iter().map(|v| v.to_string()).collect();
        let status = if quiescent(trace) {
            Status::Fail
        } else {
            Status::Inconclusive
        };
        Verdict::with(
            "non-blocking",
            status,
            format!("undecided: {}", names.join(",")),
        )
    });
    out
}

type Delivery = (u64, u64, bool);

fn fv_verdicts(
    scenario: &Scenario,
    trace: &Trace,
    intact: &[NodeSet],
    intertwined: &dyn Fn(NodeId, NodeId) -> Result<bool, FbqsError>,
) -> Result<Vec<Verdict>, FbqsError> {
    let correct = scenario.correct();
    // (node, tag) -> (seq, time, value) per delivery
    let mut delivers: BTreeMap<(NodeId, u32), Vec<Delivery>> = BTreeMap::new();
    let mut votes: BTreeMap<(NodeId, u32), bool> = BTreeMap::new();
    for e in &trace.events {
        match (&e.kind, e.node) {
            (EventKind::Deliver { tag, value }, Some(v)) => delivers
                .entry((v, *tag))
                .or_default()
                .push((e.seq, e.time, *value)),
            (EventKind::Vote { tag, value }, Some(v)) => {
                votes.entry((v, *tag)).or_insert(*value);
            }
            _ => {}
        }
    }
    let tags: BTreeSet<u32> = delivers
        .keys()
        .chain(votes.keys())
        .map(|(_, t)| *t)
        .collect();
    let mut out = Vec::new();

    out.push(
        match delivers
            .iter()
            .find(|((v, _), ds)| correct.contains(*v) && ds.len() > 1)
        {
            None => Verdict::pass("no-duplication", "no correct node delivered twice"),
            Some(((v, t), ds)) => Verdict::fail(
                "no-duplication",
                format!("{v} delivered tag t{t} {} times", ds.len()),
                ds.iter().map(|d| d.0).collect(),
            ),
        },
    );

    let first = |v: NodeId, t: u32| delivers.get(&(v, t)).and_then(|d| d.first()).copied();

    let mut totality = Verdict::pass("totality", "deliveries spread to whole intact sets");
    let mut spread = Vec::new();
    for i in intact {
        for t in &tags {
            let got: Vec<(NodeId, u64)> = i
                .iter()
                .filter_map(|v| first(v, *t).map(|d| (v, d.1)))
                .collect();
            if got.is_empty() {
                continue;
            }
            if got.len() < i.len() {
                let status = if quiescent(trace) {
                    Status::Fail
                } else {
                    Status::Inconclusive
                };
                totality = Verdict::with(
                    "totality",
                    status,
                    format!("only {} of {i} delivered t{t}", got.len()),
                );
            } else {
                let lo = got.iter().map(|g| g.1).min().unwrap_or(0);
                let hi = got.iter().map(|g| g.1).max().unwrap_or(0);
                spread.push(format!("{i}:{}", hi - lo));
            }
        }
    }
    if totality.status == Status::Pass && !spread.is_empty() {
        totality.detail = format!("delivery spread per intact set {}", spread.join(" "));
    }
    out.push(totality);

    let mut consistency =
        Verdict::pass("consistency", "intertwined nodes delivered the same value");
    'outer: for t in &tags {
        for a in correct.iter() {
            for b in correct.iter().filter(|b| *b > a) {
                if let (Some(da), Some(db)) = (first(a, *t), first(b, *t)) {
                    if da.2 != db.2 && intertwined(a, b)? {
                        consistency = Verdict::fail(
                            "consistency",
                            format!("intertwined {a} and {b} delivered different values for t{t}"),
                            vec![da.0, db.0],
                        );
                        break 'outer;
                    }
                }
            }
        }
    }
    out.push(consistency);

    let mut validity = Verdict::pass("validity", "unanimous intact sets delivered their vote");
    for i in intact {
        for t in &tags {
            let vs: BTreeSet<bool> = i
                .iter()
                .filter_map(|v| votes.get(&(v, *t)).copied())
                .collect();
            let all_voted = i.iter().all(|v| votes.contains_key(&(v, *t)));
            if !(all_voted && vs.len() == 1) {
                continue;
            }
            let a = *vs.iter().next().expect("one vote value");
            for v in i.iter() {
                match first(v, *t) {
                    Some(d) if d.2 != a => {
                        validity = Verdict::fail(
                            "validity",
                            format!("{v} delivered {} after {i} voted {a}", d.2),
                            vec![d.0],
                        );
                    }
                    None if validity.status == Status::Pass => {
                        let status = if quiescent(trace) {
                            Status::Fail
                        } else {
                            Status::Inconclusive
                        };
                        validity =
                            Verdict::with("validity", status, format!("{v} never delivered"));
                    }
                    _ => {}
                }
            }
        }
    }
    out.push(validity);
    Ok(out)
}

/// Prepare-before-commit and no-cross over an abstract trace, where a node
/// has prepared `b` once it delivered `false` for every ballot below and
/// incompatible with `b`.
fn abstract_lemmas(scenario: &Scenario, trace: &Trace, intact: &[NodeSet]) -> Verdict {
    let k = scenario.values;
    let members: NodeSet = intact.iter().fold(NodeSet::EMPTY, |a, i| a.union(*i));
    let mut delivered: BTreeMap<NodeId, BTreeSet<Ballot>> = BTreeMap::new();
    let mut prepared: BTreeMap<NodeId, Vec<(Ballot, u64)>> = BTreeMap::new();
    let mut ready_true: Vec<(NodeId, Ballot, u64)> = Vec::new();
    for e in &trace.events {
        let Some(v) = e.node.filter(|v| members.contains(*v)) else {
            continue;
        };
        let set_of = in_any(intact, v).expect("member");
        match &e.kind {
            EventKind::DeliverBatch {
                ballots,
                value: false,
            } => {
                let d = delivered.entry(v).or_default();
                d.extend(ballots.iter().copied());
                let p = prepared.entry(v).or_default();
                for b in preparable(d, k) {
                    if !p.iter().any(|(x, _)| *x == b) {
                        p.push((b, e.seq));
                    }
                }
            }
            EventKind::DeliverBatch {
                ballots,
                value: true,
            } => {
                for b in ballots {
                    let ok = set_of.iter().any(|w| {
                        prepared
                            .get(&w)
                            .is_some_and(|p| p.iter().any(|(x, _)| x == b))
                    });
                    if !ok {
                        return Verdict::fail(
                            "prepare-before-commit",
                            format!("{v} committed {b} before any node of {set_of} prepared it"),
                            vec![e.seq],
                        );
                    }
                }
            }
            EventKind::Send {
                msg: Message::Batch(ms),
                ..
            } => {
                for m in ms {
                    if m.kind == FvKind::Ready && m.value {
                        ready_true.push((v, m.tag, e.seq));
                    }
                }
            }
            _ => {}
        }
    }
    for (v2, b2, s2) in &ready_true {
        let set_of = in_any(intact, *v2).expect("member");
        for w in set_of.iter() {
            for (b1, s1) in prepared.get(&w).into_iter().flatten() {
                if b2.lic(*b1) {
                    return Verdict::fail(
                        "no-cross",
                        format!("{w} prepared {b1} and {v2} readied commit of {b2}"),
                        vec![*s1, *s2],
                    );
                }
            }
        }
    }
    Verdict::pass("ballot-lemmas", "prepare-before-commit and no-cross hold")
}

/// The same lemmas over a concrete trace: `prepared(b)` at a node covers
/// every ballot whose incompatible predecessors lie below `b`.
fn concrete_lemmas(scenario: &Scenario, trace: &Trace, intact: &[NodeSet]) -> Verdict {
    let k = scenario.values;
    let members: NodeSet = intact.iter().fold(NodeSet::EMPTY, |a, i| a.union(*i));
    let mut prepared: BTreeMap<NodeId, Vec<(Ballot, u64)>> = BTreeMap::new();
    let mut ready_true: Vec<(NodeId, Ballot, u64)> = Vec::new();
    for e in &trace.events {
        let Some(v) = e.node.filter(|v| members.contains(*v)) else {
            continue;
        };
        let set_of = in_any(intact, v).expect("member");
        match &e.kind {
            EventKind::Prepared(b) => prepared.entry(v).or_default().push((*b, e.seq)),
            EventKind::Committed(b) => {
                let ok = set_of.iter().any(|w| {
                    prepared.get(&w).is_some_and(|p| {
                        p.iter().any(|(x, _)| crate::ballot::prep_covers(*x, *b, k))
                    })
                });
                if !ok {
                    return Verdict::fail(
                        "prepare-before-commit",
                        format!("{v} committed {b} before any node of {set_of} prepared it"),
                        vec![e.seq],
                    );
                }
            }
            EventKind::Send {
                msg: Message::Bv(m),
                ..
            } if m.kind == FvKind::Ready && m.stmt.phase == Phase::Cmt => {
                ready_true.push((v, m.stmt.ballot, e.seq));
            }
            _ => {}
        }
    }
    for (v2, b2, s2) in &ready_true {
        let set_of = in_any(intact, *v2).expect("member");
        for w in set_of.iter() {
            for (b1, s1) in prepared.get(&w).into_iter().flatten() {
                if b2.lic(*b1) {
                    return Verdict::fail(
                        "no-cross",
                        format!("{w} prepared {b1} and {v2} readied commit of {b2}"),
                        vec![*s1, *s2],
                    );
                }
            }
        }
    }
    Verdict::pass("ballot-lemmas", "prepare-before-commit and no-cross hold")
}
