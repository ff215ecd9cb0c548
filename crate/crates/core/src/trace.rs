//! Trace events and their line-oriented text form.
//!
//! One event per line: `seq time node kind payload...`. The node column is
//! `-` for simulator events that belong to no node. The text form is the
//! input to the trace digest, so it must stay byte-stable.

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ballot::{format_ballot_list, parse_ballot_list, Ballot, Value};
use crate::bv::{BvMessage, Phase, Statement};
use crate::fbqs::NodeId;
use crate::fv::{FvKind, FvMessage};

/// A message of the per-ballot federated voting layer.
pub type BallotMsg = FvMessage<Ballot, bool>;

/// A message of single-instance federated voting, tagged by instance number.
pub type TagMsg = FvMessage<u32, bool>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    Fv(TagMsg),
    Bv(BvMessage),
    Batch(Vec<BallotMsg>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Quiescent,
    MaxTime,
}

impl EndReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EndReason::Quiescent => "quiescent",
            EndReason::MaxTime => "max-time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Propose(Value),
    Decide(Value),
    StartTimer(u32),
    Timeout,
    Crash,
    Stop,
    Vote { tag: u32, value: bool },
    Deliver { tag: u32, value: bool },
    Prepare(Ballot),
    Commit(Ballot),
    Prepared(Ballot),
    Committed(Ballot),
    VoteBatch { ballots: Vec<Ballot>, value: bool },
    DeliverBatch { ballots: Vec<Ballot>, value: bool },
    Send { peer: NodeId, msg: Message },
    Receive { peer: NodeId, msg: Message },
    End(EndReason),
}

impl EventKind {
    pub fn is_network(&self) -> bool {
        matches!(self, EventKind::Send { .. } | EventKind::Receive { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Propose(_) => "propose",
            EventKind::Decide(_) => "decide",
            EventKind::StartTimer(_) => "start-timer",
            EventKind::Timeout => "timeout",
            EventKind::Crash => "crash",
            EventKind::Stop => "stop",
            EventKind::Vote { .. } => "vote",
            EventKind::Deliver { .. } => "deliver",
            EventKind::Prepare(_) => "prepare",
            EventKind::Commit(_) => "commit",
            EventKind::Prepared(_) => "prepared",
            EventKind::Committed(_) => "committed",
            EventKind::VoteBatch { .. } => "vote-batch",
            EventKind::DeliverBatch { .. } => "deliver-batch",
            EventKind::Send {
                msg: Message::Batch(_),
                ..
            } => "send-batch",
            EventKind::Send { .. } => "send",
            EventKind::Receive {
                msg: Message::Batch(_),
                ..
            } => "receive-batch",
            EventKind::Receive { .. } => "receive",
            EventKind::End(_) => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub seq: u64,
    pub time: u64,
    pub node: Option<NodeId>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn format_batch(msgs: &[BallotMsg]) -> String {
    let parts: Vec<String> = msgs
        .iter()
        .map(|m| format!("{}({},{})", m.kind.as_str(), m.tag, bool_str(m.value)))
        .collect();
    format!("[{}]", parts.join(";"))
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Fv(m) => write!(f, "{} t{} {}", m.kind.as_str(), m.tag, bool_str(m.value)),
            Message::Bv(m) => write!(
                f,
                "{} {} {}",
                m.kind.as_str(),
                m.stmt.phase.as_str(),
                m.stmt.ballot
            ),
            Message::Batch(ms) => f.write_str(&format_batch(ms)),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.name();
        match self {
            EventKind::Propose(x) | EventKind::Decide(x) => write!(f, "{name} {x}"),
            EventKind::StartTimer(n) => write!(f, "{name} {n}"),
            EventKind::Timeout | EventKind::Crash | EventKind::Stop => f.write_str(name),
            EventKind::Vote { tag, value } | EventKind::Deliver { tag, value } => {
                write!(f, "{name} t{tag} {}", bool_str(*value))
            }
            EventKind::Prepare(b)
            | EventKind::Commit(b)
            | EventKind::Prepared(b)
            | EventKind::Committed(b) => write!(f, "{name} {b}"),
            EventKind::VoteBatch { ballots, value }
            | EventKind::DeliverBatch { ballots, value } => {
                write!(
                    f,
                    "{name} {} {}",
                    format_ballot_list(ballots),
                    bool_str(*value)
                )
            }
            EventKind::Send { peer, msg } | EventKind::Receive { peer, msg } => {
                write!(f, "{name} {peer} {msg}")
            }
            EventKind::End(EndReason::Quiescent) => write!(f, "{name} quiescent"),
            EventKind::End(EndReason::MaxTime) => write!(f, "{name} max-time"),
        }
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(v) => write!(f, "{} {} {} {}", self.seq, self.time, v, self.kind),
            None => write!(f, "{} {} - {}", self.seq, self.time, self.kind),
        }
    }
}

impl Trace {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the text form, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            events.push(parse_event(line).map_err(|msg| TraceError { line: i + 1, msg })?);
        }
        Ok(Trace { events })
    }

    /// Events of node `v`, in order.
    pub fn of_node(&self, v: NodeId) -> impl Iterator<Item = &SimEvent> {
        self.events.iter().filter(move |e| e.node == Some(v))
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.events.iter().rev().find_map(|e| match e.kind {
            EventKind::End(r) => Some(r),
            _ => None,
        })
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn parse_kind(s: &str) -> Result<FvKind, String> {
    match s {
        "VOTE" => Ok(FvKind::Vote),
        "READY" => Ok(FvKind::Ready),
        _ => Err(format!("expected VOTE or READY, got {s:?}")),
    }
}

fn parse_tag(s: &str) -> Result<u32, String> {
    s.strip_prefix('t')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| format!("bad tag {s:?}"))
}

fn parse_value(s: &str) -> Result<Value, String> {
    s.parse().map(Value).map_err(|_| format!("bad value {s:?}"))
}

fn parse_ballot(s: &str) -> Result<Ballot, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Parses `[VOTE(<0:_>,false);READY(<1:1>,true)]`.
pub fn parse_batch(s: &str) -> Result<Vec<BallotMsg>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("bad batch {s:?}"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(';')
        .map(|part| {
            let (kind, rest) = part
                .split_once('(')
                .ok_or_else(|| format!("bad batch item {part:?}"))?;
            let rest = rest
                .strip_suffix(')')
                .ok_or_else(|| format!("bad batch item {part:?}"))?;
            let (b, v) = rest
                .rsplit_once(',')
                .ok_or_else(|| format!("bad batch item {part:?}"))?;
            Ok(FvMessage {
                kind: parse_kind(kind)?,
                tag: parse_ballot(b)?,
                value: parse_bool(v)?,
            })
        })
        .collect()
}

/// Parses the message part of a `send`/`receive` payload.
pub fn parse_message(fields: &[&str]) -> Result<Message, String> {
    match fields {
        [batch] if batch.starts_with('[') => Ok(Message::Batch(parse_batch(batch)?)),
        [kind, tag, value] if tag.starts_with('t') => Ok(Message::Fv(FvMessage {
            kind: parse_kind(kind)?,
            tag: parse_tag(tag)?,
            value: parse_bool(value)?,
        })),
        [kind, phase, ballot] => Ok(Message::Bv(BvMessage {
            kind: parse_kind(kind)?,
            stmt: Statement {
                phase: Phase::parse(phase).ok_or_else(|| format!("bad phase {phase:?}"))?,
                ballot: parse_ballot(ballot)?,
            },
        })),
        _ => Err(format!("bad message {:?}", fields.join(" "))),
    }
}

fn parse_event(line: &str) -> Result<SimEvent, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err("expected at least 4 fields".into());
    }
    let seq = fields[0]
        .parse()
        .map_err(|_| format!("bad seq {:?}", fields[0]))?;
    let time = fields[1]
        .parse()
        .map_err(|_| format!("bad time {:?}", fields[1]))?;
    let node = match fields[2] {
        "-" => None,
        s => Some(s.parse::<NodeId>().map_err(|e| e.to_string())?),
    };
    let args = &fields[4..];
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!(
                "{} takes {n} fields, got {}",
                fields[3],
                args.len()
            ))
        }
    };
    let kind = match fields[3] {
        "propose" => {
            arity(1)?;
            EventKind::Propose(parse_value(args[0])?)
        }
        "decide" => {
            arity(1)?;
            EventKind::Decide(parse_value(args[0])?)
        }
        "start-timer" => {
            arity(1)?;
            EventKind::StartTimer(
                args[0]
                    .parse()
                    .map_err(|_| format!("bad round {:?}", args[0]))?,
            )
        }
        "timeout" => {
            arity(0)?;
            EventKind::Timeout
        }
        "crash" => {
            arity(0)?;
            EventKind::Crash
        }
        "stop" => {
            arity(0)?;
            EventKind::Stop
        }
        "vote" | "deliver" => {
            arity(2)?;
            let tag = parse_tag(args[0])?;
            let value = parse_bool(args[1])?;
            if fields[3] == "vote" {
                EventKind::Vote { tag, value }
            } else {
                EventKind::Deliver { tag, value }
            }
        }
        "prepare" | "commit" | "prepared" | "committed" => {
            arity(1)?;
            let b = parse_ballot(args[0])?;
            match fields[3] {
                "prepare" => EventKind::Prepare(b),
                "commit" => EventKind::Commit(b),
                "prepared" => EventKind::Prepared(b),
                _ => EventKind::Committed(b),
            }
        }
        "vote-batch" | "deliver-batch" => {
            arity(2)?;
            let ballots = parse_ballot_list(args[0]).map_err(|e| e.to_string())?;
            let value = parse_bool(args[1])?;
            if fields[3] == "vote-batch" {
                EventKind::VoteBatch { ballots, value }
            } else {
                EventKind::DeliverBatch { ballots, value }
            }
        }
        "send" | "receive" | "send-batch" | "receive-batch" => {
            if args.is_empty() {
                return Err(format!("{} needs a peer", fields[3]));
            }
            let peer = args[0].parse::<NodeId>().map_err(|e| e.to_string())?;
            let msg = parse_message(&args[1..])?;
            let batch = matches!(msg, Message::Batch(_));
            if batch != fields[3].ends_with("-batch") {
                return Err(format!("{} does not match its payload", fields[3]));
            }
            if fields[3].starts_with("send") {
                EventKind::Send { peer, msg }
            } else {
                EventKind::Receive { peer, msg }
            }
        }
        "end" => {
            arity(1)?;
            match args[0] {
                "quiescent" => EventKind::End(EndReason::Quiescent),
                "max-time" => EventKind::End(EndReason::MaxTime),
                s => return Err(format!("bad end reason {s:?}")),
            }
        }
        other => return Err(format!("unknown event kind {other:?}")),
    };
    Ok(SimEvent {
        seq,
        time,
        node,
        kind,
    })
}
