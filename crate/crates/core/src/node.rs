//! The uniform interface the simulator drives: every protocol node turns an
//! input (start, message, timeout) into a list of outputs.

use crate::ascp::AscpNode;
use crate::ballot::Value;
use crate::cscp::CscpNode;
use crate::fbqs::{Fbqs, NodeId};
use crate::fv::{FvKind, FvMessage, FvState};
use crate::trace::{EventKind, Message};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    /// A protocol event to append to the trace.
    Event(EventKind),
    /// Send to every node of the universe, including the sender.
    Broadcast(Message),
    /// (Re)arm the node's timer for the given round.
    StartTimer(u32),
    /// The node stops taking protocol steps.
    Halt,
}

/// What a node starts with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Value(Value),
    Vote(bool),
}

/// Single-instance federated voting node with tag 0.
#[derive(Debug, Clone)]
pub struct FvNode {
    me: NodeId,
    view: Fbqs,
    state: FvState<bool>,
}

pub const FV_TAG: u32 = 0;

impl FvNode {
    pub fn new(me: NodeId, view: Fbqs) -> Self {
        FvNode {
            me,
            view,
            state: FvState::new(),
        }
    }

    pub fn state(&self) -> &FvState<bool> {
        &self.state
    }

    pub fn vote(&mut self, a: bool) -> Vec<Output> {
        if !self.state.vote(a) {
            return Vec::new();
        }
        vec![
            Output::Event(EventKind::Vote {
                tag: FV_TAG,
                value: a,
            }),
            Output::Broadcast(Message::Fv(FvMessage {
                kind: FvKind::Vote,
                tag: FV_TAG,
                value: a,
            })),
        ]
    }

    pub fn on_message(&mut self, from: NodeId, msg: &Message) -> Vec<Output> {
        let Message::Fv(m) = msg else {
            return Vec::new();
        };
        if m.tag != FV_TAG {
            return Vec::new();
        }
        let r = self
            .state
            .on_message(&self.view, self.me, from, m.kind, m.value);
        let mut out = Vec::new();
        if let Some(a) = r.ready {
            out.push(Output::Broadcast(Message::Fv(FvMessage {
                kind: FvKind::Ready,
                tag: FV_TAG,
                value: a,
            })));
        }
        if let Some(a) = r.deliver {
            out.push(Output::Event(EventKind::Deliver {
                tag: FV_TAG,
                value: a,
            }));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Node {
    Fv(FvNode),
    Ascp(AscpNode),
    Cscp(CscpNode),
}

impl Node {
    pub fn start(&mut self, input: Input) -> Vec<Output> {
        match (self, input) {
            (Node::Fv(n), Input::Vote(a)) => n.vote(a),
            (Node::Ascp(n), Input::Value(x)) => n.propose(x),
            (Node::Cscp(n), Input::Value(x)) => n.propose(x),
            _ => Vec::new(),
        }
    }

    pub fn on_message(&mut self, from: NodeId, msg: &Message) -> Vec<Output> {
        match self {
            Node::Fv(n) => n.on_message(from, msg),
            Node::Ascp(n) => match msg {
                Message::Batch(ms) => n.on_batch(from, ms),
                _ => Vec::new(),
            },
            Node::Cscp(n) => match msg {
                Message::Bv(m) => n.on_message(from, *m),
                _ => Vec::new(),
            },
        }
    }

    pub fn on_timeout(&mut self) -> Vec<Output> {
        match self {
            Node::Fv(_) => Vec::new(),
            Node::Ascp(n) => n.on_timeout(),
            Node::Cscp(n) => n.on_timeout(),
        }
    }
}
