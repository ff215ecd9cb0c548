//! Deterministic discrete-event simulator.
//!
//! Pending work sits in a priority queue ordered by `(time, insertion seq)`,
//! so a run is a pure function of the scenario and its seed. Links are
//! authenticated and reliable: a message reaches its recipient exactly once
//! unless the recipient has stopped. Before GST delays are drawn from
//! `1..=pre_gst_max` but never land later than `gst + delta`; from GST on
//! they are drawn from `1..=delta`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ascp::AscpNode;
use crate::ballot::Value;
use crate::cscp::CscpNode;
use crate::fbqs::{NodeId, NodeSet};
use crate::node::{FvNode, Input, Node, Output};
use crate::scenario::{Action, DelayMode, Fault, ProtocolKind, Scenario, Timing};
use crate::trace::{EndReason, EventKind, Message, SimEvent, Trace};

#[derive(Debug, Clone)]
enum Item {
    Start(NodeId, Input),
    Deliver {
        from: NodeId,
        to: NodeId,
        msg: Message,
    },
    Timer {
        node: NodeId,
        generation: u64,
    },
    Script {
        node: NodeId,
        index: usize,
    },
    Crash(NodeId),
}

#[derive(Debug, Clone)]
struct Queued {
    time: u64,
    order: u64,
    item: Item,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.order).cmp(&(other.time, other.order))
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    nodes: BTreeMap<NodeId, Node>,
    scripts: BTreeMap<NodeId, Vec<crate::scenario::ScriptAction>>,
    queue: BinaryHeap<Reverse<Queued>>,
    order: u64,
    now: u64,
    trace: Trace,
    rng: ChaCha8Rng,
    gst: u64,
    timer_generation: BTreeMap<NodeId, u64>,
    skew: BTreeMap<NodeId, i64>,
    rounds: BTreeMap<NodeId, u32>,
    stopped: NodeSet,
    halted: NodeSet,
    silenced: bool,
    decisions: BTreeMap<NodeId, (Value, u64)>,
    deliveries: BTreeMap<NodeId, (bool, u64)>,
    ended: Option<EndReason>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Simulation {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let universe = scenario.universe();
        let mut nodes = BTreeMap::new();
        let mut scripts = BTreeMap::new();
        let mut skew = BTreeMap::new();
        for v in universe.iter() {
            let s = scenario.timing.skew as i64;
            skew.insert(v, if s == 0 { 0 } else { rng.gen_range(-s..=s) });
            match scenario.faults.get(&v) {
                Some(Fault::Malicious { script }) => {
                    scripts.insert(v, script.clone());
                }
                _ => {
                    let view = scenario.view(v);
                    let node = match scenario.protocol {
                        ProtocolKind::Fv => Node::Fv(FvNode::new(v, view)),
                        ProtocolKind::Ascp => Node::Ascp(AscpNode::new(v, scenario.values, view)),
                        ProtocolKind::Cscp => Node::Cscp(CscpNode::new(v, scenario.values, view)),
                    };
                    nodes.insert(v, node);
                }
            }
        }
        let mut sim = Simulation {
            scenario: scenario.clone(),
            nodes,
            scripts,
            queue: BinaryHeap::new(),
            order: 0,
            now: 0,
            trace: Trace::default(),
            rng,
            gst: scenario.timing.gst,
            timer_generation: BTreeMap::new(),
            skew,
            rounds: BTreeMap::new(),
            stopped: NodeSet::EMPTY,
            halted: NodeSet::EMPTY,
            silenced: false,
            decisions: BTreeMap::new(),
            deliveries: BTreeMap::new(),
            ended: None,
        };
        for (v, f) in &scenario.faults {
            if let Fault::Crash { at } = f {
                sim.push(*at, Item::Crash(*v));
            }
        }
        for v in universe.iter() {
            if let Some(script) = sim.scripts.get(&v).cloned() {
                for (index, a) in script.iter().enumerate() {
                    sim.push(a.at, Item::Script { node: v, index });
                }
            } else if let Some(input) = scenario.proposals.get(&v) {
                sim.push(0, Item::Start(v, *input));
            }
        }
        sim
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Decided value and decision time per node.
    pub fn decisions(&self) -> &BTreeMap<NodeId, (Value, u64)> {
        &self.decisions
    }

    /// Delivered value and time per node, for federated voting runs.
    pub fn deliveries(&self) -> &BTreeMap<NodeId, (bool, u64)> {
        &self.deliveries
    }

    /// Latest timer round started by each node.
    pub fn rounds(&self) -> &BTreeMap<NodeId, u32> {
        &self.rounds
    }

    pub fn ended(&self) -> Option<EndReason> {
        self.ended
    }

    fn push(&mut self, time: u64, item: Item) {
        let order = self.order;
        self.order += 1;
        self.queue.push(Reverse(Queued { time, order, item }));
    }

    fn record(&mut self, node: Option<NodeId>, kind: EventKind) {
        match (&kind, node) {
            (EventKind::Decide(x), Some(v)) => {
                self.decisions.entry(v).or_insert((*x, self.now));
            }
            (EventKind::Deliver { value, .. }, Some(v)) => {
                self.deliveries.entry(v).or_insert((*value, self.now));
            }
            _ => {}
        }
        let seq = self.trace.events.len() as u64;
        self.trace.events.push(SimEvent {
            seq,
            time: self.now,
            node,
            kind,
        });
    }

    fn delay(&mut self) -> u64 {
        let t: &Timing = &self.scenario.timing;
        let (delta, pre) = (t.delta, t.pre_gst_max);
        match t.mode {
            DelayMode::Fixed => delta,
            DelayMode::Random if self.now >= self.gst => self.rng.gen_range(1..=delta),
            DelayMode::Random => {
                let d = self.rng.gen_range(1..=pre);
                (self.now + d).min(self.gst + delta) - self.now
            }
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Message, pinned: Option<u64>) {
        self.record(
            Some(from),
            EventKind::Send {
                peer: to,
                msg: msg.clone(),
            },
        );
        let d = match pinned {
            Some(d) => d.max(1),
            None => self.delay(),
        };
        self.push(self.now + d, Item::Deliver { from, to, msg });
    }

    fn apply(&mut self, v: NodeId, outputs: Vec<Output>) {
        for o in outputs {
            match o {
                Output::Event(e) => self.record(Some(v), e),
                Output::Broadcast(msg) => {
                    for u in self.scenario.universe().iter() {
                        self.send(v, u, msg.clone(), None);
                    }
                }
                Output::StartTimer(r) => {
                    self.record(Some(v), EventKind::StartTimer(r));
                    self.rounds.insert(v, r);
                    let generation = self.bump_timer(v);
                    let len = self.scenario.timing.timeout(r) as i128 + self.skew[&v] as i128;
                    let len = len.clamp(1, u64::MAX as i128) as u64;
                    self.push(
                        self.now.saturating_add(len),
                        Item::Timer {
                            node: v,
                            generation,
                        },
                    );
                }
                Output::Halt => {
                    self.halted.insert(v);
                    self.bump_timer(v);
                }
            }
        }
    }

    fn bump_timer(&mut self, v: NodeId) -> u64 {
        let g = self.timer_generation.entry(v).or_insert(0);
        *g += 1;
        *g
    }

    fn step(&mut self, item: Item) {
        match item {
            Item::Start(v, input) => {
                if self.stopped.contains(v) {
                    return;
                }
                if let Some(n) = self.nodes.get_mut(&v) {
                    let out = n.start(input);
                    self.apply(v, out);
                }
            }
            Item::Deliver { from, to, msg } => {
                if self.stopped.contains(to) {
                    return;
                }
                self.record(
                    Some(to),
                    EventKind::Receive {
                        peer: from,
                        msg: msg.clone(),
                    },
                );
                if self.halted.contains(to) {
                    return;
                }
                if let Some(n) = self.nodes.get_mut(&to) {
                    let out = n.on_message(from, &msg);
                    self.apply(to, out);
                }
            }
            Item::Timer { node, generation } => {
                if self.stopped.contains(node)
                    || self.halted.contains(node)
                    || self.timer_generation.get(&node) != Some(&generation)
                {
                    return;
                }
                if let Some(n) = self.nodes.get_mut(&node) {
                    let out = n.on_timeout();
                    self.apply(node, out);
                }
            }
            Item::Script { node, index } => {
                if self.stopped.contains(node) || self.silenced {
                    return;
                }
                let action = self.scripts[&node][index].action.clone();
                match action {
                    Action::Stop => {
                        self.record(Some(node), EventKind::Stop);
                        self.stopped.insert(node);
                    }
                    Action::Send { msg, to, delay } => {
                        for u in to.iter() {
                            self.send(node, u, msg.clone(), delay);
                        }
                    }
                }
            }
            Item::Crash(v) => {
                if self.stopped.contains(v) {
                    return;
                }
                self.record(Some(v), EventKind::Crash);
                self.stopped.insert(v);
                self.bump_timer(v);
            }
        }
    }

    /// Processes every queued item due at or before `t`. Returns false once
    /// the queue is empty.
    pub fn run_until(&mut self, t: u64) -> bool {
        while let Some(Reverse(q)) = self.queue.peek() {
            if q.time > t {
                return true;
            }
            let Reverse(q) = self.queue.pop().expect("peeked");
            self.now = q.time;
            self.step(q.item);
        }
        false
    }

    /// Runs until the queue drains or `max_time` passes, then appends the
    /// closing `end` event.
    pub fn run(&mut self) -> EndReason {
        if let Some(r) = self.ended {
            return r;
        }
        let max = self.scenario.timing.max_time;
        let reason = if self.run_until(max) {
            self.now = self.now.max(max);
            EndReason::MaxTime
        } else {
            EndReason::Quiescent
        };
        self.record(None, EventKind::End(reason));
        self.ended = Some(reason);
        reason
    }

    /// Stops every malicious node now and makes the network synchronous from
    /// this point on. Messages already in flight are still delivered.
    pub fn silence_malicious(&mut self) {
        self.silenced = true;
        self.gst = self.gst.min(self.now);
        for v in self.scenario.malicious().iter() {
            if !self.stopped.contains(v) {
                self.record(Some(v), EventKind::Stop);
                self.stopped.insert(v);
            }
        }
    }
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Simulation {
    let mut sim = Simulation::new(scenario);
    sim.run();
    sim
}

/// A copy of `checkpoint` in which every malicious node has stopped and
/// delays are bounded by `delta` from the checkpoint on.
pub fn continue_with_stopped_malicious(checkpoint: &Simulation) -> Simulation {
    let mut sim = checkpoint.clone();
    sim.silence_malicious();
    sim
}

/// Time allowed, after a checkpoint, for every intact node to decide once
/// malicious nodes are silent and the network is synchronous.
///
/// Messages in flight at the checkpoint land within `pre_gst_max` (or
/// `delta` with fixed delays). Every round a node passes through costs at
/// most its timer plus skew, plus a few message delays for the round change
/// to propagate. Rounds are counted from the lowest round held by an intact
/// node until the timer is long enough to fit a whole ballot (twelve message
/// delays plus skew on both ends) and one round beyond, and never stop below
/// the highest round already reached.
pub fn liveness_budget(timing: &Timing, lowest_round: u32, highest_round: u32) -> u64 {
    let delta = timing.delta;
    let in_flight = match timing.mode {
        DelayMode::Fixed => delta,
        DelayMode::Random => timing.pre_gst_max.max(delta),
    };
    let fits = 12 * delta + 2 * timing.skew;
    let mut r_fit = lowest_round.max(1);
    while timing.timeout(r_fit) < fits {
        r_fit += 1;
    }
    let last = (r_fit + 1).max(highest_round + 1);
    let mut total = in_flight.saturating_add(12 * delta);
    for r in lowest_round.max(1)..=last {
        total = total.saturating_add(timing.timeout(r) + timing.skew + 4 * delta);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LivenessReport {
    pub checkpoint: u64,
    pub budget: u64,
    /// Decision time per intact node, `None` if it never decided.
    pub decided_at: BTreeMap<NodeId, Option<u64>>,
}

impl LivenessReport {
    /// Every intact node decided within the budget.
    pub fn holds(&self) -> bool {
        self.decided_at
            .values()
            .all(|t| matches!(t, Some(t) if *t <= self.checkpoint + self.budget))
    }

    /// Longest time from checkpoint to decision.
    pub fn max_lag(&self) -> Option<u64> {
        self.decided_at
            .values()
            .map(|t| t.map(|t| t.saturating_sub(self.checkpoint)))
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max())
    }
}

/// Silences malicious nodes at the checkpoint and runs until every member of
/// `intact` has decided or the liveness budget is exhausted.
pub fn check_non_blocking(checkpoint: &Simulation, intact: NodeSet) -> LivenessReport {
    let mut sim = continue_with_stopped_malicious(checkpoint);
    let start = sim.now();
    let rounds: Vec<u32> = intact
        .iter()
        .map(|v| sim.rounds().get(&v).copied().unwrap_or(0))
        .collect();
    let lowest = rounds.iter().copied().min().unwrap_or(0);
    let highest = rounds.iter().copied().max().unwrap_or(0);
    let budget = liveness_budget(&sim.scenario.timing, lowest, highest);
    let deadline = start.saturating_add(budget);
    let mut t = start;
    while t < deadline && !intact.iter().all(|v| sim.decisions().contains_key(&v)) {
        t = (t + sim.scenario.timing.delta).min(deadline);
        if !sim.run_until(t) {
            break;
        }
    }
    let decided_at = intact
        .iter()
        .map(|v| (v, sim.decisions().get(&v).map(|(_, t)| *t)))
        .collect();
    LivenessReport {
        checkpoint: start,
        budget,
        decided_at,
    }
}
