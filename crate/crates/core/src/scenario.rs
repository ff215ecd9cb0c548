//! Scenario files.
//!
//! A scenario is a TOML document with the sections `system`, `slices`,
//! `views`, `faults`, `proposals`, `timing` and `protocol`. The full grammar
//! is described in `docs/scenario-format.md`. Validation errors carry the
//! path of the offending field, e.g. `faults.v3.script[1]`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ballot::{Ballot, Value};
use crate::fbqs::{FaultKind, FaultModel, Fbqs, NodeId, NodeSet, SubjectiveFbqs, MAX_NODES};
use crate::node::Input;
use crate::trace::{parse_message, Message};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {msg}")]
pub struct ScenarioError {
    pub path: String,
    pub msg: String,
}

fn err(path: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError {
        path: path.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Fv,
    Ascp,
    Cscp,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Fv => "fv",
            ProtocolKind::Ascp => "ascp",
            ProtocolKind::Cscp => "cscp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayMode {
    /// Every message takes exactly `delta`.
    Fixed,
    /// Seeded uniform delays: `1..=pre_gst_max` before GST, `1..=delta` after.
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timing {
    pub gst: u64,
    pub delta: u64,
    pub pre_gst_max: u64,
    pub mode: DelayMode,
    pub timeout_base: u64,
    pub skew: u64,
    pub max_time: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            gst: 0,
            delta: 1,
            pre_gst_max: 1,
            mode: DelayMode::Fixed,
            timeout_base: 10,
            skew: 0,
            max_time: 100_000,
        }
    }
}

impl Timing {
    /// Timer length for a round, before skew.
    pub fn timeout(&self, round: u32) -> u64 {
        self.timeout_base
            .saturating_mul(1u64.checked_shl(round).unwrap_or(u64::MAX))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send {
        msg: Message,
        to: NodeSet,
        delay: Option<u64>,
    },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptAction {
    pub at: u64,
    pub action: Action,
}

impl fmt::Display for ScriptAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            Action::Stop => write!(f, "at {} stop", self.at),
            Action::Send { msg, to, delay } => {
                let targets: Vec<String> = to.iter().map(|v| v.to_string()).collect();
                write!(f, "at {} send {} to {}", self.at, msg, targets.join(","))?;
                if let Some(d) = delay {
                    write!(f, " delay {d}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Runs the protocol until `at`, then stops for good.
    Crash { at: u64 },
    /// Runs only its script.
    Malicious { script: Vec<ScriptAction> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub protocol: ProtocolKind,
    pub nodes: usize,
    pub values: u32,
    pub system: Fbqs,
    /// Per correct viewer: slices it believes some faulty nodes have.
    pub views: BTreeMap<NodeId, BTreeMap<NodeId, Vec<NodeSet>>>,
    pub faults: BTreeMap<NodeId, Fault>,
    pub proposals: BTreeMap<NodeId, Input>,
    pub timing: Timing,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    system: SystemSection,
    slices: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    views: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    faults: BTreeMap<String, FaultSection>,
    #[serde(default)]
    proposals: BTreeMap<String, toml::Value>,
    #[serde(default)]
    timing: TimingSection,
    protocol: ProtocolSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    nodes: usize,
    #[serde(default = "default_values")]
    values: u32,
}

fn default_values() -> u32 {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    at: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    script: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gst: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delta: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pre_gst_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_base: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skew: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_time: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSection {
    kind: String,
}

fn parse_node(path: &str, s: &str, nodes: usize) -> Result<NodeId, ScenarioError> {
    let v: NodeId = s.parse().map_err(|e| err(path, format!("{e}")))?;
    if v.index() >= nodes {
        return Err(err(path, format!("{v} is outside v1..v{nodes}")));
    }
    Ok(v)
}

fn parse_slices(path: &str, list: &[String], nodes: usize) -> Result<Vec<NodeSet>, ScenarioError> {
    let universe = NodeSet::first(nodes);
    list.iter()
        .enumerate()
        .map(|(i, s)| {
            let p = format!("{path}[{i}]");
            let set: NodeSet = s.parse().map_err(|e| err(&p, format!("{e}")))?;
            if !set.is_subset(universe) {
                return Err(err(&p, format!("{set} is outside v1..v{nodes}")));
            }
            Ok(set)
        })
        .collect()
}

fn parse_action(
    path: &str,
    s: &str,
    protocol: ProtocolKind,
    nodes: usize,
    values: u32,
) -> Result<ScriptAction, ScenarioError> {
    let fields: Vec<&str> = s.split_whitespace().collect();
    let at = match fields.as_slice() {
        ["at", t, ..] => t
            .parse::<u64>()
            .map_err(|_| err(path, format!("bad time {t:?}")))?,
        _ => return Err(err(path, "actions start with `at <time>`")),
    };
    let rest = &fields[2..];
    let action = match rest {
        ["stop"] => Action::Stop,
        ["send", tail @ ..] => {
            let to_pos = tail
                .iter()
                .position(|f| *f == "to")
                .ok_or_else(|| err(path, "send needs `to <targets>`"))?;
            let msg = parse_message(&tail[..to_pos]).map_err(|e| err(path, e))?;
            check_message(path, &msg, protocol, values)?;
            let after = &tail[to_pos + 1..];
            let (targets, delay) = match after {
                [t] => (*t, None),
                [t, "delay", d] => (
                    *t,
                    Some(
                        d.parse::<u64>()
                            .map_err(|_| err(path, format!("bad delay {d:?}")))?,
                    ),
                ),
                _ => return Err(err(path, "expected `to <targets> [delay <d>]`")),
            };
            let to = if targets == "all" {
                NodeSet::first(nodes)
            } else {
                targets
                    .split(',')
                    .map(|t| parse_node(path, t, nodes))
                    .collect::<Result<NodeSet, _>>()?
            };
            Action::Send { msg, to, delay }
        }
        _ => return Err(err(path, format!("unknown action {s:?}"))),
    };
    Ok(ScriptAction { at, action })
}

fn check_ballot(path: &str, b: Ballot, values: u32) -> Result<(), ScenarioError> {
    match b.value() {
        Some(Value(x)) if x == 0 || x > values => Err(err(
            path,
            format!("ballot {b} has a value outside 1..={values}"),
        )),
        _ => Ok(()),
    }
}

fn check_message(
    path: &str,
    msg: &Message,
    protocol: ProtocolKind,
    values: u32,
) -> Result<(), ScenarioError> {
    match (protocol, msg) {
        (ProtocolKind::Fv, Message::Fv(_)) => Ok(()),
        (ProtocolKind::Cscp, Message::Bv(m)) => check_ballot(path, m.stmt.ballot, values),
        (ProtocolKind::Ascp, Message::Batch(ms)) => ms
            .iter()
            .try_for_each(|m| check_ballot(path, m.tag, values)),
        _ => Err(err(
            path,
            format!("message does not belong to protocol {}", protocol.as_str()),
        )),
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let file: File =
            toml::from_str(text).map_err(|e| err("<toml>", e.to_string().trim().to_string()))?;
        Scenario::from_file(file)
    }

    fn from_file(file: File) -> Result<Scenario, ScenarioError> {
        let nodes = file.system.nodes;
        if nodes == 0 || nodes > MAX_NODES {
            return Err(err("system.nodes", format!("must be in 1..={MAX_NODES}")));
        }
        let values = file.system.values;
        if values == 0 {
            return Err(err("system.values", "must be at least 1"));
        }
        let protocol = match file.protocol.kind.as_str() {
            "fv" => ProtocolKind::Fv,
            "ascp" => ProtocolKind::Ascp,
            "cscp" => ProtocolKind::Cscp,
            other => return Err(err("protocol.kind", format!("unknown protocol {other:?}"))),
        };

        let mut lists = vec![Vec::new(); nodes];
        for (name, list) in &file.slices {
            let v = parse_node(&format!("slices.{name}"), name, nodes)?;
            lists[v.index()] = parse_slices(&format!("slices.{name}"), list, nodes)?;
        }
        let system = Fbqs::from_lists(&lists).map_err(|e| err("slices", e.to_string()))?;

        let mut faults = BTreeMap::new();
        for (name, f) in &file.faults {
            let path = format!("faults.{name}");
            let v = parse_node(&path, name, nodes)?;
            let fault = match f.kind.as_str() {
                "crash" => {
                    if !f.script.is_empty() {
                        return Err(err(format!("{path}.script"), "crash faults take no script"));
                    }
                    Fault::Crash {
                        at: f.at.unwrap_or(0),
                    }
                }
                "malicious" => {
                    if f.at.is_some() {
                        return Err(err(
                            format!("{path}.at"),
                            "malicious faults use `at <t> stop` instead",
                        ));
                    }
                    let script = f
                        .script
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            parse_action(&format!("{path}.script[{i}]"), s, protocol, nodes, values)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    Fault::Malicious { script }
                }
                other => {
                    return Err(err(
                        format!("{path}.kind"),
                        format!("unknown fault kind {other:?}"),
                    ))
                }
            };
            faults.insert(v, fault);
        }

        let mut views = BTreeMap::new();
        for (viewer_name, overrides) in &file.views {
            let path = format!("views.{viewer_name}");
            let viewer = parse_node(&path, viewer_name, nodes)?;
            if faults.contains_key(&viewer) {
                return Err(err(path, "only correct nodes have views"));
            }
            let mut map = BTreeMap::new();
            for (subject_name, list) in overrides {
                let p = format!("{path}.{subject_name}");
                let subject = parse_node(&p, subject_name, nodes)?;
                if !faults.contains_key(&subject) {
                    return Err(err(p, "views may only override the slices of faulty nodes"));
                }
                map.insert(subject, parse_slices(&p, list, nodes)?);
            }
            views.insert(viewer, map);
        }

        let mut proposals = BTreeMap::new();
        for (name, value) in &file.proposals {
            let path = format!("proposals.{name}");
            let v = parse_node(&path, name, nodes)?;
            if matches!(faults.get(&v), Some(Fault::Malicious { .. })) {
                return Err(err(path, "malicious nodes do not propose"));
            }
            let input = match (protocol, value) {
                (ProtocolKind::Fv, toml::Value::Boolean(b)) => Input::Vote(*b),
                (ProtocolKind::Ascp | ProtocolKind::Cscp, toml::Value::Integer(x))
                    if *x >= 1 && (*x as u64) <= values as u64 =>
                {
                    Input::Value(Value(*x as u32))
                }
                (ProtocolKind::Fv, _) => return Err(err(path, "fv proposals are true or false")),
                _ => return Err(err(path, format!("expected a value in 1..={values}"))),
            };
            proposals.insert(v, input);
        }

        let t = &file.timing;
        let defaults = Timing::default();
        let mode = match t.mode.as_deref() {
            None | Some("fixed") => DelayMode::Fixed,
            Some("random") => DelayMode::Random,
            Some(other) => return Err(err("timing.mode", format!("unknown mode {other:?}"))),
        };
        let timing = Timing {
            gst: t.gst.unwrap_or(defaults.gst),
            delta: t.delta.unwrap_or(defaults.delta),
            pre_gst_max: t.pre_gst_max.unwrap_or(defaults.pre_gst_max),
            mode,
            timeout_base: t.timeout_base.unwrap_or(defaults.timeout_base),
            skew: t.skew.unwrap_or(defaults.skew),
            max_time: t.max_time.unwrap_or(defaults.max_time),
        };
        for (name, v) in [
            ("timing.delta", timing.delta),
            ("timing.pre_gst_max", timing.pre_gst_max),
            ("timing.timeout_base", timing.timeout_base),
        ] {
            if v == 0 {
                return Err(err(name, "must be at least 1"));
            }
        }
        if timing.skew >= timing.timeout_base * 2 {
            return Err(err("timing.skew", "must be below the first timeout length"));
        }

        let scenario = Scenario {
            name: file
                .system
                .name
                .clone()
                .unwrap_or_else(|| "scenario".to_string()),
            protocol,
            nodes,
            values,
            system,
            views,
            faults,
            proposals,
            timing,
            seed: t.seed.unwrap_or(0),
        };
        scenario
            .subjective()
            .map_err(|e| err("views", e.to_string()))?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        let name = |v: NodeId| v.to_string();
        let sets = |l: &[NodeSet]| l.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let file = File {
            system: SystemSection {
                name: Some(self.name.clone()),
                nodes: self.nodes,
                values: self.values,
            },
            slices: self
                .system
                .universe()
                .iter()
                .map(|v| (name(v), sets(self.system.slices(v))))
                .collect(),
            views: self
                .views
                .iter()
                .map(|(viewer, m)| {
                    (
                        name(*viewer),
                        m.iter().map(|(s, l)| (name(*s), sets(l))).collect(),
                    )
                })
                .collect(),
            faults: self
                .faults
                .iter()
                .map(|(v, f)| {
                    let sec = match f {
                        Fault::Crash { at } => FaultSection {
                            kind: "crash".into(),
                            at: Some(*at),
                            script: Vec::new(),
                        },
                        Fault::Malicious { script } => FaultSection {
                            kind: "malicious".into(),
                            at: None,
                            script: script.iter().map(|a| a.to_string()).collect(),
                        },
                    };
                    (name(*v), sec)
                })
                .collect(),
            proposals: self
                .proposals
                .iter()
                .map(|(v, i)| {
                    let val = match i {
                        Input::Vote(b) => toml::Value::Boolean(*b),
                        Input::Value(x) => toml::Value::Integer(x.0 as i64),
                    };
                    (name(*v), val)
                })
                .collect(),
            timing: TimingSection {
                gst: Some(self.timing.gst),
                delta: Some(self.timing.delta),
                pre_gst_max: Some(self.timing.pre_gst_max),
                mode: Some(
                    match self.timing.mode {
                        DelayMode::Fixed => "fixed",
                        DelayMode::Random => "random",
                    }
                    .into(),
                ),
                timeout_base: Some(self.timing.timeout_base),
                skew: Some(self.timing.skew),
                max_time: Some(self.timing.max_time),
                seed: Some(self.seed),
            },
            protocol: ProtocolSection {
                kind: self.protocol.as_str().into(),
            },
        };
        toml::to_string(&file).expect("scenario serialises")
    }

    pub fn universe(&self) -> NodeSet {
        NodeSet::first(self.nodes)
    }

    pub fn fault_model(&self) -> FaultModel {
        FaultModel::new(
            self.faults
                .iter()
                .map(|(v, f)| {
                    let kind = match f {
                        Fault::Crash { .. } => FaultKind::Crash,
                        Fault::Malicious { .. } => FaultKind::Malicious,
                    };
                    (*v, kind)
                })
                .collect(),
        )
    }

    pub fn correct(&self) -> NodeSet {
        self.fault_model().correct(self.universe())
    }

    pub fn honest(&self) -> NodeSet {
        self.fault_model().honest(self.universe())
    }

    pub fn malicious(&self) -> NodeSet {
        self.fault_model().malicious()
    }

    /// The slices `v` believes in: the base system with its overrides applied.
    pub fn view(&self, v: NodeId) -> Fbqs {
        let mut view = self.system.clone();
        if let Some(overrides) = self.views.get(&v) {
            for (subject, list) in overrides {
                view = view
                    .with_slices(*subject, list.clone())
                    .expect("overrides are validated");
            }
        }
        view
    }

    pub fn subjective(&self) -> Result<SubjectiveFbqs, crate::fbqs::FbqsError> {
        let correct = self.correct();
        let mut views = BTreeMap::new();
        for v in correct.iter() {
            let mut view = self.system.clone();
            if let Some(overrides) = self.views.get(&v) {
                for (subject, list) in overrides {
                    view = view.with_slices(*subject, list.clone())?;
                }
            }
            views.insert(v, view);
        }
        SubjectiveFbqs::new(correct, views)
    }

    /// Proposals of the given nodes, as consensus values.
    pub fn proposed_values(&self, nodes: NodeSet) -> Vec<Value> {
        self.proposals
            .iter()
            .filter(|(v, _)| nodes.contains(**v))
            .filter_map(|(_, i)| match i {
                Input::Value(x) => Some(*x),
                Input::Vote(_) => None,
            })
            .collect()
    }
}
