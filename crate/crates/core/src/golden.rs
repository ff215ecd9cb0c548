//! Built-in reference scenarios with frozen trace digests and outcomes.
//!
//! Digests live in `golden/digests.txt` and only change through an explicit
//! bless (`scpsim golden --bless`).

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::fbqs::{FbqsError, NodeId};
use crate::scenario::{Scenario, ScenarioError};
use crate::sim;
use crate::trace::Trace;
use crate::verdicts::{self, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    /// Node (one-based) and the value it decides.
    Decisions(&'static [(u8, u32)]),
    /// Node (one-based) and the boolean it delivers.
    Deliveries(&'static [(u8, bool)]),
}

#[derive(Debug, Clone, Copy)]
pub struct GoldenCase {
    pub name: &'static str,
    pub source: &'static str,
    pub expected: Expected,
}

pub const CASES: &[GoldenCase] = &[
    GoldenCase {
        name: "fv-example3",
        source: include_str!("../golden/fv-example3.toml"),
        expected: Expected::Deliveries(&[(1, false), (2, false), (4, false)]),
    },
    GoldenCase {
        name: "ascp-example",
        source: include_str!("../golden/ascp-example.toml"),
        expected: Expected::Decisions(&[(1, 2), (2, 2), (4, 2)]),
    },
    GoldenCase {
        name: "cscp-example",
        source: include_str!("../golden/cscp-example.toml"),
        expected: Expected::Decisions(&[(1, 2), (2, 2), (4, 2)]),
    },
    GoldenCase {
        name: "split-system",
        source: include_str!("../golden/split-system.toml"),
        expected: Expected::Deliveries(&[(1, false), (2, false), (4, true)]),
    },
    GoldenCase {
        name: "threefplusone-f1",
        source: include_str!("../golden/threefplusone-f1.toml"),
        expected: Expected::Decisions(&[(1, 2), (2, 2), (4, 2)]),
    },
];

const DIGESTS: &str = include_str!("../golden/digests.txt");

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("unknown golden scenario {0:?}")]
    Unknown(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Fbqs(#[from] FbqsError),
}

pub fn find(name: &str) -> Result<&'static GoldenCase, GoldenError> {
    CASES
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| GoldenError::Unknown(name.to_string()))
}

/// Frozen digests by scenario name.
pub fn frozen_digests() -> BTreeMap<String, String> {
    parse_digests(DIGESTS)
}

pub fn parse_digests(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once(char::is_whitespace))
        .map(|(n, d)| (n.to_string(), d.trim().to_string()))
        .collect()
}

pub fn format_digests(digests: &BTreeMap<String, String>) -> String {
    let mut out = String::from("# name sha256-of-trace-text\n");
    for (n, d) in digests {
        out.push_str(&format!("{n} {d}\n"));
    }
    out
}

/// Where `--bless` writes new digests.
pub fn digests_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/golden/digests.txt"))
}

#[derive(Debug, Clone)]
pub struct GoldenOutcome {
    pub name: &'static str,
    pub trace: Trace,
    pub digest: String,
    pub frozen_digest: Option<String>,
    pub report: Report,
    /// Every expected decision or delivery happened, and nothing else by correct nodes.
    pub outcome_matches: bool,
}

impl GoldenOutcome {
    pub fn digest_matches(&self) -> bool {
        self.frozen_digest.as_deref() == Some(self.digest.as_str())
    }

    pub fn ok(&self) -> bool {
        self.digest_matches() && self.outcome_matches && self.report.ok()
    }
}

impl GoldenCase {
    pub fn scenario(&self) -> Result<Scenario, GoldenError> {
        Ok(Scenario::from_toml(self.source)?)
    }

    /// Runs the scenario, optionally with a different seed.
    pub fn run(&self, seed: Option<u64>) -> Result<GoldenOutcome, GoldenError> {
        let mut scenario = self.scenario()?;
        if let Some(s) = seed {
            scenario.seed = s;
        }
        let sim = sim::run(&scenario);
        let correct = scenario.correct();
        let outcome_matches = match self.expected {
            Expected::Decisions(want) => {
                let got: BTreeMap<NodeId, u32> = sim
                    .decisions()
                    .iter()
                    .filter(|(v, _)| correct.contains(**v))
                    .map(|(v, (x, _))| (*v, x.0))
                    .collect();
                got == want.iter().map(|(v, x)| (NodeId(v - 1), *x)).collect()
            }
            Expected::Deliveries(want) => {
                let got: BTreeMap<NodeId, bool> = sim
                    .deliveries()
                    .iter()
                    .filter(|(v, _)| correct.contains(**v))
                    .map(|(v, (a, _))| (*v, *a))
                    .collect();
                got == want.iter().map(|(v, a)| (NodeId(v - 1), *a)).collect()
            }
        };
        let trace = sim.into_trace();
        let report = verdicts::check(&scenario, &trace)?;
        Ok(GoldenOutcome {
            name: self.name,
            digest: trace.digest(),
            frozen_digest: frozen_digests().get(self.name).cloned(),
            trace,
            report,
            outcome_matches,
        })
    }
}
