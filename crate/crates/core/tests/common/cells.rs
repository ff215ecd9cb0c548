//! Expected per-node cells of the reference executions.

use std::collections::{BTreeMap, BTreeSet};

use scp_core::golden;
use scp_core::trace::Trace;

pub type Cells = BTreeMap<(u64, String), BTreeSet<String>>;

/// Non-receive events per (time, node). Sends are reduced to their payload so
/// a broadcast counts once.
pub fn cells(trace: &Trace, nodes: &[&str]) -> Cells {
    let mut out = Cells::new();
    for line in trace.to_text().lines() {
        let f: Vec<&str> = line.splitn(5, ' ').collect();
        let (time, node, kind) = (f[1].parse().unwrap(), f[2], f[3]);
        if !nodes.contains(&node) || kind.starts_with("receive") {
            continue;
        }
        let rest = f.get(4).copied().unwrap_or("");
        let item = if kind.starts_with("send") {
            format!("send {}", rest.split_once(' ').unwrap().1)
        } else if rest.is_empty() {
            kind.to_string()
        } else {
            format!("{kind} {rest}")
        };
        out.entry((time, node.to_string()))
            .or_default()
            .insert(item);
    }
    out
}

pub fn expected(rows: &[(u64, &str, &[&str])]) -> Cells {
    rows.iter()
        .map(|(t, n, items)| {
            (
                (*t, n.to_string()),
                items.iter().map(|s| s.to_string()).collect(),
            )
        })
        .collect()
}

/// First cell where `trace` differs from `rows`.
pub fn cell_mismatch(
    trace: &Trace,
    nodes: &[&str],
    rows: &[(u64, &str, &[&str])],
) -> Option<String> {
    let got = cells(trace, nodes);
    let want = expected(rows);
    let keys: BTreeSet<_> = got.keys().chain(want.keys()).collect();
    let k = keys.into_iter().find(|k| got.get(*k) != want.get(*k))?;
    Some(format!(
        "time {} node {}: got {:?}, want {:?}",
        k.0,
        k.1,
        got.get(k),
        want.get(k)
    ))
}

pub fn assert_cells(name: &str, nodes: &[&str], rows: &[(u64, &str, &[&str])]) {
    let o = golden::find(name).unwrap().run(None).unwrap();
    if let Some(m) = cell_mismatch(&o.trace, nodes, rows) {
        panic!("{name} at {m}");
    }
}

pub const INTACT: &[&str] = &["v1", "v2", "v4"];

pub const FV_ROWS: &[(u64, &str, &[&str])] = &[
    (0, "v1", &["vote t0 false", "send VOTE t0 false"]),
    (0, "v2", &["vote t0 false", "send VOTE t0 false"]),
    (0, "v3", &["send VOTE t0 false"]),
    (0, "v4", &["vote t0 true", "send VOTE t0 true"]),
    (1, "v1", &["send READY t0 false"]),
    (1, "v2", &["send READY t0 false"]),
    (2, "v4", &["send READY t0 false"]),
    (3, "v1", &["deliver t0 false"]),
    (3, "v2", &["deliver t0 false"]),
    (3, "v4", &["deliver t0 false"]),
];

pub const CONCRETE_ROWS: &[(u64, &str, &[&str])] = &[
    (
        0,
        "v1",
        &["propose 3", "prepare <1:3>", "send VOTE PREP <1:3>"],
    ),
    (
        0,
        "v2",
        &["propose 3", "prepare <1:3>", "send VOTE PREP <1:3>"],
    ),
    (
        0,
        "v4",
        &["propose 1", "prepare <1:1>", "send VOTE PREP <1:1>"],
    ),
    (1, "v1", &["send READY PREP <1:2>", "start-timer 1"]),
    (1, "v2", &["send READY PREP <1:2>", "start-timer 1"]),
    (1, "v4", &["send READY PREP <1:1>", "start-timer 1"]),
    (2, "v1", &["prepared <1:1>"]),
    (2, "v2", &["prepared <1:1>"]),
    (
        2,
        "v4",
        &[
            "send READY PREP <1:2>",
            "prepared <1:1>",
            "commit <1:1>",
            "send VOTE CMT <1:1>",
        ],
    ),
    (3, "v1", &["prepared <1:2>"]),
    (3, "v2", &["prepared <1:2>"]),
    (
        3,
        "v4",
        &["prepared <1:2>", "commit <1:2>", "send VOTE CMT <1:2>"],
    ),
    (
        21,
        "v1",
        &["timeout", "prepare <2:2>", "send VOTE PREP <2:2>"],
    ),
    (
        21,
        "v2",
        &["timeout", "prepare <2:2>", "send VOTE PREP <2:2>"],
    ),
    (
        21,
        "v4",
        &["timeout", "prepare <2:2>", "send VOTE PREP <2:2>"],
    ),
    (22, "v1", &["send READY PREP <2:2>", "start-timer 2"]),
    (22, "v2", &["send READY PREP <2:2>", "start-timer 2"]),
    (22, "v4", &["send READY PREP <2:2>", "start-timer 2"]),
    (
        23,
        "v1",
        &["prepared <2:2>", "commit <2:2>", "send VOTE CMT <2:2>"],
    ),
    (
        23,
        "v2",
        &["prepared <2:2>", "commit <2:2>", "send VOTE CMT <2:2>"],
    ),
    (
        23,
        "v4",
        &["prepared <2:2>", "commit <2:2>", "send VOTE CMT <2:2>"],
    ),
    (24, "v1", &["send READY CMT <2:2>"]),
    (24, "v2", &["send READY CMT <2:2>"]),
    (24, "v4", &["send READY CMT <2:2>"]),
    (25, "v1", &["committed <2:2>", "decide 2"]),
    (25, "v2", &["committed <2:2>", "decide 2"]),
    (25, "v4", &["committed <2:2>", "decide 2"]),
];

pub const ABSTRACT_ROWS: &[(u64, &str, &[&str])] = &[
    (
        0,
        "v1",
        &[
            "propose 3",
            "vote-batch [<0:_>,<1:1>,<1:2>] false",
            "send [VOTE(<0:_>,false);VOTE(<1:1>,false);VOTE(<1:2>,false)]",
        ],
    ),
    (
        0,
        "v2",
        &[
            "propose 3",
            "vote-batch [<0:_>,<1:1>,<1:2>] false",
            "send [VOTE(<0:_>,false);VOTE(<1:1>,false);VOTE(<1:2>,false)]",
        ],
    ),
    (
        0,
        "v4",
        &[
            "propose 1",
            "vote-batch [<0:_>] false",
            "send [VOTE(<0:_>,false)]",
        ],
    ),
    (
        1,
        "v1",
        &[
            "start-timer 1",
            "send [READY(<0:_>,false);READY(<1:1>,false)]",
        ],
    ),
    (
        1,
        "v2",
        &[
            "start-timer 1",
            "send [READY(<0:_>,false);READY(<1:1>,false)]",
        ],
    ),
    (1, "v4", &["start-timer 1", "send [READY(<0:_>,false)]"]),
    (2, "v1", &["deliver-batch [<0:_>] false"]),
    (2, "v2", &["deliver-batch [<0:_>] false"]),
    (
        2,
        "v4",
        &[
            "send [READY(<1:1>,false)]",
            "deliver-batch [<0:_>] false",
            "vote-batch [<1:1>] true",
            "send [VOTE(<1:1>,true)]",
        ],
    ),
    (3, "v1", &["deliver-batch [<1:1>] false"]),
    (3, "v2", &["deliver-batch [<1:1>] false"]),
    (
        3,
        "v4",
        &[
            "deliver-batch [<1:1>] false",
            "vote-batch [<1:2>] true",
            "send [VOTE(<1:2>,true)]",
        ],
    ),
    (
        21,
        "v1",
        &[
            "timeout",
            "vote-batch [<0:_>,<1:1>,<1:3>,<2:1>] false",
            "send [VOTE(<1:3>,false);VOTE(<2:1>,false)]",
        ],
    ),
    (
        21,
        "v2",
        &[
            "timeout",
            "vote-batch [<0:_>,<1:1>,<1:3>,<2:1>] false",
            "send [VOTE(<1:3>,false);VOTE(<2:1>,false)]",
        ],
    ),
    (
        21,
        "v4",
        &[
            "timeout",
            "vote-batch [<0:_>,<1:1>,<1:3>,<2:1>] false",
            "send [VOTE(<1:3>,false);VOTE(<2:1>,false)]",
        ],
    ),
    (
        22,
        "v1",
        &[
            "start-timer 2",
            "send [READY(<1:3>,false);READY(<2:1>,false)]",
        ],
    ),
    (
        22,
        "v2",
        &[
            "start-timer 2",
            "send [READY(<1:3>,false);READY(<2:1>,false)]",
        ],
    ),
    (
        22,
        "v4",
        &[
            "start-timer 2",
            "send [READY(<1:3>,false);READY(<2:1>,false)]",
        ],
    ),
    (
        23,
        "v1",
        &[
            "deliver-batch [<1:3>,<2:1>] false",
            "vote-batch [<2:2>] true",
            "send [VOTE(<2:2>,true)]",
        ],
    ),
    (
        23,
        "v2",
        &[
            "deliver-batch [<1:3>,<2:1>] false",
            "vote-batch [<2:2>] true",
            "send [VOTE(<2:2>,true)]",
        ],
    ),
    (
        23,
        "v4",
        &[
            "deliver-batch [<1:3>,<2:1>] false",
            "vote-batch [<2:2>] true",
            "send [VOTE(<2:2>,true)]",
        ],
    ),
    (24, "v1", &["send [READY(<2:2>,true)]"]),
    (24, "v2", &["send [READY(<2:2>,true)]"]),
    (24, "v4", &["send [READY(<2:2>,true)]"]),
    (25, "v1", &["deliver-batch [<2:2>] true", "decide 2"]),
    (25, "v2", &["deliver-batch [<2:2>] true", "decide 2"]),
    (25, "v4", &["deliver-batch [<2:2>] true", "decide 2"]),
];
