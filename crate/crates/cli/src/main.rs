//! `scpsim`: run scenarios, analyse slice systems, check traces.
//!
//! Exit codes: 0 when everything checked passes, 1 when a verdict fails,
//! 2 on bad usage, unreadable input, or an invalid scenario.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use scp_core::corpus::{self, CorpusConfig};
use scp_core::fbqs::NodeSet;
use scp_core::golden::{self, GoldenCase};
use scp_core::refine::{self, RefinementReport};
use scp_core::scenario::{ProtocolKind, Scenario};
use scp_core::sim;
use scp_core::trace::Trace;
use scp_core::verdicts::{self, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Ndjson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    Fv,
    Ascp,
    Cscp,
}

impl From<Protocol> for ProtocolKind {
    fn from(p: Protocol) -> Self {
        match p {
            Protocol::Fv => ProtocolKind::Fv,
            Protocol::Ascp => ProtocolKind::Ascp,
            Protocol::Cscp => ProtocolKind::Cscp,
        }
    }
}

/// `println!` that exits quietly when the reader has gone away.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            panic!("cannot write to stdout: {e}");
        }
    }};
}

#[derive(Debug, Parser)]
#[command(name = "scpsim", version, about = "Federated voting and SCP simulator")]
struct Cli {
    #[arg(long, value_enum, default_value = "text", global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a scenario and check the resulting trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print quorums and maximal intact sets.
    Analyze {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Check property verdicts on a trace, or on every scenario in a directory.
    Check {
        #[arg(long, required_unless_present = "dir")]
        scenario: Option<PathBuf>,
        /// Trace to check; the scenario is run when omitted.
        #[arg(long, conflicts_with = "dir")]
        trace: Option<PathBuf>,
        /// Checks each `*.toml` here, against `NAME.trace` next to it if present.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Check that a concrete trace refines the abstract protocol.
    Refine {
        #[arg(long)]
        scenario: PathBuf,
        /// Concrete trace; the scenario is run when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run built-in reference scenarios against their frozen digests.
    Golden {
        /// Scenario name; all of them when omitted.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Record the current digests as the frozen ones.
        #[arg(long)]
        bless: bool,
        /// Write the trace here (single scenario only).
        #[arg(long, requires = "name")]
        out: Option<PathBuf>,
    },
    /// Generate random scenarios and their traces.
    Corpus {
        #[arg(long, default_value_t = 5)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        min_nodes: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "cscp")]
        protocol: Protocol,
        #[arg(long, default_value_t = 1)]
        max_faulty: usize,
        #[arg(long, default_value_t = 1)]
        max_malicious: usize,
        #[arg(long, default_value_t = 0.5)]
        malicious_rate: f64,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_toml(&read(path)?)
        .with_context(|| format!("invalid scenario {}", path.display()))
}

fn load_trace(path: &Path) -> Result<Trace> {
    Trace::parse(&read(path)?).with_context(|| format!("invalid trace {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn sets_json(sets: &[NodeSet]) -> Vec<String> {
    sets.iter().map(ToString::to_string).collect()
}

fn report_json(name: &str, report: &Report) -> serde_json::Value {
    json!({
        "scenario": name,
        "ok": report.ok(),
        "intact_sets": sets_json(&report.intact_sets),
        "verdicts": report.verdicts.iter().map(|v| json!({
            "property": v.property,
            "status": v.status.as_str(),
            "detail": v.detail,
            "witnesses": v.witnesses,
        })).collect::<Vec<_>>(),
    })
}

fn print_report(format: Format, name: &str, report: &Report) {
    match format {
        Format::Text => {
            out!("scenario {name}");
            let sets: Vec<String> = sets_json(&report.intact_sets);
            out!(
                "intact-sets {}",
                if sets.is_empty() {
                    "none".into()
                } else {
                    sets.join(" ")
                }
            );
            for v in &report.verdicts {
                out!("  {v}");
            }
        }
        Format::Ndjson => out!("{}", report_json(name, report)),
    }
}

fn print_refinement(format: Format, name: &str, r: &RefinementReport) {
    match format {
        Format::Text => {
            out!("scenario {name}");
            if r.sets.is_empty() {
                out!("no intact sets; nothing to refine");
            } else {
                out!("{}", r.to_string().trim_end());
            }
        }
        Format::Ndjson => {
            let sets: Vec<_> = r
                .sets
                .iter()
                .map(|s| {
                    json!({
                        "intact_set": s.set.to_string(),
                        "abstract_events": s.abstract_trace.events.len(),
                        "history_equal": s.history_equal,
                        "error": s.outcome.as_ref().err().map(ToString::to_string),
                    })
                })
                .collect();
            out!("{}", json!({"scenario": name, "ok": r.ok(), "sets": sets}));
        }
    }
}

fn trace_for(scenario: &Scenario, trace: Option<&Path>) -> Result<Trace> {
    match trace {
        Some(p) => load_trace(p),
        None => Ok(sim::run(scenario).into_trace()),
    }
}

fn cmd_run(format: Format, path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<bool> {
    let mut scenario = load_scenario(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let sim = sim::run(&scenario);
    let trace = sim.trace();
    if let Some(out) = out {
        write(out, &trace.to_text())?;
    }
    let report = verdicts::check(&scenario, trace)?;
    if format == Format::Text {
        let end = trace.end_reason().map_or("-", |e| e.as_str());
        out!(
            "end {end} at {} events {} digest {}",
            sim.now(),
            trace.events.len(),
            trace.digest()
        );
        for (v, (x, t)) in sim.decisions() {
            out!("decide {v} {x} at {t}");
        }
        for (v, (a, t)) in sim.deliveries() {
            out!("deliver {v} {a} at {t}");
        }
    }
    print_report(format, &scenario.name, &report);
    Ok(report.ok())
}

fn cmd_analyze(format: Format, path: &Path) -> Result<bool> {
    let scenario = load_scenario(path)?;
    let quorums = scenario.system.enumerate_quorums()?;
    let minimal = scenario.system.minimal_quorums()?;
    let intersection = scenario.system.has_quorum_intersection()?;
    let faulty = scenario.universe().difference(scenario.correct());
    let intact = scenario.subjective()?.maximal_intact_sets()?;
    match format {
        Format::Text => {
            out!("scenario {} nodes {}", scenario.name, scenario.nodes);
            out!("quorums {}", quorums.len());
            for q in &quorums {
                out!("  {q}");
            }
            out!("minimal-quorums {}", minimal.len());
            for q in &minimal {
                out!("  {q}");
            }
            out!("quorum-intersection {intersection}");
            out!("faulty {faulty}");
            out!("maximal-intact-sets {}", intact.len());
            for i in &intact {
                out!("  {i}");
            }
        }
        Format::Ndjson => out!(
            "{}",
            json!({
                "scenario": scenario.name,
                "quorums": sets_json(&quorums),
                "minimal_quorums": sets_json(&minimal),
                "quorum_intersection": intersection,
                "faulty": faulty.to_string(),
                "maximal_intact_sets": sets_json(&intact),
            })
        ),
    }
    Ok(true)
}

fn cmd_check(
    format: Format,
    scenario: Option<&Path>,
    trace: Option<&Path>,
    dir: Option<&Path>,
) -> Result<bool> {
    let files: Vec<(PathBuf, Option<PathBuf>)> = match (dir, scenario) {
        (Some(dir), _) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .with_context(|| format!("cannot read {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            files.sort();
            if files.is_empty() {
                bail!("no scenarios in {}", dir.display());
            }
            files
                .into_iter()
                .map(|p| {
                    let t = p.with_extension("trace");
                    let t = t.exists().then_some(t);
                    (p, t)
                })
                .collect()
        }
        (None, Some(s)) => vec![(s.to_path_buf(), trace.map(Path::to_path_buf))],
        (None, None) => bail!("either --scenario or --dir is required"),
    };
    let mut ok = true;
    let mut failed = 0;
    for (s, t) in &files {
        let scenario = load_scenario(s)?;
        let trace = trace_for(&scenario, t.as_deref())?;
        let report = verdicts::check(&scenario, &trace)?;
        if !report.ok() {
            ok = false;
            failed += 1;
        }
        if dir.is_none() || !report.ok() || format == Format::Ndjson {
            print_report(format, &scenario.name, &report);
        }
    }
    if dir.is_some() && format == Format::Text {
        out!("checked {} scenarios, {failed} failing", files.len());
    }
    Ok(ok)
}

fn cmd_refine(format: Format, path: &Path, trace: Option<&Path>) -> Result<bool> {
    let scenario = load_scenario(path)?;
    if scenario.protocol != ProtocolKind::Cscp {
        bail!(
            "refinement needs a cscp scenario, got {}",
            scenario.protocol.as_str()
        );
    }
    let trace = trace_for(&scenario, trace)?;
    let report = refine::refinement_report(&trace, &scenario)?;
    print_refinement(format, &scenario.name, &report);
    Ok(report.ok())
}

fn cmd_golden(
    format: Format,
    name: Option<&str>,
    seed: Option<u64>,
    bless: bool,
    out: Option<&Path>,
) -> Result<bool> {
    let cases: Vec<&GoldenCase> = match name {
        Some(n) => vec![golden::find(n)?],
        None => golden::CASES.iter().collect(),
    };
    let mut ok = true;
    let mut digests = golden::frozen_digests();
    for case in cases {
        let o = case.run(seed)?;
        if let Some(out) = out {
            write(out, &o.trace.to_text())?;
        }
        let scenario = case.scenario()?;
        let mut results: Vec<String> = Vec::new();
        for (v, x) in o
            .trace
            .events
            .iter()
            .filter_map(|e| match (e.node, &e.kind) {
                (Some(v), scp_core::trace::EventKind::Decide(x)) => Some((v, x.to_string())),
                (Some(v), scp_core::trace::EventKind::Deliver { value, .. }) => {
                    Some((v, value.to_string()))
                }
                _ => None,
            })
        {
            if scenario.correct().contains(v) {
                results.push(format!("{v}={x}"));
            }
        }
        let digest_state = if bless {
            digests.insert(o.name.to_string(), o.digest.clone());
            "blessed"
        } else if o.digest_matches() {
            "match"
        } else if o.frozen_digest.is_none() {
            "unfrozen"
        } else {
            "MISMATCH"
        };
        let case_ok = o.outcome_matches && o.report.ok() && (bless || o.digest_matches());
        ok &= case_ok;
        match format {
            Format::Text => {
                out!(
                    "{} {} outcome {} digest {} {}",
                    o.name,
                    if case_ok { "ok" } else { "FAIL" },
                    results.join(" "),
                    o.digest,
                    digest_state
                );
                for v in o.report.failures() {
                    out!("  {v}");
                }
            }
            Format::Ndjson => out!(
                "{}",
                json!({
                    "name": o.name,
                    "ok": case_ok,
                    "outcome": results,
                    "outcome_matches": o.outcome_matches,
                    "digest": o.digest,
                    "digest_state": digest_state,
                    "report": report_json(o.name, &o.report),
                })
            ),
        }
    }
    if bless {
        write(&golden::digests_path(), &golden::format_digests(&digests))?;
    }
    Ok(ok)
}

fn cmd_corpus(format: Format, cfg: &CorpusConfig, count: usize, out: &Path) -> Result<bool> {
    if cfg.nodes == 0 || cfg.nodes > 12 || cfg.min_nodes > cfg.nodes {
        bail!("--nodes must be in 1..=12 and at least --min-nodes");
    }
    if !(0.0..=1.0).contains(&cfg.malicious_rate) {
        bail!("--malicious-rate must be in [0, 1]");
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for sc in corpus::generate(cfg, count) {
        let trace = sim::run(&sc).into_trace();
        let base = out.join(&sc.name);
        write(&base.with_extension("toml"), &sc.to_toml())?;
        write(&base.with_extension("trace"), &trace.to_text())?;
        if format == Format::Ndjson {
            out!(
                "{}",
                json!({"scenario": sc.name, "events": trace.events.len(), "digest": trace.digest()})
            );
        }
    }
    if format == Format::Text {
        out!("wrote {count} scenarios to {}", out.display());
    }
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool> {
    let f = cli.format;
    match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
        } => cmd_run(f, &scenario, seed, out.as_deref()),
        Cmd::Analyze { scenario } => cmd_analyze(f, &scenario),
        Cmd::Check {
            scenario,
            trace,
            dir,
        } => cmd_check(f, scenario.as_deref(), trace.as_deref(), dir.as_deref()),
        Cmd::Refine { scenario, trace } => cmd_refine(f, &scenario, trace.as_deref()),
        Cmd::Golden {
            name,
            seed,
            bless,
            out,
        } => cmd_golden(f, name.as_deref(), seed, bless, out.as_deref()),
        Cmd::Corpus {
            nodes,
            min_nodes,
            count,
            seed,
            protocol,
            max_faulty,
            max_malicious,
            malicious_rate,
            out,
        } => {
            let cfg = CorpusConfig {
                protocol: protocol.into(),
                min_nodes,
                nodes,
                max_faulty,
                max_malicious,
                malicious_rate,
                seed,
                ..CorpusConfig::default()
            };
            cmd_corpus(f, &cfg, count, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
