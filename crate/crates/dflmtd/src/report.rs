//! Per-round CSV and summary JSON files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use dflmtd_core::aggregate::AggregatorKind;
use dflmtd_core::config::ExperimentConfig;
use dflmtd_core::federation::{ExperimentReport, Role};
use dflmtd_core::metrics::RoundRecord;
use dflmtd_core::NodeId;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub const ROUNDS_HEADER: [&str; 10] = [
    "round",
    "node_id",
    "role",
    "f1",
    "val_loss",
    "asr",
    "neighbors",
    "aggregator",
    "mtd_triggered",
    "detected",
];

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_ids(ids: &[NodeId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn record_row(r: &RoundRecord) -> [String; 10] {
    [
        r.round.to_string(),
        r.node_id.to_string(),
        r.role.as_str().into(),
        fmt_float(r.f1),
        fmt_float(r.val_loss),
        r.asr.map(fmt_float).unwrap_or_default(),
        fmt_ids(&r.neighbors),
        r.aggregator.as_str().into(),
        r.mtd_triggered.to_string(),
        fmt_ids(&r.detected),
    ]
}

pub fn write_rounds<W: Write>(records: &[RoundRecord], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROUNDS_HEADER)?;
    for r in records {
        w.write_record(record_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rounds_csv(records: &[RoundRecord], path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_rounds(records, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

fn parse_ids(s: &str) -> anyhow::Result<Vec<NodeId>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|t| t.parse().map_err(|_| anyhow!("bad node id `{t}`")))
        .collect()
}

fn parse_float(s: &str) -> anyhow::Result<f64> {
    s.parse().map_err(|_| anyhow!("bad number `{s}`"))
}

fn parse_row(row: &csv::StringRecord) -> anyhow::Result<RoundRecord> {
    if row.len() != ROUNDS_HEADER.len() {
        bail!("expected {} fields, got {}", ROUNDS_HEADER.len(), row.len());
    }
    let asr = match &row[5] {
        "" => None,
        s => Some(parse_float(s)?),
    };
    Ok(RoundRecord {
        round: row[0].parse()?,
        node_id: row[1].parse()?,
        role: Role::parse(&row[2]).ok_or_else(|| anyhow!("bad role `{}`", &row[2]))?,
        f1: parse_float(&row[3])?,
        val_loss: parse_float(&row[4])?,
        asr,
        neighbors: parse_ids(&row[6])?,
        aggregator: AggregatorKind::parse(&row[7]).ok_or_else(|| anyhow!("bad aggregator `{}`", &row[7]))?,
        mtd_triggered: row[8].parse()?,
        detected: parse_ids(&row[9])?,
    })
}

/// Inverse of [`write_rounds`] up to the 6-decimal float precision.
pub fn read_rounds<R: Read>(input: R) -> anyhow::Result<Vec<RoundRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?;
    if header.iter().ne(ROUNDS_HEADER) {
        bail!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","));
    }
    r.records()
        .enumerate()
        .map(|(i, row)| parse_row(&row?).with_context(|| format!("line {}", i + 2)))
        .collect()
}

pub fn read_rounds_csv(path: &Path) -> anyhow::Result<Vec<RoundRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_rounds(file).with_context(|| format!("reading {}", path.display()))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    /// The config file exactly as given.
    pub config: Box<RawValue>,
    /// The config that actually ran, defaults and overrides applied.
    pub resolved_config: ExperimentConfig,
    pub seed: u64,
    pub attackers: Vec<NodeId>,
    pub benign_f1_by_round: Vec<f64>,
    pub final_f1: f64,
    pub final_asr: Option<f64>,
    pub final_edges: Vec<(NodeId, NodeId)>,
    pub wall_clock_seconds: f64,
}

impl Summary {
    pub fn new(raw: Box<RawValue>, cfg: &ExperimentConfig, report: &ExperimentReport, wall_clock_seconds: f64) -> Self {
        Summary {
            config: raw,
            resolved_config: cfg.clone(),
            seed: cfg.seed,
            attackers: report.attackers.iter().copied().collect(),
            benign_f1_by_round: report.benign_f1_by_round.clone(),
            final_f1: report.final_f1,
            final_asr: report.final_asr,
            final_edges: report.final_edges.clone(),
            wall_clock_seconds,
        }
    }
}

pub fn write_summary_json(summary: &Summary, path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> anyhow::Result<Summary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
