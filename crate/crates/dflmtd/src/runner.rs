//! Single runs and PNR x strategy x topology sweeps, written to disk.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use dflmtd_core::aggregate::AggregatorKind;
use dflmtd_core::config::ExperimentConfig;
use dflmtd_core::federation::{run_experiment, AttackKind, ExperimentReport, RunOptions, TopologyKind};
use dflmtd_core::mtd::{MtdMode, MtdStrategy};

use crate::config_file::LoadedConfig;
use crate::idx::experiment_data;
use crate::report::{write_rounds_csv, write_summary_json, Summary, ROUNDS_FILE, SUMMARY_FILE};

/// A defense setting: a fixed baseline aggregator, or an MTD mode with its
/// strategy set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Baseline(AggregatorKind),
    Mtd {
        mode: MtdMode,
        topology: bool,
        aggregation: bool,
    },
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::Baseline(AggregatorKind::FedAvg),
        Strategy::Baseline(AggregatorKind::Krum),
        Strategy::Baseline(AggregatorKind::Median),
        Strategy::Baseline(AggregatorKind::TrimmedMean),
        Strategy::mtd(MtdMode::Reactive, true, false),
        Strategy::mtd(MtdMode::Reactive, false, true),
        Strategy::mtd(MtdMode::Reactive, true, true),
        Strategy::mtd(MtdMode::Proactive, true, false),
        Strategy::mtd(MtdMode::Proactive, false, true),
        Strategy::mtd(MtdMode::Proactive, true, true),
    ];

    const fn mtd(mode: MtdMode, topology: bool, aggregation: bool) -> Self {
        Strategy::Mtd {
            mode,
            topology,
            aggregation,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline(kind) => kind.as_str(),
            Strategy::Mtd {
                mode,
                topology,
                aggregation,
            } => match (mode, topology, aggregation) {
                (MtdMode::Reactive, true, false) => "reactive_topology",
                (MtdMode::Reactive, false, true) => "reactive_aggregation",
                (MtdMode::Reactive, true, true) => "reactive_topology_aggregation",
                (MtdMode::Proactive, true, false) => "proactive_topology",
                (MtdMode::Proactive, false, true) => "proactive_aggregation",
                (MtdMode::Proactive, true, true) => "proactive_topology_aggregation",
                _ => "off",
            },
        }
    }

    /// Overrides the aggregation baseline or the MTD section of `cfg`.
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        match self {
            Strategy::Baseline(kind) => {
                cfg.aggregation.baseline = kind;
                cfg.mtd.mode = MtdMode::Off;
            }
            Strategy::Mtd {
                mode,
                topology,
                aggregation,
            } => {
                cfg.mtd.mode = mode;
                cfg.mtd.strategies.clear();
                if topology {
                    cfg.mtd.strategies.insert(MtdStrategy::Topology);
                }
                if aggregation {
                    cfg.mtd.strategies.insert(MtdStrategy::Aggregation);
                }
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Strategy::ALL.iter().map(|k| k.name()).collect();
            format!("unknown strategy `{s}`, expected one of {}", names.join(", "))
        })
    }
}

pub fn parse_topology(s: &str) -> Result<TopologyKind, String> {
    [TopologyKind::Fully, TopologyKind::Ring, TopologyKind::Star]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown topology `{s}`, expected fully, ring or star"))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub report: ExperimentReport,
    pub wall_clock_seconds: f64,
    pub rounds_csv: PathBuf,
    pub summary_json: PathBuf,
}

/// Runs `cfg` and writes `rounds.csv` and `summary.json` into `out`.
pub fn run_to_dir(
    raw: &LoadedConfig,
    cfg: &ExperimentConfig,
    opts: RunOptions,
    out: &Path,
) -> anyhow::Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let data = experiment_data(cfg)?;
    let start = Instant::now();
    let report = run_experiment(cfg, &data, opts)?;
    let wall_clock_seconds = start.elapsed().as_secs_f64();

    let rounds_csv = out.join(ROUNDS_FILE);
    let summary_json = out.join(SUMMARY_FILE);
    write_rounds_csv(&report.records, &rounds_csv)?;
    let summary = Summary::new(raw.raw.clone(), cfg, &report, wall_clock_seconds);
    write_summary_json(&summary, &summary_json)?;
    log::info!(
        "final benign f1 {:.4}, asr {:?} in {:.1}s -> {}",
        report.final_f1,
        report.final_asr,
        wall_clock_seconds,
        out.display()
    );
    Ok(RunOutput {
        config: cfg.clone(),
        report,
        wall_clock_seconds,
        rounds_csv,
        summary_json,
    })
}

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub pnrs: Vec<f64>,
    pub strategies: Vec<Strategy>,
    /// Empty means the topology of the config.
    pub topologies: Vec<TopologyKind>,
}

/// One line of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub pnr: f64,
    pub strategy: String,
    pub topology: String,
    pub seed: u64,
    pub final_f1: f64,
    pub final_asr: Option<f64>,
    pub cell: String,
}

pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

pub fn cell_name(pnr: f64, strategy: Strategy, topology: TopologyKind) -> String {
    format!("pnr{pnr:.2}_{}_{}", strategy.name(), topology.as_str())
}

/// Runs every PNR x strategy x topology cell into its own directory under
/// `out` and writes a combined `sweep_summary.csv`.
pub fn sweep(raw: &LoadedConfig, grid: &SweepGrid, opts: RunOptions, out: &Path) -> anyhow::Result<Vec<SweepRow>> {
    if raw.config.attack.kind == AttackKind::None {
        bail!("invalid config `attack.kind`: a sweep over PNR needs an attack kind other than none");
    }
    if grid.pnrs.is_empty() || grid.strategies.is_empty() {
        bail!("a sweep needs at least one PNR and one strategy");
    }
    let topologies = if grid.topologies.is_empty() {
        vec![raw.config.topology]
    } else {
        grid.topologies.clone()
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;

    let mut rows = Vec::new();
    for &topology in &topologies {
        for &pnr in &grid.pnrs {
            for &strategy in &grid.strategies {
                let mut cfg = raw.config.clone();
                cfg.topology = topology;
                cfg.attack.pnr = pnr;
                strategy.apply(&mut cfg);
                let cell = cell_name(pnr, strategy, topology);
                log::info!("sweep cell {cell}");
                let run =
                    run_to_dir(raw, &cfg, opts, &out.join(&cell)).with_context(|| format!("sweep cell {cell}"))?;
                rows.push(SweepRow {
                    pnr,
                    strategy: strategy.name().into(),
                    topology: topology.as_str().into(),
                    seed: cfg.seed,
                    final_f1: run.report.final_f1,
                    final_asr: run.report.final_asr,
                    cell,
                });
            }
        }
    }
    write_sweep_summary(&rows, &out.join(SWEEP_SUMMARY_FILE))?;
    Ok(rows)
}

fn write_sweep_summary(rows: &[SweepRow], path: &Path) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["pnr", "strategy", "topology", "seed", "final_f1", "final_asr", "cell"])?;
    for r in rows {
        w.write_record([
            format!("{:.2}", r.pnr),
            r.strategy.clone(),
            r.topology.clone(),
            r.seed.to_string(),
            format!("{:.6}", r.final_f1),
            r.final_asr.map(|a| format!("{a:.6}")).unwrap_or_default(),
            r.cell.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
