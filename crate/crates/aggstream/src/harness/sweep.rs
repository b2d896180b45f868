//! The experiment grid: selectivity {low, avg, high} x cost {low, high}
//! x operator {FM, J}, each cell run in all three modes.
//!
//! Per cell and mode the sweep searches the rate grid for the maximum
//! sustainable rate, then reruns at a fraction of the dedicated build's
//! capacity so latency is compared at a common offered load. One metrics
//! CSV is written per cell and mode, plus a comparison summary with
//! throughput ratios against dedicated.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::pipeline::Mode;

use super::bench::{find_max_sustainable, run_bench};
use super::config::WorkloadConfig;
use super::OpKind;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub rate_grid: Vec<f64>,
    /// Fraction of dedicated capacity used for the latency comparison.
    pub compare_fraction: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            rate_grid: vec![2_500.0, 5_000.0, 10_000.0, 20_000.0, 40_000.0, 80_000.0, 160_000.0],
            compare_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub id: String,
    pub operator: OpKind,
    pub selectivity: f64,
    pub cost: u64,
    /// Per mode: (max sustainable rate if any, p99 ms at the comparison
    /// rate, mean throughput at the comparison rate).
    pub per_mode: Vec<(Mode, Option<f64>, f64, f64)>,
}

impl SweepCell {
    pub fn capacity(&self, mode: Mode) -> Option<f64> {
        self.per_mode.iter().find(|(m, ..)| *m == mode).and_then(|(_, c, ..)| *c)
    }

    pub fn p99(&self, mode: Mode) -> Option<f64> {
        self.per_mode.iter().find(|(m, ..)| *m == mode).map(|&(_, _, p, _)| p)
    }
}

fn grid(cfg: &WorkloadConfig) -> Vec<(String, OpKind, f64, u64)> {
    let mut cells = Vec::new();
    for (op, sels) in [
        (OpKind::FlatMap, [0.2, 1.0, 3.0]),
        (OpKind::Join, [1e-4, 1e-3, 3e-3]),
    ] {
        for (sel_name, sel) in ["low", "avg", "high"].iter().zip(sels) {
            for (cost_name, cost) in [("low", 0u64), ("high", cfg.cost.max(200))] {
                cells.push((format!("{sel_name}-{cost_name}-{op}"), op, sel, cost));
            }
        }
    }
    cells
}

/// Runs the full grid. `out_dir` receives one CSV per cell and mode plus
/// `summary.csv`; pass `None` to skip file output.
pub fn run_sweep(
    base: &WorkloadConfig,
    opts: &SweepOptions,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepCell>> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut cells = Vec::new();
    for (id, op, sel, cost) in grid(base) {
        let mut per_mode = Vec::new();
        let mut dedicated_capacity = None;
        for mode in [Mode::Dedicated, Mode::Agg, Mode::AggPlus] {
            let mut cfg = base.clone();
            cfg.operator = op;
            cfg.mode = mode;
            cfg.selectivity = sel;
            cfg.cost = cost;
            let (capacity, _) = find_max_sustainable(&cfg, &opts.rate_grid)?;
            if mode == Mode::Dedicated {
                dedicated_capacity = capacity;
            }
            let compare_rate = dedicated_capacity
                .or(capacity)
                .unwrap_or(opts.rate_grid[0])
                * opts.compare_fraction;
            cfg.rate = compare_rate.max(opts.rate_grid[0] * opts.compare_fraction);
            let summary = run_bench(&cfg)?;
            if let Some(dir) = out_dir {
                std::fs::write(dir.join(format!("{id}-{mode}.csv")), summary.to_csv())?;
            }
            per_mode.push((mode, capacity, summary.overall_p99_ms, summary.mean_throughput));
        }
        eprintln!("sweep cell {id}: {per_mode:?}");
        cells.push(SweepCell { id, operator: op, selectivity: sel, cost, per_mode });
    }
    if let Some(dir) = out_dir {
        std::fs::write(dir.join("summary.csv"), render_summary(&cells))?;
    }
    Ok(cells)
}

/// Summary schema: one line per (cell, mode) with capacity, the ratio of
/// capacity to dedicated capacity, and the p99 at the comparison rate.
pub fn render_summary(cells: &[SweepCell]) -> String {
    let mut out = String::from("cell,mode,max_sustainable,capacity_ratio_vs_dedicated,p99_ms\n");
    for cell in cells {
        let dedicated = cell.capacity(Mode::Dedicated);
        for (mode, capacity, p99, _) in &cell.per_mode {
            let ratio = match (capacity, dedicated) {
                (Some(c), Some(d)) if d > 0.0 => format!("{:.3}", c / d),
                _ => String::from("NA"),
            };
            let cap = capacity.map_or(String::from("NA"), |c| format!("{c:.0}"));
            let _ = writeln!(out, "{},{mode},{cap},{ratio},{p99:.3}", cell.id);
        }
    }
    out
}

/// The informational trend checks: how many cells order latency
/// D <= A+ <= A, and whether high-selectivity FlatMap capacity satisfies
/// agg <= agg-plus.
pub fn trend_report(cells: &[SweepCell]) -> String {
    let mut latency_ordered = 0usize;
    for cell in cells {
        let (d, a, ap) = (
            cell.p99(Mode::Dedicated).unwrap_or(f64::MAX),
            cell.p99(Mode::Agg).unwrap_or(f64::MAX),
            cell.p99(Mode::AggPlus).unwrap_or(f64::MAX),
        );
        if d <= ap + 1e-9 && ap <= a + 1e-9 {
            latency_ordered += 1;
        }
    }
    let mut out = format!(
        "latency ordering dedicated <= agg-plus <= agg holds in {latency_ordered}/{} cells\n",
        cells.len()
    );
    for cell in cells.iter().filter(|c| c.operator == OpKind::FlatMap && c.selectivity >= 3.0) {
        let (a, ap) = (cell.capacity(Mode::Agg), cell.capacity(Mode::AggPlus));
        let _ = writeln!(
            out,
            "high-selectivity FM cell {}: agg capacity {a:?} vs agg-plus {ap:?} (expect agg <= agg-plus)",
            cell.id
        );
    }
    out
}
