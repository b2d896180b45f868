//! Operator-equivalence runs: the same ingress sequence through the
//! dedicated build and the aggregate-only builds, compared as output
//! multisets (tuples field-exact, watermarks excluded).

use std::collections::HashMap;

use crate::error::Result;
use crate::exec::{run_deterministic, RunOptions, RunOutcome};
use crate::graph::Graph;
use crate::ingress::{ingress_stream, IngressConfig};
use crate::pipeline::{
    build_filter, build_flatmap, build_join, build_map, build_stateful, Mode, PipelineOptions,
};
use crate::tuple::{StreamElement, Tuple};
use crate::window::WindowSpec;

use super::config::WorkloadConfig;
use super::workload::{
    filter_fn, flatmap_fn, fold_config, generate_join_workload, generate_workload, join_predicate,
    map_fn, record_key,
};
use super::OpKind;

/// Outcome of one equivalence run.
pub struct EquivReport {
    pub pass: bool,
    /// Output multiset size of the dedicated build.
    pub dedicated_outputs: usize,
    /// (mode, output count, capped symmetric difference vs dedicated).
    pub compared: Vec<(Mode, usize, Vec<String>)>,
    /// Run stats per mode, dedicated first.
    pub stats: Vec<(Mode, crate::exec::RunStats)>,
}

impl EquivReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (mode, count, diff) in &self.compared {
            out.push_str(&format!(
                "{mode}: {count} outputs vs dedicated {}: {}\n",
                self.dedicated_outputs,
                if diff.is_empty() { "EQUAL" } else { "DIFFER" }
            ));
            for line in diff {
                out.push_str(&format!("  {line}\n"));
            }
        }
        out
    }
}

/// Builds the pipeline graph for one (operator, mode) pair.
pub fn build_pipeline(cfg: &WorkloadConfig, mode: Mode) -> Result<Graph> {
    let mut opts = PipelineOptions::new(mode, cfg.wm_period)
        .with_parallelism(cfg.parallelism)
        .with_variant(cfg.variant);
    if !cfg.guards {
        opts = opts.without_guards();
    }
    match cfg.operator {
        OpKind::Filter => build_filter(filter_fn(cfg.selectivity, cfg.cost), &opts),
        OpKind::Map => build_map(map_fn(cfg.cost), &opts),
        OpKind::FlatMap => build_flatmap(flatmap_fn(cfg.selectivity, cfg.cost), &opts),
        OpKind::Join => build_join(
            WindowSpec::new(cfg.wa, cfg.ws, 0)?,
            record_key(),
            record_key(),
            join_predicate(cfg.selectivity, cfg.cost),
            &opts,
        ),
        OpKind::Stateful => build_stateful(fold_config(cfg.fold, cfg.period), &opts),
    }
}

/// The modes an equivalence run compares against dedicated.
pub fn comparison_modes(op: OpKind) -> &'static [Mode] {
    match op {
        OpKind::Stateful => &[Mode::Agg],
        _ => &[Mode::Agg, Mode::AggPlus],
    }
}

fn multiset(outcome: &RunOutcome) -> HashMap<Vec<u8>, (i64, Tuple)> {
    let mut m: HashMap<Vec<u8>, (i64, Tuple)> = HashMap::new();
    for t in outcome.egress_tuples() {
        let e = m.entry(t.canonical_bytes()).or_insert_with(|| (0, t.clone()));
        e.0 += 1;
    }
    m
}

/// Capped symmetric difference, rendered for the report.
fn diff(
    dedicated: &HashMap<Vec<u8>, (i64, Tuple)>,
    other: &HashMap<Vec<u8>, (i64, Tuple)>,
    cap: usize,
) -> Vec<String> {
    let mut lines = Vec::new();
    for (k, (n, t)) in dedicated {
        let m = other.get(k).map_or(0, |e| e.0);
        if m != *n && lines.len() < cap {
            lines.push(format!("dedicated has {n} x {t}, other has {m}"));
        }
    }
    for (k, (m, t)) in other {
        if !dedicated.contains_key(k) && lines.len() < cap {
            lines.push(format!("other has {m} x {t}, dedicated has 0"));
        }
    }
    lines
}

/// Ingress element streams shared by every build of this config: the
/// flush horizon is the largest any compared graph needs.
pub fn shared_inputs(cfg: &WorkloadConfig, graphs: &[&Graph]) -> Vec<Vec<StreamElement>> {
    let ing = IngressConfig { watermark_period: cfg.wm_period };
    let record_streams: Vec<Vec<Tuple>> = if cfg.operator == OpKind::Join {
        let (a, b) = generate_join_workload(cfg, cfg.seed);
        vec![a, b]
    } else {
        vec![generate_workload(cfg, cfg.seed)]
    };
    let max_ts = record_streams.iter().flatten().map(|t| t.ts).max().unwrap_or(0);
    let flush = graphs.iter().map(|g| g.flush_horizon(max_ts)).max().unwrap_or(max_ts + 1);
    record_streams
        .into_iter()
        .map(|recs| ingress_stream(recs, ing, flush).elements)
        .collect()
}

/// Runs dedicated vs aggregate builds on one shared ingress sequence in
/// deterministic mode and compares output multisets exactly.
pub fn run_equivalence(cfg: &WorkloadConfig) -> Result<EquivReport> {
    cfg.validate()?;
    let dedicated_graph = build_pipeline(cfg, Mode::Dedicated)?;
    let modes = comparison_modes(cfg.operator);
    let mut graphs = vec![dedicated_graph];
    for &mode in modes {
        graphs.push(build_pipeline(cfg, mode)?);
    }
    let inputs = shared_inputs(cfg, &graphs.iter().collect::<Vec<_>>());

    let opts = RunOptions::default();
    let dedicated_run = run_deterministic(&graphs[0], inputs.clone(), &opts)?;
    let dedicated_set = multiset(&dedicated_run);
    let dedicated_outputs = dedicated_run.egress_tuples().count();

    let mut pass = true;
    let mut compared = Vec::new();
    let mut stats = vec![(Mode::Dedicated, dedicated_run.stats)];
    for (i, &mode) in modes.iter().enumerate() {
        let run = run_deterministic(&graphs[i + 1], inputs.clone(), &opts)?;
        let set = multiset(&run);
        let d = diff(&dedicated_set, &set, 10);
        if !d.is_empty() {
            pass = false;
        }
        compared.push((mode, run.egress_tuples().count(), d));
        stats.push((mode, run.stats));
    }
    Ok(EquivReport { pass, dedicated_outputs, compared, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_flatmap_config_passes() {
        let cfg = WorkloadConfig { records: 300, ..WorkloadConfig::default() };
        let report = run_equivalence(&cfg).unwrap();
        assert!(report.pass, "{}", report.render());
        assert!(report.dedicated_outputs > 0);
    }

    #[test]
    fn join_config_passes() {
        let cfg = WorkloadConfig {
            operator: OpKind::Join,
            records: 150,
            selectivity: 0.05,
            ..WorkloadConfig::default()
        };
        let report = run_equivalence(&cfg).unwrap();
        assert!(report.pass, "{}", report.render());
        assert!(report.dedicated_outputs > 0);
    }

    #[test]
    fn stateful_config_passes() {
        let cfg = WorkloadConfig {
            operator: OpKind::Stateful,
            records: 200,
            key_cardinality: 4,
            ..WorkloadConfig::default()
        };
        let report = run_equivalence(&cfg).unwrap();
        assert!(report.pass, "{}", report.render());
        assert!(report.dedicated_outputs > 0);
    }
}
