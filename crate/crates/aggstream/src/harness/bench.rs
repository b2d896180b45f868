//! Wall-clock benchmark runs over the pipelined executor.
//!
//! The feeder paces records at the configured rate, stamping each with
//! an ingestion instant; the collector matches egress tuples back to the
//! instants of their contributing inputs (by unique id) and, for
//! window-triggered outputs, to the emission instant of the triggering
//! watermark. Per elapsed second the run reports the injected rate, the
//! measured throughput (tuples consumed for FlatMap-family operators,
//! predicate comparisons for joins), and the 99th-percentile latency.
//! Warmup and cooldown seconds do not contribute.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::pipeline::{
    build_filter, build_flatmap, build_join, build_map, build_stateful, Mode, PipelineOptions,
};
use crate::pipelined::{start_pipelined, PipelinedOptions, RunProbe};
use crate::tuple::{StreamElement, Timestamp, Tuple, Value};
use crate::window::WindowSpec;

use super::config::WorkloadConfig;
use super::workload::{
    filter_fn, flatmap_fn, fold_config, join_predicate, map_fn, record_key, ATTR_ID,
};
use super::OpKind;

/// One emitted metrics row; the CSV schema is
/// `second,injected_rate,throughput,p99_latency_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub second: u64,
    pub injected_rate: f64,
    pub throughput: f64,
    pub p99_latency_ms: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "second,injected_rate,throughput,p99_latency_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3}",
            self.second, self.injected_rate, self.throughput, self.p99_latency_ms
        )
    }

    pub fn parse_csv(line: &str) -> Result<Self> {
        let mut parts = line.split(',');
        let mut next = || {
            parts
                .next()
                .ok_or_else(|| Error::config(format!("short metrics row: {line}")))
        };
        Ok(Self {
            second: next()?.parse().map_err(|e| Error::config(format!("{e}")))?,
            injected_rate: next()?.parse().map_err(|e| Error::config(format!("{e}")))?,
            throughput: next()?.parse().map_err(|e| Error::config(format!("{e}")))?,
            p99_latency_ms: next()?.parse().map_err(|e| Error::config(format!("{e}")))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchSummary {
    pub rows: Vec<MetricsRow>,
    pub mean_injected: f64,
    pub mean_throughput: f64,
    pub overall_p99_ms: f64,
    /// Rows whose p99 exceeded the latency cap.
    pub violations: u64,
    pub sustainable: bool,
    pub outputs: u64,
}

impl BenchSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MetricsRow::CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.to_csv());
            s.push('\n');
        }
        s
    }
}

/// The node whose consumed tuples define FlatMap-family throughput, per
/// mode; joins measure comparisons instead.
fn measured_node(cfg: &WorkloadConfig) -> &'static str {
    match (cfg.operator, cfg.mode) {
        (OpKind::Filter, Mode::Dedicated) => "filter",
        (OpKind::Map, Mode::Dedicated) => "map",
        (OpKind::FlatMap, Mode::Dedicated) => "flatmap",
        (OpKind::Join, Mode::Dedicated) => "join",
        (OpKind::Join, Mode::Agg) => "match-embed",
        (OpKind::Join, Mode::AggPlus) => "match-multi",
        (OpKind::Stateful, Mode::Dedicated) => "keyed-state",
        (OpKind::Stateful, _) => "state-fold",
        (_, Mode::Agg) => "embed",
        (_, Mode::AggPlus) => "embed-multi",
    }
}

fn build_bench_graph(cfg: &WorkloadConfig, probe: &Arc<RunProbe>) -> Result<Graph> {
    let mut opts = PipelineOptions::new(cfg.mode, cfg.wm_period)
        .with_parallelism(cfg.parallelism)
        .with_variant(cfg.variant);
    if !cfg.guards {
        opts = opts.without_guards();
    }
    match cfg.operator {
        OpKind::Filter => build_filter(filter_fn(cfg.selectivity, cfg.cost), &opts),
        OpKind::Map => build_map(map_fn(cfg.cost), &opts),
        OpKind::FlatMap => build_flatmap(flatmap_fn(cfg.selectivity, cfg.cost), &opts),
        OpKind::Join => {
            let inner = join_predicate(cfg.selectivity, cfg.cost);
            let probe = probe.clone();
            let counting: crate::ops::JoinPredicate = Arc::new(move |a: &Tuple, b: &Tuple| {
                probe.count_comparison();
                inner(a, b)
            });
            build_join(WindowSpec::new(cfg.wa, cfg.ws, 0)?, record_key(), record_key(), counting, &opts)
        }
        OpKind::Stateful => build_stateful(fold_config(cfg.fold, cfg.period), &opts),
    }
}

/// Positions of the unique-id attributes in an egress tuple.
fn id_positions(cfg: &WorkloadConfig) -> Vec<usize> {
    match cfg.operator {
        // Join outputs concatenate both full attribute lists after their
        // timestamps: [ts1, id1, key1, val1, u1, ts2, id2, ...].
        OpKind::Join => vec![1, 6],
        // Periodic-state outputs are [key, acc]; only the trigger counts.
        OpKind::Stateful => vec![],
        _ => vec![ATTR_ID],
    }
}

/// Whether outputs of this build are produced by watermark triggers.
fn watermark_triggered(cfg: &WorkloadConfig) -> bool {
    match cfg.operator {
        OpKind::Stateful => true,
        OpKind::Join => cfg.mode != Mode::Dedicated,
        _ => cfg.mode != Mode::Dedicated,
    }
}

struct IngestLog {
    start: Instant,
    /// Nanos since start per record id slot; 0 = not ingested.
    records: Vec<AtomicU64>,
    side2_base: usize,
    /// (watermark value, nanos since start), append-only, sorted by value.
    watermarks: Mutex<Vec<(Timestamp, u64)>>,
}

impl IngestLog {
    fn nanos(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    fn record(&self, id: i64) {
        if let Some(slot) = self.slot(id) {
            self.records[slot].store(self.nanos().max(1), Ordering::Relaxed);
        }
    }

    fn slot(&self, id: i64) -> Option<usize> {
        let idx = if id >= super::workload::SIDE2_ID_OFFSET {
            self.side2_base + (id - super::workload::SIDE2_ID_OFFSET) as usize
        } else {
            id as usize
        };
        (idx < self.records.len()).then_some(idx)
    }

    fn ingested_at(&self, id: i64) -> Option<u64> {
        let v = self.records[self.slot(id)?].load(Ordering::Relaxed);
        (v > 0).then_some(v)
    }

    fn record_watermark(&self, w: Timestamp) {
        self.watermarks.lock().expect("lock").push((w, self.nanos()));
    }

    /// Emission instant of the first watermark at or above `w`.
    fn trigger_at(&self, w: Timestamp) -> Option<u64> {
        let marks = self.watermarks.lock().expect("lock");
        let idx = marks.partition_point(|&(ts, _)| ts < w);
        marks.get(idx).map(|&(_, nanos)| nanos)
    }
}

/// Runs one wall-clock benchmark.
pub fn run_bench(cfg: &WorkloadConfig) -> Result<BenchSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let seconds = cfg.duration_secs as usize + 4;
    let probe = RunProbe::new(measured_node(cfg), start, seconds);
    let graph = build_bench_graph(cfg, &probe)?;

    let per_stream_total = (cfg.rate * cfg.duration_secs as f64).ceil() as usize;
    let streams = graph.ingresses.len();
    let log = Arc::new(IngestLog {
        start,
        records: (0..per_stream_total * streams).map(|_| AtomicU64::new(0)).collect(),
        side2_base: per_stream_total,
        watermarks: Mutex::new(Vec::new()),
    });

    let mut run = start_pipelined(&graph, &PipelinedOptions::default(), Some(probe.clone()));
    let mut feeds = std::mem::take(&mut run.feeds);

    // Collector: matches outputs to ingestion instants.
    let collector = {
        let egress = run.egress.clone();
        let log = log.clone();
        let ids = id_positions(cfg);
        let triggered = watermark_triggered(cfg);
        std::thread::spawn(move || -> (Vec<Vec<f64>>, u64) {
            let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); seconds];
            let mut outputs = 0u64;
            while let Ok(el) = egress.recv() {
                let StreamElement::Tuple(t) = el else { continue };
                outputs += 1;
                let now = log.nanos();
                let mut contributing: u64 = 0;
                for &pos in &ids {
                    if let Some(v) = t.attrs.get(pos).and_then(Value::as_int) {
                        if let Some(at) = log.ingested_at(v) {
                            contributing = contributing.max(at);
                        }
                    }
                }
                if triggered {
                    if let Some(at) = log.trigger_at(t.ts + 1) {
                        contributing = contributing.max(at);
                    }
                }
                if contributing == 0 {
                    continue;
                }
                let latency_ms = (now.saturating_sub(contributing)) as f64 / 1e6;
                let sec = ((now / 1_000_000_000) as usize).min(seconds - 1);
                buckets[sec].push(latency_ms);
            }
            (buckets, outputs)
        })
    };

    // Feeder: paced injection with periodic watermarks.
    let injected: Vec<AtomicU64> = (0..seconds).map(|_| AtomicU64::new(0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.wm_period.max(1);
    let mut next_mark = d;
    let mut max_ts = 0u64;
    let deadline = start + Duration::from_secs(cfg.duration_secs);
    let mut sent = 0usize;
    // Batched pacing: send everything the schedule says is due, then
    // sleep. Spinning would starve the worker threads on small machines.
    while sent < per_stream_total {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        let due = ((now - start).as_secs_f64() * cfg.rate) as usize;
        let batch_end = due.min(per_stream_total).min(sent + 4096);
        if batch_end <= sent {
            std::thread::sleep(Duration::from_micros(500));
            continue;
        }
        while sent < batch_end {
            // Event time runs in milliseconds of schedule time.
            let ts = (sent as f64 / cfg.rate * 1000.0) as Timestamp;
            max_ts = ts;
            while next_mark <= ts {
                log.record_watermark(next_mark);
                for feed in &mut feeds {
                    feed.send(StreamElement::Watermark(next_mark))?;
                }
                next_mark += d;
            }
            for (s, feed) in feeds.iter_mut().enumerate() {
                let id =
                    if s == 0 { sent as i64 } else { super::workload::SIDE2_ID_OFFSET + sent as i64 };
                let t = Tuple::new(
                    ts,
                    vec![
                        Value::Int(id),
                        Value::Int(rng.gen_range(0..cfg.key_cardinality.max(1)) as i64),
                        Value::Int(rng.gen_range(0..1_000_000)),
                        Value::Float(rng.gen::<f64>()),
                    ],
                );
                log.record(id);
                feed.send(StreamElement::Tuple(t))?;
            }
            let sec = (start.elapsed().as_secs() as usize).min(seconds - 1);
            injected[sec].fetch_add(1, Ordering::Relaxed);
            sent += 1;
        }
    }

    // Flush staircase up to the horizon, respecting the gap bound.
    let horizon = graph.flush_horizon(max_ts);
    while next_mark < horizon {
        log.record_watermark(next_mark);
        for feed in &mut feeds {
            feed.send(StreamElement::Watermark(next_mark))?;
        }
        next_mark += d;
    }
    log.record_watermark(horizon);
    for feed in &mut feeds {
        feed.send(StreamElement::Watermark(horizon))?;
    }
    drop(feeds);

    let (buckets, outputs) = collector.join().expect("collector panicked");
    run.finish(Vec::new())?;

    let from = cfg.warmup_secs;
    let to = cfg.duration_secs - cfg.cooldown_secs;
    let mut rows = Vec::new();
    let mut all_latencies = Vec::new();
    for sec in from..to {
        let s = sec as usize;
        let lat = &buckets[s];
        let throughput = if cfg.operator == OpKind::Join {
            probe.comparisons[s].load(Ordering::Relaxed) as f64
        } else {
            probe.tuples_in[s].load(Ordering::Relaxed) as f64
        };
        rows.push(MetricsRow {
            second: sec,
            injected_rate: injected[s].load(Ordering::Relaxed) as f64,
            throughput,
            p99_latency_ms: p99(lat),
        });
        all_latencies.extend_from_slice(lat);
    }
    let n = rows.len().max(1) as f64;
    let mean_injected = rows.iter().map(|r| r.injected_rate).sum::<f64>() / n;
    let mean_throughput = rows.iter().map(|r| r.throughput).sum::<f64>() / n;
    let violations = rows.iter().filter(|r| r.p99_latency_ms > cfg.latency_cap_ms).count() as u64;
    Ok(BenchSummary {
        rows,
        mean_injected,
        mean_throughput,
        overall_p99_ms: p99(&all_latencies),
        violations,
        sustainable: violations <= cfg.max_violations,
        outputs,
    })
}

fn p99(latencies: &[f64]) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latencies"));
    let idx = ((sorted.len() as f64) * 0.99).ceil() as usize;
    sorted[idx.saturating_sub(1).min(sorted.len() - 1)]
}

/// Largest rate in the ascending grid whose run stays sustainable, with
/// each attempted rate's summary.
pub fn find_max_sustainable(
    cfg: &WorkloadConfig,
    rate_grid: &[f64],
) -> Result<(Option<f64>, Vec<(f64, BenchSummary)>)> {
    let mut best = None;
    let mut attempts = Vec::new();
    for &rate in rate_grid {
        let mut c = cfg.clone();
        c.rate = rate;
        let summary = run_bench(&c)?;
        let ok = summary.sustainable;
        attempts.push((rate, summary));
        if ok {
            best = Some(rate);
        } else {
            break;
        }
    }
    Ok((best, attempts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_rows_roundtrip_csv() {
        let row = MetricsRow {
            second: 3,
            injected_rate: 1000.0,
            throughput: 998.5,
            p99_latency_ms: 12.25,
        };
        let parsed = MetricsRow::parse_csv(&row.to_csv()).unwrap();
        assert_eq!(parsed, row);
    }

    #[test]
    fn p99_picks_the_tail() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(p99(&v), 99.0);
        assert_eq!(p99(&[5.0]), 5.0);
        assert_eq!(p99(&[]), 0.0);
    }

    #[test]
    fn low_rate_bench_tracks_injection() {
        let cfg = WorkloadConfig {
            operator: OpKind::FlatMap,
            mode: Mode::Dedicated,
            rate: 2_000.0,
            duration_secs: 3,
            warmup_secs: 1,
            cooldown_secs: 1,
            wm_period: 50,
            latency_cap_ms: 2_000.0,
            ..WorkloadConfig::default()
        };
        let summary = run_bench(&cfg).unwrap();
        assert!(summary.outputs > 0);
        assert!(
            (summary.mean_throughput - summary.mean_injected).abs()
                <= 0.05 * summary.mean_injected.max(1.0),
            "throughput {} vs injected {}",
            summary.mean_throughput,
            summary.mean_injected
        );
        assert!(summary.sustainable);
    }
}
