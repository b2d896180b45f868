//! Pipelined execution: one thread per operator instance, connected by
//! bounded FIFO channels with blocking backpressure.
//!
//! Loop edges use unbounded channels (a bounded cyclic buffer can
//! deadlock under backpressure, and loop traffic is bounded per embedded
//! tuple), and every instance settles its loop channel before taking
//! further outside input. Output order across instances is not
//! deterministic; the output multiset equals the deterministic
//! executor's.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded, Receiver, Select, Sender};

use crate::error::{Error, Result};
use crate::exec::{NodeStats, RunOutcome, RunStats};
use crate::graph::{EdgeKind, Endpoint, Graph, IngressId, NodeId};
use crate::guard::{LoopInputGuard, LoopOutputGuard};
use crate::ops::Operator;
use crate::tuple::{KeyFn, StreamElement, Timestamp};

#[derive(Clone)]
pub struct PipelinedOptions {
    /// Capacity of non-loop channels.
    pub channel_capacity: usize,
}

impl Default for PipelinedOptions {
    fn default() -> Self {
        Self { channel_capacity: 1024 }
    }
}

/// Wall-clock instrumentation of one node, bucketed per elapsed second.
pub struct RunProbe {
    pub node: String,
    pub start: Instant,
    /// Tuples delivered to the node, per second.
    pub tuples_in: Vec<AtomicU64>,
    /// Join predicate invocations, per second.
    pub comparisons: Vec<AtomicU64>,
}

impl RunProbe {
    pub fn new(node: impl Into<String>, start: Instant, seconds: usize) -> Arc<Self> {
        Arc::new(Self {
            node: node.into(),
            start,
            tuples_in: (0..seconds).map(|_| AtomicU64::new(0)).collect(),
            comparisons: (0..seconds).map(|_| AtomicU64::new(0)).collect(),
        })
    }

    fn bucket(&self) -> usize {
        (self.start.elapsed().as_secs() as usize).min(self.tuples_in.len().saturating_sub(1))
    }

    /// Counts one join-predicate invocation in the current second; the
    /// harness wraps predicates with this so comparison throughput is
    /// measured uniformly across dedicated and composed builds.
    pub fn count_comparison(&self) {
        self.comparisons[self.bucket()].fetch_add(1, Ordering::Relaxed);
    }
}

struct Target {
    tx: Sender<StreamElement>,
    is_loop: bool,
    sent_w: Option<Timestamp>,
    label: String,
}

struct OutRouter {
    key: Option<KeyFn>,
    round_robin: usize,
    targets: Vec<Target>,
}

impl OutRouter {
    fn send(&mut self, el: StreamElement) -> Result<()> {
        match el {
            StreamElement::Tuple(t) => {
                let idx = if self.targets.len() == 1 {
                    0
                } else if let Some(key) = &self.key {
                    (fnv1a(&key(&t)) % self.targets.len() as u64) as usize
                } else {
                    self.round_robin = (self.round_robin + 1) % self.targets.len();
                    self.round_robin
                };
                send_blocking(&self.targets[idx], StreamElement::Tuple(t))
            }
            StreamElement::Watermark(w) => {
                for target in &mut self.targets {
                    if target.is_loop {
                        continue;
                    }
                    if let Some(prev) = target.sent_w {
                        if w < prev {
                            return Err(Error::WatermarkRegression {
                                edge: target.label.clone(),
                                previous: prev,
                                current: w,
                            });
                        }
                    }
                    target.sent_w = Some(w);
                    send_blocking(target, StreamElement::Watermark(w))?;
                }
                Ok(())
            }
        }
    }
}

/// Blocking send that gives up when the consumer is gone (the run is
/// already aborting).
fn send_blocking(target: &Target, el: StreamElement) -> Result<()> {
    target.tx.send(el).map_err(|_| Error::config(format!("channel to {} closed", target.label)))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct InChannel {
    rx: Receiver<StreamElement>,
    port: usize,
    is_loop: bool,
    recv_w: Option<Timestamp>,
    open: bool,
}

struct InstanceWorker {
    node_name: String,
    op: Box<dyn Operator>,
    input_guard: Option<LoopInputGuard>,
    output_guard: Option<LoopOutputGuard>,
    inputs: Vec<InChannel>,
    routers: Vec<OutRouter>,
    egress: Option<Sender<StreamElement>>,
    merged: Timestamp,
    late_observed: u64,
    probe: Option<Arc<RunProbe>>,
}

impl InstanceWorker {
    fn run(mut self) -> Result<(String, NodeStats)> {
        loop {
            self.settle_loops()?;
            let open: Vec<usize> =
                (0..self.inputs.len()).filter(|&i| self.inputs[i].open && !self.inputs[i].is_loop).collect();
            if open.is_empty() {
                self.settle_loops()?;
                break;
            }
            let mut sel = Select::new();
            for &i in &open {
                sel.recv(&self.inputs[i].rx);
            }
            let oper = sel.select();
            let idx = open[oper.index()];
            match oper.recv(&self.inputs[idx].rx) {
                Ok(el) => self.handle(idx, el)?,
                Err(_) => self.inputs[idx].open = false,
            }
        }
        // Senders drop here, closing downstream channels.
        Ok((self.node_name.clone(), self.stats()))
    }

    /// Drains loop channels until empty; elements handled may refill
    /// them, so keep polling.
    fn settle_loops(&mut self) -> Result<()> {
        loop {
            let mut got = None;
            for i in 0..self.inputs.len() {
                if self.inputs[i].is_loop {
                    if let Ok(el) = self.inputs[i].rx.try_recv() {
                        got = Some((i, el));
                        break;
                    }
                }
            }
            match got {
                Some((i, el)) => self.handle(i, el)?,
                None => return Ok(()),
            }
        }
    }

    fn handle(&mut self, idx: usize, el: StreamElement) -> Result<()> {
        match el {
            StreamElement::Watermark(w) => {
                self.inputs[idx].recv_w = Some(w);
                let merged = self
                    .inputs
                    .iter()
                    .filter(|c| !c.is_loop)
                    .map(|c| c.recv_w.unwrap_or(0))
                    .min()
                    .unwrap_or(0);
                if merged > self.merged {
                    self.merged = merged;
                    self.feed(StreamElement::Watermark(merged), 0)?;
                }
                Ok(())
            }
            StreamElement::Tuple(t) => {
                if self.inputs[idx].recv_w.is_some_and(|w| t.ts < w) {
                    self.late_observed += 1;
                }
                if let Some(probe) = &self.probe {
                    probe.tuples_in[probe.bucket()].fetch_add(1, Ordering::Relaxed);
                }
                let port = self.inputs[idx].port;
                self.feed(StreamElement::Tuple(t), port)
            }
        }
    }

    fn feed(&mut self, el: StreamElement, port: usize) -> Result<()> {
        let mut admitted = Vec::new();
        if let Some(guard) = self.input_guard.as_mut() {
            guard.process(el, &mut admitted)?;
        } else {
            admitted.push(el);
        }
        let mut out = Vec::new();
        for el in admitted {
            match el {
                StreamElement::Tuple(t) => self.op.on_tuple(port, t, &mut out)?,
                StreamElement::Watermark(w) => self.op.on_watermark(w, &mut out)?,
            }
        }
        self.emit(out)
    }

    fn emit(&mut self, produced: Vec<StreamElement>) -> Result<()> {
        if produced.is_empty() {
            return Ok(());
        }
        let released = if let Some(guard) = self.output_guard.as_mut() {
            let mut buf = Vec::new();
            for el in produced {
                guard.process(el, &mut buf)?;
            }
            buf
        } else {
            produced
        };
        for el in released {
            if let Some(egress) = &self.egress {
                egress
                    .send(el.clone())
                    .map_err(|_| Error::config("egress channel closed".to_string()))?;
            }
            for router in &mut self.routers {
                router.send(el.clone())?;
            }
        }
        Ok(())
    }

    fn stats(&self) -> NodeStats {
        let mut s = NodeStats {
            late_drops: self.op.late_drops(),
            late_observed: self.late_observed,
            comparisons: self.op.comparisons(),
            ..NodeStats::default()
        };
        if let Some(g) = &self.input_guard {
            s.input_guard_pending = g.pending_counts().values().sum();
            s.input_guard_queued = g.queued_watermarks() as u64;
        }
        if let Some(g) = &self.output_guard {
            s.output_guard_pending = g.pending_counts().values().sum();
        }
        s
    }
}

/// Sender side of one ingress: routes elements into the entry edges the
/// way a producer instance would.
pub struct IngressFeed {
    routers: Vec<OutRouter>,
}

impl IngressFeed {
    pub fn send(&mut self, el: StreamElement) -> Result<()> {
        for router in &mut self.routers {
            router.send(el.clone())?;
        }
        Ok(())
    }
}

/// A running pipelined graph.
pub struct PipelinedRun {
    pub feeds: Vec<IngressFeed>,
    pub egress: Receiver<StreamElement>,
    threads: Vec<std::thread::JoinHandle<Result<(String, NodeStats)>>>,
}

/// Instantiates the graph across threads. Feed elements through
/// `feeds`, drop them (or call `finish`) to signal end of input, and
/// read `egress` until it disconnects.
pub fn start_pipelined(
    graph: &Graph,
    opts: &PipelinedOptions,
    probe: Option<Arc<RunProbe>>,
) -> PipelinedRun {
    let trace = std::env::var("AGGSTREAM_GUARD_TRACE").is_ok_and(|v| v == "1");
    let instance_count: Vec<usize> = graph.nodes.iter().map(|n| n.parallelism).collect();

    // Channel matrix per logical edge: producer instance x consumer
    // instance.
    struct EdgeChannels {
        senders: Vec<Vec<Sender<StreamElement>>>,
        receivers: Vec<Vec<Receiver<StreamElement>>>,
    }
    let mut edge_channels = Vec::new();
    for e in &graph.edges {
        let producers = match e.from {
            Endpoint::Ingress(_) => 1,
            Endpoint::Node(NodeId(n)) => instance_count[n],
        };
        let consumers = instance_count[e.to.0];
        let mut senders = Vec::new();
        let mut receivers = Vec::new();
        for _ in 0..producers {
            let mut srow = Vec::new();
            let mut rrow = Vec::new();
            for _ in 0..consumers {
                let (tx, rx) = if e.kind == EdgeKind::Loop {
                    unbounded()
                } else {
                    bounded(opts.channel_capacity)
                };
                srow.push(tx);
                rrow.push(rx);
            }
            senders.push(srow);
            receivers.push(rrow);
        }
        edge_channels.push(EdgeChannels { senders, receivers });
    }

    let routers_for = |from: Endpoint, producer: usize| -> Vec<OutRouter> {
        graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == from)
            .map(|(le, e)| OutRouter {
                key: graph.nodes[e.to.0].routing[e.port].clone(),
                round_robin: 0,
                targets: edge_channels[le].senders[producer]
                    .iter()
                    .cloned()
                    .map(|tx| Target {
                        tx,
                        is_loop: e.kind == EdgeKind::Loop,
                        sent_w: None,
                        label: graph.nodes[e.to.0].name.clone(),
                    })
                    .collect(),
            })
            .collect()
    };

    let (egress_tx, egress_rx) = unbounded();
    let mut threads = Vec::new();
    for (n, node) in graph.nodes.iter().enumerate() {
        for inst in 0..node.parallelism {
            let mut inputs = Vec::new();
            for (le, e) in graph.edges.iter().enumerate() {
                if e.to.0 != n {
                    continue;
                }
                let producers = edge_channels[le].receivers.len();
                for p in 0..producers {
                    inputs.push(InChannel {
                        rx: edge_channels[le].receivers[p][inst].clone(),
                        port: e.port,
                        is_loop: e.kind == EdgeKind::Loop,
                        recv_w: None,
                        open: true,
                    });
                }
            }
            let input_guard = node.input_guard.as_ref().map(|f| {
                let g = f();
                if trace {
                    g.with_trace(format!("{}[{inst}].in", node.name))
                } else {
                    g
                }
            });
            let output_guard = node.output_guard.as_ref().map(|f| {
                let g = f();
                if trace {
                    g.with_trace(format!("{}[{inst}].out", node.name))
                } else {
                    g
                }
            });
            let worker = InstanceWorker {
                node_name: node.name.clone(),
                op: (node.factory)(),
                input_guard,
                output_guard,
                inputs,
                routers: routers_for(Endpoint::Node(NodeId(n)), inst),
                egress: (graph.egress.0 == n).then(|| egress_tx.clone()),
                merged: 0,
                late_observed: 0,
                probe: probe.as_ref().filter(|p| p.node == node.name).cloned(),
            };
            threads.push(std::thread::spawn(move || worker.run()));
        }
    }
    drop(egress_tx);

    let feeds = (0..graph.ingresses.len())
        .map(|i| IngressFeed { routers: routers_for(Endpoint::Ingress(IngressId(i)), 0) })
        .collect();

    PipelinedRun { feeds, egress: egress_rx, threads }
}

impl PipelinedRun {
    /// Drops the ingress feeds, drains remaining egress, joins all
    /// threads, and merges their stats.
    pub fn finish(self, mut egress: Vec<StreamElement>) -> Result<RunOutcome> {
        drop(self.feeds);
        while let Ok(el) = self.egress.recv() {
            egress.push(el);
        }
        let mut per_node = std::collections::BTreeMap::new();
        let mut root_error: Option<Error> = None;
        for t in self.threads {
            match t.join().expect("worker thread panicked") {
                Ok((name, stats)) => {
                    let s: &mut NodeStats = per_node.entry(name).or_default();
                    s.late_drops += stats.late_drops;
                    s.late_observed += stats.late_observed;
                    s.comparisons += stats.comparisons;
                    s.input_guard_pending += stats.input_guard_pending;
                    s.input_guard_queued += stats.input_guard_queued;
                    s.output_guard_pending += stats.output_guard_pending;
                }
                Err(e) => {
                    let is_root = !matches!(e, Error::Config(_));
                    match &root_error {
                        None => root_error = Some(e),
                        Some(prev) if is_root && matches!(prev, Error::Config(_)) => {
                            root_error = Some(e)
                        }
                        _ => {}
                    }
                }
            }
        }
        if let Some(e) = root_error {
            return Err(e);
        }
        Ok(RunOutcome { egress, stats: RunStats { per_node, steps: 0 } })
    }
}

/// Convenience wrapper: feeds pre-materialized inputs from a helper
/// thread and collects the whole egress.
pub fn run_pipelined(
    graph: &Graph,
    inputs: Vec<Vec<StreamElement>>,
    opts: &PipelinedOptions,
) -> Result<RunOutcome> {
    let mut run = start_pipelined(graph, opts, None);
    let feeds = std::mem::take(&mut run.feeds);
    let feeder = std::thread::spawn(move || -> Result<()> {
        for (mut feed, elements) in feeds.into_iter().zip(inputs) {
            for el in elements {
                feed.send(el)?;
            }
        }
        Ok(())
    });
    let mut egress = Vec::new();
    while let Ok(el) = run.egress.recv() {
        egress.push(el);
    }
    let feed_result = feeder.join().expect("feeder thread panicked");
    let outcome = run.finish(egress)?;
    feed_result?;
    Ok(outcome)
}
