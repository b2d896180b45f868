//! Deterministic single-threaded execution of an operator graph.
//!
//! Every logical node runs as one or more physical instances. Tuples are
//! routed to a consumer instance by key hash (stateful) or round robin
//! (stateless); watermarks are broadcast to every instance. Each
//! instance tracks the latest watermark per incoming physical edge and
//! feeds its operator the minimum over the non-loop edges whenever that
//! minimum grows.
//!
//! Scheduling is a fixed drain order: instances are visited in the
//! topological order of the graph with loop edges ignored, ties by node
//! id, and each instance is drained completely before moving on. Within
//! an instance, loop-edge queues are served before anything else, so a
//! feedback loop settles before the producer consumes its next
//! watermark. Identical graphs and inputs give byte-identical egress
//! sequences.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, Endpoint, Graph, IngressId, NodeId};
use crate::guard::{LoopInputGuard, LoopOutputGuard};
use crate::ops::Operator;
use crate::tuple::{StreamElement, Timestamp, Tuple};

/// How an instance orders its nonempty input queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopPriority {
    /// Loop queues first: a loop settles before further outside input.
    #[default]
    First,
    /// Loop queues last: an adversarial but watermark-legal interleaving
    /// in which outside watermarks overtake looping tuples.
    Last,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub step_budget: u64,
    pub loop_priority: LoopPriority,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { step_budget: 50_000_000, loop_priority: LoopPriority::First }
    }
}

/// Per-logical-node counters aggregated over instances.
#[derive(Debug, Clone, Default)]
pub struct NodeStats {
    /// Tuples for which no admissible window remained.
    pub late_drops: u64,
    /// Tuples that arrived on an edge behind that edge's watermark.
    pub late_observed: u64,
    /// Join predicate invocations.
    pub comparisons: u64,
    /// Input-guard pending successor entries at end of run.
    pub input_guard_pending: u64,
    /// Output-guard pending successor entries at end of run.
    pub output_guard_pending: u64,
    /// Watermarks still queued inside the input guard at end of run.
    pub input_guard_queued: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub per_node: BTreeMap<String, NodeStats>,
    pub steps: u64,
}

pub struct RunOutcome {
    pub egress: Vec<StreamElement>,
    pub stats: RunStats,
}

impl RunOutcome {
    pub fn egress_tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.egress.iter().filter_map(StreamElement::as_tuple)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct PhysEdge {
    logical: usize,
    to_global: usize,
    port: usize,
    is_loop: bool,
    /// Latest watermark pushed by the producer (regression check).
    sent_w: Option<Timestamp>,
    /// Latest watermark delivered to the consumer (merge input).
    recv_w: Option<Timestamp>,
    queue: VecDeque<StreamElement>,
}

struct Instance {
    node: usize,
    op: Box<dyn Operator>,
    input_guard: Option<LoopInputGuard>,
    output_guard: Option<LoopOutputGuard>,
    /// Physical in-edge ids, loop edges flagged.
    in_edges: Vec<usize>,
    /// Merged watermark over non-loop in-edges, as delivered so far.
    merged: Timestamp,
    late_observed: u64,
}

/// One producer-side router per logical edge and producer instance.
struct Router {
    /// Physical edge id per consumer instance.
    targets: Vec<usize>,
    /// Key routing of the consumer port, if stateful.
    key: Option<crate::tuple::KeyFn>,
    round_robin: usize,
}

pub struct Executor<'g> {
    graph: &'g Graph,
    instances: Vec<Instance>,
    edges: Vec<PhysEdge>,
    /// Routers indexed by (logical edge, producer instance index).
    routers: HashMap<(usize, usize), Router>,
    /// Global instance ids per node.
    node_instances: Vec<Vec<usize>>,
    /// Instance visit order.
    schedule: Vec<usize>,
    egress: Vec<StreamElement>,
    steps: u64,
    opts: RunOptions,
}

impl<'g> Executor<'g> {
    pub fn new(graph: &'g Graph, opts: RunOptions) -> Self {
        let trace = std::env::var("AGGSTREAM_GUARD_TRACE").is_ok_and(|v| v == "1");

        let mut node_instances: Vec<Vec<usize>> = Vec::with_capacity(graph.nodes.len());
        let mut instances: Vec<Instance> = Vec::new();
        for (n, node) in graph.nodes.iter().enumerate() {
            let mut ids = Vec::new();
            for i in 0..node.parallelism {
                let input_guard = node.input_guard.as_ref().map(|f| {
                    let g = f();
                    if trace {
                        g.with_trace(format!("{}[{}].in", node.name, i))
                    } else {
                        g
                    }
                });
                let output_guard = node.output_guard.as_ref().map(|f| {
                    let g = f();
                    if trace {
                        g.with_trace(format!("{}[{}].out", node.name, i))
                    } else {
                        g
                    }
                });
                ids.push(instances.len());
                instances.push(Instance {
                    node: n,
                    op: (node.factory)(),
                    input_guard,
                    output_guard,
                    in_edges: Vec::new(),
                    merged: 0,
                    late_observed: 0,
                });
            }
            node_instances.push(ids);
        }

        let mut edges: Vec<PhysEdge> = Vec::new();
        let mut routers: HashMap<(usize, usize), Router> = HashMap::new();
        for (le, e) in graph.edges.iter().enumerate() {
            let producers = match e.from {
                Endpoint::Ingress(_) => 1,
                Endpoint::Node(NodeId(n)) => graph.nodes[n].parallelism,
            };
            let key = graph.nodes[e.to.0].routing[e.port].clone();
            for p in 0..producers {
                let mut targets = Vec::new();
                for &to_global in &node_instances[e.to.0] {
                    let id = edges.len();
                    edges.push(PhysEdge {
                        logical: le,
                        to_global,
                        port: e.port,
                        is_loop: e.kind == EdgeKind::Loop,
                        sent_w: None,
                        recv_w: None,
                        queue: VecDeque::new(),
                    });
                    instances[to_global].in_edges.push(id);
                    targets.push(id);
                }
                routers.insert((le, p), Router { targets, key: key.clone(), round_robin: 0 });
            }
        }

        // Keep each instance's in-edges in a deterministic service order:
        // loop edges according to priority, then logical edge id, then
        // producer order (which edge creation already fixed).
        let loops_first = opts.loop_priority == LoopPriority::First;
        for inst in &mut instances {
            inst.in_edges.sort_by_key(|&eid| {
                let loop_rank = if edges[eid].is_loop == loops_first { 0 } else { 1 };
                (loop_rank, edges[eid].logical, eid)
            });
        }

        let mut schedule = Vec::new();
        for &n in &graph.topo_order {
            schedule.extend(node_instances[n].iter().copied());
        }

        Self {
            graph,
            instances,
            edges,
            routers,
            node_instances,
            schedule,
            egress: Vec::new(),
            steps: 0,
            opts,
        }
    }

    /// Feeds one ingress element sequence into the graph.
    pub fn push_ingress(&mut self, ingress: IngressId, elements: Vec<StreamElement>) -> Result<()> {
        let logical_edges: Vec<usize> = self
            .graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == Endpoint::Ingress(ingress))
            .map(|(i, _)| i)
            .collect();
        for el in elements {
            for &le in &logical_edges {
                self.route(le, 0, el.clone())?;
            }
        }
        Ok(())
    }

    fn route(&mut self, logical: usize, producer: usize, el: StreamElement) -> Result<()> {
        let router = self.routers.get_mut(&(logical, producer)).expect("router exists");
        match el {
            StreamElement::Tuple(t) => {
                let target = if router.targets.len() == 1 {
                    router.targets[0]
                } else if let Some(key) = &router.key {
                    let h = fnv1a(&key(&t));
                    router.targets[(h % router.targets.len() as u64) as usize]
                } else {
                    router.round_robin = (router.round_robin + 1) % router.targets.len();
                    router.targets[router.round_robin]
                };
                self.edges[target].queue.push_back(StreamElement::Tuple(t));
            }
            StreamElement::Watermark(w) => {
                let targets = router.targets.clone();
                for eid in targets {
                    if self.edges[eid].is_loop {
                        continue;
                    }
                    if let Some(prev) = self.edges[eid].sent_w {
                        if w < prev {
                            let le = self.edges[eid].logical;
                            return Err(Error::WatermarkRegression {
                                edge: format!(
                                    "{} -> {}",
                                    self.endpoint_name(self.graph.edges[le].from),
                                    self.graph.nodes[self.graph.edges[le].to.0].name
                                ),
                                previous: prev,
                                current: w,
                            });
                        }
                    }
                    let edge = &mut self.edges[eid];
                    edge.sent_w = Some(w);
                    edge.queue.push_back(StreamElement::Watermark(w));
                }
            }
        }
        Ok(())
    }

    fn endpoint_name(&self, ep: Endpoint) -> String {
        match ep {
            Endpoint::Ingress(IngressId(i)) => self.graph.ingresses[i].name.clone(),
            Endpoint::Node(NodeId(n)) => self.graph.nodes[n].name.clone(),
        }
    }

    /// Runs to quiescence and returns the egress sequence and stats.
    pub fn run(mut self) -> Result<RunOutcome> {
        loop {
            let mut progressed = false;
            for idx in 0..self.schedule.len() {
                let gi = self.schedule[idx];
                while let Some(eid) = self.next_edge(gi) {
                    let el = self.edges[eid].queue.pop_front().expect("queue nonempty");
                    self.steps += 1;
                    if self.steps > self.opts.step_budget {
                        return Err(Error::NonQuiescent {
                            budget: self.opts.step_budget,
                            in_flight: self.in_flight_summary(),
                        });
                    }
                    self.deliver(gi, eid, el)?;
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        let stats = self.collect_stats();
        Ok(RunOutcome { egress: self.egress, stats })
    }

    fn next_edge(&self, gi: usize) -> Option<usize> {
        self.instances[gi]
            .in_edges
            .iter()
            .copied()
            .find(|&eid| !self.edges[eid].queue.is_empty())
    }

    fn deliver(&mut self, gi: usize, eid: usize, el: StreamElement) -> Result<()> {
        match el {
            StreamElement::Watermark(w) => {
                self.edges[eid].recv_w = Some(w);
                let merged = self.instances[gi]
                    .in_edges
                    .iter()
                    .filter(|&&e| !self.edges[e].is_loop)
                    .map(|&e| self.edges[e].recv_w.unwrap_or(0))
                    .min()
                    .unwrap_or(0);
                if merged > self.instances[gi].merged {
                    self.instances[gi].merged = merged;
                    self.feed(gi, StreamElement::Watermark(merged), 0)?;
                }
                Ok(())
            }
            StreamElement::Tuple(t) => {
                if self.edges[eid].recv_w.is_some_and(|w| t.ts < w) {
                    self.instances[gi].late_observed += 1;
                }
                let port = self.edges[eid].port;
                self.feed(gi, StreamElement::Tuple(t), port)
            }
        }
    }

    /// Feeds an element through the instance's input guard (if any) into
    /// the operator, then routes whatever the operator emitted.
    fn feed(&mut self, gi: usize, el: StreamElement, port: usize) -> Result<()> {
        let mut admitted = Vec::new();
        if let Some(guard) = self.instances[gi].input_guard.as_mut() {
            guard.process(el, &mut admitted)?;
        } else {
            admitted.push(el);
        }
        let mut out = Vec::new();
        for el in admitted {
            match el {
                StreamElement::Tuple(t) => self.instances[gi].op.on_tuple(port, t, &mut out)?,
                StreamElement::Watermark(w) => self.instances[gi].op.on_watermark(w, &mut out)?,
            }
        }
        self.emit(gi, out)
    }

    fn emit(&mut self, gi: usize, produced: Vec<StreamElement>) -> Result<()> {
        if produced.is_empty() {
            return Ok(());
        }
        let released = if let Some(guard) = self.instances[gi].output_guard.as_mut() {
            let mut buf = Vec::new();
            for el in produced {
                guard.process(el, &mut buf)?;
            }
            buf
        } else {
            produced
        };
        let node = self.instances[gi].node;
        let producer = self.node_instances[node].iter().position(|&g| g == gi).expect("member");
        let out_edges: Vec<usize> = self
            .graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.from == Endpoint::Node(NodeId(node)))
            .map(|(i, _)| i)
            .collect();
        let is_egress = self.graph.egress.0 == node;
        for el in released {
            if is_egress {
                self.egress.push(el.clone());
            }
            for &le in &out_edges {
                self.route(le, producer, el.clone())?;
            }
        }
        Ok(())
    }

    fn in_flight_summary(&self) -> String {
        let mut parts = Vec::new();
        for (eid, e) in self.edges.iter().enumerate() {
            if !e.queue.is_empty() {
                parts.push(format!(
                    "edge {eid} -> {} ({} queued, head {})",
                    self.graph.nodes[self.instances[e.to_global].node].name,
                    e.queue.len(),
                    e.queue.front().expect("nonempty"),
                ));
            }
        }
        parts.join("; ")
    }

    fn collect_stats(&self) -> RunStats {
        let mut per_node: BTreeMap<String, NodeStats> = BTreeMap::new();
        for inst in &self.instances {
            let name = self.graph.nodes[inst.node].name.clone();
            let s = per_node.entry(name).or_default();
            s.late_drops += inst.op.late_drops();
            s.late_observed += inst.late_observed;
            s.comparisons += inst.op.comparisons();
            if let Some(g) = &inst.input_guard {
                s.input_guard_pending += g.pending_counts().values().sum::<u64>();
                s.input_guard_queued += g.queued_watermarks() as u64;
            }
            if let Some(g) = &inst.output_guard {
                s.output_guard_pending += g.pending_counts().values().sum::<u64>();
            }
        }
        RunStats { per_node, steps: self.steps }
    }
}

/// Builds, feeds, and runs a graph in one call. `inputs` holds one
/// element sequence per ingress, in ingress order.
pub fn run_deterministic(
    graph: &Graph,
    inputs: Vec<Vec<StreamElement>>,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let mut exec = Executor::new(graph, opts.clone());
    for (i, elements) in inputs.into_iter().enumerate() {
        exec.push_ingress(IngressId(i), elements)?;
    }
    exec.run()
}
