//! Operator graph construction and validation.
//!
//! A graph is a set of operator nodes connected by directed FIFO edges.
//! Multiple edges into the same input port form a union and must carry
//! the same stream type; multiple edges out of one node multicast the
//! same elements in the same order; a loop edge feeds a node its own
//! output and never carries watermarks. Loop edges must be guarded
//! unless the graph explicitly opts out (fault injection).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::guard::{LoopInputGuard, LoopOutputGuard};
use crate::ops::Operator;
use crate::tuple::{KeyFn, Ticks, ValueKind};

/// Creates a fresh operator instance for each physical instance.
pub type OperatorFactory = Arc<dyn Fn() -> Box<dyn Operator> + Send + Sync>;
pub type InputGuardFactory = Arc<dyn Fn() -> LoopInputGuard + Send + Sync>;
pub type OutputGuardFactory = Arc<dyn Fn() -> LoopOutputGuard + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IngressId(pub usize);

/// Where an edge starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Ingress(IngressId),
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Forward,
    Loop,
}

pub struct NodeSpec {
    pub name: String,
    pub factory: OperatorFactory,
    pub parallelism: usize,
    /// Per input port: key routing for stateful consumers, or none for
    /// round-robin delivery to stateless ones.
    pub routing: Vec<Option<KeyFn>>,
    pub input_guard: Option<InputGuardFactory>,
    pub output_guard: Option<OutputGuardFactory>,
    /// Output type signature, when statically known.
    pub output_sig: Option<Vec<ValueKind>>,
    /// Total window span of this node, used to size the final flush.
    pub window_span: Ticks,
}

impl NodeSpec {
    pub fn new(name: impl Into<String>, factory: OperatorFactory) -> Self {
        Self {
            name: name.into(),
            factory,
            parallelism: 1,
            routing: vec![None],
            input_guard: None,
            output_guard: None,
            output_sig: None,
            window_span: 0,
        }
    }

    pub fn with_parallelism(mut self, p: usize) -> Self {
        self.parallelism = p.max(1);
        self
    }

    /// Key routing for the single input port.
    pub fn with_routing(mut self, key: KeyFn) -> Self {
        self.routing = vec![Some(key)];
        self
    }

    /// Key routing per port (two-input operators).
    pub fn with_port_routing(mut self, routing: Vec<Option<KeyFn>>) -> Self {
        self.routing = routing;
        self
    }

    pub fn with_input_guard(mut self, f: InputGuardFactory) -> Self {
        self.input_guard = Some(f);
        self
    }

    pub fn with_output_guard(mut self, f: OutputGuardFactory) -> Self {
        self.output_guard = Some(f);
        self
    }

    pub fn with_output_sig(mut self, sig: Vec<ValueKind>) -> Self {
        self.output_sig = Some(sig);
        self
    }

    pub fn with_window_span(mut self, span: Ticks) -> Self {
        self.window_span = span;
        self
    }
}

pub struct IngressSpec {
    pub name: String,
    pub output_sig: Option<Vec<ValueKind>>,
}

pub struct EdgeSpec {
    pub from: Endpoint,
    pub to: NodeId,
    pub port: usize,
    pub kind: EdgeKind,
}

/// A validated operator graph.
pub struct Graph {
    pub nodes: Vec<NodeSpec>,
    pub ingresses: Vec<IngressSpec>,
    pub edges: Vec<EdgeSpec>,
    pub egress: NodeId,
    /// Topological order of nodes with loop edges ignored.
    pub topo_order: Vec<usize>,
}

impl Graph {
    /// Event time by which every window containing a record at `max_ts`
    /// has fired, across all stages.
    pub fn flush_horizon(&self, max_ts: u64) -> u64 {
        max_ts + self.nodes.iter().map(|n| n.window_span).sum::<u64>() + 1
    }
}

#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeSpec>,
    ingresses: Vec<IngressSpec>,
    edges: Vec<EdgeSpec>,
    egress: Option<NodeId>,
    allow_unguarded_loops: bool,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Permits loop edges on unguarded nodes (fault injection only).
    pub fn allow_unguarded_loops(mut self) -> Self {
        self.allow_unguarded_loops = true;
        self
    }

    pub fn add_ingress(&mut self, name: impl Into<String>, sig: Option<Vec<ValueKind>>) -> IngressId {
        self.ingresses.push(IngressSpec { name: name.into(), output_sig: sig });
        IngressId(self.ingresses.len() - 1)
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> NodeId {
        self.nodes.push(spec);
        NodeId(self.nodes.len() - 1)
    }

    pub fn connect(&mut self, from: Endpoint, to: NodeId, port: usize) {
        self.edges.push(EdgeSpec { from, to, port, kind: EdgeKind::Forward });
    }

    /// Feeds a node its own output through a loop edge.
    pub fn connect_loop(&mut self, node: NodeId) {
        self.edges
            .push(EdgeSpec { from: Endpoint::Node(node), to: node, port: 0, kind: EdgeKind::Loop });
    }

    pub fn set_egress(&mut self, node: NodeId) {
        self.egress = Some(node);
    }

    fn sig_of(&self, ep: Endpoint) -> Option<&Vec<ValueKind>> {
        match ep {
            Endpoint::Ingress(IngressId(i)) => self.ingresses[i].output_sig.as_ref(),
            Endpoint::Node(NodeId(n)) => self.nodes[n].output_sig.as_ref(),
        }
    }

    /// Validates the description and returns the graph, or the full list
    /// of violations.
    pub fn build(self) -> Result<Graph> {
        let mut violations = Vec::new();

        let Some(egress) = self.egress else {
            return Err(Error::Graph { violations: vec!["no egress node set".into()] });
        };

        for (i, e) in self.edges.iter().enumerate() {
            if e.to.0 >= self.nodes.len() {
                violations.push(format!("edge {i} targets unknown node {}", e.to.0));
                continue;
            }
            let ports = self.nodes[e.to.0].routing.len();
            if e.port >= ports {
                violations.push(format!(
                    "edge {i} targets port {} of node '{}' which has {} port(s)",
                    e.port, self.nodes[e.to.0].name, ports
                ));
            }
            if e.kind == EdgeKind::Loop {
                if e.from != Endpoint::Node(e.to) {
                    violations.push(format!(
                        "edge {i}: loop edges must feed a node its own output"
                    ));
                }
                if self.nodes[e.to.0].input_guard.is_none() && !self.allow_unguarded_loops {
                    violations.push(format!(
                        "node '{}' has a loop edge but no loop guards",
                        self.nodes[e.to.0].name
                    ));
                }
            }
        }

        // Union members must share one stream type.
        for (n, node) in self.nodes.iter().enumerate() {
            for port in 0..node.routing.len() {
                let mut sigs = self
                    .edges
                    .iter()
                    .filter(|e| e.to == NodeId(n) && e.port == port)
                    .filter_map(|e| self.sig_of(e.from));
                if let Some(first) = sigs.next() {
                    if sigs.any(|s| s != first) {
                        violations.push(format!(
                            "union into port {port} of node '{}' mixes stream types",
                            node.name
                        ));
                    }
                }
            }
        }

        // Every node needs at least one non-loop input.
        for (n, node) in self.nodes.iter().enumerate() {
            let fed = self
                .edges
                .iter()
                .any(|e| e.to == NodeId(n) && e.kind == EdgeKind::Forward);
            if !fed {
                violations.push(format!("node '{}' has no non-loop input", node.name));
            }
        }

        let topo_order = match topo_sort(self.nodes.len(), &self.edges) {
            Ok(order) => order,
            Err(cycle) => {
                violations.push(cycle);
                Vec::new()
            }
        };

        if !violations.is_empty() {
            return Err(Error::Graph { violations });
        }

        Ok(Graph {
            nodes: self.nodes,
            ingresses: self.ingresses,
            edges: self.edges,
            egress,
            topo_order,
        })
    }
}

/// Kahn's algorithm over non-loop node-to-node edges, smallest node id
/// first so the order is deterministic.
fn topo_sort(n: usize, edges: &[EdgeSpec]) -> std::result::Result<Vec<usize>, String> {
    let mut indegree = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges {
        if e.kind == EdgeKind::Loop {
            continue;
        }
        if let Endpoint::Node(NodeId(from)) = e.from {
            if from == e.to.0 {
                continue;
            }
            adj[from].push(e.to.0);
            indegree[e.to.0] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &to in &adj[next] {
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.insert(to);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err("graph contains a non-loop cycle".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{Filter, Map};
    use crate::tuple::Value;

    fn pass_node(name: &str) -> NodeSpec {
        NodeSpec::new(
            name,
            Arc::new(|| Box::new(Filter::new(Arc::new(|_| true))) as Box<dyn Operator>),
        )
    }

    #[test]
    fn single_node_pipeline_builds() {
        let mut b = GraphBuilder::new();
        let src = b.add_ingress("in", None);
        let f = b.add_node(pass_node("filter"));
        b.connect(Endpoint::Ingress(src), f, 0);
        b.set_egress(f);
        let g = b.build().unwrap();
        assert_eq!(g.topo_order, vec![0]);
    }

    #[test]
    fn union_type_mismatch_rejected() {
        let mut b = GraphBuilder::new();
        let src = b.add_ingress("in", Some(vec![ValueKind::Int]));
        let ints = b.add_node(pass_node("ints").with_output_sig(vec![ValueKind::Int]));
        let texts = b.add_node(NodeSpec::new(
            "texts",
            Arc::new(|| {
                Box::new(Map::new(Arc::new(|_| vec![Value::Text("x".into())])))
                    as Box<dyn Operator>
            }),
        )
        .with_output_sig(vec![ValueKind::Text]));
        let merged = b.add_node(pass_node("merge"));
        b.connect(Endpoint::Ingress(src), ints, 0);
        b.connect(Endpoint::Ingress(src), texts, 0);
        b.connect(Endpoint::Node(ints), merged, 0);
        b.connect(Endpoint::Node(texts), merged, 0);
        b.set_egress(merged);
        let Err(Error::Graph { violations }) = b.build() else { panic!("expected graph error") };
        assert!(violations.iter().any(|v| v.contains("mixes stream types")));
    }

    #[test]
    fn unguarded_loop_rejected_unless_opted_in() {
        let build = |allow: bool| {
            let mut b = GraphBuilder::new();
            if allow {
                b = b.allow_unguarded_loops();
            }
            let src = b.add_ingress("in", None);
            let n = b.add_node(pass_node("loopy"));
            b.connect(Endpoint::Ingress(src), n, 0);
            b.connect_loop(n);
            b.set_egress(n);
            b.build()
        };
        assert!(matches!(build(false), Err(Error::Graph { .. })));
        assert!(build(true).is_ok());
    }

    #[test]
    fn topo_order_breaks_ties_by_node_id() {
        let mut b = GraphBuilder::new();
        let src = b.add_ingress("in", None);
        let a = b.add_node(pass_node("a"));
        let c = b.add_node(pass_node("c"));
        let d = b.add_node(pass_node("d"));
        b.connect(Endpoint::Ingress(src), a, 0);
        b.connect(Endpoint::Ingress(src), c, 0);
        b.connect(Endpoint::Node(a), d, 0);
        b.connect(Endpoint::Node(c), d, 0);
        b.set_egress(d);
        let g = b.build().unwrap();
        assert_eq!(g.topo_order, vec![a.0, c.0, d.0]);
    }
}
