//! Pipeline builders: one operator, three ways to run it.
//!
//! `Dedicated` graphs use the native operator implementation. `Agg`
//! graphs enforce the same semantics with single-output Aggregates only:
//! an embed stage packs the would-be outputs into one tuple, and an
//! unfold loop (two more Aggregates, a feedback edge, and the loop
//! guards) re-emits them one by one. `AggPlus` graphs host the embed
//! logic on the multi-output Aggregate, which needs neither loop nor
//! guards.

use std::sync::Arc;

use crate::agg::{
    embed_flatmap_multi, embed_flatmap_window, embed_join_multi, embed_join_window,
    state_fold_window, state_output_flatmap, state_wrap_flatmap, unfold_emit_window,
    unfold_reindex_window, wrap_side_window, wrapped_join_key, wrapped_state_key, LoopVariant,
};
use crate::error::{Error, Result};
use crate::graph::{Endpoint, Graph, GraphBuilder, NodeId, NodeSpec, OperatorFactory};
use crate::guard::{LoopInputGuard, LoopOutputGuard, LoopShape};
use crate::ops::{
    Aggregate, Filter, FilterFn, FlatMap, FlatMapFn, Join, JoinPredicate, KeyedState, MapFn,
    Operator, StatefulConfig,
};
use crate::tuple::{key_full_tuple, KeyFn, Ticks, Tuple, ValueKind};
use crate::window::WindowSpec;

/// How an operator's semantics are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Dedicated,
    Agg,
    AggPlus,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dedicated" => Ok(Mode::Dedicated),
            "agg" => Ok(Mode::Agg),
            "agg-plus" => Ok(Mode::AggPlus),
            other => Err(Error::config(format!(
                "unknown mode '{other}' (expected dedicated|agg|agg-plus)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dedicated => "dedicated",
            Mode::Agg => "agg",
            Mode::AggPlus => "agg-plus",
        })
    }
}

/// Build-time knobs shared by all pipelines.
#[derive(Clone)]
pub struct PipelineOptions {
    pub mode: Mode,
    /// Watermark period of the feeding ingress; sizes the loop lateness.
    pub wm_period: Ticks,
    pub parallelism: usize,
    /// Install the loop guards (disabled only for fault injection).
    pub guards: bool,
    pub variant: LoopVariant,
}

impl PipelineOptions {
    pub fn new(mode: Mode, wm_period: Ticks) -> Self {
        Self { mode, wm_period, parallelism: 1, guards: true, variant: LoopVariant::default() }
    }

    pub fn with_parallelism(mut self, p: usize) -> Self {
        self.parallelism = p.max(1);
        self
    }

    pub fn without_guards(mut self) -> Self {
        self.guards = false;
        self
    }

    pub fn with_variant(mut self, variant: LoopVariant) -> Self {
        self.variant = variant;
        self
    }
}

/// Routing key that keeps an embedded tuple and all of its loop passes
/// on one instance: the timestamp plus the payload, tag excluded.
pub fn key_embed_family() -> KeyFn {
    Arc::new(|t: &Tuple| {
        let mut buf = t.ts.to_be_bytes().to_vec();
        t.attrs[0].encode(&mut buf);
        buf
    })
}

fn embedded_sig() -> Vec<ValueKind> {
    vec![ValueKind::Tuples, ValueKind::Index]
}

fn wrapped_sig() -> Vec<ValueKind> {
    vec![ValueKind::Tuples, ValueKind::Tuples]
}

fn tick_spec(lateness: Ticks) -> WindowSpec {
    WindowSpec::new(1, 1, lateness).expect("tick window")
}

/// Appends the two-Aggregate unfold loop after `source` and returns the
/// emitting node.
fn attach_unfold(
    b: &mut GraphBuilder,
    source: NodeId,
    opts: &PipelineOptions,
    output_sig: Option<Vec<ValueKind>>,
) -> NodeId {
    let lateness = opts.wm_period;
    let variant = opts.variant;
    let reindex: OperatorFactory = Arc::new(move || {
        Box::new(Aggregate::new(tick_spec(lateness), key_full_tuple(), unfold_reindex_window(variant)))
            as Box<dyn Operator>
    });
    let mut a1 = NodeSpec::new("unfold-reindex", reindex)
        .with_parallelism(opts.parallelism)
        .with_routing(key_embed_family())
        .with_output_sig(embedded_sig())
        .with_window_span(1);
    if opts.guards {
        a1 = a1
            .with_input_guard(Arc::new(move || {
                LoopInputGuard::new(LoopShape::Unfold { lateness })
            }))
            .with_output_guard(Arc::new(move || {
                LoopOutputGuard::new(LoopShape::Unfold { lateness })
            }));
    }
    let a1 = b.add_node(a1);

    let emit: OperatorFactory = Arc::new(move || {
        Box::new(Aggregate::new(tick_spec(0), key_full_tuple(), unfold_emit_window()))
            as Box<dyn Operator>
    });
    let mut a2 = NodeSpec::new("unfold-emit", emit)
        .with_parallelism(opts.parallelism)
        .with_routing(key_embed_family())
        .with_window_span(1);
    if let Some(sig) = output_sig {
        a2 = a2.with_output_sig(sig);
    }
    let a2 = b.add_node(a2);

    b.connect(Endpoint::Node(source), a1, 0);
    b.connect_loop(a1);
    b.connect(Endpoint::Node(a1), a2, 0);
    a2
}

fn single_node_graph(spec: NodeSpec) -> Result<Graph> {
    let mut b = GraphBuilder::new();
    let src = b.add_ingress("ingress", None);
    let n = b.add_node(spec);
    b.connect(Endpoint::Ingress(src), n, 0);
    b.set_egress(n);
    b.build()
}

/// FlatMap pipeline in the requested mode; Filter and Map pass through
/// here via adapters since FlatMap subsumes both.
pub fn build_flatmap(f: FlatMapFn, opts: &PipelineOptions) -> Result<Graph> {
    match opts.mode {
        Mode::Dedicated => {
            let factory: OperatorFactory = {
                let f = f.clone();
                Arc::new(move || Box::new(FlatMap::new(f.clone())) as Box<dyn Operator>)
            };
            single_node_graph(NodeSpec::new("flatmap", factory).with_parallelism(opts.parallelism))
        }
        Mode::Agg => {
            let mut b = if opts.guards {
                GraphBuilder::new()
            } else {
                GraphBuilder::new().allow_unguarded_loops()
            };
            let src = b.add_ingress("ingress", None);
            let embed_factory: OperatorFactory = {
                let f = f.clone();
                Arc::new(move || {
                    Box::new(Aggregate::new(
                        tick_spec(0),
                        key_full_tuple(),
                        embed_flatmap_window(f.clone(), 1),
                    )) as Box<dyn Operator>
                })
            };
            let embed = b.add_node(
                NodeSpec::new("embed", embed_factory)
                    .with_parallelism(opts.parallelism)
                    .with_routing(key_full_tuple())
                    .with_output_sig(embedded_sig())
                    .with_window_span(1),
            );
            b.connect(Endpoint::Ingress(src), embed, 0);
            let out = attach_unfold(&mut b, embed, opts, None);
            b.set_egress(out);
            b.build()
        }
        Mode::AggPlus => {
            let factory: OperatorFactory = {
                let f = f.clone();
                Arc::new(move || {
                    Box::new(Aggregate::new_multi(
                        tick_spec(0),
                        key_full_tuple(),
                        embed_flatmap_multi(f.clone()),
                    )) as Box<dyn Operator>
                })
            };
            single_node_graph(
                NodeSpec::new("embed-multi", factory)
                    .with_parallelism(opts.parallelism)
                    .with_routing(key_full_tuple())
                    .with_window_span(1),
            )
        }
    }
}

pub fn build_filter(f: FilterFn, opts: &PipelineOptions) -> Result<Graph> {
    if opts.mode == Mode::Dedicated {
        let factory: OperatorFactory =
            Arc::new(move || Box::new(Filter::new(f.clone())) as Box<dyn Operator>);
        return single_node_graph(NodeSpec::new("filter", factory).with_parallelism(opts.parallelism));
    }
    let as_flatmap: FlatMapFn =
        Arc::new(move |t: &Tuple| if f(t) { vec![t.attrs.clone()] } else { vec![] });
    build_flatmap(as_flatmap, opts)
}

pub fn build_map(f: MapFn, opts: &PipelineOptions) -> Result<Graph> {
    if opts.mode == Mode::Dedicated {
        let factory: OperatorFactory =
            Arc::new(move || Box::new(crate::ops::Map::new(f.clone())) as Box<dyn Operator>);
        return single_node_graph(NodeSpec::new("map", factory).with_parallelism(opts.parallelism));
    }
    let as_flatmap: FlatMapFn = Arc::new(move |t: &Tuple| vec![f(t)]);
    build_flatmap(as_flatmap, opts)
}

/// The unfold loop on its own: the ingress feeds embedded tuples
/// (payload plus tag) into the reindex/emit pair. Used to exercise the
/// loop with crafted payloads.
///
/// The entry stage is a tick-sized, full-tuple-keyed aggregate that
/// collapses equal embed tuples, exactly as an upstream embed stage
/// would. The guard bookkeeping counts one pending loop per distinct
/// embed tuple, so duplicates must never reach it unmerged.
pub fn build_unfold_only(opts: &PipelineOptions) -> Result<Graph> {
    let mut b = if opts.guards {
        GraphBuilder::new()
    } else {
        GraphBuilder::new().allow_unguarded_loops()
    };
    let src = b.add_ingress("ingress", Some(embedded_sig()));
    let dedup: OperatorFactory = Arc::new(|| {
        Box::new(Aggregate::new(
            tick_spec(0),
            key_full_tuple(),
            Arc::new(|win: &crate::window::WindowInstance| Some(win.contents[0].attrs.clone())),
        )) as Box<dyn Operator>
    });
    let entry = b.add_node(
        NodeSpec::new("embed-entry", dedup)
            .with_parallelism(opts.parallelism)
            .with_routing(key_embed_family())
            .with_output_sig(embedded_sig())
            .with_window_span(1),
    );
    b.connect(Endpoint::Ingress(src), entry, 0);
    let out = attach_unfold(&mut b, entry, opts, None);
    b.set_egress(out);
    b.build()
}

/// FlatMap whose embed stage runs on an arbitrary window: the window's
/// (deduplicated) per-tuple results are packed into one embedded tuple
/// stamped at the window's output timestamp, then unfolded. With a
/// one-tick window this degenerates to the plain composed FlatMap.
pub fn build_windowed_flatmap(
    spec: WindowSpec,
    f: FlatMapFn,
    key: KeyFn,
    opts: &PipelineOptions,
) -> Result<Graph> {
    let mut b = if opts.guards {
        GraphBuilder::new()
    } else {
        GraphBuilder::new().allow_unguarded_loops()
    };
    let src = b.add_ingress("ingress", None);
    let embed_factory: OperatorFactory = {
        let (f, key) = (f.clone(), key.clone());
        Arc::new(move || {
            Box::new(Aggregate::new(spec, key.clone(), embed_flatmap_window(f.clone(), spec.size)))
                as Box<dyn Operator>
        })
    };
    let embed = b.add_node(
        NodeSpec::new("embed", embed_factory)
            .with_parallelism(opts.parallelism)
            .with_routing(key)
            .with_output_sig(embedded_sig())
            .with_window_span(spec.size),
    );
    b.connect(Endpoint::Ingress(src), embed, 0);
    let out = attach_unfold(&mut b, embed, opts, None);
    b.set_egress(out);
    b.build()
}

/// Two-input windowed join pipeline in the requested mode.
pub fn build_join(
    spec: WindowSpec,
    key1: KeyFn,
    key2: KeyFn,
    predicate: JoinPredicate,
    opts: &PipelineOptions,
) -> Result<Graph> {
    if opts.mode == Mode::Dedicated {
        let factory: OperatorFactory = {
            let (key1, key2, predicate) = (key1.clone(), key2.clone(), predicate.clone());
            Arc::new(move || {
                Box::new(Join::new(spec, key1.clone(), key2.clone(), predicate.clone()))
                    as Box<dyn Operator>
            })
        };
        let mut b = GraphBuilder::new();
        let src1 = b.add_ingress("ingress-1", None);
        let src2 = b.add_ingress("ingress-2", None);
        let j = b.add_node(
            NodeSpec::new("join", factory)
                .with_parallelism(opts.parallelism)
                .with_port_routing(vec![Some(key1), Some(key2)])
                .with_window_span(spec.size),
        );
        b.connect(Endpoint::Ingress(src1), j, 0);
        b.connect(Endpoint::Ingress(src2), j, 1);
        b.set_egress(j);
        return b.build();
    }

    let mut b = if opts.guards || opts.mode == Mode::AggPlus {
        GraphBuilder::new()
    } else {
        GraphBuilder::new().allow_unguarded_loops()
    };
    let src1 = b.add_ingress("ingress-1", None);
    let src2 = b.add_ingress("ingress-2", None);

    let mut wraps = Vec::new();
    for (side, src) in [(0usize, src1), (1usize, src2)] {
        let factory: OperatorFactory = Arc::new(move || {
            Box::new(Aggregate::new(tick_spec(0), key_full_tuple(), wrap_side_window(side)))
                as Box<dyn Operator>
        });
        let node = b.add_node(
            NodeSpec::new(format!("wrap-{}", side + 1), factory)
                .with_parallelism(opts.parallelism)
                .with_routing(key_full_tuple())
                .with_output_sig(wrapped_sig())
                .with_window_span(1),
        );
        b.connect(Endpoint::Ingress(src), node, 0);
        wraps.push(node);
    }

    let match_key = wrapped_join_key(key1, key2);
    let egress = match opts.mode {
        Mode::Agg => {
            let factory: OperatorFactory = {
                let (match_key, predicate) = (match_key.clone(), predicate.clone());
                Arc::new(move || {
                    Box::new(Aggregate::new(
                        spec,
                        match_key.clone(),
                        embed_join_window(predicate.clone(), spec.size),
                    )) as Box<dyn Operator>
                })
            };
            let a3 = b.add_node(
                NodeSpec::new("match-embed", factory)
                    .with_parallelism(opts.parallelism)
                    .with_routing(match_key)
                    .with_output_sig(embedded_sig())
                    .with_window_span(spec.size),
            );
            b.connect(Endpoint::Node(wraps[0]), a3, 0);
            b.connect(Endpoint::Node(wraps[1]), a3, 0);
            attach_unfold(&mut b, a3, opts, None)
        }
        Mode::AggPlus => {
            let factory: OperatorFactory = {
                let (match_key, predicate) = (match_key.clone(), predicate.clone());
                Arc::new(move || {
                    Box::new(Aggregate::new_multi(
                        spec,
                        match_key.clone(),
                        embed_join_multi(predicate.clone(), spec.size),
                    )) as Box<dyn Operator>
                })
            };
            let a3 = b.add_node(
                NodeSpec::new("match-multi", factory)
                    .with_parallelism(opts.parallelism)
                    .with_routing(match_key)
                    .with_window_span(spec.size),
            );
            b.connect(Endpoint::Node(wraps[0]), a3, 0);
            b.connect(Endpoint::Node(wraps[1]), a3, 0);
            a3
        }
        Mode::Dedicated => unreachable!(),
    };
    b.set_egress(egress);
    b.build()
}

/// Keyed periodic-state pipeline: dedicated per-key state map, or the
/// wrap / sliding-fold-with-loop / output composition.
pub fn build_stateful(cfg: StatefulConfig, opts: &PipelineOptions) -> Result<Graph> {
    match opts.mode {
        Mode::Dedicated => {
            let factory: OperatorFactory = {
                let cfg = cfg.clone();
                Arc::new(move || Box::new(KeyedState::new(cfg.clone())) as Box<dyn Operator>)
            };
            single_node_graph(
                NodeSpec::new("keyed-state", factory)
                    .with_parallelism(opts.parallelism)
                    .with_routing(cfg.key_input.clone())
                    .with_window_span(cfg.period + 1),
            )
        }
        Mode::Agg => {
            let mut b = if opts.guards {
                GraphBuilder::new()
            } else {
                GraphBuilder::new().allow_unguarded_loops()
            };
            let src = b.add_ingress("ingress", None);

            let wrap_factory: OperatorFactory =
                Arc::new(move || Box::new(FlatMap::new(state_wrap_flatmap())) as Box<dyn Operator>);
            let fm1 = b.add_node(
                NodeSpec::new("state-wrap", wrap_factory)
                    .with_parallelism(opts.parallelism)
                    .with_output_sig(wrapped_sig()),
            );
            b.connect(Endpoint::Ingress(src), fm1, 0);

            let period = cfg.period;
            let lateness = opts.wm_period + 1;
            let fold_key = wrapped_state_key(cfg.key_input.clone(), cfg.key_state.clone());
            let fold_spec = WindowSpec::new(period, period + 1, lateness)?;
            let fold_factory: OperatorFactory = {
                let (cfg, fold_key) = (cfg.clone(), fold_key.clone());
                let variant = opts.variant;
                Arc::new(move || {
                    Box::new(Aggregate::new(
                        fold_spec,
                        fold_key.clone(),
                        state_fold_window(&cfg, variant),
                    )) as Box<dyn Operator>
                })
            };
            let mut a1 = NodeSpec::new("state-fold", fold_factory)
                .with_parallelism(opts.parallelism)
                .with_routing(fold_key.clone())
                .with_output_sig(wrapped_sig())
                .with_window_span(period + 1);
            if opts.guards {
                let in_key = fold_key.clone();
                let out_key = fold_key.clone();
                a1 = a1
                    .with_input_guard(Arc::new(move || {
                        LoopInputGuard::new(LoopShape::Periodic { period, key: in_key.clone() })
                    }))
                    .with_output_guard(Arc::new(move || {
                        LoopOutputGuard::new(LoopShape::Periodic { period, key: out_key.clone() })
                    }));
            }
            let a1 = b.add_node(a1);
            b.connect(Endpoint::Node(fm1), a1, 0);
            b.connect_loop(a1);

            let out_factory: OperatorFactory = {
                let cfg = cfg.clone();
                Arc::new(move || {
                    Box::new(FlatMap::new(state_output_flatmap(&cfg))) as Box<dyn Operator>
                })
            };
            let fm2 = b.add_node(
                NodeSpec::new("state-output", out_factory).with_parallelism(opts.parallelism),
            );
            b.connect(Endpoint::Node(a1), fm2, 0);
            b.set_egress(fm2);
            b.build()
        }
        Mode::AggPlus => Err(Error::config(
            "the keyed periodic-state operator has no agg-plus build; use mode agg",
        )),
    }
}
