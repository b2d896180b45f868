//! Operator semantics enforced purely with Aggregates.
//!
//! Filter, Map, FlatMap, Join, and a keyed periodic-state operator are
//! all expressible as small graphs of the windowed Aggregate from
//! [`crate::ops`]. Multi-output behavior is recovered by packing the
//! would-be outputs into one tuple's payload (an embed stage) and then
//! re-emitting them one at a time through a feedback loop (an unfold
//! stage), or directly through the multi-output Aggregate, which needs
//! neither loop nor guards.

mod embed;
mod stateful;
mod unfold;

pub use embed::{
    embed_flatmap_multi, embed_flatmap_window, embed_join_multi, embed_join_window,
    wrap_side_window, wrapped_join_key,
};
pub use stateful::{state_fold_window, state_output_flatmap, state_wrap_flatmap, wrapped_state_key};
pub use unfold::{unfold_emit_window, unfold_reindex_window};

/// Which reading of the loop compositions to run.
///
/// The repaired variants keep every loop index in range and keep the
/// guard bookkeeping balanced; the literal variants reproduce the
/// original formulation (a terminal unfold pass whose index equals the
/// payload length, and a periodic fold that skips one tick too early)
/// and exist so the divergence can be demonstrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoopVariant {
    #[default]
    Repaired,
    Literal,
}
