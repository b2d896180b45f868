//! Operator implementations: the stateless trio, the windowed Aggregate
//! in both its single-output and multi-output forms, the windowed Join,
//! and a keyed stateful operator with periodic output.
//!
//! Operators consume tuples and merged watermarks and emit stream
//! elements. Watermark merging across input edges is the runtime's job;
//! an operator only ever sees a non-decreasing merged watermark.

mod aggregate;
mod join;
mod stateful;
mod stateless;

pub use aggregate::Aggregate;
pub use join::Join;
pub use stateful::{KeyedState, StatefulConfig};
pub use stateless::{Filter, FlatMap, Map};

use std::sync::Arc;

use crate::error::Result;
use crate::tuple::{StreamElement, Timestamp, Tuple, Value};
use crate::window::WindowInstance;

/// Filter predicate.
pub type FilterFn = Arc<dyn Fn(&Tuple) -> bool + Send + Sync>;

/// Map function: produces the output attribute list. The operator keeps
/// the input timestamp; the function never sets it.
pub type MapFn = Arc<dyn Fn(&Tuple) -> Vec<Value> + Send + Sync>;

/// FlatMap function: zero or more output attribute lists, all stamped
/// with the input timestamp by the operator.
pub type FlatMapFn = Arc<dyn Fn(&Tuple) -> Vec<Vec<Value>> + Send + Sync>;

/// Window function of the single-output Aggregate: at most one attribute
/// list per window instance.
pub type WindowFn = Arc<dyn Fn(&WindowInstance) -> Option<Vec<Value>> + Send + Sync>;

/// Window function of the multi-output Aggregate: any number of
/// attribute lists, all sharing the window's output timestamp.
pub type WindowMultiFn = Arc<dyn Fn(&WindowInstance) -> Vec<Vec<Value>> + Send + Sync>;

/// Join predicate over one tuple from each side, first side first.
pub type JoinPredicate = Arc<dyn Fn(&Tuple, &Tuple) -> bool + Send + Sync>;

/// A single operator instance. Instances are single-threaded; distinct
/// instances share nothing.
pub trait Operator: Send {
    /// Handles a tuple arriving on the given input port.
    fn on_tuple(&mut self, port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()>;

    /// Handles an increase of the merged input watermark.
    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()>;

    /// Number of logical input ports (union members share a port).
    fn num_ports(&self) -> usize {
        1
    }

    /// Tuples discarded because no admissible window remained for them.
    fn late_drops(&self) -> u64 {
        0
    }

    /// Join-style predicate invocations, for throughput accounting.
    fn comparisons(&self) -> u64 {
        0
    }
}
