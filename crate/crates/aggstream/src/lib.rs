//! A single-process stream-processing engine built around one minimal
//! operator: a keyed, time-based windowed Aggregate that emits at most
//! one tuple per window instance.
//!
//! The engine ships dedicated implementations of the usual operators
//! (Filter, Map, FlatMap, windowed Join, keyed periodic state) and, next
//! to them, equivalent graphs built exclusively from Aggregates, using
//! embedding, feedback loops with watermark guards, and key-by
//! partitioning. A harness runs both sides on the same input and checks
//! that the output multisets agree, and benchmarks the cost of the
//! aggregate-only route.

pub mod agg;
pub mod error;
pub mod guard;
pub mod harness;
pub mod exec;
pub mod graph;
pub mod ingress;
pub mod ops;
pub mod pipeline;
pub mod pipelined;
pub mod tuple;
pub mod window;

pub use error::{Error, Result};
pub use tuple::{StreamElement, Timestamp, Tuple, Value};
pub use window::{WindowInstance, WindowSpec};
