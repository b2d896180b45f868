//! Workload generation, operator-equivalence runs, benchmarks, and the
//! experiment sweep grid.

pub mod bench;
pub mod config;
pub mod equiv;
pub mod sweep;
pub mod workload;

pub use bench::{find_max_sustainable, run_bench, BenchSummary, MetricsRow};
pub use config::WorkloadConfig;
pub use equiv::{run_equivalence, EquivReport};
pub use sweep::{run_sweep, SweepCell, SweepOptions};
pub use workload::{generate_join_workload, generate_workload};

use crate::error::{Error, Result};

/// Which operator a workload exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Filter,
    Map,
    FlatMap,
    Join,
    Stateful,
}

impl std::str::FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F" => Ok(OpKind::Filter),
            "M" => Ok(OpKind::Map),
            "FM" => Ok(OpKind::FlatMap),
            "J" => Ok(OpKind::Join),
            "O" => Ok(OpKind::Stateful),
            other => Err(Error::config(format!("unknown operator '{other}' (expected F|M|FM|J|O)"))),
        }
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OpKind::Filter => "F",
            OpKind::Map => "M",
            OpKind::FlatMap => "FM",
            OpKind::Join => "J",
            OpKind::Stateful => "O",
        })
    }
}

/// Fold used by the keyed periodic-state workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldKind {
    Sum,
    Max,
    Count,
}

impl std::str::FromStr for FoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(FoldKind::Sum),
            "max" => Ok(FoldKind::Max),
            "count" => Ok(FoldKind::Count),
            other => Err(Error::config(format!("unknown fold '{other}' (expected sum|max|count)"))),
        }
    }
}
