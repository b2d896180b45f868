//! Workload configuration: the in-memory struct plus the versioned TOML
//! file format the CLI reads.

use serde::Deserialize;

use crate::agg::LoopVariant;
use crate::error::{Error, Result};
use crate::pipeline::Mode;
use crate::tuple::Ticks;

use super::{FoldKind, OpKind};

/// Everything a harness run needs to know.
#[derive(Clone)]
pub struct WorkloadConfig {
    pub operator: OpKind,
    pub mode: Mode,
    /// Outputs per input (FM) or match probability per comparison (J).
    pub selectivity: f64,
    /// Busy-loop iterations per user-function invocation.
    pub cost: u64,
    pub wa: Ticks,
    pub ws: Ticks,
    pub lateness: Ticks,
    /// Output period of the keyed periodic-state operator.
    pub period: Ticks,
    pub fold: FoldKind,
    pub key_cardinality: u64,
    /// Watermark period of the ingress.
    pub wm_period: Ticks,
    /// Input size for equivalence and single runs.
    pub records: u64,
    pub parallelism: usize,
    pub guards: bool,
    pub variant: LoopVariant,
    /// Benchmark knobs (wall clock).
    pub rate: f64,
    pub duration_secs: u64,
    pub warmup_secs: u64,
    pub cooldown_secs: u64,
    pub latency_cap_ms: f64,
    pub max_violations: u64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            operator: OpKind::FlatMap,
            mode: Mode::Agg,
            selectivity: 1.0,
            cost: 0,
            wa: 2,
            ws: 4,
            lateness: 0,
            period: 4,
            fold: FoldKind::Sum,
            key_cardinality: 8,
            wm_period: 4,
            records: 1000,
            parallelism: 1,
            guards: true,
            variant: LoopVariant::Repaired,
            rate: 20_000.0,
            duration_secs: 10,
            warmup_secs: 2,
            cooldown_secs: 2,
            latency_cap_ms: 5_000.0,
            max_violations: 3,
            seed: 1,
        }
    }
}

impl WorkloadConfig {
    /// Rejects nonsensical combinations; exit code 2 territory.
    pub fn validate(&self) -> Result<()> {
        if self.warmup_secs + self.cooldown_secs >= self.duration_secs {
            return Err(Error::config(format!(
                "warmup ({}) + cooldown ({}) must be shorter than duration ({})",
                self.warmup_secs, self.cooldown_secs, self.duration_secs
            )));
        }
        if self.wa == 0 || self.ws == 0 || self.wa > self.ws {
            return Err(Error::config(format!(
                "invalid window: advance {} size {} (need 0 < advance <= size)",
                self.wa, self.ws
            )));
        }
        if self.period == 0 {
            return Err(Error::config("period must be positive"));
        }
        if self.wm_period == 0 {
            return Err(Error::config("wm-period must be positive"));
        }
        if self.operator == OpKind::Stateful && self.mode == Mode::AggPlus {
            return Err(Error::config(
                "operator O has no agg-plus build; use mode dedicated or agg",
            ));
        }
        if self.rate <= 0.0 {
            return Err(Error::config("rate must be positive"));
        }
        Ok(())
    }
}

/// On-disk schema, format version 1. Every field is optional and
/// defaults to [`WorkloadConfig::default`]; CLI flags override file
/// values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: Option<u32>,
    pub operator: Option<String>,
    pub mode: Option<String>,
    pub selectivity: Option<f64>,
    pub cost: Option<u64>,
    pub wa: Option<u64>,
    pub ws: Option<u64>,
    pub lateness: Option<u64>,
    pub period: Option<u64>,
    pub fold: Option<String>,
    pub key_cardinality: Option<u64>,
    pub wm_period: Option<u64>,
    pub records: Option<u64>,
    pub parallelism: Option<usize>,
    pub rate: Option<f64>,
    pub duration_secs: Option<u64>,
    pub warmup_secs: Option<u64>,
    pub cooldown_secs: Option<u64>,
    pub latency_cap_ms: Option<f64>,
    pub max_violations: Option<u64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))?;
        match file.version {
            None | Some(1) => Ok(file),
            Some(v) => Err(Error::config(format!("unsupported config version {v} (expected 1)"))),
        }
    }

    /// Applies the file on top of a base config.
    pub fn apply(self, mut cfg: WorkloadConfig) -> Result<WorkloadConfig> {
        if let Some(op) = self.operator {
            cfg.operator = op.parse()?;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode.parse()?;
        }
        if let Some(fold) = self.fold {
            cfg.fold = fold.parse()?;
        }
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            selectivity, cost, wa, ws, lateness, period, key_cardinality, wm_period, records,
            parallelism, rate, duration_secs, warmup_secs, cooldown_secs, latency_cap_ms,
            max_violations, seed
        );
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults() {
        let file = ConfigFile::parse(
            "version = 1\noperator = \"J\"\nmode = \"agg-plus\"\nws = 6\nseed = 99\n",
        )
        .unwrap();
        let cfg = file.apply(WorkloadConfig::default()).unwrap();
        assert_eq!(cfg.operator, OpKind::Join);
        assert_eq!(cfg.mode, Mode::AggPlus);
        assert_eq!(cfg.ws, 6);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.wa, 2);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        assert!(ConfigFile::parse("bogus = 3\n").is_err());
        assert!(ConfigFile::parse("version = 2\n").is_err());
    }

    #[test]
    fn validation_catches_bad_budgets() {
        let cfg = WorkloadConfig {
            duration_secs: 3,
            warmup_secs: 2,
            cooldown_secs: 1,
            ..WorkloadConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(WorkloadConfig::default().validate().is_ok());
    }
}
