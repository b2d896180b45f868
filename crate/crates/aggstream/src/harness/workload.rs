//! Synthetic workload generation and the built-in user-function
//! registry.
//!
//! Records are `[id, key, val, u]`: a unique id (the equivalence
//! theorems assume duplicate-free inputs), a key drawn from the
//! configured cardinality, an integer payload, and a uniform float that
//! realizes the selectivity knob. Event time is non-decreasing with
//! small random increments, so the ingress watermarking never drops
//! anything.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::{
    FilterFn, FlatMapFn, JoinPredicate, MapFn, StatefulConfig,
};
use crate::tuple::{key_by_attrs, KeyFn, Ticks, Tuple, Value};

use super::config::WorkloadConfig;
use super::FoldKind;

/// Attribute positions of a workload record.
pub const ATTR_ID: usize = 0;
pub const ATTR_KEY: usize = 1;
pub const ATTR_VAL: usize = 2;
pub const ATTR_UNIFORM: usize = 3;

/// Offset separating the id spaces of a join's two input streams.
pub const SIDE2_ID_OFFSET: i64 = 1 << 40;

fn record(rng: &mut ChaCha8Rng, ts: u64, id: i64, key_cardinality: u64) -> Tuple {
    Tuple::new(
        ts,
        vec![
            Value::Int(id),
            Value::Int(rng.gen_range(0..key_cardinality.max(1)) as i64),
            Value::Int(rng.gen_range(0..1_000_000)),
            Value::Float(rng.gen::<f64>()),
        ],
    )
}

/// Deterministic single-stream workload: `records` tuples with unique
/// ids and gently advancing event time.
pub fn generate_workload(cfg: &WorkloadConfig, seed: u64) -> Vec<Tuple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ts = 0u64;
    (0..cfg.records)
        .map(|i| {
            ts += rng.gen_range(0..=2);
            record(&mut rng, ts, i as i64, cfg.key_cardinality)
        })
        .collect()
}

/// Two join input streams with disjoint id spaces.
pub fn generate_join_workload(cfg: &WorkloadConfig, seed: u64) -> (Vec<Tuple>, Vec<Tuple>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut ts1 = 0u64;
    let mut ts2 = 0u64;
    let mut side1 = Vec::new();
    let mut side2 = Vec::new();
    for i in 0..cfg.records {
        ts1 += rng.gen_range(0..=2);
        side1.push(record(&mut rng, ts1, i as i64, cfg.key_cardinality));
        ts2 += rng.gen_range(0..=2);
        side2.push(record(&mut rng, ts2, SIDE2_ID_OFFSET + i as i64, cfg.key_cardinality));
    }
    (side1, side2)
}

/// Spins for roughly `iters` cheap operations; the per-invocation cost
/// knob of the benchmarks.
#[inline]
pub fn busy_work(iters: u64) {
    let mut acc = 0u64;
    for i in 0..iters {
        acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i);
        std::hint::black_box(acc);
    }
}

/// Key function of workload records.
pub fn record_key() -> KeyFn {
    key_by_attrs(vec![ATTR_KEY])
}

/// Filter: keep a record iff its uniform field falls under the
/// selectivity.
pub fn filter_fn(selectivity: f64, cost: u64) -> FilterFn {
    Arc::new(move |t: &Tuple| {
        busy_work(cost);
        t.attrs[ATTR_UNIFORM].as_float().unwrap_or(0.0) < selectivity
    })
}

/// Map: arithmetic on the payload, id preserved.
pub fn map_fn(cost: u64) -> MapFn {
    Arc::new(move |t: &Tuple| {
        busy_work(cost);
        let mut attrs = t.attrs.clone();
        let v = attrs[ATTR_VAL].as_int().unwrap_or(0);
        attrs[ATTR_VAL] = Value::Int(v.wrapping_mul(2).wrapping_add(1));
        attrs
    })
}

/// FlatMap: `floor(s)` copies plus one more with probability `frac(s)`,
/// each copy distinguished by a trailing sequence number.
pub fn flatmap_fn(selectivity: f64, cost: u64) -> FlatMapFn {
    Arc::new(move |t: &Tuple| {
        busy_work(cost);
        let u = t.attrs[ATTR_UNIFORM].as_float().unwrap_or(0.0);
        let n = selectivity.floor() as i64 + i64::from(u < selectivity.fract());
        (0..n)
            .map(|j| {
                let mut attrs = t.attrs.clone();
                attrs.push(Value::Int(j));
                attrs
            })
            .collect()
    })
}

/// Join predicate with the configured match probability per comparison.
pub fn join_predicate(selectivity: f64, cost: u64) -> JoinPredicate {
    const MODULUS: i64 = 1_000_000;
    let threshold = (selectivity.clamp(0.0, 1.0) * MODULUS as f64) as i64;
    Arc::new(move |a: &Tuple, b: &Tuple| {
        busy_work(cost);
        let va = a.attrs[ATTR_VAL].as_int().unwrap_or(0);
        let vb = b.attrs[ATTR_VAL].as_int().unwrap_or(0);
        (va + vb).rem_euclid(MODULUS) < threshold
    })
}

/// Keyed fold over the payload field. The state tuple is `[key, acc]`.
pub fn fold_config(fold: FoldKind, period: Ticks) -> StatefulConfig {
    let init = move |t: &Tuple| -> i64 {
        let v = t.attrs[ATTR_VAL].as_int().unwrap_or(0);
        match fold {
            FoldKind::Sum => v,
            FoldKind::Max => v,
            FoldKind::Count => 1,
        }
    };
    let combine = move |acc: i64, v: i64| -> i64 {
        match fold {
            FoldKind::Sum | FoldKind::Count => acc + v,
            FoldKind::Max => acc.max(v),
        }
    };
    StatefulConfig {
        create: Arc::new(move |t| {
            Tuple::new(t.ts, vec![t.attrs[ATTR_KEY].clone(), Value::Int(init(t))])
        }),
        add: Arc::new(move |s, t| {
            let acc = combine(s.attrs[1].as_int().unwrap(), init(t));
            Tuple::new(s.ts, vec![s.attrs[0].clone(), Value::Int(acc)])
        }),
        merge: Arc::new(move |a, b| {
            let acc = combine(a.attrs[1].as_int().unwrap(), b.attrs[1].as_int().unwrap());
            Tuple::new(a.ts, vec![a.attrs[0].clone(), Value::Int(acc)])
        }),
        output: Arc::new(|s| Some(s.attrs.clone())),
        period,
        key_input: record_key(),
        key_state: key_by_attrs(vec![0]),
    }
}

/// Looks a user function role up by name; benchmark configs select
/// functions this way rather than loading code.
pub fn registry_names() -> &'static [&'static str] {
    &["threshold-filter", "scale-map", "replicate-flatmap", "modular-join", "sum", "max", "count"]
}

pub fn fold_by_name(name: &str) -> Result<FoldKind> {
    name.parse()
        .map_err(|_| Error::config(format!("unknown fold '{name}'; registry: {:?}", registry_names())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::WorkloadConfig;

    #[test]
    fn same_seed_same_sequence() {
        let cfg = WorkloadConfig { records: 200, ..WorkloadConfig::default() };
        assert_eq!(generate_workload(&cfg, 7), generate_workload(&cfg, 7));
        assert_ne!(generate_workload(&cfg, 7), generate_workload(&cfg, 8));
    }

    #[test]
    fn ids_are_unique_and_time_is_sorted() {
        let cfg = WorkloadConfig { records: 500, ..WorkloadConfig::default() };
        let recs = generate_workload(&cfg, 42);
        let mut ids: Vec<i64> =
            recs.iter().map(|t| t.attrs[ATTR_ID].as_int().unwrap()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 500);
        assert!(recs.windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn flatmap_selectivity_is_realized() {
        let cfg = WorkloadConfig { records: 100_000, ..WorkloadConfig::default() };
        let recs = generate_workload(&cfg, 3);
        let f = flatmap_fn(1.5, 0);
        let outputs: usize = recs.iter().map(|t| f(t).len()).sum();
        let measured = outputs as f64 / recs.len() as f64;
        assert!((measured - 1.5).abs() / 1.5 < 0.05, "measured {measured}");
    }

    #[test]
    fn join_selectivity_is_realized() {
        let cfg = WorkloadConfig { records: 2_000, ..WorkloadConfig::default() };
        let (a, b) = generate_join_workload(&cfg, 9);
        let p = join_predicate(0.01, 0);
        let mut matches = 0u64;
        let mut total = 0u64;
        for x in a.iter().take(300) {
            for y in b.iter().take(300) {
                total += 1;
                matches += u64::from(p(x, y));
            }
        }
        let measured = matches as f64 / total as f64;
        assert!((measured - 0.01).abs() < 0.005, "measured {measured}");
    }
}
