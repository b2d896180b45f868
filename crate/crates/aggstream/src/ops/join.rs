//! Windowed symmetric join over two input streams.
//!
//! Matches tuple pairs with equal keys that fall into aligned window
//! instances, probing as tuples arrive: a new tuple is compared against
//! everything the other side already stored for each shared window, then
//! stored itself. Outputs carry the window's output timestamp followed by
//! the full attribute lists of both inputs, first side first.
//!
//! The join runs with zero allowed lateness: late tuples are dropped and
//! window stores are discarded as soon as the merged watermark passes
//! their right boundary.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::tuple::{KeyFn, StreamElement, Timestamp, Tuple, Value};
use crate::window::{assign_windows, is_late, output_timestamp, WindowSpec};

use super::{JoinPredicate, Operator};

#[derive(Default)]
struct PairStore {
    side1: Vec<Tuple>,
    side2: Vec<Tuple>,
}

pub struct Join {
    spec: WindowSpec,
    keys: [KeyFn; 2],
    predicate: JoinPredicate,
    watermark: Timestamp,
    stores: BTreeMap<(Timestamp, Vec<u8>), PairStore>,
    late_drops: u64,
    comparisons: u64,
}

impl Join {
    pub fn new(spec: WindowSpec, key1: KeyFn, key2: KeyFn, predicate: JoinPredicate) -> Self {
        Self {
            spec,
            keys: [key1, key2],
            predicate,
            watermark: 0,
            stores: BTreeMap::new(),
            late_drops: 0,
            comparisons: 0,
        }
    }

    fn join_output(l: Timestamp, size: u64, t1: &Tuple, t2: &Tuple) -> Tuple {
        let mut attrs: Vec<Value> = t1.as_attr_list();
        attrs.extend(t2.as_attr_list());
        Tuple::new(output_timestamp(l, size), attrs)
    }

    /// Number of stored window instances (for quiescence checks).
    pub fn live_windows(&self) -> usize {
        self.stores.len()
    }
}

impl Operator for Join {
    fn on_tuple(&mut self, port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        if is_late(t.ts, self.watermark) {
            self.late_drops += 1;
            return Ok(());
        }
        let key = (self.keys[port])(&t);
        for l in assign_windows(t.ts, &self.spec) {
            let store = self.stores.entry((l, key.clone())).or_default();
            let others = if port == 0 { &store.side2 } else { &store.side1 };
            for other in others {
                self.comparisons += 1;
                let (t1, t2) = if port == 0 { (&t, other) } else { (other, &t) };
                if (self.predicate)(t1, t2) {
                    out.push(StreamElement::Tuple(Self::join_output(l, self.spec.size, t1, t2)));
                }
            }
            if port == 0 {
                store.side1.push(t.clone());
            } else {
                store.side2.push(t.clone());
            }
        }
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        self.watermark = w;
        let size = self.spec.size;
        self.stores.retain(|(l, _), _| l + size > w);
        out.push(StreamElement::Watermark(w));
        Ok(())
    }

    fn num_ports(&self) -> usize {
        2
    }

    fn late_drops(&self) -> u64 {
        self.late_drops
    }

    fn comparisons(&self) -> u64 {
        self.comparisons
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::key_by_attrs;
    use std::sync::Arc;

    fn always() -> JoinPredicate {
        Arc::new(|_, _| true)
    }

    fn keyed(ts: Timestamp, k: i64) -> Tuple {
        Tuple::new(ts, vec![Value::Int(k)])
    }

    #[test]
    fn tumbling_pair_joins_with_window_timestamp() {
        let spec = WindowSpec::new(2, 2, 0).unwrap();
        let mut j = Join::new(spec, key_by_attrs(vec![0]), key_by_attrs(vec![0]), always());
        let mut out = Vec::new();
        j.on_tuple(0, keyed(0, 1), &mut out).unwrap();
        j.on_tuple(1, keyed(1, 1), &mut out).unwrap();
        let expected = Tuple::new(
            1,
            vec![Value::Int(0), Value::Int(1), Value::Int(1), Value::Int(1)],
        );
        assert_eq!(out, vec![StreamElement::Tuple(expected)]);
    }

    #[test]
    fn distinct_keys_never_match() {
        let spec = WindowSpec::new(2, 2, 0).unwrap();
        let mut j = Join::new(spec, key_by_attrs(vec![0]), key_by_attrs(vec![0]), always());
        let mut out = Vec::new();
        j.on_tuple(0, keyed(0, 1), &mut out).unwrap();
        j.on_tuple(1, keyed(1, 2), &mut out).unwrap();
        assert!(out.is_empty());
        assert_eq!(j.comparisons(), 0);
    }

    #[test]
    fn sliding_join_emits_once_per_shared_window() {
        let spec = WindowSpec::new(1, 3, 0).unwrap();
        let mut j = Join::new(spec, key_by_attrs(vec![0]), key_by_attrs(vec![0]), always());
        let mut out = Vec::new();
        j.on_tuple(0, keyed(2, 1), &mut out).unwrap();
        j.on_tuple(1, keyed(3, 1), &mut out).unwrap();
        // Windows holding ts 2: {0,1,2}; ts 3: {1,2,3}; shared with both
        // contained: l in {1, 2}.
        let ts: Vec<Timestamp> = out
            .iter()
            .filter_map(StreamElement::as_tuple)
            .map(|t| t.ts)
            .collect();
        assert_eq!(ts, vec![3, 4]);
    }

    #[test]
    fn late_tuples_dropped_and_stores_purged() {
        let spec = WindowSpec::new(2, 2, 0).unwrap();
        let mut j = Join::new(spec, key_by_attrs(vec![0]), key_by_attrs(vec![0]), always());
        let mut out = Vec::new();
        j.on_tuple(0, keyed(0, 1), &mut out).unwrap();
        j.on_watermark(2, &mut out).unwrap();
        assert_eq!(j.live_windows(), 0);
        j.on_tuple(1, keyed(1, 1), &mut out).unwrap();
        assert_eq!(j.late_drops(), 1);
        assert_eq!(out, vec![StreamElement::Watermark(2)]);
    }
}
