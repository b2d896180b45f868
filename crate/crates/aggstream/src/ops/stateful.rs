//! Keyed stateful operator with periodic output.
//!
//! Maintains one evolving state tuple per key, folds every input into it
//! exactly once, and emits the output function's view of the state every
//! `period` ticks. This is the reference implementation the aggregate
//! composition of the same operator is tested against.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::Result;
use crate::tuple::{KeyFn, StreamElement, Ticks, Timestamp, Tuple, Value};
use crate::window::is_late;

use super::Operator;

/// Creates the initial state tuple from the first input of a key.
pub type StateCreateFn = Arc<dyn Fn(&Tuple) -> Tuple + Send + Sync>;
/// Folds one more input into an existing state tuple.
pub type StateAddFn = Arc<dyn Fn(&Tuple, &Tuple) -> Tuple + Send + Sync>;
/// Merges two state tuples (used when a carried state meets another).
pub type StateMergeFn = Arc<dyn Fn(&Tuple, &Tuple) -> Tuple + Send + Sync>;
/// Renders an output attribute list from a state tuple, if any.
pub type StateOutputFn = Arc<dyn Fn(&Tuple) -> Option<Vec<Value>> + Send + Sync>;

/// Configuration of a keyed stateful operator.
#[derive(Clone)]
pub struct StatefulConfig {
    pub create: StateCreateFn,
    pub add: StateAddFn,
    pub merge: StateMergeFn,
    pub output: StateOutputFn,
    /// Output period in ticks.
    pub period: Ticks,
    /// Key of an input tuple.
    pub key_input: KeyFn,
    /// Key of a state tuple, consistent with `key_input`.
    pub key_state: KeyFn,
}

struct KeyEntry {
    state: Option<Tuple>,
    next_boundary: Timestamp,
    pending: Vec<Tuple>,
}

/// Dedicated implementation: per-key state map, inputs folded in arrival
/// order once the watermark confirms their period is complete.
pub struct KeyedState {
    cfg: StatefulConfig,
    watermark: Timestamp,
    keys: BTreeMap<Vec<u8>, KeyEntry>,
    late_drops: u64,
}

impl KeyedState {
    pub fn new(cfg: StatefulConfig) -> Self {
        Self { cfg, watermark: 0, keys: BTreeMap::new(), late_drops: 0 }
    }
}

impl Operator for KeyedState {
    fn on_tuple(&mut self, _port: usize, t: Tuple, _out: &mut Vec<StreamElement>) -> Result<()> {
        if is_late(t.ts, self.watermark) {
            self.late_drops += 1;
            return Ok(());
        }
        let key = (self.cfg.key_input)(&t);
        let period = self.cfg.period;
        let entry = self.keys.entry(key).or_insert_with(|| KeyEntry {
            state: None,
            next_boundary: (t.ts / period + 1) * period,
            pending: Vec::new(),
        });
        entry.pending.push(t);
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        self.watermark = w;
        for entry in self.keys.values_mut() {
            while entry.next_boundary + 1 <= w {
                let boundary = entry.next_boundary;
                let mut rest = Vec::new();
                for t in entry.pending.drain(..) {
                    if t.ts < boundary {
                        entry.state = Some(match entry.state.take() {
                            None => (self.cfg.create)(&t),
                            Some(s) => (self.cfg.add)(&s, &t),
                        });
                    } else {
                        rest.push(t);
                    }
                }
                entry.pending = rest;
                let state = entry.state.as_ref().expect("state exists past first boundary");
                if let Some(attrs) = (self.cfg.output)(state) {
                    out.push(StreamElement::Tuple(Tuple::new(boundary, attrs)));
                }
                entry.next_boundary += self.cfg.period;
            }
        }
        out.push(StreamElement::Watermark(w));
        Ok(())
    }

    fn late_drops(&self) -> u64 {
        self.late_drops
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::key_by_attrs;

    /// Running sum keyed by attribute 0, summing attribute 1. The state
    /// tuple is [key, acc].
    pub(crate) fn running_sum(period: Ticks) -> StatefulConfig {
        StatefulConfig {
            create: Arc::new(|t| {
                Tuple::new(t.ts, vec![t.attrs[0].clone(), t.attrs[1].clone()])
            }),
            add: Arc::new(|s, t| {
                let acc = s.attrs[1].as_int().unwrap() + t.attrs[1].as_int().unwrap();
                Tuple::new(s.ts, vec![s.attrs[0].clone(), Value::Int(acc)])
            }),
            merge: Arc::new(|a, b| {
                let acc = a.attrs[1].as_int().unwrap() + b.attrs[1].as_int().unwrap();
                Tuple::new(a.ts, vec![a.attrs[0].clone(), Value::Int(acc)])
            }),
            output: Arc::new(|s| Some(s.attrs.clone())),
            period,
            key_input: key_by_attrs(vec![0]),
            key_state: key_by_attrs(vec![0]),
        }
    }

    #[test]
    fn emits_running_state_every_period() {
        let mut op = KeyedState::new(running_sum(4));
        let mut out = Vec::new();
        op.on_tuple(0, Tuple::new(1, vec![Value::Int(7), Value::Int(2)]), &mut out).unwrap();
        op.on_tuple(0, Tuple::new(3, vec![Value::Int(7), Value::Int(5)]), &mut out).unwrap();
        op.on_watermark(5, &mut out).unwrap();
        assert_eq!(
            out,
            vec![
                StreamElement::tuple(4, vec![Value::Int(7), Value::Int(7)]),
                StreamElement::Watermark(5),
            ]
        );
        out.clear();
        op.on_tuple(0, Tuple::new(6, vec![Value::Int(7), Value::Int(1)]), &mut out).unwrap();
        op.on_watermark(9, &mut out).unwrap();
        assert_eq!(
            out,
            vec![
                StreamElement::tuple(8, vec![Value::Int(7), Value::Int(8)]),
                StreamElement::Watermark(9),
            ]
        );
    }

    #[test]
    fn quiet_periods_repeat_the_state() {
        let mut op = KeyedState::new(running_sum(2));
        let mut out = Vec::new();
        op.on_tuple(0, Tuple::new(0, vec![Value::Int(1), Value::Int(3)]), &mut out).unwrap();
        op.on_watermark(7, &mut out).unwrap();
        let sums: Vec<(Timestamp, i64)> = out
            .iter()
            .filter_map(StreamElement::as_tuple)
            .map(|t| (t.ts, t.attrs[1].as_int().unwrap()))
            .collect();
        assert_eq!(sums, vec![(2, 3), (4, 3), (6, 3)]);
    }

    #[test]
    fn first_output_waits_one_period() {
        let mut op = KeyedState::new(running_sum(4));
        let mut out = Vec::new();
        op.on_tuple(0, Tuple::new(5, vec![Value::Int(1), Value::Int(3)]), &mut out).unwrap();
        op.on_watermark(8, &mut out).unwrap();
        assert_eq!(out, vec![StreamElement::Watermark(8)]);
        op.on_watermark(9, &mut out).unwrap();
        let tuples: Vec<&Tuple> = out.iter().filter_map(StreamElement::as_tuple).collect();
        assert_eq!(tuples, vec![&Tuple::new(8, vec![Value::Int(1), Value::Int(3)])]);
    }
}
