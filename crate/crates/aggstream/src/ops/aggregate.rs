//! The windowed Aggregate.
//!
//! Routes each tuple into every admissible window instance of its key,
//! fires closed windows when the watermark passes their right boundary,
//! and purges instances once their lateness budget is exhausted.
//!
//! Late tuples that land in a window whose boundary has already passed
//! re-fire that window immediately, in discarding mode: every invocation
//! of the window function clears the instance's contents, so a late
//! arrival is evaluated on its own. This is what lets a window respond
//! to each looped-back tuple with a fresh output.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::tuple::{KeyFn, StreamElement, Timestamp, Tuple};
use crate::window::{
    assign_windows, lateness_admissible, output_timestamp, WindowInstance, WindowSpec,
};

use super::{Operator, WindowFn, WindowMultiFn};

/// Windowed aggregate over one logical input stream.
///
/// The single-output form emits at most one tuple per window firing; the
/// multi-output form may emit any number, all carrying the window's
/// output timestamp.
pub struct Aggregate {
    spec: WindowSpec,
    key: KeyFn,
    window_fn: WindowMultiFn,
    watermark: Timestamp,
    /// Live instances ordered by (left boundary, key bytes); this is the
    /// firing order.
    windows: BTreeMap<(Timestamp, Vec<u8>), WindowInstance>,
    late_drops: u64,
}

impl Aggregate {
    /// Single-output aggregate: the window function returns at most one
    /// attribute list.
    pub fn new(spec: WindowSpec, key: KeyFn, f: WindowFn) -> Self {
        let multi: WindowMultiFn =
            std::sync::Arc::new(move |w| f(w).into_iter().collect::<Vec<_>>());
        Self::new_multi(spec, key, multi)
    }

    /// Multi-output aggregate.
    pub fn new_multi(spec: WindowSpec, key: KeyFn, window_fn: WindowMultiFn) -> Self {
        Self {
            spec,
            key,
            window_fn,
            watermark: 0,
            windows: BTreeMap::new(),
            late_drops: 0,
        }
    }

    pub fn watermark(&self) -> Timestamp {
        self.watermark
    }

    /// Number of live window instances (for quiescence checks).
    pub fn live_windows(&self) -> usize {
        self.windows.len()
    }

    fn fire(
        window_fn: &WindowMultiFn,
        size: u64,
        win: &mut WindowInstance,
        out: &mut Vec<StreamElement>,
    ) {
        let ts = output_timestamp(win.left, size);
        for attrs in window_fn(win) {
            out.push(StreamElement::Tuple(Tuple::new(ts, attrs)));
        }
        win.fired = true;
        win.contents.clear();
    }
}

impl Operator for Aggregate {
    fn on_tuple(&mut self, _port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        let key = (self.key)(&t);
        let mut admitted = false;
        for l in assign_windows(t.ts, &self.spec) {
            if !lateness_admissible(l, self.spec.size, self.spec.lateness, self.watermark) {
                continue;
            }
            admitted = true;
            let win = self
                .windows
                .entry((l, key.clone()))
                .or_insert_with(|| WindowInstance::new(l));
            win.contents.push(t.clone());
            if l + self.spec.size <= self.watermark {
                // Boundary already passed: late arrival, re-fire at once.
                Self::fire(&self.window_fn, self.spec.size, win, out);
            }
        }
        if !admitted {
            self.late_drops += 1;
        }
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        self.watermark = w;
        let due: Vec<(Timestamp, Vec<u8>)> = self
            .windows
            .iter()
            .take_while(|((l, _), _)| l + self.spec.size <= w)
            .filter(|(_, win)| !win.fired)
            .map(|(k, _)| k.clone())
            .collect();
        for k in due {
            let win = self.windows.get_mut(&k).expect("window present");
            Self::fire(&self.window_fn, self.spec.size, win, out);
        }
        let horizon = self.spec.size + self.spec.lateness;
        self.windows.retain(|(l, _), _| l + horizon > w);
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
    use crate::tuple::{key_global, Value};
    use std::sync::Arc;

    fn sum_fn() -> WindowFn {
        Arc::new(|win: &WindowInstance| {
            let s: i64 = win.contents.iter().map(|t| t.attrs[0].as_int().unwrap()).sum();
            Some(vec![Value::Int(s)])
        })
    }

    fn run(agg: &mut Aggregate, els: Vec<StreamElement>) -> Vec<StreamElement> {
        let mut out = Vec::new();
        for el in els {
            match el {
                StreamElement::Tuple(t) => agg.on_tuple(0, t, &mut out).unwrap(),
                StreamElement::Watermark(w) => agg.on_watermark(w, &mut out).unwrap(),
            }
        }
        out
    }

    #[test]
    fn sliding_sum_fires_in_boundary_order() {
        let spec = WindowSpec::new(2, 4, 0).unwrap();
        let mut agg = Aggregate::new(spec, key_global(), sum_fn());
        let out = run(
            &mut agg,
            vec![
                StreamElement::tuple(0, vec![Value::Int(1)]),
                StreamElement::tuple(1, vec![Value::Int(2)]),
                StreamElement::tuple(3, vec![Value::Int(4)]),
                StreamElement::Watermark(6),
            ],
        );
        assert_eq!(
            out,
            vec![
                StreamElement::tuple(3, vec![Value::Int(7)]),
                StreamElement::tuple(5, vec![Value::Int(4)]),
                StreamElement::Watermark(6),
            ]
        );
    }

    #[test]
    fn window_function_may_decline() {
        let spec = WindowSpec::new(1, 1, 0).unwrap();
        let f: WindowFn = Arc::new(|_| None);
        let mut agg = Aggregate::new(spec, key_global(), f);
        let out = run(
            &mut agg,
            vec![StreamElement::tuple(2, vec![Value::Int(1)]), StreamElement::Watermark(5)],
        );
        assert_eq!(out, vec![StreamElement::Watermark(5)]);
    }

    #[test]
    fn open_window_stays_silent() {
        let spec = WindowSpec::new(2, 4, 0).unwrap();
        let mut agg = Aggregate::new(spec, key_global(), sum_fn());
        let out = run(
            &mut agg,
            vec![StreamElement::tuple(2, vec![Value::Int(9)]), StreamElement::Watermark(3)],
        );
        assert_eq!(out, vec![StreamElement::Watermark(3)]);
        assert_eq!(agg.live_windows(), 2);
    }

    #[test]
    fn tick_window_with_passthrough_is_identity() {
        let spec = WindowSpec::new(1, 1, 0).unwrap();
        let f: WindowFn = Arc::new(|win: &WindowInstance| Some(win.contents[0].attrs.clone()));
        let mut agg = Aggregate::new(spec, key_global(), f);
        let out = run(
            &mut agg,
            vec![
                StreamElement::tuple(0, vec![Value::Int(10)]),
                StreamElement::tuple(1, vec![Value::Int(11)]),
                StreamElement::Watermark(2),
                StreamElement::tuple(2, vec![Value::Int(12)]),
                StreamElement::Watermark(4),
            ],
        );
        assert_eq!(
            out,
            vec![
                StreamElement::tuple(0, vec![Value::Int(10)]),
                StreamElement::tuple(1, vec![Value::Int(11)]),
                StreamElement::Watermark(2),
                StreamElement::tuple(2, vec![Value::Int(12)]),
                StreamElement::Watermark(4),
            ]
        );
    }

    #[test]
    fn late_tuple_refires_immediately_in_discarding_mode() {
        let spec = WindowSpec::new(1, 1, 10).unwrap();
        let mut agg = Aggregate::new(spec, key_global(), sum_fn());
        let mut out = run(
            &mut agg,
            vec![StreamElement::tuple(3, vec![Value::Int(5)]), StreamElement::Watermark(6)],
        );
        assert_eq!(
            out,
            vec![StreamElement::tuple(3, vec![Value::Int(5)]), StreamElement::Watermark(6)]
        );
        out.clear();
        // Late but admissible: 6 < 3 + 1 + 10. Fires on its own, without
        // the earlier contents.
        agg.on_tuple(0, Tuple::new(3, vec![Value::Int(2)]), &mut out).unwrap();
        assert_eq!(out, vec![StreamElement::tuple(3, vec![Value::Int(2)])]);
        assert_eq!(agg.late_drops(), 0);
    }

    #[test]
    fn inadmissible_tuple_is_counted_and_dropped() {
        let spec = WindowSpec::new(1, 1, 0).unwrap();
        let mut agg = Aggregate::new(spec, key_global(), sum_fn());
        let mut out = Vec::new();
        agg.on_watermark(10, &mut out).unwrap();
        agg.on_tuple(0, Tuple::new(3, vec![Value::Int(1)]), &mut out).unwrap();
        assert_eq!(agg.late_drops(), 1);
        assert_eq!(out, vec![StreamElement::Watermark(10)]);
    }

    #[test]
    fn purge_respects_lateness_budget() {
        let spec = WindowSpec::new(1, 1, 3).unwrap();
        let mut agg = Aggregate::new(spec, key_global(), sum_fn());
        let mut out = Vec::new();
        agg.on_tuple(0, Tuple::new(2, vec![Value::Int(1)]), &mut out).unwrap();
        agg.on_watermark(5, &mut out).unwrap();
        // 2 + 1 + 3 = 6 > 5: still live for late arrivals.
        assert_eq!(agg.live_windows(), 1);
        agg.on_watermark(6, &mut out).unwrap();
        assert_eq!(agg.live_windows(), 0);
    }

    #[test]
    fn multi_output_shares_window_timestamp() {
        let spec = WindowSpec::new(2, 2, 0).unwrap();
        let f: WindowMultiFn = Arc::new(|win: &WindowInstance| {
            win.contents.iter().map(|t| t.attrs.clone()).collect()
        });
        let mut agg = Aggregate::new_multi(spec, key_global(), f);
        let out = run(
            &mut agg,
            vec![
                StreamElement::tuple(0, vec![Value::Int(1)]),
                StreamElement::tuple(1, vec![Value::Int(2)]),
                StreamElement::Watermark(2),
            ],
        );
        assert_eq!(
            out,
            vec![
                StreamElement::tuple(1, vec![Value::Int(1)]),
                StreamElement::tuple(1, vec![Value::Int(2)]),
                StreamElement::Watermark(2),
            ]
        );
    }
}
