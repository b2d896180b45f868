//! Unfold stages: two Aggregates and a feedback loop that re-emit an
//! embedded payload one element at a time.
//!
//! The first stage turns an embed tuple into a loop tuple carrying index
//! 0 and then, on each loop pass, re-emits the payload with the index
//! advanced; the second stage picks the indexed element out of each loop
//! tuple. Both run on tick-sized, full-tuple-keyed windows, so every
//! distinct loop tuple occupies its own window instance.

use std::sync::Arc;

use crate::ops::WindowFn;
use crate::tuple::{Tuple, Value, EMBED_TAG};
use crate::window::WindowInstance;

use super::LoopVariant;

/// First unfold stage. For an embed tuple: unions the payloads of the
/// (identical) window contents and restarts them at index 0. For a loop
/// tuple: advances the index while further elements remain.
///
/// Under [`LoopVariant::Repaired`] the index advances only while
/// `index + 1` is still in range, so every emitted tuple carries a valid
/// index. Under [`LoopVariant::Literal`] the stage advances while the
/// current index is in range, which emits one terminal tuple whose index
/// equals the payload length.
pub fn unfold_reindex_window(variant: LoopVariant) -> WindowFn {
    Arc::new(move |win: &WindowInstance| {
        let first = &win.contents[0];
        let tag = first.attrs[1].as_index().expect("unfold input carries an index");
        if tag == EMBED_TAG {
            let mut set: Vec<Tuple> = Vec::new();
            for t in &win.contents {
                for inner in t.attrs[0].as_tuples().expect("embed payload") {
                    if !set.contains(inner) {
                        set.push(inner.clone());
                    }
                }
            }
            return Some(vec![Value::Tuples(set), Value::Index(0)]);
        }
        let len = first.attrs[0].as_tuples().expect("loop payload").len() as i64;
        let keep_looping = match variant {
            LoopVariant::Repaired => tag + 1 < len,
            LoopVariant::Literal => tag < len,
        };
        keep_looping.then(|| vec![first.attrs[0].clone(), Value::Index(tag + 1)])
    })
}

/// Second unfold stage: emits the payload element the loop tuple's index
/// points at. An out-of-range index (which only the literal variant
/// produces) yields nothing.
pub fn unfold_emit_window() -> WindowFn {
    Arc::new(|win: &WindowInstance| {
        let t = &win.contents[0];
        let payload = t.attrs[0].as_tuples().expect("loop payload");
        let tag = t.attrs[1].as_index().expect("loop index");
        payload.get(tag as usize).map(|inner| inner.attrs.clone())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload3() -> Vec<Tuple> {
        vec![
            Tuple::new(4, vec![Value::Text("x".into())]),
            Tuple::new(4, vec![Value::Text("y".into())]),
            Tuple::new(4, vec![Value::Text("z".into())]),
        ]
    }

    fn window_of(t: Tuple) -> WindowInstance {
        let mut w = WindowInstance::new(t.ts);
        w.contents = vec![t];
        w
    }

    fn loop_tuple(tag: i64) -> Tuple {
        Tuple::new(4, vec![Value::Tuples(payload3()), Value::Index(tag)])
    }

    #[test]
    fn embed_tuple_restarts_at_index_zero() {
        let f = unfold_reindex_window(LoopVariant::Repaired);
        let attrs = f(&window_of(loop_tuple(EMBED_TAG))).unwrap();
        assert_eq!(attrs, vec![Value::Tuples(payload3()), Value::Index(0)]);
    }

    #[test]
    fn loop_tuple_advances_index() {
        let f = unfold_reindex_window(LoopVariant::Repaired);
        let attrs = f(&window_of(loop_tuple(0))).unwrap();
        assert_eq!(attrs[1], Value::Index(1));
    }

    #[test]
    fn repaired_variant_stops_at_last_valid_index() {
        let f = unfold_reindex_window(LoopVariant::Repaired);
        assert!(f(&window_of(loop_tuple(2))).is_none());
    }

    #[test]
    fn literal_variant_emits_out_of_range_terminal() {
        let f = unfold_reindex_window(LoopVariant::Literal);
        let attrs = f(&window_of(loop_tuple(2))).unwrap();
        assert_eq!(attrs[1], Value::Index(3));
        assert!(f(&window_of(loop_tuple(3))).is_none());
    }

    #[test]
    fn emit_stage_picks_indexed_element() {
        let f = unfold_emit_window();
        let attrs = f(&window_of(loop_tuple(1))).unwrap();
        assert_eq!(attrs, vec![Value::Text("y".into())]);
        assert!(f(&window_of(loop_tuple(3))).is_none());
    }

    #[test]
    fn duplicate_embeds_collapse_into_one_restart() {
        let f = unfold_reindex_window(LoopVariant::Repaired);
        let t = loop_tuple(EMBED_TAG);
        let mut w = WindowInstance::new(4);
        w.contents = vec![t.clone(), t];
        let attrs = f(&w).unwrap();
        assert_eq!(attrs, vec![Value::Tuples(payload3()), Value::Index(0)]);
    }
}
