//! Embed stages: Aggregate window functions that pack the outputs a
//! multi-output operator would produce into a single tuple's payload.
//!
//! An embedded tuple has two attributes: the payload (a tuple list) and
//! the tag `-1` that marks it as an embed output for the unfold loop.
//! Payload collection uses set semantics: equal tuples collapse, which is
//! what makes a full-tuple-keyed embed insensitive to duplicated inputs.

use std::sync::Arc;

use crate::ops::{FlatMapFn, JoinPredicate, WindowFn, WindowMultiFn};
use crate::tuple::{KeyFn, Tuple, Value, EMBED_TAG};
use crate::window::{output_timestamp, WindowInstance};

fn push_unique(set: &mut Vec<Tuple>, t: Tuple) {
    if !set.contains(&t) {
        set.push(t);
    }
}

/// Embed for FlatMap, hosted on a tick-sized, full-tuple-keyed window:
/// unions the flatmap results of the (identical) window contents and
/// emits them as one payload tagged `-1`, or nothing if the function
/// produced nothing.
pub fn embed_flatmap_window(f: FlatMapFn, size: u64) -> WindowFn {
    Arc::new(move |win: &WindowInstance| {
        let ts = output_timestamp(win.left, size);
        let mut set: Vec<Tuple> = Vec::new();
        for t in &win.contents {
            for attrs in f(t) {
                push_unique(&mut set, Tuple::new(ts, attrs));
            }
        }
        (!set.is_empty()).then(|| vec![Value::Tuples(set), Value::Index(EMBED_TAG)])
    })
}

/// The same embed logic hosted on the multi-output Aggregate: payload
/// elements are emitted directly, so no unfold loop is needed.
pub fn embed_flatmap_multi(f: FlatMapFn) -> WindowMultiFn {
    Arc::new(move |win: &WindowInstance| {
        let mut set: Vec<Tuple> = Vec::new();
        for t in &win.contents {
            for attrs in f(t) {
                push_unique(&mut set, Tuple::new(win.left, attrs));
            }
        }
        set.into_iter().map(|t| t.attrs).collect()
    })
}

/// Pre-join wrap stage: deduplicates a tick-sized, full-tuple-keyed
/// window and emits its contents in one slot of a two-slot tuple; the
/// occupied slot identifies the side the tuple came from.
pub fn wrap_side_window(side: usize) -> WindowFn {
    assert!(side == 0 || side == 1);
    Arc::new(move |win: &WindowInstance| {
        let mut set: Vec<Tuple> = Vec::new();
        for t in &win.contents {
            push_unique(&mut set, t.clone());
        }
        let (first, second) = if side == 0 { (set, Vec::new()) } else { (Vec::new(), set) };
        Some(vec![Value::Tuples(first), Value::Tuples(second)])
    })
}

/// Key function over wrapped join tuples: applies the original side key
/// to the first carried tuple of whichever slot is occupied.
pub fn wrapped_join_key(key1: KeyFn, key2: KeyFn) -> KeyFn {
    Arc::new(move |t: &Tuple| {
        let from1 = t.attrs[0].as_tuples().expect("wrapped tuple");
        if let Some(first) = from1.first() {
            key1(first)
        } else {
            let from2 = t.attrs[1].as_tuples().expect("wrapped tuple");
            key2(&from2[0])
        }
    })
}

fn join_matches(win: &WindowInstance, predicate: &JoinPredicate, ts: u64) -> Vec<Tuple> {
    let mut store1: Vec<&Tuple> = Vec::new();
    let mut store2: Vec<&Tuple> = Vec::new();
    let mut set: Vec<Tuple> = Vec::new();
    let emit = |t1: &Tuple, t2: &Tuple, set: &mut Vec<Tuple>| {
        if predicate(t1, t2) {
            let mut attrs = t1.as_attr_list();
            attrs.extend(t2.as_attr_list());
            push_unique(set, Tuple::new(ts, attrs));
        }
    };
    for wrapped in &win.contents {
        let from1 = wrapped.attrs[0].as_tuples().expect("wrapped tuple");
        if !from1.is_empty() {
            for t1 in from1 {
                for t2 in &store2 {
                    emit(t1, t2, &mut set);
                }
                store1.push(t1);
            }
        } else {
            for t2 in wrapped.attrs[1].as_tuples().expect("wrapped tuple") {
                for t1 in &store1 {
                    emit(t1, t2, &mut set);
                }
                store2.push(t2);
            }
        }
    }
    set
}

/// Embed for Join, hosted on the join's own window over the union of the
/// two wrap stages: a streaming nested-loop match over the window
/// contents in arrival order, packed into one payload tagged `-1`.
pub fn embed_join_window(predicate: JoinPredicate, size: u64) -> WindowFn {
    Arc::new(move |win: &WindowInstance| {
        let ts = output_timestamp(win.left, size);
        let set = join_matches(win, &predicate, ts);
        (!set.is_empty()).then(|| vec![Value::Tuples(set), Value::Index(EMBED_TAG)])
    })
}

/// Join embed hosted on the multi-output Aggregate: each matched pair is
/// emitted directly.
pub fn embed_join_multi(predicate: JoinPredicate, size: u64) -> WindowMultiFn {
    Arc::new(move |win: &WindowInstance| {
        let ts = output_timestamp(win.left, size);
        join_matches(win, &predicate, ts).into_iter().map(|t| t.attrs).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::key_by_attrs;

    fn window_with(left: u64, contents: Vec<Tuple>) -> WindowInstance {
        let mut w = WindowInstance::new(left);
        w.contents = contents;
        w
    }

    fn chars_flatmap() -> FlatMapFn {
        Arc::new(|t: &Tuple| {
            let Value::Text(s) = &t.attrs[0] else { return vec![] };
            s.chars().map(|c| vec![Value::Text(c.to_string())]).collect()
        })
    }

    #[test]
    fn flatmap_embed_packs_results_with_terminator() {
        let f = embed_flatmap_window(chars_flatmap(), 1);
        let win = window_with(4, vec![Tuple::new(4, vec![Value::Text("ab".into())])]);
        let attrs = f(&win).unwrap();
        assert_eq!(
            attrs,
            vec![
                Value::Tuples(vec![
                    Tuple::new(4, vec![Value::Text("a".into())]),
                    Tuple::new(4, vec![Value::Text("b".into())]),
                ]),
                Value::Index(EMBED_TAG),
            ]
        );
    }

    #[test]
    fn flatmap_embed_declines_when_function_produces_nothing() {
        let f = embed_flatmap_window(chars_flatmap(), 1);
        let win = window_with(4, vec![Tuple::new(4, vec![Value::Int(1)])]);
        assert!(f(&win).is_none());
    }

    #[test]
    fn flatmap_embed_collapses_duplicate_inputs() {
        let f = embed_flatmap_window(chars_flatmap(), 1);
        let t = Tuple::new(4, vec![Value::Text("xy".into())]);
        let single = f(&window_with(4, vec![t.clone()])).unwrap();
        let doubled = f(&window_with(4, vec![t.clone(), t])).unwrap();
        assert_eq!(single, doubled);
    }

    #[test]
    fn wrap_marks_origin_side_and_dedups() {
        let t = Tuple::new(2, vec![Value::Int(7)]);
        let w1 = wrap_side_window(0);
        let attrs = w1(&window_with(2, vec![t.clone(), t.clone()])).unwrap();
        assert_eq!(attrs, vec![Value::Tuples(vec![t.clone()]), Value::Tuples(vec![])]);

        let w2 = wrap_side_window(1);
        let t2 = Tuple::new(3, vec![Value::Int(8)]);
        let attrs = w2(&window_with(3, vec![t2.clone()])).unwrap();
        assert_eq!(attrs, vec![Value::Tuples(vec![]), Value::Tuples(vec![t2])]);
    }

    #[test]
    fn wrapped_key_dispatches_on_occupied_slot() {
        let key = wrapped_join_key(key_by_attrs(vec![0]), key_by_attrs(vec![1]));
        let raw1 = Tuple::new(2, vec![Value::Int(7), Value::Int(9)]);
        let wrapped1 =
            Tuple::new(2, vec![Value::Tuples(vec![raw1.clone()]), Value::Tuples(vec![])]);
        assert_eq!(key(&wrapped1), key_by_attrs(vec![0])(&raw1));

        let raw2 = Tuple::new(3, vec![Value::Int(7), Value::Int(9)]);
        let wrapped2 =
            Tuple::new(3, vec![Value::Tuples(vec![]), Value::Tuples(vec![raw2.clone()])]);
        assert_eq!(key(&wrapped2), key_by_attrs(vec![1])(&raw2));
    }

    fn wrapped(side: usize, t: Tuple) -> Tuple {
        let (a, b) = if side == 0 { (vec![t.clone()], vec![]) } else { (vec![], vec![t.clone()]) };
        Tuple::new(t.ts, vec![Value::Tuples(a), Value::Tuples(b)])
    }

    #[test]
    fn join_embed_matches_pairs_in_arrival_order() {
        let f = embed_join_window(Arc::new(|_, _| true), 2);
        let t1 = Tuple::new(0, vec![Value::Int(1)]);
        let t2 = Tuple::new(1, vec![Value::Int(1)]);
        let win = window_with(0, vec![wrapped(0, t1.clone()), wrapped(1, t2.clone())]);
        let attrs = f(&win).unwrap();
        let mut expected_attrs = t1.as_attr_list();
        expected_attrs.extend(t2.as_attr_list());
        assert_eq!(
            attrs,
            vec![
                Value::Tuples(vec![Tuple::new(1, expected_attrs)]),
                Value::Index(EMBED_TAG),
            ]
        );
    }

    #[test]
    fn join_embed_silent_without_matches() {
        let f = embed_join_window(Arc::new(|_, _| false), 2);
        let win = window_with(
            0,
            vec![
                wrapped(0, Tuple::new(0, vec![Value::Int(1)])),
                wrapped(1, Tuple::new(1, vec![Value::Int(1)])),
            ],
        );
        assert!(f(&win).is_none());
    }

    #[test]
    fn join_embed_crosses_all_pairs() {
        let f = embed_join_window(Arc::new(|_, _| true), 2);
        let win = window_with(
            0,
            vec![
                wrapped(0, Tuple::new(0, vec![Value::Int(1)])),
                wrapped(0, Tuple::new(0, vec![Value::Int(2)])),
                wrapped(1, Tuple::new(1, vec![Value::Int(3)])),
                wrapped(1, Tuple::new(1, vec![Value::Int(4)])),
            ],
        );
        let attrs = f(&win).unwrap();
        assert_eq!(attrs[0].as_tuples().unwrap().len(), 4);
    }
}
