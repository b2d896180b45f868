//! Keyed periodic state as an Aggregate composition: a wrap stage, a
//! sliding-window fold whose carried state loops back one period ahead,
//! and an output stage applying the user's output function.
//!
//! The fold window advances by the period and spans one tick more, so
//! consecutive instances overlap on exactly one tick. A state tuple
//! emitted at the end of period `l` carries timestamp `(l+1)*period`,
//! lands on that overlap tick, and is folded only in the next instance;
//! fresh inputs sitting on the overlap tick are likewise deferred to the
//! instance that starts there. Each element therefore contributes exactly
//! once.

use std::sync::Arc;

use crate::ops::{FlatMapFn, StatefulConfig, WindowFn};
use crate::tuple::{KeyFn, Tuple, Value};
use crate::window::WindowInstance;

use super::LoopVariant;

/// Wrap stage ahead of the fold: lifts a raw input into the two-slot
/// shape `[inputs, states]` shared with looped state tuples.
pub fn state_wrap_flatmap() -> FlatMapFn {
    Arc::new(|t: &Tuple| vec![vec![Value::Tuples(vec![t.clone()]), Value::Tuples(vec![])]])
}

/// Key function over wrapped fold tuples, dispatching to the input or
/// state key of the occupied slot.
pub fn wrapped_state_key(key_input: KeyFn, key_state: KeyFn) -> KeyFn {
    Arc::new(move |t: &Tuple| {
        let inputs = t.attrs[0].as_tuples().expect("wrapped tuple");
        if let Some(first) = inputs.first() {
            key_input(first)
        } else {
            let states = t.attrs[1].as_tuples().expect("wrapped tuple");
            key_state(&states[0])
        }
    })
}

/// The fold itself. Skips tuples sitting on the instance's overlap tick,
/// folds carried states first and fresh inputs second (each group in
/// arrival order), and emits the resulting state tuple in the state slot.
///
/// [`LoopVariant::Literal`] reproduces the off-by-one skip tick (one tick
/// before the overlap), under which a carried state re-enters the window
/// that produced it and the loop never quiesces.
pub fn state_fold_window(cfg: &StatefulConfig, variant: LoopVariant) -> WindowFn {
    let cfg = cfg.clone();
    Arc::new(move |win: &WindowInstance| {
        let skip_tick = match variant {
            LoopVariant::Repaired => win.left + cfg.period,
            LoopVariant::Literal => win.left + cfg.period - 1,
        };
        let mut state: Option<Tuple> = None;
        let fold_state = |carried: &Tuple, state: &mut Option<Tuple>| {
            *state = Some(match state.take() {
                None => carried.clone(),
                Some(s) => (cfg.merge)(&s, carried),
            });
        };
        let fold_input = |input: &Tuple, state: &mut Option<Tuple>| {
            *state = Some(match state.take() {
                None => (cfg.create)(input),
                Some(s) => (cfg.add)(&s, input),
            });
        };
        for t in win.contents.iter().filter(|t| t.ts != skip_tick) {
            let inputs = t.attrs[0].as_tuples().expect("wrapped tuple");
            if inputs.is_empty() {
                for carried in t.attrs[1].as_tuples().expect("wrapped tuple") {
                    fold_state(carried, &mut state);
                }
            }
        }
        for t in win.contents.iter().filter(|t| t.ts != skip_tick) {
            let inputs = t.attrs[0].as_tuples().expect("wrapped tuple");
            for input in inputs {
                fold_input(input, &mut state);
            }
        }
        let state = state?;
        let emitted = Tuple::new(win.left + cfg.period, state.attrs);
        Some(vec![Value::Tuples(vec![]), Value::Tuples(vec![emitted])])
    })
}

/// Output stage after the fold: applies the user's output function to
/// the carried state.
pub fn state_output_flatmap(cfg: &StatefulConfig) -> FlatMapFn {
    let output = cfg.output.clone();
    Arc::new(move |t: &Tuple| {
        let states = t.attrs[1].as_tuples().expect("wrapped tuple");
        output(&states[0]).into_iter().collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::key_by_attrs;
    use crate::window::output_timestamp;

    fn sum_cfg(period: u64) -> StatefulConfig {
        StatefulConfig {
            create: Arc::new(|t| Tuple::new(t.ts, vec![t.attrs[0].clone()])),
            add: Arc::new(|s, t| {
                Tuple::new(
                    s.ts,
                    vec![Value::Int(s.attrs[0].as_int().unwrap() + t.attrs[0].as_int().unwrap())],
                )
            }),
            merge: Arc::new(|a, b| {
                Tuple::new(
                    a.ts,
                    vec![Value::Int(a.attrs[0].as_int().unwrap() + b.attrs[0].as_int().unwrap())],
                )
            }),
            output: Arc::new(|s| Some(s.attrs.clone())),
            period,
            key_input: key_by_attrs(vec![]),
            key_state: key_by_attrs(vec![]),
        }
    }

    fn wrapped_input(ts: u64, v: i64) -> Tuple {
        Tuple::new(
            ts,
            vec![Value::Tuples(vec![Tuple::new(ts, vec![Value::Int(v)])]), Value::Tuples(vec![])],
        )
    }

    fn wrapped_state(ts: u64, v: i64) -> Tuple {
        Tuple::new(
            ts,
            vec![Value::Tuples(vec![]), Value::Tuples(vec![Tuple::new(ts, vec![Value::Int(v)])])],
        )
    }

    #[test]
    fn folds_inputs_and_stamps_state_one_period_ahead() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Repaired);
        let mut win = WindowInstance::new(0);
        win.contents = vec![wrapped_input(1, 2), wrapped_input(3, 5)];
        let attrs = f(&win).unwrap();
        assert_eq!(
            attrs,
            vec![
                Value::Tuples(vec![]),
                Value::Tuples(vec![Tuple::new(4, vec![Value::Int(7)])]),
            ]
        );
        assert_eq!(output_timestamp(0, cfg.period + 1), 4);
    }

    #[test]
    fn carried_state_merges_with_next_period_inputs() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Repaired);
        let mut win = WindowInstance::new(4);
        // Arrival order has the input first; the fold still applies the
        // carried state first.
        win.contents = vec![wrapped_input(6, 1), wrapped_state(4, 7)];
        let attrs = f(&win).unwrap();
        assert_eq!(attrs[1], Value::Tuples(vec![Tuple::new(8, vec![Value::Int(8)])]));
    }

    #[test]
    fn overlap_tick_is_deferred_to_the_next_instance() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Repaired);
        let mut win = WindowInstance::new(4);
        win.contents = vec![wrapped_state(4, 7), wrapped_input(8, 100)];
        let attrs = f(&win).unwrap();
        // ts 8 sits on the overlap tick of [4, 9): folded only in [8, 13).
        assert_eq!(attrs[1], Value::Tuples(vec![Tuple::new(8, vec![Value::Int(7)])]));

        let mut next = WindowInstance::new(8);
        next.contents = vec![wrapped_input(8, 100), wrapped_state(8, 7)];
        let attrs = f(&next).unwrap();
        assert_eq!(attrs[1], Value::Tuples(vec![Tuple::new(12, vec![Value::Int(107)])]));
    }

    #[test]
    fn lone_state_passes_through_unchanged() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Repaired);
        let mut win = WindowInstance::new(8);
        win.contents = vec![wrapped_state(8, 7)];
        let attrs = f(&win).unwrap();
        assert_eq!(attrs[1], Value::Tuples(vec![Tuple::new(12, vec![Value::Int(7)])]));
    }

    #[test]
    fn window_of_only_overlap_ticks_declines() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Repaired);
        let mut win = WindowInstance::new(0);
        win.contents = vec![wrapped_input(4, 9)];
        assert!(f(&win).is_none());
    }

    #[test]
    fn literal_variant_refolds_the_carried_state() {
        let cfg = sum_cfg(4);
        let f = state_fold_window(&cfg, LoopVariant::Literal);
        let mut win = WindowInstance::new(0);
        // Under the literal skip tick (3), the state stamped 4 is folded
        // in [0, 5) again even though [0, 5) produced it.
        win.contents = vec![wrapped_state(4, 7)];
        let attrs = f(&win).unwrap();
        assert_eq!(attrs[1], Value::Tuples(vec![Tuple::new(4, vec![Value::Int(7)])]));
    }
}
