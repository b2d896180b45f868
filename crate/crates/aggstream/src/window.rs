//! Time-based window calculus: window specification, instance assignment,
//! output timestamps, watermark merging, and the allowed-lateness rule.
//!
//! A window specification with advance `wa` and size `ws` covers the
//! epochs `[l*wa, l*wa + ws)` for every natural `l`. When `wa = ws` the
//! window is tumbling and every tuple falls in exactly one instance; when
//! `wa < ws` the window slides and instances overlap.

use crate::error::{Error, Result};
use crate::tuple::{Ticks, Timestamp, Tuple};

/// Window parameters: advance, size, and allowed lateness, all in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub advance: Ticks,
    pub size: Ticks,
    pub lateness: Ticks,
}

impl WindowSpec {
    /// Builds a spec, rejecting zero spans and jumping windows
    /// (`advance > size`).
    pub fn new(advance: Ticks, size: Ticks, lateness: Ticks) -> Result<Self> {
        if advance == 0 || size == 0 {
            return Err(Error::config("window advance and size must be positive"));
        }
        if advance > size {
            return Err(Error::config(format!(
                "jumping windows are not supported (advance {advance} > size {size})"
            )));
        }
        Ok(Self { advance, size, lateness })
    }

    pub fn tumbling(size: Ticks) -> Self {
        Self::new(size, size, 0).expect("positive size")
    }

    pub fn sliding(advance: Ticks, size: Ticks) -> Result<Self> {
        Self::new(advance, size, 0)
    }

    pub fn with_lateness(mut self, lateness: Ticks) -> Self {
        self.lateness = lateness;
        self
    }

    pub fn is_tumbling(&self) -> bool {
        self.advance == self.size
    }
}

/// One live window epoch: left boundary (inclusive) plus the tuples that
/// fell into it, in arrival order.
#[derive(Debug, Clone)]
pub struct WindowInstance {
    /// Left boundary, always a multiple of the spec's advance.
    pub left: Timestamp,
    /// Contents in arrival order.
    pub contents: Vec<Tuple>,
    /// Whether the window function has run at least once for this epoch.
    pub fired: bool,
}

impl WindowInstance {
    pub fn new(left: Timestamp) -> Self {
        Self { left, contents: Vec::new(), fired: false }
    }
}

/// Left boundaries of every window instance containing event time `ts`:
/// exactly the `l = k*advance` with `k >= 0` and `l <= ts < l + size`,
/// ascending.
pub fn assign_windows(ts: Timestamp, spec: &WindowSpec) -> Vec<Timestamp> {
    let wa = spec.advance;
    let ws = spec.size;
    let k_max = ts / wa;
    // Smallest k with k*wa + ws > ts, clamped at zero.
    let k_min = if ts + 1 > ws { (ts + 1 - ws).div_ceil(wa) } else { 0 };
    (k_min..=k_max).map(|k| k * wa).collect()
}

/// Event time assigned to outputs of the window with left boundary `l`:
/// one tick before the exclusive right boundary.
pub fn output_timestamp(l: Timestamp, size: Ticks) -> Timestamp {
    l + size - 1
}

/// Merged watermark over a set of input edges: the minimum of the latest
/// watermark seen per edge, where an edge that has not reported yet
/// contributes zero.
pub fn merge_watermark<'a, I>(latest_per_input: I) -> Timestamp
where
    I: IntoIterator<Item = &'a Option<Timestamp>>,
{
    latest_per_input
        .into_iter()
        .map(|w| w.unwrap_or(0))
        .min()
        .expect("at least one input edge")
}

/// Whether a tuple with event time `ts` is a late arrival under
/// watermark `w`.
pub fn is_late(ts: Timestamp, w: Timestamp) -> bool {
    ts < w
}

/// Whether the window with left boundary `l` still accepts tuples under
/// watermark `w`: the window is purged once `w >= l + size + lateness`,
/// and a late tuple is processed only while the window is unpurged.
pub fn lateness_admissible(l: Timestamp, size: Ticks, lateness: Ticks, w: Timestamp) -> bool {
    w < l + size + lateness
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force assignment: enumerate every candidate boundary index
    /// and test containment directly.
    fn assign_windows_oracle(ts: Timestamp, spec: &WindowSpec) -> Vec<Timestamp> {
        (0..=ts)
            .filter_map(|k| {
                let l = k * spec.advance;
                (l <= ts && ts < l + spec.size).then_some(l)
            })
            .collect()
    }

    #[test]
    fn assignment_matches_frozen_examples() {
        let tumbling_tick = WindowSpec::new(1, 1, 0).unwrap();
        assert_eq!(assign_windows(5, &tumbling_tick), vec![5]);

        let sliding = WindowSpec::new(2, 6, 0).unwrap();
        assert_eq!(assign_windows(7, &sliding), vec![2, 4, 6]);

        let tumbling4 = WindowSpec::new(4, 4, 0).unwrap();
        assert_eq!(assign_windows(0, &tumbling4), vec![0]);
    }

    #[test]
    fn output_timestamp_examples() {
        assert_eq!(output_timestamp(10, 5), 14);
        assert_eq!(output_timestamp(0, 1), 0);
        // An hour-long window over minute ticks covering [600, 660).
        assert_eq!(output_timestamp(600, 60), 659);
    }

    #[test]
    fn merge_watermark_examples() {
        assert_eq!(merge_watermark([&Some(3), &Some(7)]), 3);
        assert_eq!(merge_watermark([&Some(5)]), 5);
        // An edge that has not reported yet pins the merge at zero.
        assert_eq!(merge_watermark([&Some(4), &None]), 0);
    }

    #[test]
    fn is_late_is_strict() {
        assert!(!is_late(5, 5));
        assert!(is_late(4, 5));
        assert!(is_late(659, 720));
    }

    #[test]
    fn lateness_admissible_examples() {
        // Hour-window output at tick 659 with one hour of lateness: a
        // watermark at 725 has already purged it, 700 has not.
        assert!(!lateness_admissible(659, 1, 60, 725));
        assert!(lateness_admissible(659, 1, 60, 700));
        // Zero lateness admits nothing once the boundary is reached.
        assert!(!lateness_admissible(10, 4, 0, 14));
    }

    #[test]
    fn jumping_windows_rejected() {
        assert!(WindowSpec::new(5, 3, 0).is_err());
        assert!(WindowSpec::new(0, 3, 0).is_err());
        assert!(WindowSpec::new(3, 0, 0).is_err());
    }

    #[test]
    fn assignment_agrees_with_oracle_over_grid() {
        for wa in 1..=10u64 {
            for ws in wa..=20u64 {
                let spec = WindowSpec::new(wa, ws, 0).unwrap();
                for ts in 0..=(10 * ws) {
                    assert_eq!(
                        assign_windows(ts, &spec),
                        assign_windows_oracle(ts, &spec),
                        "ts={ts} wa={wa} ws={ws}"
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn tumbling_assigns_exactly_one(ts in 0u64..10_000, ws in 1u64..64) {
            let spec = WindowSpec::new(ws, ws, 0).unwrap();
            let ls = assign_windows(ts, &spec);
            prop_assert_eq!(ls.len(), 1);
            prop_assert_eq!(ls[0], (ts / ws) * ws);
        }

        #[test]
        fn tick_window_is_identity(ts in 0u64..10_000) {
            let spec = WindowSpec::new(1, 1, 0).unwrap();
            prop_assert_eq!(assign_windows(ts, &spec), vec![ts]);
            prop_assert_eq!(output_timestamp(ts, 1), ts);
        }

        #[test]
        fn sliding_count_away_from_origin(ts in 0u64..10_000, wa in 1u64..10, extra in 0u64..20) {
            let ws = wa + extra;
            let spec = WindowSpec::new(wa, ws, 0).unwrap();
            let n = assign_windows(ts, &spec).len() as u64;
            if ts + 1 >= ws {
                // Count of advance-multiples inside a half-open span of
                // length ws; exactly ws/wa when wa divides ws.
                prop_assert!(n >= ws / wa && n <= ws.div_ceil(wa));
            } else {
                prop_assert!(n <= ws.div_ceil(wa));
            }
        }

        #[test]
        fn outputs_never_precede_contents(ts in 0u64..5_000, wa in 1u64..10, extra in 0u64..20) {
            let spec = WindowSpec::new(wa, wa + extra, 0).unwrap();
            for l in assign_windows(ts, &spec) {
                prop_assert!(output_timestamp(l, spec.size) >= ts);
            }
        }

        #[test]
        fn admissibility_is_monotone_in_watermark(
            l in 0u64..1_000, ws in 1u64..32, lat in 0u64..32, w in 0u64..2_000,
        ) {
            if !lateness_admissible(l, ws, lat, w) {
                prop_assert!(!lateness_admissible(l, ws, lat, w + 1));
            }
        }
    }
}
