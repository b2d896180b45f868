//! Ingress: turns a record sequence into a stream with periodic
//! watermarks and a final flush.
//!
//! Watermarks are emitted at every multiple of the period the observed
//! event time has crossed, so consecutive watermark values differ by
//! exactly one period and the first watermark trails the first record by
//! at most one period. Records that arrive behind the already-emitted
//! watermark are counted and dropped: bounded disorder is a property the
//! source has to provide, not something the ingress repairs.

use crate::tuple::{StreamElement, Ticks, Timestamp, Tuple};

/// Watermark cadence of an ingress.
#[derive(Debug, Clone, Copy)]
pub struct IngressConfig {
    /// Maximum event-time distance between consecutive watermarks.
    pub watermark_period: Ticks,
}

pub struct IngressOutput {
    pub elements: Vec<StreamElement>,
    /// Records dropped for arriving behind the emitted watermark.
    pub late_dropped: u64,
    pub max_ts: Timestamp,
}

/// Interleaves periodic watermarks into `records` and closes the stream
/// with a staircase of watermarks climbing to `flush` (clamped above
/// everything emitted) so every window downstream fires. The staircase
/// keeps the gap bound: a single jump to the flush would let a loop
/// guard's bound fall permanently behind the last watermark and strand
/// the tail windows.
pub fn ingress_stream(
    records: impl IntoIterator<Item = Tuple>,
    cfg: IngressConfig,
    flush: Timestamp,
) -> IngressOutput {
    let d = cfg.watermark_period.max(1);
    let mut elements = Vec::new();
    let mut next_mark: Timestamp = d;
    let mut current_w: Timestamp = 0;
    let mut late_dropped = 0;
    let mut max_ts = 0;
    let mut saw_records = false;
    for rec in records {
        if rec.ts < current_w {
            late_dropped += 1;
            continue;
        }
        saw_records = true;
        max_ts = max_ts.max(rec.ts);
        elements.push(StreamElement::Tuple(rec));
        while next_mark <= max_ts {
            elements.push(StreamElement::Watermark(next_mark));
            current_w = next_mark;
            next_mark += d;
        }
    }
    let flush = flush.max(current_w + 1).max(max_ts + 1);
    if saw_records {
        while next_mark < flush {
            elements.push(StreamElement::Watermark(next_mark));
            next_mark += d;
        }
    }
    elements.push(StreamElement::Watermark(flush));
    IngressOutput { elements, late_dropped, max_ts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tuple::Value;

    fn recs(ts: impl IntoIterator<Item = Timestamp>) -> Vec<Tuple> {
        ts.into_iter().map(|t| Tuple::new(t, vec![Value::Int(t as i64)])).collect()
    }

    fn marks(elements: &[StreamElement]) -> Vec<Timestamp> {
        elements
            .iter()
            .filter_map(|el| match el {
                StreamElement::Watermark(w) => Some(*w),
                StreamElement::Tuple(_) => None,
            })
            .collect()
    }

    #[test]
    fn periodic_schedule() {
        let out = ingress_stream(recs(0..10), IngressConfig { watermark_period: 3 }, 11);
        assert_eq!(marks(&out.elements), vec![3, 6, 9, 11]);
        assert_eq!(out.late_dropped, 0);
    }

    #[test]
    fn empty_source_yields_only_the_flush() {
        let out = ingress_stream(recs([]), IngressConfig { watermark_period: 2 }, 5);
        assert_eq!(out.elements, vec![StreamElement::Watermark(5)]);
    }

    #[test]
    fn first_watermark_trails_first_record_by_at_most_one_period() {
        let out = ingress_stream(recs([5]), IngressConfig { watermark_period: 2 }, 8);
        let first_mark = marks(&out.elements)[0];
        assert!(first_mark <= 5 + 2);
        assert_eq!(first_mark, 2);
    }

    #[test]
    fn event_time_jump_fills_in_every_period() {
        let out = ingress_stream(recs([0, 9]), IngressConfig { watermark_period: 3 }, 12);
        assert_eq!(marks(&out.elements), vec![3, 6, 9, 12]);
    }

    #[test]
    fn records_behind_the_watermark_are_dropped_and_counted() {
        let out = ingress_stream(recs([0, 6, 2, 7]), IngressConfig { watermark_period: 3 }, 9);
        assert_eq!(out.late_dropped, 1); // ts 2 arrives behind watermark 6
        let ts: Vec<Timestamp> = out
            .elements
            .iter()
            .filter_map(StreamElement::as_tuple)
            .map(|t| t.ts)
            .collect();
        assert_eq!(ts, vec![0, 6, 7]);
    }

    #[test]
    fn flush_always_exceeds_everything() {
        let out = ingress_stream(recs([0, 9]), IngressConfig { watermark_period: 3 }, 4);
        assert_eq!(marks(&out.elements).last(), Some(&10));
    }
}
