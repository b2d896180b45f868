//! Loop guards: instrumented-stream algorithms installed on the two
//! streams adjacent to a feedback loop.
//!
//! A looped-back tuple is always a late arrival for the aggregate that
//! produced it, so a runtime that handles watermarks naively can advance
//! the aggregate's watermark past the loop tuple's lateness budget and
//! silently drop it. The input guard prevents that by holding watermarks
//! back until every pending loop tuple has returned. The output guard
//! solves the mirror problem: it delays watermarks to downstream
//! consumers until all loop-produced outputs that precede them have been
//! emitted, so no consumer ever observes a late arrival.
//!
//! Two loop shapes exist. In the unfold shape the loop re-delivers a
//! packed payload to the same window instance it came from, and each
//! embed tuple announces up front how many loop passes it needs. In the
//! periodic shape a state tuple hops from each window instance to the
//! next one, indefinitely, so pending work is tracked per landing
//! boundary and the guard may have to synthesize intermediate watermarks
//! to step the chain forward.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::tuple::{KeyFn, StreamElement, Ticks, Timestamp, Tuple, EMBED_TAG};

/// Which loop composition the guard instruments.
#[derive(Clone)]
pub enum LoopShape {
    /// Embed/unfold loop: tuples are `[payload, tag]`, loop tuples land
    /// in the window instance at their own timestamp.
    Unfold { lateness: Ticks },
    /// Periodic state loop: tuples are `[inputs, states]`, each fired
    /// window sends one carried state to the window one period later.
    Periodic { period: Ticks, key: KeyFn },
}

fn payload_len(t: &Tuple) -> usize {
    t.attrs[0].as_tuples().map_or(0, <[Tuple]>::len)
}

fn tag(t: &Tuple) -> i64 {
    t.attrs[1].as_index().unwrap_or(i64::MIN)
}

fn within(w: Timestamp, bound: Option<Timestamp>) -> bool {
    bound.map_or(true, |b| w <= b)
}

/// Guard on the merged input stream of a looped aggregate: forwards
/// tuples untouched and forwards a watermark only while no pending loop
/// tuple could be refused as late under it.
pub struct LoopInputGuard {
    shape: LoopShape,
    /// Landing boundary of pending loop tuples -> how many are pending.
    succ: BTreeMap<Timestamp, u64>,
    /// Window instances already counted, periodic shape only.
    seen: BTreeSet<(Timestamp, Vec<u8>)>,
    pending_w: VecDeque<Timestamp>,
    last_forwarded: Option<Timestamp>,
    trace: Option<String>,
}

impl LoopInputGuard {
    pub fn new(shape: LoopShape) -> Self {
        Self {
            shape,
            succ: BTreeMap::new(),
            seen: BTreeSet::new(),
            pending_w: VecDeque::new(),
            last_forwarded: None,
            trace: None,
        }
    }

    pub fn with_trace(mut self, label: impl Into<String>) -> Self {
        self.trace = Some(label.into());
        self
    }

    /// Highest watermark currently safe to forward; `None` is unbounded.
    pub fn bound(&self) -> Option<Timestamp> {
        let first = self.succ.keys().next()?;
        Some(match &self.shape {
            LoopShape::Unfold { lateness } => first + lateness,
            LoopShape::Periodic { period, .. } => first + period,
        })
    }

    pub fn is_quiescent(&self) -> bool {
        self.succ.is_empty() && self.pending_w.is_empty()
    }

    pub fn pending_counts(&self) -> &BTreeMap<Timestamp, u64> {
        &self.succ
    }

    pub fn queued_watermarks(&self) -> usize {
        self.pending_w.len()
    }

    pub fn process(&mut self, el: StreamElement, out: &mut Vec<StreamElement>) -> Result<()> {
        match el {
            StreamElement::Tuple(t) => self.process_tuple(t, out),
            StreamElement::Watermark(w) => self.process_watermark(w, out),
        }
    }

    fn process_tuple(&mut self, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        match self.shape.clone() {
            LoopShape::Unfold { .. } => {
                if tag(&t) == EMBED_TAG {
                    *self.succ.entry(t.ts).or_insert(0) += payload_len(&t) as u64;
                } else {
                    self.take_pending(t.ts)?;
                }
            }
            LoopShape::Periodic { period, key } => {
                let from_loop = payload_len(&t) == 0;
                if from_loop {
                    self.take_pending(t.ts)?;
                    self.seen.remove(&(t.ts - period, key(&t)));
                }
                let primary = (t.ts / period) * period;
                if self.seen.insert((primary, key(&t))) {
                    *self.succ.entry(primary + period).or_insert(0) += 1;
                }
            }
        }
        self.log(format_args!("tuple ts={} counts={:?} bound={:?}", t.ts, self.succ, self.bound()));
        out.push(StreamElement::Tuple(t));
        self.drain(out);
        Ok(())
    }

    fn process_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        if within(w, self.bound()) {
            self.forward_watermark(w, out);
        } else {
            if self.pending_w.back().is_none_or(|&b| w > b) {
                self.log(format_args!("queue W({w}) bound={:?}", self.bound()));
                self.pending_w.push_back(w);
            }
            // A periodic chain blocked behind the bound still needs the
            // bound itself to step forward.
            self.drain(out);
        }
        Ok(())
    }

    fn take_pending(&mut self, ts: Timestamp) -> Result<()> {
        let Some(count) = self.succ.get_mut(&ts) else {
            return Err(Error::GuardInvariant(format!(
                "loop tuple at ts {ts} has no pending successor entry"
            )));
        };
        *count -= 1;
        if *count == 0 {
            self.succ.remove(&ts);
        }
        Ok(())
    }

    /// Forwards the latest queued watermark within the bound, discarding
    /// earlier ones. The periodic shape additionally synthesizes the
    /// bound itself as a watermark when the queue is blocked, which is
    /// what steps a state chain forward through a large watermark jump.
    fn drain(&mut self, out: &mut Vec<StreamElement>) {
        let bound = self.bound();
        let mut next = None;
        while let Some(&front) = self.pending_w.front() {
            if within(front, bound) {
                next = self.pending_w.pop_front();
            } else {
                break;
            }
        }
        if let Some(w) = next {
            self.forward_watermark(w, out);
        } else if matches!(self.shape, LoopShape::Periodic { .. }) && !self.pending_w.is_empty() {
            if let Some(b) = bound {
                self.forward_watermark(b, out);
            }
        }
    }

    fn forward_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) {
        if self.last_forwarded.is_none_or(|last| w > last) {
            self.log(format_args!("forward W({w})"));
            self.last_forwarded = Some(w);
            out.push(StreamElement::Watermark(w));
        }
    }

    fn log(&self, args: std::fmt::Arguments<'_>) {
        if let Some(label) = &self.trace {
            eprintln!("guard[{label}] {args}");
        }
    }
}

/// Guard on the output stream of a looped aggregate: forwards tuples
/// untouched and forwards watermarks only once every output that will
/// still be produced for earlier boundaries is out.
///
/// A watermark that arrives while loop passes are pending cannot be
/// forwarded in full yet; on an unbounded stream the next periodic
/// watermark would simply take its place, but a finite stream ends with
/// one final flush, so the guard defers the highest held-back watermark
/// and releases it the moment its books empty.
pub struct LoopOutputGuard {
    shape: LoopShape,
    succ: BTreeMap<Timestamp, u64>,
    last_w: Option<Timestamp>,
    deferred: Option<Timestamp>,
    trace: Option<String>,
}

impl LoopOutputGuard {
    pub fn new(shape: LoopShape) -> Self {
        Self { shape, succ: BTreeMap::new(), last_w: None, deferred: None, trace: None }
    }

    pub fn with_trace(mut self, label: impl Into<String>) -> Self {
        self.trace = Some(label.into());
        self
    }

    pub fn is_quiescent(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn pending_counts(&self) -> &BTreeMap<Timestamp, u64> {
        &self.succ
    }

    pub fn last_watermark(&self) -> Option<Timestamp> {
        self.last_w
    }

    pub fn process(&mut self, el: StreamElement, out: &mut Vec<StreamElement>) -> Result<()> {
        match el {
            StreamElement::Tuple(t) => self.process_tuple(t, out),
            StreamElement::Watermark(w) => {
                self.process_watermark(w, out);
                Ok(())
            }
        }
    }

    fn process_tuple(&mut self, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        match self.shape.clone() {
            LoopShape::Unfold { .. } => {
                if tag(&t) == 0 {
                    // The first loop pass announces the remaining ones;
                    // the tuple itself is one of them, so a singleton
                    // payload leaves nothing pending.
                    let inc = payload_len(&t) as u64 - 1;
                    if inc > 0 {
                        *self.succ.entry(t.ts).or_insert(0) += inc;
                    }
                } else {
                    let Some(count) = self.succ.get_mut(&t.ts) else {
                        return Err(Error::GuardInvariant(format!(
                            "output at ts {} has no pending successor entry",
                            t.ts
                        )));
                    };
                    *count -= 1;
                    if *count == 0 {
                        self.succ.remove(&t.ts);
                    }
                }
            }
            LoopShape::Periodic { period, .. } => {
                if let Some(count) = self.succ.get_mut(&t.ts) {
                    *count -= 1;
                    if *count == 0 {
                        self.succ.remove(&t.ts);
                    }
                }
                // Every state output seeds the next boundary of its chain.
                *self.succ.entry(t.ts + period).or_insert(0) += 1;
            }
        }
        let ts = t.ts;
        out.push(StreamElement::Tuple(t));
        match self.succ.keys().next().copied() {
            None => {
                let release = self.deferred.take().map_or(ts, |d| d.max(ts));
                self.forward_watermark(release, out);
            }
            Some(first) => {
                if let Some(cap) = first.checked_sub(1) {
                    self.forward_watermark(cap, out);
                }
            }
        }
        self.log(format_args!("tuple ts={ts} counts={:?} lastW={:?}", self.succ, self.last_w));
        Ok(())
    }

    fn process_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) {
        match self.succ.keys().next().copied() {
            None => {
                self.deferred = None;
                self.forward_watermark(w, out);
            }
            Some(first) => {
                self.deferred = Some(self.deferred.map_or(w, |d| d.max(w)));
                if let Some(cap) = first.checked_sub(1) {
                    self.forward_watermark(cap.min(w), out);
                }
            }
        }
    }

    fn forward_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) {
        if self.last_w.is_none_or(|last| w > last) {
            self.log(format_args!("forward W({w})"));
            self.last_w = Some(w);
            out.push(StreamElement::Watermark(w));
        }
    }

    fn log(&self, args: std::fmt::Arguments<'_>) {
        if let Some(label) = &self.trace {
            eprintln!("guard[{label}] {args}");
        }
    }
}
