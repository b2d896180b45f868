//! Stateless operators: Filter, Map, FlatMap.
//!
//! All three process tuples one by one, set output timestamps from the
//! input tuple, and pass watermarks through unchanged.

use crate::error::Result;
use crate::tuple::{StreamElement, Timestamp, Tuple};

use super::{FilterFn, FlatMapFn, MapFn, Operator};

/// Forwards a tuple unchanged iff the predicate holds.
pub struct Filter {
    predicate: FilterFn,
}

impl Filter {
    pub fn new(predicate: FilterFn) -> Self {
        Self { predicate }
    }
}

impl Operator for Filter {
    fn on_tuple(&mut self, _port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        if (self.predicate)(&t) {
            out.push(StreamElement::Tuple(t));
        }
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        out.push(StreamElement::Watermark(w));
        Ok(())
    }
}

/// Emits exactly one tuple per input, with the input's timestamp and the
/// function's attribute list.
pub struct Map {
    func: MapFn,
}

impl Map {
    pub fn new(func: MapFn) -> Self {
        Self { func }
    }
}

impl Operator for Map {
    fn on_tuple(&mut self, _port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        let attrs = (self.func)(&t);
        out.push(StreamElement::Tuple(Tuple::new(t.ts, attrs)));
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        out.push(StreamElement::Watermark(w));
        Ok(())
    }
}

/// Emits zero or more tuples per input, in the function's order, all
/// with the input's timestamp.
pub struct FlatMap {
    func: FlatMapFn,
}

impl FlatMap {
    pub fn new(func: FlatMapFn) -> Self {
        Self { func }
    }
}

impl Operator for FlatMap {
    fn on_tuple(&mut self, _port: usize, t: Tuple, out: &mut Vec<StreamElement>) -> Result<()> {
        for attrs in (self.func)(&t) {
            out.push(StreamElement::Tuple(Tuple::new(t.ts, attrs)));
        }
        Ok(())
    }

    fn on_watermark(&mut self, w: Timestamp, out: &mut Vec<StreamElement>) -> Result<()> {
        out.push(StreamElement::Watermark(w));
        Ok(())
    }
}
