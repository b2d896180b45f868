//! Event-time tuples, watermarks, and the stream elements that edges carry.
//!
//! Event time progresses in discrete ticks; one tick is the smallest
//! timestamp increment the engine knows about. Every tuple carries its
//! event time plus an ordered attribute list, and attribute values may
//! themselves hold lists of tuples (used by the embedding stages to pack
//! many logical outputs into one physical tuple).

use std::fmt;
use std::sync::Arc;

/// Event time in ticks since the stream epoch.
pub type Timestamp = u64;

/// A span or period measured in ticks.
pub type Ticks = u64;

/// Tag value marking a tuple as the output of an embedding stage.
pub const EMBED_TAG: i64 = -1;

/// An attribute value. Streams are homogeneous: every tuple of a stream
/// carries the same value kind at each position.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    /// An ordered list of embedded tuple payloads.
    Tuples(Vec<Tuple>),
    /// A loop index; `EMBED_TAG` (-1) only on embed outputs, >= 0 on
    /// unfold loop tuples.
    Index(i64),
}

impl Value {
    /// Discriminant used by the canonical encoding and by type checks.
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Int(_) => ValueKind::Int,
            Value::Float(_) => ValueKind::Float,
            Value::Text(_) => ValueKind::Text,
            Value::Bool(_) => ValueKind::Bool,
            Value::Tuples(_) => ValueKind::Tuples,
            Value::Index(_) => ValueKind::Index,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_index(&self) -> Option<i64> {
        match self {
            Value::Index(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_tuples(&self) -> Option<&[Tuple]> {
        match self {
            Value::Tuples(v) => Some(v),
            _ => None,
        }
    }

    /// Appends an order-preserving canonical byte encoding of this value.
    ///
    /// Integers are written sign-flipped big-endian so byte order equals
    /// numeric order; floats are written by bit pattern. Two values are
    /// equal iff their encodings are equal.
    pub fn encode(&self, buf: &mut Vec<u8>) {
        match self {
            Value::Int(v) => {
                buf.push(0x01);
                buf.extend_from_slice(&(*v as u64 ^ 0x8000_0000_0000_0000).to_be_bytes());
            }
            Value::Float(v) => {
                buf.push(0x02);
                buf.extend_from_slice(&v.to_bits().to_be_bytes());
            }
            Value::Text(s) => {
                buf.push(0x03);
                buf.extend_from_slice(&(s.len() as u64).to_be_bytes());
                buf.extend_from_slice(s.as_bytes());
            }
            Value::Bool(b) => {
                buf.push(0x04);
                buf.push(u8::from(*b));
            }
            Value::Tuples(ts) => {
                buf.push(0x05);
                buf.extend_from_slice(&(ts.len() as u64).to_be_bytes());
                for t in ts {
                    t.encode(buf);
                }
            }
            Value::Index(v) => {
                buf.push(0x06);
                buf.extend_from_slice(&(*v as u64 ^ 0x8000_0000_0000_0000).to_be_bytes());
            }
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a.to_bits() == b.to_bits(),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Tuples(a), Value::Tuples(b)) => a == b,
            (Value::Index(a), Value::Index(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Int(v) | Value::Index(v) => v.hash(state),
            Value::Float(v) => v.to_bits().hash(state),
            Value::Text(s) => s.hash(state),
            Value::Bool(b) => b.hash(state),
            Value::Tuples(ts) => ts.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Tuples(ts) => {
                write!(f, "[")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, "]")
            }
            Value::Index(v) => write!(f, "#{v}"),
        }
    }
}

/// Value kind for stream type signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Int,
    Float,
    Text,
    Bool,
    Tuples,
    Index,
}

/// A timestamped record. Logically the timestamp is attribute 0 of the
/// tuple; `attrs` holds the remaining attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Tuple {
    pub ts: Timestamp,
    pub attrs: Vec<Value>,
}

impl Tuple {
    pub fn new(ts: Timestamp, attrs: Vec<Value>) -> Self {
        Self { ts, attrs }
    }

    /// The logical attribute list with the timestamp at position 0, as
    /// used when tuples are concatenated into join outputs.
    pub fn as_attr_list(&self) -> Vec<Value> {
        let mut out = Vec::with_capacity(self.attrs.len() + 1);
        out.push(Value::Int(self.ts as i64));
        out.extend(self.attrs.iter().cloned());
        out
    }

    /// Canonical byte encoding of the full tuple (timestamp + attributes).
    pub fn encode(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.ts.to_be_bytes());
        buf.extend_from_slice(&(self.attrs.len() as u64).to_be_bytes());
        for v in &self.attrs {
            v.encode(buf);
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.encode(&mut buf);
        buf
    }

    /// The per-position value kinds of this tuple.
    pub fn type_sig(&self) -> Vec<ValueKind> {
        self.attrs.iter().map(Value::kind).collect()
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.ts)?;
        for v in &self.attrs {
            write!(f, ", {v}")?;
        }
        write!(f, ")")
    }
}

/// What an edge carries: a tuple or a watermark. A watermark with time
/// `w` promises no later tuple on that edge has event time below `w`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StreamElement {
    Tuple(Tuple),
    Watermark(Timestamp),
}

impl StreamElement {
    pub fn tuple(ts: Timestamp, attrs: Vec<Value>) -> Self {
        StreamElement::Tuple(Tuple::new(ts, attrs))
    }

    pub fn as_tuple(&self) -> Option<&Tuple> {
        match self {
            StreamElement::Tuple(t) => Some(t),
            StreamElement::Watermark(_) => None,
        }
    }

    pub fn is_watermark(&self) -> bool {
        matches!(self, StreamElement::Watermark(_))
    }
}

impl fmt::Display for StreamElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamElement::Tuple(t) => write!(f, "{t}"),
            StreamElement::Watermark(w) => write!(f, "W({w})"),
        }
    }
}

/// Extracts routing/grouping key bytes from a tuple.
pub type KeyFn = Arc<dyn Fn(&Tuple) -> Vec<u8> + Send + Sync>;

/// Key over the listed attribute positions. An empty set yields a single
/// global key.
pub fn key_by_attrs(positions: Vec<usize>) -> KeyFn {
    Arc::new(move |t: &Tuple| {
        let mut buf = Vec::new();
        for &p in &positions {
            t.attrs[p].encode(&mut buf);
        }
        buf
    })
}

/// Key over the full tuple (timestamp and every attribute), so that only
/// identical tuples share a group.
pub fn key_full_tuple() -> KeyFn {
    Arc::new(|t: &Tuple| t.canonical_bytes())
}

/// Single global key for unkeyed windows.
pub fn key_global() -> KeyFn {
    Arc::new(|_: &Tuple| Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_encoding_orders_ints_numerically() {
        let enc = |v: i64| {
            let mut b = Vec::new();
            Value::Int(v).encode(&mut b);
            b
        };
        assert!(enc(-5) < enc(-1));
        assert!(enc(-1) < enc(0));
        assert!(enc(0) < enc(7));
    }

    #[test]
    fn index_encoding_orders_tags() {
        let enc = |v: i64| {
            let mut b = Vec::new();
            Value::Index(v).encode(&mut b);
            b
        };
        assert!(enc(EMBED_TAG) < enc(0));
        assert!(enc(0) < enc(1));
        assert!(enc(1) < enc(2));
    }

    #[test]
    fn tuple_equality_covers_ts_and_attrs() {
        let a = Tuple::new(3, vec![Value::Int(5)]);
        let b = Tuple::new(3, vec![Value::Int(5)]);
        let c = Tuple::new(4, vec![Value::Int(5)]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        assert_ne!(a.canonical_bytes(), c.canonical_bytes());
    }

    #[test]
    fn full_tuple_key_distinguishes_embedded_payloads() {
        let key = key_full_tuple();
        let payload = vec![Tuple::new(1, vec![Value::Int(9)])];
        let a = Tuple::new(4, vec![Value::Tuples(payload.clone()), Value::Index(EMBED_TAG)]);
        let b = Tuple::new(4, vec![Value::Tuples(payload), Value::Index(0)]);
        assert_ne!(key(&a), key(&b));
    }

    #[test]
    fn empty_key_set_is_global() {
        let key = key_by_attrs(vec![]);
        let a = Tuple::new(1, vec![Value::Int(1)]);
        let b = Tuple::new(9, vec![Value::Text("x".into())]);
        assert_eq!(key(&a), key(&b));
    }
}
