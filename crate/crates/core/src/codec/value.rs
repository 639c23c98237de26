use std::collections::BTreeMap;
use std::fmt;

use crate::msgdef::{Arity, FieldPath, Layout, LayoutField, LayoutKind, Primitive};

/// A dynamically typed field value.
///
/// Equality compares floats by bit pattern, so NaN payloads and signed
/// zeros survive a round trip as "equal".
#[derive(Debug, Clone)]
pub enum Value {
    Bool(bool),
    Int8(i8),
    Uint8(u8),
    Int16(i16),
    Uint16(u16),
    Int32(i32),
    Uint32(u32),
    Int64(i64),
    Uint64(u64),
    Float32(f32),
    Float64(f64),
    String(String),
    Message(MessageValue),
    Array(ArrayValue),
}

/// Homogeneous array payload; one variant per element kind.
#[derive(Debug, Clone)]
pub enum ArrayValue {
    Bool(Vec<bool>),
    Int8(Vec<i8>),
    Uint8(Vec<u8>),
    Int16(Vec<i16>),
    Uint16(Vec<u16>),
    Int32(Vec<i32>),
    Uint32(Vec<u32>),
    Int64(Vec<i64>),
    Uint64(Vec<u64>),
    Float32(Vec<f32>),
    Float64(Vec<f64>),
    String(Vec<String>),
    Message(Vec<MessageValue>),
}

/// Field name to value map of one message instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageValue {
    fields: BTreeMap<String, Value>,
}

impl MessageValue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder form of [`MessageValue::insert`].
    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: &str, value: impl Into<Value>) -> Option<Value> {
        self.fields.insert(name.to_owned(), value.into())
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.fields.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.fields.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

impl Value {
    /// Primitive kind of a scalar value.
    pub fn scalar_primitive(&self) -> Option<Primitive> {
        Some(match self {
            Value::Bool(_) => Primitive::Bool,
            Value::Int8(_) => Primitive::Int8,
            Value::Uint8(_) => Primitive::Uint8,
            Value::Int16(_) => Primitive::Int16,
            Value::Uint16(_) => Primitive::Uint16,
            Value::Int32(_) => Primitive::Int32,
            Value::Uint32(_) => Primitive::Uint32,
            Value::Int64(_) => Primitive::Int64,
            Value::Uint64(_) => Primitive::Uint64,
            Value::Float32(_) => Primitive::Float32,
            Value::Float64(_) => Primitive::Float64,
            Value::String(_) => Primitive::String,
            Value::Message(_) | Value::Array(_) => return None,
        })
    }

    pub fn as_message(&self) -> Option<&MessageValue> {
        match self {
            Value::Message(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&ArrayValue> {
        match self {
            Value::Array(a) => Some(a),
            _ => None,
        }
    }

    /// Short type description used in diagnostics, e.g. `int32` or `uint8[3]`.
    pub fn describe(&self) -> String {
        match self {
            Value::Message(_) => "message".to_owned(),
            Value::Array(a) => match a.primitive() {
                Some(p) => format!("{p}[{}]", a.len()),
                None => format!("message[{}]", a.len()),
            },
            scalar => scalar.scalar_primitive().map(|p| p.to_string()).unwrap_or_default(),
        }
    }

    pub fn zero(primitive: Primitive) -> Value {
        match primitive {
            Primitive::Bool => Value::Bool(false),
            Primitive::Int8 => Value::Int8(0),
            Primitive::Uint8 => Value::Uint8(0),
            Primitive::Int16 => Value::Int16(0),
            Primitive::Uint16 => Value::Uint16(0),
            Primitive::Int32 => Value::Int32(0),
            Primitive::Uint32 => Value::Uint32(0),
            Primitive::Int64 => Value::Int64(0),
            Primitive::Uint64 => Value::Uint64(0),
            Primitive::Float32 => Value::Float32(0.0),
            Primitive::Float64 => Value::Float64(0.0),
            Primitive::String => Value::String(String::new()),
        }
    }
}

impl ArrayValue {
    /// Element primitive, or `None` for arrays of messages.
    pub fn primitive(&self) -> Option<Primitive> {
        Some(match self {
            ArrayValue::Bool(_) => Primitive::Bool,
            ArrayValue::Int8(_) => Primitive::Int8,
            ArrayValue::Uint8(_) => Primitive::Uint8,
            ArrayValue::Int16(_) => Primitive::Int16,
            ArrayValue::Uint16(_) => Primitive::Uint16,
            ArrayValue::Int32(_) => Primitive::Int32,
            ArrayValue::Uint32(_) => Primitive::Uint32,
            ArrayValue::Int64(_) => Primitive::Int64,
            ArrayValue::Uint64(_) => Primitive::Uint64,
            ArrayValue::Float32(_) => Primitive::Float32,
            ArrayValue::Float64(_) => Primitive::Float64,
            ArrayValue::String(_) => Primitive::String,
            ArrayValue::Message(_) => return None,
        })
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayValue::Bool(v) => v.len(),
            ArrayValue::Int8(v) => v.len(),
            ArrayValue::Uint8(v) => v.len(),
            ArrayValue::Int16(v) => v.len(),
            ArrayValue::Uint16(v) => v.len(),
            ArrayValue::Int32(v) => v.len(),
            ArrayValue::Uint32(v) => v.len(),
            ArrayValue::Int64(v) => v.len(),
            ArrayValue::Uint64(v) => v.len(),
            ArrayValue::Float32(v) => v.len(),
            ArrayValue::Float64(v) => v.len(),
            ArrayValue::String(v) => v.len(),
            ArrayValue::Message(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros(primitive: Primitive, n: usize) -> ArrayValue {
        match primitive {
            Primitive::Bool => ArrayValue::Bool(vec![false; n]),
            Primitive::Int8 => ArrayValue::Int8(vec![0; n]),
            Primitive::Uint8 => ArrayValue::Uint8(vec![0; n]),
            Primitive::Int16 => ArrayValue::Int16(vec![0; n]),
            Primitive::Uint16 => ArrayValue::Uint16(vec![0; n]),
            Primitive::Int32 => ArrayValue::Int32(vec![0; n]),
            Primitive::Uint32 => ArrayValue::Uint32(vec![0; n]),
            Primitive::Int64 => ArrayValue::Int64(vec![0; n]),
            Primitive::Uint64 => ArrayValue::Uint64(vec![0; n]),
            Primitive::Float32 => ArrayValue::Float32(vec![0.0; n]),
            Primitive::Float64 => ArrayValue::Float64(vec![0.0; n]),
            Primitive::String => ArrayValue::String(vec![String::new(); n]),
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        use Value::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a == b,
            (Int8(a), Int8(b)) => a == b,
            (Uint8(a), Uint8(b)) => a == b,
            (Int16(a), Int16(b)) => a == b,
            (Uint16(a), Uint16(b)) => a == b,
            (Int32(a), Int32(b)) => a == b,
            (Uint32(a), Uint32(b)) => a == b,
            (Int64(a), Int64(b)) => a == b,
            (Uint64(a), Uint64(b)) => a == b,
            (Float32(a), Float32(b)) => a.to_bits() == b.to_bits(),
            (Float64(a), Float64(b)) => a.to_bits() == b.to_bits(),
            (String(a), String(b)) => a == b,
            (Message(a), Message(b)) => a == b,
            (Array(a), Array(b)) => a == b,
            _ => false,
        }
    }
}

impl PartialEq for ArrayValue {
    fn eq(&self, other: &Self) -> bool {
        use ArrayValue::*;
        fn bits_eq<T: Copy, B: PartialEq>(a: &[T], b: &[T], f: impl Fn(T) -> B) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| f(*x) == f(*y))
        }
        match (self, other) {
            (Bool(a), Bool(b)) => a == b,
            (Int8(a), Int8(b)) => a == b,
            (Uint8(a), Uint8(b)) => a == b,
            (Int16(a), Int16(b)) => a == b,
            (Uint16(a), Uint16(b)) => a == b,
            (Int32(a), Int32(b)) => a == b,
            (Uint32(a), Uint32(b)) => a == b,
            (Int64(a), Int64(b)) => a == b,
            (Uint64(a), Uint64(b)) => a == b,
            (Float32(a), Float32(b)) => bits_eq(a, b, f32::to_bits),
            (Float64(a), Float64(b)) => bits_eq(a, b, f64::to_bits),
            (String(a), String(b)) => a == b,
            (Message(a), Message(b)) => a == b,
            _ => false,
        }
    }
}

macro_rules! value_from {
    ($($t:ty => $var:ident),* $(,)?) => {
        $(
            impl From<$t> for Value {
                fn from(v: $t) -> Self {
                    Value::$var(v)
                }
            }
            impl From<Vec<$t>> for Value {
                fn from(v: Vec<$t>) -> Self {
                    Value::Array(ArrayValue::$var(v))
                }
            }
        )*
    };
}

value_from! {
    bool => Bool, i8 => Int8, u8 => Uint8, i16 => Int16, u16 => Uint16, i32 => Int32,
    u32 => Uint32, i64 => Int64, u64 => Uint64, f32 => Float32, f64 => Float64,
    String => String, MessageValue => Message,
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::String(v.to_owned())
    }
}

impl From<ArrayValue> for Value {
    fn from(v: ArrayValue) -> Self {
        Value::Array(v)
    }
}

/// The value for `layout` with zero numbers, empty strings and empty
/// dynamic arrays.
pub fn zero_value(layout: &Layout) -> MessageValue {
    let mut msg = MessageValue::new();
    for f in &layout.fields {
        let v = match (&f.kind, f.arity) {
            (LayoutKind::Primitive(p), Arity::Scalar) => Value::zero(*p),
            (LayoutKind::Primitive(p), Arity::Fixed(n)) => Value::Array(ArrayValue::zeros(*p, n)),
            (LayoutKind::Primitive(p), _) => Value::Array(ArrayValue::zeros(*p, 0)),
            (LayoutKind::Message(inner), Arity::Scalar) => Value::Message(zero_value(inner)),
            (LayoutKind::Message(inner), Arity::Fixed(n)) => {
                Value::Array(ArrayValue::Message(vec![zero_value(inner); n]))
            }
            (LayoutKind::Message(_), _) => Value::Array(ArrayValue::Message(Vec::new())),
        };
        msg.fields.insert(f.name.clone(), v);
    }
    msg
}

/// Nested message structure only; primitive fields are left for the
/// decoder to fill.
pub(crate) fn skeleton(layout: &Layout) -> MessageValue {
    let mut msg = MessageValue::new();
    for f in &layout.fields {
        if let LayoutKind::Message(inner) = &f.kind {
            match f.arity {
                Arity::Scalar => {
                    msg.fields.insert(f.name.clone(), Value::Message(skeleton(inner)));
                }
                Arity::Fixed(n) => {
                    msg.fields
                        .insert(f.name.clone(), Value::Array(ArrayValue::Message(vec![skeleton(inner); n])));
                }
                _ => {}
            }
        }
    }
    msg
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Missing,
    Unexpected,
    WrongType { expected: String, found: String },
    WrongLength { expected: usize, found: usize },
    BoundExceeded { max: usize, found: usize },
    UnknownType(String),
}

/// The first place where a value departs from its type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: FieldPath,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.path.is_root() {
            "<root>".to_owned()
        } else {
            self.path.to_string()
        };
        match &self.kind {
            ViolationKind::Missing => write!(f, "{at}: missing field"),
            ViolationKind::Unexpected => write!(f, "{at}: field not in type"),
            ViolationKind::WrongType { expected, found } => write!(f, "{at}: expected {expected}, found {found}"),
            ViolationKind::WrongLength { expected, found } => {
                write!(f, "{at}: expected {expected} elements, found {found}")
            }
            ViolationKind::BoundExceeded { max, found } => write!(f, "{at}: {found} elements exceed bound {max}"),
            ViolationKind::UnknownType(msg) => write!(f, "{at}: {msg}"),
        }
    }
}

fn describe_field(f: &LayoutField) -> String {
    let base = match &f.kind {
        LayoutKind::Primitive(p) => p.to_string(),
        LayoutKind::Message(_) => "message".to_owned(),
    };
    match f.arity {
        Arity::Scalar => base,
        Arity::Fixed(n) => format!("{base}[{n}]"),
        Arity::Bounded(n) => format!("{base}[<={n}]"),
        Arity::Unbounded => format!("{base}[]"),
    }
}

/// Recursively checks `value` against `layout`; fields are visited in
/// declaration order, extra fields are reported last.
pub(crate) fn check_message(value: &MessageValue, layout: &Layout, path: &FieldPath) -> Result<(), Violation> {
    for f in &layout.fields {
        let p = path.child(&f.name);
        let Some(v) = value.get(&f.name) else {
            return Err(Violation {
                path: p,
                kind: ViolationKind::Missing,
            });
        };
        check_field(v, f, &p)?;
    }
    if let Some((name, _)) = value.iter().find(|(name, _)| layout.field(name).is_none()) {
        return Err(Violation {
            path: path.child(name),
            kind: ViolationKind::Unexpected,
        });
    }
    Ok(())
}

fn check_field(v: &Value, f: &LayoutField, path: &FieldPath) -> Result<(), Violation> {
    let wrong = || Violation {
        path: path.clone(),
        kind: ViolationKind::WrongType {
            expected: describe_field(f),
            found: v.describe(),
        },
    };
    match (&f.kind, f.arity, v) {
        (LayoutKind::Primitive(p), Arity::Scalar, _) if v.scalar_primitive() == Some(*p) => Ok(()),
        (LayoutKind::Primitive(p), arity, Value::Array(a)) if arity != Arity::Scalar && a.primitive() == Some(*p) => {
            check_len(a.len(), arity, path)
        }
        (LayoutKind::Message(inner), Arity::Scalar, Value::Message(m)) => check_message(m, inner, path),
        (LayoutKind::Message(inner), arity, Value::Array(ArrayValue::Message(ms))) if arity != Arity::Scalar => {
            check_len(ms.len(), arity, path)?;
            ms.iter()
                .enumerate()
                .try_for_each(|(i, m)| check_message(m, inner, &path.index(i)))
        }
        _ => Err(wrong()),
    }
}

fn check_len(len: usize, arity: Arity, path: &FieldPath) -> Result<(), Violation> {
    let kind = match arity {
        Arity::Fixed(n) if len != n => ViolationKind::WrongLength {
            expected: n,
            found: len,
        },
        Arity::Bounded(max) if len > max => ViolationKind::BoundExceeded { max, found: len },
        _ => return Ok(()),
    };
    Err(Violation {
        path: path.clone(),
        kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_equality_is_bitwise() {
        assert_eq!(Value::Float64(f64::NAN), Value::Float64(f64::NAN));
        assert_ne!(Value::Float64(0.0), Value::Float64(-0.0));
        assert_eq!(Value::from(vec![f32::NAN]), Value::from(vec![f32::NAN]));
    }

    #[test]
    fn describe_values() {
        assert_eq!(Value::from(3i32).describe(), "int32");
        assert_eq!(Value::from(vec![1u8, 2, 3]).describe(), "uint8[3]");
        assert_eq!(Value::from(MessageValue::new()).describe(), "message");
    }

    #[test]
    fn violation_display() {
        let v = Violation {
            path: FieldPath::root().child("a").index(2).child("b"),
            kind: ViolationKind::Missing,
        };
        assert_eq!(v.to_string(), "a[2].b: missing field");
    }
}
