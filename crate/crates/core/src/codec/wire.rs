use crate::msgdef::{FieldPath, PathSegment, PlanSlot, Primitive, SerializationPlan, SlotArity};

use super::value::{check_message, skeleton, ArrayValue, MessageValue, Value, ViolationKind};
use super::{CodecError, Frame};

/// Dynamic groups of zero-width elements carry no bytes per element, so the
/// remaining-bytes check cannot bound their count.
const MAX_ZERO_WIDTH_COUNT: usize = 1 << 20;

/// Encodes `value` into a word-padded frame following `plan`.
pub fn serialize(value: &MessageValue, plan: &SerializationPlan) -> Result<Frame, CodecError> {
    check_message(value, plan.layout(), &FieldPath::root()).map_err(|v| match v.kind {
        ViolationKind::BoundExceeded { max, found } => CodecError::BoundExceeded {
            path: v.path.to_string(),
            len: found,
            max,
        },
        _ => CodecError::ShapeMismatch(v),
    })?;
    let mut out = Vec::with_capacity(plan.fixed_size_bytes().unwrap_or(64) + 3);
    encode_slots(plan.slots(), value, &FieldPath::root(), &mut out)?;
    out.resize(out.len().next_multiple_of(4), 0);
    Ok(Frame::from_padded(out))
}

fn encode_slots(slots: &[PlanSlot], root: &MessageValue, prefix: &FieldPath, out: &mut Vec<u8>) -> Result<(), CodecError> {
    for slot in slots {
        let mismatch = || CodecError::Internal(format!("value does not match plan at {}", prefix.join(slot.path())));
        let value = lookup(root, slot.path()).ok_or_else(mismatch)?;
        match slot {
            PlanSlot::Primitive { arity, .. } => match (arity, value) {
                (SlotArity::Scalar, v) => write_scalar(v, out).ok_or_else(mismatch)?,
                (SlotArity::Fixed { .. }, Value::Array(a)) => write_elements(a, out),
                (SlotArity::Dynamic { .. }, Value::Array(a)) => {
                    write_count(a.len(), out, || prefix.join(slot.path()))?;
                    write_elements(a, out);
                }
                _ => return Err(mismatch()),
            },
            PlanSlot::Group { path, group } => {
                let Value::Array(ArrayValue::Message(items)) = value else {
                    return Err(mismatch());
                };
                let here = prefix.join(path);
                write_count(items.len(), out, || here.clone())?;
                for (i, item) in items.iter().enumerate() {
                    encode_slots(&group.slots, item, &here.index(i), out)?;
                }
            }
        }
    }
    Ok(())
}

fn lookup<'a>(root: &'a MessageValue, path: &FieldPath) -> Option<&'a Value> {
    let segs = path.segments();
    let mut msg = root;
    let mut i = 0;
    loop {
        let PathSegment::Field(name) = &segs[i] else { return None };
        let v = msg.get(name)?;
        match segs.get(i + 1) {
            None => return Some(v),
            Some(PathSegment::Index(k)) => {
                let Value::Array(ArrayValue::Message(items)) = v else { return None };
                msg = items.get(*k)?;
                i += 2;
            }
            Some(PathSegment::Field(_)) => {
                msg = v.as_message()?;
                i += 1;
            }
        }
        if i >= segs.len() {
            return None;
        }
    }
}

fn write_count(n: usize, out: &mut Vec<u8>, path: impl Fn() -> FieldPath) -> Result<(), CodecError> {
    let n = u32::try_from(n).map_err(|_| CodecError::CountOutOfRange {
        path: path().to_string(),
        count: n as u64,
        reason: "exceeds the 32-bit count prefix",
    })?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn write_scalar(v: &Value, out: &mut Vec<u8>) -> Option<()> {
    match v {
        Value::Bool(b) => out.push(u8::from(*b)),
        Value::Int8(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Uint8(x) => out.push(*x),
        Value::Int16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Uint16(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Int32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Uint32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Int64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Uint64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Float32(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::Float64(x) => out.extend_from_slice(&x.to_le_bytes()),
        Value::String(s) => write_str(s, out),
        Value::Message(_) | Value::Array(_) => return None,
    }
    Some(())
}

fn write_elements(a: &ArrayValue, out: &mut Vec<u8>) {
    macro_rules! le {
        ($v:expr) => {
            for x in $v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
    }
    match a {
        ArrayValue::Bool(v) => out.extend(v.iter().map(|b| u8::from(*b))),
        ArrayValue::Uint8(v) => out.extend_from_slice(v),
        ArrayValue::Int8(v) => out.extend(v.iter().map(|x| *x as u8)),
        ArrayValue::Int16(v) => le!(v),
        ArrayValue::Uint16(v) => le!(v),
        ArrayValue::Int32(v) => le!(v),
        ArrayValue::Uint32(v) => le!(v),
        ArrayValue::Int64(v) => le!(v),
        ArrayValue::Uint64(v) => le!(v),
        ArrayValue::Float32(v) => le!(v),
        ArrayValue::Float64(v) => le!(v),
        ArrayValue::String(v) => v.iter().for_each(|s| write_str(s, out)),
        // Groups are written slot by slot by the caller.
        ArrayValue::Message(_) => {}
    }
}

/// Decodes a frame produced for `plan`.
pub fn deserialize(frame: &Frame, plan: &SerializationPlan) -> Result<MessageValue, CodecError> {
    decode_payload(frame.as_bytes(), plan)
}

/// Decodes raw payload bytes; up to three trailing zero bytes of word
/// padding are accepted.
pub fn decode_payload(bytes: &[u8], plan: &SerializationPlan) -> Result<MessageValue, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let mut msg = skeleton(plan.layout());
    decode_slots(plan.slots(), &mut r, &FieldPath::root(), &mut msg)?;
    let rest = &bytes[r.pos..];
    if rest.len() >= 4 || rest.iter().any(|b| *b != 0) {
        return Err(CodecError::TrailingBytes {
            offset: r.pos,
            len: rest.len(),
        });
    }
    Ok(msg)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, path: &dyn Fn() -> FieldPath) -> Result<&'a [u8], CodecError> {
        if n > self.remaining() {
            return Err(CodecError::Truncated {
                path: path().to_string(),
                needed: n,
                remaining: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, path: &dyn Fn() -> FieldPath) -> Result<[u8; N], CodecError> {
        Ok(self.take(N, path)?.try_into().expect("take returned N bytes"))
    }

    /// Reads a count prefix and checks it against `max` and the bytes left.
    fn count(&mut self, max: Option<usize>, min_elem: usize, path: &dyn Fn() -> FieldPath) -> Result<usize, CodecError> {
        let n = u32::from_le_bytes(self.array(path)?) as usize;
        let out_of_range = |reason| CodecError::CountOutOfRange {
            path: path().to_string(),
            count: n as u64,
            reason,
        };
        if max.is_some_and(|m| n > m) {
            return Err(out_of_range("exceeds the array bound"));
        }
        if n.saturating_mul(min_elem) > self.remaining() {
            return Err(out_of_range("exceeds the remaining bytes"));
        }
        if min_elem == 0 && n > MAX_ZERO_WIDTH_COUNT {
            return Err(out_of_range("too many zero-width elements"));
        }
        Ok(n)
    }

    fn string(&mut self, path: &dyn Fn() -> FieldPath) -> Result<String, CodecError> {
        let n = self.count(None, 1, path)?;
        let bytes = self.take(n, path)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::InvalidUtf8 {
            path: path().to_string(),
        })
    }

    fn bool(&mut self, path: &dyn Fn() -> FieldPath) -> Result<bool, CodecError> {
        match self.take(1, path)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            byte => Err(CodecError::InvalidBool {
                path: path().to_string(),
                byte,
            }),
        }
    }
}

fn decode_slots(
    slots: &[PlanSlot],
    r: &mut Reader<'_>,
    prefix: &FieldPath,
    target: &mut MessageValue,
) -> Result<(), CodecError> {
    for slot in slots {
        let path = || prefix.join(slot.path());
        let value = match slot {
            PlanSlot::Primitive { primitive, arity, .. } => match *arity {
                SlotArity::Scalar => read_scalar(*primitive, r, &path)?,
                SlotArity::Fixed { len } => Value::Array(read_elements(*primitive, len, r, &path)?),
                SlotArity::Dynamic { max } => {
                    let n = r.count(max, primitive.width().unwrap_or(4), &path)?;
                    Value::Array(read_elements(*primitive, n, r, &path)?)
                }
            },
            PlanSlot::Group { group, .. } => {
                let n = r.count(group.max, group.min_element_bytes, &path)?;
                let here = path();
                let mut items = Vec::with_capacity(n.min(1024));
                for i in 0..n {
                    let mut item = skeleton(&group.element);
                    decode_slots(&group.slots, r, &here.index(i), &mut item)?;
                    items.push(item);
                }
                Value::Array(ArrayValue::Message(items))
            }
        };
        place(target, slot.path(), value).ok_or_else(|| CodecError::Internal(format!("no place for slot {}", path())))?;
    }
    Ok(())
}

fn place(root: &mut MessageValue, path: &FieldPath, value: Value) -> Option<()> {
    let segs = path.segments();
    let (PathSegment::Field(last), parents) = segs.split_last()? else { return None };
    let mut msg = root;
    let mut i = 0;
    while i < parents.len() {
        let PathSegment::Field(name) = &parents[i] else { return None };
        let v = msg.get_mut(name)?;
        match parents.get(i + 1) {
            Some(PathSegment::Index(k)) => {
                let Value::Array(ArrayValue::Message(items)) = v else { return None };
                msg = items.get_mut(*k)?;
                i += 2;
            }
            _ => {
                let Value::Message(m) = v else { return None };
                msg = m;
                i += 1;
            }
        }
    }
    msg.insert(last, value);
    Some(())
}

fn read_scalar(p: Primitive, r: &mut Reader<'_>, path: &dyn Fn() -> FieldPath) -> Result<Value, CodecError> {
    Ok(match p {
        Primitive::Bool => Value::Bool(r.bool(path)?),
        Primitive::Int8 => Value::Int8(i8::from_le_bytes(r.array(path)?)),
        Primitive::Uint8 => Value::Uint8(u8::from_le_bytes(r.array(path)?)),
        Primitive::Int16 => Value::Int16(i16::from_le_bytes(r.array(path)?)),
        Primitive::Uint16 => Value::Uint16(u16::from_le_bytes(r.array(path)?)),
        Primitive::Int32 => Value::Int32(i32::from_le_bytes(r.array(path)?)),
        Primitive::Uint32 => Value::Uint32(u32::from_le_bytes(r.array(path)?)),
        Primitive::Int64 => Value::Int64(i64::from_le_bytes(r.array(path)?)),
        Primitive::Uint64 => Value::Uint64(u64::from_le_bytes(r.array(path)?)),
        Primitive::Float32 => Value::Float32(f32::from_le_bytes(r.array(path)?)),
        Primitive::Float64 => Value::Float64(f64::from_le_bytes(r.array(path)?)),
        Primitive::String => Value::String(r.string(path)?),
    })
}

fn read_elements(p: Primitive, n: usize, r: &mut Reader<'_>, path: &dyn Fn() -> FieldPath) -> Result<ArrayValue, CodecError> {
    macro_rules! le {
        ($var:ident, $t:ty) => {{
            const W: usize = std::mem::size_of::<$t>();
            let bytes = r.take(n * W, path)?;
            ArrayValue::$var(
                bytes
                    .chunks_exact(W)
                    .map(|c| <$t>::from_le_bytes(c.try_into().expect("chunk width")))
                    .collect(),
            )
        }};
    }
    Ok(match p {
        Primitive::Bool => ArrayValue::Bool((0..n).map(|_| r.bool(path)).collect::<Result<_, _>>()?),
        Primitive::Uint8 => ArrayValue::Uint8(r.take(n, path)?.to_vec()),
        Primitive::Int8 => ArrayValue::Int8(r.take(n, path)?.iter().map(|b| *b as i8).collect()),
        Primitive::Int16 => le!(Int16, i16),
        Primitive::Uint16 => le!(Uint16, u16),
        Primitive::Int32 => le!(Int32, i32),
        Primitive::Uint32 => le!(Uint32, u32),
        Primitive::Int64 => le!(Int64, i64),
        Primitive::Uint64 => le!(Uint64, u64),
        Primitive::Float32 => le!(Float32, f32),
        Primitive::Float64 => le!(Float64, f64),
        Primitive::String => ArrayValue::String((0..n).map(|_| r.string(path)).collect::<Result<_, _>>()?),
    })
}
