//! Message values and their word-framed wire encoding.
//!
//! Frames are little-endian and packed: fields follow each other with no
//! alignment padding, `bool` is one byte, strings and dynamic arrays carry a
//! `u32` element count, and the frame is zero-padded to a 4-byte boundary.

mod value;
mod wire;

use std::fmt;

use thiserror::Error;

use crate::msgdef::plan::layout_of_def;
use crate::msgdef::{FieldPath, MessageTypeDef, TypeRegistry};

pub use value::{zero_value, ArrayValue, MessageValue, Value, Violation, ViolationKind};
pub use wire::{decode_payload, deserialize, serialize};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("shape mismatch at {0}")]
    ShapeMismatch(Violation),
    #[error("{path}: {len} elements exceed bound {max}")]
    BoundExceeded { path: String, len: usize, max: usize },
    #[error("truncated frame at {path}: need {needed} bytes, {remaining} left")]
    Truncated {
        path: String,
        needed: usize,
        remaining: usize,
    },
    #[error("count {count} at {path} {reason}")]
    CountOutOfRange {
        path: String,
        count: u64,
        reason: &'static str,
    },
    #[error("{len} trailing bytes at offset {offset} are not padding")]
    TrailingBytes { offset: usize, len: usize },
    #[error("invalid bool byte {byte:#04x} at {path}")]
    InvalidBool { path: String, byte: u8 },
    #[error("invalid UTF-8 in string at {path}")]
    InvalidUtf8 { path: String },
    #[error("frame length {0} is not a multiple of 4")]
    Unaligned(usize),
    #[error("bad hex dump line {line}: {text}")]
    HexDump { line: usize, text: String },
    #[error("{0}")]
    Internal(String),
}

/// One serialized message: a whole number of 32-bit words.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Frame {
    bytes: Vec<u8>,
}

impl Frame {
    pub(crate) fn from_padded(bytes: Vec<u8>) -> Self {
        debug_assert_eq!(bytes.len() % 4, 0);
        Frame { bytes }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        if bytes.len() % 4 != 0 {
            return Err(CodecError::Unaligned(bytes.len()));
        }
        Ok(Frame { bytes })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len_bytes(&self) -> usize {
        self.bytes.len()
    }

    pub fn len_words(&self) -> usize {
        self.bytes.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Words in little-endian interpretation.
    pub fn words(&self) -> impl Iterator<Item = u32> + '_ {
        self.bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
    }

    /// Lowercase hex, one word per line, bytes in wire order.
    pub fn hex_dump(&self) -> String {
        let mut s = String::with_capacity(self.bytes.len() * 9 / 4);
        for word in self.bytes.chunks_exact(4) {
            for b in word {
                s.push_str(&format!("{b:02x}"));
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Frame::hex_dump`]; blank lines are ignored.
    pub fn from_hex_dump(text: &str) -> Result<Self, CodecError> {
        let mut bytes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || CodecError::HexDump {
                line: i + 1,
                text: line.to_owned(),
            };
            if line.len() != 8 || !line.is_ascii() {
                return Err(bad());
            }
            for k in 0..4 {
                bytes.push(u8::from_str_radix(&line[2 * k..2 * k + 2], 16).map_err(|_| bad())?);
            }
        }
        Ok(Frame { bytes })
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({} words)", self.len_words())
    }
}

/// Checks `value` against `def`, returning the first violation.
pub fn conforms_to(value: &MessageValue, def: &MessageTypeDef, registry: &TypeRegistry) -> Result<(), Violation> {
    let layout = layout_of_def(registry, def).map_err(|e| Violation {
        path: FieldPath::root(),
        kind: ViolationKind::UnknownType(e.to_string()),
    })?;
    value::check_message(value, &layout, &FieldPath::root())
}
