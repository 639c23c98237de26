//! Message definitions: parsing `.msg` files, resolving nested types and
//! flattening them into primitive serialization plans.
//!
//! The grammar is the ROS 2 `.msg` subset: one `<type> <name>` declaration
//! per line, `#` comments, `<type> NAME=value` constants and the `[]`, `[n]`
//! and `[<=n]` array suffixes. Default values, bounded strings and wide
//! strings are rejected.

mod parse;
pub(crate) mod plan;
mod registry;

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use parse::parse_msg_file;
pub use plan::{flatten, layout_of, FieldPath, Layout, LayoutField, LayoutKind, PathSegment, PlanSlot, SerializationPlan, SlotArity, SlotGroup};
pub use registry::{load_msg_dir, resolve, TypeRegistry};

/// Built-in field types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Bool,
    Int8,
    Uint8,
    Int16,
    Uint16,
    Int32,
    Uint32,
    Int64,
    Uint64,
    Float32,
    Float64,
    String,
}

impl Primitive {
    pub const ALL: [Primitive; 12] = [
        Primitive::Bool,
        Primitive::Int8,
        Primitive::Uint8,
        Primitive::Int16,
        Primitive::Uint16,
        Primitive::Int32,
        Primitive::Uint32,
        Primitive::Int64,
        Primitive::Uint64,
        Primitive::Float32,
        Primitive::Float64,
        Primitive::String,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Bool => "bool",
            Primitive::Int8 => "int8",
            Primitive::Uint8 => "uint8",
            Primitive::Int16 => "int16",
            Primitive::Uint16 => "uint16",
            Primitive::Int32 => "int32",
            Primitive::Uint32 => "uint32",
            Primitive::Int64 => "int64",
            Primitive::Uint64 => "uint64",
            Primitive::Float32 => "float32",
            Primitive::Float64 => "float64",
            Primitive::String => "string",
        }
    }

    /// Looks up a primitive by its `.msg` spelling. `byte` and `char` are
    /// accepted as the ROS 2 aliases of `uint8`.
    pub fn from_name(name: &str) -> Option<Self> {
        let p = match name {
            "byte" | "char" => Primitive::Uint8,
            other => *Primitive::ALL.iter().find(|p| p.name() == other)?,
        };
        Some(p)
    }

    /// Encoded width in bytes, `None` for the length-prefixed string.
    pub fn width(self) -> Option<usize> {
        match self {
            Primitive::Bool | Primitive::Int8 | Primitive::Uint8 => Some(1),
            Primitive::Int16 | Primitive::Uint16 => Some(2),
            Primitive::Int32 | Primitive::Uint32 | Primitive::Float32 => Some(4),
            Primitive::Int64 | Primitive::Uint64 | Primitive::Float64 => Some(8),
            Primitive::String => None,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Primitive {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

/// Namespaced message type name, `<package>/<Name>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeName {
    package: String,
    name: String,
}

impl TypeName {
    pub fn new(package: &str, name: &str) -> Result<Self, MsgError> {
        if !is_package_name(package) || !is_type_ident(name) {
            return Err(MsgError::InvalidTypeName(format!("{package}/{name}")));
        }
        Ok(TypeName {
            package: package.to_owned(),
            name: name.to_owned(),
        })
    }

    pub fn package(&self) -> &str {
        &self.package
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl FromStr for TypeName {
    type Err = MsgError;

    /// Accepts `pkg/Name` and the interface form `pkg/msg/Name`.
    fn from_str(s: &str) -> Result<Self, MsgError> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [pkg, name] | [pkg, "msg", name] => TypeName::new(pkg, name),
            _ => Err(MsgError::InvalidTypeName(s.to_owned())),
        }
    }
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.package, self.name)
    }
}

impl Serialize for TypeName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ElementType {
    Primitive(Primitive),
    Nested(TypeName),
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementType::Primitive(p) => p.fmt(f),
            ElementType::Nested(t) => t.fmt(f),
        }
    }
}

/// Array shape of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arity {
    Scalar,
    Fixed(usize),
    Bounded(usize),
    Unbounded,
}

impl Arity {
    pub fn is_dynamic(self) -> bool {
        matches!(self, Arity::Bounded(_) | Arity::Unbounded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDef {
    pub(crate) name: String,
    pub(crate) element: ElementType,
    pub(crate) arity: Arity,
}

impl FieldDef {
    pub fn new(name: &str, element: ElementType, arity: Arity) -> Result<Self, MsgError> {
        if !is_field_ident(name) {
            return Err(MsgError::InvalidFieldName(name.to_owned()));
        }
        if let Arity::Fixed(0) | Arity::Bounded(0) = arity {
            return Err(MsgError::ZeroLengthArray(name.to_owned()));
        }
        Ok(FieldDef {
            name: name.to_owned(),
            element,
            arity,
        })
    }

    pub fn primitive(name: &str, primitive: Primitive) -> Result<Self, MsgError> {
        Self::new(name, ElementType::Primitive(primitive), Arity::Scalar)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn element(&self) -> &ElementType {
        &self.element
    }

    pub fn arity(&self) -> Arity {
        self.arity
    }
}

/// Literal value of a declared constant.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstValue {
    Bool(bool),
    Int(i64),
    UInt(u64),
    Float(f64),
    String(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDef {
    pub name: String,
    pub primitive: Primitive,
    pub value: ConstValue,
}

/// A parsed message type. Constants are kept for reference but never take
/// part in serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageTypeDef {
    type_name: TypeName,
    fields: Vec<FieldDef>,
    constants: Vec<ConstantDef>,
}

impl MessageTypeDef {
    pub fn new(type_name: TypeName, fields: Vec<FieldDef>) -> Result<Self, MsgError> {
        Self::with_constants(type_name, fields, Vec::new())
    }

    pub fn with_constants(
        type_name: TypeName,
        fields: Vec<FieldDef>,
        constants: Vec<ConstantDef>,
    ) -> Result<Self, MsgError> {
        for (i, f) in fields.iter().enumerate() {
            if fields[..i].iter().any(|g| g.name == f.name) {
                return Err(MsgError::DuplicateField {
                    type_name: type_name.to_string(),
                    field: f.name.clone(),
                    line: None,
                });
            }
        }
        Ok(MessageTypeDef {
            type_name,
            fields,
            constants,
        })
    }

    pub fn type_name(&self) -> &TypeName {
        &self.type_name
    }

    pub fn fields(&self) -> &[FieldDef] {
        &self.fields
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn constants(&self) -> &[ConstantDef] {
        &self.constants
    }

    pub(crate) fn nested_refs(&self) -> impl Iterator<Item = (&FieldDef, &TypeName)> {
        self.fields.iter().filter_map(|f| match &f.element {
            ElementType::Nested(t) => Some((f, t)),
            ElementType::Primitive(_) => None,
        })
    }
}

#[derive(Debug, Error)]
pub enum MsgError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown primitive type `{token}`")]
    UnknownPrimitive { line: usize, token: String },
    #[error("{}duplicate field `{field}` in {type_name}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    DuplicateField {
        type_name: String,
        field: String,
        line: Option<usize>,
    },
    #[error("invalid type name `{0}`")]
    InvalidTypeName(String),
    #[error("invalid field name `{0}`")]
    InvalidFieldName(String),
    #[error("array field `{0}` must have a length of at least 1")]
    ZeroLengthArray(String),
    #[error("{referrer}.{field} refers to unknown type {missing}")]
    Unresolved {
        referrer: TypeName,
        field: String,
        missing: TypeName,
    },
    #[error("cyclic nesting: {}", .path.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" -> "))]
    Cycle { path: Vec<TypeName> },
    #[error("unknown message type {0}")]
    UnknownType(TypeName),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<MsgError>,
    },
}

pub(crate) fn is_field_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_package_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn is_type_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_name_forms() {
        let a: TypeName = "geometry_msgs/Point".parse().unwrap();
        let b: TypeName = "geometry_msgs/msg/Point".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "geometry_msgs/Point");
        assert!("Point".parse::<TypeName>().is_err());
        assert!("geometry_msgs/point".parse::<TypeName>().is_err());
    }

    #[test]
    fn primitive_aliases_and_widths() {
        assert_eq!(Primitive::from_name("byte"), Some(Primitive::Uint8));
        assert_eq!(Primitive::from_name("char"), Some(Primitive::Uint8));
        assert_eq!(Primitive::from_name("int31"), None);
        assert_eq!(Primitive::Float64.width(), Some(8));
        assert_eq!(Primitive::String.width(), None);
    }

    #[test]
    fn duplicate_fields_rejected() {
        let t = TypeName::new("pkg", "T").unwrap();
        let f = FieldDef::primitive("x", Primitive::Int32).unwrap();
        let err = MessageTypeDef::new(t, vec![f.clone(), f]).unwrap_err();
        assert!(matches!(err, MsgError::DuplicateField { .. }));
    }

    #[test]
    fn zero_length_arrays_rejected() {
        let err = FieldDef::new("x", ElementType::Primitive(Primitive::Int8), Arity::Fixed(0)).unwrap_err();
        assert!(matches!(err, MsgError::ZeroLengthArray(_)));
    }
}
