use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};

use super::registry::check_acyclic;
use super::{Arity, ElementType, MessageTypeDef, MsgError, Primitive, TypeName, TypeRegistry};

/// A message type with every nested reference inlined.
///
/// The layout keeps the tree shape that the flat slot list discards; the
/// codec uses it to check value shapes and to build decode skeletons.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Layout {
    pub fields: Vec<LayoutField>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutField {
    pub name: String,
    pub kind: LayoutKind,
    pub arity: Arity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutKind {
    Primitive(Primitive),
    Message(Layout),
}

impl Layout {
    pub fn field(&self, name: &str) -> Option<&LayoutField> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Builds the inlined layout of `type_name`, rejecting unknown references
/// and cyclic nesting reachable from it.
pub fn layout_of(registry: &TypeRegistry, type_name: &TypeName) -> Result<Layout, MsgError> {
    check_acyclic(registry, type_name, &mut HashMap::new(), &mut Vec::new())?;
    build_layout(registry, type_name)
}

/// Layout of a definition that need not itself be registered.
pub(crate) fn layout_of_def(registry: &TypeRegistry, def: &MessageTypeDef) -> Result<Layout, MsgError> {
    for (_, target) in def.nested_refs() {
        check_acyclic(registry, target, &mut HashMap::new(), &mut Vec::new())?;
    }
    layout_from_def(registry, def)
}

fn build_layout(registry: &TypeRegistry, type_name: &TypeName) -> Result<Layout, MsgError> {
    layout_from_def(registry, registry.require(type_name)?)
}

fn layout_from_def(registry: &TypeRegistry, def: &MessageTypeDef) -> Result<Layout, MsgError> {
    let fields = def
        .fields()
        .iter()
        .map(|f| {
            let kind = match f.element() {
                ElementType::Primitive(p) => LayoutKind::Primitive(*p),
                ElementType::Nested(t) => LayoutKind::Message(build_layout(registry, t)?),
            };
            Ok(LayoutField {
                name: f.name().to_owned(),
                kind,
                arity: f.arity(),
            })
        })
        .collect::<Result<_, MsgError>>()?;
    Ok(Layout { fields })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathSegment {
    Field(String),
    Index(usize),
}

/// Dotted location of a value inside a message, e.g. `poses[1].position.x`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct FieldPath(Vec<PathSegment>);

impl FieldPath {
    pub fn root() -> Self {
        FieldPath(Vec::new())
    }

    pub fn child(&self, name: &str) -> Self {
        let mut segs = self.0.clone();
        segs.push(PathSegment::Field(name.to_owned()));
        FieldPath(segs)
    }

    pub fn index(&self, i: usize) -> Self {
        let mut segs = self.0.clone();
        segs.push(PathSegment::Index(i));
        FieldPath(segs)
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` followed by the segments of `rest`.
    pub fn join(&self, rest: &FieldPath) -> Self {
        let mut segs = self.0.clone();
        segs.extend(rest.0.iter().cloned());
        FieldPath(segs)
    }

    /// True if `self` starts with all the segments of `prefix`.
    pub fn starts_with(&self, prefix: &FieldPath) -> bool {
        self.0.starts_with(&prefix.0)
    }
}

impl fmt::Display for FieldPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            match seg {
                PathSegment::Field(name) if i == 0 => f.write_str(name)?,
                PathSegment::Field(name) => write!(f, ".{name}")?,
                PathSegment::Index(idx) => write!(f, "[{idx}]")?,
            }
        }
        Ok(())
    }
}

impl Serialize for FieldPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotArity {
    Scalar,
    Fixed { len: usize },
    /// Count-prefixed on the wire; `max` is checked by the codec.
    Dynamic { max: Option<usize> },
}

/// One entry of a flattened plan.
///
/// Dynamic arrays of nested messages cannot be unrolled, so they become a
/// group: a count prefix followed by the group's slots once per element.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PlanSlot {
    Primitive {
        path: FieldPath,
        primitive: Primitive,
        arity: SlotArity,
    },
    Group {
        path: FieldPath,
        group: SlotGroup,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotGroup {
    pub max: Option<usize>,
    /// Paths here are relative to one element.
    pub slots: Vec<PlanSlot>,
    #[serde(skip)]
    pub(crate) element: Layout,
    #[serde(skip)]
    pub(crate) min_element_bytes: usize,
}

impl PlanSlot {
    pub fn path(&self) -> &FieldPath {
        match self {
            PlanSlot::Primitive { path, .. } | PlanSlot::Group { path, .. } => path,
        }
    }

    /// Wire width when it does not depend on the value.
    pub fn fixed_width(&self) -> Option<usize> {
        match self {
            PlanSlot::Primitive { primitive, arity, .. } => {
                let w = primitive.width()?;
                match arity {
                    SlotArity::Scalar => Some(w),
                    SlotArity::Fixed { len } => Some(w * len),
                    SlotArity::Dynamic { .. } => None,
                }
            }
            PlanSlot::Group { .. } => None,
        }
    }

    fn min_bytes(&self) -> usize {
        match self {
            PlanSlot::Primitive { primitive, arity, .. } => {
                let w = primitive.width().unwrap_or(4);
                match arity {
                    SlotArity::Scalar => w,
                    SlotArity::Fixed { len } => w * len,
                    SlotArity::Dynamic { .. } => 4,
                }
            }
            PlanSlot::Group { .. } => 4,
        }
    }
}

/// The ordered primitive layout of one message type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SerializationPlan {
    type_name: TypeName,
    slots: Vec<PlanSlot>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixed_size_bytes: Option<usize>,
    #[serde(skip)]
    layout: Layout,
}

impl SerializationPlan {
    pub fn type_name(&self) -> &TypeName {
        &self.type_name
    }

    pub fn slots(&self) -> &[PlanSlot] {
        &self.slots
    }

    /// Payload size before word padding, present iff no slot is dynamic.
    pub fn fixed_size_bytes(&self) -> Option<usize> {
        self.fixed_size_bytes
    }

    /// Frame size in 32-bit words for fixed-size types.
    pub fn fixed_size_words(&self) -> Option<usize> {
        self.fixed_size_bytes.map(|b| b.div_ceil(4))
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

/// Flattens `type_name` into its serialization plan.
///
/// Nested fields are expanded depth first in declaration order. A fixed
/// array of `n` nested messages becomes `n` consecutive copies of the
/// element's slots; dynamic arrays of nested messages become groups.
pub fn flatten(registry: &TypeRegistry, type_name: &TypeName) -> Result<SerializationPlan, MsgError> {
    let layout = layout_of(registry, type_name)?;
    Ok(plan_from_layout(type_name.clone(), layout))
}

pub(crate) fn plan_from_layout(type_name: TypeName, layout: Layout) -> SerializationPlan {
    let mut slots = Vec::new();
    expand(&layout, &FieldPath::root(), &mut slots);
    let fixed_size_bytes = slots.iter().map(PlanSlot::fixed_width).sum::<Option<usize>>();
    SerializationPlan {
        type_name,
        slots,
        fixed_size_bytes,
        layout,
    }
}

fn expand(layout: &Layout, prefix: &FieldPath, out: &mut Vec<PlanSlot>) {
    for field in &layout.fields {
        let path = prefix.child(&field.name);
        match &field.kind {
            LayoutKind::Primitive(primitive) => {
                let arity = match field.arity {
                    Arity::Scalar => SlotArity::Scalar,
                    Arity::Fixed(len) => SlotArity::Fixed { len },
                    Arity::Bounded(max) => SlotArity::Dynamic { max: Some(max) },
                    Arity::Unbounded => SlotArity::Dynamic { max: None },
                };
                out.push(PlanSlot::Primitive {
                    path,
                    primitive: *primitive,
                    arity,
                });
            }
            LayoutKind::Message(inner) => match field.arity {
                Arity::Scalar => expand(inner, &path, out),
                Arity::Fixed(n) => {
                    for i in 0..n {
                        expand(inner, &path.index(i), out);
                    }
                }
                Arity::Bounded(_) | Arity::Unbounded => {
                    let mut slots = Vec::new();
                    expand(inner, &FieldPath::root(), &mut slots);
                    let min_element_bytes = slots.iter().map(PlanSlot::min_bytes).sum();
                    let max = match field.arity {
                        Arity::Bounded(m) => Some(m),
                        _ => None,
                    };
                    out.push(PlanSlot::Group {
                        path,
                        group: SlotGroup {
                            max,
                            slots,
                            element: inner.clone(),
                            min_element_bytes,
                        },
                    });
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgdef::resolve;

    fn reg(defs: &[(&str, &str)]) -> TypeRegistry {
        let mut r = TypeRegistry::new();
        for (n, t) in defs {
            r.add_source(n, t).unwrap();
        }
        resolve(r).unwrap()
    }

    fn tn(s: &str) -> TypeName {
        s.parse().unwrap()
    }

    fn paths(plan: &SerializationPlan) -> Vec<String> {
        plan.slots().iter().map(|s| s.path().to_string()).collect()
    }

    #[test]
    fn point_has_three_slots_of_24_bytes() {
        let r = reg(&[("geometry_msgs/Point", "float64 x\nfloat64 y\nfloat64 z")]);
        let plan = flatten(&r, &tn("geometry_msgs/Point")).unwrap();
        assert_eq!(paths(&plan), ["x", "y", "z"]);
        // 3 x float64
        assert_eq!(plan.fixed_size_bytes(), Some(3 * 8));
    }

    #[test]
    fn pose_with_quaternion_has_seven_slots() {
        let r = reg(&[
            ("geometry_msgs/Point", "float64 x\nfloat64 y\nfloat64 z"),
            ("geometry_msgs/Quaternion", "float64 x\nfloat64 y\nfloat64 z\nfloat64 w"),
            ("geometry_msgs/Pose", "Point position\nQuaternion orientation"),
        ]);
        let plan = flatten(&r, &tn("geometry_msgs/Pose")).unwrap();
        assert_eq!(
            paths(&plan),
            [
                "position.x",
                "position.y",
                "position.z",
                "orientation.x",
                "orientation.y",
                "orientation.z",
                "orientation.w"
            ]
        );
        assert_eq!(plan.fixed_size_bytes(), Some(7 * 8));
    }

    #[test]
    fn pose_with_fixed_float_array_keeps_one_fixed_slot() {
        let r = reg(&[
            ("geometry_msgs/Point", "float64 x\nfloat64 y\nfloat64 z"),
            ("pkg/Pose", "geometry_msgs/Point position\nfloat64[4] orientation"),
        ]);
        let plan = flatten(&r, &tn("pkg/Pose")).unwrap();
        assert_eq!(plan.slots().len(), 4);
        assert_eq!(
            plan.slots()[3],
            PlanSlot::Primitive {
                path: FieldPath::root().child("orientation"),
                primitive: Primitive::Float64,
                arity: SlotArity::Fixed { len: 4 }
            }
        );
        assert_eq!(plan.fixed_size_bytes(), Some(3 * 8 + 4 * 8));
    }

    #[test]
    fn unbounded_bytes_have_no_fixed_size() {
        let r = reg(&[("pkg/Blob", "uint8[] data")]);
        let plan = flatten(&r, &tn("pkg/Blob")).unwrap();
        assert_eq!(plan.slots().len(), 1);
        assert!(matches!(plan.slots()[0], PlanSlot::Primitive { arity: SlotArity::Dynamic { max: None }, .. }));
        assert_eq!(plan.fixed_size_bytes(), None);
    }

    #[test]
    fn strings_are_dynamic() {
        let r = reg(&[("pkg/S", "string s")]);
        assert_eq!(flatten(&r, &tn("pkg/S")).unwrap().fixed_size_bytes(), None);
    }

    #[test]
    fn fixed_nested_arrays_unroll_and_dynamic_ones_group() {
        let r = reg(&[
            ("pkg/P", "int16 a\nint16 b"),
            ("pkg/T", "P[2] fixed\nP[<=3] some\nuint8 tail"),
        ]);
        let plan = flatten(&r, &tn("pkg/T")).unwrap();
        assert_eq!(paths(&plan), ["fixed[0].a", "fixed[0].b", "fixed[1].a", "fixed[1].b", "some", "tail"]);
        let PlanSlot::Group { group, .. } = &plan.slots()[4] else { panic!() };
        assert_eq!(group.max, Some(3));
        assert_eq!(group.slots.len(), 2);
        assert_eq!(group.min_element_bytes, 4);
    }

    #[test]
    fn plan_json_shape() {
        let r = reg(&[("pkg/T", "int32 x\nuint8[<=4] b")]);
        let json = serde_json::to_value(flatten(&r, &tn("pkg/T")).unwrap()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "type_name": "pkg/T",
                "slots": [
                    {"path": "x", "primitive": "int32", "arity": {"kind": "scalar"}},
                    {"path": "b", "primitive": "uint8", "arity": {"kind": "dynamic", "max": 4}}
                ]
            })
        );
    }

    #[test]
    fn flatten_rejects_cycles_even_unresolved() {
        let mut r = TypeRegistry::new();
        r.add_source("pkg/A", "A a").unwrap();
        assert!(matches!(flatten(&r, &tn("pkg/A")), Err(MsgError::Cycle { .. })));
    }
}
