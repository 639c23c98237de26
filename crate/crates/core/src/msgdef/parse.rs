use super::{
    is_field_ident, Arity, ConstValue, ConstantDef, ElementType, FieldDef, MessageTypeDef, MsgError,
    Primitive, TypeName,
};

/// Parses the text of one `.msg` file into the definition of `type_name`.
///
/// Nested type references without a package are qualified with the package
/// of `type_name`, so the result only ever holds fully qualified names.
pub fn parse_msg_file(source_text: &str, type_name: &TypeName) -> Result<MessageTypeDef, MsgError> {
    let mut fields: Vec<FieldDef> = Vec::new();
    let mut constants: Vec<ConstantDef> = Vec::new();

    for (idx, raw) in source_text.lines().enumerate() {
        let line = idx + 1;
        let uncommented = strip_comment(raw);
        if uncommented.trim().is_empty() {
            continue;
        }

        if let Some(eq) = constant_eq(uncommented) {
            // String constants keep everything after `=`, including `#`.
            let head: Vec<&str> = raw[..eq].split_whitespace().collect();
            let [ty, name] = head.as_slice() else {
                return Err(syntax(line, "expected `<type> NAME=value`"));
            };
            let primitive = match Primitive::from_name(ty) {
                Some(p) => p,
                None if looks_primitive(ty) => {
                    return Err(MsgError::UnknownPrimitive {
                        line,
                        token: (*ty).to_owned(),
                    })
                }
                None => return Err(syntax(line, "constants must have a primitive type")),
            };
            if !is_field_ident(name) {
                return Err(syntax(line, &format!("invalid constant name `{name}`")));
            }
            if constants.iter().any(|c| c.name == *name) {
                return Err(syntax(line, &format!("duplicate constant `{name}`")));
            }
            let literal = if primitive == Primitive::String {
                raw[eq + 1..].trim()
            } else {
                uncommented[eq + 1..].trim()
            };
            let value = parse_literal(primitive, literal).ok_or_else(|| {
                syntax(line, &format!("invalid {primitive} literal `{literal}`"))
            })?;
            constants.push(ConstantDef {
                name: (*name).to_owned(),
                primitive,
                value,
            });
            continue;
        }

        let tokens: Vec<&str> = uncommented.split_whitespace().collect();
        match tokens.len() {
            2 => {}
            n if n > 2 => return Err(syntax(line, "default values are not supported")),
            _ => return Err(syntax(line, "expected `<type> <name>`")),
        }
        let (element, arity) = parse_type(tokens[0], type_name, line)?;
        let name = tokens[1];
        if !is_field_ident(name) {
            return Err(syntax(line, &format!("invalid field name `{name}`")));
        }
        if fields.iter().any(|f| f.name == name) {
            return Err(MsgError::DuplicateField {
                type_name: type_name.to_string(),
                field: name.to_owned(),
                line: Some(line),
            });
        }
        fields.push(FieldDef {
            name: name.to_owned(),
            element,
            arity,
        });
    }

    MessageTypeDef::with_constants(type_name.clone(), fields, constants)
}

/// Position of the `=` introducing a constant; `<=` belongs to array bounds.
fn constant_eq(line: &str) -> Option<usize> {
    line.match_indices('=').map(|(i, _)| i).find(|&i| i == 0 || line.as_bytes()[i - 1] != b'<')
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn syntax(line: usize, message: &str) -> MsgError {
    MsgError::Syntax {
        line,
        message: message.to_owned(),
    }
}

/// Bare lowercase names can only ever be builtins; `pkg/Name` and `Name`
/// are message references.
fn looks_primitive(token: &str) -> bool {
    !token.contains('/') && token.starts_with(|c: char| c.is_ascii_lowercase())
}

fn parse_type(token: &str, owner: &TypeName, line: usize) -> Result<(ElementType, Arity), MsgError> {
    let (base, arity) = match token.find('[') {
        None => (token, Arity::Scalar),
        Some(open) => {
            let Some(inner) = token[open + 1..].strip_suffix(']') else {
                return Err(syntax(line, &format!("malformed array type `{token}`")));
            };
            let arity = if inner.is_empty() {
                Arity::Unbounded
            } else if let Some(bound) = inner.strip_prefix("<=") {
                Arity::Bounded(parse_len(bound, token, line)?)
            } else {
                Arity::Fixed(parse_len(inner, token, line)?)
            };
            (&token[..open], arity)
        }
    };

    if base.contains("<=") {
        return Err(syntax(line, "bounded strings are not supported"));
    }
    if let Some(p) = Primitive::from_name(base) {
        return Ok((ElementType::Primitive(p), arity));
    }
    if looks_primitive(base) {
        return Err(MsgError::UnknownPrimitive {
            line,
            token: base.to_owned(),
        });
    }
    let nested = if base.contains('/') {
        base.parse::<TypeName>()
    } else {
        TypeName::new(owner.package(), base)
    }
    .map_err(|_| syntax(line, &format!("invalid type `{base}`")))?;
    Ok((ElementType::Nested(nested), arity))
}

fn parse_len(text: &str, token: &str, line: usize) -> Result<usize, MsgError> {
    match text.parse::<usize>() {
        Ok(0) => Err(syntax(line, &format!("array length must be at least 1 in `{token}`"))),
        Ok(n) => Ok(n),
        Err(_) => Err(syntax(line, &format!("invalid array length in `{token}`"))),
    }
}

fn parse_literal(primitive: Primitive, text: &str) -> Option<ConstValue> {
    let int_range = |lo: i64, hi: i64| text.parse::<i64>().ok().filter(|v| (lo..=hi).contains(v)).map(ConstValue::Int);
    let uint_range = |hi: u64| text.parse::<u64>().ok().filter(|v| *v <= hi).map(ConstValue::UInt);
    match primitive {
        Primitive::Bool => match text {
            "true" | "True" | "1" => Some(ConstValue::Bool(true)),
            "false" | "False" | "0" => Some(ConstValue::Bool(false)),
            _ => None,
        },
        Primitive::Int8 => int_range(i8::MIN.into(), i8::MAX.into()),
        Primitive::Int16 => int_range(i16::MIN.into(), i16::MAX.into()),
        Primitive::Int32 => int_range(i32::MIN.into(), i32::MAX.into()),
        Primitive::Int64 => int_range(i64::MIN, i64::MAX),
        Primitive::Uint8 => uint_range(u8::MAX.into()),
        Primitive::Uint16 => uint_range(u16::MAX.into()),
        Primitive::Uint32 => uint_range(u32::MAX.into()),
        Primitive::Uint64 => uint_range(u64::MAX),
        Primitive::Float32 | Primitive::Float64 => text.parse::<f64>().ok().map(ConstValue::Float),
        Primitive::String => {
            let unquoted = text
                .strip_prefix('"')
                .and_then(|t| t.strip_suffix('"'))
                .or_else(|| text.strip_prefix('\'').and_then(|t| t.strip_suffix('\'')))
                .unwrap_or(text);
            Some(ConstValue::String(unquoted.to_owned()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tn(s: &str) -> TypeName {
        s.parse().unwrap()
    }

    #[test]
    fn single_field() {
        let def = parse_msg_file("int32 x", &tn("pkg/T")).unwrap();
        assert_eq!(def.fields().len(), 1);
        assert_eq!(def.fields()[0].name(), "x");
        assert_eq!(def.fields()[0].element(), &ElementType::Primitive(Primitive::Int32));
        assert_eq!(def.fields()[0].arity(), Arity::Scalar);
    }

    #[test]
    fn empty_file_is_empty_message() {
        let def = parse_msg_file("", &tn("std_msgs/Empty")).unwrap();
        assert!(def.fields().is_empty());
        let def = parse_msg_file("# only a comment\n\n", &tn("std_msgs/Empty")).unwrap();
        assert!(def.fields().is_empty());
    }

    #[test]
    fn point_matches_common_interfaces_definition() {
        // geometry_msgs/msg/Point.msg from common_interfaces, comments included.
        let text = "# This contains the position of a point in free space\nfloat64 x\nfloat64 y\nfloat64 z\n";
        let def = parse_msg_file(text, &tn("geometry_msgs/Point")).unwrap();
        let names: Vec<_> = def.fields().iter().map(|f| f.name()).collect();
        assert_eq!(names, ["x", "y", "z"]);
        assert!(def
            .fields()
            .iter()
            .all(|f| f.element() == &ElementType::Primitive(Primitive::Float64) && f.arity() == Arity::Scalar));
    }

    #[test]
    fn array_suffixes_and_nested_names() {
        let text = "uint8[] data\nint16[4] quad\nfloat32[<=8] bounded\nPoint p\ngeometry_msgs/Point[2] q\nstring[] names";
        let def = parse_msg_file(text, &tn("geometry_msgs/Thing")).unwrap();
        let f = def.fields();
        assert_eq!(f[0].arity(), Arity::Unbounded);
        assert_eq!(f[1].arity(), Arity::Fixed(4));
        assert_eq!(f[2].arity(), Arity::Bounded(8));
        assert_eq!(f[3].element(), &ElementType::Nested(tn("geometry_msgs/Point")));
        assert_eq!(f[4].element(), &ElementType::Nested(tn("geometry_msgs/Point")));
        assert_eq!(f[4].arity(), Arity::Fixed(2));
        assert_eq!(f[5].element(), &ElementType::Primitive(Primitive::String));
    }

    #[test]
    fn constants_are_parsed_not_fields() {
        let text = "int32 MAX=10\nstring GREETING=\"hi # there\"\nbool FLAG=true # comment\nint32 x";
        let def = parse_msg_file(text, &tn("pkg/T")).unwrap();
        assert_eq!(def.fields().len(), 1);
        assert_eq!(def.constants().len(), 3);
        assert_eq!(def.constants()[0].value, ConstValue::Int(10));
        assert_eq!(def.constants()[1].value, ConstValue::String("hi # there".into()));
        assert_eq!(def.constants()[2].value, ConstValue::Bool(true));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_msg_file("int32 x\nint32\n", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::Syntax { line: 2, .. }), "{err}");
        let err = parse_msg_file("int32 x 5", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::Syntax { line: 1, .. }));
        let err = parse_msg_file("int32[0] x", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::Syntax { line: 1, .. }));
        let err = parse_msg_file("int8 C=300", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::Syntax { line: 1, .. }));
    }

    #[test]
    fn duplicate_field_reports_line() {
        let err = parse_msg_file("int32 x\nfloat64 x", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::DuplicateField { line: Some(2), .. }));
    }

    #[test]
    fn reserved_word_collisions() {
        for bad in ["int33 x", "float16 x", "wstring x", "uint128[] x", "boolean x"] {
            let err = parse_msg_file(bad, &tn("pkg/T")).unwrap_err();
            assert!(matches!(err, MsgError::UnknownPrimitive { line: 1, .. }), "{bad}: {err}");
        }
        let err = parse_msg_file("string<=5 s", &tn("pkg/T")).unwrap_err();
        assert!(matches!(err, MsgError::Syntax { .. }));
    }
}
