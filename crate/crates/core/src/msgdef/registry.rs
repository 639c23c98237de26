use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{parse_msg_file, MessageTypeDef, MsgError, TypeName};

/// All known message types, keyed by fully qualified name.
#[derive(Debug, Clone, Default)]
pub struct TypeRegistry {
    types: BTreeMap<TypeName, MessageTypeDef>,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a definition, returning the one it replaced.
    pub fn insert(&mut self, def: MessageTypeDef) -> Option<MessageTypeDef> {
        self.types.insert(def.type_name().clone(), def)
    }

    /// Parses `source_text` as `type_name` and registers it.
    pub fn add_source(&mut self, type_name: &str, source_text: &str) -> Result<&MessageTypeDef, MsgError> {
        let name: TypeName = type_name.parse()?;
        let def = parse_msg_file(source_text, &name)?;
        self.types.insert(name.clone(), def);
        Ok(&self.types[&name])
    }

    pub fn get(&self, name: &TypeName) -> Option<&MessageTypeDef> {
        self.types.get(name)
    }

    pub fn contains(&self, name: &TypeName) -> bool {
        self.types.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MessageTypeDef> {
        self.types.values()
    }

    pub(crate) fn require(&self, name: &TypeName) -> Result<&MessageTypeDef, MsgError> {
        self.get(name).ok_or_else(|| MsgError::UnknownType(name.clone()))
    }
}

/// Checks that every nested reference resolves and that nesting is acyclic.
///
/// Types are visited in name order, so the reported cycle is deterministic:
/// it starts at the smallest type name that lies on a cycle reachable from
/// the first offending root.
pub fn resolve(registry: TypeRegistry) -> Result<TypeRegistry, MsgError> {
    for def in registry.iter() {
        for (field, target) in def.nested_refs() {
            if !registry.contains(target) {
                return Err(MsgError::Unresolved {
                    referrer: def.type_name().clone(),
                    field: field.name().to_owned(),
                    missing: target.clone(),
                });
            }
        }
    }

    let mut state: HashMap<&TypeName, Visit> = HashMap::new();
    for name in registry.types.keys() {
        let mut stack = Vec::new();
        check_acyclic(&registry, name, &mut state, &mut stack)?;
    }
    Ok(registry)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Visit {
    Active,
    Done,
}

pub(crate) fn check_acyclic<'a>(
    registry: &'a TypeRegistry,
    name: &'a TypeName,
    state: &mut HashMap<&'a TypeName, Visit>,
    stack: &mut Vec<&'a TypeName>,
) -> Result<(), MsgError> {
    match state.get(name) {
        Some(Visit::Done) => return Ok(()),
        Some(Visit::Active) => {
            let start = stack.iter().position(|t| *t == name).unwrap_or(0);
            let mut path: Vec<TypeName> = stack[start..].iter().map(|t| (*t).clone()).collect();
            path.push(name.clone());
            return Err(MsgError::Cycle { path });
        }
        None => {}
    }
    let def = registry.require(name)?;
    state.insert(name, Visit::Active);
    stack.push(name);
    for (_, target) in def.nested_refs() {
        check_acyclic(registry, target, state, stack)?;
    }
    stack.pop();
    state.insert(name, Visit::Done);
    Ok(())
}

/// Loads every `<root>/<pkg>/msg/<Name>.msg` file into a registry.
///
/// The registry is returned unresolved; call [`resolve`] before flattening.
pub fn load_msg_dir(root: &Path) -> Result<TypeRegistry, MsgError> {
    let io = |path: &Path, source| MsgError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut registry = TypeRegistry::new();
    let mut packages: Vec<_> = fs::read_dir(root)
        .map_err(|e| io(root, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("msg").is_dir())
        .collect();
    packages.sort();

    for pkg_dir in packages {
        let pkg = pkg_dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        let msg_dir = pkg_dir.join("msg");
        let mut files: Vec<_> = fs::read_dir(&msg_dir)
            .map_err(|e| io(&msg_dir, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|ext| ext == "msg"))
            .collect();
        files.sort();
        for file in files {
            let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let text = fs::read_to_string(&file).map_err(|e| io(&file, e))?;
            let in_file = |source: MsgError| MsgError::InFile {
                path: file.display().to_string(),
                source: Box::new(source),
            };
            let name = TypeName::new(&pkg, stem).map_err(in_file)?;
            let def = parse_msg_file(&text, &name).map_err(in_file)?;
            registry.insert(def);
        }
    }
    Ok(registry)
}
