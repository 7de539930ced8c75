use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::DataError;

/// Semantic class identifier (the low 16 bits of a SemanticKITTI label).
pub type ClassId = u16;

/// Ordered set of semantic classes with an optional id remap table.
///
/// The remap table is applied to raw label ids before validation, which lets
/// e.g. SemanticKITTI `moving-car` (252) merge into `car` (10).
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSchema {
    classes: Vec<(ClassId, String)>,
    by_id: HashMap<ClassId, usize>,
    by_name: HashMap<String, usize>,
    remap: BTreeMap<ClassId, ClassId>,
}

impl SemanticSchema {
    pub fn new(classes: Vec<(ClassId, String)>) -> Result<Self, DataError> {
        Self::with_remap(classes, BTreeMap::new())
    }

    pub fn with_remap(classes: Vec<(ClassId, String)>, remap: BTreeMap<ClassId, ClassId>) -> Result<Self, DataError> {
        if classes.len() < 2 {
            return Err(DataError::Schema(format!(
                "schema needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(classes.len());
        let mut by_name = HashMap::with_capacity(classes.len());
        for (pos, (id, name)) in classes.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(DataError::Schema(format!("class {id} has an invalid name {name:?}")));
            }
            if by_id.insert(*id, pos).is_some() {
                return Err(DataError::Schema(format!("duplicate class id {id}")));
            }
            if by_name.insert(name.clone(), pos).is_some() {
                return Err(DataError::Schema(format!("duplicate class name {name:?}")));
            }
        }
        for (from, to) in &remap {
            if !by_id.contains_key(to) {
                return Err(DataError::Schema(format!(
                    "remap {from} -> {to} targets an unknown class"
                )));
            }
        }
        Ok(Self {
            classes,
            by_id,
            by_name,
            remap,
        })
    }

    /// Parses the text schema format.
    ///
    /// One `<id> <name>` pair per line; `remap <from> <to>` lines add remap
    /// entries; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut classes = Vec::new();
        let mut remap = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| DataError::Schema(format!("line {}: {what}: {raw:?}", lineno + 1));
            match fields.as_slice() {
                ["remap", from, to] => {
                    let from: ClassId = from.parse().map_err(|_| bad("bad remap source"))?;
                    let to: ClassId = to.parse().map_err(|_| bad("bad remap target"))?;
                    remap.insert(from, to);
                }
                [id, name] => {
                    let id: ClassId = id.parse().map_err(|_| bad("bad class id"))?;
                    classes.push((id, (*name).to_string()));
                }
                _ => return Err(bad("expected `<id> <name>` or `remap <from> <to>`")),
            }
        }
        Self::with_remap(classes, remap)
    }

    pub fn from_file(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, name) in &self.classes {
            out.push_str(&format!("{id} {name}\n"));
        }
        for (from, to) in &self.remap {
            out.push_str(&format!("remap {from} {to}\n"));
        }
        out
    }

    /// The SemanticKITTI label set, with every `moving-*` id merged into its
    /// static counterpart.
    pub fn semantic_kitti() -> Self {
        let classes = [
            (0, "unlabeled"),
            (1, "outlier"),
            (10, "car"),
            (11, "bicycle"),
            (13, "bus"),
            (15, "motorcycle"),
            (16, "on-rails"),
            (18, "truck"),
            (20, "other-vehicle"),
            (30, "person"),
            (31, "bicyclist"),
            (32, "motorcyclist"),
            (40, "road"),
            (44, "parking"),
            (48, "sidewalk"),
            (49, "other-ground"),
            (50, "building"),
            (51, "fence"),
            (52, "other-structure"),
            (60, "lane-marking"),
            (70, "vegetation"),
            (71, "trunk"),
            (72, "terrain"),
            (80, "pole"),
            (81, "traffic-sign"),
            (99, "other-object"),
        ]
        .into_iter()
        .map(|(id, name)| (id, name.to_string()))
        .collect();
        let remap = [
            (252, 10),
            (253, 31),
            (254, 30),
            (255, 32),
            (256, 16),
            (257, 13),
            (258, 18),
            (259, 20),
        ]
        .into_iter()
        .collect();
        Self::with_remap(classes, remap).expect("built-in schema is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[(ClassId, String)] {
        &self.classes
    }

    pub fn remap_table(&self) -> &BTreeMap<ClassId, ClassId> {
        &self.remap
    }

    /// Position of `id` in schema order; this is the one-hot slot.
    pub fn index_of(&self, id: ClassId) -> Option<usize> {
        self.by_id.get(&id).copied()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn name_of(&self, id: ClassId) -> Option<&str> {
        self.index_of(id).map(|pos| self.classes[pos].1.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<ClassId> {
        self.by_name.get(name).map(|&pos| self.classes[pos].0)
    }

    /// Applies the remap table; ids without an entry pass through.
    pub fn remap(&self, id: ClassId) -> ClassId {
        self.remap.get(&id).copied().unwrap_or(id)
    }
}
