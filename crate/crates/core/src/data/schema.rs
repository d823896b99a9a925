use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Categorical,
    /// Several tokens joined by `delimiter`.
    MultiCategorical { delimiter: char },
    /// Integer values, discretized before lookup.
    Integer,
}

impl FieldKind {
    pub const DEFAULT_DELIMITER: char = '|';

    pub fn multi() -> Self {
        FieldKind::MultiCategorical {
            delimiter: Self::DEFAULT_DELIMITER,
        }
    }

    /// The short tag used in schema files.
    pub fn tag(&self) -> &'static str {
        match self {
            FieldKind::Categorical => "cat",
            FieldKind::MultiCategorical { .. } => "multi",
            FieldKind::Integer => "int",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "cat" => Some(FieldKind::Categorical),
            "multi" => Some(FieldKind::multi()),
            "int" => Some(FieldKind::Integer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
}

/// Ordered, uniquely named fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    fields: Vec<FieldSpec>,
}

impl FieldSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self, DataError> {
        if fields.is_empty() {
            return Err(DataError::NoFields);
        }
        let mut seen = BTreeSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(DataError::DuplicateField(f.name.clone()));
            }
        }
        Ok(Self { fields })
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    /// Number of fields, `m`.
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn spec(name: &str, kind: FieldKind) -> FieldSpec {
        FieldSpec {
            name: name.to_string(),
            kind,
        }
    }

    #[test]
    fn validates() {
        assert_eq!(FieldSchema::new(vec![]), Err(DataError::NoFields));
        let dup = FieldSchema::new(vec![spec("a", FieldKind::Categorical), spec("a", FieldKind::Integer)]);
        assert_eq!(dup, Err(DataError::DuplicateField("a".to_string())));
        let s = FieldSchema::new(vec![
            spec("gender", FieldKind::Categorical),
            spec("age", FieldKind::Integer),
            spec("genre", FieldKind::multi()),
        ])
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.position("genre"), Some(2));
    }

    #[test]
    fn tags_round_trip() {
        for k in [FieldKind::Categorical, FieldKind::multi(), FieldKind::Integer] {
            assert_eq!(FieldKind::from_tag(k.tag()), Some(k));
        }
        assert_eq!(FieldKind::from_tag("float"), None);
    }
}
