use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::transform::{discretize_integer, parse_integer};
use super::{DataError, FieldKind, FieldSchema, FieldSpec, Record};

/// Local id of every field's out-of-vocabulary bucket.
pub const UNKNOWN_ID: u32 = 0;

/// Active global feature ids per field plus the label.
///
/// Ids within a field are sorted and unique. They index rows of the shared
/// embedding table directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub fields: Vec<Vec<u32>>,
    pub label: u8,
}

impl EncodedInstance {
    pub fn label_f64(&self) -> f64 {
        f64::from(self.label)
    }
}

/// Splits a raw cell into lookup tokens for its field kind.
fn field_tokens(spec: &FieldSpec, raw: &str) -> Result<Vec<String>, DataError> {
    Ok(match spec.kind {
        FieldKind::Categorical => {
            if raw.is_empty() {
                Vec::new()
            } else {
                vec![raw.to_string()]
            }
        }
        FieldKind::MultiCategorical { delimiter } => {
            let mut toks: Vec<String> = raw
                .split(delimiter)
                .filter(|t| !t.is_empty())
                .map(ToString::to_string)
                .collect();
            toks.sort();
            toks.dedup();
            toks
        }
        FieldKind::Integer => vec![discretize_integer(parse_integer(&spec.name, raw)?)],
    })
}

fn check_arity(schema: &FieldSchema, fields: &[String]) -> Result<(), DataError> {
    if fields.len() != schema.len() {
        return Err(DataError::ArityMismatch {
            expected: schema.len(),
            found: fields.len(),
        });
    }
    Ok(())
}

/// Token table of one field. Local id 0 is the unknown bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldVocab {
    ids: BTreeMap<String, u32>,
    tokens: Vec<String>,
}

impl FieldVocab {
    /// Count of ids including the unknown bucket.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    /// Known tokens with their local ids, in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u32)> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32 + 1))
    }
}

/// Collects token frequencies in first-appearance order.
#[derive(Debug, Clone)]
pub struct VocabularyBuilder<'s> {
    schema: &'s FieldSchema,
    counts: Vec<BTreeMap<String, (usize, usize)>>,
    seen: usize,
}

impl<'s> VocabularyBuilder<'s> {
    pub fn new(schema: &'s FieldSchema) -> Self {
        Self {
            schema,
            counts: vec![BTreeMap::new(); schema.len()],
            seen: 0,
        }
    }

    pub fn observe(&mut self, fields: &[String]) -> Result<(), DataError> {
        check_arity(self.schema, fields)?;
        for ((spec, raw), counts) in self.schema.fields().iter().zip(fields).zip(&mut self.counts) {
            for tok in field_tokens(spec, raw)? {
                let order = self.seen;
                let entry = counts.entry(tok).or_insert((0, order));
                if entry.0 == 0 {
                    self.seen += 1;
                }
                entry.0 += 1;
            }
        }
        Ok(())
    }

    /// Tokens seen fewer than `min_freq` times fall into the unknown bucket.
    pub fn finish(self, min_freq: usize) -> Vocabulary {
        let fields = self
            .counts
            .into_iter()
            .map(|counts| {
                let mut kept: Vec<(usize, String)> = counts
                    .into_iter()
                    .filter(|(_, (c, _))| *c >= min_freq)
                    .map(|(t, (_, order))| (order, t))
                    .collect();
                kept.sort();
                let tokens: Vec<String> = kept.into_iter().map(|(_, t)| t).collect();
                let ids = tokens
                    .iter()
                    .enumerate()
                    .map(|(i, t)| (t.clone(), i as u32 + 1))
                    .collect();
                FieldVocab { ids, tokens }
            })
            .collect();
        Vocabulary::assemble(self.schema, fields, min_freq)
    }
}

/// Per-field token tables with disjoint global id ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<String>,
    fields: Vec<FieldVocab>,
    offsets: Vec<usize>,
    min_freq: usize,
}

impl Vocabulary {
    pub fn build(records: &[Record], schema: &FieldSchema, min_freq: usize) -> Result<Self, DataError> {
        let mut b = VocabularyBuilder::new(schema);
        for r in records {
            b.observe(&r.fields)?;
        }
        Ok(b.finish(min_freq))
    }

    fn assemble(schema: &FieldSchema, fields: Vec<FieldVocab>, min_freq: usize) -> Self {
        let mut offsets = Vec::with_capacity(fields.len());
        let mut next = 0;
        for f in &fields {
            offsets.push(next);
            next += f.size();
        }
        Self {
            names: schema.fields().iter().map(|f| f.name.clone()).collect(),
            fields,
            offsets,
            min_freq,
        }
    }

    /// Rebuilds a vocabulary from `(token, local id)` lists per field. Local
    /// ids must be exactly `1..=n`.
    pub fn from_entries(
        schema: &FieldSchema,
        entries: Vec<Vec<(String, u32)>>,
        min_freq: usize,
    ) -> Result<Self, DataError> {
        if entries.len() != schema.len() {
            return Err(DataError::ArityMismatch {
                expected: schema.len(),
                found: entries.len(),
            });
        }
        let mut fields = Vec::with_capacity(entries.len());
        for (spec, mut list) in schema.fields().iter().zip(entries) {
            list.sort_by_key(|(_, id)| *id);
            let mut ids = BTreeMap::new();
            let mut tokens = Vec::with_capacity(list.len());
            for (expected, (tok, id)) in (1u32..).zip(list) {
                if id != expected {
                    return Err(DataError::InvalidVocabulary {
                        field: spec.name.clone(),
                        detail: alloc::format!("ids are not dense: expected {expected}, found {id}"),
                    });
                }
                if ids.insert(tok.clone(), id).is_some() {
                    return Err(DataError::InvalidVocabulary {
                        field: spec.name.clone(),
                        detail: alloc::format!("token `{tok}` listed twice"),
                    });
                }
                tokens.push(tok);
            }
            fields.push(FieldVocab { ids, tokens });
        }
        Ok(Self::assemble(schema, fields, min_freq))
    }

    pub fn field(&self, f: usize) -> &FieldVocab {
        &self.fields[f]
    }

    pub fn field_name(&self, f: usize) -> &str {
        &self.names[f]
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn field_sizes(&self) -> Vec<usize> {
        self.fields.iter().map(FieldVocab::size).collect()
    }

    /// Size of the global id space.
    pub fn total_size(&self) -> usize {
        self.fields.iter().map(FieldVocab::size).sum()
    }

    pub fn offset(&self, f: usize) -> usize {
        self.offsets[f]
    }

    pub fn global_id(&self, f: usize, local: u32) -> u32 {
        (self.offsets[f] + local as usize) as u32
    }

    /// Maps a raw record to active ids. Tokens not in the vocabulary, and
    /// empty cells, use the field's unknown bucket.
    pub fn encode(&self, record: &Record, schema: &FieldSchema) -> Result<EncodedInstance, DataError> {
        check_arity(schema, &record.fields)?;
        let mut fields = Vec::with_capacity(schema.len());
        for (f, (spec, raw)) in schema.fields().iter().zip(&record.fields).enumerate() {
            let mut ids: Vec<u32> = field_tokens(spec, raw)?
                .iter()
                .map(|t| self.global_id(f, self.fields[f].lookup(t)))
                .collect();
            if ids.is_empty() {
                ids.push(self.global_id(f, UNKNOWN_ID));
            }
            ids.sort_unstable();
            ids.dedup();
            fields.push(ids);
        }
        Ok(EncodedInstance {
            fields,
            label: record.label,
        })
    }

    /// Checks that every id of `inst` lies in its field's global range.
    pub fn validate(&self, inst: &EncodedInstance) -> Result<(), DataError> {
        if inst.fields.len() != self.fields.len() {
            return Err(DataError::ArityMismatch {
                expected: self.fields.len(),
                found: inst.fields.len(),
            });
        }
        for (f, ids) in inst.fields.iter().enumerate() {
            let lo = self.offsets[f];
            let hi = lo + self.fields[f].size();
            for &id in ids {
                if (id as usize) < lo || (id as usize) >= hi {
                    return Err(DataError::IdOutOfRange { field: f, id });
                }
            }
        }
        Ok(())
    }
}
