//! Text formats: schema, data and vocabulary files.
//!
//! * schema: one field per line, `name<TAB>kind`, kind one of `cat`,
//!   `multi` or `int`; `multi` takes an optional third column holding its
//!   delimiter (default `|`).
//! * data: one record per line, `label<TAB>field_1<TAB>...<TAB>field_m`.
//!   With [`LabelFormat::Rating`] the first column is a 1..5 rating that is
//!   binarized, and rating-3 rows are dropped.
//! * vocabulary: `field<TAB>token<TAB>local_id`, ids dense from 1 within each
//!   field. The unknown bucket (id 0) is implicit.
//!
//! Blank lines and lines starting with `#` are ignored in schema and
//! vocabulary files.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use dexfm_core::data::{binarize_rating, FieldSpec};
use dexfm_core::{FieldKind, FieldSchema, Record, Vocabulary};

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelFormat {
    /// `0` or `1`.
    #[default]
    Binary,
    /// An explicit 1..5 rating.
    Rating,
}

impl FromStr for LabelFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "binary" => Ok(LabelFormat::Binary),
            "rating" => Ok(LabelFormat::Rating),
            _ => Err(format!("unknown label format `{s}` (expected binary or rating)")),
        }
    }
}

impl std::fmt::Display for LabelFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelFormat::Binary => "binary",
            LabelFormat::Rating => "rating",
        })
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn parse_schema(text: &str, path: &Path) -> Result<FieldSchema> {
    let mut fields = Vec::new();
    for (line, l) in content_lines(text) {
        let cols: Vec<&str> = l.split('\t').collect();
        let kind = match cols.as_slice() {
            [_, tag] => FieldKind::from_tag(tag),
            [_, "multi", delim] => {
                let mut chars = delim.chars();
                match (chars.next(), chars.next()) {
                    (Some(d), None) if d != '\t' => Some(FieldKind::MultiCategorical { delimiter: d }),
                    _ => return Err(Error::parse(path, line, "delimiter must be a single character")),
                }
            }
            _ => return Err(Error::parse(path, line, "expected `name<TAB>kind`")),
        };
        let kind = kind.ok_or_else(|| Error::parse(path, line, format!("unknown field kind `{}`", cols[1])))?;
        if cols[0].is_empty() {
            return Err(Error::parse(path, line, "empty field name"));
        }
        fields.push(FieldSpec {
            name: cols[0].to_string(),
            kind,
        });
    }
    FieldSchema::new(fields).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn format_schema(schema: &FieldSchema) -> String {
    let mut out = String::new();
    for f in schema.fields() {
        match f.kind {
            FieldKind::MultiCategorical { delimiter } if delimiter != FieldKind::DEFAULT_DELIMITER => {
                writeln!(out, "{}\tmulti\t{delimiter}", f.name).unwrap();
            }
            kind => writeln!(out, "{}\t{}", f.name, kind.tag()).unwrap(),
        }
    }
    out
}

pub fn load_schema(path: &Path) -> Result<FieldSchema> {
    parse_schema(&read_to_string(path)?, path)
}

pub fn parse_records(text: &str, schema: &FieldSchema, labels: LabelFormat, path: &Path) -> Result<Vec<Record>> {
    let m = schema.len();
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        let l = l.trim_end_matches('\r');
        if l.is_empty() {
            continue;
        }
        let mut cols = l.split('\t');
        let head = cols.next().unwrap_or_default().trim();
        let fields: Vec<String> = cols.map(str::to_string).collect();
        if fields.len() != m {
            return Err(Error::parse(path, line, format!("expected {} columns, found {}", m + 1, fields.len() + 1)));
        }
        let label = match labels {
            LabelFormat::Binary => match head {
                "0" => 0,
                "1" => 1,
                _ => return Err(Error::parse(path, line, format!("label `{head}` is not 0 or 1"))),
            },
            LabelFormat::Rating => {
                let r: i64 = head
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("rating `{head}` is not an integer")))?;
                match binarize_rating(r).map_err(|e| Error::parse(path, line, e.to_string()))? {
                    Some(label) => label,
                    None => continue,
                }
            }
        };
        out.push(Record { label, fields });
    }
    Ok(out)
}

pub fn format_records(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(if r.label == 0 { "0" } else { "1" });
        for f in &r.fields {
            out.push('\t');
            out.push_str(f);
        }
        out.push('\n');
    }
    out
}

pub fn load_records(path: &Path, schema: &FieldSchema, labels: LabelFormat) -> Result<Vec<Record>> {
    parse_records(&read_to_string(path)?, schema, labels, path)
}

pub fn format_vocabulary(vocab: &Vocabulary) -> String {
    let mut out = format!("# min_freq={}\n", vocab.min_freq());
    for f in 0..vocab.num_fields() {
        for (token, id) in vocab.field(f).entries() {
            writeln!(out, "{}\t{token}\t{id}", vocab.field_name(f)).unwrap();
        }
    }
    out
}

pub fn parse_vocabulary(text: &str, schema: &FieldSchema, path: &Path) -> Result<Vocabulary> {
    let min_freq = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# min_freq="))
        .map(|v| v.trim().parse::<usize>())
        .transpose()
        .map_err(|_| Error::parse(path, 1, "bad min_freq header"))?
        .unwrap_or(0);
    let mut entries: Vec<Vec<(String, u32)>> = vec![Vec::new(); schema.len()];
    for (line, l) in content_lines(text) {
        let [field, token, id] = l.split('\t').collect::<Vec<_>>()[..] else {
            return Err(Error::parse(path, line, "expected `field<TAB>token<TAB>id`"));
        };
        let f = schema
            .position(field)
            .ok_or_else(|| Error::parse(path, line, format!("unknown field `{field}`")))?;
        let id = id
            .parse::<u32>()
            .map_err(|_| Error::parse(path, line, format!("id `{id}` is not a number")))?;
        entries[f].push((token.to_string(), id));
    }
    Vocabulary::from_entries(schema, entries, min_freq).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn load_vocabulary(path: &Path, schema: &FieldSchema) -> Result<Vocabulary> {
    parse_vocabulary(&read_to_string(path)?, schema, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn schema_round_trip() {
        let text = "user\tcat\nage\tint\ngenre\tmulti\ntags\tmulti\t;\n";
        let s = parse_schema(text, p()).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.fields()[3].kind, FieldKind::MultiCategorical { delimiter: ';' });
        assert_eq!(format_schema(&s), text);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let e = parse_schema("a\tcat\n\nb\tfloat\n", p()).unwrap_err();
        assert!(e.to_string().contains("mem:3"), "{e}");
        assert!(parse_schema("", p()).unwrap_err().to_string().contains("no fields"));
        assert!(parse_schema("a\tcat\na\tint\n", p()).is_err());
    }

    #[test]
    fn rating_rows() {
        let s = parse_schema("u\tcat\n", p()).unwrap();
        let recs = parse_records("5\ta\n3\tb\n1\tc\n", &s, LabelFormat::Rating, p()).unwrap();
        assert_eq!(recs.iter().map(|r| r.label).collect::<Vec<_>>(), vec![1, 0]);
        assert!(parse_records("6\ta\n", &s, LabelFormat::Rating, p()).is_err());
        let e = parse_records("1\ta\n1\ta\tb\n", &s, LabelFormat::Binary, p()).unwrap_err();
        assert!(e.to_string().contains("mem:2"), "{e}");
    }
}
