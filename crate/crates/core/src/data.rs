//! Tabular data model: records, tables, and natural-language predicates.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

/// Exact text appended to every rendered prompt so completions are parseable.
pub const ANSWER_SUFFIX: &str = "Answer with exactly one word: True or False.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("duplicate record id {id} (records {first} and {second})")]
    DuplicateId { id: u64, first: usize, second: usize },
    #[error("record {id} has no column {column:?}")]
    MissingColumn { id: u64, column: String },
    #[error("template placeholder {column:?} is not a known column")]
    UnknownPlaceholder { column: String },
    #[error("unclosed '{{' in template at byte {at}")]
    UnclosedPlaceholder { at: usize },
    #[error("empty placeholder '{{}}' in template at byte {at}")]
    EmptyPlaceholder { at: usize },
}

/// One row: a stable 64-bit id plus named UTF-8 text columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub id: u64,
    pub columns: BTreeMap<String, String>,
}

impl Record {
    pub fn new(id: u64) -> Self {
        Record { id, columns: BTreeMap::new() }
    }

    pub fn with_column(mut self, name: &str, value: &str) -> Self {
        self.columns.insert(name.to_owned(), value.to_owned());
        self
    }

    pub fn column(&self, name: &str) -> Option<&str> {
        self.columns.get(name).map(String::as_str)
    }
}

/// An ordered collection of records with pairwise-distinct ids.
///
/// Iteration order is insertion order and is stable across runs; lookups by id
/// go through an index built at construction.
#[derive(Debug, Clone, Default)]
pub struct Table {
    schema: Vec<String>,
    records: Vec<Record>,
    index: BTreeMap<u64, usize>,
}

impl Table {
    /// Builds a table, rejecting duplicate ids. The error names the positions
    /// (0-based) of the first occurrence and the offending record.
    pub fn new(schema: Vec<String>, records: Vec<Record>) -> Result<Self, DataError> {
        let mut index = BTreeMap::new();
        for (pos, rec) in records.iter().enumerate() {
            if let Some(&first) = index.get(&rec.id) {
                return Err(DataError::DuplicateId { id: rec.id, first, second: pos });
            }
            index.insert(rec.id, pos);
        }
        Ok(Table { schema, records, index })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn get(&self, id: u64) -> Option<&Record> {
        self.index.get(&id).map(|&i| &self.records[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.records.iter().map(|r| r.id)
    }

    pub fn id_set(&self) -> BTreeSet<u64> {
        self.ids().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A natural-language filter predicate: a template with `{column}`
/// placeholders plus an optional instruction preamble.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    template: String,
    instruction: Option<String>,
    referenced_columns: Vec<String>,
}

impl Predicate {
    /// Parses the template, deriving the referenced columns in order of first
    /// appearance. `{{`/`}}` are not an escape syntax; braces only delimit
    /// placeholders.
    pub fn new(template: &str, instruction: Option<&str>) -> Result<Self, DataError> {
        let referenced_columns = parse_placeholders(template)?;
        Ok(Predicate {
            template: template.to_owned(),
            instruction: instruction.map(str::to_owned),
            referenced_columns,
        })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn instruction(&self) -> Option<&str> {
        self.instruction.as_deref()
    }

    /// Columns the template references, in order of first appearance.
    pub fn referenced_columns(&self) -> &[String] {
        &self.referenced_columns
    }

    /// Errors unless every placeholder names a column of `table`'s schema.
    pub fn validate_against(&self, table: &Table) -> Result<(), DataError> {
        for col in &self.referenced_columns {
            if !table.schema().iter().any(|c| c == col) {
                return Err(DataError::UnknownPlaceholder { column: col.clone() });
            }
        }
        Ok(())
    }

    /// Renders the oracle prompt for one record. Pure: identical inputs yield
    /// identical bytes. Layout is instruction (if any), the substituted
    /// template, and [`ANSWER_SUFFIX`], joined by single newlines.
    pub fn render(&self, record: &Record) -> Result<String, DataError> {
        let mut body = String::with_capacity(self.template.len());
        let mut rest = self.template.as_str();
        while let Some(open) = rest.find('{') {
            body.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            // parse_placeholders already rejected malformed templates
            let close = after.find('}').expect("validated template");
            let name = &after[..close];
            match record.column(name) {
                Some(v) => body.push_str(v),
                None => {
                    return Err(DataError::MissingColumn {
                        id: record.id,
                        column: name.to_owned(),
                    })
                }
            }
            rest = &after[close + 1..];
        }
        body.push_str(rest);

        let mut prompt = String::new();
        if let Some(instr) = &self.instruction {
            prompt.push_str(instr);
            prompt.push('\n');
        }
        prompt.push_str(&body);
        prompt.push('\n');
        prompt.push_str(ANSWER_SUFFIX);
        Ok(prompt)
    }

    /// Canonical text identifying this predicate, used for cache keys. The
    /// unit separator keeps (instruction, template) pairs unambiguous.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        if let Some(instr) = &self.instruction {
            s.push_str(instr);
        }
        s.push('\u{1f}');
        s.push_str(&self.template);
        s
    }

    /// Stable 64-bit key for [`Predicate::canonical_text`].
    pub fn cache_key(&self) -> u64 {
        crate::math::fnv1a64(self.canonical_text().as_bytes())
    }
}

fn parse_placeholders(template: &str) -> Result<Vec<String>, DataError> {
    let mut cols: Vec<String> = Vec::new();
    let mut rest = template;
    let mut offset = 0;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = match after.find('}') {
            Some(c) => c,
            None => return Err(DataError::UnclosedPlaceholder { at: offset + open }),
        };
        if close == 0 {
            return Err(DataError::EmptyPlaceholder { at: offset + open });
        }
        let name = &after[..close];
        if !cols.iter().any(|c| c == name) {
            cols.push(name.to_owned());
        }
        offset += open + 1 + close + 1;
        rest = &after[close + 1..];
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn record(id: u64, pairs: &[(&str, &str)]) -> Record {
        let mut r = Record::new(id);
        for (k, v) in pairs {
            r = r.with_column(k, v);
        }
        r
    }

    #[test]
    fn table_rejects_duplicate_ids() {
        let recs = vec![record(5, &[]), record(6, &[]), record(5, &[])];
        let err = Table::new(vec![], recs).unwrap_err();
        assert_eq!(err, DataError::DuplicateId { id: 5, first: 0, second: 2 });
    }

    #[test]
    fn table_preserves_order_and_lookup() {
        let recs = vec![record(9, &[]), record(7, &[]), record(8, &[])];
        let t = Table::new(vec![], recs).unwrap();
        assert_eq!(t.ids().collect::<Vec<_>>(), vec![9, 7, 8]);
        assert_eq!(t.get(7).unwrap().id, 7);
        assert!(t.get(10).is_none());
    }

    #[test]
    fn render_single_column() {
        let p = Predicate::new("The {review} is positive.", None).unwrap();
        let r = record(1, &[("review", "great film")]);
        let prompt = p.render(&r).unwrap();
        assert!(prompt.contains("The great film is positive."));
        assert!(prompt.ends_with(ANSWER_SUFFIX));
        assert_eq!(p.referenced_columns(), ["review"]);
    }

    #[test]
    fn render_two_columns() {
        let p = Predicate::new("The {claim} is supported by the {evidence}.", None).unwrap();
        let r = record(1, &[("claim", "X"), ("evidence", "Y")]);
        let prompt = p.render(&r).unwrap();
        assert!(prompt.contains("The X is supported by the Y."));
        assert_eq!(p.referenced_columns(), ["claim", "evidence"]);
    }

    #[test]
    fn render_missing_column_errors() {
        let p = Predicate::new("Has {missing} column.", None).unwrap();
        let r = record(3, &[("other", "x")]);
        assert_eq!(
            p.render(&r).unwrap_err(),
            DataError::MissingColumn { id: 3, column: "missing".into() }
        );
    }

    #[test]
    fn render_is_deterministic_and_prepends_instruction() {
        let p = Predicate::new("{a}?", Some("Decide carefully.")).unwrap();
        let r = record(1, &[("a", "ok")]);
        let one = p.render(&r).unwrap();
        let two = p.render(&r).unwrap();
        assert_eq!(one, two);
        assert_eq!(one, alloc::format!("Decide carefully.\nok?\n{ANSWER_SUFFIX}"));
    }

    #[test]
    fn template_syntax_errors() {
        assert!(matches!(
            Predicate::new("broken {x", None),
            Err(DataError::UnclosedPlaceholder { .. })
        ));
        assert!(matches!(
            Predicate::new("broken {}", None),
            Err(DataError::EmptyPlaceholder { .. })
        ));
    }

    #[test]
    fn validate_against_schema() {
        let t = Table::new(vec!["review".into()], vec![]).unwrap();
        let good = Predicate::new("The {review} is positive.", None).unwrap();
        assert!(good.validate_against(&t).is_ok());
        let bad = Predicate::new("The {summary} is positive.", None).unwrap();
        assert!(matches!(bad.validate_against(&t), Err(DataError::UnknownPlaceholder { .. })));
    }

    #[test]
    fn cache_key_distinguishes_instruction_from_template() {
        let a = Predicate::new("t", Some("i")).unwrap();
        let b = Predicate::new("it", None).unwrap();
        assert_ne!(a.cache_key(), b.cache_key());
        assert_eq!(a.cache_key(), Predicate::new("t", Some("i")).unwrap().cache_key());
    }
}
