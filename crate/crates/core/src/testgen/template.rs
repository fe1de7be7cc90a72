use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TestGenError;

pub const CHILD: &str = "{child}";
pub const PARENT: &str = "{parent}";

/// Template number. 1 renders the original query, 2 the mutated
/// (semantically equivalent) one, 3 is held back for unseen-template
/// evaluation of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateId(pub u8);

impl TemplateId {
    pub const ORIGINAL: TemplateId = TemplateId(1);
    pub const MUTATED: TemplateId = TemplateId(2);
    pub const UNSEEN: TemplateId = TemplateId(3);
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub id: TemplateId,
    pub kind: String,
    pub pattern: String,
}

impl QueryTemplate {
    pub fn new(kind: impl Into<String>, id: TemplateId, pattern: impl Into<String>) -> Result<Self, TestGenError> {
        let t = Self {
            id,
            kind: kind.into(),
            pattern: pattern.into(),
        };
        for ph in [CHILD, PARENT] {
            let n = t.pattern.matches(ph).count();
            if n != 1 {
                return Err(TestGenError::BadTemplate(format!(
                    "template {} for `{}` must contain {ph} exactly once (found {n})",
                    t.id, t.kind
                )));
            }
        }
        Ok(t)
    }

    pub fn render(&self, child: &str, parent: &str) -> String {
        // Substitute in one pass so labels that look like placeholders stay literal.
        let (first, first_val, second, second_val) = {
            let c = self.pattern.find(CHILD).expect("validated");
            let p = self.pattern.find(PARENT).expect("validated");
            if c < p {
                (CHILD, child, PARENT, parent)
            } else {
                (PARENT, parent, CHILD, child)
            }
        };
        let (head, rest) = self.pattern.split_once(first).expect("validated");
        let (mid, tail) = rest.split_once(second).expect("validated");
        format!("{head}{first_val}{mid}{second_val}{tail}")
    }
}

/// Templates keyed by (relation kind, template id).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateRegistry {
    templates: BTreeMap<(String, TemplateId), QueryTemplate>,
}

const DEFAULTS: &[(&str, u8, &str)] = &[
    ("located_in", 1, "Is there a {child} in {parent}?"),
    ("located_in", 2, "Does {parent} contain {child}?"),
    ("located_in", 3, "Is {child} located in {parent}?"),
    ("part_of", 1, "Is {child} part of {parent}?"),
    ("part_of", 2, "Does {parent} include {child}?"),
    ("part_of", 3, "Does {parent} have {child} in it?"),
    ("performer", 1, "Is {child} performed by {parent}?"),
    ("performer", 2, "Did {parent} perform {child}?"),
    ("performer", 3, "Is {child} an album by {parent}?"),
];

impl TemplateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Built-in wordings for the places (`located_in`) and music
    /// (`part_of`, `performer`) relation kinds.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        for (kind, id, pattern) in DEFAULTS {
            r.insert(QueryTemplate::new(*kind, TemplateId(*id), *pattern).expect("builtin templates are valid"))
                .expect("builtin templates are distinct");
        }
        r
    }

    pub fn insert(&mut self, t: QueryTemplate) -> Result<(), TestGenError> {
        let key = (t.kind.clone(), t.id);
        if self.templates.contains_key(&key) {
            return Err(TestGenError::BadTemplate(format!(
                "duplicate template {} for `{}`",
                t.id, t.kind
            )));
        }
        self.templates.insert(key, t);
        self.check_distinct()
    }

    fn check_distinct(&self) -> Result<(), TestGenError> {
        for ((kind, id), t) in &self.templates {
            if *id == TemplateId::ORIGINAL {
                if let Some(m) = self.templates.get(&(kind.clone(), TemplateId::MUTATED)) {
                    if m.pattern == t.pattern {
                        return Err(TestGenError::BadTemplate(format!(
                            "templates 1 and 2 for `{kind}` are identical"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, kind: &str, id: TemplateId) -> Result<&QueryTemplate, TestGenError> {
        self.templates
            .get(&(kind.to_owned(), id))
            .ok_or_else(|| TestGenError::MissingTemplate {
                kind: kind.to_owned(),
                id,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueryTemplate> {
        self.templates.values()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Parses `kind<TAB>template-id<TAB>pattern` lines. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, TestGenError> {
        let mut r = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (Some(kind), Some(id), Some(pattern)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(TestGenError::BadTemplate(format!(
                    "line {}: expected 3 tab-separated fields",
                    i + 1
                )));
            };
            let id: u8 = id
                .trim()
                .parse()
                .map_err(|_| TestGenError::BadTemplate(format!("line {}: bad template id `{id}`", i + 1)))?;
            r.insert(QueryTemplate::new(kind.trim(), TemplateId(id), pattern)?)?;
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, TestGenError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TestGenError::BadTemplate(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        self.templates
            .values()
            .map(|t| format!("{}\t{}\t{}\n", t.kind, t.id, t.pattern))
            .collect()
    }
}
