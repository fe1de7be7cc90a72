//! Line-oriented, versioned snapshot files.
//!
//! ```text
//! KGSNAP<TAB>1<TAB>depth=3<TAB>endpoint=<url><TAB>retrieved=<rfc3339>
//! K<TAB>kind<TAB>transitive(1|0)
//! E<TAB>id<TAB>label<TAB>domain
//! R<TAB>child<TAB>parent<TAB>kind
//! ```
//!
//! Fields escape `\\`, tab, CR and LF with a backslash.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::IngestError;
use crate::kg::{Entity, EntityId, KnowledgeGraph, RelationKind};

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &str = "KGSNAP";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub endpoint: String,
    pub retrieved: String,
}

impl Provenance {
    pub fn now(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            retrieved: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub provenance: Provenance,
    pub graph: KnowledgeGraph,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

/// Renders a snapshot to its text form. Records are sorted, so equal
/// graphs produce identical bytes.
pub fn render_snapshot(graph: &KnowledgeGraph, provenance: &Provenance) -> String {
    let mut out = format!(
        "{MAGIC}\t{SNAPSHOT_VERSION}\tdepth={}\tendpoint={}\tretrieved={}\n",
        graph.depth(),
        escape(&provenance.endpoint),
        escape(&provenance.retrieved)
    );
    for k in graph.kinds() {
        out.push_str(&format!("K\t{}\t{}\n", escape(&k.name), u8::from(k.transitive)));
    }
    for e in graph.entities() {
        out.push_str(&format!(
            "E\t{}\t{}\t{}\n",
            escape(e.id.as_str()),
            escape(&e.label),
            escape(&e.domain)
        ));
    }
    for r in graph.edges() {
        out.push_str(&format!(
            "R\t{}\t{}\t{}\n",
            escape(r.child.as_str()),
            escape(r.parent.as_str()),
            escape(&r.kind)
        ));
    }
    out
}

pub fn save_snapshot(graph: &KnowledgeGraph, provenance: &Provenance, path: &Path) -> Result<(), IngestError> {
    let io = |source| IngestError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    w.write_all(render_snapshot(graph, provenance).as_bytes()).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_snapshot(BufReader::new(file))
}

pub fn parse_snapshot(reader: impl BufRead) -> Result<Snapshot, IngestError> {
    let corrupt = |line: usize, reason: String| IngestError::Corrupt { line, reason };
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| corrupt(1, "empty file".into()))?;
    let header = header.map_err(|e| corrupt(1, e.to_string()))?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.first() != Some(&MAGIC) || fields.len() < 2 {
        return Err(corrupt(1, "missing snapshot header".into()));
    }
    if fields[1] != SNAPSHOT_VERSION.to_string() {
        return Err(IngestError::VersionMismatch {
            found: fields[1].to_owned(),
            expected: SNAPSHOT_VERSION,
        });
    }
    let mut depth = crate::kg::DEFAULT_DEPTH;
    let mut provenance = Provenance::default();
    for f in &fields[2..] {
        let (key, value) = f
            .split_once('=')
            .ok_or_else(|| corrupt(1, format!("bad header field `{f}`")))?;
        let value = unescape(value).map_err(|e| corrupt(1, e))?;
        match key {
            "depth" => depth = value.parse().map_err(|_| corrupt(1, format!("bad depth `{value}`")))?,
            "endpoint" => provenance.endpoint = value,
            "retrieved" => provenance.retrieved = value,
            _ => log::debug!("ignoring header field `{key}`"),
        }
    }

    let mut graph = KnowledgeGraph::new(depth);
    let mut edges = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        let line = line.map_err(|e| corrupt(n, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let raw: Vec<&str> = line.split('\t').collect();
        let f: Vec<String> = raw
            .iter()
            .map(|s| unescape(s))
            .collect::<Result<_, _>>()
            .map_err(|e| corrupt(n, e))?;
        match (f[0].as_str(), f.len()) {
            ("K", 3) => {
                let transitive = match f[2].as_str() {
                    "1" => true,
                    "0" => false,
                    other => return Err(corrupt(n, format!("bad transitive flag `{other}`"))),
                };
                graph
                    .add_kind(RelationKind::new(f[1].clone(), transitive))
                    .map_err(|e| corrupt(n, e.to_string()))?;
            }
            ("E", 4) => graph
                .add_entity(Entity {
                    id: EntityId(f[1].clone()),
                    label: f[2].clone(),
                    domain: f[3].clone(),
                })
                .map_err(|e| corrupt(n, e.to_string()))?,
            ("R", 4) => edges.push((n, f)),
            (tag, len) => return Err(corrupt(n, format!("unexpected record `{tag}` with {len} fields"))),
        }
    }
    for (n, f) in edges {
        if graph.kind(&f[3]).is_none() {
            graph
                .add_kind(RelationKind::new(f[3].clone(), true))
                .map_err(|e| corrupt(n, e.to_string()))?;
        }
        graph
            .add_edge(&EntityId(f[1].clone()), &EntityId(f[2].clone()), &f[3])
            .map_err(|e| corrupt(n, e.to_string()))?;
    }
    Ok(Snapshot { provenance, graph })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(g: &KnowledgeGraph) -> KnowledgeGraph {
        let text = render_snapshot(g, &Provenance::default());
        parse_snapshot(text.as_bytes()).unwrap().graph
    }

    #[test]
    fn empty_graph_roundtrip() {
        let g = KnowledgeGraph::new(2);
        assert_eq!(roundtrip(&g), g);
    }

    #[test]
    fn file_roundtrip_keeps_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/g.kg");
        let mut g = KnowledgeGraph::new(3);
        g.add_kind(RelationKind::new("located_in", true)).unwrap();
        g.add_entity(Entity::new("Q1", "Tab\there", "places")).unwrap();
        g.add_entity(Entity::new("Q2", "Back\\slash\nnewline", "places"))
            .unwrap();
        g.add_edge(&"Q1".into(), &"Q2".into(), "located_in").unwrap();
        let prov = Provenance {
            endpoint: "https://query.wikidata.org/sparql".into(),
            retrieved: "2024-01-01T00:00:00Z".into(),
        };
        save_snapshot(&g, &prov, &path).unwrap();
        let snap = load_snapshot(&path).unwrap();
        assert_eq!(snap.graph, g);
        assert_eq!(snap.provenance, prov);
    }

    #[test]
    fn unknown_version() {
        let text = "KGSNAP\t99\tdepth=3\n";
        assert!(matches!(
            parse_snapshot(text.as_bytes()),
            Err(IngestError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_lines() {
        for text in [
            "",
            "nonsense\n",
            "KGSNAP\t1\nE\tQ1\n",
            "KGSNAP\t1\nR\tQ1\tQ2\tk\n",
            "KGSNAP\t1\nE\tQ1\tbad\\q\tx\n",
            "KGSNAP\t1\tdepth=abc\n",
        ] {
            assert!(
                matches!(parse_snapshot(text.as_bytes()), Err(IngestError::Corrupt { .. })),
                "{text:?}"
            );
        }
    }

    fn arb_graph() -> impl Strategy<Value = KnowledgeGraph> {
        (
            2usize..12,
            prop::collection::vec((0usize..12, 0usize..12, 0usize..2), 0..30),
            1u32..5,
        )
            .prop_map(|(n, raw_edges, depth)| {
                let mut g = KnowledgeGraph::new(depth);
                g.add_kind(RelationKind::new("a", true)).unwrap();
                g.add_kind(RelationKind::new("b", false)).unwrap();
                for i in 0..n {
                    g.add_entity(Entity::new(format!("Q{i}"), format!("label {i}\t!"), "d"))
                        .unwrap();
                }
                for (c, p, k) in raw_edges {
                    let (c, p) = (c % n, p % n);
                    let kind = if k == 0 { "a" } else { "b" };
                    let _ = g.add_edge(&EntityId(format!("Q{c}")), &EntityId(format!("Q{p}")), kind);
                }
                g
            })
    }

    proptest! {
        #[test]
        fn roundtrip_identity(g in arb_graph()) {
            prop_assert_eq!(roundtrip(&g), g);
        }
    }
}
