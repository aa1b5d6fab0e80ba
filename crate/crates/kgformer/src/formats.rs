//! Text and JSON file formats.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use kgformer_core::eval::RankingReport;
use kgformer_core::linker::{LinkedSpan, TermDictionary};
use kgformer_core::{EmbeddingTable, IngestReport, KnowledgeGraph, TrainingSample};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads `subject<TAB>relation<TAB>object` lines.
pub fn ingest_tsv<R: BufRead>(reader: R) -> kgformer_core::Result<(KnowledgeGraph, IngestReport)> {
    let lines: Vec<String> = reader
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| kgformer_core::Error::InvalidArgument(e.to_string()))?;
    KnowledgeGraph::ingest_lines(lines.iter().map(String::as_str))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDump {
    entities: Vec<String>,
    relations: Vec<String>,
    triples: Vec<[u32; 3]>,
}

pub fn graph_to_json(g: &KnowledgeGraph) -> String {
    let dump = GraphDump {
        entities: g.entity_labels().to_vec(),
        relations: g.relation_labels().to_vec(),
        triples: g
            .triples()
            .iter()
            .map(|t| [t.subject.0, t.relation.0, t.object.0])
            .collect(),
    };
    serde_json::to_string(&dump).expect("graph serializes") + "\n"
}

pub fn graph_from_json(text: &str) -> kgformer_core::Result<KnowledgeGraph> {
    let dump: GraphDump =
        serde_json::from_str(text).map_err(|e| kgformer_core::Error::InvalidArgument(e.to_string()))?;
    KnowledgeGraph::from_parts(dump.entities, dump.relations, &dump.triples)
}

/// Loads a graph dump (`.json`) or a triple TSV (anything else).
pub fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let text = read_text(path)?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        graph_from_json(&text)
    } else {
        KnowledgeGraph::ingest_lines(text.lines()).map(|(g, _)| g)
    };
    parsed.map_err(|e| Error::parse(path, e.to_string()))
}

/// Header `N d`, then one `row<TAB>v1 ... vd` line per row with 17
/// significant digits, enough to read every f64 back exactly.
pub fn embeddings_to_text(table: &EmbeddingTable) -> String {
    let mut out = format!("{} {}\n", table.rows(), table.dim());
    for i in 0..table.rows() {
        write!(out, "{i}\t").unwrap();
        for (k, v) in table.row(i).iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn embeddings_from_text(text: &str) -> std::result::Result<EmbeddingTable, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or("empty file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse().map_err(|_| format!("line 1: bad header {header:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let [rows, dim] = dims[..] else {
        return Err(format!("line 1: expected `N d`, found {header:?}"));
    };
    let mut data = vec![0.0; rows * dim];
    let mut seen = vec![false; rows];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let (id, values) = line.split_once('\t').ok_or(format!("line {n}: missing tab"))?;
        let id: usize = id.trim().parse().map_err(|_| format!("line {n}: bad row id {id:?}"))?;
        if id >= rows || seen[id] {
            return Err(format!("line {n}: row id {id} out of range or repeated"));
        }
        seen[id] = true;
        let values: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| format!("line {n}: bad number {v:?}")))
            .collect::<std::result::Result<_, _>>()?;
        if values.len() != dim {
            return Err(format!("line {n}: {} values, expected {dim}", values.len()));
        }
        data[id * dim..(id + 1) * dim].copy_from_slice(&values);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format!("row {missing} missing"));
    }
    EmbeddingTable::new(rows, dim, data).map_err(|e| e.to_string())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    embeddings_from_text(&read_text(path)?).map_err(|m| Error::parse(path, m))
}

#[derive(Serialize)]
struct SampleDump<'a> {
    nodes: &'a [usize],
    positions: &'a [[usize; 3]],
    adjacency: Vec<Vec<u8>>,
}

pub fn sample_to_json(sample: &TrainingSample) -> String {
    let dump = SampleDump {
        nodes: &sample.node_ids,
        positions: &sample.positions,
        adjacency: sample.adjacency_rows(),
    };
    serde_json::to_string(&dump).expect("sample serializes") + "\n"
}

#[derive(Serialize)]
struct Hits {
    #[serde(rename = "1")]
    one: f64,
    #[serde(rename = "3")]
    three: f64,
    #[serde(rename = "10")]
    ten: f64,
}

#[derive(Serialize)]
struct ReportDump {
    setting: &'static str,
    mr: f64,
    mrr: f64,
    hits: Hits,
}

pub fn report_to_json(report: &RankingReport) -> String {
    let dump = ReportDump {
        setting: report.setting.as_str(),
        mr: report.mr,
        mrr: report.mrr,
        hits: Hits { one: report.hits1, three: report.hits3, ten: report.hits10 },
    };
    serde_json::to_string_pretty(&dump).expect("report serializes") + "\n"
}

#[derive(Serialize)]
struct SpanDump {
    start: usize,
    end: usize,
    entity: u32,
}

#[derive(Serialize)]
struct LineDump {
    line: usize,
    spans: Vec<SpanDump>,
}

/// One JSON line per document: `{"line":n,"spans":[{"start","end","entity"}]}`
/// with 1-based line numbers.
pub fn spans_to_json_line(line: usize, spans: &[LinkedSpan]) -> String {
    let dump = LineDump {
        line,
        spans: spans
            .iter()
            .map(|s| SpanDump { start: s.start, end: s.end, entity: s.entity.0 })
            .collect(),
    };
    serde_json::to_string(&dump).expect("spans serialize")
}

/// `term<TAB>entity label` lines resolved against the graph's entities.
pub fn dictionary_from_tsv(text: &str, g: &KnowledgeGraph) -> std::result::Result<TermDictionary, String> {
    let mut dict = TermDictionary::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (term, label) = line
            .split_once('\t')
            .ok_or(format!("line {}: expected term<TAB>entity", i + 1))?;
        let id = g
            .entity_id(label)
            .ok_or(format!("line {}: unknown entity {label:?}", i + 1))?;
        dict.insert(term, id).map_err(|e| format!("line {}: {e}", i + 1))?;
    }
    Ok(dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kgformer_core::sampler::{convert, Subgraph};
    use proptest::prelude::*;

    fn graph() -> KnowledgeGraph {
        KnowledgeGraph::ingest_lines("a\tr\tb\nb\tr\tc\nc\ts\ta\n".lines()).unwrap().0
    }

    #[test]
    fn graph_json_roundtrip() {
        let g = graph();
        let text = graph_to_json(&g);
        assert_eq!(
            text,
            "{\"entities\":[\"a\",\"b\",\"c\"],\"relations\":[\"r\",\"s\"],\"triples\":[[0,0,1],[1,0,2],[2,1,0]]}\n"
        );
        let back = graph_from_json(&text).unwrap();
        assert_eq!(back.triples(), g.triples());
        assert_eq!(back.entity_labels(), g.entity_labels());
        assert!(graph_from_json("{\"entities\":[],\"relations\":[],\"triples\":[[0,0,0]]}").is_err());
        assert!(graph_from_json("{\"entities\":[],\"relations\":[],\"triples\":[],\"x\":1}").is_err());
    }

    #[test]
    fn tsv_reader_reports_line() {
        let (g, report) = ingest_tsv("a\tr\tb\nb\tr\tc\na\tr\tb\n".as_bytes()).unwrap();
        assert_eq!((g.entity_count(), g.relation_count(), g.triples().len()), (3, 1, 2));
        assert_eq!(report.duplicates, 1);
        assert!(matches!(
            ingest_tsv("a\tr\tb\na\tb\n".as_bytes()),
            Err(kgformer_core::Error::MalformedLine { line: 2, .. })
        ));
    }

    #[test]
    fn sample_dump_shape() {
        let g = graph();
        let sample = convert(&Subgraph::new(&g, g.triples()[..1].to_vec()).unwrap());
        assert_eq!(
            sample_to_json(&sample),
            "{\"nodes\":[0,3,1],\"positions\":[[0,1,2]],\"adjacency\":[[0,1,0],[0,0,1],[0,0,0]]}\n"
        );
    }

    #[test]
    fn embedding_text_errors() {
        assert!(embeddings_from_text("").is_err());
        assert!(embeddings_from_text("2 2\n0\t1 2\n").unwrap_err().contains("row 1 missing"));
        assert!(embeddings_from_text("1 2\n0\t1\n").is_err());
        assert!(embeddings_from_text("1 2\n3\t1 2\n").is_err());
        assert!(embeddings_from_text("1 2\n0\t1 x\n").is_err());
        let t = embeddings_from_text("2 1\n1\t-2.5\n0\t1e-3\n").unwrap();
        assert_eq!(t.data(), &[1e-3, -2.5]);
    }

    #[test]
    fn dictionary_resolves_labels() {
        let g = graph();
        let dict = dictionary_from_tsv("Big  Apple\ta\nbee\tb\n", &g).unwrap();
        assert_eq!(dict.get("big apple"), Some(kgformer_core::EntityId(0)));
        assert!(dictionary_from_tsv("x\tzzz\n", &g).is_err());
        assert!(dictionary_from_tsv("x\n", &g).is_err());
    }

    proptest! {
        #[test]
        fn embedding_text_roundtrips_exactly(
            rows in 1usize..6,
            dim in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = kgformer_core::seeded_rng(seed);
            let data: Vec<f64> = (0..rows * dim)
                .map(|_| rng.gen_range(-1e3..1e3) * 10f64.powi(rng.gen_range(-200..200)))
                .collect();
            let t = EmbeddingTable::new(rows, dim, data).unwrap();
            let back = embeddings_from_text(&embeddings_to_text(&t)).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
