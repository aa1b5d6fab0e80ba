//! Directed multi-relational knowledge graph with a unified node vocabulary.
//!
//! Entities occupy vocabulary rows `[0, n_e)` and relations rows
//! `[n_e, n_e + n_r)`. Ids are handed out in first-appearance order over the
//! ingested triple stream, so the same input always yields the same ids.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(subject: u32, relation: u32, object: u32) -> Self {
        Triple {
            subject: EntityId(subject),
            relation: RelationId(relation),
            object: EntityId(object),
        }
    }
}

/// Counts gathered while ingesting a triple stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines: usize,
    pub triples: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub avg_in: f64,
    pub avg_out: f64,
    pub median_degree: f64,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: BTreeMap<String, EntityId>,
    relation_ids: BTreeMap<String, RelationId>,
    triples: Vec<Triple>,
    members: BTreeSet<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(EntityId, RelationId)>>,
}

/// Incremental, single-pass graph construction.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: KnowledgeGraph,
    report: IngestReport,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a labelled triple. Returns `false` when it was already present.
    pub fn add(&mut self, subject: &str, relation: &str, object: &str) -> bool {
        let s = self.graph.intern_entity(subject);
        let r = self.graph.intern_relation(relation);
        let o = self.graph.intern_entity(object);
        let added = self.graph.insert(Triple {
            subject: s,
            relation: r,
            object: o,
        });
        if added {
            self.report.triples += 1;
        } else {
            self.report.duplicates += 1;
        }
        added
    }

    pub fn build(self) -> (KnowledgeGraph, IngestReport) {
        (self.graph, self.report)
    }
}

impl KnowledgeGraph {
    /// Parses `subject<TAB>relation<TAB>object` lines. Blank lines are skipped
    /// and a trailing `\r` is tolerated.
    pub fn ingest_lines<'a, I>(lines: I) -> Result<(KnowledgeGraph, IngestReport)>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut builder = GraphBuilder::new();
        for (i, raw) in lines.into_iter().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            builder.report.lines += 1;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    found: fields.len(),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(Error::EmptyField { line: i + 1 });
            }
            builder.add(fields[0], fields[1], fields[2]);
        }
        Ok(builder.build())
    }

    /// Rebuilds a graph from explicit vocabularies and id triples, keeping the
    /// given id assignment. Duplicate triples collapse.
    pub fn from_parts(
        entities: Vec<String>,
        relations: Vec<String>,
        triples: &[[u32; 3]],
    ) -> Result<KnowledgeGraph> {
        let mut g = KnowledgeGraph::default();
        for label in entities {
            if g.entity_ids.contains_key(&label) {
                return Err(Error::InvalidArgument(format!("duplicate entity label {label:?}")));
            }
            g.intern_entity(&label);
        }
        for label in relations {
            if g.relation_ids.contains_key(&label) {
                return Err(Error::InvalidArgument(format!("duplicate relation label {label:?}")));
            }
            g.intern_relation(&label);
        }
        for &[s, r, o] in triples {
            let t = Triple::new(s, r, o);
            g.check_ids(&t)?;
            g.insert(t);
        }
        Ok(g)
    }

    fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(label) {
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(label.to_string());
        self.entity_ids.insert(label.to_string(), id);
        self.out_index.push(Vec::new());
        self.in_index.push(Vec::new());
        id
    }

    fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(label) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(label.to_string());
        self.relation_ids.insert(label.to_string(), id);
        id
    }

    fn insert(&mut self, t: Triple) -> bool {
        if !self.members.insert(t) {
            return false;
        }
        self.triples.push(t);
        self.out_index[t.subject.index()].push((t.relation, t.object));
        self.in_index[t.object.index()].push((t.subject, t.relation));
        true
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// `n_e + n_r`: rows of an embedding table over this graph.
    pub fn vocab_size(&self) -> usize {
        self.entities.len() + self.relations.len()
    }

    /// Vocabulary row of a relation.
    pub fn relation_row(&self, r: RelationId) -> usize {
        self.entities.len() + r.index()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entities
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relations
    }

    pub fn entity_label(&self, e: EntityId) -> Option<&str> {
        self.entities.get(e.index()).map(String::as_str)
    }

    pub fn relation_label(&self, r: RelationId) -> Option<&str> {
        self.relations.get(r.index()).map(String::as_str)
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_ids.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_ids.get(label).copied()
    }

    /// Outgoing `(relation, object)` pairs of `e`, in ingest order.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_index[e.index()]
    }

    /// Incoming `(subject, relation)` pairs of `e`, in ingest order.
    pub fn in_edges(&self, e: EntityId) -> &[(EntityId, RelationId)] {
        &self.in_index[e.index()]
    }

    pub fn degree(&self, e: EntityId) -> usize {
        self.out_index[e.index()].len() + self.in_index[e.index()].len()
    }

    pub fn check_entity(&self, e: EntityId) -> Result<()> {
        if e.index() >= self.entities.len() {
            return Err(Error::IdOutOfRange {
                kind: "entity",
                id: e.index(),
                count: self.entities.len(),
            });
        }
        Ok(())
    }

    pub fn check_ids(&self, t: &Triple) -> Result<()> {
        self.check_entity(t.subject)?;
        self.check_entity(t.object)?;
        if t.relation.index() >= self.relations.len() {
            return Err(Error::IdOutOfRange {
                kind: "relation",
                id: t.relation.index(),
                count: self.relations.len(),
            });
        }
        Ok(())
    }

    pub fn contains_triple(&self, t: &Triple) -> Result<bool> {
        self.check_ids(t)?;
        Ok(self.members.contains(t))
    }

    /// Membership test without the range check, for hot loops over ids already
    /// known to be in range.
    pub(crate) fn contains_unchecked(&self, t: &Triple) -> bool {
        self.members.contains(t)
    }

    pub fn degree_stats(&self) -> Result<DegreeStats> {
        let n = self.entities.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let edges = self.triples.len() as f64;
        let mut degrees: Vec<usize> = (0..n)
            .map(|i| self.out_index[i].len() + self.in_index[i].len())
            .collect();
        degrees.sort_unstable();
        let median_degree = if n % 2 == 1 {
            degrees[n / 2] as f64
        } else {
            (degrees[n / 2 - 1] + degrees[n / 2]) as f64 / 2.0
        };
        Ok(DegreeStats {
            avg_in: edges / n as f64,
            avg_out: edges / n as f64,
            median_degree,
        })
    }
}
