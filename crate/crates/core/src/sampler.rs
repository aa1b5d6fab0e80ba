//! Subgraph extraction and conversion into encoder inputs.
//!
//! A subgraph becomes a node sequence in which every entity appears once and
//! every triple contributes its own relation node. Alongside the sequence
//! come a `T x 3` position matrix, one row of sequence indexes per triple,
//! and an `N x N` adjacency matrix holding the edges subject -> relation
//! node -> object.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Draw budget for finding a corrupted triple absent from the graph.
pub const MAX_CORRUPTION_DRAWS: usize = 1000;

/// Number of incoming and outgoing triples drawn around a center entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fanout {
    pub k_in: usize,
    pub k_out: usize,
}

impl Default for Fanout {
    fn default() -> Self {
        Fanout { k_in: 2, k_out: 2 }
    }
}

/// A non-empty list of triples taken from one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    triples: Vec<Triple>,
    entity_count: usize,
}

impl Subgraph {
    /// Validates that `triples` is non-empty and every triple is in `g`.
    pub fn new(g: &KnowledgeGraph, triples: Vec<Triple>) -> Result<Subgraph> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument("subgraph must contain a triple".into()));
        }
        for t in &triples {
            if !g.contains_triple(t)? {
                return Err(Error::InvalidArgument(format!("triple {t:?} is not in the graph")));
            }
        }
        Ok(Subgraph {
            triples,
            entity_count: g.entity_count(),
        })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// `n_e` of the source graph; relation `r` lives at vocabulary row `n_e + r`.
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }
}

/// Uniformly samples up to `k_in` incoming and `k_out` outgoing triples of
/// `center`, without replacement inside each direction. In-triples come first,
/// each group in adjacency-index order.
pub fn sample_ego<R: Rng + ?Sized>(
    g: &KnowledgeGraph,
    center: EntityId,
    fanout: Fanout,
    rng: &mut R,
) -> Result<Subgraph> {
    g.check_entity(center)?;
    if fanout.k_in + fanout.k_out == 0 {
        return Err(Error::InvalidArgument("k_in + k_out must be at least 1".into()));
    }
    let ins = g.in_edges(center);
    let outs = g.out_edges(center);
    if ins.is_empty() && outs.is_empty() {
        return Err(Error::IsolatedEntity(center.index()));
    }
    let mut triples = Vec::with_capacity(fanout.k_in + fanout.k_out);
    for i in pick(rng, ins.len(), fanout.k_in) {
        let (s, r) = ins[i];
        triples.push(Triple { subject: s, relation: r, object: center });
    }
    for i in pick(rng, outs.len(), fanout.k_out) {
        let (r, o) = outs[i];
        triples.push(Triple { subject: center, relation: r, object: o });
    }
    if triples.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "entity {} has no triples in the requested directions",
            center.index()
        )));
    }
    Ok(Subgraph {
        triples,
        entity_count: g.entity_count(),
    })
}

pub fn sample_ego_seeded(
    g: &KnowledgeGraph,
    center: EntityId,
    fanout: Fanout,
    seed: u64,
) -> Result<Subgraph> {
    sample_ego(g, center, fanout, &mut crate::seeded_rng(seed))
}

fn pick<R: Rng + ?Sized>(rng: &mut R, len: usize, k: usize) -> Vec<usize> {
    let amount = k.min(len);
    if amount == 0 {
        return Vec::new();
    }
    let mut chosen = index::sample(rng, len, amount).into_vec();
    chosen.sort_unstable();
    chosen
}

/// One slot of an explicit node layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Entity(EntityId),
    /// The relation node of the triple at this index in the subgraph.
    Relation(usize),
}

/// Encoder input built from a subgraph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    /// Vocabulary rows; entity ids as-is, relations offset by `n_e`.
    pub node_ids: Vec<usize>,
    /// Per triple: sequence indexes of (subject, relation node, object).
    pub positions: Vec<[usize; 3]>,
    adjacency: Vec<u8>,
    entity_count: usize,
}

impl TrainingSample {
    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn triple_count(&self) -> usize {
        self.positions.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    /// Whether the directed edge `from -> to` exists.
    pub fn edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from * self.len() + to] == 1
    }

    /// Row-major `N x N` 0/1 matrix.
    pub fn adjacency(&self) -> &[u8] {
        &self.adjacency
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        self.adjacency.chunks(self.len().max(1)).map(<[u8]>::to_vec).collect()
    }

    /// Attention mask: node `i` may attend to `j` iff `j -> i` is an edge or `i == j`.
    pub fn attention_mask(&self) -> Vec<bool> {
        let n = self.len();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                mask[i * n + j] = i == j || self.edge(j, i);
            }
        }
        mask
    }

    /// The triple behind row `k` of the position matrix.
    pub fn triple(&self, k: usize) -> Result<Triple> {
        let [ps, pr, po] = *self.positions.get(k).ok_or(Error::IdOutOfRange {
            kind: "triple row",
            id: k,
            count: self.positions.len(),
        })?;
        Ok(Triple {
            subject: EntityId(self.node_ids[ps] as u32),
            relation: RelationId((self.node_ids[pr] - self.entity_count) as u32),
            object: EntityId(self.node_ids[po] as u32),
        })
    }

    pub fn triples(&self) -> Vec<Triple> {
        (0..self.triple_count()).map(|k| self.triple(k).unwrap()).collect()
    }
}

/// Canonical conversion: triples visited in order, appending the subject if
/// new, a fresh relation node, then the object if new.
pub fn convert(sub: &Subgraph) -> TrainingSample {
    convert_triples(sub.triples(), sub.entity_count())
}

/// Converts a triple list without checking graph membership. Used for
/// corrupted subgraphs whose triples are deliberately absent from the graph.
pub fn convert_triples(triples: &[Triple], entity_count: usize) -> TrainingSample {
    let mut layout = Vec::with_capacity(triples.len() * 3);
    let mut seen: Vec<EntityId> = Vec::new();
    for (k, t) in triples.iter().enumerate() {
        if !seen.contains(&t.subject) {
            seen.push(t.subject);
            layout.push(NodeRef::Entity(t.subject));
        }
        layout.push(NodeRef::Relation(k));
        if !seen.contains(&t.object) {
            seen.push(t.object);
            layout.push(NodeRef::Entity(t.object));
        }
    }
    build(triples, entity_count, &layout)
}

/// Conversion with a caller-chosen node order. The layout must list every
/// distinct entity of the subgraph once and every triple's relation node once.
pub fn convert_with_layout(sub: &Subgraph, layout: &[NodeRef]) -> Result<TrainingSample> {
    let triples = sub.triples();
    let mut entities: Vec<EntityId> = Vec::new();
    for t in triples {
        for e in [t.subject, t.object] {
            if !entities.contains(&e) {
                entities.push(e);
            }
        }
    }
    let mut relation_seen = vec![false; triples.len()];
    let mut entity_seen = vec![false; entities.len()];
    for node in layout {
        let slot = match *node {
            NodeRef::Entity(e) => entities
                .iter()
                .position(|&x| x == e)
                .map(|i| &mut entity_seen[i]),
            NodeRef::Relation(k) => relation_seen.get_mut(k),
        };
        match slot {
            Some(flag) if !*flag => *flag = true,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "layout entry {node:?} is unknown or repeated"
                )))
            }
        }
    }
    if layout.len() != entities.len() + triples.len() {
        return Err(Error::InvalidArgument("layout does not cover the subgraph".into()));
    }
    Ok(build(triples, sub.entity_count(), layout))
}

fn build(triples: &[Triple], entity_count: usize, layout: &[NodeRef]) -> TrainingSample {
    let n = layout.len();
    let entity_pos = |e: EntityId| {
        layout
            .iter()
            .position(|x| *x == NodeRef::Entity(e))
            .expect("layout covers every entity")
    };
    let relation_pos = |k: usize| {
        layout
            .iter()
            .position(|x| *x == NodeRef::Relation(k))
            .expect("layout covers every relation node")
    };
    let node_ids = layout
        .iter()
        .map(|node| match *node {
            NodeRef::Entity(e) => e.index(),
            NodeRef::Relation(k) => entity_count + triples[k].relation.index(),
        })
        .collect();
    let mut adjacency = vec![0u8; n * n];
    let mut positions = Vec::with_capacity(triples.len());
    for (k, t) in triples.iter().enumerate() {
        let row = [entity_pos(t.subject), relation_pos(k), entity_pos(t.object)];
        adjacency[row[0] * n + row[1]] = 1;
        adjacency[row[1] * n + row[2]] = 1;
        positions.push(row);
    }
    TrainingSample {
        node_ids,
        positions,
        adjacency,
        entity_count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

/// An entity replacement turning a true triple into one absent from the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corruption {
    pub side: Side,
    pub replacement: EntityId,
}

impl Corruption {
    pub fn apply(&self, t: Triple) -> Triple {
        match self.side {
            Side::Head => Triple { subject: self.replacement, ..t },
            Side::Tail => Triple { object: self.replacement, ..t },
        }
    }
}

/// Corrupts row `triple_row` of `sample`: side drawn uniformly, replacement
/// drawn uniformly over entities until the corrupted triple is not in `g`.
pub fn corrupt<R: Rng + ?Sized>(
    sample: &TrainingSample,
    g: &KnowledgeGraph,
    triple_row: usize,
    rng: &mut R,
) -> Result<Corruption> {
    let t = sample.triple(triple_row)?;
    corrupt_triple(t, g, rng)
}

pub fn corrupt_seeded(
    sample: &TrainingSample,
    g: &KnowledgeGraph,
    triple_row: usize,
    seed: u64,
) -> Result<Corruption> {
    corrupt(sample, g, triple_row, &mut crate::seeded_rng(seed))
}

pub fn corrupt_triple<R: Rng + ?Sized>(
    t: Triple,
    g: &KnowledgeGraph,
    rng: &mut R,
) -> Result<Corruption> {
    g.check_ids(&t)?;
    let n_e = g.entity_count() as u32;
    let side = if rng.gen::<bool>() { Side::Head } else { Side::Tail };
    for _ in 0..MAX_CORRUPTION_DRAWS {
        let c = Corruption {
            side,
            replacement: EntityId(rng.gen_range(0..n_e)),
        };
        if !g.contains_unchecked(&c.apply(t)) {
            return Ok(c);
        }
    }
    Err(Error::CorruptionExhausted(MAX_CORRUPTION_DRAWS))
}
