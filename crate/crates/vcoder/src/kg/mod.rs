//! Knowledge-graph storage: vocabularies, triples, incidence indices and
//! the binary input encodings derived from them.
//!
//! A [`TripleStore`] is immutable after construction; every operation that
//! "changes" a graph ([`TripleStore::merge_relations`]) builds a new store.

mod io;

pub use io::{load_id_format, load_id_triples, load_tsv, Dataset};
pub use io::{export_split, export_split_dataset, SplitNaming};

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid merge spec: {0}")]
    InvalidMergeSpec(String),
}

/// Dense, zero-based vocabulary of unique names.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, interning it on first appearance.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub(crate) fn from_names(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Vocab { names, index }
    }
}

/// One (head, relation, tail) fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Which incident relations make up an entity's binary encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IncidenceMode {
    /// Head-side or tail-side incidence, merged into one bit per relation.
    RoleAgnostic,
    /// Only relations the entity heads; tail-only entities encode to zero.
    HeadOnly,
    /// Out-relations and in-relations in separate halves (2 * N_r bits).
    Directional,
}

impl IncidenceMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "role_agnostic" => Some(IncidenceMode::RoleAgnostic),
            "head_only" => Some(IncidenceMode::HeadOnly),
            "directional" => Some(IncidenceMode::Directional),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            IncidenceMode::RoleAgnostic => "role_agnostic",
            IncidenceMode::HeadOnly => "head_only",
            IncidenceMode::Directional => "directional",
        }
    }
}

/// A pair of relations to collapse into one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub kept: RelationId,
    pub absorbed: RelationId,
}

/// Entity and relation vocabularies, the triple list, and per-entity
/// incidence indices (head side and tail side kept separately; the
/// role-agnostic union is derived).
#[derive(Debug, Clone)]
pub struct TripleStore {
    entities: Vocab,
    relations: Vocab,
    triples: Vec<Triple>,
    /// Sorted relation ids r with some (x, r, _) triple, per entity x.
    head_incidence: Vec<Vec<RelationId>>,
    /// Sorted relation ids r with some (_, r, x) triple, per entity x.
    tail_incidence: Vec<Vec<RelationId>>,
}

impl TripleStore {
    /// Builds a store from named triples, interning names in
    /// first-appearance order (head, relation, tail per line).
    pub fn from_named_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut list = Vec::new();
        for (h, r, t) in triples {
            let head = entities.intern(h);
            let relation = relations.intern(r);
            let tail = entities.intern(t);
            list.push(Triple::new(head, relation, tail));
        }
        Self::from_parts(entities, relations, list)
    }

    /// Assembles a store from already-resolved ids, rebuilding incidence.
    pub fn from_parts(entities: Vocab, relations: Vocab, triples: Vec<Triple>) -> Self {
        let (head_incidence, tail_incidence) =
            build_incidence(entities.len(), &triples);
        TripleStore {
            entities,
            relations,
            triples,
            head_incidence,
            tail_incidence,
        }
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    fn check_entity(&self, x: EntityId) -> Result<(), KgError> {
        if x < self.entity_count() {
            Ok(())
        } else {
            Err(KgError::Domain(format!(
                "entity id {x} out of range (N_e = {})",
                self.entity_count()
            )))
        }
    }

    pub fn check_triple(&self, t: Triple) -> Result<(), KgError> {
        self.check_entity(t.head)?;
        self.check_entity(t.tail)?;
        if t.relation < self.relation_count() {
            Ok(())
        } else {
            Err(KgError::Domain(format!(
                "relation id {} out of range (N_r = {})",
                t.relation,
                self.relation_count()
            )))
        }
    }

    /// Incident relations of `x` under the default role-agnostic policy.
    pub fn incident_relations(&self, x: EntityId) -> Result<Vec<RelationId>, KgError> {
        self.check_entity(x)?;
        Ok(sorted_union(
            &self.head_incidence[x],
            &self.tail_incidence[x],
        ))
    }

    /// Binary encoding of an entity under the default role-agnostic policy:
    /// bit k is set iff relation k touches `x` on either side.
    pub fn binary_encoding(&self, x: EntityId) -> Result<Vec<bool>, KgError> {
        self.encoding(x, IncidenceMode::RoleAgnostic)
    }

    /// Binary encoding under an explicit incidence policy. Length is
    /// `N_r` for the single-sided modes, `2 * N_r` for `Directional`
    /// (out-relations first, in-relations second).
    pub fn encoding(&self, x: EntityId, mode: IncidenceMode) -> Result<Vec<bool>, KgError> {
        self.check_entity(x)?;
        let n_r = self.relation_count();
        let mut bits = vec![false; self.encoding_len(mode)];
        match mode {
            IncidenceMode::RoleAgnostic => {
                for &r in &self.head_incidence[x] {
                    bits[r] = true;
                }
                for &r in &self.tail_incidence[x] {
                    bits[r] = true;
                }
            }
            IncidenceMode::HeadOnly => {
                for &r in &self.head_incidence[x] {
                    bits[r] = true;
                }
            }
            IncidenceMode::Directional => {
                for &r in &self.head_incidence[x] {
                    bits[r] = true;
                }
                for &r in &self.tail_incidence[x] {
                    bits[n_r + r] = true;
                }
            }
        }
        Ok(bits)
    }

    pub fn encoding_len(&self, mode: IncidenceMode) -> usize {
        match mode {
            IncidenceMode::RoleAgnostic | IncidenceMode::HeadOnly => self.relation_count(),
            IncidenceMode::Directional => 2 * self.relation_count(),
        }
    }

    /// Length of the concatenated head||tail model input.
    pub fn input_dim(&self, mode: IncidenceMode) -> usize {
        2 * self.encoding_len(mode)
    }

    /// Concatenated binary encodings of a triple's head and tail, as scalars.
    pub fn triple_input<T: Scalar>(
        &self,
        t: Triple,
        mode: IncidenceMode,
    ) -> Result<Vec<T>, KgError> {
        self.check_triple(t)?;
        let head = self.encoding(t.head, mode)?;
        let tail = self.encoding(t.tail, mode)?;
        let mut out = Vec::with_capacity(head.len() + tail.len());
        out.extend(head.iter().map(|&b| if b { T::one() } else { T::zero() }));
        out.extend(tail.iter().map(|&b| if b { T::one() } else { T::zero() }));
        Ok(out)
    }

    /// Number of triples labeled `r`.
    pub fn relation_support(&self, r: RelationId) -> usize {
        self.triples.iter().filter(|t| t.relation == r).count()
    }

    /// Relabels every `absorbed` triple as `kept` and rebuilds incidence
    /// from the corrupted graph. Returns the new store together with each
    /// triple's original relation label (index-aligned with `triples()`).
    pub fn merge_relations(
        &self,
        spec: MergeSpec,
    ) -> Result<(TripleStore, Vec<RelationId>), KgError> {
        if spec.kept == spec.absorbed {
            return Err(KgError::InvalidMergeSpec(format!(
                "kept and absorbed are the same relation ({})",
                spec.kept
            )));
        }
        for r in [spec.kept, spec.absorbed] {
            if r >= self.relation_count() {
                return Err(KgError::Domain(format!(
                    "relation id {r} out of range (N_r = {})",
                    self.relation_count()
                )));
            }
            if self.relation_support(r) == 0 {
                return Err(KgError::InvalidMergeSpec(format!(
                    "relation {r} has no triples"
                )));
            }
        }
        let originals: Vec<RelationId> = self.triples.iter().map(|t| t.relation).collect();
        let merged: Vec<Triple> = self
            .triples
            .iter()
            .map(|t| {
                if t.relation == spec.absorbed {
                    Triple::new(t.head, spec.kept, t.tail)
                } else {
                    *t
                }
            })
            .collect();
        let store = TripleStore::from_parts(self.entities.clone(), self.relations.clone(), merged);
        Ok((store, originals))
    }
}

fn build_incidence(
    n_entities: usize,
    triples: &[Triple],
) -> (Vec<Vec<RelationId>>, Vec<Vec<RelationId>>) {
    let mut head = vec![Vec::new(); n_entities];
    let mut tail = vec![Vec::new(); n_entities];
    for t in triples {
        head[t.head].push(t.relation);
        tail[t.tail].push(t.relation);
    }
    for set in head.iter_mut().chain(tail.iter_mut()) {
        set.sort_unstable();
        set.dedup();
    }
    (head, tail)
}

fn sorted_union(a: &[RelationId], b: &[RelationId]) -> Vec<RelationId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}
