//! Synthetic knowledge graphs with controlled incidence structure, used
//! by the test suites and the desk-scale evaluation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{Dataset, TripleStore};

/// Whether the two target relations' entity groups carry distinguishing
/// signature relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureOverlap {
    /// Each group has its own signature relation: after merging the two
    /// targets, their fingerprints remain perfectly separable.
    Disjoint,
    /// Both groups share one signature relation: after merging, the
    /// fingerprint distributions coincide and no classifier can beat
    /// chance.
    Identical,
}

/// Two target relations (`rel_a` = 0, `rel_b` = 1) over disjoint entity
/// pools, each entity additionally carrying a signature edge. With
/// `n_per_relation` triples per relation the graph has `4 n` triples
/// under either overlap mode.
pub fn two_relation_kg(
    n_per_relation: usize,
    overlap: SignatureOverlap,
    seed: u64,
) -> TripleStore {
    let mut triples: Vec<(String, String, String)> = Vec::new();
    for group in ["a", "b"] {
        let target = format!("rel_{group}");
        let signature = match overlap {
            SignatureOverlap::Disjoint => format!("sig_{group}"),
            SignatureOverlap::Identical => "sig".to_string(),
        };
        for i in 0..n_per_relation {
            let head = format!("h_{group}{i}");
            let tail = format!("t_{group}{i}");
            triples.push((head.clone(), target.clone(), tail.clone()));
            triples.push((head, signature.clone(), tail));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    // targets first so they get relation ids 0 and 1
    triples.sort_by_key(|(_, r, _)| !r.starts_with("rel_"));
    TripleStore::from_named_triples(
        triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
    )
}

/// One deliberately ambiguous relation (id 0) spanning two entity
/// domains with different signatures, next to four clean single-domain
/// signature relations. The ambiguous unit accumulates a bimodal
/// reconstruction loss, which is what the variance criterion detects.
pub fn ambiguous_relation_kg(n_per_group: usize, seed: u64) -> TripleStore {
    let mut triples: Vec<(String, String, String)> = Vec::new();
    for group in ["x", "y"] {
        for i in 0..n_per_group {
            let head = format!("{group}h{i}");
            let tail = format!("{group}t{i}");
            triples.push((head.clone(), "amb".to_string(), tail.clone()));
            triples.push((head, format!("sig_{group}_head"), format!("{group}u{i}")));
            triples.push((format!("{group}w{i}"), format!("sig_{group}_tail"), tail));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    triples.sort_by_key(|(_, r, _)| r != "amb");
    TripleStore::from_named_triples(
        triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
    )
}

/// Uniformly random triples; shape checks and pipeline tests only.
pub fn random_kg(n_entities: usize, n_relations: usize, n_triples: usize, seed: u64) -> TripleStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triples: Vec<(String, String, String)> = (0..n_triples)
        .map(|_| {
            (
                format!("e{}", rng.gen_range(0..n_entities)),
                format!("r{}", rng.gen_range(0..n_relations)),
                format!("e{}", rng.gen_range(0..n_entities)),
            )
        })
        .collect();
    TripleStore::from_named_triples(
        triples.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())),
    )
}

/// A random dataset with an 80/10/10 train/valid/test split over a
/// shared vocabulary.
pub fn random_dataset(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    seed: u64,
) -> Dataset {
    let store = random_kg(n_entities, n_relations, n_triples, seed);
    let all = store.triples().to_vec();
    let n_valid = n_triples / 10;
    let n_test = n_triples / 10;
    let n_train = all.len() - n_valid - n_test;
    let train = all[..n_train].to_vec();
    let valid = all[n_train..n_train + n_valid].to_vec();
    let test = all[n_train + n_valid..].to_vec();
    Dataset {
        store: TripleStore::from_parts(store.entities().clone(), store.relations().clone(), train),
        valid,
        test,
        name: format!("synthetic-{seed}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{IncidenceMode, MergeSpec};

    #[test]
    fn disjoint_signatures_separate_after_merging() {
        let store = two_relation_kg(50, SignatureOverlap::Disjoint, 0);
        assert_eq!(store.triples().len(), 200);
        assert_eq!(store.relations().name(0), Some("rel_a"));
        assert_eq!(store.relations().name(1), Some("rel_b"));
        let (merged, originals) = store
            .merge_relations(MergeSpec {
                kept: 0,
                absorbed: 1,
            })
            .unwrap();
        // fingerprints of the merged relation's triples fall into exactly
        // two patterns, one per original relation
        let mut seen_a = None;
        let mut seen_b = None;
        for (i, t) in merged.triples().iter().enumerate() {
            if t.relation != 0 {
                continue;
            }
            let x: Vec<f64> = merged.triple_input(*t, IncidenceMode::RoleAgnostic).unwrap();
            match originals[i] {
                0 => match &seen_a {
                    None => seen_a = Some(x),
                    Some(prev) => assert_eq!(prev, &x),
                },
                1 => match &seen_b {
                    None => seen_b = Some(x),
                    Some(prev) => assert_eq!(prev, &x),
                },
                _ => unreachable!(),
            }
        }
        assert_ne!(seen_a, seen_b, "the two groups must stay separable");
    }

    #[test]
    fn identical_signatures_collapse_after_merging() {
        let store = two_relation_kg(20, SignatureOverlap::Identical, 0);
        let (merged, originals) = store
            .merge_relations(MergeSpec {
                kept: 0,
                absorbed: 1,
            })
            .unwrap();
        let mut patterns: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, t) in merged.triples().iter().enumerate() {
            if t.relation == 0 {
                patterns.push((
                    originals[i],
                    merged.triple_input(*t, IncidenceMode::RoleAgnostic).unwrap(),
                ));
            }
        }
        let a = patterns.iter().find(|(o, _)| *o == 0).unwrap();
        let b = patterns.iter().find(|(o, _)| *o == 1).unwrap();
        assert_eq!(a.1, b.1, "groups must be indistinguishable");
    }

    #[test]
    fn ambiguous_relation_has_two_fingerprint_patterns() {
        let store = ambiguous_relation_kg(10, 0);
        assert_eq!(store.relations().name(0), Some("amb"));
        let mut patterns: Vec<Vec<f64>> = Vec::new();
        for t in store.triples().iter().filter(|t| t.relation == 0) {
            let x = store.triple_input(*t, IncidenceMode::RoleAgnostic).unwrap();
            if !patterns.contains(&x) {
                patterns.push(x);
            }
        }
        assert_eq!(patterns.len(), 2);
    }

    #[test]
    fn random_dataset_partitions_the_triples() {
        let ds = random_dataset(30, 4, 100, 1);
        assert_eq!(ds.store.triples().len(), 80);
        assert_eq!(ds.valid.len(), 10);
        assert_eq!(ds.test.len(), 10);
    }
}
