//! Desk-scale link prediction: DistMult embeddings trained with a
//! logistic loss over uniformly sampled negatives, evaluated with
//! filtered MRR and Hits@k.
//!
//! This exists to compare an original dataset against its
//! split-augmented export under fixed hyperparameters; it does not aim
//! for benchmark-scale throughput.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{Triple, TripleStore};
use crate::nn::AdamState;
use crate::scalar::Scalar;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum LinkPredError {
    #[error("id out of range: {0}")]
    Domain(String),
    #[error("non-finite value during embedding training (step {step})")]
    NonFinite { step: u64 },
}

/// Entity and relation embeddings with a diagonal relation interaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistMultModel<T> {
    pub dim: usize,
    n_entities: usize,
    n_relations: usize,
    /// Row-major `n_entities x dim`.
    entities: Vec<T>,
    /// Row-major `n_relations x dim`.
    relations: Vec<T>,
}

impl<T: Scalar> DistMultModel<T> {
    /// Glorot-uniform embeddings, seeded.
    pub fn new(n_entities: usize, n_relations: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let glorot = |rows: usize, cols: usize, rng: &mut dyn rand::RngCore| -> Vec<T> {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            (0..rows * cols)
                .map(|_| T::of(rng.gen_range(-limit..limit)))
                .collect()
        };
        DistMultModel {
            dim,
            n_entities,
            n_relations,
            entities: glorot(n_entities, dim, rng),
            relations: glorot(n_relations, dim, rng),
        }
    }

    pub fn entity_count(&self) -> usize {
        self.n_entities
    }

    #[inline]
    fn entity(&self, e: usize) -> &[T] {
        &self.entities[e * self.dim..(e + 1) * self.dim]
    }

    #[inline]
    fn relation(&self, r: usize) -> &[T] {
        &self.relations[r * self.dim..(r + 1) * self.dim]
    }

    /// `sum_i r_i * (h_i * t_i)`; the grouping keeps the score exactly
    /// symmetric in head and tail.
    pub fn score(&self, t: Triple) -> Result<T, LinkPredError> {
        if t.head >= self.n_entities || t.tail >= self.n_entities {
            return Err(LinkPredError::Domain(format!(
                "entity id out of range in {t:?} (N_e = {})",
                self.n_entities
            )));
        }
        if t.relation >= self.n_relations {
            return Err(LinkPredError::Domain(format!(
                "relation id out of range in {t:?} (N_r = {})",
                self.n_relations
            )));
        }
        Ok(self.score_unchecked(t.head, t.relation, t.tail))
    }

    #[inline]
    fn score_unchecked(&self, h: usize, r: usize, t: usize) -> T {
        let (eh, er, et) = (self.entity(h), self.relation(r), self.entity(t));
        let mut acc = T::zero();
        for i in 0..self.dim {
            acc = acc + er[i] * (eh[i] * et[i]);
        }
        acc
    }
}

/// Known true triples, for filtered ranking.
#[derive(Debug, Clone, Default)]
pub struct TripleSet(HashSet<(usize, usize, usize)>);

impl TripleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_all<'a>(&mut self, triples: impl IntoIterator<Item = &'a Triple>) {
        self.0
            .extend(triples.into_iter().map(|t| (t.head, t.relation, t.tail)));
    }

    /// Union of the training store and the held-out splits.
    pub fn from_splits(store: &TripleStore, valid: &[Triple], test: &[Triple]) -> Self {
        let mut set = TripleSet::new();
        set.add_all(store.triples());
        set.add_all(valid);
        set.add_all(test);
        set
    }

    pub fn contains(&self, h: usize, r: usize, t: usize) -> bool {
        self.0.contains(&(h, r, t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Trains DistMult on the store's triples with `lp_*` hyperparameters:
/// softplus logistic loss, `lp_negatives` uniform corruptions per
/// positive per side, Adam with decoupled weight decay.
pub fn train_distmult<T: Scalar>(
    store: &TripleStore,
    cfg: &TrainConfig,
) -> Result<DistMultModel<T>, LinkPredError> {
    let mut rng_init = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_init.set_stream(10);
    let mut rng_train = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng_train.set_stream(11);
    let mut model = DistMultModel::new(
        store.entity_count(),
        store.relation_count(),
        cfg.lp_dim,
        &mut rng_init,
    );
    let n = store.triples().len();
    if n == 0 || cfg.lp_epochs == 0 {
        return Ok(model);
    }
    let mut opt: AdamState<T> = AdamState::new(
        cfg.lp_learning_rate,
        cfg.lp_weight_decay,
        &[model.entities.len(), model.relations.len()],
    );
    let dim = model.dim;
    let mut grad_e = vec![T::zero(); model.entities.len()];
    let mut grad_r = vec![T::zero(); model.relations.len()];
    let mut indices: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.lp_epochs {
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng_train);
        for chunk in indices.chunks(cfg.lp_batch_size) {
            grad_e.fill(T::zero());
            grad_r.fill(T::zero());
            for &i in chunk {
                let t = store.triples()[i];
                accumulate(&model, t, false, &mut grad_e, &mut grad_r, dim);
                for _ in 0..cfg.lp_negatives {
                    let h = rng_train.gen_range(0..store.entity_count());
                    accumulate(
                        &model,
                        Triple::new(h, t.relation, t.tail),
                        true,
                        &mut grad_e,
                        &mut grad_r,
                        dim,
                    );
                    let tail = rng_train.gen_range(0..store.entity_count());
                    accumulate(
                        &model,
                        Triple::new(t.head, t.relation, tail),
                        true,
                        &mut grad_e,
                        &mut grad_r,
                        dim,
                    );
                }
            }
            let scale = T::of(1.0 / chunk.len() as f64);
            for g in grad_e.iter_mut().chain(grad_r.iter_mut()) {
                *g = *g * scale;
            }
            opt.begin_step();
            opt.update(0, &mut model.entities, &grad_e);
            opt.update(1, &mut model.relations, &grad_r);
        }
        if model
            .entities
            .iter()
            .chain(model.relations.iter())
            .any(|v| !v.is_finite())
        {
            return Err(LinkPredError::NonFinite {
                step: opt.step_count(),
            });
        }
    }
    Ok(model)
}

/// Adds the gradient of `softplus(-score)` (positive) or
/// `softplus(score)` (negative) for one triple.
fn accumulate<T: Scalar>(
    model: &DistMultModel<T>,
    t: Triple,
    negative: bool,
    grad_e: &mut [T],
    grad_r: &mut [T],
    dim: usize,
) {
    let s = model.score_unchecked(t.head, t.relation, t.tail);
    // d softplus(-s)/ds = -sigmoid(-s); d softplus(s)/ds = sigmoid(s)
    let ds = if negative {
        crate::nn::sigmoid(s)
    } else {
        -crate::nn::sigmoid(-s)
    };
    let (eh, er, et) = (
        model.entity(t.head),
        model.relation(t.relation),
        model.entity(t.tail),
    );
    for i in 0..dim {
        grad_e[t.head * dim + i] = grad_e[t.head * dim + i] + ds * er[i] * et[i];
        grad_r[t.relation * dim + i] = grad_r[t.relation * dim + i] + ds * eh[i] * et[i];
        grad_e[t.tail * dim + i] = grad_e[t.tail * dim + i] + ds * eh[i] * er[i];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    /// Ranked queries: two per test triple (head side and tail side).
    pub evaluated: usize,
}

/// Filtered ranks of a test triple's head and tail against all entity
/// corruptions. Corruptions forming known true triples are skipped; the
/// rank is `1 + #strictly_better + #ties / 2` (mean rank among ties).
pub fn triple_ranks<T: Scalar>(
    model: &DistMultModel<T>,
    known: &TripleSet,
    t: Triple,
) -> Result<(f64, f64), LinkPredError> {
    let true_score = model.score(t)?.to_double();
    let mut rank = |side_head: bool| -> f64 {
        let mut greater = 0usize;
        let mut equal = 0usize;
        for e in 0..model.n_entities {
            let (h, tail) = if side_head { (e, t.tail) } else { (t.head, e) };
            if (h, tail) == (t.head, t.tail) {
                continue;
            }
            if known.contains(h, t.relation, tail) {
                continue;
            }
            let s = model.score_unchecked(h, t.relation, tail).to_double();
            if s > true_score {
                greater += 1;
            } else if s == true_score {
                equal += 1;
            }
        }
        1.0 + greater as f64 + equal as f64 / 2.0
    };
    Ok((rank(true), rank(false)))
}

/// MRR and Hits@{1,10} over both ranking sides of every test triple.
pub fn evaluate_filtered<T: Scalar>(
    model: &DistMultModel<T>,
    known: &TripleSet,
    test: &[Triple],
) -> Result<RankingMetrics, LinkPredError> {
    let mut mrr = 0.0;
    let mut hits1 = 0.0;
    let mut hits10 = 0.0;
    for &t in test {
        let (head_rank, tail_rank) = triple_ranks(model, known, t)?;
        for rank in [head_rank, tail_rank] {
            mrr += 1.0 / rank;
            if rank <= 1.0 {
                hits1 += 1.0;
            }
            if rank <= 10.0 {
                hits10 += 1.0;
            }
        }
    }
    let q = (2 * test.len()) as f64;
    Ok(RankingMetrics {
        mrr: mrr / q,
        hits1: hits1 / q,
        hits10: hits10 / q,
        evaluated: 2 * test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TripleStore;
    use crate::synth;

    fn cfg() -> TrainConfig {
        TrainConfig {
            lp_dim: 8,
            lp_epochs: 30,
            lp_learning_rate: 0.05,
            lp_batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    fn toy_model(seed: u64) -> DistMultModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DistMultModel::new(5, 2, 4, &mut rng)
    }

    #[test]
    fn zero_embeddings_score_zero() {
        let mut model = toy_model(0);
        model.entities.fill(0.0);
        assert_eq!(model.score(Triple::new(0, 0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn two_dimensional_hand_case() {
        // e_h = [1,2], r = [0.5,-1], e_t = [3,0.5]:
        // 0.5*1*3 + (-1)*2*0.5 = 1.5 - 1 = 0.5
        let mut model = toy_model(1);
        model.dim = 2;
        model.n_entities = 2;
        model.n_relations = 1;
        model.entities = vec![1.0, 2.0, 3.0, 0.5];
        model.relations = vec![0.5, -1.0];
        let s = model.score(Triple::new(0, 0, 1)).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn score_is_exactly_symmetric_in_head_and_tail() {
        let model = toy_model(2);
        for h in 0..5 {
            for t in 0..5 {
                let a = model.score(Triple::new(h, 1, t)).unwrap();
                let b = model.score(Triple::new(t, 1, h)).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn invalid_ids_are_domain_errors() {
        let model = toy_model(3);
        assert!(matches!(
            model.score(Triple::new(99, 0, 1)),
            Err(LinkPredError::Domain(_))
        ));
        assert!(matches!(
            model.score(Triple::new(0, 9, 1)),
            Err(LinkPredError::Domain(_))
        ));
    }

    #[test]
    fn zero_epochs_return_the_initialized_model() {
        let store = synth::random_kg(10, 2, 30, 4);
        let c = TrainConfig {
            lp_epochs: 0,
            ..cfg()
        };
        let trained: DistMultModel<f64> = train_distmult(&store, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(10);
        let fresh: DistMultModel<f64> =
            DistMultModel::new(10, 2, c.lp_dim, &mut rng);
        assert_eq!(trained.entities, fresh.entities);
    }

    #[test]
    fn training_separates_true_from_corrupted_scores() {
        // two relation patterns over disjoint entity groups
        let store = synth::two_relation_kg(10, synth::SignatureOverlap::Disjoint, 5);
        let model: DistMultModel<f64> = train_distmult(&store, &cfg()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut true_sum = 0.0;
        let mut corrupt_sum = 0.0;
        let mut n = 0.0;
        for &t in store.triples() {
            true_sum += model.score(t).unwrap();
            let corrupted = Triple::new(
                rng.gen_range(0..store.entity_count()),
                t.relation,
                rng.gen_range(0..store.entity_count()),
            );
            corrupt_sum += model.score(corrupted).unwrap();
            n += 1.0;
        }
        assert!(
            true_sum / n > corrupt_sum / n,
            "true {true_sum} vs corrupted {corrupt_sum}"
        );
    }

    #[test]
    fn single_triple_universe_ranks_first() {
        let store = TripleStore::from_named_triples(vec![("a", "r", "b")]);
        let model: DistMultModel<f64> = train_distmult(
            &store,
            &TrainConfig {
                lp_epochs: 1,
                ..cfg()
            },
        )
        .unwrap();
        let known = TripleSet::from_splits(&store, &[], &[]);
        let metrics = evaluate_filtered(&model, &known, store.triples()).unwrap();
        assert_eq!(metrics.mrr, 1.0);
        assert_eq!(metrics.hits1, 1.0);
        assert_eq!(metrics.hits10, 1.0);
    }

    #[test]
    fn filtered_rank_never_exceeds_raw_rank() {
        let ds = synth::random_dataset(12, 3, 80, 6);
        let model: DistMultModel<f64> = train_distmult(&ds.store, &cfg()).unwrap();
        let known = TripleSet::from_splits(&ds.store, &ds.valid, &ds.test);
        let empty = TripleSet::new();
        for &t in &ds.test {
            let (fh, ft) = triple_ranks(&model, &known, t).unwrap();
            let (rh, rt) = triple_ranks(&model, &empty, t).unwrap();
            assert!(fh <= rh);
            assert!(ft <= rt);
        }
    }

    #[test]
    fn metric_bounds_hold() {
        let ds = synth::random_dataset(12, 3, 80, 7);
        let model: DistMultModel<f64> = train_distmult(&ds.store, &cfg()).unwrap();
        let known = TripleSet::from_splits(&ds.store, &ds.valid, &ds.test);
        let m = evaluate_filtered(&model, &known, &ds.test).unwrap();
        assert!(m.hits1 <= m.hits10);
        assert!((0.0..=1.0).contains(&m.hits1));
        assert!((0.0..=1.0).contains(&m.hits10));
        assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        assert!(m.mrr >= 1.0 / 12.0);
    }
}
