//! LambdaMART: gradient-boosted regression trees fitted to lambda gradients.
//! The pairwise scheme gives every discordant pair unit weight; the listwise
//! scheme scales it by the |NDCG@10| change of swapping the pair.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tree::{grow, GrowConfig, Presorted};
use super::{Flat, TrainConfig, TrainError, TrainingHistory, WeightedTree};

const NDCG_K: usize = 10;

fn discount(rank0: usize) -> f64 {
    if rank0 < NDCG_K {
        1.0 / ((rank0 + 2) as f64).log2()
    } else {
        0.0
    }
}

fn ideal_dcg(relevant: usize) -> f64 {
    (0..relevant.min(NDCG_K)).map(discount).sum()
}

/// Accumulates lambdas and second-order weights for one group.
fn group_lambdas(flat: &Flat<'_>, span: (usize, usize), scores: &[f64], listwise: bool, lambda: &mut [f64], hess: &mut [f64]) {
    let (s, e) = span;
    let pos: Vec<usize> = (s..e).filter(|&i| flat.rel[i] > 0).collect();
    let neg: Vec<usize> = (s..e).filter(|&i| flat.rel[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return;
    }
    let mut rank_of = vec![0usize; e - s];
    if listwise {
        for (r, i) in flat.ranked(span, scores).into_iter().enumerate() {
            rank_of[i - s] = r;
        }
    }
    let idcg = ideal_dcg(pos.len());
    for &i in &pos {
        for &j in &neg {
            let dz = if listwise {
                // Binary gains: swapping a relevant and an irrelevant row
                // moves exactly one unit of gain between their discounts.
                (discount(rank_of[i - s]) - discount(rank_of[j - s])).abs() / idcg
            } else {
                1.0
            };
            if dz == 0.0 {
                continue;
            }
            let rho = 1.0 / (1.0 + (scores[i] - scores[j]).exp());
            lambda[i] += dz * rho;
            lambda[j] -= dz * rho;
            let w = dz * rho * (1.0 - rho);
            hess[i] += w;
            hess[j] += w;
        }
    }
}

pub(super) fn train(flat: &Flat<'_>, cfg: &TrainConfig, listwise: bool) -> Result<(Vec<WeightedTree>, TrainingHistory), TrainError> {
    let mixed: Vec<usize> = (0..flat.spans.len())
        .filter(|&g| {
            let (s, e) = flat.spans[g];
            let p = flat.rel[s..e].iter().filter(|r| **r > 0).count();
            p > 0 && p < e - s
        })
        .collect();
    if mixed.is_empty() {
        return Err(TrainError::NoMixedGroup);
    }
    let n = flat.x.len();
    let data = Presorted::new(&flat.x);
    let grow_cfg = GrowConfig { max_leaves: cfg.max_leaves, min_rows_per_leaf: cfg.min_rows_per_leaf };
    let ones = vec![1.0; n];
    let mut scores = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut history = TrainingHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let take = ((mixed.len() as f64 * cfg.group_subsample).ceil() as usize).clamp(1, mixed.len());

    for _ in 0..cfg.rounds {
        let chosen: Vec<usize> = if take == mixed.len() {
            mixed.clone()
        } else {
            let mut c: Vec<usize> = sample(&mut rng, mixed.len(), take).into_iter().map(|k| mixed[k]).collect();
            c.sort_unstable();
            c
        };
        let mut lambda = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut include = vec![false; n];
        for &g in &chosen {
            let span = flat.spans[g];
            group_lambdas(flat, span, &scores, listwise, &mut lambda, &mut hess);
            include[span.0..span.1].iter_mut().for_each(|b| *b = true);
        }
        let mask = (take < mixed.len()).then_some(include.as_slice());
        let tree = {
            let (lambda, hess) = (&lambda, &hess);
            grow(&data, lambda, &ones, grow_cfg, mask, move |rows| {
                let g: f64 = rows.iter().map(|&r| lambda[r as usize]).sum();
                let h: f64 = rows.iter().map(|&r| hess[r as usize]).sum();
                if h > f64::MIN_POSITIVE {
                    cfg.learning_rate * g / h
                } else {
                    0.0
                }
            })
        };
        for (s, x) in scores.iter_mut().zip(&flat.x) {
            *s += tree.predict(&x.0);
        }
        trees.push(WeightedTree { weight: 1.0, tree });
        history.ndcg_at_10.push(flat.mean_ndcg(&scores));
    }
    Ok((trees, history))
}
