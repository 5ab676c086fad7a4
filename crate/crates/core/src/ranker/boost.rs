//! Discrete AdaBoost over depth-1 stumps on +1/-1 labels.

use super::tree::{grow, GrowConfig, Node, Presorted};
use super::{Flat, TrainConfig, TrainError, TrainingHistory, WeightedTree};

const MIN_ERROR: f64 = 1e-10;

pub(super) fn train(flat: &Flat<'_>, cfg: &TrainConfig) -> Result<(Vec<WeightedTree>, TrainingHistory), TrainError> {
    let n = flat.x.len();
    let y: Vec<f64> = flat.rel.iter().map(|&r| if r > 0 { 1.0 } else { -1.0 }).collect();
    let mut d = vec![1.0 / n as f64; n];
    let data = Presorted::new(&flat.x);
    let stump = GrowConfig { max_leaves: 2, min_rows_per_leaf: 1 };
    let mut trees = Vec::new();
    let mut history = TrainingHistory::default();
    let mut scores = vec![0.0; n];

    for _ in 0..cfg.rounds {
        let tree = {
            let (y, d) = (&y, &d);
            grow(&data, y, d, stump, None, move |rows| {
                let s: f64 = rows.iter().map(|&r| d[r as usize] * y[r as usize]).sum();
                if s > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
        };
        if !matches!(tree.nodes[0], Node::Split { .. }) {
            break;
        }
        let h: Vec<f64> = flat.x.iter().map(|x| tree.predict(&x.0)).collect();
        let err: f64 = (0..n).filter(|&i| h[i] != y[i]).map(|i| d[i]).sum();
        if err >= 0.5 {
            break;
        }
        let e = err.max(MIN_ERROR);
        let alpha = cfg.learning_rate * 0.5 * ((1.0 - e) / e).ln();
        for i in 0..n {
            d[i] *= (-alpha * y[i] * h[i]).exp();
            scores[i] += alpha * h[i];
        }
        let z: f64 = d.iter().sum();
        for w in &mut d {
            *w /= z;
        }
        trees.push(WeightedTree { weight: alpha, tree });
        history.ndcg_at_10.push(flat.mean_ndcg(&scores));
    }
    if trees.is_empty() {
        return Err(TrainError::NoInformativeSplit);
    }
    Ok((trees, history))
}
