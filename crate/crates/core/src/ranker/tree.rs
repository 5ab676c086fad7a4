//! Regression trees grown leaf-wise (best gain first) on weighted squared
//! error, using per-feature presorted row lists that are stably partitioned
//! on every split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, FEATURE_COUNT};

const MIN_GAIN: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease at this node, per unit of node weight.
        gain: f64,
        cover: f64,
    },
    Leaf { value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Checks child indices and that every node is reachable exactly once.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() {
                return Err(format!("child index {i} out of range"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("node {i} reachable twice"));
            }
            match &self.nodes[i] {
                Node::Leaf { value, .. } if !value.is_finite() => return Err(format!("leaf {i} is not finite")),
                Node::Leaf { .. } => {}
                Node::Split { feature, threshold, left, right, .. } => {
                    if *feature >= FEATURE_COUNT {
                        return Err(format!("node {i} splits on unknown feature {feature}"));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has a non-finite threshold"));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err("tree has unreachable nodes".into());
        }
        Ok(())
    }

    /// Per-feature impurity decrease weighted by the probability of reaching
    /// the splitting node.
    pub fn weighted_gains(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        let root = self.nodes.first().map(Node::cover).unwrap_or(0.0);
        if root <= 0.0 {
            return out;
        }
        for n in &self.nodes {
            if let Node::Split { feature, gain, cover, .. } = n {
                out[*feature] += cover / root * gain;
            }
        }
        out
    }
}

/// Training rows shared by every tree of an ensemble, with each feature's
/// row order precomputed once.
pub struct Presorted<'a> {
    x: &'a [FeatureVector],
    order: Vec<Vec<u32>>,
}

impl<'a> Presorted<'a> {
    pub fn new(x: &'a [FeatureVector]) -> Self {
        let order = (0..FEATURE_COUNT)
            .into_par_iter()
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize].0[f].total_cmp(&x[b as usize].0[f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { x, order }
    }

    pub fn rows(&self) -> usize {
        self.x.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowConfig {
    pub max_leaves: usize,
    pub min_rows_per_leaf: usize,
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Number of rows going left.
    left_rows: usize,
}

struct OpenLeaf {
    node: usize,
    /// Row lists, one per feature, each sorted by that feature.
    lists: Vec<Vec<u32>>,
    best: Option<SplitCandidate>,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m < b {
        m
    } else {
        a
    }
}

fn best_split_for(
    x: &[FeatureVector],
    list: &[u32],
    feature: usize,
    target: &[f64],
    weight: &[f64],
    min_rows: usize,
) -> Option<SplitCandidate> {
    let n = list.len();
    if n < 2 * min_rows.max(1) {
        return None;
    }
    let (mut s_tot, mut w_tot, mut ss_tot) = (0.0, 0.0, 0.0);
    for &r in list {
        let (w, t) = (weight[r as usize], target[r as usize]);
        s_tot += w * t;
        w_tot += w;
        ss_tot += w * t * t;
    }
    let min_gain = MIN_GAIN.max(1e-12 * ss_tot);
    if w_tot <= 0.0 {
        return None;
    }
    let parent = s_tot * s_tot / w_tot;
    let (mut s_l, mut w_l) = (0.0, 0.0);
    let mut best: Option<SplitCandidate> = None;
    for k in 0..n - 1 {
        let r = list[k] as usize;
        s_l += weight[r] * target[r];
        w_l += weight[r];
        let left_rows = k + 1;
        if left_rows < min_rows.max(1) || n - left_rows < min_rows.max(1) {
            continue;
        }
        let (v, v_next) = (x[r].0[feature], x[list[k + 1] as usize].0[feature]);
        if v == v_next {
            continue;
        }
        let w_r = w_tot - w_l;
        if w_l <= 0.0 || w_r <= 0.0 {
            continue;
        }
        let s_r = s_tot - s_l;
        let gain = s_l * s_l / w_l + s_r * s_r / w_r - parent;
        if gain > min_gain && best.is_none_or(|b| gain > b.gain) {
            best = Some(SplitCandidate { feature, threshold: midpoint(v, v_next), gain, left_rows });
        }
    }
    best
}

fn find_best(x: &[FeatureVector], lists: &[Vec<u32>], target: &[f64], weight: &[f64], min_rows: usize) -> Option<SplitCandidate> {
    let per_feature: Vec<Option<SplitCandidate>> = lists
        .par_iter()
        .enumerate()
        .map(|(f, l)| best_split_for(x, l, f, target, weight, min_rows))
        .collect();
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<SplitCandidate>, c| match acc {
            Some(a) if a.gain >= c.gain => Some(a),
            _ => Some(c),
        })
}

/// Grows one tree minimizing weighted squared error of `target` over the
/// rows selected by `include` (all rows when `None`). Leaf
/// values are set afterwards by `leaf_value`, which receives the rows that
/// reach the leaf.
pub fn grow(
    data: &Presorted<'_>,
    target: &[f64],
    weight: &[f64],
    cfg: GrowConfig,
    include: Option<&[bool]>,
    leaf_value: impl Fn(&[u32]) -> f64,
) -> Tree {
    let x = data.x;
    let root_lists: Vec<Vec<u32>> = match include {
        None => data.order.clone(),
        Some(mask) => data.order.iter().map(|l| l.iter().copied().filter(|&r| mask[r as usize]).collect()).collect(),
    };
    let total_w: f64 = root_lists[0].iter().map(|&r| weight[r as usize]).sum();
    let mut nodes = vec![Node::Leaf { value: 0.0, cover: total_w }];
    let best = find_best(x, &root_lists, target, weight, cfg.min_rows_per_leaf);
    let mut open = vec![OpenLeaf { node: 0, lists: root_lists, best }];
    let mut finished: Vec<(usize, Vec<u32>)> = Vec::new();
    let mut leaves = 1;
    let mut side = vec![false; x.len()];

    while leaves < cfg.max_leaves.max(1) {
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|b| (i, b.gain, l.node)))
            .fold(None, |acc: Option<(usize, f64, usize)>, c| match acc {
                Some(a) if a.1 > c.1 || (a.1 == c.1 && a.2 < c.2) => Some(a),
                _ => Some(c),
            });
        let Some((idx, _, _)) = pick else { break };
        let leaf = open.swap_remove(idx);
        let split = leaf.best.expect("picked leaf has a split");

        let split_list = &leaf.lists[split.feature];
        for (k, &r) in split_list.iter().enumerate() {
            side[r as usize] = k < split.left_rows;
        }
        let mut left_lists = Vec::with_capacity(FEATURE_COUNT);
        let mut right_lists = Vec::with_capacity(FEATURE_COUNT);
        for list in &leaf.lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| side[r as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let cover_of = |l: &[u32]| l.iter().map(|&r| weight[r as usize]).sum::<f64>();
        let (lc, rc) = (cover_of(&left_lists[0]), cover_of(&right_lists[0]));
        let parent_cover = nodes[leaf.node].cover();
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: 0.0, cover: lc });
        nodes.push(Node::Leaf { value: 0.0, cover: rc });
        nodes[leaf.node] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: li,
            right: ri,
            gain: split.gain / parent_cover.max(f64::MIN_POSITIVE),
            cover: parent_cover,
        };
        leaves += 1;
        let lb = find_best(x, &left_lists, target, weight, cfg.min_rows_per_leaf);
        let rb = find_best(x, &right_lists, target, weight, cfg.min_rows_per_leaf);
        open.push(OpenLeaf { node: li, lists: left_lists, best: lb });
        open.push(OpenLeaf { node: ri, lists: right_lists, best: rb });
    }
    for l in open {
        let mut rows = l.lists.into_iter().next().unwrap_or_default();
        rows.sort_unstable();
        finished.push((l.node, rows));
    }
    for (node, rows) in finished {
        let cover = nodes[node].cover();
        nodes[node] = Node::Leaf { value: leaf_value(&rows), cover };
    }
    Tree { nodes }
}
