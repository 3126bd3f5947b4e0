//! Exact greedy tree growing shared by every tree-based model.
//!
//! Samples live in "slots"; a slot maps to a data row and the same row may
//! occupy several slots (bootstrap). Each feature keeps its slots in sorted
//! value order and every node owns the same contiguous range in all of
//! those orders, so a split is a stable partition rather than a re-sort.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::info::entropy_f64;
use crate::rng::Rng;

/// Nodes above this many slots scan features in parallel.
const PARALLEL_SCAN_MIN: usize = 2048;
/// Nodes at most this large sort their candidate features directly.
const SMALL_NODE: usize = 256;
/// Splits must improve the criterion by more than this.
const MIN_GAIN: f64 = 1e-12;
/// Hessian damping for Newton leaves and gains.
pub(crate) const HESSIAN_DAMPING: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Criterion improvement of this split (information gain for
        /// classification trees).
        gain: f64,
        /// Node impurity before splitting (entropy for classification).
        impurity: f64,
        samples: usize,
    },
    Leaf {
        /// Class-1 proportion for classification trees, raw value otherwise.
        value: f64,
        impurity: f64,
        samples: usize,
    },
}

/// Binary tree stored as an arena; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf {
                value,
                impurity: 0.0,
                samples: 0,
            }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn used_features(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Split { threshold, .. } => threshold.is_finite(),
            Node::Leaf { value, .. } => value.is_finite(),
        })
    }
}

/// Split quality and leaf value over per-slot sufficient statistics.
pub(crate) trait Criterion: Sync {
    type Stats: Copy + Default + Send + Sync;
    fn add(&self, s: &mut Self::Stats, slot: usize);
    fn diff(a: &Self::Stats, b: &Self::Stats) -> Self::Stats;
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn leaf_value(&self, s: &Self::Stats) -> f64;
    fn impurity(&self, s: &Self::Stats) -> f64;
}

/// Information gain over binary labels.
pub(crate) struct EntropyCriterion {
    pub labels: Vec<bool>,
}

impl Criterion for EntropyCriterion {
    type Stats = [f64; 2];

    fn add(&self, s: &mut [f64; 2], slot: usize) {
        s[usize::from(self.labels[slot])] += 1.0;
    }

    fn diff(a: &[f64; 2], b: &[f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }

    fn gain(&self, p: &[f64; 2], l: &[f64; 2], r: &[f64; 2]) -> f64 {
        let n = p[0] + p[1];
        entropy_f64(p) - (l[0] + l[1]) / n * entropy_f64(l) - (r[0] + r[1]) / n * entropy_f64(r)
    }

    fn leaf_value(&self, s: &[f64; 2]) -> f64 {
        s[1] / (s[0] + s[1])
    }

    fn impurity(&self, s: &[f64; 2]) -> f64 {
        entropy_f64(s)
    }
}

/// Squared-error reduction for real targets.
pub(crate) struct VarianceCriterion {
    pub targets: Vec<f64>,
}

impl Criterion for VarianceCriterion {
    /// (count, sum, sum of squares)
    type Stats = [f64; 3];

    fn add(&self, s: &mut [f64; 3], slot: usize) {
        let y = self.targets[slot];
        s[0] += 1.0;
        s[1] += y;
        s[2] += y * y;
    }

    fn diff(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    fn gain(&self, p: &[f64; 3], l: &[f64; 3], r: &[f64; 3]) -> f64 {
        l[1] * l[1] / l[0] + r[1] * r[1] / r[0] - p[1] * p[1] / p[0]
    }

    fn leaf_value(&self, s: &[f64; 3]) -> f64 {
        s[1] / s[0]
    }

    fn impurity(&self, s: &[f64; 3]) -> f64 {
        let mean = s[1] / s[0];
        (s[2] / s[0] - mean * mean).max(0.0)
    }
}

/// Second-order gain over (weighted) gradients and hessians.
pub(crate) struct NewtonCriterion {
    pub gradients: Vec<f64>,
    pub hessians: Vec<f64>,
}

impl NewtonCriterion {
    fn score(g: f64, h: f64) -> f64 {
        g * g / (h + HESSIAN_DAMPING)
    }
}

impl Criterion for NewtonCriterion {
    type Stats = [f64; 2];

    fn add(&self, s: &mut [f64; 2], slot: usize) {
        s[0] += self.gradients[slot];
        s[1] += self.hessians[slot];
    }

    fn diff(a: &[f64; 2], b: &[f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }

    fn gain(&self, p: &[f64; 2], l: &[f64; 2], r: &[f64; 2]) -> f64 {
        Self::score(l[0], l[1]) + Self::score(r[0], r[1]) - Self::score(p[0], p[1])
    }

    fn leaf_value(&self, s: &[f64; 2]) -> f64 {
        -s[0] / (s[1] + HESSIAN_DAMPING)
    }

    fn impurity(&self, s: &[f64; 2]) -> f64 {
        Self::score(s[0], s[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` examines all.
    pub max_features: Option<usize>,
}

/// Row indices sorted by each feature, computed once per dataset.
pub(crate) struct Presorted {
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(columns: &[Vec<f64>]) -> Self {
        let order = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

#[derive(Clone, Copy)]
struct Entry {
    value: f64,
    slot: u32,
}

/// Per-feature (value, slot) lists in ascending value order for the given
/// slot→row map.
fn slot_orders(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    rows: &[u32],
    n_rows: usize,
) -> Vec<Vec<Entry>> {
    let mut start = vec![0u32; n_rows + 1];
    for &r in rows {
        start[r as usize + 1] += 1;
    }
    for i in 0..n_rows {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut slots_by_row = vec![0u32; rows.len()];
    for (slot, &r) in rows.iter().enumerate() {
        slots_by_row[fill[r as usize] as usize] = slot as u32;
        fill[r as usize] += 1;
    }
    presorted
        .order
        .par_iter()
        .zip(columns)
        .map(|(order, col)| {
            let mut out = Vec::with_capacity(rows.len());
            for &r in order {
                let (a, b) = (start[r as usize] as usize, start[r as usize + 1] as usize);
                let value = col[r as usize];
                out.extend(slots_by_row[a..b].iter().map(|&slot| Entry { value, slot }));
            }
            out
        })
        .collect()
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a, C: Criterion> {
    columns: &'a [Vec<f64>],
    rows: &'a [u32],
    criterion: &'a C,
    params: TreeParams,
    rng: Option<&'a mut Rng>,
    order: Vec<Vec<Entry>>,
    goes_left: Vec<bool>,
    scratch: Vec<Entry>,
    nodes: Vec<Node>,
}

/// Grows one tree over `rows` (slot→row) with the given criterion.
///
/// `rng` is required when `params.max_features` restricts the features
/// examined per node.
pub(crate) fn grow<C: Criterion>(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    rows: &[u32],
    criterion: &C,
    params: TreeParams,
    rng: Option<&mut Rng>,
) -> Tree {
    let n_rows = columns.first().map_or(0, Vec::len);
    let small = rows.len() <= SMALL_NODE;
    let mut b = Builder {
        columns,
        rows,
        criterion,
        params,
        rng,
        order: if small {
            Vec::new()
        } else {
            slot_orders(columns, presorted, rows, n_rows)
        },
        goes_left: if small {
            Vec::new()
        } else {
            vec![false; rows.len()]
        },
        scratch: Vec::new(),
        nodes: Vec::new(),
    };
    if rows.is_empty() {
        return Tree::leaf(0.0);
    }
    if small {
        let mut slots: Vec<u32> = (0..rows.len() as u32).collect();
        b.build_small(&mut slots, 0);
    } else {
        b.build(0, rows.len(), 0);
    }
    Tree { nodes: b.nodes }
}

impl<C: Criterion> Builder<'_, C> {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        if end - start <= SMALL_NODE {
            let mut slots: Vec<u32> = self.order[0][start..end].iter().map(|e| e.slot).collect();
            return self.build_small(&mut slots, depth);
        }
        let id = self.nodes.len();
        let mut stats = C::Stats::default();
        for e in &self.order[0][start..end] {
            self.criterion.add(&mut stats, e.slot as usize);
        }
        let impurity = self.criterion.impurity(&stats);
        let samples = end - start;
        let leaf = Node::Leaf {
            value: self.criterion.leaf_value(&stats),
            impurity,
            samples,
        };
        self.nodes.push(leaf);

        if depth >= self.params.max_depth || samples < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some(best) = self.best_split(start, end, &stats) else {
            return id;
        };

        let n_left = self.partition(start, end, best.feature, best.threshold);
        let left = self.build(start, start + n_left, depth + 1);
        let right = self.build(start + n_left, end, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain: best.gain,
            impurity,
            samples,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.columns.len();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                let mut f = sample(rng, d, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&mut self, start: usize, end: usize, parent: &C::Stats) -> Option<BestSplit> {
        let features = self.candidate_features();
        let scan = |&f: &usize| self.scan_feature(f, start, end, parent);
        let per_feature: Vec<Option<BestSplit>> = if end - start >= PARALLEL_SCAN_MIN {
            features.par_iter().map(scan).collect()
        } else {
            features.iter().map(scan).collect()
        };
        // Ascending feature order with strict improvement keeps the lowest
        // feature index on ties.
        let mut best: Option<BestSplit> = None;
        for cand in per_feature.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| cand.gain > b.gain) {
                best = Some(cand);
            }
        }
        best
    }

    fn scan_feature(
        &self,
        f: usize,
        start: usize,
        end: usize,
        parent: &C::Stats,
    ) -> Option<BestSplit> {
        self.scan_entries(f, &self.order[f][start..end], parent)
    }

    fn scan_entries(&self, f: usize, order: &[Entry], parent: &C::Stats) -> Option<BestSplit> {
        let n = order.len();
        let msl = self.params.min_samples_leaf.max(1);
        let mut left = C::Stats::default();
        let mut best: Option<BestSplit> = None;
        let mut prev = order[0].value;
        self.criterion.add(&mut left, order[0].slot as usize);
        for (i, e) in order.iter().enumerate().skip(1) {
            let v = e.value;
            if v > prev && i >= msl && n - i >= msl {
                let right = C::diff(parent, &left);
                let gain = self.criterion.gain(parent, &left, &right);
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = prev + (v - prev) / 2.0;
                    let threshold = if mid < v { mid } else { prev };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
            self.criterion.add(&mut left, e.slot as usize);
            prev = v;
        }
        best
    }

    /// Recursion for small nodes: candidate features are sorted per node
    /// instead of maintaining every presorted order.
    fn build_small(&mut self, slots: &mut [u32], depth: usize) -> usize {
        let id = self.nodes.len();
        let mut stats = C::Stats::default();
        for &slot in slots.iter() {
            self.criterion.add(&mut stats, slot as usize);
        }
        let impurity = self.criterion.impurity(&stats);
        let samples = slots.len();
        self.nodes.push(Node::Leaf {
            value: self.criterion.leaf_value(&stats),
            impurity,
            samples,
        });
        if depth >= self.params.max_depth || samples < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let mut best: Option<BestSplit> = None;
        let mut entries = Vec::with_capacity(samples);
        for f in self.candidate_features() {
            let col = &self.columns[f];
            entries.clear();
            entries.extend(slots.iter().map(|&slot| Entry {
                value: col[self.rows[slot as usize] as usize],
                slot,
            }));
            entries.sort_unstable_by(|a, b| a.value.total_cmp(&b.value).then(a.slot.cmp(&b.slot)));
            if let Some(cand) = self.scan_entries(f, &entries, &stats) {
                if best.as_ref().is_none_or(|b| cand.gain > b.gain) {
                    best = Some(cand);
                }
            }
        }
        let Some(best) = best else {
            return id;
        };
        let col = &self.columns[best.feature];
        let rows = self.rows;
        let mut right = Vec::with_capacity(samples);
        let mut w = 0;
        for i in 0..samples {
            let slot = slots[i];
            if col[rows[slot as usize] as usize] <= best.threshold {
                slots[w] = slot;
                w += 1;
            } else {
                right.push(slot);
            }
        }
        slots[w..].copy_from_slice(&right);
        let (l, r) = slots.split_at_mut(w);
        let left = self.build_small(l, depth + 1);
        let right = self.build_small(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain: best.gain,
            impurity,
            samples,
        };
        id
    }

    /// Stable partition of every feature order; returns the left size.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let mut n_left = 0;
        for e in &self.order[feature][start..end] {
            let left = e.value <= threshold;
            self.goes_left[e.slot as usize] = left;
            n_left += usize::from(left);
        }
        let goes_left = &self.goes_left;
        let split = |range: &mut [Entry], right: &mut Vec<Entry>| {
            right.clear();
            let mut w = 0;
            for i in 0..range.len() {
                let e = range[i];
                if goes_left[e.slot as usize] {
                    range[w] = e;
                    w += 1;
                } else {
                    right.push(e);
                }
            }
            range[w..].copy_from_slice(right);
        };
        if end - start >= PARALLEL_SCAN_MIN {
            self.order
                .par_iter_mut()
                .for_each_init(Vec::new, |right, order| {
                    split(&mut order[start..end], right)
                });
        } else {
            let scratch = &mut self.scratch;
            for order in &mut self.order {
                split(&mut order[start..end], scratch);
            }
        }
        n_left
    }
}
