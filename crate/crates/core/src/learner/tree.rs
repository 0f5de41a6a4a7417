//! CART-style classification tree with Gini impurity.
//!
//! Numeric features split at midpoints between consecutive distinct values
//! (`x <= t` goes left); categorical features split one-vs-rest on a single
//! code (`x == c` goes left). Candidate scores are compared exactly in
//! integer arithmetic, so ties resolve deterministically: lower feature
//! index first, then lower threshold or code.

use std::cmp::Ordering;

use super::features::FeatureKind;
use super::LearnError;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl TreeParams {
    pub const DEFAULT_MAX_DEPTH: usize = 12;

    pub fn unlimited() -> Self {
        Self { max_depth: None, min_samples_leaf: 1 }
    }
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: Some(Self::DEFAULT_MAX_DEPTH), min_samples_leaf: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitTest<T> {
    LessEq(T),
    Equals(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    /// `left` always equals the index right after this node (preorder layout).
    Split { feature: usize, test: SplitTest<T>, left: usize, right: usize },
    /// `histogram` lists `(label, count)` for the training rows that reached the leaf.
    Leaf { label: u64, histogram: Vec<(u64, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    pub(crate) kinds: Vec<FeatureKind>,
    pub(crate) nodes: Vec<Node<T>>,
}

/// Gini impurity `1 - sum (n_c / n)^2` of a class histogram.
pub fn gini<T: Scalar>(counts: &[usize]) -> T {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return T::zero();
    }
    let n = T::from_count(total as u64);
    T::one() - counts.iter().map(|&c| (T::from_count(c as u64) / n).powi(2)).fold(T::zero(), |a, b| a + b)
}

/// Weighted Gini of a two-way split, `(|L| Gini(L) + |R| Gini(R)) / |S|`.
pub fn split_score<T: Scalar>(left: &[usize], right: &[usize]) -> T {
    let l: usize = left.iter().sum();
    let r: usize = right.iter().sum();
    let (lt, rt) = (T::from_count(l as u64), T::from_count(r as u64));
    (lt * gini::<T>(left) + rt * gini::<T>(right)) / (lt + rt)
}

/// `sum_c l_c^2 / |L| + sum_c r_c^2 / |R|` as an exact fraction. Larger is a
/// purer split; it is the weighted Gini score up to an affine map.
#[derive(Debug, Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn new(sq_left: u64, n_left: u64, sq_right: u64, n_right: u64) -> Self {
        let (a, l, b, r) = (sq_left as u128, n_left as u128, sq_right as u128, n_right as u128);
        Self { num: a * r + b * l, den: l * r }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

struct Candidate<T> {
    feature: usize,
    test: SplitTest<T>,
    purity: Purity,
}

struct Builder<'a, T> {
    rows: &'a [Vec<T>],
    classes: Vec<u64>,
    y: Vec<usize>,
    kinds: &'a [FeatureKind],
    params: TreeParams,
    nodes: Vec<Node<T>>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn leaf(&self, counts: &[usize]) -> Node<T> {
        // Ascending class order with strict `>` keeps the smaller label on ties.
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        let histogram = counts.iter().enumerate().filter(|(_, &n)| n > 0).map(|(c, &n)| (self.classes[c], n)).collect();
        Node::Leaf { label: self.classes[best], histogram }
    }

    fn consider(best: &mut Option<Candidate<T>>, cand: Candidate<T>) {
        if best.as_ref().is_none_or(|b| cand.purity.cmp(&b.purity) == Ordering::Greater) {
            *best = Some(cand);
        }
    }

    fn best_split(&self, idx: &[usize], counts: &[usize]) -> Option<Candidate<T>> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len();
        let total_sq: u64 = counts.iter().map(|&c| (c * c) as u64).sum();
        let mut best = None;

        for (f, kind) in self.kinds.iter().enumerate() {
            match kind {
                FeatureKind::Numeric => {
                    let mut sorted = idx.to_vec();
                    sorted.sort_by(|&a, &b| self.rows[a][f].partial_cmp(&self.rows[b][f]).unwrap_or(Ordering::Equal));
                    let mut left = vec![0usize; counts.len()];
                    let (mut sq_l, mut sq_r) = (0u64, total_sq);
                    for p in 0..n - 1 {
                        let c = self.y[sorted[p]];
                        sq_l += (2 * left[c] + 1) as u64;
                        let right_c = counts[c] - left[c];
                        sq_r -= (2 * right_c - 1) as u64;
                        left[c] += 1;
                        let (lo, hi) = (self.rows[sorted[p]][f], self.rows[sorted[p + 1]][f]);
                        let n_left = p + 1;
                        if lo >= hi || n_left < min_leaf || n - n_left < min_leaf {
                            continue;
                        }
                        let mid = (lo + hi) / (T::one() + T::one());
                        let threshold = if mid < hi { mid } else { lo };
                        let purity = Purity::new(sq_l, n_left as u64, sq_r, (n - n_left) as u64);
                        Self::consider(&mut best, Candidate { feature: f, test: SplitTest::LessEq(threshold), purity });
                    }
                }
                FeatureKind::Categorical => {
                    let mut codes: Vec<u64> =
                        idx.iter().map(|&i| self.rows[i][f].to_u64().unwrap_or(u64::MAX)).collect();
                    codes.sort_unstable();
                    codes.dedup();
                    if codes.len() < 2 {
                        continue;
                    }
                    for code in codes {
                        let inside: Vec<usize> =
                            idx.iter().copied().filter(|&i| self.rows[i][f].to_u64() == Some(code)).collect();
                        let n_left = inside.len();
                        if n_left < min_leaf || n - n_left < min_leaf {
                            continue;
                        }
                        let left = self.counts(&inside);
                        let sq_l: u64 = left.iter().map(|&c| (c * c) as u64).sum();
                        let sq_r: u64 = left.iter().zip(counts).map(|(&l, &t)| ((t - l) * (t - l)) as u64).sum();
                        let purity = Purity::new(sq_l, n_left as u64, sq_r, (n - n_left) as u64);
                        Self::consider(&mut best, Candidate { feature: f, test: SplitTest::Equals(code), purity });
                    }
                }
            }
        }
        best
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let pos = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small = idx.len() < 2 * self.params.min_samples_leaf.max(1);
        let split = if pure || depth_reached || too_small { None } else { self.best_split(&idx, &counts) };

        let Some(Candidate { feature, test, .. }) = split else {
            let leaf = self.leaf(&counts);
            self.nodes.push(leaf);
            return pos;
        };
        self.nodes.push(Node::Split { feature, test, left: 0, right: 0 });
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| goes_left(self.rows[i][feature], test));
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[pos] {
            *l = left;
            *r = right;
        }
        pos
    }
}

fn goes_left<T: Scalar>(x: T, test: SplitTest<T>) -> bool {
    match test {
        SplitTest::LessEq(t) => x <= t,
        SplitTest::Equals(c) => x.to_u64() == Some(c),
    }
}

/// Grows a tree top-down, greedily minimizing weighted Gini impurity.
///
/// A node becomes a leaf when it is pure, at `max_depth`, too small to give
/// both children `min_samples_leaf` rows, or when no feature separates its
/// rows. Splits that do not lower impurity are still taken, so any data set
/// without conflicting duplicates is memorized at unlimited depth.
pub fn fit_tree<T: Scalar>(
    rows: &[Vec<T>],
    labels: &[u64],
    kinds: &[FeatureKind],
    params: &TreeParams,
) -> Result<DecisionTree<T>, LearnError> {
    if rows.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if rows.len() != labels.len() {
        return Err(LearnError::LengthMismatch { rows: rows.len(), labels: labels.len() });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != kinds.len()) {
        return Err(LearnError::ArityMismatch { expected: kinds.len(), found: bad.len() });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LearnError::NonFiniteFeature);
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let y = labels.iter().map(|l| classes.binary_search(l).expect("label is in its own class list")).collect();
    let mut builder = Builder { rows, classes, y, kinds, params: *params, nodes: Vec::new() };
    builder.build((0..rows.len()).collect(), 0);
    Ok(DecisionTree { kinds: kinds.to_vec(), nodes: builder.nodes })
}

impl<T: Scalar> DecisionTree<T> {
    pub fn input_arity(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn predict(&self, x: &[T]) -> u64 {
        debug_assert_eq!(x.len(), self.kinds.len());
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label, .. } => return *label,
                Node::Split { feature, test, left, right } => {
                    at = if goes_left(x[*feature], *test) { *left } else { *right };
                }
            }
        }
    }

    /// Length of the longest root-to-leaf path, in splits.
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn labels(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { label, .. } => Some(*label),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
