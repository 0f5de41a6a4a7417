use super::features::FeatureSchema;
use super::tree::{fit_tree, DecisionTree, TreeParams};
use super::LearnError;
use crate::domain::{clamp_partitioning, Partitioning};
use crate::extraction::{ConfigurationKey, TrainingExample};
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerParams {
    pub tree: TreeParams,
    /// Labels may not exceed this multiple of the largest training core count.
    pub max_partitions_factor: u64,
}

impl LearnerParams {
    pub const DEFAULT_MAX_PARTITIONS_FACTOR: u64 = 4;
    /// Rule of thumb of 2-3 partitions per core used by some dataflow engines.
    pub const DATAFLOW_MAX_PARTITIONS_FACTOR: u64 = 3;
}

impl Default for LearnerParams {
    fn default() -> Self {
        Self { tree: TreeParams::default(), max_partitions_factor: Self::DEFAULT_MAX_PARTITIONS_FACTOR }
    }
}

/// Smallest and largest dataset dimensions seen in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingRange {
    pub rows: (u64, u64),
    pub cols: (u64, u64),
}

/// Two-stage classifier: the row tree predicts `p_r` from the encoded
/// configuration, the column tree predicts `p_c` from the same features plus
/// the row tree's prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainedModel<T> {
    pub(crate) schema: FeatureSchema,
    pub(crate) tree_r: DecisionTree<T>,
    pub(crate) tree_c: DecisionTree<T>,
    pub(crate) labels_r: Vec<u64>,
    pub(crate) labels_c: Vec<u64>,
    pub(crate) step: u64,
    pub(crate) max_partitions: u64,
    pub(crate) params: LearnerParams,
    pub(crate) range: TrainingRange,
}

/// Fits both trees. Examples are put in canonical order first, so the result
/// does not depend on input order.
///
/// The column tree is trained on the row tree's *predicted* labels for the
/// training rows, the same input it sees at prediction time.
pub fn fit_chained<T: Scalar>(
    examples: &[TrainingExample<T>],
    params: LearnerParams,
    step: u64,
) -> Result<ChainedModel<T>, LearnError> {
    if examples.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }
    if params.max_partitions_factor == 0 {
        return Err(LearnError::InvalidFactor);
    }
    let mut examples: Vec<&TrainingExample<T>> = examples.iter().collect();
    examples.sort_by(|a, b| a.key.cmp(&b.key).then(a.best.cmp(&b.best)));

    let max_cores = examples.iter().map(|e| e.key.environment.total_cores()).max().expect("nonempty");
    let max_partitions = max_cores.saturating_mul(params.max_partitions_factor);
    for ex in &examples {
        for label in [ex.best.p_r(), ex.best.p_c()] {
            if label > max_partitions {
                return Err(LearnError::LabelOutOfRange { label, max_partitions });
            }
        }
    }

    let schema = FeatureSchema::fit(examples.iter().map(|e| &e.key));
    let rows: Vec<Vec<T>> = examples.iter().map(|e| schema.encode(&e.key)).collect();
    let y_r: Vec<u64> = examples.iter().map(|e| e.best.p_r()).collect();
    let y_c: Vec<u64> = examples.iter().map(|e| e.best.p_c()).collect();

    let tree_r = fit_tree(&rows, &y_r, &schema.kinds(), &params.tree)?;
    let chained_rows: Vec<Vec<T>> = rows
        .iter()
        .map(|x| {
            let mut v = x.clone();
            v.push(T::from_count(tree_r.predict(x)));
            v
        })
        .collect();
    let tree_c = fit_tree(&chained_rows, &y_c, &schema.chained_kinds(), &params.tree)?;

    let mut labels_r = y_r;
    labels_r.sort_unstable();
    labels_r.dedup();
    let mut labels_c = y_c;
    labels_c.sort_unstable();
    labels_c.dedup();

    let span = |f: fn(&ConfigurationKey) -> u64| {
        let it = examples.iter().map(|e| f(&e.key));
        (it.clone().min().expect("nonempty"), it.max().expect("nonempty"))
    };
    let range = TrainingRange { rows: span(|k| k.rows), cols: span(|k| k.cols) };

    Ok(ChainedModel { schema, tree_r, tree_c, labels_r, labels_c, step, max_partitions, params, range })
}

impl<T: Scalar> ChainedModel<T> {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn tree_r(&self) -> &DecisionTree<T> {
        &self.tree_r
    }

    pub fn tree_c(&self) -> &DecisionTree<T> {
        &self.tree_c
    }

    pub fn label_vocab_r(&self) -> &[u64] {
        &self.labels_r
    }

    pub fn label_vocab_c(&self) -> &[u64] {
        &self.labels_c
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn max_partitions(&self) -> u64 {
        self.max_partitions
    }

    pub fn params(&self) -> LearnerParams {
        self.params
    }

    pub fn training_range(&self) -> TrainingRange {
        self.range
    }

    /// Raw tree output, before clamping to the dataset.
    pub fn predict_unclamped(&self, key: &ConfigurationKey) -> Partitioning {
        let mut x: Vec<T> = self.schema.encode(key);
        let p_r = self.tree_r.predict(&x);
        x.push(T::from_count(p_r));
        let p_c = self.tree_c.predict(&x);
        Partitioning::new(p_r, p_c).expect("tree labels are validated positive")
    }

    pub fn predict(&self, key: &ConfigurationKey) -> Partitioning {
        clamp_partitioning(&key.dataset(), self.predict_unclamped(key))
    }

    pub fn node_count(&self) -> usize {
        self.tree_r.nodes().len() + self.tree_c.nodes().len()
    }
}
