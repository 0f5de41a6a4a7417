//! Encoding of configuration keys into fixed-length numeric vectors.

use crate::extraction::ConfigurationKey;
use crate::num::Scalar;

/// Reserved category for values not seen at fit time. Always last in a vocabulary.
pub const UNKNOWN: &str = "UNKNOWN";

/// Name of the extra input the column tree receives.
pub const CHAINED_FEATURE: &str = "predicted_p_r";

pub const NUMERIC_FEATURES: [&str; 7] =
    ["rows", "cols", "size_bytes", "nodes", "cores_per_node", "total_cores", "ram_per_node_bytes"];

pub const CATEGORICAL_FEATURES: [&str; 3] = ["algorithm", "task_kind", "mode"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Sorted observed categories followed by [`UNKNOWN`]; empty for numeric features.
    pub vocab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
}

enum RawValue<'a> {
    Num(u64),
    Cat(&'a str),
}

fn raw_value<'a>(name: &str, key: &'a ConfigurationKey) -> Option<RawValue<'a>> {
    let e = &key.environment;
    Some(match name {
        "rows" => RawValue::Num(key.rows),
        "cols" => RawValue::Num(key.cols),
        "size_bytes" => RawValue::Num(key.size_bytes),
        "nodes" => RawValue::Num(e.nodes()),
        "cores_per_node" => RawValue::Num(e.cores_per_node()),
        "total_cores" => RawValue::Num(e.total_cores()),
        "ram_per_node_bytes" => RawValue::Num(e.ram_per_node_bytes()),
        "algorithm" => RawValue::Cat(key.algorithm.name()),
        "task_kind" => RawValue::Cat(key.algorithm.task_kind().as_str()),
        "mode" => RawValue::Cat(key.algorithm.mode().as_str()),
        _ => return None,
    })
}

impl FeatureSchema {
    /// Collects categorical vocabularies from the training keys.
    pub fn fit<'a>(keys: impl IntoIterator<Item = &'a ConfigurationKey> + Clone) -> Self {
        let mut features: Vec<FeatureSpec> = NUMERIC_FEATURES
            .iter()
            .map(|n| FeatureSpec { name: n.to_string(), kind: FeatureKind::Numeric, vocab: Vec::new() })
            .collect();
        for name in CATEGORICAL_FEATURES {
            let mut vocab: Vec<String> = keys
                .clone()
                .into_iter()
                .filter_map(|k| match raw_value(name, k) {
                    Some(RawValue::Cat(s)) => Some(s.to_string()),
                    _ => None,
                })
                .collect();
            vocab.sort();
            vocab.dedup();
            vocab.retain(|v| v != UNKNOWN);
            vocab.push(UNKNOWN.to_string());
            features.push(FeatureSpec { name: name.to_string(), kind: FeatureKind::Categorical, vocab });
        }
        Self { features }
    }

    /// Rebuilds a schema read from a model file, checking it only names
    /// features this crate knows how to compute.
    pub fn from_specs(features: Vec<FeatureSpec>) -> Result<Self, String> {
        let known = NUMERIC_FEATURES.iter().chain(CATEGORICAL_FEATURES.iter());
        for f in &features {
            if !known.clone().any(|n| *n == f.name) {
                return Err(format!("unknown feature {:?}", f.name));
            }
            let numeric = NUMERIC_FEATURES.contains(&f.name.as_str());
            match (f.kind, numeric) {
                (FeatureKind::Numeric, true) if f.vocab.is_empty() => {}
                (FeatureKind::Categorical, false)
                    if f.vocab.last().map(String::as_str) == Some(UNKNOWN)
                        && f.vocab[..f.vocab.len() - 1].windows(2).all(|w| w[0] < w[1]) => {}
                _ => return Err(format!("feature {:?} has an inconsistent kind or vocabulary", f.name)),
            }
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn arity(&self) -> usize {
        self.features.len()
    }

    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.features.iter().map(|f| f.kind).collect()
    }

    /// Feature kinds of the column tree's input: base features plus the chained slot.
    pub fn chained_kinds(&self) -> Vec<FeatureKind> {
        let mut kinds = self.kinds();
        kinds.push(FeatureKind::Numeric);
        kinds
    }

    fn code(spec: &FeatureSpec, value: &str) -> usize {
        spec.vocab[..spec.vocab.len() - 1].binary_search_by(|v| v.as_str().cmp(value)).unwrap_or(spec.vocab.len() - 1)
    }

    /// Numeric features pass through unchanged; categories become their
    /// vocabulary index, unseen ones the index of [`UNKNOWN`].
    pub fn encode<T: Scalar>(&self, key: &ConfigurationKey) -> Vec<T> {
        self.features
            .iter()
            .map(|f| match raw_value(&f.name, key).expect("schema features are validated") {
                RawValue::Num(v) => T::from_count(v),
                RawValue::Cat(s) => T::from_count(Self::code(f, s) as u64),
            })
            .collect()
    }

    /// `(feature, value)` pairs of `key` that fall outside the fitted vocabularies.
    pub fn unknown_categories(&self, key: &ConfigurationKey) -> Vec<(String, String)> {
        self.features
            .iter()
            .filter_map(|f| match raw_value(&f.name, key) {
                Some(RawValue::Cat(s)) if Self::code(f, s) == f.vocab.len() - 1 => {
                    Some((f.name.clone(), s.to_string()))
                }
                _ => None,
            })
            .collect()
    }
}
