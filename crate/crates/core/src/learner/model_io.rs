//! Versioned text format for fitted models.
//!
//! ```text
//! blockwise-model  v1
//! scalar           f64
//! step             2
//! max_partitions   256
//! max_depth        12            (or "none")
//! min_samples_leaf 1
//! max_partitions_factor 4
//! rows_range       <min> <max>
//! cols_range       <min> <max>
//! features         <n>
//! numeric          <name>
//! categorical      <name> <vocab...>
//! labels_r         <labels...>
//! labels_c         <labels...>
//! tree r <arity> <node count>
//! split <feature> le <threshold> | split <feature> eq <code> | leaf <label> <label>:<count>,...
//! tree c <arity> <node count>
//! ...
//! end
//! ```
//!
//! Fields are tab-separated and trees are written in preorder. Thresholds use
//! the shortest decimal form that parses back to the same float.

use std::fmt::Write as _;

use thiserror::Error;

use super::chained::{ChainedModel, LearnerParams, TrainingRange};
use super::features::{FeatureKind, FeatureSchema, FeatureSpec};
use super::tree::{DecisionTree, Node, SplitTest, TreeParams};
use crate::num::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "blockwise-model";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelFormatError {
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: String, expected: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

pub fn serialize_model<T: Scalar>(model: &ChainedModel<T>) -> Vec<u8> {
    let mut out = String::new();
    let w = &mut out;
    let p = model.params;
    let line = |w: &mut String, fields: &[String]| {
        w.push_str(&fields.join("\t"));
        w.push('\n');
    };
    line(w, &[MAGIC.into(), format!("v{MODEL_FORMAT_VERSION}")]);
    line(w, &["scalar".into(), T::NAME.into()]);
    line(w, &["step".into(), model.step.to_string()]);
    line(w, &["max_partitions".into(), model.max_partitions.to_string()]);
    line(w, &["max_depth".into(), p.tree.max_depth.map_or("none".into(), |d| d.to_string())]);
    line(w, &["min_samples_leaf".into(), p.tree.min_samples_leaf.to_string()]);
    line(w, &["max_partitions_factor".into(), p.max_partitions_factor.to_string()]);
    line(w, &["rows_range".into(), model.range.rows.0.to_string(), model.range.rows.1.to_string()]);
    line(w, &["cols_range".into(), model.range.cols.0.to_string(), model.range.cols.1.to_string()]);
    line(w, &["features".into(), model.schema.arity().to_string()]);
    for f in model.schema.features() {
        let mut fields = vec![
            match f.kind {
                FeatureKind::Numeric => "numeric".to_string(),
                FeatureKind::Categorical => "categorical".to_string(),
            },
            f.name.clone(),
        ];
        fields.extend(f.vocab.iter().cloned());
        line(w, &fields);
    }
    let labels = |name: &str, v: &[u64]| {
        let mut f = vec![name.to_string()];
        f.extend(v.iter().map(u64::to_string));
        f
    };
    line(w, &labels("labels_r", &model.labels_r));
    line(w, &labels("labels_c", &model.labels_c));
    write_tree(w, "r", &model.tree_r);
    write_tree(w, "c", &model.tree_c);
    w.push_str("end\n");
    out.into_bytes()
}

fn write_tree<T: Scalar>(w: &mut String, name: &str, tree: &DecisionTree<T>) {
    writeln!(w, "tree\t{name}\t{}\t{}", tree.input_arity(), tree.nodes.len()).expect("String write");
    for node in &tree.nodes {
        match node {
            Node::Split { feature, test: SplitTest::LessEq(t), .. } => writeln!(w, "split\t{feature}\tle\t{t}"),
            Node::Split { feature, test: SplitTest::Equals(c), .. } => writeln!(w, "split\t{feature}\teq\t{c}"),
            Node::Leaf { label, histogram } => {
                let h: Vec<String> = histogram.iter().map(|(l, n)| format!("{l}:{n}")).collect();
                writeln!(w, "leaf\t{label}\t{}", h.join(","))
            }
        }
        .expect("String write");
    }
}

fn corrupt(msg: impl Into<String>) -> ModelFormatError {
    ModelFormatError::CorruptModel(msg.into())
}

struct Lines<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>, ModelFormatError> {
        self.line_no += 1;
        let line = self.lines.next().ok_or_else(|| corrupt(format!("truncated at line {}", self.line_no)))?;
        Ok(line.split('\t').collect())
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, ModelFormatError> {
        let f = self.next()?;
        if f[0] != key {
            return Err(corrupt(format!("line {}: expected {key:?}, found {:?}", self.line_no, f[0])));
        }
        Ok(f[1..].to_vec())
    }

    fn single<V: std::str::FromStr>(&mut self, key: &str) -> Result<V, ModelFormatError> {
        let f = self.expect(key)?;
        match f.as_slice() {
            [v] => v.parse().map_err(|_| corrupt(format!("line {}: bad {key} value {v:?}", self.line_no))),
            _ => Err(corrupt(format!("line {}: {key} takes one value", self.line_no))),
        }
    }

    fn pair(&mut self, key: &str) -> Result<(u64, u64), ModelFormatError> {
        let f = self.expect(key)?;
        let parse = |s: &str| s.parse::<u64>().map_err(|_| corrupt(format!("bad {key} value {s:?}")));
        match f.as_slice() {
            [a, b] => Ok((parse(a)?, parse(b)?)),
            _ => Err(corrupt(format!("line {}: {key} takes two values", self.line_no))),
        }
    }
}

pub fn deserialize_model<T: Scalar>(bytes: &[u8]) -> Result<ChainedModel<T>, ModelFormatError> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not UTF-8 text"))?;
    let mut lines = Lines { lines: text.lines(), line_no: 0 };

    let header = lines.next()?;
    if header[0] != MAGIC || header.len() != 2 {
        return Err(corrupt("missing model header"));
    }
    if header[1] != format!("v{MODEL_FORMAT_VERSION}") {
        return Err(ModelFormatError::VersionMismatch { found: header[1].to_string(), expected: MODEL_FORMAT_VERSION });
    }
    let scalar: String = lines.single("scalar")?;
    if scalar != T::NAME {
        return Err(corrupt(format!("model stores {scalar} values, reader expects {}", T::NAME)));
    }
    let step: u64 = lines.single("step")?;
    let max_partitions: u64 = lines.single("max_partitions")?;
    let max_depth: String = lines.single("max_depth")?;
    let max_depth = match max_depth.as_str() {
        "none" => None,
        d => Some(d.parse().map_err(|_| corrupt(format!("bad max_depth {d:?}")))?),
    };
    let min_samples_leaf: usize = lines.single("min_samples_leaf")?;
    let max_partitions_factor: u64 = lines.single("max_partitions_factor")?;
    let range = TrainingRange { rows: lines.pair("rows_range")?, cols: lines.pair("cols_range")? };

    let n_features: usize = lines.single("features")?;
    let mut specs = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let f = lines.next()?;
        let kind = match f[0] {
            "numeric" => FeatureKind::Numeric,
            "categorical" => FeatureKind::Categorical,
            other => return Err(corrupt(format!("line {}: unknown feature kind {other:?}", lines.line_no))),
        };
        let name = f.get(1).ok_or_else(|| corrupt("feature without a name"))?.to_string();
        specs.push(FeatureSpec { name, kind, vocab: f[2..].iter().map(|s| s.to_string()).collect() });
    }
    let schema = FeatureSchema::from_specs(specs).map_err(corrupt)?;

    let parse_labels = |f: Vec<&str>| -> Result<Vec<u64>, ModelFormatError> {
        f.iter().map(|s| s.parse::<u64>().map_err(|_| corrupt(format!("bad label {s:?}")))).collect()
    };
    let labels_r = parse_labels(lines.expect("labels_r")?)?;
    let labels_c = parse_labels(lines.expect("labels_c")?)?;
    for &l in labels_r.iter().chain(&labels_c) {
        if l == 0 || l > max_partitions {
            return Err(corrupt(format!("label {l} outside [1, {max_partitions}]")));
        }
    }

    let tree_r = read_tree::<T>(&mut lines, "r", schema.kinds(), &labels_r)?;
    let tree_c = read_tree::<T>(&mut lines, "c", schema.chained_kinds(), &labels_c)?;
    lines.expect("end")?;
    if lines.lines.any(|l| !l.trim().is_empty()) {
        return Err(corrupt("trailing data after end"));
    }

    let params = LearnerParams { tree: TreeParams { max_depth, min_samples_leaf }, max_partitions_factor };
    Ok(ChainedModel { schema, tree_r, tree_c, labels_r, labels_c, step, max_partitions, params, range })
}

fn read_tree<T: Scalar>(
    lines: &mut Lines<'_>,
    name: &str,
    kinds: Vec<FeatureKind>,
    labels: &[u64],
) -> Result<DecisionTree<T>, ModelFormatError> {
    let f = lines.expect("tree")?;
    let [tree_name, arity, count] = f.as_slice() else {
        return Err(corrupt("tree header needs name, arity and node count"));
    };
    if *tree_name != name {
        return Err(corrupt(format!("expected tree {name:?}, found {tree_name:?}")));
    }
    let arity: usize = arity.parse().map_err(|_| corrupt("bad tree arity"))?;
    if arity != kinds.len() {
        return Err(corrupt(format!("tree {name} has arity {arity}, schema implies {}", kinds.len())));
    }
    let count: usize = count.parse().map_err(|_| corrupt("bad node count"))?;
    if count == 0 {
        return Err(corrupt("empty tree"));
    }

    let mut nodes: Vec<Node<T>> = Vec::with_capacity(count);
    for _ in 0..count {
        let f = lines.next()?;
        let node = match f.as_slice() {
            ["split", feature, op, value] => {
                let feature: usize = feature.parse().map_err(|_| corrupt("bad split feature"))?;
                let kind =
                    *kinds.get(feature).ok_or_else(|| corrupt(format!("split feature {feature} out of range")))?;
                let test = match (*op, kind) {
                    ("le", FeatureKind::Numeric) => {
                        let t = T::parse_decimal(value)
                            .filter(|t| t.is_finite())
                            .ok_or_else(|| corrupt("bad threshold"))?;
                        SplitTest::LessEq(t)
                    }
                    ("eq", FeatureKind::Categorical) => {
                        SplitTest::Equals(value.parse().map_err(|_| corrupt("bad code"))?)
                    }
                    _ => return Err(corrupt(format!("split test {op:?} does not fit feature {feature}"))),
                };
                Node::Split { feature, test, left: 0, right: 0 }
            }
            ["leaf", label, hist] => {
                let label: u64 = label.parse().map_err(|_| corrupt("bad leaf label"))?;
                if !labels.contains(&label) {
                    return Err(corrupt(format!("leaf label {label} is not in the label vocabulary")));
                }
                let histogram = hist
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|pair| {
                        let (l, n) = pair.split_once(':').ok_or_else(|| corrupt("bad histogram entry"))?;
                        Ok((
                            l.parse().map_err(|_| corrupt("bad histogram label"))?,
                            n.parse().map_err(|_| corrupt("bad histogram count"))?,
                        ))
                    })
                    .collect::<Result<Vec<(u64, usize)>, ModelFormatError>>()?;
                Node::Leaf { label, histogram }
            }
            _ => return Err(corrupt(format!("line {}: expected a tree node", lines.line_no))),
        };
        nodes.push(node);
    }

    // Recover child links from the preorder layout.
    fn link<T>(nodes: &mut [Node<T>], at: usize) -> Result<usize, ModelFormatError> {
        match nodes.get(at) {
            None => Err(corrupt("tree ends inside a subtree")),
            Some(Node::Leaf { .. }) => Ok(at + 1),
            Some(Node::Split { .. }) => {
                let right = link(nodes, at + 1)?;
                let end = link(nodes, right)?;
                if let Node::Split { left, right: r, .. } = &mut nodes[at] {
                    *left = at + 1;
                    *r = right;
                }
                Ok(end)
            }
        }
    }
    if link(&mut nodes, 0)? != count {
        return Err(corrupt(format!("tree {name} has nodes outside its root subtree")));
    }
    Ok(DecisionTree { kinds, nodes })
}
