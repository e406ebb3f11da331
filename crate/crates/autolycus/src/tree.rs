//! CART decision-tree classifier used both as the victim model and as the
//! attacker's surrogate.

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, LabeledSample, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Reserved for tie-breaking; splits are fully deterministic so the seed
    /// is carried but never consumed.
    pub rng_seed: u64,
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Argument("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Argument("min_samples_split must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left, otherwise right.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { counts: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub params: TreeParams,
    pub schema_ref: String,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeShape {
    pub depth: usize,
    pub leaf_count: usize,
    pub node_count: usize,
}

/// Gini impurity `1 - sum(p_i^2)` of a class-count vector.
pub fn gini(class_counts: &[u64]) -> Result<f64> {
    let total: u64 = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::Argument("gini of an all-zero count vector".into()));
    }
    let total = total as f64;
    let sum_sq: f64 = class_counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum();
    Ok(1.0 - sum_sq)
}

struct SplitCandidate {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl DecisionTree {
    /// Greedy CART induction. Candidate thresholds are midpoints between
    /// consecutive distinct sorted values; ties between equal-impurity splits
    /// go to the lowest feature index, then the lowest threshold.
    pub fn fit(
        train: &[LabeledSample],
        schema: &DatasetSchema,
        params: TreeParams,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Argument("fit on an empty training set".into()));
        }
        params.validate()?;
        let n_classes = schema.class_count();
        let indices: Vec<usize> = (0..train.len()).collect();
        let root = grow(train, schema, &params, n_classes, indices, 0);
        Ok(DecisionTree {
            root,
            params,
            schema_ref: String::new(),
            n_classes,
        })
    }

    pub fn predict(&self, sample: &Sample) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if sample.values[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
                TreeNode::Leaf { counts } => return argmax(counts),
            }
        }
    }

    pub fn describe(&self) -> TreeShape {
        fn walk(node: &TreeNode) -> TreeShape {
            match node {
                TreeNode::Leaf { .. } => TreeShape {
                    depth: 0,
                    leaf_count: 1,
                    node_count: 1,
                },
                TreeNode::Internal { left, right, .. } => {
                    let l = walk(left);
                    let r = walk(right);
                    TreeShape {
                        depth: 1 + l.depth.max(r.depth),
                        leaf_count: l.leaf_count + r.leaf_count,
                        node_count: 1 + l.node_count + r.node_count,
                    }
                }
            }
        }
        walk(&self.root)
    }

    /// Lossless JSON document; thresholds carry 17 significant digits.
    pub fn to_json(&self) -> String {
        fn node_json(node: &TreeNode, out: &mut String) {
            match node {
                TreeNode::Leaf { counts } => {
                    out.push_str("{\"counts\":[");
                    for (i, c) in counts.iter().enumerate() {
                        if i > 0 {
                            out.push(',');
                        }
                        out.push_str(&c.to_string());
                    }
                    out.push_str("]}");
                }
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    out.push_str(&format!(
                        "{{\"feature\":{feature},\"threshold\":{:.16e},\"left\":",
                        threshold
                    ));
                    node_json(left, out);
                    out.push_str(",\"right\":");
                    node_json(right, out);
                    out.push('}');
                }
            }
        }
        let mut out = String::new();
        out.push_str(&format!(
            "{{\"params\":{{\"max_depth\":{},\"min_samples_split\":{},\"rng_seed\":{}}},\"schema_ref\":{},\"root\":",
            self.params.max_depth,
            self.params.min_samples_split,
            self.params.rng_seed,
            serde_json::to_string(&self.schema_ref).expect("string serializes"),
        ));
        node_json(&self.root, &mut out);
        out.push('}');
        out
    }

    pub fn from_json(text: &str, schema: Option<&DatasetSchema>) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let params = doc.get("params").ok_or_else(|| Error::Format {
            path: "params".into(),
            message: "missing".into(),
        })?;
        let params: TreeParams =
            serde_json::from_value(params.clone()).map_err(|e| Error::Format {
                path: "params".into(),
                message: e.to_string(),
            })?;
        let schema_ref = doc
            .get("schema_ref")
            .and_then(|v| v.as_str())
            .unwrap_or("")
            .to_string();
        let root_value = doc.get("root").ok_or_else(|| Error::Format {
            path: "root".into(),
            message: "missing".into(),
        })?;
        let root = parse_node(root_value, "root")?;
        let n_classes = first_leaf_len(&root);
        let tree = DecisionTree {
            root,
            params,
            schema_ref,
            n_classes,
        };
        if let Some(schema) = schema {
            tree.validate_against(schema)?;
        }
        Ok(tree)
    }

    pub fn validate_against(&self, schema: &DatasetSchema) -> Result<()> {
        fn walk(node: &TreeNode, schema: &DatasetSchema, path: &str) -> Result<()> {
            match node {
                TreeNode::Leaf { counts } => {
                    if counts.len() != schema.class_count() {
                        return Err(Error::Format {
                            path: path.into(),
                            message: format!(
                                "leaf has {} class counts, schema declares {}",
                                counts.len(),
                                schema.class_count()
                            ),
                        });
                    }
                    if counts.iter().sum::<u64>() == 0 {
                        return Err(Error::Format {
                            path: path.into(),
                            message: "leaf counts sum to zero".into(),
                        });
                    }
                }
                TreeNode::Internal { feature, left, right, .. } => {
                    if *feature >= schema.feature_count() {
                        return Err(Error::Format {
                            path: path.into(),
                            message: format!("feature index {feature} out of range"),
                        });
                    }
                    walk(left, schema, &format!("{path}.left"))?;
                    walk(right, schema, &format!("{path}.right"))?;
                }
            }
            Ok(())
        }
        walk(&self.root, schema, "root")
    }
}

fn parse_node(value: &serde_json::Value, path: &str) -> Result<TreeNode> {
    let obj = value.as_object().ok_or_else(|| Error::Format {
        path: path.into(),
        message: "node is not an object".into(),
    })?;
    if let Some(counts) = obj.get("counts") {
        let counts: Vec<u64> =
            serde_json::from_value(counts.clone()).map_err(|e| Error::Format {
                path: format!("{path}.counts"),
                message: e.to_string(),
            })?;
        return Ok(TreeNode::Leaf { counts });
    }
    let get = |field: &str| -> Result<&serde_json::Value> {
        obj.get(field).ok_or_else(|| Error::Format {
            path: format!("{path}.{field}"),
            message: "missing".into(),
        })
    };
    let feature = get("feature")?.as_u64().ok_or_else(|| Error::Format {
        path: format!("{path}.feature"),
        message: "not an integer".into(),
    })? as usize;
    let threshold = get("threshold")?.as_f64().ok_or_else(|| Error::Format {
        path: format!("{path}.threshold"),
        message: "not a number".into(),
    })?;
    let left = parse_node(get("left")?, &format!("{path}.left"))?;
    let right = parse_node(get("right")?, &format!("{path}.right"))?;
    Ok(TreeNode::Internal {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    })
}

fn first_leaf_len(node: &TreeNode) -> usize {
    match node {
        TreeNode::Leaf { counts } => counts.len(),
        TreeNode::Internal { left, .. } => first_leaf_len(left),
    }
}

fn argmax(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn class_counts(train: &[LabeledSample], indices: &[usize], n_classes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_classes];
    for &i in indices {
        counts[train[i].label] += 1;
    }
    counts
}

fn grow(
    train: &[LabeledSample],
    schema: &DatasetSchema,
    params: &TreeParams,
    n_classes: usize,
    indices: Vec<usize>,
    depth: usize,
) -> TreeNode {
    let counts = class_counts(train, &indices, n_classes);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if pure || depth >= params.max_depth || indices.len() < params.min_samples_split {
        return TreeNode::Leaf { counts };
    }
    let best = best_split(train, schema, n_classes, &indices);
    match best {
        None => TreeNode::Leaf { counts },
        Some(split) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| train[i].sample.values[split.feature] <= split.threshold);
            let left = grow(train, schema, params, n_classes, left_idx, depth + 1);
            let right = grow(train, schema, params, n_classes, right_idx, depth + 1);
            TreeNode::Internal {
                feature: split.feature,
                threshold: split.threshold,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

fn best_split(
    train: &[LabeledSample],
    schema: &DatasetSchema,
    n_classes: usize,
    indices: &[usize],
) -> Option<SplitCandidate> {
    let n = indices.len() as f64;
    let mut best: Option<SplitCandidate> = None;
    for feature in 0..schema.feature_count() {
        let mut pairs: Vec<(f64, usize)> = indices
            .iter()
            .map(|&i| (train[i].sample.values[feature], train[i].label))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("no NaN in training data"));

        let mut left = vec![0u64; n_classes];
        let mut right = class_counts(train, indices, n_classes);
        let mut i = 0;
        while i < pairs.len() {
            // advance over one distinct value
            let v = pairs[i].0;
            while i < pairs.len() && pairs[i].0 == v {
                left[pairs[i].1] += 1;
                right[pairs[i].1] -= 1;
                i += 1;
            }
            if i == pairs.len() {
                break;
            }
            let threshold = (v + pairs[i].0) / 2.0;
            let nl: u64 = left.iter().sum();
            let nr: u64 = right.iter().sum();
            let impurity = (nl as f64 * gini(&left).expect("non-empty side")
                + nr as f64 * gini(&right).expect("non-empty side"))
                / n;
            let better = match &best {
                None => true,
                Some(b) => impurity < b.impurity,
            };
            if better {
                best = Some(SplitCandidate {
                    impurity,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}
