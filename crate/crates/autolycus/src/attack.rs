//! The TRAV-A explanation-guided traversal: a frontier of candidate samples,
//! explanation parsing, single-feature boundary-crossing query synthesis,
//! per-class visit budgets, and surrogate training on the collected trace.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSchema, FeatureKind, ImputeMode, Sample, SampleKey, MISSING};
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::service::QueryOracle;
use crate::tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontierDiscipline {
    Lifo,
    Fifo,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Minimum visits per class before the traversal may stop (L_b).
    pub lower_bound: u64,
    /// Maximum recorded visits per class (U_b).
    pub upper_bound: u64,
    /// Boundary-crossing step for continuous features.
    pub epsilon: f64,
    /// Boundary-crossing step for integer features.
    pub integer_step: i64,
    pub discipline: FrontierDiscipline,
    /// Hard cap on billed queries.
    pub max_queries: u64,
    pub rng_seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lower_bound > self.upper_bound {
            return Err(Error::Argument(format!(
                "lower_bound ({}) must be <= upper_bound ({})",
                self.lower_bound, self.upper_bound
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Argument("epsilon must be > 0".into()));
        }
        if self.integer_step < 1 {
            return Err(Error::Argument("integer_step must be >= 1".into()));
        }
        if self.max_queries < 1 {
            return Err(Error::Argument("max_queries must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    BudgetExhausted,
    FrontierEmpty,
    BoundsSatisfied,
    Aborted(String),
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::BudgetExhausted => write!(f, "budget_exhausted"),
            StopReason::FrontierEmpty => write!(f, "frontier_empty"),
            StopReason::BoundsSatisfied => write!(f, "bounds_satisfied"),
            StopReason::Aborted(msg) => write!(f, "aborted: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitRecord {
    pub sample: Sample,
    pub label: usize,
    /// Index into `visited` of the sample this one was generated from.
    pub parent: Option<usize>,
    /// The single feature changed relative to the parent.
    pub changed_feature: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct AttackTrace {
    pub visited: Vec<VisitRecord>,
    pub n_visits: Vec<u64>,
    pub queries: u64,
    pub frontier_residue: Vec<Sample>,
    pub stop_reason: StopReason,
}

impl AttackTrace {
    pub fn distinct_classes(&self) -> usize {
        self.n_visits.iter().filter(|&&v| v > 0).count()
    }
}

/// One parsed explanation condition: the interval (numeric) or current
/// category (categorical) the prediction was attributed to.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedCondition {
    Interval { lower: Option<f64>, upper: Option<f64> },
    Category(usize),
}

/// Projects an explanation onto (feature, condition) pairs in |weight|
/// descending order, dropping exactly-zero weights.
pub fn parse_exp(
    explanation: &Explanation,
    schema: &DatasetSchema,
) -> Vec<(usize, ParsedCondition)> {
    explanation
        .terms
        .iter()
        .filter(|t| t.weight != 0.0)
        .map(|t| {
            let cond = match schema.features[t.feature].kind {
                FeatureKind::Categorical => {
                    ParsedCondition::Category(t.category.unwrap_or(0))
                }
                _ => ParsedCondition::Interval {
                    lower: t.lower,
                    upper: t.upper,
                },
            };
            (t.feature, cond)
        })
        .collect()
}

/// For each parsed condition, emits variants of `current` changing only that
/// feature: just below the interval's lower edge and just above its upper
/// edge (integer features step by `integer_step` and round outward), or one
/// variant per alternative category. Variants falling outside the schema
/// bounds are skipped.
pub fn generate_smp(
    current: &Sample,
    parsed: &[(usize, ParsedCondition)],
    schema: &DatasetSchema,
    config: &AttackConfig,
) -> Vec<Sample> {
    let mut out = Vec::new();
    let mut emit = |feature: usize, value: f64| {
        if schema.features[feature].contains(value) {
            let mut values = current.values.clone();
            values[feature] = value;
            out.push(Sample::new(values));
        }
    };
    for (feature, cond) in parsed {
        let spec = &schema.features[*feature];
        match cond {
            ParsedCondition::Category(current_cat) => {
                for cat in 0..spec.categories.len() {
                    if cat != *current_cat {
                        emit(*feature, cat as f64);
                    }
                }
            }
            ParsedCondition::Interval { lower, upper } => {
                let step = config.integer_step as f64;
                if let Some(lo) = lower {
                    let value = match spec.kind {
                        FeatureKind::Integer => lo.floor() - (step - 1.0),
                        _ => lo - config.epsilon,
                    };
                    emit(*feature, value);
                }
                if let Some(hi) = upper {
                    let value = match spec.kind {
                        FeatureKind::Integer => hi.floor() + step,
                        _ => hi + config.epsilon,
                    };
                    emit(*feature, value);
                }
            }
        }
    }
    out
}

/// Runs the frontier traversal against a query oracle, collecting the
/// surrogate dataset. One billed query per popped sample; candidates are
/// deduplicated against both the frontier and the visited set.
pub fn trav_a(
    seeds: &[Sample],
    oracle: &dyn QueryOracle,
    schema: &DatasetSchema,
    config: &AttackConfig,
) -> Result<AttackTrace> {
    config.validate()?;

    struct Candidate {
        sample: Sample,
        parent: Option<usize>,
        changed_feature: Option<usize>,
    }

    let mut frontier: VecDeque<Candidate> = VecDeque::new();
    let mut seen: HashSet<SampleKey> = HashSet::new();

    let seeds_owned;
    let seeds = if seeds.is_empty() {
        // no auxiliary knowledge: start from one random valid sample
        let blank = Sample::new(vec![MISSING; schema.feature_count()]);
        seeds_owned = vec![crate::data::impute_missing(
            &blank,
            schema,
            ImputeMode::Random,
            config.rng_seed,
        )?];
        &seeds_owned[..]
    } else {
        seeds
    };
    for seed in seeds {
        schema.validate_sample(seed)?;
        if seen.insert(seed.key()) {
            frontier.push_back(Candidate {
                sample: seed.clone(),
                parent: None,
                changed_feature: None,
            });
        }
    }

    let n_classes = schema.class_count();
    let mut n_visits = vec![0u64; n_classes];
    let mut visited: Vec<VisitRecord> = Vec::new();
    let start_count = oracle.queries_used();
    let queries = |oracle: &dyn QueryOracle| oracle.queries_used() - start_count;

    let stop_reason = loop {
        if frontier.is_empty() {
            break StopReason::FrontierEmpty;
        }
        if !n_visits.iter().any(|&v| v <= config.lower_bound) {
            break StopReason::BoundsSatisfied;
        }
        if queries(oracle) >= config.max_queries {
            break StopReason::BudgetExhausted;
        }
        let candidate = match config.discipline {
            FrontierDiscipline::Lifo => frontier.pop_back().expect("frontier non-empty"),
            FrontierDiscipline::Fifo => frontier.pop_front().expect("frontier non-empty"),
        };
        let explanation = match oracle.explain(&candidate.sample) {
            Ok(e) => e,
            Err(err) => break StopReason::Aborted(err.to_string()),
        };
        let label = explanation.label;
        if n_visits[label] < config.upper_bound {
            n_visits[label] += 1;
            visited.push(VisitRecord {
                sample: candidate.sample.clone(),
                label,
                parent: candidate.parent,
                changed_feature: candidate.changed_feature,
            });
            let parent_index = visited.len() - 1;
            let parsed = parse_exp(&explanation, schema);
            let mut children = Vec::new();
            for term in &parsed {
                let variants =
                    generate_smp(&candidate.sample, std::slice::from_ref(term), schema, config);
                for variant in variants {
                    if seen.insert(variant.key()) {
                        children.push(Candidate {
                            sample: variant,
                            parent: Some(parent_index),
                            changed_feature: Some(term.0),
                        });
                    }
                }
            }
            // Orient insertion so the highest-|weight| term's variant is the
            // next one popped regardless of discipline.
            match config.discipline {
                FrontierDiscipline::Lifo => {
                    frontier.extend(children.into_iter().rev());
                }
                FrontierDiscipline::Fifo => frontier.extend(children),
            }
        }
    };

    Ok(AttackTrace {
        visited,
        n_visits,
        queries: queries(oracle),
        frontier_residue: frontier.into_iter().map(|c| c.sample).collect(),
        stop_reason,
    })
}

/// Runs the traversal and trains the surrogate on the visited samples with
/// the target's own hyperparameters.
pub fn extract(
    oracle: &dyn QueryOracle,
    seeds: &[Sample],
    schema: &DatasetSchema,
    target_params: TreeParams,
    config: &AttackConfig,
) -> Result<(DecisionTree, AttackTrace)> {
    let trace = trav_a(seeds, oracle, schema, config)?;
    if trace.visited.is_empty() {
        return Err(Error::Argument(
            "traversal recorded no visits; cannot train a surrogate".into(),
        ));
    }
    let train: Vec<crate::data::LabeledSample> = trace
        .visited
        .iter()
        .map(|v| crate::data::LabeledSample {
            sample: v.sample.clone(),
            label: v.label,
        })
        .collect();
    let surrogate = DecisionTree::fit(&train, schema, target_params)?;
    Ok((surrogate, trace))
}

/// Trace CSV: query_index, feature values..., predicted_label, parent_index,
/// changed_feature.
pub fn write_trace_csv(
    trace: &AttackTrace,
    schema: &DatasetSchema,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header = vec!["query_index".to_string()];
    header.extend(schema.features.iter().map(|f| f.name.clone()));
    header.push("predicted_label".into());
    header.push("parent_index".into());
    header.push("changed_feature".into());
    writer.write_record(&header)?;
    for (i, record) in trace.visited.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(record.sample.values.iter().map(|v| format!("{v}")));
        row.push(schema.label_names[record.label].clone());
        row.push(
            record
                .parent
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-1".into()),
        );
        row.push(
            record
                .changed_feature
                .map(|f| f.to_string())
                .unwrap_or_default(),
        );
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_tree_dataset, FeatureSpec, LabeledSample};
    use crate::explain::{build_discretizer, ExplainerConfig, ExplanationTerm};
    use crate::service::{LocalOracle, OracleCore, Pricing};
    use std::sync::Arc;

    fn config() -> AttackConfig {
        AttackConfig {
            lower_bound: 1,
            upper_bound: 10,
            epsilon: 0.01,
            integer_step: 1,
            discipline: FrontierDiscipline::Lifo,
            max_queries: 10,
            rng_seed: 0,
        }
    }

    fn schema_1c() -> DatasetSchema {
        DatasetSchema {
            features: vec![FeatureSpec {
                name: "x".into(),
                kind: FeatureKind::Continuous,
                lower: 0.0,
                upper: 10.0,
                categories: vec![],
                mean: Some(5.0),
            }],
            label_names: vec!["A".into(), "B".into()],
        }
    }

    #[test]
    fn parse_exp_projection() {
        let schema = schema_1c();
        let exp = Explanation {
            label: 0,
            terms: vec![
                ExplanationTerm {
                    feature: 0,
                    weight: 0.8,
                    lower: Some(2.5),
                    upper: Some(4.0),
                    category: None,
                },
                ExplanationTerm {
                    feature: 0,
                    weight: 0.0,
                    lower: None,
                    upper: Some(1.0),
                    category: None,
                },
            ],
        };
        let parsed = parse_exp(&exp, &schema);
        assert_eq!(parsed.len(), 1);
        assert_eq!(
            parsed[0],
            (
                0,
                ParsedCondition::Interval {
                    lower: Some(2.5),
                    upper: Some(4.0)
                }
            )
        );
    }

    #[test]
    fn generate_smp_continuous_crossing() {
        let schema = schema_1c();
        let current = Sample::new(vec![3.0]);
        let parsed = vec![(
            0,
            ParsedCondition::Interval {
                lower: Some(2.5),
                upper: Some(4.0),
            },
        )];
        let variants = generate_smp(&current, &parsed, &schema, &config());
        assert_eq!(
            variants,
            vec![Sample::new(vec![2.49]), Sample::new(vec![4.01])]
        );

        let one_sided = vec![(
            0,
            ParsedCondition::Interval {
                lower: None,
                upper: Some(1.0),
            },
        )];
        let variants = generate_smp(&current, &one_sided, &schema, &config());
        assert_eq!(variants, vec![Sample::new(vec![1.01])]);
    }

    #[test]
    fn generate_smp_skips_out_of_bounds() {
        let schema = schema_1c();
        let parsed = vec![(
            0,
            ParsedCondition::Interval {
                lower: Some(0.005),
                upper: Some(9.995),
            },
        )];
        let variants = generate_smp(&Sample::new(vec![5.0]), &parsed, &schema, &config());
        assert!(variants.is_empty());
    }

    #[test]
    fn generate_smp_integer_rounds_outward() {
        let mut schema = schema_1c();
        schema.features[0].kind = FeatureKind::Integer;
        let parsed = vec![(
            0,
            ParsedCondition::Interval {
                lower: Some(3.75),
                upper: Some(7.5),
            },
        )];
        let variants = generate_smp(&Sample::new(vec![5.0]), &parsed, &schema, &config());
        assert_eq!(variants, vec![Sample::new(vec![3.0]), Sample::new(vec![8.0])]);
    }

    #[test]
    fn generate_smp_categorical_alternatives() {
        let schema = DatasetSchema {
            features: vec![FeatureSpec {
                name: "c".into(),
                kind: FeatureKind::Categorical,
                lower: 0.0,
                upper: 0.0,
                categories: vec!["a".into(), "b".into(), "c".into()],
                mean: None,
            }],
            label_names: vec!["A".into(), "B".into()],
        };
        let variants = generate_smp(
            &Sample::new(vec![1.0]),
            &[(0, ParsedCondition::Category(1))],
            &schema,
            &config(),
        );
        assert_eq!(variants, vec![Sample::new(vec![0.0]), Sample::new(vec![2.0])]);
    }

    #[test]
    fn single_feature_change_property() {
        let schema = schema_1c();
        let current = Sample::new(vec![5.0]);
        let parsed = vec![(
            0,
            ParsedCondition::Interval {
                lower: Some(2.5),
                upper: Some(7.5),
            },
        )];
        for v in generate_smp(&current, &parsed, &schema, &config()) {
            let diffs = v
                .values
                .iter()
                .zip(&current.values)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(diffs, 1);
        }
    }

    fn synth_oracle(seed: u64) -> (Arc<OracleCore>, DatasetSchema, crate::tree::DecisionTree) {
        let (tree, schema, data) = synth_tree_dataset(1, 1, 11, seed).unwrap();
        let discretizer = build_discretizer(&data, &schema).unwrap();
        let mut explainer = ExplainerConfig::defaults(1, 7);
        explainer.num_perturbations = 200;
        let core = Arc::new(OracleCore::new(
            tree.clone(),
            discretizer,
            schema.clone(),
            explainer,
            Pricing::PerCall,
        ));
        (core, schema, tree)
    }

    #[test]
    fn traversal_crosses_the_boundary() {
        // find a synth seed whose depth-1 tree has two distinct leaf classes
        let mut chosen = None;
        for seed in 0..20 {
            let (core, schema, tree) = synth_oracle(seed);
            let left = tree.predict(&Sample::new(vec![0.0]));
            let right = tree.predict(&Sample::new(vec![10.0]));
            if left != right {
                chosen = Some((core, schema));
                break;
            }
        }
        let (core, schema) = chosen.expect("some seed yields a two-class tree");
        let oracle = LocalOracle(core);
        let trace = trav_a(&[Sample::new(vec![0.0])], &oracle, &schema, &config()).unwrap();
        assert_eq!(trace.distinct_classes(), 2);
        assert!(trace.queries <= 10);
        assert!(trace.queries >= trace.visited.len() as u64);
        // no duplicate samples ever queried
        let mut keys = HashSet::new();
        for v in &trace.visited {
            assert!(keys.insert(v.sample.key()));
        }
    }

    #[test]
    fn constant_target_stops_after_one_query() {
        let schema = schema_1c();
        let train: Vec<LabeledSample> = (0..=10)
            .map(|i| LabeledSample {
                sample: Sample::new(vec![i as f64]),
                label: 0,
            })
            .collect();
        let tree = crate::tree::DecisionTree::fit(
            &train,
            &schema,
            crate::tree::TreeParams {
                max_depth: 1,
                min_samples_split: 2,
                rng_seed: 0,
            },
        )
        .unwrap();
        let discretizer = build_discretizer(&train, &schema).unwrap();
        let mut explainer = ExplainerConfig::defaults(1, 3);
        explainer.num_perturbations = 100;
        let oracle = LocalOracle(Arc::new(OracleCore::new(
            tree,
            discretizer,
            schema.clone(),
            explainer,
            Pricing::PerCall,
        )));
        let mut cfg = config();
        cfg.lower_bound = 0;
        let trace = trav_a(&[Sample::new(vec![4.0])], &oracle, &schema, &cfg).unwrap();
        assert_eq!(trace.queries, 1);
        // constant predictions give an all-zero-weight explanation: no
        // candidates, so the frontier drains after the single seed
        assert_eq!(trace.stop_reason, StopReason::FrontierEmpty);
    }

    #[test]
    fn budget_cap_is_respected() {
        let (core, schema, _) = synth_oracle(0);
        let oracle = LocalOracle(core);
        let mut cfg = config();
        cfg.max_queries = 3;
        cfg.lower_bound = 100;
        cfg.upper_bound = 100;
        let trace = trav_a(&[Sample::new(vec![0.0]), Sample::new(vec![7.0])], &oracle, &schema, &cfg)
            .unwrap();
        assert!(trace.queries <= 3);
    }

    #[test]
    fn extract_degenerate_budget() {
        let (core, schema, _) = synth_oracle(1);
        let oracle = LocalOracle(core);
        let mut cfg = config();
        cfg.max_queries = 1;
        let (surrogate, trace) = extract(
            &oracle,
            &[Sample::new(vec![2.0])],
            &schema,
            TreeParams {
                max_depth: 3,
                min_samples_split: 2,
                rng_seed: 0,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(trace.visited.len(), 1);
        let shape = surrogate.describe();
        assert_eq!(shape.leaf_count, 1);
        assert_eq!(surrogate.predict(&Sample::new(vec![9.0])), trace.visited[0].label);
    }

    #[test]
    fn empty_seeds_start_from_random_imputed_sample() {
        let (core, schema, _) = synth_oracle(2);
        let oracle = LocalOracle(core);
        let trace = trav_a(&[], &oracle, &schema, &config()).unwrap();
        assert!(!trace.visited.is_empty());
        schema.validate_sample(&trace.visited[0].sample).unwrap();
    }
}
