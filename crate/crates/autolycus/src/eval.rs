//! Metrics (accuracy, R_test, query counts) and the experiment sweep runner
//! over (seed size x query budget x repetitions).

use serde::{Deserialize, Serialize};

use crate::attack::{extract, AttackConfig, FrontierDiscipline};
use crate::data::{load_dataset, sample_seeds, split, LabeledSample, Sample};
use crate::error::{Error, Result};
use crate::explain::{build_discretizer, ExplainerConfig};
use crate::service::{LocalOracle, OracleCore, Pricing};
use crate::tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub accuracy_target: f64,
    pub accuracy_surrogate: f64,
    pub r_test: f64,
    pub queries: u64,
    pub seed_count: usize,
    pub repetition_seed: u64,
}

/// Fraction of samples where the model's prediction equals the true label.
pub fn accuracy(model: &DecisionTree, test: &[LabeledSample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Argument("accuracy on an empty test set".into()));
    }
    let hits = test
        .iter()
        .filter(|s| model.predict(&s.sample) == s.label)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// Classification similarity against a neutral dataset: the fraction of
/// inputs on which the two models agree (true labels ignored).
pub fn r_test<F, G>(target: F, surrogate: G, test_inputs: &[Sample]) -> Result<f64>
where
    F: Fn(&Sample) -> usize,
    G: Fn(&Sample) -> usize,
{
    if test_inputs.is_empty() {
        return Err(Error::Argument("r_test on an empty input set".into()));
    }
    let agree = test_inputs
        .iter()
        .filter(|s| target(s) == surrogate(s))
        .count();
    Ok(agree as f64 / test_inputs.len() as f64)
}

fn default_num_perturbations() -> usize {
    1000
}
fn default_ridge_lambda() -> f64 {
    1.0
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_integer_step() -> i64 {
    1
}
fn default_discipline() -> FrontierDiscipline {
    FrontierDiscipline::Lifo
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Dataset label used in the results CSV.
    pub dataset: String,
    pub data: String,
    pub schema: String,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub train_fraction: f64,
    /// Total attacker seed counts to sweep (split evenly across classes).
    pub seed_counts: Vec<usize>,
    /// Billed-query budgets to sweep; must be positive and ascending.
    pub budgets: Vec<u64>,
    pub repetitions: u64,
    pub base_seed: u64,
    #[serde(default = "default_num_perturbations")]
    pub num_perturbations: usize,
    #[serde(default)]
    pub kernel_width: Option<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default = "default_ridge_lambda")]
    pub ridge_lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_integer_step")]
    pub integer_step: i64,
    #[serde(default = "default_discipline")]
    pub discipline: FrontierDiscipline,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::Argument("repetitions must be >= 1".into()));
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return Err(Error::Argument("budgets must be positive".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument("budgets must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub dataset: String,
    pub seed_count: usize,
    pub budget: u64,
    pub budget_fraction: f64,
    pub repetition: u64,
    pub acc_target: f64,
    pub acc_surrogate: f64,
    pub r_test: f64,
    pub queries: u64,
    pub stop_reason: String,
}

#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub rows: Vec<SweepRow>,
    pub repetitions: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct CellAggregate {
    pub mean_acc_target: f64,
    pub mean_acc_surrogate: f64,
    pub mean_r_test: f64,
    pub mean_queries: f64,
}

impl ResultsTable {
    fn cell_rows(&self, seed_count: usize, budget: u64) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.seed_count == seed_count && r.budget == budget)
            .collect()
    }

    pub fn aggregate(&self, seed_count: usize, budget: u64) -> Option<CellAggregate> {
        let rows = self.cell_rows(seed_count, budget);
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some(CellAggregate {
            mean_acc_target: rows.iter().map(|r| r.acc_target).sum::<f64>() / n,
            mean_acc_surrogate: rows.iter().map(|r| r.acc_surrogate).sum::<f64>() / n,
            mean_r_test: rows.iter().map(|r| r.r_test).sum::<f64>() / n,
            mean_queries: rows.iter().map(|r| r.queries as f64).sum::<f64>() / n,
        })
    }

    /// One CSV row per repetition plus mean/stddev aggregate rows per cell,
    /// in deterministic cell order.
    pub fn to_csv(&self) -> String {
        fn stddev(values: &[f64], mean: f64) -> f64 {
            if values.len() < 2 {
                return 0.0;
            }
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (values.len() - 1) as f64;
            var.sqrt()
        }

        let mut out = String::from(
            "dataset,seed_count,budget,budget_fraction,repetition,acc_target,acc_surrogate,r_test,queries,stop_reason\n",
        );
        let mut cells: Vec<(usize, u64)> = Vec::new();
        for r in &self.rows {
            if !cells.contains(&(r.seed_count, r.budget)) {
                cells.push((r.seed_count, r.budget));
            }
        }
        for (seed_count, budget) in cells {
            let rows = self.cell_rows(seed_count, budget);
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.dataset,
                    r.seed_count,
                    r.budget,
                    r.budget_fraction,
                    r.repetition,
                    r.acc_target,
                    r.acc_surrogate,
                    r.r_test,
                    r.queries,
                    r.stop_reason
                ));
            }
            let agg = self.aggregate(seed_count, budget).expect("cell has rows");
            let first = rows[0];
            out.push_str(&format!(
                "{},{},{},{},mean,{},{},{},{},\n",
                first.dataset,
                seed_count,
                budget,
                first.budget_fraction,
                agg.mean_acc_target,
                agg.mean_acc_surrogate,
                agg.mean_r_test,
                agg.mean_queries
            ));
            let acc_t: Vec<f64> = rows.iter().map(|r| r.acc_target).collect();
            let acc_s: Vec<f64> = rows.iter().map(|r| r.acc_surrogate).collect();
            let rt: Vec<f64> = rows.iter().map(|r| r.r_test).collect();
            let q: Vec<f64> = rows.iter().map(|r| r.queries as f64).collect();
            out.push_str(&format!(
                "{},{},{},{},stddev,{},{},{},{},\n",
                first.dataset,
                seed_count,
                budget,
                first.budget_fraction,
                stddev(&acc_t, agg.mean_acc_target),
                stddev(&acc_s, agg.mean_acc_surrogate),
                stddev(&rt, agg.mean_r_test),
                stddev(&q, agg.mean_queries)
            ));
        }
        out
    }
}

/// One sweep cell: fresh split, target training, attack against a local
/// per-call-priced oracle, metrics on the held-out split.
pub fn run_cell(
    data: &[LabeledSample],
    schema: &crate::data::DatasetSchema,
    config: &SweepConfig,
    seed_count: usize,
    budget: u64,
    repetition: u64,
) -> Result<SweepRow> {
    let rep_seed = config.base_seed + repetition;
    let (train, test) = split(data, config.train_fraction, rep_seed)?;
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
        rng_seed: rep_seed,
    };
    let target = DecisionTree::fit(&train, schema, params)?;
    let discretizer = build_discretizer(&train, schema)?;
    let mut explainer = ExplainerConfig::defaults(schema.feature_count(), rep_seed);
    explainer.num_perturbations = config.num_perturbations;
    explainer.ridge_lambda = config.ridge_lambda;
    if let Some(w) = config.kernel_width {
        explainer.kernel_width = w;
    }
    if let Some(k) = config.top_k {
        explainer.top_k = k;
    }
    let core = std::sync::Arc::new(OracleCore::new(
        target.clone(),
        discretizer,
        schema.clone(),
        explainer,
        Pricing::PerCall,
    ));
    let oracle = LocalOracle(core);

    let per_class = seed_count / schema.class_count();
    let (seeds, _warnings) = sample_seeds(&test, schema, per_class, rep_seed);
    let attack = AttackConfig {
        lower_bound: budget,
        upper_bound: budget,
        epsilon: config.epsilon,
        integer_step: config.integer_step,
        discipline: config.discipline,
        max_queries: budget,
        rng_seed: rep_seed,
    };
    let (surrogate, trace) = extract(&oracle, &seeds, schema, params, &attack)?;

    let acc_target = accuracy(&target, &test)?;
    let acc_surrogate = accuracy(&surrogate, &test)?;
    let inputs: Vec<Sample> = test.iter().map(|s| s.sample.clone()).collect();
    let agreement = r_test(|s| target.predict(s), |s| surrogate.predict(s), &inputs)?;

    Ok(SweepRow {
        dataset: config.dataset.clone(),
        seed_count,
        budget,
        budget_fraction: budget as f64 / train.len() as f64,
        repetition,
        acc_target,
        acc_surrogate,
        r_test: agreement,
        queries: trace.queries,
        stop_reason: trace.stop_reason.to_string(),
    })
}

/// Full deterministic sweep over (seed_count, budget, repetition); per-cell
/// failures become error rows and the sweep continues.
pub fn run_experiment(config: &SweepConfig) -> Result<ResultsTable> {
    config.validate()?;
    let (schema, data) = load_dataset(&config.data, &config.schema)?;
    let mut rows = Vec::new();
    for &seed_count in &config.seed_counts {
        for &budget in &config.budgets {
            for repetition in 0..config.repetitions {
                match run_cell(&data, &schema, config, seed_count, budget, repetition) {
                    Ok(row) => rows.push(row),
                    Err(err) => rows.push(SweepRow {
                        dataset: config.dataset.clone(),
                        seed_count,
                        budget,
                        budget_fraction: 0.0,
                        repetition,
                        acc_target: 0.0,
                        acc_surrogate: 0.0,
                        r_test: 0.0,
                        queries: 0,
                        stop_reason: format!("error: {err}"),
                    }),
                }
            }
        }
    }
    Ok(ResultsTable {
        rows,
        repetitions: config.repetitions,
    })
}
