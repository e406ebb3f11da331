//! Single executable wiring all modules into reproducible workflows.

use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use autolycus::attack::{self, AttackConfig, FrontierDiscipline};
use autolycus::data::{self, DatasetSchema};
use autolycus::error::Error;
use autolycus::eval::{self, EvalReport, SweepConfig};
use autolycus::explain::{build_discretizer, ExplainerConfig};
use autolycus::service::{http, LocalOracle, OracleCore, Pricing, QueryOracle};
use autolycus::tree::{DecisionTree, TreeParams};

#[derive(Parser)]
#[command(name = "autolycus", version, about = "Explanation-guided model extraction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PricingArg {
    PerCall,
    PerInternal,
}

impl From<PricingArg> for Pricing {
    fn from(p: PricingArg) -> Self {
        match p {
            PricingArg::PerCall => Pricing::PerCall,
            PricingArg::PerInternal => Pricing::PerInternalPrediction,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DisciplineArg {
    Lifo,
    Fifo,
}

impl From<DisciplineArg> for FrontierDiscipline {
    fn from(d: DisciplineArg) -> Self {
        match d {
            DisciplineArg::Lifo => FrontierDiscipline::Lifo,
            DisciplineArg::Fifo => FrontierDiscipline::Fifo,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a decision tree on a CSV dataset and write the model JSON.
    Train {
        #[arg(long)]
        data: String,
        #[arg(long)]
        schema: String,
        #[arg(long)]
        max_depth: usize,
        #[arg(long, default_value_t = 2)]
        min_samples_split: usize,
        /// Train on a shuffled fraction of the data (default: all of it).
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: String,
    },
    /// Serve a trained model + explainer behind the HTTP query interface.
    Serve {
        #[arg(long)]
        model: String,
        #[arg(long)]
        schema: String,
        /// Training CSV; the explainer's discretizer is built from it.
        #[arg(long)]
        data: String,
        #[arg(long)]
        port: u16,
        #[arg(long, value_enum, default_value_t = PricingArg::PerCall)]
        pricing: PricingArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        num_perturbations: usize,
        #[arg(long)]
        kernel_width: Option<f64>,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        ridge_lambda: f64,
    },
    /// Run the TRAV-A extraction attack against a served or local target.
    Attack {
        #[arg(long, conflicts_with = "target_model")]
        target_url: Option<String>,
        #[arg(long)]
        target_model: Option<String>,
        /// Training CSV for the local target's discretizer.
        #[arg(long)]
        target_data: Option<String>,
        #[arg(long)]
        schema: String,
        /// CSV of attacker seed samples (feature columns only).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        lb: u64,
        #[arg(long, default_value_t = u64::MAX)]
        ub: u64,
        #[arg(long)]
        max_queries: u64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        integer_step: i64,
        #[arg(long, value_enum, default_value_t = DisciplineArg::Lifo)]
        discipline: DisciplineArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Surrogate hyperparameters (assumed known per the threat model).
        #[arg(long)]
        max_depth: usize,
        #[arg(long, default_value_t = 2)]
        min_samples_split: usize,
        #[arg(long, default_value_t = 1000)]
        num_perturbations: usize,
        #[arg(long)]
        out_surrogate: String,
        #[arg(long)]
        out_trace: String,
    },
    /// Compare a surrogate against a target on a held-out CSV.
    Eval {
        #[arg(long)]
        target: String,
        #[arg(long)]
        surrogate: String,
        #[arg(long)]
        data: String,
        #[arg(long)]
        schema: String,
        #[arg(long, default_value_t = 0)]
        queries: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full (seed size x budget x repetition) sweep from a JSON config.
    Experiment {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
    },
    /// Generate a random synthetic tree target with its exhaustive dataset.
    Synth {
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        features: usize,
        #[arg(long)]
        domain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_model: String,
        #[arg(long)]
        out_data: String,
        #[arg(long)]
        out_schema: Option<String>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Argument(_)
        | Error::Validation(_)
        | Error::Schema(_)
        | Error::Parse { .. }
        | Error::Format { .. }
        | Error::Capacity(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 2,
        _ => 1,
    }
}

fn load_model(path: &str, schema: &DatasetSchema) -> Result<DecisionTree, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}"))))?;
    DecisionTree::from_json(&text, Some(schema))
}

fn load_schema(path: &str, data: &str) -> Result<(DatasetSchema, Vec<data::LabeledSample>), Error> {
    data::load_dataset(data, path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            data,
            schema,
            max_depth,
            min_samples_split,
            train_fraction,
            seed,
            out,
        } => {
            let (schema_obj, samples) = load_schema(&schema, &data)?;
            let train = match train_fraction {
                Some(f) => data::split(&samples, f, seed)?.0,
                None => samples,
            };
            let params = TreeParams {
                max_depth,
                min_samples_split,
                rng_seed: seed,
            };
            let mut tree = DecisionTree::fit(&train, &schema_obj, params)?;
            tree.schema_ref = schema.clone();
            std::fs::write(&out, tree.to_json())?;
            let shape = tree.describe();
            println!(
                "trained on {} samples: depth {}, leaves {}, nodes {}",
                train.len(),
                shape.depth,
                shape.leaf_count,
                shape.node_count
            );
            Ok(())
        }
        Command::Serve {
            model,
            schema,
            data,
            port,
            pricing,
            seed,
            num_perturbations,
            kernel_width,
            top_k,
            ridge_lambda,
        } => {
            let (schema_obj, samples) = load_schema(&schema, &data)?;
            let tree = load_model(&model, &schema_obj)?;
            let discretizer = build_discretizer(&samples, &schema_obj)?;
            let mut explainer = ExplainerConfig::defaults(schema_obj.feature_count(), seed);
            explainer.num_perturbations = num_perturbations;
            explainer.ridge_lambda = ridge_lambda;
            if let Some(w) = kernel_width {
                explainer.kernel_width = w;
            }
            if let Some(k) = top_k {
                explainer.top_k = k;
            }
            let core = Arc::new(OracleCore::new(
                tree,
                discretizer,
                schema_obj,
                explainer,
                pricing.into(),
            ));
            let handle = http::serve(core, port)?;
            println!("serving on {}", handle.base_url());
            loop {
                std::thread::park();
            }
        }
        Command::Attack {
            target_url,
            target_model,
            target_data,
            schema,
            seeds,
            lb,
            ub,
            max_queries,
            epsilon,
            integer_step,
            discipline,
            seed,
            max_depth,
            min_samples_split,
            num_perturbations,
            out_surrogate,
            out_trace,
        } => {
            // the schema file alone (no data) is enough for the attacker
            let schema_obj = schema_from_file(&schema)?;
            let seed_samples = match seeds {
                Some(path) => data::load_unlabeled_csv(path, &schema_obj)?,
                None => vec![],
            };
            let config = AttackConfig {
                lower_bound: lb,
                upper_bound: ub,
                epsilon,
                integer_step,
                discipline: discipline.into(),
                max_queries,
                rng_seed: seed,
            };
            let params = TreeParams {
                max_depth,
                min_samples_split,
                rng_seed: seed,
            };

            let oracle: Box<dyn QueryOracle> = match (target_url, target_model) {
                (Some(url), None) => Box::new(http::RemoteOracle::new(url)),
                (None, Some(model)) => {
                    let data_path = target_data.ok_or_else(|| {
                        Error::Argument(
                            "--target-data is required with --target-model (discretizer source)"
                                .into(),
                        )
                    })?;
                    let (schema_full, samples) = load_schema(&schema, &data_path)?;
                    let tree = load_model(&model, &schema_full)?;
                    let discretizer = build_discretizer(&samples, &schema_full)?;
                    let mut explainer =
                        ExplainerConfig::defaults(schema_full.feature_count(), seed);
                    explainer.num_perturbations = num_perturbations;
                    Box::new(LocalOracle(Arc::new(OracleCore::new(
                        tree,
                        discretizer,
                        schema_full,
                        explainer,
                        Pricing::PerCall,
                    ))))
                }
                _ => {
                    return Err(Error::Argument(
                        "exactly one of --target-url / --target-model is required".into(),
                    ))
                }
            };

            let (surrogate, trace) =
                attack::extract(oracle.as_ref(), &seed_samples, &schema_obj, params, &config)?;
            std::fs::write(&out_surrogate, surrogate.to_json())?;
            attack::write_trace_csv(&trace, &schema_obj, &out_trace)?;
            if trace.distinct_classes() < 2 {
                eprintln!("warning: trace covers a single class; surrogate is constant");
            }
            println!(
                "queries: {}, visited: {}, stop: {}",
                trace.queries,
                trace.visited.len(),
                trace.stop_reason
            );
            Ok(())
        }
        Command::Eval {
            target,
            surrogate,
            data,
            schema,
            queries,
            seed,
        } => {
            let (schema_obj, samples) = load_schema(&schema, &data)?;
            let target = load_model(&target, &schema_obj)?;
            let surrogate = load_model(&surrogate, &schema_obj)?;
            if target.n_classes != surrogate.n_classes {
                return Err(Error::Schema(format!(
                    "class-count mismatch: target {} vs surrogate {}",
                    target.n_classes, surrogate.n_classes
                )));
            }
            let inputs: Vec<_> = samples.iter().map(|s| s.sample.clone()).collect();
            let report = EvalReport {
                accuracy_target: eval::accuracy(&target, &samples)?,
                accuracy_surrogate: eval::accuracy(&surrogate, &samples)?,
                r_test: eval::r_test(|s| target.predict(s), |s| surrogate.predict(s), &inputs)?,
                queries,
                seed_count: 0,
                repetition_seed: seed,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Experiment { config, out } => {
            let config: SweepConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
            let table = eval::run_experiment(&config)?;
            std::fs::write(&out, table.to_csv())?;
            println!("wrote {} result rows to {out}", table.rows.len());
            Ok(())
        }
        Command::Synth {
            depth,
            features,
            domain,
            seed,
            out_model,
            out_data,
            out_schema,
        } => {
            let (tree, schema_obj, samples) =
                data::synth_tree_dataset(depth, features, domain, seed)?;
            std::fs::write(&out_model, tree.to_json())?;
            data::save_dataset(&out_data, &schema_obj, "label", &samples)?;
            if let Some(path) = out_schema {
                let features_json: Vec<serde_json::Value> = schema_obj
                    .features
                    .iter()
                    .map(|f| {
                        serde_json::json!({
                            "name": f.name,
                            "kind": "integer",
                            "lower": f.lower,
                            "upper": f.upper,
                        })
                    })
                    .collect();
                let doc = serde_json::json!({
                    "label_column": "label",
                    "classes": schema_obj.label_names,
                    "features": features_json,
                });
                std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
            }
            let shape = tree.describe();
            println!(
                "synthesized {} samples; tree depth {}, leaves {}",
                samples.len(),
                shape.depth,
                shape.leaf_count
            );
            Ok(())
        }
    }
}

/// Parses a schema document without requiring a data CSV (bounds only; no
/// means, which the attacker does not need unless imputing).
fn schema_from_file(path: &str) -> Result<DatasetSchema, Error> {
    #[derive(serde::Deserialize)]
    struct Doc {
        classes: Vec<String>,
        features: Vec<Feature>,
    }
    #[derive(serde::Deserialize)]
    struct Feature {
        name: String,
        kind: autolycus::data::FeatureKind,
        #[serde(default)]
        lower: Option<f64>,
        #[serde(default)]
        upper: Option<f64>,
        #[serde(default)]
        categories: Vec<String>,
    }
    let doc: Doc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let schema = DatasetSchema {
        features: doc
            .features
            .into_iter()
            .map(|f| autolycus::data::FeatureSpec {
                name: f.name,
                kind: f.kind,
                lower: f.lower.unwrap_or(0.0),
                upper: f.upper.unwrap_or(0.0),
                categories: f.categories,
                mean: None,
            })
            .collect(),
        label_names: doc.classes,
    };
    schema.validate()?;
    Ok(schema)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
