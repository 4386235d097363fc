//! `ldp`: experiment CLI for the local-DP representation-learning toolkit.
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 runtime failure.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ldp_core::analysis::{
    accuracy_upper_bound, bound_simulation_oracle, effective_accuracy_upper_bound,
    private_grid_search, private_validation, BoundQuery,
};
use ldp_core::classifier::PredictMode;
use ldp_core::rng::RandomnessSource;

use ldp_cli::config::{ExperimentConfig, Level, Task};
use ldp_cli::error::{CliError, Result};
use ldp_cli::experiments::{
    cell_seed, prepare_data_collection, run_experiment, train_collection_classifier,
};
use ldp_cli::idx::load_idx;
use ldp_cli::model_io::{load_classifier, load_vlm, save_model, ModelPayload};
use ldp_cli::preprocess::preprocess_images;
use ldp_cli::report::{fmt_f64, ReportFormat, RunReport};

#[derive(Parser)]
#[command(name = "ldp", about = "Local-DP representation learning experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Master seed; overrides the config file's seed when both are given.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the VLM for a task and save it.
    TrainVlm {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
    },
    /// Privatize an IDX image file through a saved VLM.
    Privatize {
        #[command(flatten)]
        common: Common,
        /// Saved VLM model file.
        #[arg(long)]
        model: PathBuf,
        /// IDX image file to privatize.
        #[arg(long)]
        images: PathBuf,
        /// Per-record feature budget.
        #[arg(long)]
        epsilon: f64,
        /// Sharing level: latent or feature.
        #[arg(long, default_value = "latent")]
        level: String,
    },
    /// Privatize the respondent block and train the noise-aware classifier.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// Local epsilon for the collected records.
        #[arg(long)]
        epsilon: f64,
    },
    /// Score a saved classifier on the validation split under local DP.
    ValidatePrivate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        /// Saved VLM, needed for latent-level classifiers.
        #[arg(long)]
        vlm: Option<PathBuf>,
        /// Budget each respondent spends on this validation query.
        #[arg(long)]
        epsilon: f64,
    },
    /// Learning-rate grid search scored by private validation.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        /// Local epsilon for the collected training records.
        #[arg(long)]
        epsilon: f64,
        /// Budget each respondent spends per scored candidate.
        #[arg(long)]
        epsilon_per_query: f64,
    },
    /// Evaluate the best-case private accuracy bound, optionally with a
    /// Monte Carlo estimate.
    EvaluateBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        latent_dim: usize,
        /// Monte Carlo sample count; omit to skip simulation.
        #[arg(long)]
        simulate: Option<u64>,
    },
    /// Run a full experiment from a config file and write the report.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Convert a report between CSV and JSON.
    EmitReport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serialization failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainVlm { common, config } => {
            let config = load_config(&config, common.seed)?;
            if config.task == Task::DataJoin {
                return Err(CliError::validation(
                    "train-vlm covers the image tasks; data_join trains its VLM inside run-experiment",
                ));
            }
            let setup = prepare_data_collection(&config)?;
            save_model(&ModelPayload::Vlm(setup.vlm), &common.out)?;
            eprintln!("saved VLM to {}", common.out.display());
        }
        Command::Privatize {
            common,
            model,
            images,
            epsilon,
            level,
        } => {
            let vlm = load_vlm(&model)?;
            let features = preprocess_images(&load_idx(&images)?)?;
            let mut rng = RandomnessSource::from_seed(common.seed.unwrap_or(1));
            let mut writer = csv::Writer::from_path(&common.out)
                .map_err(|e| CliError::runtime(format!("CSV open failed: {e}")))?;
            for r in 0..features.rows() {
                let latent = vlm.privatize_to_latent(features.row(r), epsilon, r as u64, &mut rng)?;
                let values: Vec<f64> = match level.as_str() {
                    "latent" => latent.z_tilde.clone(),
                    "feature" => vlm.privatize_to_features(&latent)?.x_tilde,
                    other => {
                        return Err(CliError::validation(format!(
                            "level must be latent or feature, got {other:?}"
                        )))
                    }
                };
                let mut record = vec![latent.record_id.to_string(), fmt_f64(latent.epsilon_x)];
                record.extend(values.iter().map(|&v| fmt_f64(v)));
                writer
                    .write_record(&record)
                    .map_err(|e| CliError::runtime(format!("CSV write failed: {e}")))?;
            }
            writer
                .flush()
                .map_err(|e| CliError::runtime(format!("CSV flush failed: {e}")))?;
        }
        Command::TrainClassifier {
            common,
            config,
            epsilon,
        } => {
            let config = load_config(&config, common.seed)?;
            let setup = prepare_data_collection(&config)?;
            let seed = cell_seed(config.seed, &["train-classifier", &fmt_f64(epsilon)]);
            let mut rng = RandomnessSource::from_seed(seed);
            let clf = train_collection_classifier(&config, &setup, epsilon, &mut rng)?;
            save_model(&ModelPayload::Classifier(clf), &common.out)?;
            eprintln!("saved classifier to {}", common.out.display());
        }
        Command::ValidatePrivate {
            common,
            config,
            classifier,
            vlm,
            epsilon,
        } => {
            let config = load_config(&config, common.seed)?;
            let clf = load_classifier(&classifier)?;
            let vlm = vlm.as_deref().map(load_vlm).transpose()?;
            let setup = prepare_data_collection(&config)?;
            let seed = cell_seed(config.seed, &["validate-private", &fmt_f64(epsilon)]);
            let mut rng = RandomnessSource::from_seed(seed);
            let report = private_validation(
                &clf,
                &setup.splits.clf_val.features,
                &setup.splits.clf_val.labels,
                PredictMode::Clean,
                vlm.as_ref(),
                epsilon,
                &mut rng,
            )?;
            write_json(
                &common.out,
                &serde_json::json!({
                    "n_val": report.n_val,
                    "epsilon": fmt_f64(report.epsilon),
                    "flip_prob": fmt_f64(report.flip_prob),
                    "a_tilde": fmt_f64(report.a_tilde),
                    "a_hat": fmt_f64(report.a_hat),
                    "std_error": fmt_f64(report.std_error),
                    "out_of_range": report.out_of_range,
                }),
            )?;
        }
        Command::GridSearch {
            common,
            config,
            epsilon,
            epsilon_per_query,
        } => {
            let config = load_config(&config, common.seed)?;
            let setup = prepare_data_collection(&config)?;
            let factors = [0.3, 1.0, 3.0];
            let mut candidates: Vec<_> = factors
                .iter()
                .map(|&factor| {
                    let mut candidate_config = config.clone();
                    candidate_config.clf.learning_rate *= factor;
                    let setup = &setup;
                    move |rng: &mut RandomnessSource| {
                        train_collection_classifier(&candidate_config, setup, epsilon, rng)
                            .map_err(|e| {
                                ldp_core::CoreError::Training(format!("candidate failed: {e}"))
                            })
                    }
                })
                .collect();
            let seed = cell_seed(config.seed, &["grid-search", &fmt_f64(epsilon)]);
            let mut rng = RandomnessSource::from_seed(seed);
            let vlm_for_predict = match config.level {
                Level::Latent => Some(&setup.vlm),
                Level::Feature => None,
            };
            let outcome = private_grid_search(
                &mut candidates,
                &setup.splits.clf_val.features,
                &setup.splits.clf_val.labels,
                PredictMode::Clean,
                vlm_for_predict,
                epsilon_per_query,
                &mut rng,
            )?;
            eprintln!(
                "best candidate: index {} (learning rate x{}); per-respondent validation budget spent: {}",
                outcome.best_index,
                factors[outcome.best_index],
                fmt_f64(outcome.epsilon_spent_per_respondent)
            );
            for (i, report) in outcome.reports.iter().enumerate() {
                match report {
                    Ok(r) => eprintln!(
                        "candidate {i}: debiased accuracy {} (std error {})",
                        fmt_f64(r.a_hat),
                        fmt_f64(r.std_error)
                    ),
                    Err(e) => eprintln!("candidate {i}: failed: {e}"),
                }
            }
            save_model(&ModelPayload::Classifier(outcome.best), &common.out)?;
        }
        Command::EvaluateBound {
            common,
            classes,
            epsilon,
            latent_dim,
            simulate,
        } => {
            let query = BoundQuery {
                num_classes: classes,
                epsilon,
                latent_dim,
            };
            let raw = accuracy_upper_bound(&query)?;
            let effective = effective_accuracy_upper_bound(&query)?;
            let mut value = serde_json::json!({
                "num_classes": classes,
                "epsilon": fmt_f64(epsilon),
                "latent_dim": latent_dim,
                "bound": fmt_f64(raw),
                "effective_bound": fmt_f64(effective),
            });
            if let Some(samples) = simulate {
                let mut rng = RandomnessSource::from_seed(common.seed.unwrap_or(1));
                let estimate = bound_simulation_oracle(&query, samples, &mut rng)?;
                value["simulated_accuracy"] = fmt_f64(estimate.accuracy).into();
                value["simulated_std_error"] = fmt_f64(estimate.std_error).into();
            }
            write_json(&common.out, &value)?;
            println!("{}", fmt_f64(effective));
        }
        Command::RunExperiment {
            common,
            config,
            format,
        } => {
            let config = load_config(&config, common.seed)?;
            let format: ReportFormat = format.parse()?;
            let started = Instant::now();
            let report = run_experiment(&config)?;
            // wall time goes to stderr only: the report file must be
            // byte-for-byte reproducible from config + seeds
            eprintln!(
                "experiment finished in {:.1}s, {} rows",
                started.elapsed().as_secs_f64(),
                report.rows.len()
            );
            report.write(&common.out, format)?;
        }
        Command::EmitReport {
            common,
            input,
            format,
        } => {
            let format: ReportFormat = format.parse()?;
            let text = std::fs::read_to_string(&input)?;
            let report = if text.trim_start().starts_with('{') {
                RunReport::from_json(&text)?
            } else {
                RunReport::from_csv(&text)?
            };
            report.write(&common.out, format)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
