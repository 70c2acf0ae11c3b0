//! Command-line harness: corpus generation, extractor and dialog-model
//! training, evaluation, reporting, and the gradient suite.
//!
//! Exit codes: 0 success, 1 validation or I/O failure, 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emofusion_cli::config::{FlatConfig, Overrides};
use emofusion_cli::corpus::{load_corpus, save_corpus, AudioField, MaterializeOptions};
use emofusion_cli::error::HarnessError;
use emofusion_cli::extract::{
    blob_dataset, spectrogram_to_input, train_extractor, triplet_distance_gap, BlobSpec,
    ExtractorRunConfig,
};
use emofusion_cli::gradsuite::{format_suite, run_gradient_suite, suite_passes};
use emofusion_cli::metrics::{emit_report, evaluate_model, load_metrics, save_metrics};
use emofusion_cli::synth::{generate_synthetic_corpus, SynthSpec};
use emofusion_cli::train::{format_log, train_dialog_model};
use emofusion_cli::wav::read_wav;
use emofusion_model::checkpoint::{self, load_dialog_model, load_extractor};
use emofusion_model::extractor::ExtractorConfig;
use emofusion_model::losses::{CovarianceForm, ExtractorLossConfig};
use emofusion_signal::mel_spectrogram;
use emofusion_core::Tensor;

#[derive(Parser)]
#[command(name = "emofusion", version, about = "Multimodal dialog emotion recognition harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Flat TOML config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSONL corpus path.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output file (gen-synth) or directory (everything else).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma list drawn from t,a,v.
    #[arg(long)]
    modalities: Option<String>,
    /// attention or concat.
    #[arg(long)]
    fusion: Option<String>,
    /// Encoder depth applied to all present modalities.
    #[arg(long)]
    encoders: Option<usize>,
    #[arg(long)]
    fusion_layers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    GenSynth {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 40)]
        dialogs: usize,
        #[arg(long, default_value_t = 8)]
        utterances: usize,
        #[arg(long, default_value_t = 7)]
        classes: usize,
        /// Class signal strength relative to unit noise.
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        /// Make every single modality class-uninformative on its own.
        #[arg(long)]
        cross_modal_only: bool,
    },
    /// Train the triplet feature extractor on blobs or a WAV corpus.
    TrainExtractor {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 8)]
        triplets: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Comma list of stage output channels.
        #[arg(long, default_value = "4,8")]
        channels: String,
        /// channels,height,width; defaults to 1,12,12 for blobs and
        /// 1,128,48 (the mel layout) when reading a corpus.
        #[arg(long)]
        input_shape: Option<String>,
        /// Representation width; defaults to the configured d_audio.
        #[arg(long)]
        repr_dim: Option<usize>,
        /// Blob mode: classes.
        #[arg(long, default_value_t = 3)]
        classes: usize,
        /// Blob mode: samples per class.
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Blob mode: sample noise around each class pattern.
        #[arg(long, default_value_t = 0.4)]
        noise: f64,
    },
    /// Train the dialog model on a corpus.
    TrainModel {
        #[command(flatten)]
        common: CommonOpts,
        /// Extractor checkpoint for corpora with WAV audio.
        #[arg(long)]
        extractor: Option<PathBuf>,
    },
    /// Score a trained model on a corpus.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Model checkpoint written by train-model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        extractor: Option<PathBuf>,
        /// Also write the human-readable report files.
        #[arg(long)]
        report: bool,
    },
    /// Render report files from a saved metrics.json.
    Report {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::GenSynth {
            common,
            dialogs,
            utterances,
            classes,
            separation,
            cross_modal_only,
        } => {
            let flat = load_flat(&common)?;
            let out = require(&common.out, "gen-synth writes the corpus given by --out")?;
            let spec = SynthSpec {
                n_dialogs: dialogs,
                utterances_per_dialog: utterances,
                d_text: flat.d_text,
                d_audio: flat.d_audio,
                d_visual: flat.d_visual,
                classes,
                separation,
                cross_modal_only,
                seed: flat.seed,
            };
            let records = generate_synthetic_corpus(&spec)?;
            save_corpus(&out, &records)?;
            let total: usize = records.iter().map(|r| r.utterances.len()).sum();
            println!("wrote {} dialogs ({} utterances) to {}", records.len(), total, out.display());
            Ok(())
        }

        Command::TrainExtractor {
            common,
            steps,
            triplets,
            lr,
            channels,
            input_shape,
            repr_dim,
            classes,
            per_class,
            noise,
        } => {
            let flat = load_flat(&common)?;
            let out = require(&common.out, "train-extractor writes into the --out directory")?;
            let stage_channels = parse_usize_list(&channels, "--channels")?;
            let default_shape = if common.corpus.is_some() { "1,128,48" } else { "1,12,12" };
            let shape_list =
                parse_usize_list(input_shape.as_deref().unwrap_or(default_shape), "--input-shape")?;
            let [c, h, w]: [usize; 3] = shape_list.try_into().map_err(|_| {
                HarnessError::validation("--input-shape needs exactly channels,height,width")
            })?;

            let extractor_cfg = ExtractorConfig {
                input_shape: [c, h, w],
                stage_channels,
                representation_dim: repr_dim.unwrap_or(flat.d_audio),
                normalize_output: true,
            };
            let (inputs, labels) = match &common.corpus {
                Some(path) => corpus_spectrogram_dataset(path, extractor_cfg.input_shape)?,
                None => {
                    let (inputs, labels) = blob_dataset(&BlobSpec {
                        classes,
                        per_class,
                        shape: extractor_cfg.input_shape,
                        noise,
                        seed: flat.seed,
                    });
                    (inputs, labels)
                }
            };

            let run = ExtractorRunConfig {
                extractor: extractor_cfg,
                steps,
                triplets_per_step: triplets,
                lr,
                weight_decay: flat.weight_decay,
                seed: flat.seed,
                loss: ExtractorLossConfig::default(),
                covariance_form: CovarianceForm::SquaredOffDiagonal,
            };
            let outcome = train_extractor(&inputs, &labels, &run)?;

            fs::create_dir_all(&out)
                .map_err(|e| HarnessError::io(format!("creating {}", out.display()), e))?;
            checkpoint::save(&out.join("extractor.json"), &run.extractor, &outcome.extractor.params())
                .map_err(|e| HarnessError::validation(format!("saving extractor: {e}")))?;
            let log: String = outcome
                .losses
                .iter()
                .enumerate()
                .map(|(i, l)| format!("step {} loss {}\n", i + 1, l))
                .collect();
            fs::write(out.join("extractor_log.txt"), log)
                .map_err(|e| HarnessError::io("writing extractor_log.txt", e))?;

            let gap = triplet_distance_gap(&outcome.extractor, &inputs, &labels, 64, flat.seed)?;
            println!(
                "trained {} steps; loss {} -> {}",
                outcome.losses.len(),
                outcome.losses.first().unwrap(),
                outcome.losses.last().unwrap()
            );
            println!("mean d_ap {} mean d_an {}", gap.mean_d_ap, gap.mean_d_an);
            Ok(())
        }

        Command::TrainModel { common, extractor } => {
            let flat = load_flat(&common)?;
            let corpus_path = require(&common.corpus, "train-model reads --corpus")?;
            let out = require(&common.out, "train-model writes into the --out directory")?;
            let model_cfg = flat.model_config()?;
            let train_cfg = flat.train_config()?;
            let extractor = extractor.as_deref().map(load_extractor_file).transpose()?;

            let corpus = load_corpus(&corpus_path)?;
            corpus.validate_labels(model_cfg.n_classes)?;
            corpus.check_widths(&model_cfg, extractor.as_ref())?;
            let dialogs = corpus.materialize(&MaterializeOptions {
                modalities: model_cfg.modalities,
                extractor: extractor.as_ref(),
            })?;

            let outcome = train_dialog_model(&dialogs, &model_cfg, &train_cfg)?;
            fs::create_dir_all(&out)
                .map_err(|e| HarnessError::io(format!("creating {}", out.display()), e))?;
            checkpoint::save(&out.join("model.json"), &model_cfg, &outcome.model.params())
                .map_err(|e| HarnessError::validation(format!("saving model: {e}")))?;
            fs::write(out.join("train_log.txt"), format_log(&outcome.log))
                .map_err(|e| HarnessError::io("writing train_log.txt", e))?;

            let best = &outcome.log[outcome.best_epoch - 1];
            print!(
                "best epoch {} train_loss {} train_acc {}",
                best.epoch, best.train_loss, best.train_accuracy
            );
            if let (Some(vl), Some(va)) = (best.val_loss, best.val_accuracy) {
                print!(" val_loss {vl} val_acc {va}");
            }
            println!();
            Ok(())
        }

        Command::Evaluate {
            common,
            model,
            extractor,
            report,
        } => {
            let corpus_path = require(&common.corpus, "evaluate reads --corpus")?;
            let out = require(&common.out, "evaluate writes into the --out directory")?;
            let model = load_dialog_model(&model)
                .map_err(|e| HarnessError::validation(format!("loading model: {e}")))?;
            let extractor = extractor.as_deref().map(load_extractor_file).transpose()?;

            let corpus = load_corpus(&corpus_path)?;
            let cfg = model.config();
            corpus.validate_labels(cfg.n_classes)?;
            corpus.check_widths(cfg, extractor.as_ref())?;
            let dialogs = corpus.materialize(&MaterializeOptions {
                modalities: cfg.modalities,
                extractor: extractor.as_ref(),
            })?;

            let metrics = evaluate_model(&model, &dialogs)?;
            fs::create_dir_all(&out)
                .map_err(|e| HarnessError::io(format!("creating {}", out.display()), e))?;
            save_metrics(&out.join("metrics.json"), &metrics)?;
            if report {
                emit_report(&metrics, &out)?;
            }
            println!("accuracy {}", metrics.accuracy);
            println!("weighted_f1 {}", metrics.weighted_f1);
            Ok(())
        }

        Command::Report { common, metrics } => {
            let out = require(&common.out, "report writes into the --out directory")?;
            let report = load_metrics(&metrics)?;
            emit_report(&report, &out)?;
            println!("report written to {}", out.display());
            Ok(())
        }

        Command::Gradcheck { common } => {
            let entries = run_gradient_suite(common.seed.unwrap_or(0));
            print!("{}", format_suite(&entries));
            if suite_passes(&entries) {
                println!("all {} gradient checks passed", entries.len());
                Ok(())
            } else {
                Err(HarnessError::validation("gradient suite failed"))
            }
        }
    }
}

fn load_flat(common: &CommonOpts) -> Result<FlatConfig, HarnessError> {
    let mut flat = match &common.config {
        Some(path) => FlatConfig::load(path)?,
        None => FlatConfig::default(),
    };
    flat.apply(&Overrides {
        seed: common.seed,
        modalities: common.modalities.clone(),
        fusion: common.fusion.clone(),
        encoders: common.encoders,
        fusion_layers: common.fusion_layers,
    });
    Ok(flat)
}

fn require(opt: &Option<PathBuf>, what: &str) -> Result<PathBuf, HarnessError> {
    opt.clone().ok_or_else(|| HarnessError::validation(what))
}

fn load_extractor_file(path: &Path) -> Result<emofusion_model::extractor::Extractor, HarnessError> {
    load_extractor(path).map_err(|e| HarnessError::validation(format!("loading extractor: {e}")))
}

fn parse_usize_list(text: &str, flag: &str) -> Result<Vec<usize>, HarnessError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| HarnessError::validation(format!("{flag}: '{s}' is not a count")))
        })
        .collect()
}

/// Builds extractor training inputs from a corpus whose audio entries are
/// WAV paths.
fn corpus_spectrogram_dataset(
    path: &Path,
    shape: [usize; 3],
) -> Result<(Vec<Tensor>, Vec<usize>), HarnessError> {
    let corpus = load_corpus(path)?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for record in &corpus.records {
        for (u, utt) in record.utterances.iter().enumerate() {
            match &utt.audio {
                AudioField::Wav { wav } => {
                    let clip = read_wav(&corpus.base_dir.join(wav))?;
                    let mel = mel_spectrogram(&clip)?;
                    inputs.push(spectrogram_to_input(&mel, shape)?);
                }
                AudioField::Features(_) => {
                    return Err(HarnessError::validation(format!(
                        "dialog '{}' utterance {u}: extractor training needs wav audio, found a feature vector",
                        record.dialog_id
                    )));
                }
            }
            labels.push(utt.label);
        }
    }
    Ok((inputs, labels))
}
