use std::fs;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ocelgan::gan::{load_model, train_with_observer, CheckpointMeta, TrainConfig};
use ocelgan::ocel::{import_ocel_json, OcelLog};
use ocelgan::synthgen::{generate, generate_toy_linear, GenConfig};
use ocelgan_cli::error::AppError;
use ocelgan_cli::payload::{self, PrefixRequest, TrainingSource};
use ocelgan_cli::server::{serve, AppState};
use ocelgan_cli::store::{content_id, read_source, write_checkpoint, Store};
use ocelgan_cli::table;

#[derive(Parser)]
#[command(name = "ocelgan", version, about = "Suffix prediction for object-centric event logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Case statistics per object type, after outlier trimming
    Stats {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        object_type: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Which activities touch which object types
    Relations {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Train a model on one object type
    Train {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        object_type: String,
        /// Comma-separated object attributes to encode
        #[arg(long, value_delimiter = ',')]
        attrs: Vec<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON training config; flags override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "model")]
        out: PathBuf,
    },
    /// Score a model on a log (its test split, if it is the training log)
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Also write the full per-pair report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Predict the rest of a running case
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        prefix: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic OCEL log
    Generate {
        /// Generator config as JSON; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the linear a→b→c→d toy log with this many cases instead
        #[arg(long, conflicts_with = "config")]
        toy: Option<usize>,
        /// Seconds between toy events
        #[arg(long, default_value_t = 600)]
        gap: i64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, env = "OCELGAN_DATA_DIR", default_value = "ocelgan-data")]
        data_dir: PathBuf,
        #[arg(long, env = "OCELGAN_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "OCELGAN_HOST", default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, AppError> {
    fs::read(path).map_err(|e| {
        AppError::bad_request("io", format!("{}: {e}", path.display()))
            .with_details(serde_json::json!({ "path": path.display().to_string() }))
    })
}

fn read_log(path: &Path) -> Result<(OcelLog, String), AppError> {
    let log = import_ocel_json(&read(path)?)?;
    let id = content_id(&[&log.export_json()]);
    Ok((log, id))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, AppError> {
    serde_json::from_slice(&read(path)?)
        .map_err(|e| AppError::bad_request("invalid_json", format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), AppError> {
    println!("{}", serde_json::to_string(value).map_err(|e| AppError::internal(e.to_string()))?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Stats { log, object_type, json } => {
            let (log, _) = read_log(&log)?;
            let rows = payload::stats(&log, object_type.as_deref())?;
            if json { print_json(&rows)? } else { print!("{}", table::stats(&rows)) }
        }
        Command::Relations { log, json } => {
            let (log, _) = read_log(&log)?;
            let rel = payload::relations(&log);
            if json { print_json(&rel)? } else { print!("{}", table::relations(&rel)) }
        }
        Command::Train { log, object_type, attrs, epochs, seed, config, out } => {
            let (log, log_id) = read_log(&log)?;
            let mut cfg: TrainConfig = match config {
                Some(p) => read_json(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let data = payload::prepare_training(&log, &object_type, &attrs, cfg.seed)?;
            let outcome = train_with_observer(&cfg, &data.schema, &data.bundle, |r| {
                let val = match (r.val_similarity, r.val_mae) {
                    (Some(s), Some(m)) => format!("  val S {s:.4}  val MAE {m:.4}"),
                    _ => String::new(),
                };
                eprintln!("epoch {:>4}  L_D {:.4}  L_G {:.4}{val}", r.epoch, r.loss_d, r.loss_g);
                ControlFlow::Continue(())
            })?;
            let meta = CheckpointMeta::for_model(&outcome.model, outcome.best_epoch, outcome.best_validation.clone());
            let source = TrainingSource { log_id, object_type, attrs };
            write_checkpoint(&out, &outcome.model, &meta, &outcome.history, &source)?;
            match &outcome.best_validation {
                Some(r) => print!("best epoch {}\n{}", outcome.best_epoch.unwrap_or_default(), table::eval(r)),
                None => println!("no validation ran"),
            }
            eprintln!("model written to {}", out.display());
        }
        Command::Eval { model, log, out, json } => {
            let source = read_source(&model)?.ok_or_else(|| {
                AppError::bad_request("missing_source", format!("{} has no {}", model.display(), payload::SOURCE_FILE))
            })?;
            let (model, _) = load_model(&model)?;
            let (log, log_id) = read_log(&log)?;
            let report = payload::evaluate_on_log(&model, &source, &log, &log_id)?;
            if let Some(path) = out {
                let full = serde_json::to_vec_pretty(&report).map_err(|e| AppError::internal(e.to_string()))?;
                fs::write(path, full)?;
            }
            if json { print_json(&report.summary())? } else { print!("{}", table::eval(&report)) }
        }
        Command::Predict { model, prefix, json } => {
            let source = read_source(&model)?;
            let (model, _) = load_model(&model)?;
            let req: PrefixRequest = read_json(&prefix)?;
            let resp = payload::predict(&model, source.as_ref(), &req)?;
            if json { print_json(&resp)? } else { print!("{}", table::suffix(&resp)) }
        }
        Command::Generate { config, toy, gap, out } => {
            let log = match toy {
                Some(n) if n == 0 => return Err(AppError::bad_request("invalid_config", "--toy needs at least one case")),
                Some(n) => generate_toy_linear(n, gap),
                None => {
                    let cfg: GenConfig = match config {
                        Some(p) => read_json(&p)?,
                        None => GenConfig::default(),
                    };
                    generate(&cfg).map_err(|e| AppError::bad_request("invalid_config", e.to_string()))?
                }
            };
            fs::write(&out, log.export_json())?;
            eprintln!("{} events, {} objects written to {}", log.events().len(), log.objects().len(), out.display());
        }
        Command::Serve { data_dir, port, host } => {
            let store = Store::open(&data_dir)?;
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}, data in {}", data_dir.display());
            rt.block_on(serve(addr, AppState::new(store)))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help, --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = AppError::bad_request("usage", e.to_string().trim_end());
            eprintln!("{}", serde_json::to_string(&err.body).expect("error serializes"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.body).expect("error serializes"));
            ExitCode::FAILURE
        }
    }
}
