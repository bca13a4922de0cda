//! Command-line front end. Each subcommand maps onto one library entry
//! point; errors map onto the exit codes in [`Error::exit_code`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::codec::train_codec;
use crate::config::EngineConfig;
use crate::corpus::{gesture_corpus, read_gesture_corpus, sine_corpus};
use crate::error::{Error, Result};
use crate::feedback::{trace_csv_header, trace_csv_row, LatentFeedbackLoop};
use crate::gradcheck;
use crate::mdrnn::train_mdrnn;
use crate::nn::GradCheck;
use crate::render::{frame, overlap_truncate, read_automation, render};
use crate::rng::Rng;
use crate::router::wav::{read_samples, write_samples};
use crate::session::{read_user_script, simulate};

#[derive(Debug, Parser)]
#[command(name = "dualloop", version, about = "Latent-feedback synthesis and call-and-response gesture engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML engine config. Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Train the audio codec; writes model JSON and `<out>.curve.csv`.
    TrainCodec {
        #[command(flatten)]
        common: Common,
        /// 16-bit mono WAV. Synthetic sine mixtures when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the gesture model; writes model JSON and `<out>.curve.csv`.
    TrainMdrnn {
        #[command(flatten)]
        common: Common,
        /// JSONL gesture sequences. Synthetic gestures when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the live engine.
    Run {
        #[command(flatten)]
        common: Common,
        /// Session log path; overrides `[run] session_log`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Render a WAV through the latent-feedback loop.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// JSONL of timestamped gain, alpha and latent messages.
        #[arg(long)]
        automation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Latent trace CSV. Defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Replay a scripted performer against the gesture model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// JSONL of `control` messages.
        #[arg(long)]
        script: PathBuf,
        /// Session log path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of both models' gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Run a parsed command line and return the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("dualloop: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        CliCommand::TrainCodec { common, corpus, out } => cmd_train_codec(&common, corpus.as_deref(), &out),
        CliCommand::TrainMdrnn { common, corpus, out } => cmd_train_mdrnn(&common, corpus.as_deref(), &out),
        CliCommand::Run { common, out, duration } => cmd_run(&common, out, duration),
        CliCommand::Render {
            common,
            input,
            automation,
            out,
            trace,
        } => cmd_render(&common, &input, automation.as_deref(), &out, trace.as_deref()),
        CliCommand::Simulate { common, script, out } => cmd_simulate(&common, &script, &out),
        CliCommand::Gradcheck { seed, out } => cmd_gradcheck(seed, out.as_deref()),
    }
    .map(|()| 0)
}

fn load(common: &Common) -> Result<(EngineConfig, u64)> {
    let config = EngineConfig::load_or_default(common.config.as_deref())?;
    let seed = common
        .seed
        .or(config.seed)
        .unwrap_or_else(|| Rng::from_entropy().seed());
    Ok((config, seed))
}

/// `model.json` → `model.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn curve_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

pub fn cmd_train_codec(common: &Common, corpus: Option<&Path>, out: &Path) -> Result<()> {
    let (config, seed) = load(common)?;
    let mut rng = Rng::seeded(seed);
    let model_config = config.codec.model.clone();
    let windows = match corpus {
        Some(p) => {
            let (samples, rate) = read_samples(p)?;
            if rate != model_config.sample_rate {
                return Err(Error::config(format!(
                    "corpus sample rate {rate} differs from codec sample_rate {}",
                    model_config.sample_rate
                )));
            }
            frame(&samples, model_config.window_size, model_config.hop, rate)
        }
        None => sine_corpus(&model_config, config.codec.training.synthetic_windows, &mut rng),
    };
    let t = &config.codec.training;
    let (model, report) = train_codec(model_config, &windows, t.epochs, t.learning_rate, &mut rng)?;
    model.save(out)?;
    write_text(&sibling(out, "curve.csv"), &curve_csv(&report.epoch_losses))?;
    eprintln!(
        "seed {seed}: {} windows, {} epochs, final loss {:.6}",
        windows.len(),
        t.epochs,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_train_mdrnn(common: &Common, corpus: Option<&Path>, out: &Path) -> Result<()> {
    let (config, seed) = load(common)?;
    let mut rng = Rng::seeded(seed);
    let t = &config.mdrnn.training;
    let sequences = match corpus {
        Some(p) => read_gesture_corpus(p)?,
        None => gesture_corpus(
            t.synthetic_sequences,
            t.sequence_length,
            t.mean_dt,
            config.mdrnn.model.dt_min,
            &mut rng,
        ),
    };
    let (model, report) = train_mdrnn(config.mdrnn.model.clone(), &sequences, t.epochs, t.learning_rate, &mut rng)?;
    model.save(out)?;
    write_text(&sibling(out, "curve.csv"), &curve_csv(&report.epoch_losses))?;
    eprintln!(
        "seed {seed}: {} sequences, {} epochs, final loss {:.6}",
        sequences.len(),
        t.epochs,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn cmd_run(common: &Common, out: Option<PathBuf>, duration: Option<f64>) -> Result<()> {
    let (mut config, seed) = load(common)?;
    if let Some(p) = out {
        config.run.session_log = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(p);
    }
    if duration.is_some() {
        config.run.duration = duration;
    }
    config.validate()?;
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
            .map_err(|e| Error::config(format!("cannot install interrupt handler: {e}")))?;
    }
    let summary = crate::engine::run(&config, seed, stop, |addr| {
        if let Some(a) = addr {
            eprintln!("control surface: ws://{a}");
        }
        eprintln!("seed {seed}: running; interrupt to stop");
    })?;
    eprintln!(
        "ran {:.2} s: {} audio windows, {} human events, {} model events",
        summary.seconds, summary.windows, summary.human_events, summary.model_events
    );
    Ok(())
}

pub fn cmd_render(
    common: &Common,
    input: &Path,
    automation: Option<&Path>,
    out: &Path,
    trace: Option<&Path>,
) -> Result<()> {
    let (config, seed) = load(common)?;
    let mut rng = Rng::seeded(seed);
    let model = config.codec_model(&mut rng)?;
    let (samples, rate) = read_samples(input)?;
    if rate != model.config.sample_rate {
        return Err(Error::config(format!(
            "input sample rate {rate} differs from codec sample_rate {}",
            model.config.sample_rate
        )));
    }
    let automation = match automation {
        Some(p) => read_automation(p)?,
        None => Vec::new(),
    };
    let (size, hop) = (model.config.window_size, model.config.hop);
    let dims = model.latent_dims();
    let windows = frame(&samples, size, hop, rate);
    let mut fb = LatentFeedbackLoop::new(model, &config.feedback)?;
    let result = render(&mut fb, &windows, &automation, &mut rng)?;
    write_samples(out, &overlap_truncate(&result.windows, hop, samples.len()), rate)?;

    let mut csv = trace_csv_header(dims);
    csv.push('\n');
    for (i, p) in result.trace.iter().enumerate() {
        csv.push_str(&trace_csv_row(i as u64, p));
        csv.push('\n');
    }
    let trace_path = trace.map(Path::to_path_buf).unwrap_or_else(|| sibling(out, "trace.csv"));
    write_text(&trace_path, &csv)?;
    eprintln!("seed {seed}: rendered {} windows", windows.len());
    Ok(())
}

pub fn cmd_simulate(common: &Common, script: &Path, out: &Path) -> Result<()> {
    let (config, seed) = load(common)?;
    // Model init draws from a child stream; the session itself replays from `seed`.
    let model = config.mdrnn_model(&mut Rng::seeded(seed).fork())?;
    let events = read_user_script(script)?;
    let log = simulate(&model, &config.interaction, &config.router.mapping, &events, seed)?;
    log.save(out)?;
    for (t, mode) in log.mode_changes() {
        eprintln!("t={t:.3} mode -> {mode:?}");
    }
    Ok(())
}

fn report_line(name: &str, r: &GradCheck) -> String {
    format!(
        "{name},{:e},{},{},{}",
        r.max_relative_error, r.worst_block, r.worst_index, r.checked
    )
}

pub fn cmd_gradcheck(seed: u64, out: Option<&Path>) -> Result<()> {
    let codec = gradcheck::check_codec(seed)?;
    let mdrnn = gradcheck::check_mdrnn(seed)?;
    let mut csv = String::from("model,max_relative_error,worst_block,worst_index,checked\n");
    for (name, r) in [("codec", &codec), ("mdrnn", &mdrnn)] {
        let ok = r.max_relative_error < gradcheck::TOLERANCE;
        println!(
            "{} {name}: max relative error {:.3e} over {} parameters (worst {}[{}])",
            if ok { "PASS" } else { "FAIL" },
            r.max_relative_error,
            r.checked,
            r.worst_block,
            r.worst_index
        );
        csv.push_str(&report_line(name, r));
        csv.push('\n');
    }
    if let Some(p) = out {
        write_text(p, &csv)?;
    }
    let worst = codec.max_relative_error.max(mdrnn.max_relative_error);
    if worst < gradcheck::TOLERANCE {
        Ok(())
    } else {
        Err(Error::Numerical {
            block: "gradcheck".into(),
            detail: format!("max relative error {worst:e} >= {:e}", gradcheck::TOLERANCE),
        })
    }
}
