//! Acceptance suite. One line per criterion:
//!
//! ```text
//! PASS switchover_constant (0.02s): ...
//! ```
//!
//! Exits non-zero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Instant;

use dualloop::codec::{train_codec, CodecConfig, CodecModel};
use dualloop::corpus::{gesture_corpus, sine_corpus};
use dualloop::domain::{AudioWindow, LatentParams, CONTROL_CHANNELS};
use dualloop::feedback::{blend, mean_abs_change, FeedbackConfig, FeedbackState, LatentFeedbackLoop};
use dualloop::gradcheck::{check_codec, check_mdrnn, TOLERANCE};
use dualloop::interaction::{InteractionConfig, LoopMode};
use dualloop::mdrnn::{train_mdrnn, MdrnnConfig, MdrnnModel, MixtureParams, INPUT_DIM};
use dualloop::rng::Rng;
use dualloop::router::midi::MidiKind;
use dualloop::router::wav::{read_samples, write_samples};
use dualloop::router::{MappingTable, MidiMessage, Target};
use dualloop::session::{read_user_script, simulate};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundled_script() -> PathBuf {
    repo_root().join("configs/scripts/idle-after-one-event.jsonl")
}

fn small_mdrnn(seed: u64) -> MdrnnModel {
    let config = MdrnnConfig {
        hidden_units: 8,
        mixtures: 3,
        ..MdrnnConfig::default()
    };
    MdrnnModel::init(config, &mut Rng::seeded(seed)).unwrap()
}

fn first_mode_change(log: &dualloop::session::SessionLog) -> Option<(f64, LoopMode)> {
    log.mode_changes().first().copied()
}

fn switchover_constant() -> Outcome {
    let script = read_user_script(bundled_script()).map_err(|e| e.to_string())?;
    ensure!(script.len() == 1 && script[0].time == 0.0, "bundled script is not a single event at t=0");
    let config = InteractionConfig::default();
    ensure!(config.tick == 0.01 && config.switchover == 0.1, "defaults changed");
    for seed in 0..5 {
        let log = simulate(&small_mdrnn(seed), &config, &MappingTable::default(), &script, seed)
            .map_err(|e| e.to_string())?;
        let first = first_mode_change(&log);
        ensure!(first == Some((0.1, LoopMode::ModelLead)), "seed {seed}: first transition {first:?}");
    }
    // Off-grid event: first tick with idle >= 0.1 is 0.11, one tick late at most.
    let off = vec![dualloop::domain::ControlEvent::human(0.005, 2, 0.3).unwrap()];
    let log = simulate(&small_mdrnn(9), &config, &MappingTable::default(), &off, 9).map_err(|e| e.to_string())?;
    let first = first_mode_change(&log);
    ensure!(first == Some((0.11, LoopMode::ModelLead)), "off-grid event: {first:?}");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("log.jsonl");
    let status = Process::new(env!("CARGO_BIN_EXE_dualloop"))
        .args(["simulate", "--seed", "3", "--script"])
        .arg(bundled_script())
        .arg("--out")
        .arg(&out)
        .output()
        .map(|o| o.status)
        .map_err(|e| e.to_string())?;
    ensure!(status.success(), "cli simulate exited with {status}");
    let text = std::fs::read_to_string(&out).map_err(|e| e.to_string())?;
    let cli_first = text.lines().find(|l| l.contains(r#""kind":"mode""#)).unwrap_or("");
    ensure!(
        cli_first == r#"{"kind":"mode","t":0.1,"mode":"model"}"#,
        "cli log first mode line: {cli_first}"
    );
    Ok("UserLead->ModelLead at t=0.1 exactly (5 seeds + cli); off-grid event switches at 0.11".into())
}

fn channel_count() -> Outcome {
    ensure!(INPUT_DIM == 9 && CONTROL_CHANNELS == 8, "input dim {INPUT_DIM}, channels {CONTROL_CHANNELS}");
    let config = MdrnnConfig::default();
    ensure!(config.input_dim == 9, "default input_dim {}", config.input_dim);
    ensure!(
        MdrnnConfig { input_dim: 8, ..MdrnnConfig::default() }.validate().is_err(),
        "input_dim 8 accepted"
    );
    let model = MdrnnModel::init(config.clone(), &mut Rng::seeded(1)).unwrap();
    let (params, _) = model.step(&[0.1; INPUT_DIM], &model.initial_state()).unwrap();
    ensure!(
        params.means.iter().all(|m| m.len() == 9) && params.log_scales.iter().all(|s| s.len() == 9),
        "mixture output width is not 9"
    );
    ensure!(
        config.head_outputs() == config.mixtures * (1 + 2 * INPUT_DIM),
        "head outputs {}",
        config.head_outputs()
    );

    let table = MappingTable::default();
    let mut notes = 0;
    let mut ccs = std::collections::BTreeSet::new();
    let mut sliders = std::collections::BTreeSet::new();
    for c in 0..CONTROL_CHANNELS {
        let [synth, pad] = table.targets(c);
        match synth {
            Target::SynthNote => {
                ensure!(c == 0, "channel {c} is the note target");
                notes += 1;
            }
            Target::SynthTimbre { cc } => {
                ensure!(c >= 1, "channel 0 is not the note target");
                ccs.insert(cc);
            }
            Target::PadSlider { .. } => return Err(format!("channel {c} synth target is a slider")),
        }
        match pad {
            Target::PadSlider { index } => {
                ensure!(index as usize == c, "channel {c} mirrors slider {index}");
                sliders.insert(index);
            }
            other => return Err(format!("channel {c} mirror is {other:?}")),
        }
    }
    ensure!(notes == 1 && ccs.len() == 7 && sliders.len() == 8, "{notes} note, {} timbre, {} sliders", ccs.len(), sliders.len());
    Ok("9 = dt + 8 controls; 1 note + 7 distinct timbre CCs + 8 pad sliders".into())
}

fn blend_identities() -> Outcome {
    let mut rng = Rng::seeded(2024);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let d = 1 + rng.below(16);
        let draw = |rng: &mut Rng, lo: f64, hi: f64| (0..d).map(|_| rng.uniform_range(lo, hi)).collect::<Vec<_>>();
        let current = LatentParams::new(draw(&mut rng, -5.0, 5.0), draw(&mut rng, -10.0, 4.0)).unwrap();
        let prev = LatentParams::new(draw(&mut rng, -5.0, 5.0), draw(&mut rng, -10.0, 4.0)).unwrap();
        let state = FeedbackState {
            prev_params: Some(prev.clone()),
            prev_output: None,
        };
        let zero = blend(&current, &state, &vec![0.0; d]).unwrap();
        ensure!(zero == current, "case {case}: alpha=0 is not passthrough");
        let one = blend(&current, &state, &vec![1.0; d]).unwrap();
        ensure!(one == prev, "case {case}: alpha=1 is not the previous state");
        let alpha = draw(&mut rng, 0.0, 1.0);
        let mixed = blend(&current, &state, &alpha).unwrap();
        for i in 0..d {
            for (out, a, b) in [
                (mixed.mean[i], current.mean[i], prev.mean[i]),
                (mixed.log_scale[i], current.log_scale[i], prev.log_scale[i]),
            ] {
                let excess = (a.min(b) - out).max(out - a.max(b)).max(0.0);
                worst = worst.max(excess);
                ensure!(excess <= 1e-12, "case {case} dim {i}: {out} outside [{a}, {b}]");
            }
        }
        let absent = blend(&current, &FeedbackState::default(), &alpha).unwrap();
        ensure!(absent == current, "case {case}: no previous state must pass through");
    }
    Ok(format!("1000 cases; alpha=0 and alpha=1 exact; worst convexity excess {worst:e}"))
}

fn smoothing_effect() -> Outcome {
    let model = CodecModel::init(CodecConfig::default(), &mut Rng::seeded(7)).unwrap();
    let run = |alpha: f64| -> f64 {
        let mut fb = LatentFeedbackLoop::new(model.clone(), &FeedbackConfig::uniform(8, alpha)).unwrap();
        let mut noise = Rng::seeded(99);
        let mut rng = Rng::seeded(100);
        let trace: Vec<LatentParams> = (0..200)
            .map(|i| {
                let samples = (0..512).map(|_| noise.uniform_range(-1.0, 1.0)).collect();
                fb.process(&AudioWindow::new(samples, 16_000, i), &mut rng).unwrap().1
            })
            .collect();
        mean_abs_change(&trace)
    };
    ensure!(model.latent_dims() == 8, "D = {}", model.latent_dims());
    let (plain, smoothed) = (run(0.0), run(0.8));
    ensure!(smoothed < plain, "alpha 0.8: {smoothed} not below alpha 0: {plain}");
    Ok(format!("mean |dmean| {plain:.5} at alpha 0 vs {smoothed:.5} at alpha 0.8"))
}

fn gradient_correctness() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..3 {
        let c = check_codec(seed).map_err(|e| e.to_string())?;
        let m = check_mdrnn(seed).map_err(|e| e.to_string())?;
        ensure!(c.max_relative_error < TOLERANCE, "codec seed {seed}: {c:?}");
        ensure!(m.max_relative_error < TOLERANCE, "mdrnn seed {seed}: {m:?}");
        worst = (worst.0.max(c.max_relative_error), worst.1.max(m.max_relative_error));
    }
    Ok(format!("max relative error codec {:.2e}, mdrnn {:.2e} (< 1e-4)", worst.0, worst.1))
}

fn training_progress() -> Outcome {
    let config = CodecConfig::default();
    let mut rng = Rng::seeded(1);
    let corpus = sine_corpus(&config, 16, &mut rng);
    let (_, codec) = train_codec(config, &corpus, 100, 1e-3, &mut Rng::seeded(2)).map_err(|e| e.to_string())?;
    let (c0, c1) = (codec.epoch_losses[0], *codec.epoch_losses.last().unwrap());
    ensure!(c1 < c0, "codec loss {c0} -> {c1}");

    let config = MdrnnConfig::default();
    let corpus = gesture_corpus(8, 32, 0.05, config.dt_min, &mut Rng::seeded(3));
    let (_, mdrnn) = train_mdrnn(config, &corpus, 100, 5e-3, &mut Rng::seeded(4)).map_err(|e| e.to_string())?;
    let (m0, m1) = (mdrnn.epoch_losses[0], *mdrnn.epoch_losses.last().unwrap());
    ensure!(m1 < m0, "mdrnn NLL {m0} -> {m1}");
    Ok(format!("codec loss {c0:.4} -> {c1:.4}; mdrnn NLL {m0:.3} -> {m1:.3}"))
}

fn mdn_math() -> Outcome {
    let oracle = 8.270446798842054;
    let mut rng = Rng::seeded(5);
    for _ in 0..20 {
        let mean: [f64; 9] = std::array::from_fn(|_| rng.uniform_range(-3.0, 3.0));
        let single = MixtureParams {
            weights: vec![1.0],
            means: vec![mean],
            log_scales: vec![[0.0; 9]],
        };
        let nll = single.nll(&mean);
        ensure!((nll - oracle).abs() <= 1e-9, "K=1 NLL {nll} vs {oracle}");
    }

    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for seed in 0..4 {
        let config = MdrnnConfig {
            mixtures: 2 + seed as usize,
            layers: 1 + (seed as usize % 2),
            ..MdrnnConfig::default()
        };
        let model = MdrnnModel::init(config, &mut Rng::seeded(seed)).unwrap();
        let mut state = model.initial_state();
        let mut input = [0.0; INPUT_DIM];
        for _ in 0..200 {
            let (params, next) = model.step(&input, &state).unwrap();
            let sum: f64 = params.weights.iter().sum();
            worst = worst.max((sum - 1.0).abs());
            ensure!(params.weights.iter().all(|w| *w >= 0.0), "negative weight");
            ensure!((sum - 1.0).abs() <= 1e-9, "weights sum to {sum}");
            input = model.sample(&params, 1.0, 1.0, &mut rng).input_vector();
            state = next;
            steps += 1;
        }
    }
    Ok(format!("K=1 NLL = 9/2 ln(2 pi) within 1e-9; weight sums within {worst:.1e} over {steps} steps"))
}

fn determinism_replays() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = bundled_script();
    for name in ["a.jsonl", "b.jsonl"] {
        let out = d.join(name);
        let mut cmd = Process::new(env!("CARGO_BIN_EXE_dualloop"));
        let status = cmd
            .args(["simulate", "--seed", "42", "--script"])
            .arg(&script)
            .arg("--out")
            .arg(&out)
            .output()
            .map(|o| o.status)
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "simulate failed");
    }
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    let b = std::fs::read(d.join("b.jsonl")).unwrap();
    ensure!(a == b, "simulate logs differ");
    ensure!(a.iter().filter(|c| **c == b'\n').count() > 3, "log suspiciously short");

    let input = d.join("in.wav");
    let mut rng = Rng::seeded(8);
    let samples: Vec<f64> = (0..16_000).map(|_| rng.uniform_range(-0.8, 0.8)).collect();
    write_samples(&input, &samples, 16_000).unwrap();
    let automation = d.join("auto.jsonl");
    std::fs::write(
        &automation,
        "{\"t\":0.1,\"type\":\"alpha\",\"value\":0.7}\n{\"t\":0.3,\"type\":\"gain\",\"value\":0.5}\n{\"t\":0.5,\"type\":\"latent\",\"dim\":1,\"value\":1.0}\n",
    )
    .unwrap();
    for tag in ["a", "b"] {
        let out = d.join(format!("{tag}.wav"));
        let status = Process::new(env!("CARGO_BIN_EXE_dualloop"))
            .args(["render", "--seed", "42", "--input"])
            .arg(&input)
            .arg("--automation")
            .arg(&automation)
            .arg("--out")
            .arg(&out)
            .output()
            .map(|o| o.status)
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "render failed");
    }
    for ext in ["wav", "trace.csv"] {
        let a = std::fs::read(d.join(format!("a.{ext}"))).unwrap();
        let b = std::fs::read(d.join(format!("b.{ext}"))).unwrap();
        ensure!(a == b, "render {ext} outputs differ");
    }
    let wav_len = std::fs::read(d.join("a.wav")).unwrap().len();
    Ok(format!("simulate logs ({} bytes) and render WAV ({wav_len} bytes) + trace byte-identical", a.len()))
}

fn midi_wav_round_trips() -> Outcome {
    let mut checked = 0u64;
    for kind in [MidiKind::NoteOn, MidiKind::NoteOff, MidiKind::ControlChange] {
        for channel in 0..16u8 {
            for data1 in 0..128u8 {
                for data2 in 0..128u8 {
                    let m = MidiMessage::new(kind, channel, data1, data2).unwrap();
                    let back = MidiMessage::decode(&m.encode()).map_err(|e| e.to_string())?;
                    ensure!(back == m, "{m:?} decoded as {back:?}");
                    checked += 1;
                }
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.wav");
    let mut rng = Rng::seeded(12);
    let mut samples: Vec<f64> = (0..48_000).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    samples.extend([-1.0, 1.0, 0.0, 1.0 / 32768.0]);
    write_samples(&path, &samples, 16_000).unwrap();
    let (back, rate) = read_samples(&path).map_err(|e| e.to_string())?;
    ensure!(rate == 16_000 && back.len() == samples.len(), "wav shape changed");
    let worst = samples
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure!(worst <= 1.0 / 32768.0, "wav error {worst}");
    Ok(format!("{checked} MIDI messages exact (full space); WAV max error {worst:.2e} <= 1/32768"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("switchover_constant", switchover_constant),
        ("channel_count", channel_count),
        ("latent_blend_identities", blend_identities),
        ("smoothing_effect", smoothing_effect),
        ("gradient_correctness", gradient_correctness),
        ("training_progress", training_progress),
        ("mdn_math", mdn_math),
        ("determinism_replays", determinism_replays),
        ("midi_wav_round_trips", midi_wav_round_trips),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
