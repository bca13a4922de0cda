//! Seeded synthetic training data and the gesture corpus file format.
//!
//! Gesture corpus files are JSONL, one sequence per line:
//! `[[dt, c1, ..., c8], [dt, c1, ..., c8], ...]`.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::codec::CodecConfig;
use crate::domain::{AudioWindow, CONTROL_CHANNELS};
use crate::error::{Error, Result};
use crate::mdrnn::{GestureSample, GestureVector, INPUT_DIM};
use crate::rng::Rng;

/// Windows each holding a mixture of 2 to 4 sinusoids with random
/// frequency, phase and amplitude; peak amplitude stays below 0.9.
pub fn sine_corpus(config: &CodecConfig, count: usize, rng: &mut Rng) -> Vec<AudioWindow> {
    let sr = f64::from(config.sample_rate);
    let nyquist_guard = sr * 0.45;
    (0..count)
        .map(|index| {
            let partials = 2 + rng.below(3);
            let mut amps: Vec<f64> = (0..partials).map(|_| rng.uniform_range(0.2, 1.0)).collect();
            let norm: f64 = amps.iter().sum();
            amps.iter_mut().for_each(|a| *a *= 0.9 / norm);
            let components: Vec<(f64, f64, f64)> = amps
                .into_iter()
                .map(|a| {
                    let freq = rng.uniform_range(60.0, 2_000.0_f64.min(nyquist_guard));
                    (a, freq, rng.uniform_range(0.0, TAU))
                })
                .collect();
            let samples = (0..config.window_size)
                .map(|n| {
                    let t = n as f64 / sr;
                    components
                        .iter()
                        .map(|(a, f, p)| a * (TAU * f * t + p).sin())
                        .sum()
                })
                .collect();
            AudioWindow::new(samples, config.sample_rate, index as u64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Sine { freq: f64, phase: f64, depth: f64, center: f64 },
    Ramp { start: f64, rate: f64 },
    Steps { period: f64, levels: [f64; 4] },
}

impl Shape {
    fn random(rng: &mut Rng) -> Self {
        match rng.below(3) {
            0 => Shape::Sine {
                freq: rng.uniform_range(0.1, 1.5),
                phase: rng.uniform_range(0.0, TAU),
                depth: rng.uniform_range(0.1, 0.5),
                center: rng.uniform_range(0.3, 0.7),
            },
            1 => Shape::Ramp {
                start: rng.uniform(),
                rate: rng.uniform_range(-0.6, 0.6),
            },
            _ => Shape::Steps {
                period: rng.uniform_range(0.2, 1.0),
                levels: [rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()],
            },
        }
    }

    fn value(&self, t: f64) -> f64 {
        let v = match *self {
            Shape::Sine {
                freq,
                phase,
                depth,
                center,
            } => center + depth * (TAU * freq * t + phase).sin(),
            // Triangle-folded so ramps bounce inside [0, 1].
            Shape::Ramp { start, rate } => {
                let x = (start + rate * t).rem_euclid(2.0);
                if x > 1.0 {
                    2.0 - x
                } else {
                    x
                }
            }
            Shape::Steps { period, levels } => levels[((t / period) as usize) % levels.len()],
        };
        v.clamp(0.0, 1.0)
    }
}

/// Gesture sequences: each of the eight channels follows a slow sinusoid,
/// a bouncing ramp or a step pattern; update intervals are exponential
/// with `mean_dt`, floored at `dt_min`.
pub fn gesture_corpus(
    sequences: usize,
    length: usize,
    mean_dt: f64,
    dt_min: f64,
    rng: &mut Rng,
) -> Vec<Vec<GestureSample>> {
    (0..sequences)
        .map(|_| {
            let shapes: Vec<Shape> = (0..CONTROL_CHANNELS).map(|_| Shape::random(rng)).collect();
            let mut t = 0.0;
            (0..length)
                .map(|_| {
                    let dt = rng.exponential(mean_dt).max(dt_min);
                    t += dt;
                    let mut v = [0.0; INPUT_DIM];
                    v[0] = dt;
                    for (c, shape) in shapes.iter().enumerate() {
                        v[c + 1] = shape.value(t);
                    }
                    GestureSample::from_vector(v)
                })
                .collect()
        })
        .collect()
}

pub fn read_gesture_corpus(path: impl AsRef<Path>) -> Result<Vec<Vec<GestureSample>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rows: Vec<GestureVector> = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("gesture corpus line {}", n + 1), e))?;
        out.push(rows.into_iter().map(GestureSample::from_vector).collect());
    }
    Ok(out)
}

pub fn write_gesture_corpus(path: impl AsRef<Path>, corpus: &[Vec<GestureSample>]) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for seq in corpus {
        let rows: Vec<GestureVector> = seq.iter().map(|s| s.values).collect();
        let line = serde_json::to_string(&rows).map_err(|e| Error::parse("gesture corpus", e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}
