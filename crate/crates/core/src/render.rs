//! Offline rendering through the latent-feedback loop under simulated
//! time, with parameter automation applied at window boundaries.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::domain::{AudioWindow, LatentParams};
use crate::error::{Error, Result};
use crate::feedback::LatentFeedbackLoop;
use crate::rng::Rng;
use crate::router::protocol::{parse_message, Command};

/// Cut `samples` into windows of `size` starting every `hop` samples. The
/// last window is zero-padded.
pub fn frame(samples: &[f64], size: usize, hop: usize, sample_rate: u32) -> Vec<AudioWindow> {
    let count = samples.len().div_ceil(hop);
    (0..count)
        .map(|i| {
            let start = i * hop;
            let mut w = vec![0.0; size];
            let end = (start + size).min(samples.len());
            w[..end - start].copy_from_slice(&samples[start..end]);
            AudioWindow::new(w, sample_rate, i as u64)
        })
        .collect()
}

/// Join output windows by keeping the first `hop` samples of each.
pub fn overlap_truncate(windows: &[AudioWindow], hop: usize, len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = windows
        .iter()
        .flat_map(|w| w.samples[..hop.min(w.len())].iter().copied())
        .collect();
    out.truncate(len);
    out
}

/// Apply a gain, alpha or latent command to the loop.
pub fn apply_command(fb: &mut LatentFeedbackLoop, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Gain { value, .. } => fb.set_gain(*value),
        Command::Alpha { dim, value, .. } => fb.set_alpha(*dim, *value),
        Command::Latent { dim, entry, .. } => {
            let dims = fb.model().latent_dims();
            if *dim >= dims {
                return Err(Error::Range {
                    what: "latent dimension",
                    index: *dim,
                    limit: dims,
                });
            }
            match entry {
                Some(e) => {
                    fb.manipulation_mut().set(*dim, *e);
                }
                None => fb.manipulation_mut().clear(*dim),
            }
            Ok(())
        }
        other => Err(Error::config(format!(
            "{:?} messages do not apply to the audio path",
            other.to_wire().kind
        ))),
    }
}

/// Read an automation file: JSONL of `gain`, `alpha` and `latent`
/// protocol messages with non-decreasing `t`.
pub fn read_automation(path: impl AsRef<Path>) -> Result<Vec<Command>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Command> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let what = || format!("automation line {}", n + 1);
        let cmd = parse_message(&line).map_err(|e| Error::parse(what(), e))?;
        if !matches!(cmd, Command::Gain { .. } | Command::Alpha { .. } | Command::Latent { .. }) {
            return Err(Error::parse(what(), "only gain, alpha and latent messages are allowed"));
        }
        if let Some(prev) = out.last() {
            if cmd.time() < prev.time() {
                return Err(Error::Ordering {
                    time: cmd.time(),
                    previous: prev.time(),
                });
            }
        }
        out.push(cmd);
    }
    Ok(out)
}

pub struct Render {
    pub windows: Vec<AudioWindow>,
    pub trace: Vec<LatentParams>,
}

/// Run every window through `fb`. Commands whose time is at or before a
/// window's start take effect from that window on.
pub fn render(
    fb: &mut LatentFeedbackLoop,
    input: &[AudioWindow],
    automation: &[Command],
    rng: &mut Rng,
) -> Result<Render> {
    let hop = fb.model().config.hop;
    let rate = f64::from(fb.model().config.sample_rate);
    let mut windows = Vec::with_capacity(input.len());
    let mut trace = Vec::with_capacity(input.len());
    let mut next = 0;
    for (i, dry) in input.iter().enumerate() {
        let start = (i * hop) as f64 / rate;
        while next < automation.len() && automation[next].time() <= start {
            apply_command(fb, &automation[next])?;
            next += 1;
        }
        let (mut out, params) = fb.process(dry, rng)?;
        out.index = i as u64;
        windows.push(out);
        trace.push(params);
    }
    Ok(Render { windows, trace })
}
