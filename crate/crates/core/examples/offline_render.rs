//! Render a WAV through the latent-feedback loop with automation: feedback
//! ramps in, audio feedback opens, then one latent dimension is pinned.

use dualloop::codec::{CodecConfig, CodecModel};
use dualloop::feedback::{FeedbackConfig, LatentFeedbackLoop, ManipEntry};
use dualloop::render::{frame, overlap_truncate, render};
use dualloop::rng::Rng;
use dualloop::router::protocol::Command;
use dualloop::router::wav::{read_samples, write_samples};

fn main() -> dualloop::Result<()> {
    let config = CodecConfig {
        window_size: 256,
        hop: 256,
        hidden_units: 16,
        ..CodecConfig::default()
    };
    let rate = config.sample_rate;
    let dir = std::env::temp_dir().join("dualloop-render");
    std::fs::create_dir_all(&dir).map_err(|e| dualloop::Error::io(&dir, e))?;

    let input: Vec<f64> = (0..rate as usize)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / f64::from(rate)).sin())
        .collect();
    let in_path = dir.join("in.wav");
    write_samples(&in_path, &input, rate)?;

    let automation = vec![
        Command::Alpha { t: 0.25, dim: None, value: 0.9 },
        Command::Gain { t: 0.5, value: 0.6 },
        Command::Latent { t: 0.75, dim: 0, entry: Some(ManipEntry::Offset(-1.0)) },
    ];
    let mut rng = Rng::seeded(41);
    let model = CodecModel::init(config, &mut rng)?;
    let (samples, _) = read_samples(&in_path)?;
    let windows = frame(&samples, 256, 256, rate);
    let mut fb = LatentFeedbackLoop::new(model, &FeedbackConfig::default())?;
    let out = render(&mut fb, &windows, &automation, &mut rng)?;
    let out_path = dir.join("out.wav");
    write_samples(&out_path, &overlap_truncate(&out.windows, 256, samples.len()), rate)?;

    for i in (0..out.trace.len()).step_by(8) {
        println!("window {i:2}: mean[0] {:+.3}", out.trace[i].mean[0]);
    }
    println!("wrote {}", out_path.display());
    Ok(())
}
