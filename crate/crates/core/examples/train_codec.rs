//! Train a small codec on synthetic sine mixtures, save it and reload it.

use dualloop::codec::{train_codec, CodecConfig, CodecModel};
use dualloop::corpus::sine_corpus;
use dualloop::rng::Rng;

fn main() -> dualloop::Result<()> {
    let config = CodecConfig {
        window_size: 64,
        hop: 64,
        latent_dims: 4,
        hidden_units: 16,
        ..CodecConfig::default()
    };
    let mut rng = Rng::seeded(11);
    let corpus = sine_corpus(&config, 32, &mut rng);
    let (model, report) = train_codec(config, &corpus, 60, 3e-3, &mut rng)?;
    for (epoch, loss) in report.epoch_losses.iter().enumerate().step_by(10) {
        println!("epoch {:3}: loss {loss:.5}", epoch + 1);
    }
    println!("final loss {:.5}", report.epoch_losses.last().unwrap());

    let dir = std::env::temp_dir().join("dualloop-train-codec");
    std::fs::create_dir_all(&dir).map_err(|e| dualloop::Error::io(&dir, e))?;
    let path = dir.join("codec.json");
    model.save(&path)?;
    let reloaded = CodecModel::load(&path)?;
    let window = &corpus[0];
    println!(
        "saved to {}; reconstruction MSE {:.5} before and {:.5} after reload",
        path.display(),
        model.reconstruction_mse(window)?,
        reloaded.reconstruction_mse(window)?
    );
    Ok(())
}
