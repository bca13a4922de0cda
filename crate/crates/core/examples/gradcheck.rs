//! Compare both models' backpropagated gradients against central finite
//! differences.

use dualloop::gradcheck::{check_codec, check_mdrnn, TOLERANCE};

fn main() -> dualloop::Result<()> {
    for seed in 0..3 {
        let codec = check_codec(seed)?;
        let mdrnn = check_mdrnn(seed)?;
        println!(
            "seed {seed}: codec {:.2e} ({} params), mdrnn {:.2e} ({} params), tolerance {TOLERANCE:e}",
            codec.max_relative_error, codec.checked, mdrnn.max_relative_error, mdrnn.checked
        );
    }
    Ok(())
}
