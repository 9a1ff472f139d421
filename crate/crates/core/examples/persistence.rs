//! Saves a trained network in the binary model format, reloads it, and
//! checks that bytes and predictions round-trip exactly.
//!
//! ```text
//! cargo run --release --example persistence -- [out_dir]
//! ```

use std::path::PathBuf;

use aeface::dataio::{samples_to_matrix, synth_dataset, SynthSpec};
use aeface::nn::{load_model, save_model, LrSchedule, TrainConfig};
use aeface::pretrain::{build_autoencoder, pretrain, AutoencoderConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aeface-persist"));
    std::fs::create_dir_all(&out)?;

    let data = synth_dataset(&SynthSpec::default())?;
    let x = samples_to_matrix(&data.samples, 28 * 28)?;
    let cfg = AutoencoderConfig {
        input_dim: 784,
        hidden1: 64,
        code_dim: 16,
        train: TrainConfig {
            max_epochs: 10,
            batch_size: 16,
            lr_schedule: LrSchedule::Constant { lr: 0.1 },
            ..TrainConfig::autoencoder()
        },
    };
    let net = build_autoencoder(&cfg, &mut ChaCha8Rng::seed_from_u64(3))?;
    let (net, _) = pretrain(net, &x, &cfg.train)?;

    let path = out.join("autoencoder.aefv");
    save_model(&net, &path)?;
    let bytes = std::fs::read(&path)?;
    println!("{}: {} bytes, header {:02x?}", path.display(), bytes.len(), &bytes[..16]);

    let back = load_model(&path)?;
    let copy = out.join("copy.aefv");
    save_model(&back, &copy)?;
    anyhow::ensure!(std::fs::read(&copy)? == bytes, "re-saved model differs");

    let (a, b) = (net.predict(&x)?, back.predict(&x)?);
    let identical = a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits());
    anyhow::ensure!(identical, "predictions differ after reload");
    println!("reloaded model: widths {:?}, predictions bitwise identical", back.widths());

    let mut corrupt = bytes.clone();
    corrupt[0] = b'X';
    match aeface::nn::persist::from_bytes(&corrupt) {
        Err(e) => println!("corrupted magic rejected: {e}"),
        Ok(_) => anyhow::bail!("corrupted file was accepted"),
    }
    Ok(())
}
