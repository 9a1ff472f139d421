//! Pretrains the desk-scale autoencoder (784 → 128 → 32 → 128 → 784) on
//! synthetic identities and writes a before/after reconstruction strip.
//!
//! ```text
//! cargo run --release --example pretrain_autoencoder -- [out_dir]
//! ```

use std::path::PathBuf;

use aeface::cli::RunConfig;
use aeface::dataio::{input_side, resize_bilinear, samples_to_matrix, save_pgm, synth_dataset, ImageSample, IMAGE_SIDE};
use aeface::nn::save_model;
use aeface::pretrain::{build_autoencoder, encode, pretrain, reconstruct, reconstruction_mse};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.json");

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aeface-pretrain"));
    std::fs::create_dir_all(&out)?;

    let cfg = RunConfig::load(DESK.as_ref())?;
    let data = synth_dataset(&cfg.synth)?;
    let x = samples_to_matrix(&data.samples, cfg.autoencoder.input_dim)?;

    let net = build_autoencoder(&cfg.autoencoder, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let untrained = reconstruction_mse(&net, &x)?;
    let (net, history) = pretrain(net, &x, &cfg.autoencoder.train)?;
    for (epoch, loss) in history.iter().enumerate().filter(|(e, _)| e % 10 == 0) {
        println!("epoch {:>3}  mse {loss:.5}", epoch + 1);
    }
    println!(
        "reconstruction mse {untrained:.5} untrained, {:.5} after {} epochs",
        reconstruction_mse(&net, &x)?,
        history.len()
    );
    let codes = encode(&net, &x)?;
    let active = codes.data().iter().filter(|&&c| c > 0.0).count();
    println!("bottleneck {}-d, {:.0}% of code units active", codes.cols(), 100.0 * active as f64 / codes.data().len() as f64);

    // One sample per class: original above, reconstruction below.
    let side = input_side(cfg.autoencoder.input_dim)?;
    let rec = reconstruct(&net, &x)?;
    for class in 0..cfg.synth.num_classes {
        let i = class * cfg.synth.per_class;
        let mut strip = Vec::with_capacity(2 * side * side);
        strip.extend_from_slice(x.row(i));
        strip.extend(rec.row(i).iter().map(|v| v.clamp(0.0, 1.0)));
        let tall = resize_bilinear(&strip, 2 * side, side, 2 * IMAGE_SIDE, IMAGE_SIDE)?;
        let top = ImageSample::new(format!("class{class}"), None, tall[..IMAGE_SIDE * IMAGE_SIDE].to_vec())?;
        let bottom = ImageSample::new(format!("class{class}"), None, tall[IMAGE_SIDE * IMAGE_SIDE..].to_vec())?;
        save_pgm(&top, out.join(format!("class{class}_input.pgm")))?;
        save_pgm(&bottom, out.join(format!("class{class}_reconstruction.pgm")))?;
    }
    save_model(&net, out.join("autoencoder.aefv"))?;
    println!("wrote model and reconstructions to {}", out.display());
    Ok(())
}
