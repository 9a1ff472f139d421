//! 2-D t-SNE maps of raw pixels and of fine-tuned embeddings for a few
//! synthetic identities, written as CSV and SVG scatter plots.
//!
//! ```text
//! cargo run --release --example tsne_scatter -- [out_dir]
//! ```

use std::path::PathBuf;

use aeface::cli::RunConfig;
use aeface::dataio::{labels_of, samples_to_matrix, synth_dataset};
use aeface::pretrain::{build_autoencoder, pretrain};
use aeface::transfer::{build_classifier, extract_embeddings, finetune};
use aeface::viz::{export_scatter, silhouette_score, tsne, TsneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.json");

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aeface-tsne"));
    std::fs::create_dir_all(&out)?;

    let mut cfg = RunConfig::load(DESK.as_ref())?;
    cfg.synth.num_classes = 4;
    cfg.synth.per_class = 40;
    cfg.synth.noise_sigma = 0.3;
    cfg.classifier.num_classes = 4;
    let data = synth_dataset(&cfg.synth)?;
    let x = samples_to_matrix(&data.samples, cfg.autoencoder.input_dim)?;
    let labels = labels_of(&data.samples)?;

    let ae = build_autoencoder(&cfg.autoencoder, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let (ae, _) = pretrain(ae, &x, &cfg.autoencoder.train)?;
    let net = build_classifier(&ae, &cfg.classifier, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let (net, _) = finetune(net, &x, &labels, &cfg.classifier.train)?;
    let embeddings = extract_embeddings(&net, &x)?;

    let tcfg = TsneConfig {
        perplexity: 20.0,
        ..TsneConfig::default()
    };
    for (name, points) in [("raw", &x), ("embeddings", &embeddings)] {
        let result = tsne(points, &tcfg)?;
        let first = result.kl_history.first().map_or(f64::NAN, |s| s.kl);
        let last = result.kl_history.last().map_or(f64::NAN, |s| s.kl);
        println!(
            "{name:<10} dim {:>4}  KL {first:.3} -> {last:.3}  silhouette input {:.3}, map {:.3}",
            points.cols(),
            silhouette_score(points, &labels)?,
            silhouette_score(&result.coords, &labels)?
        );
        export_scatter(
            &result.coords,
            &labels,
            out.join(format!("{name}.csv")),
            out.join(format!("{name}.svg")),
        )?;
    }
    println!("wrote scatter plots to {}", out.display());
    Ok(())
}
