//! Fine-tunes the same pretrained autoencoder as a classifier under the
//! three initialization modes and compares convergence and verification
//! accuracy on the resulting embeddings.
//!
//! ```text
//! cargo run --release --example transfer_init_modes
//! ```

use aeface::cli::{evaluate_embeddings, RunConfig};
use aeface::dataio::{labels_of, make_pairs, samples_to_matrix, synth_dataset};
use aeface::pretrain::{build_autoencoder, pretrain};
use aeface::transfer::{build_classifier, classification_accuracy, extract_embeddings, finetune, InitMode};
use aeface::verify::EmbeddingSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.json");

fn main() -> anyhow::Result<()> {
    let cfg = RunConfig::load(DESK.as_ref())?;
    let data = synth_dataset(&cfg.synth)?;
    let x = samples_to_matrix(&data.samples, cfg.autoencoder.input_dim)?;
    let labels = labels_of(&data.samples)?;
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let items: Vec<(&str, usize)> = ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    let pairs = make_pairs(&items, cfg.protocol.n_same, cfg.protocol.n_diff, cfg.seed)?;

    let ae = build_autoencoder(&cfg.autoencoder, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let (ae, ae_history) = pretrain(ae, &x, &cfg.autoencoder.train)?;
    println!("pretrained autoencoder: final mse {:.5}", ae_history.last().unwrap());

    let mut runs = Vec::new();
    for mode in [InitMode::EncoderOnly, InitMode::FullAutoencoder, InitMode::RandomBaseline] {
        let mut ccfg = cfg.classifier.clone();
        ccfg.init_mode = mode;
        let net = build_classifier(&ae, &ccfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
        let (net, history) = finetune(net, &x, &labels, &ccfg.train)?;
        let emb = EmbeddingSet::new(ids.clone(), extract_embeddings(&net, &x)?)?;
        let report = evaluate_embeddings(&emb, &pairs, cfg.protocol.k, cfg.seed)?;
        runs.push((mode, net.layers().len(), history, classification_accuracy(&net, &x, &labels)?, report));
    }

    // Common target: 10% above the worst final loss, so every run reaches it.
    let tau = 1.1 * runs.iter().map(|r| *r.2.last().unwrap()).fold(0.0, f64::max);
    println!("target loss {tau:.4}");
    println!("{:<18} layers  epoch5 loss  epochs to target  train acc  verification", "mode");
    for (mode, depth, history, acc, report) in &runs {
        let reach = history.iter().position(|&l| l <= tau).map_or(history.len(), |e| e + 1);
        println!(
            "{:<18} {depth:>6}  {:>11.4}  {reach:>16}  {acc:>9.3}  {:.3} ± {:.3}",
            format!("{mode:?}"),
            history[4.min(history.len() - 1)],
            report.mean_accuracy,
            report.std_accuracy
        );
    }
    Ok(())
}
