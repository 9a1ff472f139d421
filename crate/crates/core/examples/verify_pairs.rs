//! Pair verification on raw pixels: cosine scores, per-fold threshold
//! selection and k-fold accuracy, plus a label-shuffled chance control.
//!
//! ```text
//! cargo run --release --example verify_pairs -- [out_dir]
//! ```

use std::path::PathBuf;

use aeface::dataio::pairs::save_pairs_csv;
use aeface::dataio::{assign_folds, labels_of, make_pairs, samples_to_matrix, synth_dataset, SynthSpec};
use aeface::verify::{choose_threshold, kfold_accuracy, score_pairs, EmbeddingSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aeface-verify"));
    std::fs::create_dir_all(&out)?;

    // Heavy noise so that raw pixels are not trivially separable.
    let spec = SynthSpec {
        num_classes: 10,
        per_class: 30,
        noise_sigma: 0.6,
        seed: 7,
    };
    let data = synth_dataset(&spec)?;
    let ids: Vec<String> = data.samples.iter().map(|s| s.id.clone()).collect();
    let labels = labels_of(&data.samples)?;
    let emb = EmbeddingSet::new(ids.clone(), samples_to_matrix(&data.samples, 28 * 28)?)?;

    let items: Vec<(&str, usize)> = ids.iter().map(String::as_str).zip(labels.iter().copied()).collect();
    let pairs = assign_folds(&make_pairs(&items, 1000, 1000, 1)?, 10, 1)?;
    save_pairs_csv(&pairs, out.join("pairs.csv"))?;

    let scores = score_pairs(&emb, &pairs)?;
    let same = pairs.same_flags();
    let (t, acc) = choose_threshold(&scores, &same)?;
    println!("single threshold over all {} pairs: t = {t:.4}, accuracy {acc:.3}", pairs.len());

    let fold_of = pairs.fold_of.as_deref().expect("folds assigned");
    let report = kfold_accuracy(&scores, &same, fold_of, 10)?;
    for f in &report.folds {
        println!("fold {:>2}: threshold {:.4}, test accuracy {:.3}", f.fold, f.threshold, f.accuracy);
    }
    println!("10-fold accuracy {:.3} ± {:.3}", report.mean_accuracy, report.std_accuracy);
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)?)?;

    let mut shuffled = same.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let control = kfold_accuracy(&scores, &shuffled, fold_of, 10)?;
    println!("with shuffled labels: {:.3} (chance is 0.5)", control.mean_accuracy);
    Ok(())
}
