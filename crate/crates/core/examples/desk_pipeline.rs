//! The whole batch pipeline at desk scale, driven through the same entry
//! point as the `aeface` binary: synthesize, pretrain, fine-tune, embed,
//! evaluate and plot. Each stage gets its own output directory.
//!
//! ```text
//! cargo run --release --example desk_pipeline -- [out_dir]
//! ```

use std::path::{Path, PathBuf};

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.json");

fn stage(name: &str, out: &Path, extra: &[&Path]) -> anyhow::Result<PathBuf> {
    let dir = out.join(name);
    std::fs::create_dir_all(&dir)?;
    let mut args = vec!["aeface".into(), name.into(), "--config".into(), DESK.into(), "--out".into()];
    args.push(dir.clone().into_os_string());
    args.extend(extra.iter().map(|p| p.as_os_str().to_owned()));
    println!("== {name}");
    let code = aeface::cli::run(args);
    anyhow::ensure!(code == 0, "{name} exited with {code}");
    Ok(dir)
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("aeface-desk"));
    std::fs::create_dir_all(&out)?;

    let data = stage("synth", &out, &[])?;
    let manifest = data.join("manifest.csv");
    let flag = |f: &'static str| Path::new(f);

    let ae = stage("pretrain", &out, &[flag("--manifest"), &manifest])?;
    let clf = stage(
        "finetune",
        &out,
        &[flag("--manifest"), &manifest, flag("--model"), &ae.join("model.aefv")],
    )?;
    let emb = stage(
        "embed",
        &out,
        &[flag("--manifest"), &manifest, flag("--model"), &clf.join("classifier.aefv")],
    )?;
    let embeddings = emb.join("embeddings.csv");
    stage(
        "evaluate",
        &out,
        &[flag("--embeddings"), &embeddings, flag("--pairs"), &data.join("pairs.csv")],
    )?;
    stage(
        "tsne",
        &out,
        &[flag("--embeddings"), &embeddings, flag("--manifest"), &manifest],
    )?;
    println!("artifacts under {}", out.display());
    Ok(())
}
