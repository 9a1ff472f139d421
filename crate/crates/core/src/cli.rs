//! Batch command-line front end.
//!
//! Each subcommand runs one pipeline stage and communicates with the others
//! through files. Exit codes: 0 ok, 2 usage or configuration, 3 I/O,
//! 4 data, 5 model, 6 protocol, 7 verification failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::{
    self, assign_folds, load_manifest_samples, make_pairs, save_pgm, synth_dataset, write_manifest, ManifestEntry,
    PairList, SynthSpec, IMAGE_PIXELS,
};
use crate::error::Error;
use crate::nn::gradcheck::{run_suite, SuiteResult, SUITE_TOLERANCE};
use crate::nn::{load_model, save_model, Activation, DerivativeFn, Network};
use crate::pretrain::{autoencoder_dims, build_autoencoder, pretrain, AutoencoderConfig};
use crate::tensor::Matrix;
use crate::transfer::{build_classifier, extract_embeddings, finetune, ClassifierConfig, InitMode};
use crate::verify::{kfold_accuracy, score_pairs, EmbeddingSet, EvalReport};
use crate::viz::{export_scatter, silhouette_score, tsne, TsneConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub k: usize,
    pub n_same: usize,
    pub n_diff: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_same: 3000,
            n_diff: 3000,
        }
    }
}

/// Default file locations; relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub autoencoder: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialization, pair sampling and fold assignment.
    pub seed: u64,
    pub synth: SynthSpec,
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub protocol: ProtocolConfig,
    pub tsne: TsneConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            synth: SynthSpec::default(),
            autoencoder: AutoencoderConfig::default(),
            classifier: ClassifierConfig::default(),
            protocol: ProtocolConfig::default(),
            tsne: TsneConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Overlays `patch` on `base`, rejecting keys `base` does not have.
/// Objects carrying a `kind` tag replace the base wholesale.
fn merge(base: &mut Value, patch: Value, at: &str) -> Result<(), Error> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) if !p.contains_key("kind") => {
            for (key, value) in p {
                let path = if at.is_empty() { key.clone() } else { format!("{at}.{key}") };
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value, &path)?,
                    None => return Err(Error::Config(format!("unknown key `{path}`"))),
                }
            }
            Ok(())
        }
        (slot, value) => {
            *slot = value;
            Ok(())
        }
    }
}

impl RunConfig {
    /// Parses a possibly partial config; missing keys take their defaults.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let patch: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        if !patch.is_object() {
            return Err(Error::Config("config must be a JSON object".to_owned()));
        }
        let mut merged = serde_json::to_value(RunConfig::default())?;
        merge(&mut merged, patch, "")?;
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let p = &mut cfg.paths;
        for slot in [&mut p.manifest, &mut p.pairs, &mut p.autoencoder, &mut p.classifier, &mut p.embeddings] {
            if let Some(rel) = slot.as_mut().filter(|r| r.is_relative()) {
                *rel = base.join(&*rel);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.synth.validate()?;
        self.autoencoder.validate()?;
        self.classifier.validate()?;
        self.tsne.validate()?;
        dataio::input_side(self.autoencoder.input_dim)?;
        if self.protocol.k < 2 {
            return Err(Error::Config(format!("protocol.k must be >= 2, got {}", self.protocol.k)));
        }
        Ok(())
    }

    /// `--seed` replaces the run seed and every per-stage seed.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.autoencoder.train.seed = seed;
        self.classifier.train.seed = seed;
        self.tsne.seed = seed;
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} gradient checks exceeded {SUITE_TOLERANCE:e}")]
    Verification { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification { .. } => 7,
            CliError::Lib(e) => match e {
                Error::Config(_) | Error::Json(_) => 2,
                Error::File { .. } | Error::Io(_) => 3,
                Error::Data(_)
                | Error::NonFinite(_)
                | Error::Numeric { .. }
                | Error::ZeroNorm(_)
                | Error::Format { .. }
                | Error::Lookup(_)
                | Error::Csv(_) => 4,
                Error::Shape { .. } | Error::Model(_) => 5,
                Error::Protocol(_) => 6,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "aeface", version, about = "Autoencoder-initialized face verification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// JSON run configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing directory that receives all outputs.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TsneSource {
    Raw,
    Embeddings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitModeArg {
    EncoderOnly,
    FullAutoencoder,
    RandomBaseline,
}

impl From<InitModeArg> for InitMode {
    fn from(m: InitModeArg) -> Self {
        match m {
            InitModeArg::EncoderOnly => InitMode::EncoderOnly,
            InitModeArg::FullAutoencoder => InitMode::FullAutoencoder,
            InitModeArg::RandomBaseline => InitMode::RandomBaseline,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset: PGM images, manifest.csv, pairs.csv.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the autoencoder on a manifest's images.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Build a classifier from an autoencoder and fine-tune it.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Pretrained autoencoder (.aefv).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum)]
        init_mode: Option<InitModeArg>,
    },
    /// Write the classifier's embeddings for every manifest image.
    Embed {
        #[command(flatten)]
        common: Common,
        /// Fine-tuned classifier (.aefv).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Cosine-score pairs and run k-fold threshold cross-validation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Project raw pixels or embeddings to 2-D and plot them.
    Tsne {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "embeddings")]
        source: TsneSource,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Supplies raw pixels for `--source raw` and labels for both sources.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on five networks.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Pretrain { common, .. }
            | Command::Finetune { common, .. }
            | Command::Embed { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Tsne { common, .. }
            | Command::Gradcheck { common } => common,
        }
    }
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Resolves the config, echoes it to `<out>/config.json`, and dispatches.
pub fn execute(command: &Command, stdout: &mut dyn Write) -> CliResult<()> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    let out = &common.out;
    if !out.is_dir() {
        return Err(Error::file(
            out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        )
        .into());
    }
    write_json(&out.join("config.json"), &cfg)?;

    match command {
        Command::Synth { .. } => cmd_synth(&cfg, out, stdout),
        Command::Pretrain { manifest, .. } => {
            let manifest = pick(manifest, &cfg.paths.manifest, "--manifest")?;
            cmd_pretrain(&cfg, &manifest, out)
        }
        Command::Finetune {
            model,
            manifest,
            init_mode,
            ..
        } => {
            let model = pick(model, &cfg.paths.autoencoder, "--model")?;
            let manifest = pick(manifest, &cfg.paths.manifest, "--manifest")?;
            if let Some(mode) = init_mode {
                cfg.classifier.init_mode = (*mode).into();
            }
            cmd_finetune(&cfg, &model, &manifest, out)
        }
        Command::Embed { model, manifest, .. } => {
            let model = pick(model, &cfg.paths.classifier, "--model")?;
            let manifest = pick(manifest, &cfg.paths.manifest, "--manifest")?;
            cmd_embed(&model, &manifest, out)
        }
        Command::Evaluate {
            embeddings, pairs, k, ..
        } => {
            let embeddings = pick(embeddings, &cfg.paths.embeddings, "--embeddings")?;
            let pairs = pick(pairs, &cfg.paths.pairs, "--pairs")?;
            if let Some(k) = k {
                cfg.protocol.k = *k;
            }
            let report = cmd_evaluate(&cfg, &embeddings, &pairs, out)?;
            writeln!(
                stdout,
                "mean accuracy {:.4} ± {:.4} over {} folds",
                report.mean_accuracy, report.std_accuracy, report.meta.k
            )
            .map_err(Error::from)?;
            Ok(())
        }
        Command::Tsne {
            source,
            embeddings,
            manifest,
            ..
        } => {
            let manifest = manifest.clone().or_else(|| cfg.paths.manifest.clone());
            let embeddings = embeddings.clone().or_else(|| cfg.paths.embeddings.clone());
            cmd_tsne(&cfg, *source, embeddings.as_deref(), manifest.as_deref(), out, stdout)
        }
        Command::Gradcheck { .. } => cmd_gradcheck(cfg.seed, stdout),
    }
}

fn pick(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Usage(format!("{name} is required (or set it under `paths` in the config)")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_loss_history(path: &Path, history: &[f64]) -> Result<(), Error> {
    let mut text = String::from("epoch,loss\n");
    for (i, loss) in history.iter().enumerate() {
        text.push_str(&format!("{},{loss:.17e}\n", i + 1));
    }
    write_file(path, &text)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path, stdout: &mut dyn Write) -> CliResult<()> {
    let data = synth_dataset(&cfg.synth)?;
    let images = out.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::file(&images, e))?;
    let mut entries = Vec::with_capacity(data.samples.len());
    for s in &data.samples {
        let rel = PathBuf::from("images").join(format!("{}.pgm", s.id));
        save_pgm(s, out.join(&rel))?;
        entries.push(ManifestEntry {
            id: s.id.clone(),
            path: rel,
            label: s.label,
        });
    }
    write_manifest(&entries, out.join("manifest.csv"))?;
    writeln!(stdout, "wrote {} images and manifest.csv", entries.len()).map_err(Error::from)?;

    let items: Vec<(&str, usize)> = data
        .samples
        .iter()
        .map(|s| (s.id.as_str(), s.label.unwrap_or(0)))
        .collect();
    let p = &cfg.protocol;
    match make_pairs(&items, p.n_same, p.n_diff, cfg.seed) {
        Ok(pairs) => {
            dataio::pairs::save_pairs_csv(&pairs, out.join("pairs.csv"))?;
            writeln!(stdout, "wrote {} pairs to pairs.csv", pairs.len()).map_err(Error::from)?;
        }
        Err(Error::Data(why)) => log::warn!("skipping pairs.csv: {why}"),
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn load_training_matrix(manifest: &Path, input_dim: usize) -> Result<(Matrix, Vec<dataio::ImageSample>), Error> {
    let samples = load_manifest_samples(manifest)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: manifest lists no images", manifest.display())));
    }
    let x = dataio::samples_to_matrix(&samples, input_dim)?;
    Ok((x, samples))
}

pub fn cmd_pretrain(cfg: &RunConfig, manifest: &Path, out: &Path) -> CliResult<()> {
    let (x, _) = load_training_matrix(manifest, cfg.autoencoder.input_dim)?;
    log::info!("pretraining on {} images of dimension {}", x.rows(), x.cols());
    let net = build_autoencoder(&cfg.autoencoder, &mut cfg.rng())?;
    let (net, history) = pretrain(net, &x, &cfg.autoencoder.train)?;
    log::info!(
        "pretraining stopped after {} epochs, final loss {:.6e}",
        history.len(),
        history.last().copied().unwrap_or(f64::NAN)
    );
    save_model(&net, out.join("model.aefv"))?;
    write_loss_history(&out.join("loss_history.csv"), &history)?;
    Ok(())
}

fn as_model_error(e: Error) -> Error {
    match e {
        Error::Shape { .. } | Error::Config(_) => Error::Model(e.to_string()),
        other => other,
    }
}

pub fn cmd_finetune(cfg: &RunConfig, model: &Path, manifest: &Path, out: &Path) -> CliResult<()> {
    let ae = load_model(model)?;
    autoencoder_dims(&ae).map_err(as_model_error)?;
    if ae.input_dim() != cfg.autoencoder.input_dim {
        return Err(Error::Model(format!(
            "{} has input dimension {}, config expects {}",
            model.display(),
            ae.input_dim(),
            cfg.autoencoder.input_dim
        ))
        .into());
    }
    let (x, samples) = load_training_matrix(manifest, ae.input_dim())?;
    let labels = dataio::labels_of(&samples)?;
    let net = build_classifier(&ae, &cfg.classifier, &mut cfg.rng()).map_err(as_model_error)?;
    log::info!(
        "fine-tuning {:?} classifier with widths {:?}",
        cfg.classifier.init_mode,
        net.widths()
    );
    let (net, history) = finetune(net, &x, &labels, &cfg.classifier.train)?;
    save_model(&net, out.join("classifier.aefv"))?;
    write_loss_history(&out.join("loss_history.csv"), &history)?;
    Ok(())
}

fn classifier_embeddings(net: &Network, samples: &[dataio::ImageSample]) -> Result<EmbeddingSet, Error> {
    let x = dataio::samples_to_matrix(samples, net.input_dim())?;
    let e = extract_embeddings(net, &x).map_err(as_model_error)?;
    EmbeddingSet::new(samples.iter().map(|s| s.id.clone()).collect(), e)
}

pub fn cmd_embed(model: &Path, manifest: &Path, out: &Path) -> CliResult<()> {
    let net = load_model(model)?;
    let samples = load_manifest_samples(manifest)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: manifest lists no images", manifest.display())).into());
    }
    classifier_embeddings(&net, &samples)?.save(out.join("embeddings.csv"))?;
    Ok(())
}

pub fn evaluate_embeddings(emb: &EmbeddingSet, pairs: &PairList, k: usize, seed: u64) -> Result<EvalReport, Error> {
    let folded = match pairs.fold_of {
        Some(_) if pairs.fold_count() == Some(k) => pairs.clone(),
        _ => assign_folds(pairs, k, seed)?,
    };
    let scores = score_pairs(emb, &folded)?;
    let fold_of = folded.fold_of.as_deref().unwrap_or_default();
    let mut report = kfold_accuracy(&scores, &folded.same_flags(), fold_of, k)?;
    report.meta.seed = Some(seed);
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig, embeddings: &Path, pairs: &Path, out: &Path) -> CliResult<EvalReport> {
    let emb = EmbeddingSet::load(embeddings)?;
    let pairs = dataio::pairs::load_pairs_csv(pairs)?;
    let report = evaluate_embeddings(&emb, &pairs, cfg.protocol.k, cfg.seed)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

pub fn cmd_tsne(
    cfg: &RunConfig,
    source: TsneSource,
    embeddings: Option<&Path>,
    manifest: Option<&Path>,
    out: &Path,
    stdout: &mut dyn Write,
) -> CliResult<()> {
    let samples = manifest.map(load_manifest_samples).transpose()?;
    let (points, ids) = match source {
        TsneSource::Raw => {
            let samples = samples
                .as_ref()
                .ok_or_else(|| CliError::Usage("--source raw needs --manifest".to_owned()))?;
            let data: Vec<f64> = samples.iter().flat_map(|s| s.pixels().iter().copied()).collect();
            let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
            if ids.is_empty() {
                return Err(Error::Protocol("t-SNE needs at least 3 points, got 0".to_owned()).into());
            }
            (Matrix::new(ids.len(), IMAGE_PIXELS, data)?, ids)
        }
        TsneSource::Embeddings => {
            let path = embeddings.ok_or_else(|| CliError::Usage("--embeddings is required".to_owned()))?;
            let emb = EmbeddingSet::load(path)?;
            (emb.vectors().clone(), emb.ids().to_vec())
        }
    };
    if points.rows() < 3 {
        return Err(Error::Protocol(format!("t-SNE needs at least 3 points, got {}", points.rows())).into());
    }
    let labels: Vec<usize> = match &samples {
        Some(samples) => {
            let by_id: std::collections::HashMap<&str, Option<usize>> =
                samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
            ids.iter()
                .map(|id| by_id.get(id.as_str()).copied().flatten().unwrap_or(0))
                .collect()
        }
        None => vec![0; ids.len()],
    };
    let result = tsne(&points, &cfg.tsne)?;
    export_scatter(&result.coords, &labels, out.join("coords.csv"), out.join("scatter.svg"))?;
    let mut kl = String::from("iteration,kl\n");
    for s in &result.kl_history {
        kl.push_str(&format!("{},{:.17e}\n", s.iteration, s.kl));
    }
    write_file(&out.join("kl_history.csv"), &kl)?;
    writeln!(stdout, "t-SNE of {} points at perplexity {}", points.rows(), result.perplexity).map_err(Error::from)?;
    if let Ok(s) = silhouette_score(&result.coords, &labels) {
        writeln!(stdout, "silhouette {s:.4}").map_err(Error::from)?;
    }
    Ok(())
}

pub fn cmd_gradcheck(seed: u64, stdout: &mut dyn Write) -> CliResult<()> {
    cmd_gradcheck_with(seed, Activation::backprop, stdout)
}

/// Gradient-check suite with an injectable activation derivative.
pub fn cmd_gradcheck_with(seed: u64, derivative: DerivativeFn, stdout: &mut dyn Write) -> CliResult<()> {
    let results: Vec<SuiteResult> = run_suite(seed, derivative)?;
    for r in &results {
        writeln!(
            stdout,
            "{:<28} params={:<4} max_rel_err={:.3e} {}",
            r.name,
            r.params,
            r.max_relative_error,
            if r.passed() { "PASS" } else { "FAIL" }
        )
        .map_err(Error::from)?;
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::Verification {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}
