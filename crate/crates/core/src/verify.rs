//! Cosine scoring and the k-fold verification protocol.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::PairList;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Offset placed below the smallest and above the largest score.
pub const THRESHOLD_EPS: f64 = 1e-6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("cosine_score", (1, a.len()), (1, b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine_score".to_owned()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let s = dot / (na * nb);
    if !s.is_finite() {
        return Err(Error::NonFinite("cosine_score".to_owned()));
    }
    Ok(s.clamp(-1.0, 1.0))
}

/// Embeddings keyed by sample id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Matrix,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::Data(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                vectors.rows()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if norm(vectors.row(i)) == 0.0 {
                return Err(Error::ZeroNorm(format!("embedding `{id}`")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(Self { ids, vectors, index })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.index
            .get(id)
            .map(|&i| self.vectors.row(i))
            .ok_or_else(|| Error::Lookup(id.to_owned()))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.ids.clone(), self.vectors.scale(factor)?)
    }

    /// Headerless CSV: `id,v1,...,vD`, each value with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for (id, row) in self.ids.iter().zip(self.vectors.iter_rows()) {
            let mut record = Vec::with_capacity(row.len() + 1);
            record.push(id.clone());
            record.extend(row.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let id = record.get(0).unwrap_or_default().to_owned();
            let width = record.len() - 1;
            if width == 0 || *dim.get_or_insert(width) != width {
                return Err(Error::Data(format!("embedding row {} (`{id}`) has width {width}", line + 1)));
            }
            for field in record.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("embedding `{id}`: bad value `{field}`")))?;
                data.push(v);
            }
            ids.push(id);
        }
        let dim = dim.ok_or_else(|| Error::Data("embedding file is empty".to_owned()))?;
        Self::new(ids.clone(), Matrix::new(ids.len(), dim, data)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_csv(file)
    }
}

pub fn score_pairs(emb: &EmbeddingSet, pairs: &PairList) -> Result<Vec<f64>> {
    pairs
        .entries
        .iter()
        .map(|p| cosine_score(emb.get(&p.id_a)?, emb.get(&p.id_b)?))
        .collect()
}

/// Picks the threshold maximizing accuracy under "same iff score >= t".
///
/// Candidates are `min - eps`, midpoints between consecutive distinct
/// scores, and `max + eps`; ties go to the smallest candidate. Returns
/// `(threshold, accuracy)`.
pub fn choose_threshold(scores: &[f64], same: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() || scores.len() != same.len() {
        return Err(Error::Data(format!(
            "threshold selection needs matching non-empty inputs, got {} scores and {} flags",
            scores.len(),
            same.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let n = scores.len();
    let total_same = same.iter().filter(|&&s| s).count();
    // Cut below everything: all predicted same.
    let mut correct = total_same;
    let mut best = (scores[order[0]] - THRESHOLD_EPS, correct);
    let mut i = 0;
    while i < n {
        let value = scores[order[i]];
        // Move the whole group of equal scores below the threshold.
        while i < n && scores[order[i]] == value {
            if same[order[i]] {
                correct -= 1;
            } else {
                correct += 1;
            }
            i += 1;
        }
        let threshold = if i < n {
            0.5 * (value + scores[order[i]])
        } else {
            value + THRESHOLD_EPS
        };
        if correct > best.1 {
            best = (threshold, correct);
        }
    }
    Ok((best.0, best.1 as f64 / n as f64))
}

pub fn accuracy_at(scores: &[f64], same: &[bool], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(same)
        .filter(|(&s, &y)| (s >= threshold) == y)
        .count();
    correct as f64 / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMeta {
    pub k: usize,
    pub n_pairs: usize,
    pub n_same: usize,
    pub n_diff: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub meta: EvalMeta,
}

/// For each fold, selects the threshold on the other folds and measures
/// accuracy on the fold itself. The std is the population std.
pub fn kfold_accuracy(scores: &[f64], same: &[bool], fold_of: &[usize], k: usize) -> Result<EvalReport> {
    if scores.len() != same.len() || scores.len() != fold_of.len() {
        return Err(Error::Data("scores, flags and folds differ in length".to_owned()));
    }
    if k < 2 {
        return Err(Error::Protocol(format!("k-fold evaluation needs k >= 2, got {k}")));
    }
    if let Some(&f) = fold_of.iter().find(|&&f| f >= k) {
        return Err(Error::Protocol(format!("fold index {f} out of range for k = {k}")));
    }
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tr_s, mut tr_y, mut te_s, mut te_y) = (vec![], vec![], vec![], vec![]);
        for i in 0..scores.len() {
            if fold_of[i] == fold {
                te_s.push(scores[i]);
                te_y.push(same[i]);
            } else {
                tr_s.push(scores[i]);
                tr_y.push(same[i]);
            }
        }
        if te_s.is_empty() || tr_s.is_empty() {
            return Err(Error::Protocol(format!("fold {fold} is empty")));
        }
        let (threshold, _) = choose_threshold(&tr_s, &tr_y)?;
        folds.push(FoldResult {
            fold,
            threshold,
            accuracy: accuracy_at(&te_s, &te_y, threshold),
        });
    }
    let mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / k as f64;
    let var = folds.iter().map(|f| (f.accuracy - mean).powi(2)).sum::<f64>() / k as f64;
    let n_same = same.iter().filter(|&&s| s).count();
    Ok(EvalReport {
        folds,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
        meta: EvalMeta {
            k,
            n_pairs: scores.len(),
            n_same,
            n_diff: scores.len() - n_same,
            seed: None,
        },
    })
}

/// Scores `pairs` and runs the k-fold protocol over their fold assignment.
pub fn evaluate_pairs(emb: &EmbeddingSet, pairs: &PairList) -> Result<EvalReport> {
    let fold_of = pairs
        .fold_of
        .as_ref()
        .ok_or_else(|| Error::Protocol("pairs have no fold assignment".to_owned()))?;
    let k = pairs.fold_count().unwrap_or(0);
    let scores = score_pairs(emb, pairs)?;
    kfold_accuracy(&scores, &pairs.same_flags(), fold_of, k)
}
