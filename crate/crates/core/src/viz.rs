//! Exact t-SNE, silhouette scores, and scatter-plot export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const P_FLOOR: f64 = 1e-12;
const SEARCH_STEPS: usize = 50;
const ENTROPY_TOL: f64 = 1e-5;
const INIT_STD: f64 = 1e-4;
const KL_EVERY: usize = 50;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    /// Iterations that use exaggerated affinities and the initial momentum.
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.perplexity - 1.0, self.early_exaggeration, self.learning_rate];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.iterations == 0 {
            return Err(Error::Config(format!(
                "t-SNE needs perplexity > 1 and positive exaggeration, learning rate and iterations: {self:?}"
            )));
        }
        for m in [self.initial_momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("t-SNE momentum {m} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Caps the requested perplexity at `(n - 1) / 3`.
///
/// For `n` of 3 or 4 that cap is at most 1, so `n / 2` is used instead,
/// which still lies strictly between 1 and `n - 1`.
pub fn effective_perplexity(requested: f64, n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::Config(format!("t-SNE needs at least 3 points, got {n}")));
    }
    if !(requested.is_finite() && requested > 1.0) {
        return Err(Error::Config(format!("perplexity must exceed 1, got {requested}")));
    }
    let cap = (n as f64 - 1.0) / 3.0;
    let cap = if cap > 1.0 { cap } else { n as f64 / 2.0 };
    Ok(requested.min(cap))
}

fn squared_distances(points: &Matrix) -> Vec<f64> {
    let n = points.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Conditional distribution `p(j | i)` over `j != i` whose entropy (in nats)
/// matches `ln(perplexity)`. Returns the row and its entropy.
fn conditional_row(dist: &[f64], i: usize, perplexity: f64) -> (Vec<f64>, f64) {
    let target = perplexity.ln();
    // Shifting by the nearest distance leaves the normalized row unchanged
    // and keeps exp() away from underflow.
    let d_min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = dist.iter().map(|&d| d - d_min).collect();
    let spread = shifted.iter().sum::<f64>() / (dist.len() - 1) as f64;

    let eval = |beta: f64| {
        let mut p: Vec<f64> = shifted
            .iter()
            .enumerate()
            .map(|(j, &d)| if j == i { 0.0 } else { (-beta * d).exp() })
            .collect();
        let sum: f64 = p.iter().sum();
        let weighted: f64 = p.iter().zip(&shifted).map(|(pj, d)| pj * d).sum();
        let h = sum.ln() + beta * weighted / sum;
        for v in &mut p {
            *v /= sum;
        }
        (p, h)
    };

    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    let (mut p, mut h) = eval(beta);
    for _ in 0..SEARCH_STEPS {
        let diff = h - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        (p, h) = eval(beta);
    }
    (p, h)
}

/// Per-point entropies after the precision search, for diagnostics.
pub fn conditional_entropies(points: &Matrix, perplexity: f64) -> Result<Vec<f64>> {
    let perplexity = effective_perplexity(perplexity, points.rows())?;
    let n = points.rows();
    let d = squared_distances(points);
    Ok((0..n)
        .map(|i| conditional_row(&d[i * n..(i + 1) * n], i, perplexity).1)
        .collect())
}

/// Symmetrized affinities `(p(j|i) + p(i|j)) / 2N`, off-diagonal entries
/// floored at [`P_FLOOR`] with the rest rescaled so the total stays 1.
pub fn joint_affinities(points: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = points.rows();
    let perplexity = effective_perplexity(perplexity, n)?;
    let d = squared_distances(points);
    let mut cond = vec![0.0; n * n];
    for i in 0..n {
        let (row, _) = conditional_row(&d[i * n..(i + 1) * n], i, perplexity);
        cond[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64);
            }
        }
    }
    // Rescaling can push a borderline entry under the floor, hence the loop.
    for _ in 0..10 {
        let mut floored_mass = 0.0;
        let mut free_mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let v = &mut p[i * n + j];
                if *v <= P_FLOOR {
                    *v = P_FLOOR;
                    floored_mass += P_FLOOR;
                } else {
                    free_mass += *v;
                }
            }
        }
        let factor = (1.0 - floored_mass) / free_mass;
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                let v = &mut p[i * n + j];
                if i != j && *v > P_FLOOR {
                    *v *= factor;
                    changed |= *v <= P_FLOOR;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Matrix::new(n, n, p)
}

fn student_t(y: &Matrix) -> (Vec<f64>, f64) {
    let n = y.rows();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (y.row(i), y.row(j));
            let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
            let v = 1.0 / (1.0 + d2);
            num[i * n + j] = v;
            num[j * n + i] = v;
            sum += 2.0 * v;
        }
    }
    (num, sum)
}

fn kl_divergence(p: &Matrix, num: &[f64], sum: f64) -> f64 {
    let n = p.rows();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p.get(i, j);
                let qij = (num[i * n + j] / sum).max(f64::MIN_POSITIVE);
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSample {
    pub iteration: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Matrix,
    pub kl_history: Vec<KlSample>,
    pub perplexity: f64,
}

/// Exact O(N²) t-SNE into two dimensions.
///
/// KL(P‖Q) against the unexaggerated affinities is recorded every 50
/// iterations. The returned coordinates have column sums of exactly zero.
pub fn tsne(points: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    cfg.validate()?;
    let n = points.rows();
    let perplexity = effective_perplexity(cfg.perplexity, n)?;
    let p = joint_affinities(points, perplexity)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, INIT_STD).map_err(|e| Error::Config(e.to_string()))?;
    // Identical input rows share a starting point, so by symmetry they
    // receive identical updates and end up at the same coordinates.
    let mut y = vec![0.0; n * 2];
    for i in 0..n {
        match (0..i).find(|&j| points.row(j) == points.row(i)) {
            Some(j) => {
                y[2 * i] = y[2 * j];
                y[2 * i + 1] = y[2 * j + 1];
            }
            None => {
                y[2 * i] = init.sample(&mut rng);
                y[2 * i + 1] = init.sample(&mut rng);
            }
        }
    }
    let mut velocity = vec![0.0; n * 2];
    let mut gains = vec![1.0f64; n * 2];
    let mut kl_history = Vec::new();

    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };

        let ym = Matrix::new(n, 2, y.clone())?;
        let (num, sum) = student_t(&ym);
        let mut grad = vec![0.0; n * 2];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = num[i * n + j];
                let coeff = 4.0 * (exaggeration * p.get(i, j) - w / sum) * w;
                grad[2 * i] += coeff * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += coeff * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for k in 0..n * 2 {
            gains[k] = if (grad[k] > 0.0) != (velocity[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            velocity[k] = momentum * velocity[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += velocity[k];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("t-SNE iteration {it}")));
        }
        center(&mut y, n);

        if (it + 1) % KL_EVERY == 0 || it + 1 == cfg.iterations {
            let (num, sum) = student_t(&Matrix::new(n, 2, y.clone())?);
            kl_history.push(KlSample {
                iteration: it + 1,
                kl: kl_divergence(&p, &num, sum),
            });
        }
    }
    center_exactly(&mut y, n);
    Ok(TsneResult {
        coords: Matrix::new(n, 2, y)?,
        kl_history,
        perplexity,
    })
}

fn center(y: &mut [f64], n: usize) {
    for c in 0..2 {
        let mean = (0..n).map(|i| y[2 * i + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            y[2 * i + c] -= mean;
        }
    }
}

/// After ordinary centering, the last point absorbs the rounding residue so
/// a left-to-right column sum is exactly zero.
fn center_exactly(y: &mut [f64], n: usize) {
    center(y, n);
    for c in 0..2 {
        let rest = (0..n - 1).map(|i| y[2 * i + c]).sum::<f64>();
        y[2 * (n - 1) + c] = -rest;
    }
}

/// Mean silhouette under Euclidean distance. Points in singleton clusters
/// score 0.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if labels.len() != n {
        return Err(Error::Data(format!("{} labels for {n} points", labels.len())));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Data("silhouette needs at least two clusters".to_owned()));
    }
    let d = squared_distances(points);
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += d[i * n + j].sqrt();
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];
const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 640.0;
const RADIUS: f64 = 4.0;
const MARGIN: f64 = 0.05;

fn check_scatter(coords: &Matrix, labels: &[usize]) -> Result<()> {
    if coords.cols() != 2 {
        return Err(Error::shape("scatter", coords.shape(), (coords.rows(), 2)));
    }
    if labels.len() != coords.rows() {
        return Err(Error::Data(format!(
            "{} labels for {} points",
            labels.len(),
            coords.rows()
        )));
    }
    Ok(())
}

pub fn scatter_csv(coords: &Matrix, labels: &[usize]) -> Result<String> {
    check_scatter(coords, labels)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "label"])?;
    for (row, label) in coords.iter_rows().zip(labels) {
        w.write_record([row[0].to_string(), row[1].to_string(), label.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn scatter_svg(coords: &Matrix, labels: &[usize]) -> Result<String> {
    check_scatter(coords, labels)?;
    let axis = |c: usize| {
        let (lo, hi) = coords
            .iter_rows()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo - MARGIN * span, span * (1.0 + 2.0 * MARGIN))
    };
    let (x0, xs) = axis(0);
    let (y0, ys) = axis(1);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (row, &label) in coords.iter_rows().zip(labels) {
        let cx = (row[0] - x0) / xs * SVG_WIDTH;
        let cy = SVG_HEIGHT - (row[1] - y0) / ys * SVG_HEIGHT;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{RADIUS}" fill="{}"/>"#,
            PALETTE[label % PALETTE.len()]
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes `x,y,label` CSV and an SVG scatter plot.
pub fn export_scatter(
    coords: &Matrix,
    labels: &[usize],
    csv_path: impl AsRef<Path>,
    svg_path: impl AsRef<Path>,
) -> Result<()> {
    let csv = scatter_csv(coords, labels)?;
    let svg = scatter_svg(coords, labels)?;
    let (csv_path, svg_path) = (csv_path.as_ref(), svg_path.as_ref());
    fs::write(csv_path, csv).map_err(|e| Error::file(csv_path, e))?;
    fs::write(svg_path, svg).map_err(|e| Error::file(svg_path, e))?;
    Ok(())
}
