//! Image ingestion, pair lists and synthetic data.

pub mod image;
pub mod manifest;
pub mod pairs;
pub mod synth;

pub use image::{
    load_pgm, parse_pgm, resize_bilinear, rgb_to_gray, save_pgm, ImageSample, IMAGE_PIXELS, IMAGE_SIDE,
};
pub use manifest::{load_manifest_samples, read_manifest, write_manifest, ManifestEntry};
pub use pairs::{assign_folds, make_pairs, parse_lfw_pairs, PairEntry, PairList};
pub use synth::{synth_dataset, SynthDataset, SynthSpec};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Side length for a square input of `input_dim` pixels.
pub fn input_side(input_dim: usize) -> Result<usize> {
    let side = (input_dim as f64).sqrt().round() as usize;
    if side < 1 || side * side != input_dim {
        return Err(Error::Config(format!(
            "input_dim {input_dim} is not a square image size"
        )));
    }
    Ok(side)
}

/// Stacks samples into a `n × input_dim` matrix, resampling each 112×112
/// image to `sqrt(input_dim)` per side when the network runs smaller.
pub fn samples_to_matrix(samples: &[ImageSample], input_dim: usize) -> Result<Matrix> {
    let side = input_side(input_dim)?;
    let mut data = Vec::with_capacity(samples.len() * input_dim);
    for s in samples {
        if side == IMAGE_SIDE {
            data.extend_from_slice(s.pixels());
        } else {
            data.extend(s.pixels_at(side)?);
        }
    }
    Matrix::new(samples.len(), input_dim, data)
}

/// Class labels of labeled samples; fails on the first unlabeled one.
pub fn labels_of(samples: &[ImageSample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::Data(format!("sample `{}` has no label", s.id)))
        })
        .collect()
}
