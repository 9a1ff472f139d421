//! Deterministic synthetic "identities" for desk-scale experiments.
//!
//! Each class has a prototype made of three Gaussian bumps on the 112 × 112
//! grid, rescaled to `[0, 1]`. Samples are the prototype plus i.i.d.
//! Gaussian pixel noise, clamped back into range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{ImageSample, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};

const BUMPS_PER_PROTOTYPE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            per_class: 20,
            noise_sigma: 0.08,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.per_class < 2 {
            return Err(Error::Config(format!(
                "synthetic data needs >= 2 classes and >= 2 samples per class, got {} x {}",
                self.num_classes, self.per_class
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// Class-major order: all samples of class 0, then class 1, ...
    pub samples: Vec<ImageSample>,
    pub prototypes: Vec<Vec<f64>>,
}

pub fn sample_id(class: usize, index: usize) -> String {
    format!("c{class:03}_{index:03}")
}

fn prototype(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let side = IMAGE_SIDE as f64;
    let bumps: Vec<(f64, f64, f64, f64)> = (0..BUMPS_PER_PROTOTYPE)
        .map(|_| {
            let cx = rng.random_range(0.15 * side..0.85 * side);
            let cy = rng.random_range(0.15 * side..0.85 * side);
            let width = rng.random_range(0.06 * side..0.18 * side);
            let amplitude = rng.random_range(0.5..1.0);
            (cx, cy, width, amplitude)
        })
        .collect();
    let mut img = Vec::with_capacity(IMAGE_PIXELS);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let v: f64 = bumps
                .iter()
                .map(|&(cx, cy, w, a)| {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            img.push(v);
        }
    }
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut img {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    img
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prototypes: Vec<Vec<f64>> = (0..spec.num_classes).map(|_| prototype(&mut rng)).collect();
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;

    let mut samples = Vec::with_capacity(spec.num_classes * spec.per_class);
    for (class, proto) in prototypes.iter().enumerate() {
        for index in 0..spec.per_class {
            let pixels = if spec.noise_sigma == 0.0 {
                proto.clone()
            } else {
                proto
                    .iter()
                    .map(|&p| (p + noise.sample(&mut rng)).clamp(0.0, 1.0))
                    .collect()
            };
            samples.push(ImageSample::new(sample_id(class, index), Some(class), pixels)?);
        }
    }
    Ok(SynthDataset {
        samples,
        prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, sigma: f64) -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            per_class: 4,
            noise_sigma: sigma,
            seed,
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_dataset(&small(5, 0.08)).unwrap();
        let b = synth_dataset(&small(5, 0.08)).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = synth_dataset(&small(6, 0.08)).unwrap();
        assert_ne!(a.samples[0].pixels(), c.samples[0].pixels());
    }

    #[test]
    fn zero_noise_reproduces_prototypes() {
        let d = synth_dataset(&small(2, 0.0)).unwrap();
        for s in &d.samples {
            assert_eq!(s.pixels(), d.prototypes[s.label.unwrap()].as_slice());
        }
    }

    #[test]
    fn prototypes_span_unit_range() {
        let d = synth_dataset(&small(3, 0.0)).unwrap();
        for p in &d.prototypes {
            let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
    }

    #[test]
    fn classes_are_balanced() {
        let spec = SynthSpec {
            num_classes: 5,
            per_class: 7,
            ..SynthSpec::default()
        };
        let d = synth_dataset(&spec).unwrap();
        for c in 0..5 {
            assert_eq!(d.samples.iter().filter(|s| s.label == Some(c)).count(), 7);
        }
    }

    #[test]
    fn within_class_closer_than_between_class() {
        let spec = SynthSpec {
            num_classes: 8,
            per_class: 20,
            noise_sigma: 0.08,
            seed: 1,
        };
        let d = synth_dataset(&spec).unwrap();
        let dist = |a: &ImageSample, b: &ImageSample| -> f64 {
            a.pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
        for (i, a) in d.samples.iter().enumerate() {
            for b in &d.samples[i + 1..] {
                if a.label == b.label {
                    within += dist(a, b);
                    nw += 1;
                } else {
                    between += dist(a, b);
                    nb += 1;
                }
            }
        }
        assert!(within / (nw as f64) < between / (nb as f64));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(synth_dataset(&SynthSpec {
            per_class: 1,
            ..SynthSpec::default()
        })
        .is_err());
        assert!(synth_dataset(&SynthSpec {
            noise_sigma: -1.0,
            ..SynthSpec::default()
        })
        .is_err());
    }
}
