//! Binary PGM (P5) I/O and grayscale resampling.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Side length of the network input images.
pub const IMAGE_SIDE: usize = 112;
/// Pixels per input image (112 × 112).
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// A grayscale face image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub label: Option<usize>,
    pixels: Vec<f64>,
}

impl ImageSample {
    pub fn new(id: impl Into<String>, label: Option<usize>, pixels: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::Data(format!(
                "{id}: expected {IMAGE_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!("{id}: pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { id, label, pixels })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Pixels resampled to a `side × side` grid, for networks that run at a
    /// reduced input resolution.
    pub fn pixels_at(&self, side: usize) -> Result<Vec<f64>> {
        resize_bilinear(&self.pixels, IMAGE_SIDE, IMAGE_SIDE, side, side)
    }
}

/// Raw 8-bit grayscale raster as stored in a PGM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub bytes: Vec<u8>,
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(start, format!("{what} out of range")))
    }
}

/// Parses a binary P5 PGM with maxval 255.
pub fn parse_pgm(data: &[u8]) -> Result<Pgm> {
    if data.len() < 2 || &data[..2] != b"P5" {
        let found = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(format_err(0, format!("expected magic P5, found {found:?}")));
    }
    let mut header = HeaderReader { data, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    header.skip_whitespace_and_comments();
    let maxval_at = header.pos;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(format_err(maxval_at, format!("unsupported maxval {maxval}, need 255")));
    }
    if width == 0 || height == 0 {
        return Err(format_err(2, "image has a zero dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(header.pos) {
        Some(c) if c.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(format_err(header.pos, "missing whitespace after maxval")),
    }
    let start = header.pos;
    let needed = width * height;
    if data.len() - start < needed {
        return Err(format_err(
            data.len(),
            format!("truncated raster: need {needed} bytes, have {}", data.len() - start),
        ));
    }
    Ok(Pgm {
        width,
        height,
        bytes: data[start..start + needed].to_vec(),
    })
}

pub fn encode_pgm(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", pgm.width, pgm.height).into_bytes();
    out.extend_from_slice(&pgm.bytes);
    out
}

/// Loads a P5 PGM as an [`ImageSample`], resampling to 112 × 112 if needed.
/// The sample id is the file stem.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<ImageSample> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::file(path, e))?;
    let pgm = parse_pgm(&data)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    sample_from_pgm(id, None, &pgm)
}

pub fn sample_from_pgm(id: String, label: Option<usize>, pgm: &Pgm) -> Result<ImageSample> {
    let pixels: Vec<f64> = pgm.bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
    let pixels = if (pgm.height, pgm.width) == (IMAGE_SIDE, IMAGE_SIDE) {
        pixels
    } else {
        resize_bilinear(&pixels, pgm.height, pgm.width, IMAGE_SIDE, IMAGE_SIDE)?
    };
    ImageSample::new(id, label, pixels)
}

/// Quantizes `[0, 1]` pixels to bytes.
pub fn quantize(pixels: &[f64]) -> Vec<u8> {
    pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn save_pgm(sample: &ImageSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pgm = Pgm {
        width: IMAGE_SIDE,
        height: IMAGE_SIDE,
        bytes: quantize(sample.pixels()),
    };
    fs::write(path, encode_pgm(&pgm)).map_err(|e| Error::file(path, e))
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
///
/// Same-size input is returned unchanged.
pub fn resize_bilinear(
    pixels: &[f64],
    height: usize,
    width: usize,
    out_height: usize,
    out_width: usize,
) -> Result<Vec<f64>> {
    if height < 2 || width < 2 {
        return Err(Error::Data(format!(
            "cannot resample a {height}x{width} image, need at least 2x2"
        )));
    }
    if out_height == 0 || out_width == 0 {
        return Err(Error::Data("output size must be positive".to_owned()));
    }
    if pixels.len() != height * width {
        return Err(Error::Data(format!(
            "{height}x{width} image needs {} pixels, got {}",
            height * width,
            pixels.len()
        )));
    }
    if (height, width) == (out_height, out_width) {
        return Ok(pixels.to_vec());
    }

    let axis = |out: usize, size: usize| -> Vec<(usize, usize, f64)> {
        let scale = size as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (size - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(size - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = axis(out_height, height);
    let cols = axis(out_width, width);

    let mut out = Vec::with_capacity(out_height * out_width);
    for &(y0, y1, fy) in &rows {
        let r0 = &pixels[y0 * width..(y0 + 1) * width];
        let r1 = &pixels[y1 * width..(y1 + 1) * width];
        for &(x0, x1, fx) in &cols {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    Ok(out)
}

/// ITU-R BT.601 luma of an RGB triple.
#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Interleaved RGB (values in `[0, 1]`) to grayscale.
pub fn rgb_to_gray(rgb: &[f64]) -> Result<Vec<f64>> {
    if !rgb.len().is_multiple_of(3) {
        return Err(Error::Data(format!(
            "RGB buffer length {} is not a multiple of 3",
            rgb.len()
        )));
    }
    Ok(rgb.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm_bytes(w: usize, h: usize, fill: u8) -> Vec<u8> {
        encode_pgm(&Pgm {
            width: w,
            height: h,
            bytes: vec![fill; w * h],
        })
    }

    fn write_temp(bytes: &[u8], name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, bytes).unwrap();
        (dir, path)
    }

    #[test]
    fn black_and_white_images() {
        let (_d, path) = write_temp(&pgm_bytes(112, 112, 0), "black.pgm");
        let s = load_pgm(&path).unwrap();
        assert_eq!(s.id, "black");
        assert!(s.pixels().iter().all(|&p| p == 0.0));

        let (_d, path) = write_temp(&pgm_bytes(112, 112, 255), "white.pgm");
        assert!(load_pgm(&path).unwrap().pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn ascii_pgm_rejected() {
        let err = parse_pgm(b"P2\n2 2\n255\n0 0 0 0\n").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn bad_maxval_and_truncation_report_offsets() {
        let err = parse_pgm(b"P5\n2 2\n65535\n\0\0").unwrap_err();
        assert!(matches!(err, Error::Format { offset: 7, .. }), "{err}");
        let mut short = pgm_bytes(4, 4, 9);
        short.truncate(short.len() - 3);
        assert!(matches!(parse_pgm(&short), Err(Error::Format { .. })));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[10, 20]);
        let pgm = parse_pgm(&data).unwrap();
        assert_eq!((pgm.width, pgm.height, pgm.bytes), (2, 1, vec![10, 20]));
    }

    #[test]
    fn smaller_images_are_resampled_on_load() {
        let (_d, path) = write_temp(&pgm_bytes(50, 40, 51), "small.pgm");
        let s = load_pgm(&path).unwrap();
        assert_eq!(s.pixels().len(), IMAGE_PIXELS);
        assert!(s.pixels().iter().all(|&p| (p - 0.2).abs() < 1e-12));
    }

    #[test]
    fn constant_image_stays_constant() {
        let out = resize_bilinear(&vec![0.37; 30 * 17], 30, 17, 112, 112).unwrap();
        assert!(out.iter().all(|&p| (p - 0.37).abs() < 1e-15));
    }

    #[test]
    fn same_size_is_bitwise_identity() {
        let pixels: Vec<f64> = (0..IMAGE_PIXELS).map(|i| (i % 251) as f64 / 250.0).collect();
        let out = resize_bilinear(&pixels, 112, 112, 112, 112).unwrap();
        assert!(out.iter().zip(&pixels).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn two_by_two_ramp_upsamples_monotonically() {
        let out = resize_bilinear(&[0.0, 1.0, 0.0, 1.0], 2, 2, 112, 112).unwrap();
        let first = &out[..112];
        for row in out.chunks_exact(112) {
            assert_eq!(row, first);
        }
        assert!(first.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(first[0], 0.0);
        assert_eq!(first[111], 1.0);
        // Closed form for pixel-center sampling: x_src = (x + 0.5)/56 − 0.5,
        // clamped to [0, 1].
        for (x, &v) in first.iter().enumerate() {
            let expected = ((x as f64 + 0.5) / 56.0 - 0.5).clamp(0.0, 1.0);
            assert!((v - expected).abs() < 1e-15, "x={x}: {v} vs {expected}");
        }
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(matches!(
            resize_bilinear(&[0.5], 1, 1, 112, 112),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn luma_weights() {
        assert!((luma(1.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        let gray = rgb_to_gray(&[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(gray, vec![0.299, 0.114]);
    }

    proptest! {
        #[test]
        fn save_then_load_is_identity_on_quantized_pixels(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pixels: Vec<f64> = (0..IMAGE_PIXELS)
                .map(|_| f64::from(rng.random::<u8>()) / 255.0)
                .collect();
            let sample = ImageSample::new("q", None, pixels).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("q.pgm");
            save_pgm(&sample, &path).unwrap();
            let loaded = load_pgm(&path).unwrap();
            prop_assert_eq!(loaded.pixels(), sample.pixels());
        }
    }
}
