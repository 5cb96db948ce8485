use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::nflayers::position;
use crate::wsdata::{LayerDesc, WeightSpaceFeature, WeightSpaceSpec};

/// Row-major grayscale image with values nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        ensure!(height > 0 && width > 0, "image dimensions must be positive");
        ensure!(
            pixels.len() == height * width,
            "pixel count does not match {height}x{width}"
        );
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Image {
            height,
            width,
            pixels: vec![v; height * width],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    pub fn mse(&self, other: &Image) -> Result<f64> {
        ensure!(
            self.height == other.height && self.width == other.width,
            "image sizes differ"
        );
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / self.pixels.len() as f64)
    }
}

/// Pixel-center coordinates `(x, y)` in row-major pixel order; the first and
/// last centers sit exactly on `-1` and `1`.
pub fn coordinate_grid(height: usize, width: usize) -> Vec<[f64; 2]> {
    (0..height)
        .flat_map(|r| (0..width).map(move |c| [position(c, width), position(r, height)]))
        .collect()
}

/// PSNR in dB for images spanning `[-1, 1]` (peak-to-peak range 2).
pub fn psnr(mse: f64) -> f64 {
    10.0 * (4.0 / mse.max(1e-300)).log10()
}

/// 3x3 max filter; the window is clipped at the borders.
pub fn dilate(img: &Image) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            let mut m = f64::NEG_INFINITY;
            for rr in r.saturating_sub(1)..(r + 2).min(h) {
                for cc in c.saturating_sub(1)..(c + 2).min(w) {
                    m = m.max(img.get(rr, cc));
                }
            }
            out.pixels[r * w + c] = m;
        }
    }
    out
}

/// `clamp(1.5 (p - mean) + mean, -1, 1)`.
pub fn contrast(img: &Image) -> Image {
    let mean = img.pixels.iter().sum::<f64>() / img.pixels.len() as f64;
    Image {
        height: img.height,
        width: img.width,
        pixels: img
            .pixels
            .iter()
            .map(|p| (1.5 * (p - mean) + mean).clamp(-1.0, 1.0))
            .collect(),
    }
}

/// Orientation 0: horizontal stripes (vary along y); 1: vertical stripes.
/// Frequency and phase are drawn from `seed`.
pub fn stripes(size: usize, orientation: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = rng.gen_range(1.0..2.5) * std::f64::consts::PI;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let pixels = coordinate_grid(size, size)
        .into_iter()
        .map(|[x, y]| {
            let t = if orientation == 0 { y } else { x };
            (freq * t + phase).sin()
        })
        .collect();
    Image {
        height: size,
        width: size,
        pixels,
    }
}

/// Amplitude of the two classes of [`class_image`].
pub const CLASS_AMPLITUDES: [f64; 2] = [0.3, 0.9];

/// Stripes of random orientation, frequency and phase, scaled to the class
/// amplitude: class 0 is faint, class 1 is strong.
pub fn class_image(size: usize, class: usize, seed: u64) -> Image {
    let mut img = stripes(size, (seed >> 7) as usize % 2, seed);
    let a = CLASS_AMPLITUDES[class.min(1)];
    img.pixels.iter_mut().for_each(|p| *p *= a);
    img
}

/// Binary glyph: one to three axis-aligned strokes of value 1 on a `-1` background.
pub fn glyph(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(size, size, -1.0);
    let strokes = rng.gen_range(1..=3);
    for _ in 0..strokes {
        let horizontal = rng.gen_bool(0.5);
        let fixed = rng.gen_range(1..size - 1);
        let a = rng.gen_range(0..size / 2);
        let b = rng.gen_range(size / 2..size);
        for t in a..=b {
            let (r, c) = if horizontal { (fixed, t) } else { (t, fixed) };
            img.pixels[r * size + c] = 1.0;
        }
    }
    img
}

/// Writes a binary PGM, mapping `[-1, 1]` linearly to `0..=255`.
pub fn write_pgm(img: &Image, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|p| (((p.clamp(-1.0, 1.0) + 1.0) * 127.5).round()) as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Stores an image in a weight-space container: a single fc layer with
/// `n_out = height`, `n_in = width`; pixels fill `W_1`, the bias is zero.
pub fn image_to_feature(img: &Image) -> WeightSpaceFeature {
    let spec =
        WeightSpaceSpec::new(vec![LayerDesc::fc(img.height, img.width)], false).expect("valid");
    let mut f = WeightSpaceFeature::zeros(&spec, 1).expect("valid");
    f.weight_mut(0).copy_from_slice(&img.pixels);
    f
}

pub fn feature_to_image(f: &WeightSpaceFeature) -> Result<Image> {
    ensure!(
        f.num_layers() == 1 && f.channels() == 1 && !f.spec().has_conv(),
        "image containers hold a single one-channel fc layer"
    );
    let l = &f.spec().layers()[0];
    Image::new(l.n_out, l.n_in, f.weight(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = coordinate_grid(2, 3);
        assert_eq!(g[0], [-1.0, -1.0]);
        assert_eq!(g[1], [0.0, -1.0]);
        assert_eq!(g[5], [1.0, 1.0]);
        assert_eq!(coordinate_grid(1, 1), vec![[0.0, 0.0]]);
    }

    #[test]
    fn dilation_cases() {
        let z = Image::filled(4, 4, 0.0);
        assert_eq!(dilate(&z), z);
        let mut dot = Image::filled(5, 5, -1.0);
        dot.pixels[12] = 1.0;
        let d = dilate(&dot);
        assert_eq!(d.pixels.iter().filter(|&&p| p == 1.0).count(), 9);
        assert_eq!(d.get(0, 0), -1.0);
    }

    #[test]
    fn contrast_stretches_about_mean() {
        let img = Image::new(1, 2, vec![0.2, 0.4]).unwrap();
        let c = contrast(&img);
        assert!((c.pixels[0] - 0.15).abs() < 1e-15);
        assert!((c.pixels[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn image_container_roundtrip() {
        let img = glyph(8, 2);
        assert_eq!(feature_to_image(&image_to_feature(&img)).unwrap(), img);
    }
}
