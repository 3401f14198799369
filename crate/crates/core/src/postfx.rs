//! Post-processing: level-adaptive Gaussian blur, tone mapping, PNG output.

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::map::{LevelMap, ScalarMap};
use crate::scalar::Real;
use crate::splat::GaussianKernel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlurOptions {
    /// σ as a multiple of the projected cell size (in pixels) at each
    /// pixel's level.
    pub strength: f64,
    /// Passes with σ below this many pixels are skipped.
    pub min_sigma: f64,
}

impl Default for BlurOptions {
    fn default() -> Self {
        Self {
            strength: 0.5,
            min_sigma: 0.25,
        }
    }
}

/// Blur width in pixels for cells of `level`.
pub fn level_sigma<T: Real>(cam: &Camera<T>, box_len: T, level: u8, strength: f64) -> T {
    T::of(strength) * box_len / T::of((1u64 << level) as f64) / cam.pixel_size()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur<T: Real>(map: &ScalarMap<T>, sigma: T) -> Result<ScalarMap<T>> {
    let k = GaussianKernel::new(sigma)?;
    let (nx, ny) = map.shape();
    let r = k.radius as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = ScalarMap::zeros(nx, ny);
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = T::zero();
            for (j, &w) in k.weights.iter().enumerate() {
                acc += w * map.get(clamp(x as isize + j as isize - r, nx), y);
            }
            rows.set(x, y, acc);
        }
    }
    let mut out = ScalarMap::zeros(nx, ny);
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = T::zero();
            for (j, &w) in k.weights.iter().enumerate() {
                acc += w * rows.get(x, clamp(y as isize + j as isize - r, ny));
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Blurs each pixel with the σ of its own AMR level.
///
/// One whole-image pass per distinct level; every pixel then takes its value
/// from its level's pass. Pixels without a level pass through unchanged.
pub fn adaptive_blur<T: Real>(
    map: &ScalarMap<T>,
    levels: &LevelMap,
    cam: &Camera<T>,
    box_len: T,
    opts: &BlurOptions,
) -> Result<ScalarMap<T>> {
    if map.shape() != levels.shape() {
        return Err(Error::ShapeMismatch {
            expected: map.shape(),
            actual: levels.shape(),
        });
    }
    if !(opts.strength >= 0.0) {
        return Err(Error::arg("blur strength must be >= 0"));
    }
    let mut out = map.clone();
    for level in levels.distinct_levels() {
        let sigma = level_sigma(cam, box_len, level, opts.strength);
        if !(sigma > T::zero()) || sigma < T::of(opts.min_sigma) {
            continue;
        }
        let blurred = gaussian_blur(map, sigma)?;
        for (i, &l) in levels.data().iter().enumerate() {
            if l == level {
                out.data_mut()[i] = blurred.data()[i];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

/// 8-bit image, rows stored bottom-up like [`ScalarMap`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image8 {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image8 {
    /// Applies the built-in colormap to a grayscale image.
    pub fn colorize(&self) -> Image8 {
        assert_eq!(self.channels, 1);
        let lut = colormap();
        Image8 {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels: self.pixels.iter().flat_map(|&g| lut[g as usize]).collect(),
        }
    }

    /// PNG bytes with the top image row first.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("png header");
            let stride = self.width * self.channels;
            let flipped: Vec<u8> = self
                .pixels
                .chunks_exact(stride)
                .rev()
                .flatten()
                .copied()
                .collect();
            w.write_image_data(&flipped).expect("png data");
        }
        out
    }
}

/// Maps values to bytes: `(s(v) − s(vmin)) / (s(vmax) − s(vmin))` scaled to
/// `[0, 255]` and clamped, with `s` the identity or `log10`. Missing bounds
/// default to the finite range of the (floored, for `Log10`) map.
pub fn tonemap<T: Real>(map: &ScalarMap<T>, scale: Scale, vmin: Option<f64>, vmax: Option<f64>) -> Result<Image8> {
    if map.data().is_empty() {
        return Err(Error::arg("cannot tone-map an empty map"));
    }
    if let (Some(a), Some(b)) = (vmin, vmax) {
        if !(a < b) {
            return Err(Error::arg(format!("need vmin < vmax, got {a} >= {b}")));
        }
    }
    let values: Vec<f64> = map.data().iter().map(|v| v.as_f64()).collect();
    let finite = || values.iter().copied().filter(|v| v.is_finite());
    let s: fn(f64) -> f64 = match scale {
        Scale::Linear => |v| v,
        Scale::Log10 => f64::log10,
    };
    let floor = match scale {
        Scale::Linear => f64::NEG_INFINITY,
        Scale::Log10 => match vmin {
            Some(v) if v <= 0.0 => return Err(Error::arg("log scale needs a positive vmin")),
            Some(v) => v,
            None => match finite().filter(|&v| v > 0.0).reduce(f64::min) {
                Some(v) => v,
                None => {
                    return Ok(Image8 {
                        width: map.nx(),
                        height: map.ny(),
                        channels: 1,
                        pixels: vec![0; values.len()],
                    })
                }
            },
        },
    };
    let lo = vmin.unwrap_or_else(|| finite().map(|v| v.max(floor)).reduce(f64::min).unwrap_or(0.0));
    let hi = vmax.unwrap_or_else(|| finite().map(|v| v.max(floor)).reduce(f64::max).unwrap_or(0.0));
    let (slo, shi) = (s(lo.max(floor)), s(hi.max(floor)));
    let span = shi - slo;
    let pixels = values
        .iter()
        .map(|&v| {
            if !v.is_finite() || !(span > 0.0) {
                return 0;
            }
            let t = (s(v.max(floor)) - slo) / span;
            (t.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    Ok(Image8 {
        width: map.nx(),
        height: map.ny(),
        channels: 1,
        pixels,
    })
}

/// Anchors of the built-in dark-to-bright colormap.
const ANCHORS: [[f64; 3]; 9] = [
    [0.0, 0.0, 4.0],
    [31.0, 12.0, 72.0],
    [85.0, 15.0, 109.0],
    [136.0, 34.0, 106.0],
    [186.0, 54.0, 85.0],
    [227.0, 89.0, 51.0],
    [249.0, 140.0, 10.0],
    [249.0, 201.0, 50.0],
    [252.0, 255.0, 164.0],
];

/// 256-entry RGB table interpolated between [`ANCHORS`].
pub fn colormap() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    let segs = (ANCHORS.len() - 1) as f64;
    for (i, entry) in lut.iter_mut().enumerate() {
        let t = i as f64 / 255.0 * segs;
        let k = (t.floor() as usize).min(ANCHORS.len() - 2);
        let f = t - k as f64;
        for c in 0..3 {
            entry[c] = (ANCHORS[k][c] * (1.0 - f) + ANCHORS[k + 1][c] * f).round() as u8;
        }
    }
    lut
}
