//! Splatting renderer.
//!
//! Each AMR level gets its own map: cell centers are binned into a weighted
//! 2D histogram, which is then convolved with a Gaussian whose width follows
//! the projected cell size. The convolution is a product in frequency space
//! on a zero-padded grid. Level maps are summed in ascending level order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::amr::{AmrTree, CellCoord, NodeRef};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::map::ScalarMap;
use crate::scalar::Real;

/// Kernel support in units of σ.
pub const KERNEL_RADIUS_SIGMAS: f64 = 4.0;

/// Histogram weight of one cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplatWeight {
    /// `value × cell_volume / pixel_area`: each level approximates the
    /// column integral, whatever its cells' size in pixels.
    #[default]
    Column,
    /// `value × cell_size`; matches `Column` for pixel-sized cells only.
    CellSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplatOptions {
    /// σ as a multiple of the projected cell size in pixels.
    pub kernel_factor: f64,
    /// Random shift amplitude in units of cell size, in `[0, 0.5]`.
    pub shift: f64,
    pub seed: u64,
    pub weight: SplatWeight,
}

impl Default for SplatOptions {
    fn default() -> Self {
        Self {
            kernel_factor: 0.6,
            shift: 0.0,
            seed: 0,
            weight: SplatWeight::Column,
        }
    }
}

impl SplatOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_factor > 0.0 && self.kernel_factor.is_finite()) {
            return Err(Error::arg("kernel factor must be positive"));
        }
        if !(0.0..=0.5).contains(&self.shift) {
            return Err(Error::arg("shift amplitude must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

/// Truncated, unit-mass, separable Gaussian sampled on integer offsets
/// `-radius..=radius`.
#[derive(Clone, Debug)]
pub struct GaussianKernel<T> {
    pub sigma: T,
    pub radius: usize,
    /// 1D weights, `weights[radius]` is the center tap; they sum to 1.
    pub weights: Vec<T>,
}

impl<T: Real> GaussianKernel<T> {
    pub fn new(sigma: T) -> Result<Self> {
        if !(sigma > T::zero() && sigma.is_finite()) {
            return Err(Error::arg(format!("kernel sigma must be positive, got {sigma}")));
        }
        let radius = (sigma * T::of(KERNEL_RADIUS_SIGMAS)).ceil().to_usize().unwrap_or(0).max(1);
        let two_s2 = T::of(2.0) * sigma * sigma;
        let raw: Vec<T> = (0..=2 * radius)
            .map(|i| {
                let d = T::of_usize(i) - T::of_usize(radius);
                (-(d * d) / two_s2).exp()
            })
            .collect();
        let norm = raw.iter().fold(T::zero(), |a, &b| a + b);
        let weights = raw.into_iter().map(|w| w / norm).collect();
        Ok(Self { sigma, radius, weights })
    }

    /// 2D tap at offset `(dx, dy)`.
    pub fn tap(&self, dx: isize, dy: isize) -> T {
        let r = self.radius as isize;
        if dx.abs() > r || dy.abs() > r {
            return T::zero();
        }
        self.weights[(dx + r) as usize] * self.weights[(dy + r) as usize]
    }
}

/// Smallest `2^a·3^b·5^c` that is `>= n`.
pub fn fft_friendly_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k.is_multiple_of(p) {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

/// Frequency-domain Gaussian on a zero-padded `px × py` grid.
#[derive(Clone, Debug)]
pub struct FftKernel<T> {
    pub kernel: GaussianKernel<T>,
    pub px: usize,
    pub py: usize,
    /// Row-major spectrum, `px` values per row.
    pub spectrum: Vec<Complex<T>>,
}

impl<T: Real> FftKernel<T> {
    /// Zero-frequency coefficient (the kernel's mass).
    pub fn dc(&self) -> Complex<T> {
        self.spectrum[0]
    }

    /// The spatial kernel recovered by an inverse transform.
    pub fn spatial(&self) -> Vec<Complex<T>> {
        let mut buf = self.spectrum.clone();
        fft2d(&mut buf, self.px, self.py, true);
        let n = T::of_usize(self.px * self.py);
        buf.iter_mut().for_each(|c| *c /= n);
        buf
    }
}

/// Spectrum of a unit-mass Gaussian of width `sigma_px` for convolving an
/// `nx × ny` map without wrap-around.
pub fn gaussian_kernel_fft<T: Real>(sigma_px: T, nx: usize, ny: usize) -> Result<FftKernel<T>> {
    let kernel = GaussianKernel::new(sigma_px)?;
    let r = kernel.radius;
    let px = fft_friendly_size(nx + 2 * r);
    let py = fft_friendly_size(ny + 2 * r);
    let mut spectrum = vec![Complex::new(T::zero(), T::zero()); px * py];
    for dy in -(r as isize)..=r as isize {
        let y = dy.rem_euclid(py as isize) as usize;
        for dx in -(r as isize)..=r as isize {
            let x = dx.rem_euclid(px as isize) as usize;
            spectrum[y * px + x].re = kernel.tap(dx, dy);
        }
    }
    fft2d(&mut spectrum, px, py, false);
    Ok(FftKernel { kernel, px, py, spectrum })
}

/// In-place 2D transform of a row-major `w × h` buffer (unnormalized).
fn fft2d<T: Real>(buf: &mut [Complex<T>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    row.process(buf);
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut t = transpose(buf, w, h);
    col.process(&mut t);
    let back = transpose(&t, h, w);
    buf.copy_from_slice(&back);
}

fn transpose<T: Copy>(src: &[T], w: usize, h: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for x in 0..w {
        out.extend((0..h).map(|y| src[y * w + x]));
    }
    out
}

/// Linear convolution of `map` with the kernel, values outside the map
/// taken as zero, cropped back to the map's shape.
pub fn convolve_fft<T: Real>(map: &ScalarMap<T>, kernel: &FftKernel<T>) -> Result<ScalarMap<T>> {
    let (nx, ny) = map.shape();
    let r = kernel.kernel.radius;
    if kernel.px < nx + r || kernel.py < ny + r {
        return Err(Error::arg("kernel grid too small for this map"));
    }
    let (px, py) = (kernel.px, kernel.py);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); px * py];
    for y in 0..ny {
        for x in 0..nx {
            buf[y * px + x].re = map.get(x, y);
        }
    }
    fft2d(&mut buf, px, py, false);
    buf.iter_mut().zip(&kernel.spectrum).for_each(|(a, k)| *a *= *k);
    fft2d(&mut buf, px, py, true);
    let n = T::of_usize(px * py);
    let mut out = ScalarMap::zeros(nx, ny);
    for y in 0..ny {
        for x in 0..nx {
            out.set(x, y, buf[y * px + x].re / n);
        }
    }
    Ok(out)
}

/// Adds each `(u, v, weight)` to the pixel containing it; out-of-frame
/// points are dropped. Points are accumulated in input order.
pub fn histogram_2d<T: Real>(points: impl IntoIterator<Item = (T, T, T)>, cam: &Camera<T>) -> ScalarMap<T> {
    let mut map = ScalarMap::zeros(cam.nx, cam.ny);
    for (u, v, w) in points {
        let (px, py) = cam.pixel_of(u, v);
        if px >= 0 && py >= 0 && (px as usize) < cam.nx && (py as usize) < cam.ny {
            map.add_at(px as usize, py as usize, w);
        }
    }
    map
}

/// Per-cell shift in `[-1, 1)^3`, a pure function of the seed and the cell.
fn cell_jitter(seed: u64, c: CellCoord) -> [f64; 3] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8] = c.level;
    key[9..13].copy_from_slice(&c.ix.to_le_bytes());
    key[13..17].copy_from_slice(&c.iy.to_le_bytes());
    key[17..21].copy_from_slice(&c.iz.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    [
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    ]
}

/// Splats cells that all share one level.
pub fn splat_level<T: Real>(
    cells: &[NodeRef<'_, T>],
    field: usize,
    cam: &Camera<T>,
    opts: &SplatOptions,
) -> Result<ScalarMap<T>> {
    opts.validate()?;
    let Some(first) = cells.first() else {
        return Ok(ScalarMap::zeros(cam.nx, cam.ny));
    };
    let level = first.level();
    if let Some(bad) = cells.iter().find(|c| c.level() != level) {
        return Err(Error::arg(format!(
            "splat_level got mixed levels {level} and {}",
            bad.level()
        )));
    }
    let size = first.cell_size();
    let shift = T::of(opts.shift) * size;
    let scale = match opts.weight {
        SplatWeight::Column => {
            let r = size / cam.pixel_size();
            size * r * r
        }
        SplatWeight::CellSize => size,
    };
    let points = cells.iter().map(|c| {
        let mut p = c.center();
        if opts.shift > 0.0 {
            let j = cell_jitter(opts.seed, c.coord());
            p = p + Vec3::new(T::of(j[0]), T::of(j[1]), T::of(j[2])) * shift;
        }
        let q = cam.project(p);
        (q.u, q.v, c.value(field) * scale)
    });
    let hist = histogram_2d(points, cam);
    let sigma = T::of(opts.kernel_factor) * size / cam.pixel_size();
    let kernel = gaussian_kernel_fft(sigma, cam.nx, cam.ny)?;
    convolve_fft(&hist, &kernel)
}

/// Sum over levels of the per-level splat maps, restricted to capped cells
/// whose centers lie in the camera slab `-depth/2 <= w < depth/2`.
pub fn render_splat<T: Real>(tree: &AmrTree<T>, cam: &Camera<T>, field: &str, opts: &SplatOptions) -> Result<ScalarMap<T>> {
    let f = tree.field_index(field)?;
    cam.validate()?;
    let cap = cam.effective_level_cap(tree.box_len(), tree.levelmin(), tree.levelmax());
    render_splat_capped(tree, cam, f, opts, cap)
}

pub fn render_splat_capped<T: Real>(
    tree: &AmrTree<T>,
    cam: &Camera<T>,
    field: usize,
    opts: &SplatOptions,
    level_cap: u8,
) -> Result<ScalarMap<T>> {
    opts.validate()?;
    let half = cam.depth * T::of(0.5);
    let mut by_level: Vec<Vec<NodeRef<'_, T>>> = vec![Vec::new(); level_cap as usize + 1];
    for c in tree.cells_at_cap(level_cap) {
        let w = cam.project(c.center()).w;
        if w >= -half && w < half {
            by_level[c.level() as usize].push(c);
        }
    }
    let mut total = ScalarMap::zeros(cam.nx, cam.ny);
    for cells in by_level.iter().filter(|c| !c.is_empty()) {
        total.add_assign(&splat_level(cells, field, cam, opts)?)?;
    }
    Ok(total)
}
