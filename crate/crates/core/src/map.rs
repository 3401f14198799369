//! Raw render outputs: per-pixel accumulated values and per-pixel AMR levels.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major image of accumulated values; row 0 is the bottom of the frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarMap<T> {
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Real> ScalarMap<T> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self::filled(nx, ny, T::zero())
    }

    pub fn filled(nx: usize, ny: usize, v: T) -> Self {
        Self {
            nx,
            ny,
            data: vec![v; nx * ny],
        }
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::arg(format!(
                "{} values for a {nx}x{ny} map",
                data.len()
            )));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, px: usize, py: usize) -> T {
        self.data[py * self.nx + px]
    }

    #[inline]
    pub fn set(&mut self, px: usize, py: usize, v: T) {
        self.data[py * self.nx + px] = v;
    }

    #[inline]
    pub fn add_at(&mut self, px: usize, py: usize, v: T) {
        self.data[py * self.nx + px] += v;
    }

    /// Left-to-right, bottom-to-top sum.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_shape(other.shape())?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// Elementwise max.
    pub fn max_assign(&mut self, other: &Self) -> Result<()> {
        self.check_shape(other.shape())?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a = a.max(b));
        Ok(())
    }

    pub(crate) fn check_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() != other {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other,
            });
        }
        Ok(())
    }

    /// Copies `src` into the rectangle starting at `(x0, y0)`.
    pub fn blit(&mut self, src: &Self, x0: usize, y0: usize) -> Result<()> {
        if x0 + src.nx > self.nx || y0 + src.ny > self.ny {
            return Err(Error::arg("blit rectangle exceeds the destination"));
        }
        for y in 0..src.ny {
            let d = (y0 + y) * self.nx + x0;
            self.data[d..d + src.nx].copy_from_slice(&src.data[y * src.nx..(y + 1) * src.nx]);
        }
        Ok(())
    }

    /// Finite minimum and maximum, `None` when nothing is finite.
    pub fn finite_range(&self) -> Option<(T, T)> {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// FMAP encoding: `"FMAP"`, u32 nx, u32 ny, then `nx·ny` little-endian
    /// f64 values row by row.
    pub fn write_fmap(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(b"FMAP")?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_fmap_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.data.len());
        self.write_fmap(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_fmap(mut r: impl Read) -> Result<Self> {
        let fail = |msg: String| Error::Format {
            path: "<fmap>".into(),
            msg,
        };
        let mut head = [0u8; 12];
        r.read_exact(&mut head)
            .map_err(|e| fail(format!("short header: {e}")))?;
        if &head[0..4] != b"FMAP" {
            return Err(fail("bad magic".into()));
        }
        let nx = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        let ny = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)
            .map_err(|e| fail(format!("read failed: {e}")))?;
        if body.len() != nx * ny * 8 {
            return Err(fail(format!(
                "{} payload bytes for a {nx}x{ny} map",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(Self { nx, ny, data })
    }
}

/// Coarsest AMR level that contributed to each pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelMap {
    nx: usize,
    ny: usize,
    data: Vec<u8>,
}

impl LevelMap {
    /// Marks a pixel whose ray touched no data.
    pub const MISS: u8 = u8::MAX;

    pub fn new(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![Self::MISS; nx * ny],
        }
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::arg("level map size mismatch"));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, px: usize, py: usize) -> Option<u8> {
        let l = self.data[py * self.nx + px];
        (l != Self::MISS).then_some(l)
    }

    #[inline]
    pub fn set(&mut self, px: usize, py: usize, level: u8) {
        self.data[py * self.nx + px] = level;
    }

    /// Elementwise minimum; `MISS` is the identity.
    pub fn min_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a = (*a).min(b));
        Ok(())
    }

    pub fn blit(&mut self, src: &Self, x0: usize, y0: usize) {
        for y in 0..src.ny {
            let d = (y0 + y) * self.nx + x0;
            self.data[d..d + src.nx].copy_from_slice(&src.data[y * src.nx..(y + 1) * src.nx]);
        }
    }

    /// Distinct levels present, ascending, `MISS` excluded.
    pub fn distinct_levels(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.data {
            seen[l as usize] = true;
        }
        (0..255u8).filter(|&l| seen[l as usize]).collect()
    }
}
