//! Orthographic camera: image geometry, level-of-detail cap, projection and rays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

/// Orthographic view of a slab of thickness `depth` centred on `center`.
///
/// Serialized as `{center, view, up, extent, depth, nx, ny}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct Camera<T> {
    pub center: Vec3<T>,
    pub view: Vec3<T>,
    pub up: Vec3<T>,
    /// Physical width of the field of view.
    pub extent: T,
    /// Integration length along `view`.
    pub depth: T,
    pub nx: usize,
    pub ny: usize,
}

/// A ray with parameter range `[0, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub dir: Vec3<T>,
    pub t_max: T,
}

impl<T: Real> Ray<T> {
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.dir * t
    }
}

/// Image-plane coordinates: offsets along right and true-up, depth along view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected<T> {
    pub u: T,
    pub v: T,
    pub w: T,
}

impl<T: Real> Camera<T> {
    /// Camera looking at the whole box `[0, box_len]^3` along `+z`.
    pub fn full_box(box_len: T, nx: usize, ny: usize) -> Self {
        let half = T::of(0.5);
        Self {
            center: Vec3::splat(box_len * half),
            view: Vec3::new(T::zero(), T::zero(), T::one()),
            up: Vec3::new(T::zero(), T::one(), T::zero()),
            extent: box_len,
            depth: box_len,
            nx,
            ny,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tol = T::of(1e-6);
        if !self.center.is_finite() {
            return Err(Error::arg("camera center must be finite"));
        }
        if (self.view.norm() - T::one()).abs() > tol {
            return Err(Error::arg("camera view must be a unit vector"));
        }
        if (self.up.norm() - T::one()).abs() > tol {
            return Err(Error::arg("camera up must be a unit vector"));
        }
        if !(self.up.cross(self.view).norm() > tol) {
            return Err(Error::arg("camera up must not be parallel to view"));
        }
        if !(self.extent > T::zero() && self.extent.is_finite()) || !(self.depth > T::zero() && self.depth.is_finite()) {
            return Err(Error::arg("camera extent and depth must be positive"));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::arg("image must have at least one pixel"));
        }
        Ok(())
    }

    /// Normalizes `view` and `up` in place before validating, for cameras
    /// coming from user input.
    pub fn normalized(mut self) -> Result<Self> {
        self.view = self.view.normalized().ok_or_else(|| Error::arg("zero view vector"))?;
        self.up = self.up.normalized().ok_or_else(|| Error::arg("zero up vector"))?;
        self.validate()?;
        Ok(self)
    }

    /// `normalize(up × view)`.
    pub fn right(&self) -> Vec3<T> {
        self.up.cross(self.view).normalized().expect("up parallel to view")
    }

    /// `view × right`, the up axis orthogonalized against `view`.
    pub fn true_up(&self) -> Vec3<T> {
        self.view.cross(self.right())
    }

    /// Physical size of one (square) pixel.
    pub fn pixel_size(&self) -> T {
        self.extent / T::of_usize(self.nx)
    }

    /// Physical height of the field of view.
    pub fn extent_v(&self) -> T {
        self.extent * T::of_usize(self.ny) / T::of_usize(self.nx)
    }

    /// Level-of-detail cap: the first level whose cells are no wider than a
    /// pixel, clamped to `levelmax`. Cells finer than that are never read.
    pub fn level_cap(&self, box_len: T, levelmax: u8) -> u8 {
        let pix = self.pixel_size();
        let mut level = 0u8;
        let mut size = box_len;
        while level < levelmax && size > pix {
            level += 1;
            size = box_len / T::of((1u64 << level) as f64);
        }
        level
    }

    /// [`Self::level_cap`] raised to at least `levelmin`.
    pub fn effective_level_cap(&self, box_len: T, levelmin: u8, levelmax: u8) -> u8 {
        self.level_cap(box_len, levelmax).max(levelmin)
    }

    pub fn project(&self, p: Vec3<T>) -> Projected<T> {
        let d = p - self.center;
        Projected {
            u: d.dot(self.right()),
            v: d.dot(self.true_up()),
            w: d.dot(self.view),
        }
    }

    pub fn unproject(&self, q: Projected<T>) -> Vec3<T> {
        self.center + self.right() * q.u + self.true_up() * q.v + self.view * q.w
    }

    /// Pixel column and row containing `(u, v)`; row 0 is the bottom row.
    /// Out-of-frame points give out-of-range indices.
    pub fn pixel_of(&self, u: T, v: T) -> (i64, i64) {
        let half = T::of(0.5);
        let pix = self.pixel_size();
        let px = ((u + self.extent * half) / pix).floor();
        let py = ((v + self.extent_v() * half) / pix).floor();
        (to_i64(px), to_i64(py))
    }

    /// Image-plane coordinates of a pixel center.
    pub fn pixel_center(&self, px: usize, py: usize) -> (T, T) {
        let half = T::of(0.5);
        let pix = self.pixel_size();
        (
            (T::of_usize(px) + half) * pix - self.extent * half,
            (T::of_usize(py) + half) * pix - self.extent_v() * half,
        )
    }

    /// Ray through the center of pixel `(px, py)`, starting on the front
    /// clipping plane and running `depth` along `view`.
    pub fn pixel_ray(&self, px: usize, py: usize) -> Result<Ray<T>> {
        if px >= self.nx || py >= self.ny {
            return Err(Error::arg(format!(
                "pixel ({px}, {py}) outside {}x{} image",
                self.nx, self.ny
            )));
        }
        Ok(self.pixel_ray_unchecked(px, py, self.right(), self.true_up()))
    }

    #[inline]
    pub(crate) fn pixel_ray_unchecked(&self, px: usize, py: usize, right: Vec3<T>, up: Vec3<T>) -> Ray<T> {
        let (u, v) = self.pixel_center(px, py);
        let half = T::of(0.5);
        Ray {
            origin: self.center + right * u + up * v - self.view * (self.depth * half),
            dir: self.view,
            t_max: self.depth,
        }
    }
}

fn to_i64<T: Real>(v: T) -> i64 {
    v.to_i64().unwrap_or(if v > T::zero() { i64::MAX } else { i64::MIN })
}
