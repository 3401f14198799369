//! Deterministic exponential-disk galaxy used as a stand-in dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amr::{AmrTree, CellCoord, FieldDesc};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

pub const DENSITY_FIELD: &str = "density";

/// Generator parameters. Lengths are fractions of `box_len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    pub seed: u64,
    pub levelmin: u8,
    pub levelmax: u8,
    pub box_len: f64,
    /// Disk scale radius.
    pub r_d: f64,
    /// Disk scale height.
    pub z_d: f64,
    /// Central density.
    pub rho0: f64,
    pub background: f64,
    /// A cell splits when `rho(center) * volume > m_ref`.
    pub m_ref: f64,
    /// Number of seeded Gaussian clumps added on top of the smooth disk.
    pub clumps: u32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            seed: 42,
            levelmin: 3,
            levelmax: 6,
            box_len: 1.0,
            r_d: 0.12,
            z_d: 0.04,
            rho0: 100.0,
            background: 0.1,
            m_ref: 2.0e-5,
            clumps: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.r_d) || !unit(self.z_d) {
            return Err(Error::arg("r_d and z_d must lie in (0, 1)"));
        }
        if !(self.background > 0.0 && self.rho0 > self.background) {
            return Err(Error::arg("need rho0 > background > 0"));
        }
        if self.levelmin > self.levelmax || self.levelmax > crate::amr::MAX_LEVEL {
            return Err(Error::arg("need levelmin <= levelmax <= 30"));
        }
        if !(self.box_len > 0.0 && self.box_len.is_finite()) {
            return Err(Error::arg("box_len must be positive"));
        }
        if self.m_ref.is_nan() || self.m_ref < 0.0 {
            return Err(Error::arg("m_ref must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Clump {
    center: [f64; 3],
    width: f64,
    amplitude: f64,
}

/// Analytic density model behind [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticDisk {
    params: GeneratorParams,
    clumps: Vec<Clump>,
}

impl SyntheticDisk {
    pub fn new(params: GeneratorParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let l = params.box_len;
        let clumps = (0..params.clumps)
            .map(|_| {
                let r = params.r_d * l * rng.random_range(0.0..3.0);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let z = params.z_d * l * rng.random_range(-1.0..1.0);
                Clump {
                    center: [0.5 * l + r * phi.cos(), 0.5 * l + r * phi.sin(), 0.5 * l + z],
                    width: params.z_d * l * rng.random_range(0.5..2.0),
                    amplitude: params.rho0 * rng.random_range(0.05..0.5),
                }
            })
            .collect();
        Ok(Self { params, clumps })
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    /// `rho0·exp(−r/r_d)·exp(−|z|/z_d) + background`, plus clumps.
    pub fn density(&self, p: [f64; 3]) -> f64 {
        let g = &self.params;
        let l = g.box_len;
        let (dx, dy, dz) = (p[0] - 0.5 * l, p[1] - 0.5 * l, p[2] - 0.5 * l);
        let r = (dx * dx + dy * dy).sqrt();
        let mut rho = g.rho0 * (-r / (g.r_d * l)).exp() * (-dz.abs() / (g.z_d * l)).exp() + g.background;
        for c in &self.clumps {
            let d2: f64 = (0..3).map(|a| (p[a] - c.center[a]).powi(2)).sum();
            rho += c.amplitude * (-0.5 * d2 / (c.width * c.width)).exp();
        }
        rho
    }

    /// Refinement criterion for a cell below `levelmax`.
    pub fn refines(&self, c: CellCoord) -> bool {
        let l = self.params.box_len;
        let size = c.cell_size(l);
        let center: Vec3<f64> = c.center(l);
        self.density(center.to_array()) * size * size * size > self.params.m_ref
    }

    pub fn build<T: Real>(&self) -> Result<AmrTree<T>> {
        let g = &self.params;
        let l = g.box_len;
        AmrTree::build(
            T::of(l),
            g.levelmin,
            g.levelmax,
            vec![FieldDesc::new(DENSITY_FIELD, true)],
            |c| self.refines(c),
            |c, v| v[0] = T::of(self.density(c.center::<f64>(l).to_array())),
        )
    }
}

/// Builds the synthetic galaxy-disk tree; identical for identical params.
pub fn generate_synthetic<T: Real>(params: &GeneratorParams) -> Result<AmrTree<T>> {
    SyntheticDisk::new(params.clone())?.build()
}
