//! Modulation mask stacks.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

use crate::cube::check_dims;
use crate::error::{Result, SciError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// Binary {0,1} entries, each 1 with probability `p`.
    Bernoulli { p: f64 },
    /// Standard normal entries.
    Gaussian,
    /// One Bernoulli(0.5) base mask, frame `k` cyclically shifted down by `k * step` rows.
    ShiftedBase { step: usize },
    /// Bernoulli entries, then every pixel left closed in all frames is
    /// opened in one seeded frame so that `ΦΦᵀ` is invertible.
    CoveredBernoulli { p: f64 },
    /// {-1,+1} entries: the effective mask of a dual-path conjugate-mask subtraction.
    Conjugate { p: f64 },
    /// Values supplied by the caller or loaded from a file.
    Custom,
}

impl MaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            MaskKind::Bernoulli { .. } => "bernoulli",
            MaskKind::Gaussian => "gaussian",
            MaskKind::ShiftedBase { .. } => "shifted-base",
            MaskKind::CoveredBernoulli { .. } => "covered-bernoulli",
            MaskKind::Conjugate { .. } => "conjugate",
            MaskKind::Custom => "custom",
        }
    }
}

/// Per-frame masks `M_k`, stored in the same vec order as [`crate::DataCube`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStack {
    nx: usize,
    ny: usize,
    nt: usize,
    values: Vec<f64>,
    kind: MaskKind,
    seed: u64,
}

/// Draws a seeded mask stack.
pub fn make_masks(kind: MaskKind, nx: usize, ny: usize, nt: usize, seed: u64) -> Result<MaskStack> {
    check_dims(nx, ny, nt)?;
    let n = nx * ny * nt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = match kind {
        MaskKind::Bernoulli { p } => {
            let dist = bernoulli(p)?;
            (0..n)
                .map(|_| if dist.sample(&mut rng) { 1.0 } else { 0.0 })
                .collect()
        }
        MaskKind::CoveredBernoulli { p } => {
            let dist = bernoulli(p)?;
            let mut values: Vec<f64> = (0..n)
                .map(|_| if dist.sample(&mut rng) { 1.0 } else { 0.0 })
                .collect();
            let frame = nx * ny;
            for pix in 0..frame {
                if (0..nt).all(|k| values[k * frame + pix] == 0.0) {
                    let k = rng.random_range(0..nt);
                    values[k * frame + pix] = 1.0;
                }
            }
            values
        }
        MaskKind::Conjugate { p } => {
            let dist = bernoulli(p)?;
            (0..n)
                .map(|_| if dist.sample(&mut rng) { 1.0 } else { -1.0 })
                .collect()
        }
        MaskKind::Gaussian => (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect(),
        MaskKind::ShiftedBase { step } => {
            if step == 0 {
                return Err(SciError::invalid("shifted-base step must be >= 1"));
            }
            let dist = bernoulli(0.5)?;
            let base: Vec<f64> = (0..nx * ny)
                .map(|_| if dist.sample(&mut rng) { 1.0 } else { 0.0 })
                .collect();
            let mut values = vec![0.0; n];
            for k in 0..nt {
                let shift = (k * step) % nx;
                for j in 0..ny {
                    for i in 0..nx {
                        let src = (i + nx - shift) % nx;
                        values[k * nx * ny + j * nx + i] = base[j * nx + src];
                    }
                }
            }
            values
        }
        MaskKind::Custom => {
            return Err(SciError::invalid(
                "custom masks are built with MaskStack::from_values",
            ))
        }
    };
    Ok(MaskStack {
        nx,
        ny,
        nt,
        values,
        kind,
        seed,
    })
}

fn bernoulli(p: f64) -> Result<Bernoulli> {
    if !(p > 0.0 && p < 1.0) {
        return Err(SciError::invalid(format!(
            "bernoulli probability must lie in (0,1), got {p}"
        )));
    }
    Bernoulli::new(p).map_err(|e| SciError::invalid(e.to_string()))
}

impl MaskStack {
    pub fn from_values(nx: usize, ny: usize, nt: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(nx, ny, nt)?;
        if values.len() != nx * ny * nt {
            return Err(SciError::mismatch(format!(
                "mask stack {nx}x{ny}x{nt} needs {} values, got {}",
                nx * ny * nt,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SciError::invalid("mask values must be finite"));
        }
        Ok(Self {
            nx,
            ny,
            nt,
            values,
            kind: MaskKind::Custom,
            seed: 0,
        })
    }

    /// Row-major frames, `frames[k][i][j]`.
    pub fn from_frames(frames: &[Vec<Vec<f64>>]) -> Result<Self> {
        let cube = crate::DataCube::from_frames(frames)?;
        let (nx, ny, nt) = cube.dims();
        Self::from_values(nx, ny, nt, cube.into_vec())
    }

    /// Replicates one physical `nx x ny` mask (vec order) across `nt` channels.
    pub fn replicate(nx: usize, ny: usize, nt: usize, physical: &[f64]) -> Result<Self> {
        if physical.len() != nx * ny {
            return Err(SciError::mismatch(format!(
                "physical mask needs {} values, got {}",
                nx * ny,
                physical.len()
            )));
        }
        let values = (0..nt).flat_map(|_| physical.iter().copied()).collect();
        Self::from_values(nx, ny, nt, values)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nt)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[k * self.nx * self.ny + j * self.nx + i]
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.nx * self.ny;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}
