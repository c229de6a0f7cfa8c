//! Three-dimensional data-cubes (video frames or spectral channels).
//!
//! Storage follows the vectorization used throughout the crate: frames are
//! concatenated in order, and within a frame the columns are stacked, so the
//! element `(i, j, k)` lives at `k * nx * ny + j * nx + i`.

use crate::error::{Result, SciError};

/// Default declared peak value of a signal cube.
pub const DEFAULT_PEAK: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    nx: usize,
    ny: usize,
    nt: usize,
    peak: f64,
    data: Vec<f64>,
}

impl DataCube {
    pub fn zeros(nx: usize, ny: usize, nt: usize) -> Result<Self> {
        check_dims(nx, ny, nt)?;
        Ok(Self {
            nx,
            ny,
            nt,
            peak: DEFAULT_PEAK,
            data: vec![0.0; nx * ny * nt],
        })
    }

    pub fn filled(nx: usize, ny: usize, nt: usize, value: f64) -> Result<Self> {
        let mut cube = Self::zeros(nx, ny, nt)?;
        cube.data.fill(value);
        Ok(cube)
    }

    /// Wraps `data` laid out in vec order.
    pub fn from_vec(nx: usize, ny: usize, nt: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(nx, ny, nt)?;
        if data.len() != nx * ny * nt {
            return Err(SciError::mismatch(format!(
                "cube {nx}x{ny}x{nt} needs {} values, got {}",
                nx * ny * nt,
                data.len()
            )));
        }
        Ok(Self {
            nx,
            ny,
            nt,
            peak: DEFAULT_PEAK,
            data,
        })
    }

    /// Builds a cube from row-major 2D frames (`frames[k][i][j]`), the layout
    /// humans usually write matrices in.
    pub fn from_frames(frames: &[Vec<Vec<f64>>]) -> Result<Self> {
        let nt = frames.len();
        let nx = frames.first().map_or(0, |f| f.len());
        let ny = frames
            .first()
            .and_then(|f| f.first())
            .map_or(0, |row| row.len());
        let mut cube = Self::zeros(nx, ny, nt)?;
        for (k, frame) in frames.iter().enumerate() {
            if frame.len() != nx || frame.iter().any(|row| row.len() != ny) {
                return Err(SciError::mismatch(format!("frame {k} is not {nx}x{ny}")));
            }
            for (i, row) in frame.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    cube.set(i, j, k, v);
                }
            }
        }
        Ok(cube)
    }

    pub fn from_fn(
        nx: usize,
        ny: usize,
        nt: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut cube = Self::zeros(nx, ny, nt)?;
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    cube.data[k * nx * ny + j * nx + i] = f(i, j, k);
                }
            }
        }
        Ok(cube)
    }

    pub fn with_peak(mut self, peak: f64) -> Self {
        self.peak = peak;
        self
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nt)
    }

    /// Declared peak amplitude (the bound used by PSNR and the recovery theorem).
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn frame_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        k * self.nx * self.ny + j * self.nx + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn frame_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn same_dims(&self, other: &DataCube) -> bool {
        self.dims() == other.dims()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Checks the signal-role range `0 <= v <= peak`.
    pub fn validate_signal(&self) -> Result<()> {
        if let Some(pos) = self
            .data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > self.peak)
        {
            return Err(SciError::invalid(format!(
                "signal value {} at flat index {pos} is outside [0, {}]",
                self.data[pos], self.peak
            )));
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Elementwise clamp into `[lo, hi]`.
    pub fn clamped(&self, lo: f64, hi: f64) -> DataCube {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        out
    }
}

pub(crate) fn check_dims(nx: usize, ny: usize, nt: usize) -> Result<()> {
    if nx == 0 || ny == 0 || nt == 0 {
        return Err(SciError::invalid(format!(
            "dimensions must be >= 1, got {nx}x{ny}x{nt}"
        )));
    }
    Ok(())
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
