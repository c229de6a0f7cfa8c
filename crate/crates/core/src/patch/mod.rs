//! Patch-based reconstruction.
//!
//! CACTI sensing is spatially decoupled: a `P x P` window of the detector
//! only sees the `P x P x Nt` block of the cube behind it, so each block can
//! be inverted independently and the overlapping estimates averaged.

pub mod desci;
pub mod gmm;
pub mod sparse;
pub mod wnnm;

use nalgebra::{DMatrix, DVector};

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::operator::{Measurement, SensingMode, SensingOperator};

pub use desci::desci_solve;
pub use gmm::{gmm_posterior_patch, gmm_reconstruct, gmm_train, GmmModel, GmmPosterior, GmmTrainOutput};
pub use sparse::{sparse_code_patch, sparse_reconstruct, DctDictionary, IstaOptions, SparseCode};
pub use wnnm::{geometric_schedule, patch_match, svt_weighted, wnnm_group, GroupMatchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchConfig {
    /// Spatial side `P`.
    pub size: usize,
    /// Frames per patch; full-depth patches use `depth = nt`.
    pub depth: usize,
    pub stride: usize,
}

impl PatchConfig {
    pub fn full_depth(size: usize, nt: usize, stride: usize) -> Self {
        Self {
            size,
            depth: nt,
            stride,
        }
    }

    pub fn validate(&self, dims: (usize, usize, usize)) -> Result<()> {
        let (nx, ny, nt) = dims;
        if self.size == 0 || self.size > nx.min(ny) {
            return Err(SciError::invalid(format!(
                "patch size {} must lie in [1, {}]",
                self.size,
                nx.min(ny)
            )));
        }
        if self.depth == 0 || self.depth > nt {
            return Err(SciError::invalid(format!(
                "patch depth {} must lie in [1, {nt}]",
                self.depth
            )));
        }
        if self.stride == 0 || self.stride > self.size {
            return Err(SciError::invalid(format!(
                "stride {} must lie in [1, {}]",
                self.stride, self.size
            )));
        }
        Ok(())
    }

    pub fn patch_len(&self) -> usize {
        self.size * self.size * self.depth
    }

    /// Corner positions: every `stride` plus the last valid corner, so every
    /// pixel is covered.
    pub fn positions(&self, dims: (usize, usize, usize)) -> Vec<PatchIndex> {
        let (nx, ny, nt) = dims;
        let is = axis_positions(nx, self.size, self.stride);
        let js = axis_positions(ny, self.size, self.stride);
        let ks = axis_positions(nt, self.depth, self.depth);
        let mut out = Vec::with_capacity(is.len() * js.len() * ks.len());
        for &k in &ks {
            for &j in &js {
                for &i in &is {
                    out.push(PatchIndex { i, j, k });
                }
            }
        }
        out
    }
}

pub(crate) fn axis_positions(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let last = len - size;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Top-left-front corner of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub index: PatchIndex,
    /// Values in patch vec order: frame outer, column-major inside.
    pub data: Vec<f64>,
}

pub(crate) fn read_patch(cube: &DataCube, at: PatchIndex, size: usize, depth: usize, out: &mut [f64]) {
    let mut n = 0;
    for kk in 0..depth {
        for jj in 0..size {
            let start = cube.index(at.i, at.j + jj, at.k + kk);
            out[n..n + size].copy_from_slice(&cube.as_slice()[start..start + size]);
            n += size;
        }
    }
}

pub fn extract_patches(cube: &DataCube, config: &PatchConfig) -> Result<Vec<Patch>> {
    config.validate(cube.dims())?;
    Ok(config
        .positions(cube.dims())
        .into_iter()
        .map(|index| {
            let mut data = vec![0.0; config.patch_len()];
            read_patch(cube, index, config.size, config.depth, &mut data);
            Patch { index, data }
        })
        .collect())
}

/// Overlap-averaging accumulator.
pub(crate) struct Accumulator {
    sum: DataCube,
    weight: Vec<f64>,
}

impl Accumulator {
    pub(crate) fn new(dims: (usize, usize, usize)) -> Result<Self> {
        let sum = DataCube::zeros(dims.0, dims.1, dims.2)?;
        let n = sum.as_slice().len();
        Ok(Self {
            sum,
            weight: vec![0.0; n],
        })
    }

    pub(crate) fn add(&mut self, at: PatchIndex, size: usize, depth: usize, data: &[f64]) {
        let mut n = 0;
        for kk in 0..depth {
            for jj in 0..size {
                let start = self.sum.index(at.i, at.j + jj, at.k + kk);
                for ii in 0..size {
                    self.sum.as_mut_slice()[start + ii] += data[n + ii];
                    self.weight[start + ii] += 1.0;
                }
                n += size;
            }
        }
    }

    /// Averages; pixels no patch touched take the `fallback` value.
    pub(crate) fn finish(self, fallback: Option<&DataCube>) -> DataCube {
        let mut out = self.sum;
        for (idx, (v, w)) in out.as_mut_slice().iter_mut().zip(&self.weight).enumerate() {
            if *w > 0.0 {
                *v /= w;
            } else {
                *v = fallback.map_or(0.0, |f| f.as_slice()[idx]);
            }
        }
        out
    }
}

pub fn aggregate_patches(
    patches: &[Patch],
    dims: (usize, usize, usize),
    config: &PatchConfig,
) -> Result<DataCube> {
    config.validate(dims)?;
    let mut acc = Accumulator::new(dims)?;
    for p in patches {
        if p.data.len() != config.patch_len() {
            return Err(SciError::mismatch("patch length does not match config"));
        }
        acc.add(p.index, config.size, config.depth, &p.data);
    }
    Ok(acc.finish(None))
}

/// Number of patches covering each pixel, in vec order.
pub fn coverage_counts(dims: (usize, usize, usize), config: &PatchConfig) -> Result<Vec<f64>> {
    config.validate(dims)?;
    let mut acc = Accumulator::new(dims)?;
    let zeros = vec![0.0; config.patch_len()];
    for at in config.positions(dims) {
        acc.add(at, config.size, config.depth, &zeros);
    }
    Ok(acc.weight)
}

/// Patch-local sensing matrix `Φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchSensing {
    Dense(DMatrix<f64>),
    /// `[D_1 … D_depth]` with `D_k` diagonal: `masks[k * pixels + p]`.
    Blocks { pixels: usize, masks: Vec<f64> },
}

impl PatchSensing {
    pub fn rows(&self) -> usize {
        match self {
            PatchSensing::Dense(m) => m.nrows(),
            PatchSensing::Blocks { pixels, .. } => *pixels,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            PatchSensing::Dense(m) => m.ncols(),
            PatchSensing::Blocks { masks, .. } => masks.len(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            PatchSensing::Dense(m) => m * x,
            PatchSensing::Blocks { pixels, masks } => {
                let mut y = DVector::zeros(*pixels);
                for (l, m) in masks.iter().enumerate() {
                    y[l % pixels] += m * x[l];
                }
                y
            }
        }
    }

    pub fn apply_t(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            PatchSensing::Dense(m) => m.transpose() * y,
            PatchSensing::Blocks { pixels, masks } => {
                DVector::from_iterator(masks.len(), masks.iter().enumerate().map(|(l, m)| m * y[l % pixels]))
            }
        }
    }

    /// `Φ·B` for a matrix `B` with `cols()` rows.
    pub fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            PatchSensing::Dense(m) => m * b,
            PatchSensing::Blocks { pixels, masks } => {
                let mut out = DMatrix::zeros(*pixels, b.ncols());
                for c in 0..b.ncols() {
                    let col = b.column(c);
                    let mut dst = out.column_mut(c);
                    for (l, m) in masks.iter().enumerate() {
                        if *m != 0.0 {
                            dst[l % pixels] += m * col[l];
                        }
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            PatchSensing::Dense(m) => m.clone(),
            PatchSensing::Blocks { pixels, masks } => {
                let mut m = DMatrix::zeros(*pixels, masks.len());
                for (l, v) in masks.iter().enumerate() {
                    m[(l % pixels, l)] = *v;
                }
                m
            }
        }
    }
}

pub(crate) fn require_cacti(op: &SensingOperator, what: &str) -> Result<()> {
    match op.mode() {
        SensingMode::Cacti => Ok(()),
        SensingMode::Cassi { .. } => Err(SciError::Unsupported(format!(
            "{what} needs spatially decoupled patches and does not support cassi mode"
        ))),
    }
}

/// Sensing block and measured values behind the full-depth patch at `at`.
pub(crate) fn local_problem(
    op: &SensingOperator,
    y: &Measurement,
    at: PatchIndex,
    size: usize,
) -> (PatchSensing, DVector<f64>) {
    let (nx, _, nt) = op.signal_dims();
    let pixels = size * size;
    let mut masks = vec![0.0; pixels * nt];
    let mut yl = DVector::zeros(pixels);
    for k in 0..nt {
        let frame = op.masks().frame(k);
        for jj in 0..size {
            for ii in 0..size {
                let p = jj * size + ii;
                let g = (at.j + jj) * nx + at.i + ii;
                masks[k * pixels + p] = frame[g];
                if k == 0 {
                    yl[p] = y.as_slice()[g];
                }
            }
        }
    }
    (PatchSensing::Blocks { pixels, masks }, yl)
}

pub(crate) fn check_patch_problem(
    op: &SensingOperator,
    y: &Measurement,
    config: &PatchConfig,
    what: &str,
) -> Result<()> {
    require_cacti(op, what)?;
    if (y.rows(), y.cols()) != op.measurement_dims() {
        return Err(SciError::mismatch("measurement does not match operator"));
    }
    let dims = op.signal_dims();
    config.validate(dims)?;
    if config.depth != dims.2 {
        return Err(SciError::invalid(format!(
            "{what} needs full-depth patches (depth {} != nt {})",
            config.depth, dims.2
        )));
    }
    Ok(())
}
