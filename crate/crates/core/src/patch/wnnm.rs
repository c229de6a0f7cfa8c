//! Block matching and weighted nuclear norm shrinkage of patch groups.

use nalgebra::{DMatrix, SVD};
use rayon::prelude::*;

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::patch::{axis_positions, read_patch, Accumulator, PatchIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMatchConfig {
    /// Spatial side of the 2D patches.
    pub patch_size: usize,
    /// Spacing of reference patches.
    pub ref_stride: usize,
    /// Side of the spatial search window, centred on the reference corner.
    pub window: usize,
    /// Frames searched around the reference frame; `None` searches all.
    pub window_t: Option<usize>,
    pub group_size: usize,
    /// Outer iterations between block-matching passes.
    pub rematch_every: usize,
    /// Weight constant `c`.
    pub wnnm_c: f64,
    /// Noise level per outer iteration, intensity units.
    pub sigma_schedule: Vec<f64>,
}

impl Default for GroupMatchConfig {
    fn default() -> Self {
        Self {
            patch_size: 6,
            ref_stride: 3,
            window: 20,
            window_t: None,
            group_size: 30,
            rematch_every: 1,
            wnnm_c: 2.8,
            sigma_schedule: geometric_schedule(50.0 / 255.0, 5.0 / 255.0, 20),
        }
    }
}

/// `n` values from `start` to `end` with a constant ratio.
pub fn geometric_schedule(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|i| start * (end / start).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

impl GroupMatchConfig {
    pub fn validate(&self, dims: (usize, usize, usize)) -> Result<()> {
        let (nx, ny, _) = dims;
        if self.patch_size == 0 || self.patch_size > nx.min(ny) {
            return Err(SciError::invalid(format!(
                "patch_size {} must lie in [1, {}]",
                self.patch_size,
                nx.min(ny)
            )));
        }
        if self.ref_stride == 0 || self.window == 0 || self.group_size == 0 || self.rematch_every == 0 {
            return Err(SciError::invalid(
                "ref_stride, window, group_size and rematch_every must be >= 1",
            ));
        }
        if self.window_t == Some(0) {
            return Err(SciError::invalid("window_t must be >= 1"));
        }
        if !(self.wnnm_c > 0.0) {
            return Err(SciError::invalid("wnnm_c must be > 0"));
        }
        if self.sigma_schedule.is_empty() || self.sigma_schedule.iter().any(|s| !(*s >= 0.0)) {
            return Err(SciError::invalid("sigma_schedule must be non-empty and non-negative"));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "patch_size={};ref_stride={};window={};window_t={:?};group_size={};rematch_every={};wnnm_c={};sigmas={}",
            self.patch_size,
            self.ref_stride,
            self.window,
            self.window_t,
            self.group_size,
            self.rematch_every,
            self.wnnm_c,
            self.sigma_schedule.len()
        )
    }
}

fn window_range(center: usize, window: usize, len: usize) -> (usize, usize) {
    let lo = center.saturating_sub(window / 2);
    let hi = (center + window / 2 + 1).min(len);
    (lo, hi)
}

/// The `group_size` patches nearest (squared Euclidean) to the reference,
/// searched exhaustively inside the window. Ties go to the smaller linear
/// index.
pub fn patch_match(cube: &DataCube, reference: PatchIndex, config: &GroupMatchConfig) -> Result<Vec<PatchIndex>> {
    config.validate(cube.dims())?;
    let (nx, ny, nt) = cube.dims();
    let p = config.patch_size;
    if reference.i + p > nx || reference.j + p > ny || reference.k >= nt {
        return Err(SciError::invalid(format!("reference {reference:?} lies outside the cube")));
    }
    Ok(match_in(cube, reference, config))
}

fn match_in(cube: &DataCube, reference: PatchIndex, config: &GroupMatchConfig) -> Vec<PatchIndex> {
    let (nx, ny, nt) = cube.dims();
    let p = config.patch_size;
    let mut refp = vec![0.0; p * p];
    read_patch(cube, reference, p, 1, &mut refp);
    let (i0, i1) = window_range(reference.i, config.window, nx - p + 1);
    let (j0, j1) = window_range(reference.j, config.window, ny - p + 1);
    let (k0, k1) = match config.window_t {
        None => (0, nt),
        Some(w) => window_range(reference.k, w, nt),
    };
    let data = cube.as_slice();
    let mut cands: Vec<(f64, usize, PatchIndex)> = Vec::with_capacity((i1 - i0) * (j1 - j0) * (k1 - k0));
    for k in k0..k1 {
        for j in j0..j1 {
            for i in i0..i1 {
                let mut d = 0.0;
                for jj in 0..p {
                    let start = cube.index(i, j + jj, k);
                    let row = &data[start..start + p];
                    for (a, b) in row.iter().zip(&refp[jj * p..jj * p + p]) {
                        d += (a - b) * (a - b);
                    }
                }
                cands.push((d, cube.index(i, j, k), PatchIndex { i, j, k }));
            }
        }
    }
    let cmp = |a: &(f64, usize, PatchIndex), b: &(f64, usize, PatchIndex)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let m = config.group_size.min(cands.len());
    if m < cands.len() {
        cands.select_nth_unstable_by(m - 1, cmp);
        cands.truncate(m);
    }
    cands.sort_by(cmp);
    cands.into_iter().map(|c| c.2).collect()
}

/// Soft-thresholds each singular value by its own threshold (`thresholds[i]`
/// pairs with the `i`-th largest singular value).
pub fn svt_weighted(matrix: &DMatrix<f64>, thresholds: &[f64]) -> Result<DMatrix<f64>> {
    let r = matrix.nrows().min(matrix.ncols());
    if thresholds.len() != r {
        return Err(SciError::mismatch(format!("{} thresholds for {r} singular values", thresholds.len())));
    }
    let mut svd = sorted_svd(matrix)?;
    for (s, t) in svd.singular_values.iter_mut().zip(thresholds) {
        *s = (*s - t).max(0.0);
    }
    svd.recompose()
        .map_err(|e| SciError::Decomposition(e.to_string()))
}

fn sorted_svd(matrix: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let mut svd = SVD::try_new(matrix.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| SciError::Decomposition("SVD did not converge".into()))?;
    svd.sort_by_singular_values();
    Ok(svd)
}

const WNNM_EPS: f64 = 1e-8;

/// WNNM shrinkage of a `d x M` group (patches as columns) at noise level `sigma`.
///
/// Clean singular values are estimated as `sqrt(max(s² − Mσ², 0))`; the
/// threshold of the `i`-th is `σ·c√M / (ŝ_i/σ + ε)`.
pub fn wnnm_group(group: &DMatrix<f64>, sigma: f64, c: f64) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0) || !(c > 0.0) {
        return Err(SciError::invalid("sigma must be >= 0 and c > 0"));
    }
    if sigma == 0.0 || group.is_empty() {
        return Ok(group.clone());
    }
    let m = group.ncols() as f64;
    let mut svd = sorted_svd(group)?;
    for s in svd.singular_values.iter_mut() {
        let clean = (*s * *s - m * sigma * sigma).max(0.0).sqrt();
        let w = c * m.sqrt() / (clean / sigma + WNNM_EPS);
        *s = (*s - sigma * w).max(0.0);
    }
    svd.recompose()
        .map_err(|e| SciError::Decomposition(e.to_string()))
}

/// Matched groups for every reference patch on the stride grid.
pub(crate) fn match_groups(cube: &DataCube, config: &GroupMatchConfig) -> Vec<Vec<PatchIndex>> {
    let (nx, ny, nt) = cube.dims();
    let p = config.patch_size;
    let is = axis_positions(nx, p, config.ref_stride);
    let js = axis_positions(ny, p, config.ref_stride);
    let refs: Vec<PatchIndex> = (0..nt)
        .flat_map(|k| {
            let is = &is;
            js.iter().flat_map(move |&j| is.iter().map(move |&i| PatchIndex { i, j, k }))
        })
        .collect();
    refs.par_iter().map(|&r| match_in(cube, r, config)).collect()
}

/// Shrinks every group and averages the results back into a cube.
pub(crate) fn shrink_groups(
    cube: &DataCube,
    groups: &[Vec<PatchIndex>],
    sigma: f64,
    config: &GroupMatchConfig,
) -> Result<DataCube> {
    let p = config.patch_size;
    let shrunk: Vec<DMatrix<f64>> = groups
        .par_iter()
        .map(|members| {
            let mut g = DMatrix::zeros(p * p, members.len());
            for (col, at) in members.iter().enumerate() {
                read_patch(cube, *at, p, 1, g.column_mut(col).as_mut_slice());
            }
            wnnm_group(&g, sigma, config.wnnm_c)
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(cube.dims())?;
    for (members, g) in groups.iter().zip(&shrunk) {
        for (col, at) in members.iter().enumerate() {
            acc.add(*at, p, 1, g.column(col).as_slice());
        }
    }
    Ok(acc.finish(Some(cube)))
}
