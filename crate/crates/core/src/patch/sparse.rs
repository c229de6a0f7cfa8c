//! Patchwise sparse coding in an orthonormal 3D DCT dictionary via ISTA.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::operator::{Measurement, SensingOperator};
use crate::patch::{check_patch_problem, local_problem, Accumulator, PatchConfig, PatchSensing};

/// Orthonormal DCT-II basis for `P x P x depth` patches, atoms as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DctDictionary {
    size: usize,
    depth: usize,
    atoms: DMatrix<f64>,
}

fn dct_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |x, u| {
        let a = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        a * (PI * (2 * x + 1) as f64 * u as f64 / (2 * n) as f64).cos()
    })
}

impl DctDictionary {
    pub fn new(size: usize, depth: usize) -> Result<Self> {
        if size == 0 || depth == 0 {
            return Err(SciError::invalid("dictionary patch dims must be >= 1"));
        }
        let cs = dct_matrix(size);
        let ct = dct_matrix(depth);
        let d = size * size * depth;
        let atoms = DMatrix::from_fn(d, d, |row, col| {
            let (ii, jj, kk) = (row % size, (row / size) % size, row / (size * size));
            let (u, v, w) = (col % size, (col / size) % size, col / (size * size));
            cs[(ii, u)] * cs[(jj, v)] * ct[(kk, w)]
        });
        Ok(Self { size, depth, atoms })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstaOptions {
    pub max_iters: usize,
    /// Stop when the relative coefficient change falls below this.
    pub tol: f64,
}

impl Default for IstaOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: DVector<f64>,
    /// `½‖y − ΦΨα‖² + λ‖α‖₁` before the first step and after each step.
    pub objective: Vec<f64>,
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Largest eigenvalue of `AAᵀ` by power iteration.
pub(crate) fn spectral_norm_sq(a: &DMatrix<f64>) -> f64 {
    let aat = a * a.transpose();
    let m = aat.nrows();
    let mut v = DVector::from_fn(m, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    let mut est = 0.0;
    for _ in 0..100 {
        let w = &aat * &v;
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        let next = n / v.norm();
        v = w / n;
        if (next - est).abs() <= 1e-10 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

fn objective(a: &DMatrix<f64>, y: &DVector<f64>, alpha: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - a * alpha).norm_squared() + lambda * alpha.lp_norm(1)
}

/// ISTA on `min ½‖y − ΦΨα‖² + λ‖α‖₁` with step `1/L`, `L` a padded power-iteration estimate.
pub fn sparse_code_patch(
    y: &DVector<f64>,
    phi: &PatchSensing,
    dict: &DctDictionary,
    lambda: f64,
    opts: &IstaOptions,
) -> Result<SparseCode> {
    if phi.cols() != dict.dim() || y.len() != phi.rows() {
        return Err(SciError::mismatch(format!(
            "Φ is {}x{}, dictionary dim {}, y has {} entries",
            phi.rows(),
            phi.cols(),
            dict.dim(),
            y.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(SciError::invalid("lambda must be >= 0"));
    }
    let a = phi.mul(dict.atoms());
    Ok(ista(&a, y, lambda, opts))
}

fn ista(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &IstaOptions) -> SparseCode {
    let l = spectral_norm_sq(a) * 1.01;
    let mut alpha = DVector::zeros(a.ncols());
    let mut history = vec![objective(a, y, &alpha, lambda)];
    if l == 0.0 {
        return SparseCode {
            coefficients: alpha,
            objective: history,
        };
    }
    let at = a.transpose();
    for _ in 0..opts.max_iters {
        let grad = &at * (a * &alpha - y);
        let next = (&alpha - grad / l).map(|v| soft(v, lambda / l));
        let change = (&next - &alpha).norm() / alpha.norm().max(f64::MIN_POSITIVE);
        alpha = next;
        history.push(objective(a, y, &alpha, lambda));
        if change < opts.tol {
            break;
        }
    }
    SparseCode {
        coefficients: alpha,
        objective: history,
    }
}

/// Overlap-averaged patchwise sparse reconstruction for CACTI.
pub fn sparse_reconstruct(
    op: &SensingOperator,
    y: &Measurement,
    config: &PatchConfig,
    lambda: f64,
    opts: &IstaOptions,
) -> Result<DataCube> {
    check_patch_problem(op, y, config, "sparse reconstruction")?;
    let dict = DctDictionary::new(config.size, config.depth)?;
    let dims = op.signal_dims();
    let positions = config.positions(dims);
    let estimates: Vec<DVector<f64>> = positions
        .par_iter()
        .map(|&at| {
            let (phi, yl) = local_problem(op, y, at, config.size);
            sparse_code_patch(&yl, &phi, &dict, lambda, opts).map(|c| dict.atoms() * c.coefficients)
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(dims)?;
    for (at, est) in positions.iter().zip(&estimates) {
        acc.add(*at, config.size, config.depth, est.as_slice());
    }
    Ok(acc.finish(None))
}
