//! ADMM and GAP reconstruction loops.
//!
//! Both exploit the diagonal `ΦΦᵀ = diag(ψ)`: the ADMM x-step and the GAP
//! Euclidean projection reduce to a pixelwise division on the detector grid.

use std::fmt::Write as _;

use crate::cube::{norm, DataCube};
use crate::error::{Result, SciError};
use crate::eval::metrics::psnr;
use crate::operator::{Measurement, SensingOperator};
use crate::solvers::tv::{tv_denoise, tv_denoise_3d};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denoiser {
    Tv,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// ADMM penalty.
    pub rho: f64,
    /// Regularization weight λ, in `[0,1]` intensity units.
    pub tv_weight: f64,
    pub tv_inner_iters: usize,
    /// Stop once the relative iterate change drops below this.
    pub tol: f64,
    pub denoiser: Denoiser,
    /// Adds differences along the frame axis to the TV prior.
    pub tv_3d: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rho: 1.0,
            tv_weight: 0.03,
            tv_inner_iters: 10,
            tol: 1e-4,
            denoiser: Denoiser::Tv,
            tv_3d: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(SciError::invalid("max_iters must be >= 1"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(SciError::invalid(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.tol >= 0.0) {
            return Err(SciError::invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        if !(self.tv_weight >= 0.0) {
            return Err(SciError::invalid("tv_weight must be >= 0"));
        }
        if self.tv_inner_iters == 0 {
            return Err(SciError::invalid("tv_inner_iters must be >= 1"));
        }
        Ok(())
    }

    /// Stable textual form used for config digests.
    pub fn describe(&self) -> String {
        format!(
            "max_iters={};rho={};tv_weight={};tv_inner_iters={};tol={};denoiser={:?};tv_3d={}",
            self.max_iters,
            self.rho,
            self.tv_weight,
            self.tv_inner_iters,
            self.tol,
            self.denoiser,
            self.tv_3d
        )
    }

    pub(crate) fn denoise(&self, cube: &DataCube, weight: f64) -> DataCube {
        match self.denoiser {
            Denoiser::Identity => cube.clone(),
            Denoiser::Tv if self.tv_3d => tv_denoise_3d(cube, weight, self.tv_inner_iters),
            Denoiser::Tv => tv_denoise(cube, weight, self.tv_inner_iters),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// `‖y − Φx‖₂` of the data-consistency iterate.
    pub residual: f64,
    /// `‖y − Φx‖∞` of the same iterate.
    pub residual_inf: f64,
    /// `‖x⁽ʲ⁺¹⁾ − x⁽ʲ⁾‖₂ / ‖x⁽ʲ⁾‖₂`.
    pub change: f64,
    /// PSNR of the current estimate against the reference, if one was given.
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
    /// Last data-consistency iterate `x`.
    pub final_x: DataCube,
    /// Last ADMM dual variable `u` (absent for GAP).
    pub final_u: Option<DataCube>,
    pub converged: bool,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// CSV with header `iter,residual,change,psnr`; PSNR is empty without a reference.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,residual,change,psnr\n");
        for r in &self.records {
            let psnr = r.psnr.map(|p| format!("{p:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.12e},{:.12e},{}", r.iter, r.residual, r.change, psnr);
        }
        out
    }
}

/// One-shot solution of `[ΦᵀΦ + ρI]x = Φᵀy + ρ(v − u/ρ)`.
pub fn x_update_closed_form(
    v: &DataCube,
    u: &DataCube,
    rho: f64,
    op: &SensingOperator,
    y: &Measurement,
    psi: &[f64],
) -> Result<DataCube> {
    if !(rho > 0.0) {
        return Err(SciError::invalid(format!("rho must be > 0, got {rho}")));
    }
    if !v.same_dims(u) || v.dims() != op.signal_dims() {
        return Err(SciError::mismatch("v, u and operator dims differ"));
    }
    if psi.len() != op.measurement_len() || y.as_slice().len() != psi.len() {
        return Err(SciError::mismatch("psi or measurement length does not match operator"));
    }
    let mut base = v.clone();
    base.as_mut_slice()
        .iter_mut()
        .zip(u.as_slice())
        .for_each(|(b, uu)| *b -= uu / rho);
    let mut x = base.clone();
    correct(op, y.as_slice(), psi, rho, &base, &mut x);
    Ok(x)
}

/// `x = base + Φᵀ[(y − Φ·base) / (shift + ψ)]`, written into `out`.
fn correct(op: &SensingOperator, y: &[f64], psi: &[f64], shift: f64, base: &DataCube, out: &mut DataCube) {
    let mut r = vec![0.0; y.len()];
    op.apply_into(base.as_slice(), &mut r);
    for ((ri, yi), pi) in r.iter_mut().zip(y).zip(psi) {
        *ri = (yi - *ri) / (shift + pi);
    }
    let mut corr = vec![0.0; base.as_slice().len()];
    op.apply_adjoint_into(&r, &mut corr);
    out.as_mut_slice()
        .iter_mut()
        .zip(base.as_slice())
        .zip(&corr)
        .for_each(|((o, b), c)| *o = b + c);
}

/// Euclidean projection of `v` onto `{x : Φx = y}`.
pub fn gap_project(op: &SensingOperator, y: &Measurement, psi: &[f64], v: &DataCube) -> DataCube {
    let mut x = v.clone();
    correct(op, y.as_slice(), psi, 0.0, v, &mut x);
    x
}

pub(crate) fn residuals(op: &SensingOperator, y: &[f64], x: &DataCube) -> (f64, f64) {
    let mut r = vec![0.0; y.len()];
    op.apply_into(x.as_slice(), &mut r);
    let mut l2 = 0.0;
    let mut linf = 0.0f64;
    for (ri, yi) in r.iter().zip(y) {
        let d = yi - ri;
        l2 += d * d;
        linf = linf.max(d.abs());
    }
    (l2.sqrt(), linf)
}

pub(crate) fn relative_change(new: &DataCube, old: &DataCube) -> f64 {
    let denom = norm(old.as_slice());
    let diff = new
        .as_slice()
        .iter()
        .zip(old.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if denom == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / denom
    }
}

pub(crate) fn check_inputs(op: &SensingOperator, y: &Measurement, config: &SolverConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if (y.rows(), y.cols()) != op.measurement_dims() {
        return Err(SciError::mismatch(format!(
            "measurement {}x{} does not match operator {:?}",
            y.rows(),
            y.cols(),
            op.measurement_dims()
        )));
    }
    op.checked_phi_phit_diag()
}

fn zero_start(op: &SensingOperator) -> Result<DataCube> {
    let (nx, ny, nt) = op.signal_dims();
    DataCube::zeros(nx, ny, nt)
}

pub(crate) fn record_psnr(reference: Option<&DataCube>, estimate: &DataCube) -> Result<Option<f64>> {
    reference
        .map(|r| psnr(r, estimate, r.peak()))
        .transpose()
}

/// ADMM from `v⁰ = 0, u⁰ = 0`.
pub fn admm_solve(
    op: &SensingOperator,
    y: &Measurement,
    config: &SolverConfig,
    reference: Option<&DataCube>,
) -> Result<(DataCube, SolveTrace)> {
    admm_solve_from(op, y, config, &zero_start(op)?, reference)
}

/// ADMM: x-update, `v = Denoise(x + u/ρ)`, `u ← u + ρ(x − v)`. Returns the final `v`.
pub fn admm_solve_from(
    op: &SensingOperator,
    y: &Measurement,
    config: &SolverConfig,
    init: &DataCube,
    reference: Option<&DataCube>,
) -> Result<(DataCube, SolveTrace)> {
    let psi = check_inputs(op, y, config)?;
    if init.dims() != op.signal_dims() {
        return Err(SciError::mismatch("initial estimate does not match operator"));
    }
    let rho = config.rho;
    let mut v = init.clone();
    let (nx, ny, nt) = op.signal_dims();
    let mut u = DataCube::zeros(nx, ny, nt)?;
    let mut x_prev = init.clone();
    let mut records = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    let mut base = v.clone();
    let mut x = v.clone();
    for iter in 1..=config.max_iters {
        base.as_mut_slice()
            .iter_mut()
            .zip(v.as_slice().iter().zip(u.as_slice()))
            .for_each(|(b, (vv, uu))| *b = vv - uu / rho);
        correct(op, y.as_slice(), &psi, rho, &base, &mut x);

        let mut w = x.clone();
        w.as_mut_slice()
            .iter_mut()
            .zip(u.as_slice())
            .for_each(|(wv, uu)| *wv += uu / rho);
        v = config.denoise(&w, config.tv_weight / rho);
        u.as_mut_slice()
            .iter_mut()
            .zip(x.as_slice().iter().zip(v.as_slice()))
            .for_each(|(uu, (xx, vv))| *uu += rho * (xx - vv));

        let (residual, residual_inf) = residuals(op, y.as_slice(), &x);
        let change = relative_change(&x, &x_prev);
        records.push(IterRecord {
            iter,
            residual,
            residual_inf,
            change,
            psnr: record_psnr(reference, &v)?,
        });
        x_prev.clone_from(&x);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok((
        v,
        SolveTrace {
            records,
            final_x: x,
            final_u: Some(u),
            converged,
        },
    ))
}

/// GAP from `v⁰ = 0`, so the first projection is the least-squares estimate.
pub fn gap_solve(
    op: &SensingOperator,
    y: &Measurement,
    config: &SolverConfig,
    reference: Option<&DataCube>,
) -> Result<(DataCube, SolveTrace)> {
    gap_solve_from(op, y, config, &zero_start(op)?, reference)
}

/// GAP: `x = v + Φᵀ(ΦΦᵀ)⁻¹(y − Φv)`, `v = Denoise(x)`. Returns the final `v`.
pub fn gap_solve_from(
    op: &SensingOperator,
    y: &Measurement,
    config: &SolverConfig,
    init: &DataCube,
    reference: Option<&DataCube>,
) -> Result<(DataCube, SolveTrace)> {
    let psi = check_inputs(op, y, config)?;
    if init.dims() != op.signal_dims() {
        return Err(SciError::mismatch("initial estimate does not match operator"));
    }
    let mut v = init.clone();
    let mut x = init.clone();
    let mut x_prev = init.clone();
    let mut records = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    for iter in 1..=config.max_iters {
        correct(op, y.as_slice(), &psi, 0.0, &v, &mut x);
        v = config.denoise(&x, config.tv_weight);
        let (residual, residual_inf) = residuals(op, y.as_slice(), &x);
        let change = relative_change(&x, &x_prev);
        records.push(IterRecord {
            iter,
            residual,
            residual_inf,
            change,
            psnr: record_psnr(reference, &v)?,
        });
        x_prev.clone_from(&x);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok((
        v,
        SolveTrace {
            records,
            final_x: x,
            final_u: None,
            converged,
        },
    ))
}
