//! PSNR and SSIM.

use crate::cube::DataCube;
use crate::error::{Result, SciError};

/// PSNR reported for identical inputs.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 1.0;

pub fn mse(reference: &DataCube, estimate: &DataCube) -> Result<f64> {
    if !reference.same_dims(estimate) {
        return Err(SciError::mismatch(format!(
            "reference {:?} vs estimate {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    let n = reference.as_slice().len() as f64;
    Ok(reference
        .as_slice()
        .iter()
        .zip(estimate.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `10·log10(peak²/MSE)`, clamped to `[0, 100]` dB.
pub fn psnr(reference: &DataCube, estimate: &DataCube, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(SciError::invalid(format!("peak must be > 0, got {peak}")));
    }
    let err = mse(reference, estimate)?;
    if err == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / err).log10()).clamp(0.0, PSNR_CAP_DB))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filtering restricted to fully covered ("valid") positions.
fn filter_valid(nx: usize, ny: usize, img: &[f64], kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let w = SSIM_WINDOW;
    let (ox, oy) = (nx - w + 1, ny - w + 1);
    // along rows (i axis) first
    let mut tmp = vec![0.0; ox * ny];
    for j in 0..ny {
        for i in 0..ox {
            tmp[j * ox + i] = (0..w).map(|t| kernel[t] * img[j * nx + i + t]).sum();
        }
    }
    let mut out = vec![0.0; ox * oy];
    for j in 0..oy {
        for i in 0..ox {
            out[j * ox + i] = (0..w).map(|t| kernel[t] * tmp[(j + t) * ox + i]).sum();
        }
    }
    out
}

fn ssim_frame(nx: usize, ny: usize, a: &[f64], b: &[f64]) -> f64 {
    let kernel = gaussian_kernel();
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(nx, ny, a, &kernel);
    let mu_b = filter_valid(nx, ny, b, &kernel);
    let s_aa = filter_valid(nx, ny, &aa, &kernel);
    let s_bb = filter_valid(nx, ny, &bb, &kernel);
    let s_ab = filter_valid(nx, ny, &ab, &kernel);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|p| {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let va = s_aa[p] - ma * ma;
            let vb = s_bb[p] - mb * mb;
            let cov = s_ab[p] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean SSIM over frames (11x11 Gaussian window, σ = 1.5, K1 = 0.01, K2 = 0.03, range 1).
pub fn ssim(reference: &DataCube, estimate: &DataCube) -> Result<f64> {
    if !reference.same_dims(estimate) {
        return Err(SciError::mismatch(format!(
            "reference {:?} vs estimate {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    let (nx, ny, nt) = reference.dims();
    if nx < SSIM_WINDOW || ny < SSIM_WINDOW {
        return Err(SciError::invalid(format!(
            "SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {nx}x{ny}"
        )));
    }
    let sum: f64 = (0..nt)
        .map(|k| ssim_frame(nx, ny, reference.frame(k), estimate.frame(k)))
        .sum();
    Ok((sum / nt as f64).clamp(-1.0, 1.0))
}
