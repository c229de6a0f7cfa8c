//! Gaussian mixture prior on patches with a closed-form posterior.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::io::{read_scit, write_scit, ScitDtype};
use crate::operator::{Measurement, SensingOperator};
use crate::patch::{check_patch_problem, local_problem, Accumulator, PatchConfig, PatchSensing};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl GmmModel {
    /// Checks weights (positive, summing to one), shapes, symmetry and
    /// positive definiteness.
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covs: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(SciError::invalid("a mixture needs at least one component"));
        }
        if means.len() != k || covs.len() != k {
            return Err(SciError::mismatch(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covs.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(SciError::invalid("mixture weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SciError::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(SciError::invalid("patch dimension must be >= 1"));
        }
        for (c, (mu, s)) in means.iter().zip(&covs).enumerate() {
            if mu.len() != d || s.nrows() != d || s.ncols() != d {
                return Err(SciError::mismatch(format!("component {c} has inconsistent shape")));
            }
            let scale = s.abs().max().max(1.0);
            if (s - s.transpose()).abs().max() > 1e-10 * scale {
                return Err(SciError::invalid(format!("covariance {c} is not symmetric")));
            }
            if Cholesky::new(s.clone()).is_none() {
                return Err(SciError::Decomposition(format!(
                    "covariance {c} is not positive definite"
                )));
            }
        }
        Ok(Self { weights, means, covs })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covs
    }

    /// Flat record layout: per component `[ξ, μ, vec(Σ)]`, tensor dims `(1 + D + D², K)`.
    pub fn to_tensor(&self) -> (Vec<usize>, Vec<f64>) {
        let d = self.dim();
        let rec = 1 + d + d * d;
        let mut data = Vec::with_capacity(rec * self.components());
        for ((w, mu), s) in self.weights.iter().zip(&self.means).zip(&self.covs) {
            data.push(*w);
            data.extend(mu.iter());
            data.extend(s.iter());
        }
        (vec![rec, self.components()], data)
    }

    pub fn from_tensor(dims: &[usize], data: &[f64]) -> Result<Self> {
        let [rec, k] = dims else {
            return Err(SciError::format(6, format!("mixture tensor must be 2D, got {dims:?}")));
        };
        let (rec, k) = (*rec, *k);
        // rec = 1 + d + d²
        let d = ((((4 * rec) as f64 - 3.0).sqrt() - 1.0) / 2.0).round() as usize;
        if rec < 3 || 1 + d + d * d != rec {
            return Err(SciError::format(7, format!("record length {rec} is not 1 + D + D²")));
        }
        if data.len() != rec * k {
            return Err(SciError::mismatch("mixture tensor payload length"));
        }
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for r in data.chunks_exact(rec) {
            weights.push(r[0]);
            means.push(DVector::from_column_slice(&r[1..1 + d]));
            covs.push(DMatrix::from_column_slice(d, d, &r[1 + d..]));
        }
        Self::new(weights, means, covs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let (dims, data) = self.to_tensor();
        write_scit(path, &dims, &data, ScitDtype::F64)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let t = read_scit(path)?;
        Self::from_tensor(&t.dims, &t.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPosterior {
    /// Posterior mixing weights `ξ̃_k`.
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    /// Posterior covariances, only when requested.
    pub covariances: Option<Vec<DMatrix<f64>>>,
    /// `Σ_k ξ̃_k μ̃_k`.
    pub mean: DVector<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Posterior of `x ~ Σ ξ_k N(μ_k, Σ_k)` given `y = Φx + n`, `n ~ N(0, Q)`.
///
/// Uses the measurement-space form `C_k = Q + ΦΣ_kΦᵀ`, which only factors
/// `m x m` matrices.
pub fn gmm_posterior_patch(
    y: &DVector<f64>,
    phi: &PatchSensing,
    q: &DMatrix<f64>,
    model: &GmmModel,
    want_covariances: bool,
) -> Result<GmmPosterior> {
    let m = phi.rows();
    let d = model.dim();
    if phi.cols() != d || y.len() != m || q.nrows() != m || q.ncols() != m {
        return Err(SciError::mismatch(format!(
            "y has {} entries, Φ is {}x{}, Q is {}x{}, model dim {d}",
            y.len(),
            phi.rows(),
            phi.cols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if Cholesky::new(q.clone()).is_none() {
        return Err(SciError::Decomposition("noise covariance Q is not positive definite".into()));
    }
    let k = model.components();
    let mut log_w = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = want_covariances.then(|| Vec::with_capacity(k));
    for c in 0..k {
        let sigma = &model.covs[c];
        // A = ΦΣ (m x d), C = Q + AΦᵀ
        let a = phi.mul(sigma);
        let cmat = q + phi.mul(&a.transpose());
        let cmat = (&cmat + cmat.transpose()) * 0.5;
        let chol = Cholesky::new(cmat)
            .ok_or_else(|| SciError::Decomposition(format!("C for component {c} is not positive definite")))?;
        let r = y - phi.apply(&model.means[c]);
        let w = chol.solve(&r);
        let quad = r.dot(&w);
        log_w.push(model.weights[c].ln() - 0.5 * (quad + log_det(&chol) + m as f64 * (2.0 * PI).ln()));
        means.push(&model.means[c] + a.transpose() * &w);
        if let Some(covs) = covs.as_mut() {
            let s = chol.solve(&a);
            let post = sigma - a.transpose() * s;
            covs.push((&post + post.transpose()) * 0.5);
        }
    }
    let lse = log_sum_exp(&log_w);
    let weights: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
    let mut mean = DVector::zeros(d);
    for (w, mu) in weights.iter().zip(&means) {
        mean.axpy(*w, mu, 1.0);
    }
    Ok(GmmPosterior {
        weights,
        means,
        covariances: covs,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmTrainOutput {
    pub model: GmmModel,
    /// Mean per-sample log-likelihood before each EM step and after the last.
    pub log_likelihood: Vec<f64>,
    /// Components re-seeded after becoming empty.
    pub reseeds: usize,
}

fn clamp_eigen(s: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s);
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn scatter(x: &DMatrix<f64>, mu: &DVector<f64>, resp: Option<&[f64]>, total: f64) -> DMatrix<f64> {
    let mut centered = x.clone();
    for (n, mut col) in centered.column_iter_mut().enumerate() {
        col -= mu;
        if let Some(r) = resp {
            col *= r[n].sqrt();
        }
    }
    (&centered * centered.transpose()) / total
}

/// Per-sample `ln ξ_k + ln N(x_n; μ_k, Σ_k)`, one row per component.
fn component_log_densities(x: &DMatrix<f64>, weights: &[f64], means: &[DVector<f64>], covs: &[DMatrix<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = x.nrows();
    (0..weights.len())
        .into_par_iter()
        .map(|c| {
            let chol = Cholesky::new(covs[c].clone())
                .ok_or_else(|| SciError::Decomposition(format!("covariance {c} lost definiteness")))?;
            let mut z = x.clone();
            for mut col in z.column_iter_mut() {
                col -= &means[c];
            }
            chol.l_dirty().solve_lower_triangular_mut(&mut z);
            let base = weights[c].ln() - 0.5 * (log_det(&chol) + d as f64 * (2.0 * PI).ln());
            Ok(z.column_iter().map(|col| base - 0.5 * col.norm_squared()).collect())
        })
        .collect()
}

/// EM fit of a `K`-component mixture. Covariance eigenvalues are clamped
/// at `cov_floor`, which is the exact constrained M-step, so the
/// likelihood stays monotone between re-seeds.
pub fn gmm_train(
    patches: &[Vec<f64>],
    components: usize,
    em_iters: usize,
    seed: u64,
    cov_floor: f64,
) -> Result<GmmTrainOutput> {
    if components == 0 {
        return Err(SciError::invalid("component count must be >= 1"));
    }
    if patches.len() < 10 * components {
        return Err(SciError::invalid(format!(
            "need at least {} training patches for {components} components, got {}",
            10 * components,
            patches.len()
        )));
    }
    if !(cov_floor > 0.0) {
        return Err(SciError::invalid(format!("cov_floor must be > 0, got {cov_floor}")));
    }
    let d = patches[0].len();
    if d == 0 || patches.iter().any(|p| p.len() != d) {
        return Err(SciError::mismatch("training patches must share one non-zero length"));
    }
    let n = patches.len();
    let x = DMatrix::from_fn(d, n, |r, c| patches[c][r]);
    let global_mean = x.column_mean();
    let global_cov = clamp_eigen(scatter(&x, &global_mean, None, n as f64), cov_floor);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeans_pp(&x, components, &mut rng);
    let mut covs = vec![global_cov.clone(); components];
    let mut weights = vec![1.0 / components as f64; components];
    let mut history = Vec::with_capacity(em_iters + 1);
    let mut reseeds = 0;

    for _ in 0..em_iters {
        let logp = component_log_densities(&x, &weights, &means, &covs)?;
        let lse: Vec<f64> = (0..n)
            .map(|s| log_sum_exp(&logp.iter().map(|row| row[s]).collect::<Vec<_>>()))
            .collect();
        history.push(lse.iter().sum::<f64>() / n as f64);

        let mut worst: Vec<usize> = (0..n).collect();
        worst.sort_by(|&a, &b| lse[a].total_cmp(&lse[b]).then(a.cmp(&b)));
        let mut worst = worst.into_iter();

        let updated: Vec<Option<(f64, DVector<f64>, DMatrix<f64>)>> = logp
            .par_iter()
            .map(|row| {
                let resp: Vec<f64> = row.iter().zip(&lse).map(|(l, t)| (l - t).exp()).collect();
                let nk: f64 = resp.iter().sum();
                if nk < 1e-8 {
                    return None;
                }
                let mut mu = DVector::zeros(d);
                for (col, r) in x.column_iter().zip(&resp) {
                    mu.axpy(*r, &col, 1.0);
                }
                mu /= nk;
                let s = clamp_eigen(scatter(&x, &mu, Some(&resp), nk), cov_floor);
                Some((nk / n as f64, mu, s))
            })
            .collect();
        for (c, up) in updated.into_iter().enumerate() {
            match up {
                Some((w, mu, s)) => {
                    weights[c] = w;
                    means[c] = mu;
                    covs[c] = s;
                }
                None => {
                    let pick = worst.next().unwrap_or(0);
                    warn!("mixture component {c} became empty; re-seeding from patch {pick}");
                    reseeds += 1;
                    weights[c] = 1.0 / n as f64;
                    means[c] = x.column(pick).into_owned();
                    covs[c] = global_cov.clone();
                }
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let logp = component_log_densities(&x, &weights, &means, &covs)?;
    let last = (0..n)
        .map(|s| log_sum_exp(&logp.iter().map(|row| row[s]).collect::<Vec<_>>()))
        .sum::<f64>()
        / n as f64;
    history.push(last);
    Ok(GmmTrainOutput {
        model: GmmModel::new(weights, means, covs)?,
        log_likelihood: history,
        reseeds,
    })
}

fn kmeans_pp(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = x.ncols();
    let mut centers = vec![x.column(rng.random_range(0..n)).into_owned()];
    let mut dist: Vec<f64> = x.column_iter().map(|c| (c - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            dist.iter()
                .position(|&w| {
                    t -= w;
                    t < 0.0
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = x.column(pick).into_owned();
        for (dv, col) in dist.iter_mut().zip(x.column_iter()) {
            *dv = dv.min((col - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// Patchwise posterior-mean reconstruction for CACTI with `Q = (σ² + q_floor)I`.
pub fn gmm_reconstruct(
    op: &SensingOperator,
    y: &Measurement,
    model: &GmmModel,
    config: &PatchConfig,
    noise_sigma: f64,
) -> Result<DataCube> {
    check_patch_problem(op, y, config, "gmm reconstruction")?;
    if model.dim() != config.patch_len() {
        return Err(SciError::mismatch(format!(
            "model dimension {} does not match patch length {}",
            model.dim(),
            config.patch_len()
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(SciError::invalid("noise sigma must be >= 0"));
    }
    let dims = op.signal_dims();
    let pixels = config.size * config.size;
    let q = DMatrix::identity(pixels, pixels) * (noise_sigma * noise_sigma + Q_FLOOR);
    let positions = config.positions(dims);
    let estimates: Vec<DVector<f64>> = positions
        .par_iter()
        .map(|&at| {
            let (phi, yl) = local_problem(op, y, at, config.size);
            gmm_posterior_patch(&yl, &phi, &q, model, false).map(|p| p.mean)
        })
        .collect::<Result<_>>()?;
    let mut acc = Accumulator::new(dims)?;
    for (at, est) in positions.iter().zip(&estimates) {
        acc.add(*at, config.size, config.depth, est.as_slice());
    }
    Ok(acc.finish(None))
}

/// Noise variance added to `Q` so noiseless problems stay well posed.
pub const Q_FLOOR: f64 = 1e-6;
