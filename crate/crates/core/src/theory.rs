//! Compression codes, exhaustive compressible-signal pursuit and Monte Carlo
//! checks of the CSP recovery guarantee at small scale.
//!
//! The uniform codebook is a Cartesian grid, so nearest-codeword search and,
//! for CACTI, the CSP objective separate over pixels: each detector pixel
//! only couples the `nt` voxels behind it. That makes CSP exact at sizes
//! where the codebook itself could never be listed.

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Result, SciError};
use crate::masks::{make_masks, MaskKind};
use crate::operator::{Measurement, SensingMode, SensingOperator};

/// Largest codebook `csp_solve` and `build_uniform_codebook` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    UniformQuantizer { levels: usize },
    ExplicitList,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dims: (usize, usize, usize),
    rho: f64,
    provenance: Provenance,
    words: Vec<Vec<f64>>,
}

fn grid_center(level: usize, levels: usize, rho: f64) -> f64 {
    -rho / 2.0 + rho * (level as f64 + 0.5) / levels as f64
}

/// `levels^n` when it fits in a `u128`.
fn grid_count(levels: usize, n: usize) -> Option<u128> {
    (levels as u128).checked_pow(u32::try_from(n).ok()?)
}

impl Codebook {
    /// Uniform scalar quantizer grid, kept implicit (no enumeration guard).
    pub fn uniform_grid(dims: (usize, usize, usize), levels: usize, rho: f64) -> Result<Self> {
        let (nx, ny, nt) = dims;
        if nx == 0 || ny == 0 || nt == 0 {
            return Err(SciError::invalid("codebook dims must be positive"));
        }
        if levels < 2 {
            return Err(SciError::invalid(format!("levels must be >= 2, got {levels}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(SciError::invalid("amplitude rho must be > 0"));
        }
        Ok(Self {
            dims,
            rho,
            provenance: Provenance::UniformQuantizer { levels },
            words: Vec::new(),
        })
    }

    pub fn from_list(dims: (usize, usize, usize), rho: f64, words: Vec<Vec<f64>>) -> Result<Self> {
        if words.is_empty() {
            return Err(SciError::invalid("codebook must contain at least one codeword"));
        }
        let n = dims.0 * dims.1 * dims.2;
        if n == 0 {
            return Err(SciError::invalid("codebook dims must be positive"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(SciError::invalid("amplitude rho must be > 0"));
        }
        for (idx, w) in words.iter().enumerate() {
            if w.len() != n {
                return Err(SciError::mismatch(format!("codeword {idx} has {} entries, expected {n}", w.len())));
            }
            if w.iter().any(|v| !(v.abs() <= rho / 2.0)) {
                return Err(SciError::invalid(format!("codeword {idx} leaves the box |c| <= rho/2")));
            }
        }
        if words.len() as u128 > ENUMERATION_LIMIT {
            return Err(SciError::Capacity {
                what: "explicit codebook",
                requested: words.len() as u128,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(Self {
            dims,
            rho,
            provenance: Provenance::ExplicitList,
            words,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn signal_len(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Bits per sample, `log2(|C|) / n` (`log2(levels)` for the grid).
    pub fn rate(&self) -> f64 {
        match self.provenance {
            Provenance::UniformQuantizer { levels } => (levels as f64).log2(),
            Provenance::ExplicitList => (self.words.len() as f64).log2() / self.signal_len() as f64,
        }
    }

    /// Codeword count, `None` when it overflows a `u128`.
    pub fn count(&self) -> Option<u128> {
        match self.provenance {
            Provenance::UniformQuantizer { levels } => grid_count(levels, self.signal_len()),
            Provenance::ExplicitList => Some(self.words.len() as u128),
        }
    }

    /// `log2 |C|`.
    pub fn log2_count(&self) -> f64 {
        self.rate() * self.signal_len() as f64
    }

    /// Codeword by index. Grid indices put voxel 0 in the least significant digit.
    pub fn codeword(&self, index: u128) -> Result<Vec<f64>> {
        match self.provenance {
            Provenance::UniformQuantizer { levels } => {
                if self.count().is_some_and(|c| index >= c) {
                    return Err(SciError::invalid(format!("codeword index {index} out of range")));
                }
                let mut rest = index;
                Ok((0..self.signal_len())
                    .map(|_| {
                        let l = (rest % levels as u128) as usize;
                        rest /= levels as u128;
                        grid_center(l, levels, self.rho)
                    })
                    .collect())
            }
            Provenance::ExplicitList => usize::try_from(index)
                .ok()
                .and_then(|i| self.words.get(i).cloned())
                .ok_or_else(|| SciError::invalid(format!("codeword index {index} out of range"))),
        }
    }

    /// Worst-case per-sample squared error of the grid over its amplitude box.
    pub fn analytic_distortion(&self) -> Option<f64> {
        match self.provenance {
            Provenance::UniformQuantizer { levels } => Some((self.rho / (2.0 * levels as f64)).powi(2)),
            Provenance::ExplicitList => None,
        }
    }
}

/// Enumerable uniform codebook; refuses grids above [`ENUMERATION_LIMIT`] words.
pub fn build_uniform_codebook(dims: (usize, usize, usize), levels: usize, rho: f64) -> Result<Codebook> {
    let cb = Codebook::uniform_grid(dims, levels, rho)?;
    match cb.count() {
        Some(c) if c <= ENUMERATION_LIMIT => Ok(cb),
        c => Err(SciError::Capacity {
            what: "uniform codebook",
            requested: c.unwrap_or(u128::MAX),
            limit: ENUMERATION_LIMIT,
        }),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Closest codeword and its index; ties go to the lowest index.
pub fn nearest_codeword(x: &[f64], codebook: &Codebook) -> Result<(Vec<f64>, u128)> {
    if x.len() != codebook.signal_len() {
        return Err(SciError::mismatch(format!(
            "signal has {} entries, codebook expects {}",
            x.len(),
            codebook.signal_len()
        )));
    }
    match codebook.provenance {
        Provenance::UniformQuantizer { levels } => {
            let width = codebook.rho / levels as f64;
            let mut index: u128 = 0;
            let mut place: u128 = 1;
            let mut word = Vec::with_capacity(x.len());
            for (n, &v) in x.iter().enumerate() {
                // a point on a cell boundary is equidistant and goes to the lower level
                let pos = (v + codebook.rho / 2.0) / width;
                let mut l = (pos.ceil() - 1.0).clamp(0.0, (levels - 1) as f64) as usize;
                if l + 1 < levels && (v - grid_center(l + 1, levels, codebook.rho)).abs() < (v - grid_center(l, levels, codebook.rho)).abs() {
                    l += 1;
                }
                word.push(grid_center(l, levels, codebook.rho));
                if n < 128 {
                    index = index.saturating_add((l as u128).saturating_mul(place));
                    place = place.saturating_mul(levels as u128);
                }
            }
            Ok((word, index))
        }
        Provenance::ExplicitList => {
            let mut best = (f64::INFINITY, 0usize);
            for (i, w) in codebook.words.iter().enumerate() {
                let d = sq_dist(x, w);
                if d < best.0 {
                    best = (d, i);
                }
            }
            Ok((codebook.words[best.1].clone(), best.1 as u128))
        }
    }
}

/// `max over samples of ‖x − nearest(x)‖² / n`.
pub fn distortion_rate(codebook: &Codebook, samples: &[Vec<f64>]) -> Result<f64> {
    let n = codebook.signal_len() as f64;
    let mut worst = 0.0f64;
    for s in samples {
        let (c, _) = nearest_codeword(s, codebook)?;
        worst = worst.max(sq_dist(s, &c) / n);
    }
    Ok(worst)
}

/// `argmin_c ‖y − Φc‖²` over the codebook, ties to the lowest index.
/// Returns the codeword and its objective.
pub fn csp_solve(y: &Measurement, op: &SensingOperator, codebook: &Codebook) -> Result<(Vec<f64>, f64)> {
    if op.signal_dims() != codebook.dims() {
        return Err(SciError::mismatch(format!(
            "operator dims {:?} differ from codebook dims {:?}",
            op.signal_dims(),
            codebook.dims()
        )));
    }
    if (y.rows(), y.cols()) != op.measurement_dims() {
        return Err(SciError::mismatch("measurement does not match operator"));
    }
    match (&codebook.provenance, op.mode()) {
        (Provenance::UniformQuantizer { levels }, SensingMode::Cacti) => csp_grid_cacti(y, op, *levels, codebook.rho),
        _ => {
            let count = codebook.count().filter(|&c| c <= ENUMERATION_LIMIT).ok_or(SciError::Capacity {
                what: "csp search",
                requested: codebook.count().unwrap_or(u128::MAX),
                limit: ENUMERATION_LIMIT,
            })?;
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut r = vec![0.0; op.measurement_len()];
            for idx in 0..count {
                let c = codebook.codeword(idx)?;
                let phic = op.apply(&c)?;
                r.iter_mut().zip(&phic).zip(y.as_slice()).for_each(|((ri, p), yi)| *ri = yi - p);
                let obj: f64 = r.iter().map(|v| v * v).sum();
                if best.as_ref().is_none_or(|b| obj < b.0) {
                    best = Some((obj, c));
                }
            }
            let (obj, c) = best.expect("codebook is non-empty");
            Ok((c, obj))
        }
    }
}

/// Per-pixel exhaustive search over the `levels^nt` local tuples.
fn csp_grid_cacti(y: &Measurement, op: &SensingOperator, levels: usize, rho: f64) -> Result<(Vec<f64>, f64)> {
    let (nx, ny, nt) = op.signal_dims();
    let local = grid_count(levels, nt)
        .filter(|&c| c <= ENUMERATION_LIMIT)
        .ok_or(SciError::Capacity {
            what: "per-pixel csp search",
            requested: grid_count(levels, nt).unwrap_or(u128::MAX),
            limit: ENUMERATION_LIMIT,
        })? as usize;
    let frame = nx * ny;
    let centers: Vec<f64> = (0..levels).map(|l| grid_center(l, levels, rho)).collect();
    let masks = op.masks().values();
    let mut word = vec![0.0; frame * nt];
    let mut total = 0.0;
    let mut digits = vec![0usize; nt];
    for p in 0..frame {
        let yp = y.as_slice()[p];
        let mut best = (f64::INFINITY, 0usize);
        // tuple t has frame k as digit k, so ascending t is ascending global index
        for t in 0..local {
            let mut rest = t;
            let mut s = 0.0;
            for k in 0..nt {
                s += masks[k * frame + p] * centers[rest % levels];
                rest /= levels;
            }
            let e = (yp - s) * (yp - s);
            if e < best.0 {
                best = (e, t);
            }
        }
        total += best.0;
        let mut rest = best.1;
        for (k, d) in digits.iter_mut().enumerate() {
            *d = rest % levels;
            rest /= levels;
            word[k * frame + p] = centers[*d];
        }
    }
    Ok((word, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialSignals {
    /// Uniform random codeword plus a uniform in-cell perturbation.
    Perturbed,
    /// Uniform random codewords; the code is lossless on this set.
    Codewords,
}

impl TrialSignals {
    pub fn name(&self) -> &'static str {
        match self {
            TrialSignals::Perturbed => "perturbed",
            TrialSignals::Codewords => "codewords",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheckConfig {
    pub dims: (usize, usize, usize),
    pub levels: usize,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub rho: f64,
    pub signals: TrialSignals,
    /// Measurement noise standard deviation.
    pub sigma: f64,
}

impl TheoremCheckConfig {
    pub fn new(dims: (usize, usize, usize), levels: usize, trials: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            dims,
            levels,
            trials,
            epsilon,
            seed,
            rho: 1.0,
            signals: TrialSignals::Perturbed,
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremCheckReport {
    pub dims: (usize, usize, usize),
    pub levels: usize,
    pub rho: f64,
    pub signals: TrialSignals,
    pub sigma: f64,
    pub trials: usize,
    pub epsilon: f64,
    /// `η = 64·ln(1/δ)/ε²`; infinite when `δ = 0`.
    pub eta: f64,
    /// Frame count below which the corollary applies, `ε²/(128 r)`.
    pub nt_bound: f64,
    pub rate: f64,
    /// Distortion of the code on the trial signal set (analytic supremum).
    pub delta: f64,
    /// Largest per-sample distortion observed over the trial signals.
    pub delta_measured: f64,
    /// Per-pixel error bound `N_t(δ + ρ²ε)`.
    pub error_bound: f64,
    pub successes: usize,
    pub success_frequency: f64,
    pub violation_frequency: f64,
    pub floor: f64,
    /// `ln` of the subtracted term `2^{n r + 1} e^{−N_xN_y(3ε/32)²}`.
    pub floor_log_term: f64,
    /// Three binomial standard deviations at the floor.
    pub margin: f64,
    pub vacuous: bool,
    pub verdict: Verdict,
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    // splitmix64 of (seed, trial)
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct TrialOutcome {
    success: bool,
    distortion: f64,
}

fn run_trial(cfg: &TheoremCheckConfig, codebook: &Codebook, bound: f64, trial: usize) -> Result<TrialOutcome> {
    let (nx, ny, nt) = cfg.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, trial));
    let masks = make_masks(MaskKind::Gaussian, nx, ny, nt, rng.random())?;
    let op = SensingOperator::cacti(masks);
    let half = cfg.rho / (2.0 * cfg.levels as f64);
    let x: Vec<f64> = (0..nx * ny * nt)
        .map(|_| {
            let c = grid_center(rng.random_range(0..cfg.levels), cfg.levels, cfg.rho);
            match cfg.signals {
                TrialSignals::Codewords => c,
                TrialSignals::Perturbed => c + rng.random_range(-half..=half),
            }
        })
        .collect();
    let (nearest, _) = nearest_codeword(&x, codebook)?;
    let distortion = sq_dist(&x, &nearest) / x.len() as f64;
    let mut y = op.apply(&x)?;
    if cfg.sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.sigma).map_err(|e| SciError::invalid(e.to_string()))?;
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let (rows, cols) = op.measurement_dims();
    let y = Measurement::new(rows, cols, y, SensingMode::Cacti, nt)?;
    let (xhat, _) = csp_solve(&y, &op, codebook)?;
    let err = sq_dist(&x, &xhat) / (nx * ny) as f64;
    Ok(TrialOutcome {
        success: err <= bound,
        distortion,
    })
}

/// Monte Carlo check of `‖x − x̂‖²/(N_xN_y) ≤ N_t(δ + ρ²ε)` under fresh
/// Gaussian masks per trial.
pub fn theorem_check(cfg: &TheoremCheckConfig) -> Result<TheoremCheckReport> {
    if !(cfg.epsilon > 0.0 && cfg.epsilon <= 16.0 / 3.0) {
        return Err(SciError::invalid(format!("epsilon must lie in (0, 16/3], got {}", cfg.epsilon)));
    }
    if cfg.trials == 0 {
        return Err(SciError::invalid("trials must be >= 1"));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(SciError::invalid("sigma must be >= 0"));
    }
    let codebook = Codebook::uniform_grid(cfg.dims, cfg.levels, cfg.rho)?;
    let (nx, ny, nt) = cfg.dims;
    let delta = match cfg.signals {
        TrialSignals::Codewords => 0.0,
        TrialSignals::Perturbed => codebook.analytic_distortion().unwrap_or(0.0),
    };
    let bound = nt as f64 * (delta + cfg.rho * cfg.rho * cfg.epsilon);
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, &codebook, bound, t))
        .collect::<Result<_>>()?;
    let successes = outcomes.iter().filter(|o| o.success).count();
    let delta_measured = outcomes.iter().map(|o| o.distortion).fold(0.0, f64::max);
    let success_frequency = successes as f64 / cfg.trials as f64;
    let rate = codebook.rate();
    let pixels = (nx * ny) as f64;
    let floor_log_term = (codebook.log2_count() + 1.0) * std::f64::consts::LN_2 - pixels * (3.0 * cfg.epsilon / 32.0).powi(2);
    let floor = -floor_log_term.exp_m1();
    let vacuous = floor <= 0.0;
    let p = floor.clamp(0.0, 1.0);
    let margin = 3.0 * (p * (1.0 - p) / cfg.trials as f64).sqrt();
    let verdict = if vacuous || success_frequency >= floor - margin {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let eta = if delta > 0.0 && delta < 1.0 {
        64.0 * (1.0 / delta).ln() / (cfg.epsilon * cfg.epsilon)
    } else {
        f64::INFINITY
    };
    Ok(TheoremCheckReport {
        dims: cfg.dims,
        levels: cfg.levels,
        rho: cfg.rho,
        signals: cfg.signals,
        sigma: cfg.sigma,
        trials: cfg.trials,
        epsilon: cfg.epsilon,
        eta,
        nt_bound: cfg.epsilon * cfg.epsilon / (128.0 * rate),
        rate,
        delta,
        delta_measured,
        error_bound: bound,
        successes,
        success_frequency,
        violation_frequency: 1.0 - success_frequency,
        floor,
        floor_log_term,
        margin,
        vacuous,
        verdict,
    })
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

impl TheoremCheckReport {
    fn fields(&self) -> Vec<(&'static str, String)> {
        let (nx, ny, nt) = self.dims;
        vec![
            ("dims", format!("{nx}x{ny}x{nt}")),
            ("levels", self.levels.to_string()),
            ("rho", self.rho.to_string()),
            ("signals", self.signals.name().to_string()),
            ("sigma", self.sigma.to_string()),
            ("trials", self.trials.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("eta", format!("{:.6e}", self.eta)),
            ("nt_bound", format!("{:.6e}", self.nt_bound)),
            ("rate", format!("{:.6}", self.rate)),
            ("delta", format!("{:.6e}", self.delta)),
            ("delta_measured", format!("{:.6e}", self.delta_measured)),
            ("error_bound", format!("{:.6e}", self.error_bound)),
            ("successes", self.successes.to_string()),
            ("success_frequency", format!("{:.6}", self.success_frequency)),
            ("violation_frequency", format!("{:.6}", self.violation_frequency)),
            ("floor", format!("{:.6e}", self.floor)),
            ("floor_log_term", format!("{:.6}", self.floor_log_term)),
            ("margin", format!("{:.6}", self.margin)),
            ("vacuous", self.vacuous.to_string()),
            ("verdict", self.verdict.name().to_string()),
        ]
    }

    pub fn to_csv(&self) -> String {
        let f = self.fields();
        let header: Vec<&str> = f.iter().map(|(k, _)| *k).collect();
        let row: Vec<&str> = f.iter().map(|(_, v)| v.as_str()).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("theorem check\n");
        for (k, v) in self.fields() {
            let _ = writeln!(out, "  {k:<20} {v}");
        }
        if self.vacuous {
            out.push_str("  note: probability floor is <= 0 at these dims, so the bound is vacuous\n");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::MaskStack;

    #[test]
    fn uniform_codebook_examples() {
        let cb = build_uniform_codebook((1, 1, 1), 2, 1.0).unwrap();
        assert_eq!(cb.codeword(0).unwrap(), vec![-0.25]);
        assert_eq!(cb.codeword(1).unwrap(), vec![0.25]);
        let cb = build_uniform_codebook((2, 1, 1), 2, 1.0).unwrap();
        assert_eq!(cb.count(), Some(4));
        assert_eq!(cb.rate(), 1.0);
        assert_eq!(2f64.powf(cb.log2_count()), 4.0);
        assert!(matches!(
            build_uniform_codebook((8, 8, 2), 2, 1.0),
            Err(SciError::Capacity { .. })
        ));
        assert!(build_uniform_codebook((1, 1, 1), 1, 1.0).is_err());
    }

    #[test]
    fn nearest_examples() {
        let cb = Codebook::from_list((1, 1, 1), 2.0, vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(nearest_codeword(&[0.8], &cb).unwrap(), (vec![1.0], 1));
        assert_eq!(nearest_codeword(&[0.5], &cb).unwrap(), (vec![0.0], 0));
        let grid = build_uniform_codebook((2, 1, 1), 4, 1.0).unwrap();
        let w = grid.codeword(9).unwrap();
        assert_eq!(nearest_codeword(&w, &grid).unwrap(), (w.clone(), 9));
        assert!(nearest_codeword(&[0.0], &grid).is_err());
        assert!(Codebook::from_list((1, 1, 1), 1.0, vec![]).is_err());
    }

    #[test]
    fn grid_nearest_matches_scan() {
        let grid = build_uniform_codebook((3, 1, 1), 3, 1.0).unwrap();
        let words: Vec<Vec<f64>> = (0..27).map(|i| grid.codeword(i).unwrap()).collect();
        let list = Codebook::from_list((3, 1, 1), 1.0, words).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.6..0.6)).collect();
            assert_eq!(nearest_codeword(&x, &grid).unwrap(), nearest_codeword(&x, &list).unwrap());
        }
        // boundary point between levels 0 and 1 goes to level 0 in both
        let b = [-1.0 / 6.0, 0.0, 1.0 / 6.0];
        assert_eq!(nearest_codeword(&b, &grid).unwrap(), nearest_codeword(&b, &list).unwrap());
    }

    #[test]
    fn scalar_distortion_matches_half_cell() {
        for levels in [2usize, 4, 7] {
            let cb = build_uniform_codebook((1, 1, 1), levels, 1.0).unwrap();
            let samples: Vec<Vec<f64>> = (0..=20000).map(|i| vec![-0.5 + i as f64 / 20000.0]).collect();
            let d = distortion_rate(&cb, &samples).unwrap();
            let expected = (1.0 / levels as f64).powi(2) / 4.0;
            assert!((d - expected).abs() <= 0.02 * expected, "{levels}: {d} vs {expected}");
        }
        let cb = build_uniform_codebook((1, 1, 1), 4, 1.0).unwrap();
        assert!((cb.analytic_distortion().unwrap() - 1.0 / 64.0).abs() < 1e-15);
        let members: Vec<Vec<f64>> = (0..4).map(|i| cb.codeword(i).unwrap()).collect();
        assert_eq!(distortion_rate(&cb, &members).unwrap(), 0.0);
    }

    fn gaussian_op(dims: (usize, usize, usize), seed: u64) -> SensingOperator {
        SensingOperator::cacti(make_masks(MaskKind::Gaussian, dims.0, dims.1, dims.2, seed).unwrap())
    }

    fn measure(op: &SensingOperator, x: &[f64]) -> Measurement {
        let (r, c) = op.measurement_dims();
        Measurement::new(r, c, op.apply(x).unwrap(), SensingMode::Cacti, op.signal_dims().2).unwrap()
    }

    #[test]
    fn csp_recovers_codebook_member() {
        let cb = build_uniform_codebook((2, 2, 2), 2, 1.0).unwrap();
        let op = gaussian_op((2, 2, 2), 4);
        let truth = cb.codeword(173).unwrap();
        let (c, obj) = csp_solve(&measure(&op, &truth), &op, &cb).unwrap();
        assert!(obj < 1e-24);
        assert_eq!(c, truth);
    }

    #[test]
    fn csp_two_point_codebook() {
        let op = SensingOperator::cacti(MaskStack::from_values(1, 1, 2, vec![1.0, 1.0]).unwrap());
        let cb = Codebook::from_list((1, 1, 2), 1.0, vec![vec![0.0, 0.0], vec![0.4, 0.1]]).unwrap();
        let y = Measurement::new(1, 1, vec![0.45], SensingMode::Cacti, 2).unwrap();
        let (c, obj) = csp_solve(&y, &op, &cb).unwrap();
        assert_eq!(c, vec![0.4, 0.1]);
        assert!((obj - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn grid_csp_matches_brute_force_over_all_256() {
        // independent exhaustive loop over the 2x2x2, 2-level grid (256 words)
        let dims = (2, 2, 2);
        let cb = build_uniform_codebook(dims, 2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let op = gaussian_op(dims, trial);
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
            let y = measure(&op, &x);
            let dense = crate::build_dense_phi(&op).unwrap();
            let mut best = (f64::INFINITY, vec![]);
            for idx in 0..256u32 {
                let c: Vec<f64> = (0..8).map(|n| if idx >> n & 1 == 1 { 0.25 } else { -0.25 }).collect();
                let phic = &dense * nalgebra::DVector::from_column_slice(&c);
                let obj: f64 = (0..4).map(|r| (y.as_slice()[r] - phic[r]).powi(2)).sum();
                if obj < best.0 {
                    best = (obj, c);
                }
            }
            let (c, obj) = csp_solve(&y, &op, &cb).unwrap();
            assert_eq!(c, best.1);
            assert!((obj - best.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csp_guard() {
        let op = SensingOperator::new(
            make_masks(MaskKind::Gaussian, 4, 4, 2, 1).unwrap(),
            SensingMode::Cassi { step: 1, reference: 0 },
        )
        .unwrap();
        let cb = Codebook::uniform_grid((4, 4, 2), 3, 1.0).unwrap();
        let y = measure_cassi(&op);
        assert!(matches!(csp_solve(&y, &op, &cb), Err(SciError::Capacity { .. })));
    }

    fn measure_cassi(op: &SensingOperator) -> Measurement {
        let (r, c) = op.measurement_dims();
        Measurement::new(r, c, vec![0.0; r * c], op.mode(), op.signal_dims().2).unwrap()
    }

    #[test]
    fn codeword_trials_always_succeed() {
        let mut cfg = TheoremCheckConfig::new((2, 2, 2), 2, 1000, 1.0, 11);
        cfg.signals = TrialSignals::Codewords;
        let rep = theorem_check(&cfg).unwrap();
        assert_eq!(rep.success_frequency, 1.0);
        assert_eq!(rep.delta, 0.0);
        assert_eq!(rep.delta_measured, 0.0);
        assert!(rep.vacuous);
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn success_is_monotone_in_epsilon() {
        let mut last = 0.0;
        for eps in [1e-4, 1e-2, 1.0] {
            let cfg = TheoremCheckConfig::new((3, 3, 2), 2, 200, eps, 5);
            let f = theorem_check(&cfg).unwrap().success_frequency;
            assert!(f >= last);
            last = f;
        }
    }

    #[test]
    fn theorem_check_rejects_bad_epsilon() {
        assert!(theorem_check(&TheoremCheckConfig::new((2, 2, 2), 2, 10, 6.0, 1)).is_err());
        assert!(theorem_check(&TheoremCheckConfig::new((2, 2, 2), 2, 10, 0.0, 1)).is_err());
    }

    #[test]
    fn report_exports_every_field() {
        let rep = theorem_check(&TheoremCheckConfig::new((2, 2, 2), 2, 20, 0.5, 1)).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[0].contains("floor") && lines[0].contains("verdict"));
        assert!(rep.to_text().contains("vacuous"));
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|t| trial_seed(3, t)).collect();
        assert_eq!(s.len(), 1000);
    }
}
