//! The structured sensing operator `Φ = [D_1, …, D_Nt]` and its CASSI variant.
//!
//! In CACTI mode every frame is modulated by its own mask and the frames are
//! summed on an `nx x ny` detector. In CASSI mode channel `k` is modulated by
//! its mask and then shifted `k * step` columns before summation, giving an
//! `nx x (ny + (nt - 1) * step)` detector. Both are a sum over frames of a
//! diagonal modulation followed by an injective column shift, so `ΦΦᵀ` stays
//! diagonal.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::masks::MaskStack;
use crate::shear::{channel_offset, sheared_width};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensingMode {
    Cacti,
    Cassi { step: usize, reference: usize },
}

impl SensingMode {
    pub fn name(&self) -> &'static str {
        match self {
            SensingMode::Cacti => "cacti",
            SensingMode::Cassi { .. } => "cassi",
        }
    }
}

/// Additive white Gaussian detector noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SciError::invalid(format!("noise sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }

    fn apply(&self, data: &mut [f64]) -> Result<()> {
        if self.sigma == 0.0 {
            return Ok(());
        }
        let normal =
            Normal::new(0.0, self.sigma).map_err(|e| SciError::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        Ok(())
    }
}

/// A coded 2D snapshot, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pub noise_sigma: f64,
    pub mode: SensingMode,
    /// Number of frames (CACTI) or spectral channels (CASSI) folded in.
    pub frames: usize,
}

impl Measurement {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        mode: SensingMode,
        frames: usize,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(SciError::mismatch(format!(
                "measurement {rows}x{cols} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            noise_sigma: 0.0,
            mode,
            frames,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    /// Row-major copy, `out[i][j]`.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    masks: MaskStack,
    mode: SensingMode,
}

impl SensingOperator {
    pub fn cacti(masks: MaskStack) -> Self {
        Self {
            masks,
            mode: SensingMode::Cacti,
        }
    }

    /// CASSI operator with one (possibly channel-specific) mask per channel.
    pub fn cassi(masks: MaskStack, step: usize, reference: usize) -> Result<Self> {
        if reference >= masks.nt() {
            return Err(SciError::invalid(format!(
                "reference channel {reference} out of range for {} channels",
                masks.nt()
            )));
        }
        Ok(Self {
            masks,
            mode: SensingMode::Cassi { step, reference },
        })
    }

    /// CASSI operator from a single physical coded aperture shared by all channels.
    pub fn cassi_physical(
        nx: usize,
        ny: usize,
        channels: usize,
        physical: &[f64],
        step: usize,
        reference: usize,
    ) -> Result<Self> {
        Self::cassi(MaskStack::replicate(nx, ny, channels, physical)?, step, reference)
    }

    pub fn new(masks: MaskStack, mode: SensingMode) -> Result<Self> {
        match mode {
            SensingMode::Cacti => Ok(Self::cacti(masks)),
            SensingMode::Cassi { step, reference } => Self::cassi(masks, step, reference),
        }
    }

    pub fn masks(&self) -> &MaskStack {
        &self.masks
    }

    pub fn mode(&self) -> SensingMode {
        self.mode
    }

    pub fn signal_dims(&self) -> (usize, usize, usize) {
        self.masks.dims()
    }

    pub fn signal_len(&self) -> usize {
        let (nx, ny, nt) = self.signal_dims();
        nx * ny * nt
    }

    pub fn measurement_dims(&self) -> (usize, usize) {
        let (nx, ny, nt) = self.signal_dims();
        match self.mode {
            SensingMode::Cacti => (nx, ny),
            SensingMode::Cassi { step, .. } => (nx, sheared_width(ny, nt, step)),
        }
    }

    pub fn measurement_len(&self) -> usize {
        let (r, c) = self.measurement_dims();
        r * c
    }

    /// Flat offset added to a frame pixel index to reach its detector pixel.
    #[inline]
    fn frame_shift(&self, k: usize) -> usize {
        match self.mode {
            SensingMode::Cacti => 0,
            SensingMode::Cassi { step, .. } => channel_offset(k, step) * self.masks.nx(),
        }
    }

    fn check_cube(&self, cube: &DataCube) -> Result<()> {
        if cube.dims() != self.signal_dims() {
            return Err(SciError::mismatch(format!(
                "cube {:?} does not match operator {:?}",
                cube.dims(),
                self.signal_dims()
            )));
        }
        Ok(())
    }

    fn check_measurement(&self, len: usize) -> Result<()> {
        if len != self.measurement_len() {
            return Err(SciError::mismatch(format!(
                "measurement has {len} values, operator expects {:?}",
                self.measurement_dims()
            )));
        }
        Ok(())
    }

    /// `Φx` as a raw vector, no range checks.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.signal_len() {
            return Err(SciError::mismatch(format!(
                "signal has {} values, operator expects {}",
                x.len(),
                self.signal_len()
            )));
        }
        let mut y = vec![0.0; self.measurement_len()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (nx, ny, nt) = self.signal_dims();
        let n = nx * ny;
        y.fill(0.0);
        for k in 0..nt {
            let shift = self.frame_shift(k);
            let m = self.masks.frame(k);
            let xk = &x[k * n..(k + 1) * n];
            let yk = &mut y[shift..shift + n];
            for ((yv, mv), xv) in yk.iter_mut().zip(m).zip(xk) {
                *yv += mv * xv;
            }
        }
    }

    /// `Φᵀy` as a raw vector.
    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_measurement(y.len())?;
        let mut x = vec![0.0; self.signal_len()];
        self.apply_adjoint_into(y, &mut x);
        Ok(x)
    }

    pub(crate) fn apply_adjoint_into(&self, y: &[f64], x: &mut [f64]) {
        let (nx, ny, nt) = self.signal_dims();
        let n = nx * ny;
        for k in 0..nt {
            let shift = self.frame_shift(k);
            let m = self.masks.frame(k);
            let yk = &y[shift..shift + n];
            for ((xv, mv), yv) in x[k * n..(k + 1) * n].iter_mut().zip(m).zip(yk) {
                *xv = mv * yv;
            }
        }
    }

    /// Simulates a snapshot. The cube must be a signal (values in `[0, peak]`).
    pub fn forward(&self, cube: &DataCube, noise: &NoiseModel) -> Result<Measurement> {
        self.check_cube(cube)?;
        cube.validate_signal()?;
        let mut data = self.apply(cube.as_slice())?;
        noise.apply(&mut data)?;
        let (rows, cols) = self.measurement_dims();
        let mut meas = Measurement::new(rows, cols, data, self.mode, self.masks.nt())?;
        meas.noise_sigma = noise.sigma;
        Ok(meas)
    }

    pub fn adjoint(&self, measurement: &Measurement) -> Result<DataCube> {
        if (measurement.rows(), measurement.cols()) != self.measurement_dims() {
            return Err(SciError::mismatch(format!(
                "measurement {}x{} does not match operator {:?}",
                measurement.rows(),
                measurement.cols(),
                self.measurement_dims()
            )));
        }
        let (nx, ny, nt) = self.signal_dims();
        DataCube::from_vec(nx, ny, nt, self.apply_adjoint(measurement.as_slice())?)
    }

    /// Diagonal of `ΦΦᵀ`: `ψ_i = Σ_k M_k(i)²` on each detector pixel.
    pub fn phi_phit_diag(&self) -> Vec<f64> {
        let (nx, ny, nt) = self.signal_dims();
        let n = nx * ny;
        let mut psi = vec![0.0; self.measurement_len()];
        for k in 0..nt {
            let shift = self.frame_shift(k);
            for (p, m) in psi[shift..shift + n].iter_mut().zip(self.masks.frame(k)) {
                *p += m * m;
            }
        }
        psi
    }

    /// `ψ`, failing if any detector pixel is unsensed.
    pub fn checked_phi_phit_diag(&self) -> Result<Vec<f64>> {
        let psi = self.phi_phit_diag();
        let count = psi.iter().filter(|&&p| p <= 0.0).count();
        if count > 0 {
            return Err(SciError::SingularOperator { count });
        }
        Ok(psi)
    }

    /// Minimum-norm consistent estimate `Φᵀ(ΦΦᵀ)⁻¹y`.
    pub fn least_squares_init(&self, measurement: &Measurement) -> Result<DataCube> {
        self.check_measurement(measurement.as_slice().len())?;
        let psi = self.checked_phi_phit_diag()?;
        let scaled: Vec<f64> = measurement
            .as_slice()
            .iter()
            .zip(&psi)
            .map(|(y, p)| y / p)
            .collect();
        let (nx, ny, nt) = self.signal_dims();
        DataCube::from_vec(nx, ny, nt, self.apply_adjoint(&scaled)?)
    }
}

/// Largest signal length [`build_dense_phi`] will materialize.
pub const DENSE_SIGNAL_LIMIT: usize = 65_536;
/// Largest number of dense matrix entries [`build_dense_phi`] will allocate.
pub const DENSE_ENTRY_LIMIT: u128 = 1 << 28;

/// Explicit `Φ` matrix, one column per signal element in vec order.
///
/// Used as a test oracle; it never feeds the structured code paths.
pub fn build_dense_phi(op: &SensingOperator) -> Result<DMatrix<f64>> {
    let cols = op.signal_len();
    let rows = op.measurement_len();
    if cols > DENSE_SIGNAL_LIMIT {
        return Err(SciError::Capacity {
            what: "dense sensing matrix",
            requested: cols as u128,
            limit: DENSE_SIGNAL_LIMIT as u128,
        });
    }
    let entries = rows as u128 * cols as u128;
    if entries > DENSE_ENTRY_LIMIT {
        return Err(SciError::Capacity {
            what: "dense sensing matrix entries",
            requested: entries,
            limit: DENSE_ENTRY_LIMIT,
        });
    }
    let (nx, ny, nt) = op.signal_dims();
    let n = nx * ny;
    let mut phi = DMatrix::zeros(rows, cols);
    for k in 0..nt {
        let shift = op.frame_shift(k);
        for (p, &m) in op.masks().frame(k).iter().enumerate() {
            phi[(shift + p, k * n + p)] = m;
        }
    }
    Ok(phi)
}
