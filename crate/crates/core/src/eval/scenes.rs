//! Seeded synthetic scenes standing in for external benchmark videos.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::DataCube;
use crate::error::{Result, SciError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Bright square translating over a flat background.
    MovingSquare,
    /// Gaussian blob drifting across the frame.
    GaussianBlob,
    /// Sum of low-frequency cosines with slowly varying phase.
    SmoothField,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [
        SceneKind::MovingSquare,
        SceneKind::GaussianBlob,
        SceneKind::SmoothField,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SceneKind::MovingSquare => "moving-square",
            SceneKind::GaussianBlob => "gaussian-blob",
            SceneKind::SmoothField => "smooth-field",
        }
    }
}

impl FromStr for SceneKind {
    type Err = SciError;

    fn from_str(s: &str) -> Result<Self> {
        SceneKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                SciError::invalid(format!(
                    "unknown scene '{s}', expected one of moving-square, gaussian-blob, smooth-field"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, nx: usize, ny: usize, nt: usize, seed: u64) -> Self {
        Self { kind, nx, ny, nt, seed }
    }

    pub fn id(&self) -> String {
        format!("{}-{}x{}x{}-s{}", self.kind.name(), self.nx, self.ny, self.nt, self.seed)
    }

    pub fn generate(&self) -> Result<DataCube> {
        match self.kind {
            SceneKind::MovingSquare => moving_square(self.nx, self.ny, self.nt, self.seed),
            SceneKind::GaussianBlob => gaussian_blob(self.nx, self.ny, self.nt, self.seed),
            SceneKind::SmoothField => smooth_field(self.nx, self.ny, self.nt, self.seed),
        }
    }
}

/// Square of side `max(2, nx/4)` at intensity 0.85 over a 0.15 background,
/// moving one or two pixels per frame along each axis and bouncing off edges.
pub fn moving_square(nx: usize, ny: usize, nt: usize, seed: u64) -> Result<DataCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (nx.min(ny) / 4).max(2).min(nx.min(ny));
    let span_i = (nx - side) as i64;
    let span_j = (ny - side) as i64;
    let mut pos_i = if span_i > 0 { rng.random_range(0..=span_i) } else { 0 };
    let mut pos_j = if span_j > 0 { rng.random_range(0..=span_j) } else { 0 };
    let mut vel_i: i64 = if rng.random_bool(0.5) { 1 } else { -1 } * rng.random_range(1..=2);
    let mut vel_j: i64 = if rng.random_bool(0.5) { 1 } else { -1 } * rng.random_range(1..=2);
    let mut cube = DataCube::filled(nx, ny, nt, 0.15)?;
    for k in 0..nt {
        for j in pos_j as usize..pos_j as usize + side {
            for i in pos_i as usize..pos_i as usize + side {
                cube.set(i, j, k, 0.85);
            }
        }
        bounce(&mut pos_i, &mut vel_i, span_i);
        bounce(&mut pos_j, &mut vel_j, span_j);
    }
    Ok(cube)
}

fn bounce(pos: &mut i64, vel: &mut i64, span: i64) {
    if span == 0 {
        return;
    }
    let mut next = *pos + *vel;
    if next < 0 || next > span {
        *vel = -*vel;
        next = (*pos + *vel).clamp(0, span);
    }
    *pos = next;
}

/// Isotropic Gaussian blob of width `nx/8` drifting on a straight line.
pub fn gaussian_blob(nx: usize, ny: usize, nt: usize, seed: u64) -> Result<DataCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (nx.min(ny) as f64 / 8.0).max(1.0);
    let ci = rng.random_range(0.3..0.7) * nx as f64;
    let cj = rng.random_range(0.3..0.7) * ny as f64;
    let di = rng.random_range(-1.5..1.5);
    let dj = rng.random_range(-1.5..1.5);
    DataCube::from_fn(nx, ny, nt, |i, j, k| {
        let (a, b) = (i as f64 - (ci + di * k as f64), j as f64 - (cj + dj * k as f64));
        0.1 + 0.8 * (-(a * a + b * b) / (2.0 * width * width)).exp()
    })
}

/// Smooth random field in `[0.1, 0.9]`.
pub fn smooth_field(nx: usize, ny: usize, nt: usize, seed: u64) -> Result<DataCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[f64; 5]> = (0..4)
        .map(|_| {
            [
                rng.random_range(0.5..3.0) / nx as f64,
                rng.random_range(0.5..3.0) / ny as f64,
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.05..0.3),
                rng.random_range(0.5..1.0),
            ]
        })
        .collect();
    let total: f64 = waves.iter().map(|w| w[4]).sum();
    DataCube::from_fn(nx, ny, nt, |i, j, k| {
        let s: f64 = waves
            .iter()
            .map(|w| w[4] * (2.0 * PI * (w[0] * i as f64 + w[1] * j as f64) + w[2] + w[3] * k as f64).cos())
            .sum();
        0.5 + 0.4 * s / total
    })
}
