//! Image-quality metrics, synthetic scenes and the benchmark harness.

pub mod bench;
pub mod metrics;
pub mod scenes;

pub use bench::{run_benchmark, BenchReport, BenchRow, BenchSettings, SolverSettings, SOLVER_IDS};
pub use metrics::{mse, psnr, ssim};
pub use scenes::{SceneKind, SceneSpec};
