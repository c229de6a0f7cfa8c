//! Iterative reconstruction: ADMM, GAP and the TV prior.

pub mod iterative;
pub mod tv;

pub use iterative::{
    admm_solve, admm_solve_from, gap_project, gap_solve, gap_solve_from, x_update_closed_form,
    Denoiser, IterRecord, SolveTrace, SolverConfig,
};
pub use tv::{tv_denoise, tv_denoise_3d};
