//! GAP projections alternated with WNNM group shrinkage.

use crate::cube::DataCube;
use crate::error::{Result, SciError};
use crate::operator::{Measurement, SensingOperator};
use crate::patch::require_cacti;
use crate::patch::wnnm::{match_groups, shrink_groups, GroupMatchConfig};
use crate::solvers::iterative::{record_psnr, relative_change, residuals};
use crate::solvers::{gap_project, IterRecord, SolveTrace};

/// One outer iteration per entry of `sigma_schedule`:
/// `x = v + Φᵀ(ΦΦᵀ)⁻¹(y − Φv)`, then `v = WNNM_σ(x)`. Starts from `init`
/// (for example a GAP-TV estimate) or from zero. Returns the final `v`.
pub fn desci_solve(
    op: &SensingOperator,
    y: &Measurement,
    config: &GroupMatchConfig,
    init: Option<&DataCube>,
    reference: Option<&DataCube>,
) -> Result<(DataCube, SolveTrace)> {
    require_cacti(op, "desci")?;
    let dims = op.signal_dims();
    config.validate(dims)?;
    if (y.rows(), y.cols()) != op.measurement_dims() {
        return Err(SciError::mismatch("measurement does not match operator"));
    }
    let psi = op.checked_phi_phit_diag()?;
    let mut v = match init {
        Some(c) if c.dims() != dims => {
            return Err(SciError::mismatch("initial estimate does not match operator"))
        }
        Some(c) => c.clone(),
        None => DataCube::zeros(dims.0, dims.1, dims.2)?,
    };
    let mut x_prev = v.clone();
    let mut x = v.clone();
    let mut records = Vec::with_capacity(config.sigma_schedule.len());
    let mut groups = Vec::new();
    for (n, &sigma) in config.sigma_schedule.iter().enumerate() {
        x = gap_project(op, y, &psi, &v);
        if n % config.rematch_every == 0 {
            groups = match_groups(&x, config);
        }
        v = shrink_groups(&x, &groups, sigma, config)?;
        let (residual, residual_inf) = residuals(op, y.as_slice(), &x);
        let change = relative_change(&x, &x_prev);
        records.push(IterRecord {
            iter: n + 1,
            residual,
            residual_inf,
            change,
            psnr: record_psnr(reference, &v)?,
        });
        x_prev.clone_from(&x);
    }
    Ok((
        v,
        SolveTrace {
            records,
            final_x: x,
            final_u: None,
            converged: true,
        },
    ))
}
