//! Integer-pixel dispersion along the column axis.

use crate::cube::DataCube;
use crate::error::{Result, SciError};

/// Column offset of channel `k` after normalizing the minimum offset to zero.
///
/// The raw offset is `(k - reference) * step`; with `step >= 0` the smallest
/// raw offset belongs to channel 0, so the normalized offset is `k * step`
/// whatever the reference channel is.
#[inline]
pub fn channel_offset(k: usize, step: usize) -> usize {
    k * step
}

/// Width of the sheared cube: `ny + (nt - 1) * step`.
pub fn sheared_width(ny: usize, nt: usize, step: usize) -> usize {
    ny + (nt - 1) * step
}

pub fn shear_cube(cube: &DataCube, step: usize, reference: usize) -> Result<DataCube> {
    let (nx, ny, nt) = cube.dims();
    check_reference(reference, nt)?;
    let width = sheared_width(ny, nt, step);
    let mut out = DataCube::zeros(nx, width, nt)?.with_peak(cube.peak());
    for k in 0..nt {
        let off = channel_offset(k, step);
        let src = cube.frame(k);
        let dst = out.frame_mut(k);
        // columns are contiguous in vec order
        dst[off * nx..(off + ny) * nx].copy_from_slice(src);
    }
    Ok(out)
}

/// Inverse of [`shear_cube`]: reads each channel back from its shifted support.
pub fn unshear_cube(sheared: &DataCube, ny: usize, step: usize, reference: usize) -> Result<DataCube> {
    let (nx, width, nt) = sheared.dims();
    check_reference(reference, nt)?;
    if ny == 0 || sheared_width(ny, nt, step) != width {
        return Err(SciError::mismatch(format!(
            "sheared width {width} does not match ny={ny}, nt={nt}, step={step}"
        )));
    }
    let mut out = DataCube::zeros(nx, ny, nt)?.with_peak(sheared.peak());
    for k in 0..nt {
        let off = channel_offset(k, step);
        out.frame_mut(k)
            .copy_from_slice(&sheared.frame(k)[off * nx..(off + ny) * nx]);
    }
    Ok(out)
}

fn check_reference(reference: usize, nt: usize) -> Result<()> {
    if reference >= nt {
        return Err(SciError::invalid(format!(
            "reference channel {reference} out of range for {nt} channels"
        )));
    }
    Ok(())
}
