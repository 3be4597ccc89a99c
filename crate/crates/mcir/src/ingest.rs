//! Readout decoupling for 3D Cartesian acquisitions: a centered orthonormal
//! 1D inverse FFT along the kx (first) axis turns the 3D problem into a
//! stack of independent 2D slice reconstructions. [`recompose_readout`]
//! inverts it exactly.

use ndarray::{ArrayD, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::fft1c;

fn transform_axis0(data: &ArrayD<Complex64>, inverse: bool) -> Result<ArrayD<Complex64>> {
    if data.ndim() == 0 {
        return Err(Error::invalid("readout data needs at least one axis"));
    }
    if data.shape()[0] == 0 {
        return Err(Error::invalid("readout axis is empty"));
    }
    let mut out = data.clone();
    let vx = out.shape()[0];
    let mut buf = vec![Complex64::new(0.0, 0.0); vx];
    for mut lane in out.lanes_mut(Axis(0)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft1c(&mut buf, inverse);
        for (v, b) in lane.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
    Ok(out)
}

/// kx-resolved k-space -> per-slice k-space stack (slice index on axis 0).
pub fn decouple_readout(ksp3d: &ArrayD<Complex64>) -> Result<ArrayD<Complex64>> {
    transform_axis0(ksp3d, true)
}

/// Inverse of [`decouple_readout`].
pub fn recompose_readout(slices: &ArrayD<Complex64>) -> Result<ArrayD<Complex64>> {
    transform_axis0(slices, false)
}
