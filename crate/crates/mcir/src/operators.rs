//! MRI measurement physics: centered orthonormal FFTs, coil projection,
//! masking, the multi-coil multi-contrast forward model, its adjoint, and
//! the distance-weighted k-space data-consistency loss with its analytic
//! image-domain gradient.
//!
//! Complex gradient convention: the loss is real-valued, images are complex.
//! [`loss_grad_images`] returns the packed real-calculus gradient, i.e. the
//! complex array G with Re(G) = dL/d(Re d) and Im(G) = dL/d(Im d), which is
//! twice the Wirtinger derivative dL/d(conj d). Downstream real-channel
//! backpropagation therefore consumes Re/Im of G directly.

use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::phantom::CoilSensitivities;
use crate::sampling::MaskSet;

/// Complex image stack, one 2D image per contrast: shape (N, Vy, Vz).
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastImageStack {
    pub data: Array3<Complex64>,
}

impl ContrastImageStack {
    pub fn new(data: Array3<Complex64>) -> Self {
        ContrastImageStack { data }
    }

    pub fn zeros(n: usize, vy: usize, vz: usize) -> Self {
        ContrastImageStack {
            data: Array3::zeros((n, vy, vz)),
        }
    }

    pub fn n_contrasts(&self) -> usize {
        self.data.dim().0
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, vy, vz) = self.data.dim();
        (vy, vz)
    }
}

/// Acquired k-space samples per coil and contrast: shape (C, N, Vy, Vz),
/// exactly zero at unsampled locations of the associated masks.
#[derive(Debug, Clone)]
pub struct KSpaceData {
    pub data: Array4<Complex64>,
    pub masks: MaskSet,
}

impl KSpaceData {
    /// Build k-space data, zeroing any entry outside its contrast mask so the
    /// stored-masked invariant holds no matter where the data came from.
    pub fn new(mut data: Array4<Complex64>, masks: MaskSet) -> Result<Self> {
        let (_, n, vy, vz) = data.dim();
        if masks.len() != n || masks.grid() != (vy, vz) {
            return Err(Error::shape(
                format!("masks for {} contrasts on {}x{}", n, vy, vz),
                format!("{} masks on {:?}", masks.len(), masks.grid()),
            ));
        }
        for c in 0..data.dim().0 {
            for nn in 0..n {
                let bits = &masks.masks[nn].bits;
                for iy in 0..vy {
                    for iz in 0..vz {
                        if !bits[[iy, iz]] {
                            data[[c, nn, iy, iz]] = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
        }
        Ok(KSpaceData { data, masks })
    }

    pub fn coils(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_contrasts(&self) -> usize {
        self.data.dim().1
    }

    pub fn grid(&self) -> (usize, usize) {
        let (_, _, vy, vz) = self.data.dim();
        (vy, vz)
    }

    /// Largest sample magnitude; used to normalize data before training.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }
}

/// Loss weights W(ky, kz) = sqrt(ky^2 + kz^2) + 1 on centered integer
/// frequency indices; exactly 1 at the DC index and radially nondecreasing.
#[derive(Debug, Clone)]
pub struct DistanceWeights {
    pub w: Array2<f64>,
}

/// Index of the DC component along one axis after centering.
pub fn centered_index(v: usize) -> usize {
    v / 2
}

/// Centered integer frequency of array index `i` on an axis of length `v`.
pub fn centered_freq(i: usize, v: usize) -> i64 {
    i as i64 - (v / 2) as i64
}

pub fn distance_weights(vy: usize, vz: usize) -> DistanceWeights {
    let w = Array2::from_shape_fn((vy, vz), |(iy, iz)| {
        let ky = centered_freq(iy, vy) as f64;
        let kz = centered_freq(iz, vz) as f64;
        (ky * ky + kz * kz).sqrt() + 1.0
    });
    DistanceWeights { w }
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .unwrap();
    if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    }
}

/// out[i][j] = in[(i + sy) % vy][(j + sz) % vz]
fn roll2(a: &Array2<Complex64>, sy: usize, sz: usize) -> Array2<Complex64> {
    let (vy, vz) = a.dim();
    Array2::from_shape_fn((vy, vz), |(i, j)| a[[(i + sy) % vy, (j + sz) % vz]])
}

fn fft2_unscaled(a: &mut Array2<Complex64>, inverse: bool) {
    let (vy, vz) = a.dim();
    let row_fft = plan(vz, inverse);
    {
        let slice = a.as_slice_mut().expect("standard layout");
        for row in slice.chunks_exact_mut(vz) {
            row_fft.process(row);
        }
    }
    let col_fft = plan(vy, inverse);
    let mut buf = vec![Complex64::new(0.0, 0.0); vy];
    for j in 0..vz {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = a[[i, j]];
        }
        col_fft.process(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            a[[i, j]] = *b;
        }
    }
}

/// Centered, orthonormally scaled 2D FFT (DC lands at the array center).
pub fn fft2c(img: &Array2<Complex64>) -> Array2<Complex64> {
    let (vy, vz) = img.dim();
    let mut a = roll2(img, vy / 2, vz / 2); // ifftshift
    fft2_unscaled(&mut a, false);
    let mut out = roll2(&a, vy - vy / 2, vz - vz / 2); // fftshift
    let scale = 1.0 / ((vy * vz) as f64).sqrt();
    out.mapv_inplace(|v| v * scale);
    out
}

/// Inverse of [`fft2c`]; ifft2c(fft2c(x)) == x to roundoff.
pub fn ifft2c(ksp: &Array2<Complex64>) -> Array2<Complex64> {
    let (vy, vz) = ksp.dim();
    let mut a = roll2(ksp, vy / 2, vz / 2);
    fft2_unscaled(&mut a, true);
    let mut out = roll2(&a, vy - vy / 2, vz - vz / 2);
    let scale = 1.0 / ((vy * vz) as f64).sqrt();
    out.mapv_inplace(|v| v * scale);
    out
}

/// Centered orthonormal 1D FFT along a contiguous buffer.
pub fn fft1c(line: &mut [Complex64], inverse: bool) {
    let v = line.len();
    if v == 0 {
        return;
    }
    let shift = v / 2;
    let mut tmp: Vec<Complex64> = (0..v).map(|i| line[(i + shift) % v]).collect();
    plan(v, inverse).process(&mut tmp);
    let unshift = v - shift;
    let scale = 1.0 / (v as f64).sqrt();
    for (i, out) in line.iter_mut().enumerate() {
        *out = tmp[(i + unshift) % v] * scale;
    }
}

fn check_shapes(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
) -> Result<(usize, usize, usize, usize)> {
    let (n, vy, vz) = d.data.dim();
    let (c, cvy, cvz) = coils.maps.dim();
    if (cvy, cvz) != (vy, vz) {
        return Err(Error::shape(
            format!("coil maps on {vy}x{vz}"),
            format!("{cvy}x{cvz}"),
        ));
    }
    if masks.len() != n || masks.grid() != (vy, vz) {
        return Err(Error::shape(
            format!("{n} masks on {vy}x{vz}"),
            format!("{} masks on {:?}", masks.len(), masks.grid()),
        ));
    }
    Ok((c, n, vy, vz))
}

/// Forward model: per coil c and contrast n, mask_n .* fft2c(S_c .* d_n).
/// Linear in the image stack; noise is a separate concern.
pub fn forward_model(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
) -> Result<KSpaceData> {
    let (c, n, vy, vz) = check_shapes(d, coils, masks)?;
    let mut out = Array4::zeros((c, n, vy, vz));
    for ci in 0..c {
        let smap = coils.maps.index_axis(ndarray::Axis(0), ci);
        for ni in 0..n {
            let img = d.data.index_axis(ndarray::Axis(0), ni);
            let coil_img =
                Array2::from_shape_fn((vy, vz), |(iy, iz)| smap[[iy, iz]] * img[[iy, iz]]);
            let ksp = fft2c(&coil_img);
            let bits = &masks.masks[ni].bits;
            for iy in 0..vy {
                for iz in 0..vz {
                    if bits[[iy, iz]] {
                        out[[ci, ni, iy, iz]] = ksp[[iy, iz]];
                    }
                }
            }
        }
    }
    Ok(KSpaceData {
        data: out,
        masks: masks.clone(),
    })
}

/// Adjoint of the forward model: per contrast n,
/// sum_c conj(S_c) .* ifft2c(mask_n .* ksp[c, n]).
///
/// With full masks and per-voxel normalized coils this inverts the forward
/// model exactly; with undersampled masks it is the zero-filled baseline.
pub fn adjoint_model(
    ksp: &KSpaceData,
    coils: &CoilSensitivities,
    masks: &MaskSet,
) -> Result<ContrastImageStack> {
    let (c, n, vy, vz) = ksp.data.dim();
    let (cc, cvy, cvz) = coils.maps.dim();
    if cc != c || (cvy, cvz) != (vy, vz) {
        return Err(Error::shape(
            format!("{c} coil maps on {vy}x{vz}"),
            format!("{cc} maps on {cvy}x{cvz}"),
        ));
    }
    if masks.len() != n || masks.grid() != (vy, vz) {
        return Err(Error::shape(
            format!("{n} masks on {vy}x{vz}"),
            format!("{} masks on {:?}", masks.len(), masks.grid()),
        ));
    }
    let mut out = Array3::zeros((n, vy, vz));
    for ni in 0..n {
        let bits = &masks.masks[ni].bits;
        for ci in 0..c {
            let masked = Array2::from_shape_fn((vy, vz), |(iy, iz)| {
                if bits[[iy, iz]] {
                    ksp.data[[ci, ni, iy, iz]]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            let img = ifft2c(&masked);
            let smap = coils.maps.index_axis(ndarray::Axis(0), ci);
            for iy in 0..vy {
                for iz in 0..vz {
                    out[[ni, iy, iz]] += smap[[iy, iz]].conj() * img[[iy, iz]];
                }
            }
        }
    }
    Ok(ContrastImageStack::new(out))
}

fn check_loss_shapes(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
    acquired: &KSpaceData,
    weights: &DistanceWeights,
) -> Result<(usize, usize, usize, usize)> {
    let (c, n, vy, vz) = check_shapes(d, coils, masks)?;
    let dims = acquired.data.dim();
    if dims != (c, n, vy, vz) {
        return Err(Error::shape(
            format!("acquired k-space ({c}, {n}, {vy}, {vz})"),
            format!("{dims:?}"),
        ));
    }
    if weights.w.dim() != (vy, vz) {
        return Err(Error::shape(
            format!("weights on {vy}x{vz}"),
            format!("{:?}", weights.w.dim()),
        ));
    }
    Ok((c, n, vy, vz))
}

/// Distance-weighted data-consistency loss: the sum over coils, contrasts
/// and sampled k-space locations of |W .* (forward(d) - acquired)|^2.
pub fn weighted_loss(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
    acquired: &KSpaceData,
    weights: &DistanceWeights,
) -> Result<f64> {
    let (loss, _) = loss_terms(d, coils, masks, acquired, weights, false)?;
    Ok(loss)
}

/// Packed real-calculus gradient of [`weighted_loss`] with respect to the
/// image stack (see the module docs for the convention): per contrast n,
/// 2 * sum_c conj(S_c) .* ifft2c(W^2 .* mask_n .* residual_{c,n}).
pub fn loss_grad_images(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
    acquired: &KSpaceData,
    weights: &DistanceWeights,
) -> Result<ContrastImageStack> {
    let (_, grad) = loss_terms(d, coils, masks, acquired, weights, true)?;
    Ok(grad.expect("gradient requested"))
}

/// Loss and gradient in one pass, sharing the forward FFTs.
pub fn weighted_loss_and_grad(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
    acquired: &KSpaceData,
    weights: &DistanceWeights,
) -> Result<(f64, ContrastImageStack)> {
    let (loss, grad) = loss_terms(d, coils, masks, acquired, weights, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn loss_terms(
    d: &ContrastImageStack,
    coils: &CoilSensitivities,
    masks: &MaskSet,
    acquired: &KSpaceData,
    weights: &DistanceWeights,
    want_grad: bool,
) -> Result<(f64, Option<ContrastImageStack>)> {
    let (c, n, vy, vz) = check_loss_shapes(d, coils, masks, acquired, weights)?;
    let mut loss = 0.0f64;
    let mut grad = if want_grad {
        Some(Array3::<Complex64>::zeros((n, vy, vz)))
    } else {
        None
    };
    let mut residual = Array2::<Complex64>::zeros((vy, vz));
    for ni in 0..n {
        let bits = &masks.masks[ni].bits;
        let img = d.data.index_axis(ndarray::Axis(0), ni);
        for ci in 0..c {
            let smap = coils.maps.index_axis(ndarray::Axis(0), ci);
            let coil_img =
                Array2::from_shape_fn((vy, vz), |(iy, iz)| smap[[iy, iz]] * img[[iy, iz]]);
            let ksp = fft2c(&coil_img);
            residual.fill(Complex64::new(0.0, 0.0));
            for iy in 0..vy {
                for iz in 0..vz {
                    if bits[[iy, iz]] {
                        let r = ksp[[iy, iz]] - acquired.data[[ci, ni, iy, iz]];
                        let w = weights.w[[iy, iz]];
                        loss += w * w * r.norm_sqr();
                        residual[[iy, iz]] = r * (w * w);
                    }
                }
            }
            if let Some(g) = grad.as_mut() {
                let back = ifft2c(&residual);
                for iy in 0..vy {
                    for iz in 0..vz {
                        g[[ni, iy, iz]] += 2.0 * smap[[iy, iz]].conj() * back[[iy, iz]];
                    }
                }
            }
        }
    }
    Ok((loss, grad.map(ContrastImageStack::new)))
}
