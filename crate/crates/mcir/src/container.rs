//! Binary array container used for every artifact the toolkit writes to disk.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size          field
//! 0       4             magic bytes "MCIR"
//! 4       2             format version (currently 1)
//! 6       1             dtype tag: 1=float32, 2=complex64, 3=complex128, 4=uint1
//! 7       1             ndim
//! 8       4*ndim        dims as u32
//! ...     payload       row-major element data
//! end-4   4             CRC32 (IEEE) over every preceding byte
//! ```
//!
//! uint1 payloads are bit-packed along the last axis, LSB first, with each
//! run of the last axis padded up to a whole byte. Empty shapes (any dim 0)
//! are valid and carry a zero-length payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use num_complex::{Complex32, Complex64};
use thiserror::Error;

use crate::error::Result;

pub const MAGIC: [u8; 4] = *b"MCIR";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic bytes (not an MCIR container)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown dtype tag {0}")]
    UnknownDtype(u8),
    #[error("truncated file: expected {expected} more bytes")]
    Truncated { expected: usize },
    #[error("trailing bytes after payload and checksum")]
    TrailingBytes,
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    Float32 = 1,
    Complex64 = 2,
    Complex128 = 3,
    Uint1 = 4,
}

impl Dtype {
    fn from_tag(tag: u8) -> std::result::Result<Self, ContainerError> {
        match tag {
            1 => Ok(Dtype::Float32),
            2 => Ok(Dtype::Complex64),
            3 => Ok(Dtype::Complex128),
            4 => Ok(Dtype::Uint1),
            t => Err(ContainerError::UnknownDtype(t)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Float32 => "float32",
            Dtype::Complex64 => "complex64",
            Dtype::Complex128 => "complex128",
            Dtype::Uint1 => "uint1",
        }
    }
}

/// A typed array as stored in a container file.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    Float32(ArrayD<f32>),
    Complex64(ArrayD<Complex32>),
    Complex128(ArrayD<Complex64>),
    Bits(ArrayD<bool>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::Float32(_) => Dtype::Float32,
            ArrayData::Complex64(_) => Dtype::Complex64,
            ArrayData::Complex128(_) => Dtype::Complex128,
            ArrayData::Bits(_) => Dtype::Uint1,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            ArrayData::Float32(a) => a.shape(),
            ArrayData::Complex64(a) => a.shape(),
            ArrayData::Complex128(a) => a.shape(),
            ArrayData::Bits(a) => a.shape(),
        }
    }

    pub fn into_complex128(self) -> std::result::Result<ArrayD<Complex64>, ContainerError> {
        match self {
            ArrayData::Complex128(a) => Ok(a),
            other => Err(ContainerError::DtypeMismatch {
                expected: "complex128",
                found: other.dtype().name(),
            }),
        }
    }

    /// Complex data at either stored precision, widened to complex128.
    pub fn into_complex_widened(self) -> std::result::Result<ArrayD<Complex64>, ContainerError> {
        match self {
            ArrayData::Complex128(a) => Ok(a),
            ArrayData::Complex64(a) => Ok(a.mapv(|v| Complex64::new(v.re as f64, v.im as f64))),
            other => Err(ContainerError::DtypeMismatch {
                expected: "complex64 or complex128",
                found: other.dtype().name(),
            }),
        }
    }

    pub fn into_bits(self) -> std::result::Result<ArrayD<bool>, ContainerError> {
        match self {
            ArrayData::Bits(a) => Ok(a),
            other => Err(ContainerError::DtypeMismatch {
                expected: "uint1",
                found: other.dtype().name(),
            }),
        }
    }

    pub fn into_float32(self) -> std::result::Result<ArrayD<f32>, ContainerError> {
        match self {
            ArrayData::Float32(a) => Ok(a),
            other => Err(ContainerError::DtypeMismatch {
                expected: "float32",
                found: other.dtype().name(),
            }),
        }
    }
}

fn bit_rows(shape: &[usize]) -> (usize, usize) {
    // (number of last-axis runs, bytes per packed run)
    let last = *shape.last().unwrap_or(&0);
    let rows = shape[..shape.len().saturating_sub(1)]
        .iter()
        .product::<usize>();
    (rows, last.div_ceil(8))
}

fn payload_len(dtype: Dtype, shape: &[usize]) -> usize {
    let n: usize = shape.iter().product();
    match dtype {
        Dtype::Float32 => n * 4,
        Dtype::Complex64 => n * 8,
        Dtype::Complex128 => n * 16,
        Dtype::Uint1 => {
            if shape.is_empty() {
                0
            } else {
                let (rows, row_bytes) = bit_rows(shape);
                rows * row_bytes
            }
        }
    }
}

fn encode_payload(data: &ArrayData, buf: &mut Vec<u8>) {
    match data {
        ArrayData::Float32(a) => {
            for v in a.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        ArrayData::Complex64(a) => {
            for v in a.iter() {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        ArrayData::Complex128(a) => {
            for v in a.iter() {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        ArrayData::Bits(a) => {
            let shape = a.shape();
            if shape.is_empty() {
                return;
            }
            let last = *shape.last().unwrap();
            let (_, row_bytes) = bit_rows(shape);
            let flat: Vec<bool> = a.iter().copied().collect();
            for run in flat.chunks(last.max(1)) {
                if last == 0 {
                    break;
                }
                let mut packed = vec![0u8; row_bytes];
                for (i, &bit) in run.iter().enumerate() {
                    if bit {
                        packed[i / 8] |= 1 << (i % 8);
                    }
                }
                buf.extend_from_slice(&packed);
            }
        }
    }
}

fn decode_payload(
    dtype: Dtype,
    shape: &[usize],
    payload: &[u8],
) -> std::result::Result<ArrayData, ContainerError> {
    let n: usize = shape.iter().product();
    let dyn_shape = IxDyn(shape);
    Ok(match dtype {
        Dtype::Float32 => {
            let mut v = Vec::with_capacity(n);
            for c in payload.chunks_exact(4) {
                v.push(f32::from_le_bytes(c.try_into().unwrap()));
            }
            ArrayData::Float32(ArrayD::from_shape_vec(dyn_shape, v).unwrap())
        }
        Dtype::Complex64 => {
            let mut v = Vec::with_capacity(n);
            for c in payload.chunks_exact(8) {
                v.push(Complex32::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()),
                    f32::from_le_bytes(c[4..8].try_into().unwrap()),
                ));
            }
            ArrayData::Complex64(ArrayD::from_shape_vec(dyn_shape, v).unwrap())
        }
        Dtype::Complex128 => {
            let mut v = Vec::with_capacity(n);
            for c in payload.chunks_exact(16) {
                v.push(Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                ));
            }
            ArrayData::Complex128(ArrayD::from_shape_vec(dyn_shape, v).unwrap())
        }
        Dtype::Uint1 => {
            let mut v = Vec::with_capacity(n);
            if !shape.is_empty() && n > 0 {
                let last = *shape.last().unwrap();
                let (rows, row_bytes) = bit_rows(shape);
                for r in 0..rows {
                    let row = &payload[r * row_bytes..(r + 1) * row_bytes];
                    for i in 0..last {
                        v.push(row[i / 8] & (1 << (i % 8)) != 0);
                    }
                }
            }
            ArrayData::Bits(ArrayD::from_shape_vec(dyn_shape, v).unwrap())
        }
    })
}

/// Serialize an array into the container byte format.
pub fn to_bytes(data: &ArrayData) -> Vec<u8> {
    let shape = data.shape();
    let mut buf = Vec::with_capacity(12 + 4 * shape.len() + payload_len(data.dtype(), shape));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(data.dtype() as u8);
    buf.push(shape.len() as u8);
    for &d in shape {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    encode_payload(data, &mut buf);
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

/// Parse a container from bytes, validating magic, version, length and CRC.
pub fn from_bytes(bytes: &[u8]) -> std::result::Result<ArrayData, ContainerError> {
    let need = |have: usize, want: usize| -> std::result::Result<(), ContainerError> {
        if have < want {
            Err(ContainerError::Truncated {
                expected: want - have,
            })
        } else {
            Ok(())
        }
    };
    need(bytes.len(), 8)?;
    if bytes[0..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let dtype = Dtype::from_tag(bytes[6])?;
    let ndim = bytes[7] as usize;
    let header_len = 8 + 4 * ndim;
    need(bytes.len(), header_len)?;
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 8 + 4 * i;
        shape.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
    }
    let plen = payload_len(dtype, &shape);
    need(bytes.len(), header_len + plen + 4)?;
    if bytes.len() != header_len + plen + 4 {
        return Err(ContainerError::TrailingBytes);
    }
    let body = &bytes[..header_len + plen];
    let stored = u32::from_le_bytes(bytes[header_len + plen..].try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ContainerError::CrcMismatch { stored, computed });
    }
    decode_payload(dtype, &shape, &bytes[header_len..header_len + plen])
}

pub fn write_container(path: impl AsRef<Path>, data: &ArrayData) -> Result<()> {
    let bytes = to_bytes(data);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<ArrayData> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Ok(from_bytes(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_c128(shape: (usize, usize, usize), seed: u64) -> ArrayD<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn(shape, |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
        .into_dyn()
    }

    #[test]
    fn roundtrip_complex128() {
        let a = random_c128((3, 4, 5), 99);
        let bytes = to_bytes(&ArrayData::Complex128(a.clone()));
        let back = from_bytes(&bytes).unwrap().into_complex128().unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn roundtrip_bits_odd_row() {
        // 13 bits per row forces padding inside each packed row
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ArrayD::from_shape_fn(IxDyn(&[4, 13]), |_| rng.random::<bool>());
        let bytes = to_bytes(&ArrayData::Bits(a.clone()));
        assert_eq!(bytes.len(), 8 + 4 * 2 + 4 * 2 + 4);
        let back = from_bytes(&bytes).unwrap().into_bits().unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn roundtrip_float32() {
        let a =
            ArrayD::from_shape_vec(IxDyn(&[5]), vec![1.0f32, -2.5, 0.0, 3.25, f32::MIN]).unwrap();
        let bytes = to_bytes(&ArrayData::Float32(a.clone()));
        let back = from_bytes(&bytes).unwrap().into_float32().unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn corrupt_payload_fails_crc() {
        let a = random_c128((2, 2, 2), 7);
        let mut bytes = to_bytes(&ArrayData::Complex128(a));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        match from_bytes(&bytes) {
            Err(ContainerError::CrcMismatch { .. }) => {}
            other => panic!("expected CrcMismatch, got {other:?}"),
        }
    }

    #[test]
    fn zero_sized_dims_are_valid() {
        let a = ArrayD::<Complex64>::zeros(IxDyn(&[3, 0, 5]));
        let bytes = to_bytes(&ArrayData::Complex128(a.clone()));
        let back = from_bytes(&bytes).unwrap().into_complex128().unwrap();
        assert_eq!(back.shape(), &[3, 0, 5]);
    }

    #[test]
    fn bad_magic_reported() {
        let a = random_c128((2, 2, 1), 1);
        let mut bytes = to_bytes(&ArrayData::Complex128(a));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(ContainerError::BadMagic)));
    }

    #[test]
    fn truncation_reported() {
        let a = random_c128((2, 2, 1), 1);
        let bytes = to_bytes(&ArrayData::Complex128(a));
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            from_bytes(cut),
            Err(ContainerError::Truncated { .. })
        ));
    }

    #[test]
    fn dtype_mismatch_reported() {
        let a = random_c128((2, 2, 1), 1);
        let bytes = to_bytes(&ArrayData::Complex128(a));
        let parsed = from_bytes(&bytes).unwrap();
        assert!(matches!(
            parsed.into_bits(),
            Err(ContainerError::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.mcir");
        let a = random_c128((3, 4, 5), 42);
        write_container(&path, &ArrayData::Complex128(a.clone())).unwrap();
        let back = read_container(&path).unwrap().into_complex128().unwrap();
        assert_eq!(a, back);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_shape() -> impl Strategy<Value = Vec<usize>> {
            prop::collection::vec(0usize..6, 1..4)
        }

        proptest! {
            #[test]
            fn complex128_roundtrip_lossless(shape in arb_shape(), seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = ArrayD::from_shape_fn(IxDyn(&shape), |_| {
                    Complex64::new(rng.random::<f64>() * 2e3 - 1e3, rng.random::<f64>())
                });
                let back = from_bytes(&to_bytes(&ArrayData::Complex128(a.clone())))
                    .unwrap()
                    .into_complex128()
                    .unwrap();
                prop_assert_eq!(a, back);
            }

            #[test]
            fn bits_roundtrip_lossless(shape in arb_shape(), seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = ArrayD::from_shape_fn(IxDyn(&shape), |_| rng.random::<bool>());
                let back = from_bytes(&to_bytes(&ArrayData::Bits(a.clone())))
                    .unwrap()
                    .into_bits()
                    .unwrap();
                prop_assert_eq!(a, back);
            }

            #[test]
            fn any_single_byte_flip_is_detected(seed in any::<u64>(), pos in any::<proptest::sample::Index>()) {
                let a = random_c128((2, 3, 2), seed);
                let mut bytes = to_bytes(&ArrayData::Complex128(a));
                let i = pos.index(bytes.len());
                bytes[i] ^= 0x01;
                prop_assert!(from_bytes(&bytes).is_err());
            }
        }
    }
}
