//! ITNS tensor files.
//!
//! Layout (little-endian): `"ITNS"` | version `u16` = 1 | dtype `u8`
//! (0 = f64, 1 = integer with scale) | bits `u8` (64 for f64) | rank `u8` |
//! dims as `u32` | scale `f64` (dtype 1 only) | payload (`f64` or `i64`).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{FpTensor, QTensor};

const MAGIC: &[u8; 4] = b"ITNS";
const VERSION: u16 = 1;
const DTYPE_FP: u8 = 0;
const DTYPE_INT: u8 = 1;

/// Either kind of tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Fp(FpTensor),
    Q(QTensor),
}

impl Tensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            Tensor::Fp(t) => t.dims(),
            Tensor::Q(t) => t.dims(),
        }
    }

    pub fn into_fp(self) -> Result<FpTensor> {
        match self {
            Tensor::Fp(t) => Ok(t),
            Tensor::Q(_) => Err(Error::Format(
                "expected a floating-point tensor, found integer".into(),
            )),
        }
    }

    pub fn into_q(self) -> Result<QTensor> {
        match self {
            Tensor::Q(t) => Ok(t),
            Tensor::Fp(_) => Err(Error::Format(
                "expected an integer tensor, found floating-point".into(),
            )),
        }
    }
}

impl From<FpTensor> for Tensor {
    fn from(t: FpTensor) -> Self {
        Tensor::Fp(t)
    }
}

impl From<QTensor> for Tensor {
    fn from(t: QTensor) -> Self {
        Tensor::Q(t)
    }
}

fn header(buf: &mut Vec<u8>, dtype: u8, bits: u8, dims: &[usize]) -> Result<()> {
    if dims.len() > u8::MAX as usize {
        return Err(Error::Argument(format!(
            "rank {} too large for ITNS",
            dims.len()
        )));
    }
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(dtype);
    buf.push(bits);
    buf.push(dims.len() as u8);
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Argument(format!("extent {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match t {
        Tensor::Fp(t) => {
            header(&mut buf, DTYPE_FP, 64, t.dims())?;
            buf.reserve(t.len() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        Tensor::Q(t) => {
            header(&mut buf, DTYPE_INT, t.bits(), t.dims())?;
            buf.extend_from_slice(&t.scale().to_le_bytes());
            buf.reserve(t.len() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Corruption(format!("truncated: need {n} bytes at offset {}", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ITNS magic".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ITNS version {version}")));
    }
    let dtype = r.u8()?;
    let bits = r.u8()?;
    let rank = r.u8()? as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(u32::from_le_bytes(r.array()?) as usize);
    }
    let t = match dtype {
        DTYPE_FP => {
            if bits != 64 {
                return Err(Error::Format(format!("f64 tensor declares {bits} bits")));
            }
            let n = crate::tensor::checked_numel(&dims)
                .map_err(|e| Error::Corruption(e.to_string()))?;
            let payload = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Corruption("size overflow".into()))?,
            )?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::Fp(FpTensor::new(dims, data).map_err(|e| Error::Corruption(e.to_string()))?)
        }
        DTYPE_INT => {
            let scale = f64::from_le_bytes(r.array()?);
            let n = crate::tensor::checked_numel(&dims)
                .map_err(|e| Error::Corruption(e.to_string()))?;
            let payload = r.take(
                n.checked_mul(8)
                    .ok_or_else(|| Error::Corruption("size overflow".into()))?,
            )?;
            let data = payload
                .chunks_exact(8)
                .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Tensor::Q(
                QTensor::new(dims, data, scale, bits)
                    .map_err(|e| Error::Corruption(e.to_string()))?,
            )
        }
        other => return Err(Error::Format(format!("unknown dtype {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Corruption(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(t)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode(t)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_q() -> Tensor {
        QTensor::new(vec![2, 3], vec![-127, 0, 5, 127, -1, 64], 2.0 / 255.0, 8)
            .unwrap()
            .into()
    }

    #[test]
    fn exact_header_bytes() {
        let bytes = encode(&sample_q()).unwrap();
        assert_eq!(&bytes[..4], b"ITNS");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 8);
        assert_eq!(bytes[8], 2);
        assert_eq!(&bytes[9..17], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[17..25], &(2.0f64 / 255.0).to_le_bytes());
        assert_eq!(bytes.len(), 25 + 6 * 8);

        let fp = FpTensor::new(vec![1], vec![1.5]).unwrap().into();
        let bytes = encode(&fp).unwrap();
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[7], 64);
        assert_eq!(bytes.len(), 9 + 4 + 8);
    }

    #[test]
    fn truncated_is_corruption() {
        let bytes = encode(&sample_q()).unwrap();
        for cut in [5, 9, 20, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(Error::Corruption(_))),
                "cut {cut}"
            );
        }
    }

    #[test]
    fn wrong_magic_is_format() {
        let mut bytes = encode(&sample_q()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode(b"IT"), Err(Error::Format(_))));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&sample_q()).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn out_of_range_payload_rejected() {
        let mut bytes = encode(&sample_q()).unwrap();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&1000i64.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.itns");
        write_tensor(&p, &sample_q()).unwrap();
        assert_eq!(read_tensor(&p).unwrap(), sample_q());
    }
}
