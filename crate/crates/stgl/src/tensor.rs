//! Dense row-major f64 tensors and the on-disk `.tns` binary format.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Magic bytes at the start of every `.tns` file.
pub const TNS_MAGIC: &[u8; 8] = b"RBRDTNS1";

/// Dense multi-axis numeric array, row-major, 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug)]
pub enum TensorError {
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    Format { offset: u64, reason: String },
    Io(std::io::Error),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeDataMismatch { shape, len } => {
                write!(f, "shape {:?} implies {} elements, data has {}", shape, shape.iter().product::<usize>(), len)
            }
            TensorError::Format { offset, reason } => {
                write!(f, "bad tensor file at byte {}: {}", offset, reason)
            }
            TensorError::Io(e) => write!(f, "tensor i/o: {}", e),
        }
    }
}

impl std::error::Error for TensorError {}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeDataMismatch { shape, len: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    /// Identity matrix of size n.
    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major 2-D accessor; panics on rank != 2.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Write in the `.tns` layout: magic, u32 rank, u64 dims, f64 values, all little-endian.
    pub fn write_tns(&self, path: &Path) -> Result<(), TensorError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_tns_to(&mut w)
    }

    pub fn write_tns_to<W: Write>(&self, w: &mut W) -> Result<(), TensorError> {
        w.write_all(TNS_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_tns(path: &Path) -> Result<Self, TensorError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_tns_from(&mut r)
    }

    pub fn read_tns_from<R: Read>(r: &mut R) -> Result<Self, TensorError> {
        let mut offset: u64 = 0;
        let mut magic = [0u8; 8];
        read_exact_at(r, &mut magic, &mut offset)?;
        if &magic != TNS_MAGIC {
            return Err(TensorError::Format { offset: 0, reason: format!("magic {:?} != {:?}", magic, TNS_MAGIC) });
        }
        let mut rank_buf = [0u8; 4];
        read_exact_at(r, &mut rank_buf, &mut offset)?;
        let rank = u32::from_le_bytes(rank_buf) as usize;
        if rank > 8 {
            return Err(TensorError::Format { offset: 8, reason: format!("implausible rank {}", rank) });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut dim_buf = [0u8; 8];
            read_exact_at(r, &mut dim_buf, &mut offset)?;
            shape.push(u64::from_le_bytes(dim_buf) as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut val_buf = [0u8; 8];
        for _ in 0..n {
            read_exact_at(r, &mut val_buf, &mut offset)?;
            data.push(f64::from_le_bytes(val_buf));
        }
        Ok(Tensor { shape, data })
    }
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: &mut u64) -> Result<(), TensorError> {
    let start = *offset;
    match r.read_exact(buf) {
        Ok(()) => {
            *offset += buf.len() as u64;
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Err(TensorError::Format { offset: start, reason: "truncated file".into() })
        }
        Err(e) => Err(TensorError::Io(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tns");
        let t = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]).unwrap();
        t.write_tns(&p).unwrap();
        let back = Tensor::read_tns(&p).unwrap();
        assert_eq!(t.shape(), back.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_is_format_error_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tns");
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        t.write_tns(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match Tensor::read_tns(&p) {
            Err(TensorError::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {:?}", other),
        }
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tns");
        std::fs::write(&p, b"NOTATENSOR______").unwrap();
        match Tensor::read_tns(&p) {
            Err(TensorError::Format { offset: 0, .. }) => {}
            other => panic!("expected magic error, got {:?}", other),
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(Tensor::new(vec![2, 2], vec![1.0]).is_err());
    }
}
