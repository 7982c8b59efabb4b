//! `.dvec`, `.svec` and `.tvec` interchange files.
//!
//! All integers and floats are little-endian. Every file starts with a
//! four-byte magic, a `u32` version (currently 1) and a `u64` record count.

use std::path::Path;

use super::{DenseVector, SparseVector, TokenTensor};
use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const DENSE_MAGIC: &[u8; 4] = b"HSDV";
pub const SPARSE_MAGIC: &[u8; 4] = b"HSSV";
pub const TENSOR_MAGIC: &[u8; 4] = b"HSTV";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorKind {
    Sparse,
    Dense,
    Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorCollection {
    Sparse(Vec<SparseVector>),
    Dense { dim: usize, vectors: Vec<DenseVector> },
    Tensor { dim: usize, tensors: Vec<TokenTensor> },
}

impl VectorCollection {
    pub fn len(&self) -> usize {
        match self {
            VectorCollection::Sparse(v) => v.len(),
            VectorCollection::Dense { vectors, .. } => vectors.len(),
            VectorCollection::Tensor { tensors, .. } => tensors.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn read_vectors(path: &Path, kind: VectorKind) -> Result<VectorCollection> {
    match kind {
        VectorKind::Sparse => read_sparse(path).map(VectorCollection::Sparse),
        VectorKind::Dense => {
            let (dim, vectors) = read_dense(path)?;
            Ok(VectorCollection::Dense { dim, vectors })
        }
        VectorKind::Tensor => {
            let (dim, tensors) = read_tensors(path)?;
            Ok(VectorCollection::Tensor { dim, tensors })
        }
    }
}

pub fn encode_dense(dim: usize, vectors: &[DenseVector]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::header(DENSE_MAGIC, VERSION);
    w.u64(vectors.len() as u64);
    w.u32(dim as u32);
    w.u8(DTYPE_F32);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        w.f32s(v.values());
    }
    Ok(w.finish())
}

pub fn decode_dense(bytes: &[u8]) -> Result<(usize, Vec<DenseVector>)> {
    let mut r = ByteReader::new(bytes);
    r.header(DENSE_MAGIC, VERSION)?;
    let count = r.len_prefix()?;
    let dim = r.u32()? as usize;
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(Error::InvalidVector(format!("unsupported dtype {dtype}")));
    }
    let need = count.saturating_mul(dim).saturating_mul(4);
    let payload = bytes.len().saturating_sub(21);
    if payload < need {
        return Err(Error::Truncated(format!(
            "dense payload: header declares {count}x{dim}, {payload} bytes present"
        )));
    }
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        vectors.push(DenseVector::new(r.f32s(dim)?)?);
    }
    expect_end(&r)?;
    Ok((dim, vectors))
}

pub fn encode_sparse(vectors: &[SparseVector]) -> Vec<u8> {
    let mut w = ByteWriter::header(SPARSE_MAGIC, VERSION);
    w.u64(vectors.len() as u64);
    for v in vectors {
        w.u32(v.nnz() as u32);
        for &(t, x) in v.entries() {
            w.u32(t);
            w.f32(x);
        }
    }
    w.finish()
}

pub fn decode_sparse(bytes: &[u8]) -> Result<Vec<SparseVector>> {
    let mut r = ByteReader::new(bytes);
    r.header(SPARSE_MAGIC, VERSION)?;
    let count = r.len_prefix()?;
    let mut vectors = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let nnz = r.u32()? as usize;
        let mut entries = Vec::with_capacity(nnz.min(1 << 16));
        for _ in 0..nnz {
            entries.push((r.u32()?, r.f32()?));
        }
        vectors.push(SparseVector::new(entries)?);
    }
    expect_end(&r)?;
    Ok(vectors)
}

pub fn encode_tensors(dim: usize, tensors: &[TokenTensor]) -> Result<Vec<u8>> {
    let mut w = ByteWriter::header(TENSOR_MAGIC, VERSION);
    w.u64(tensors.len() as u64);
    w.u32(dim as u32);
    for t in tensors {
        if t.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: t.dim(),
            });
        }
        w.u32(t.n_tokens() as u32);
        w.f32s(t.as_flat());
    }
    Ok(w.finish())
}

pub fn decode_tensors(bytes: &[u8]) -> Result<(usize, Vec<TokenTensor>)> {
    let mut r = ByteReader::new(bytes);
    r.header(TENSOR_MAGIC, VERSION)?;
    let count = r.len_prefix()?;
    let dim = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 20));
    for ordinal in 0..count {
        let n_tokens = r.u32()? as usize;
        if n_tokens == 0 {
            return Err(Error::EmptyTensor { ordinal });
        }
        tensors.push(TokenTensor::new(dim, r.f32s(n_tokens * dim)?)?);
    }
    expect_end(&r)?;
    Ok((dim, tensors))
}

fn expect_end(r: &ByteReader<'_>) -> Result<()> {
    if r.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidVector("trailing bytes after last record".into()))
    }
}

pub fn write_dense(path: &Path, dim: usize, vectors: &[DenseVector]) -> Result<()> {
    write_file(path, &encode_dense(dim, vectors)?)
}

pub fn read_dense(path: &Path) -> Result<(usize, Vec<DenseVector>)> {
    decode_dense(&read_file(path)?)
}

pub fn write_sparse(path: &Path, vectors: &[SparseVector]) -> Result<()> {
    write_file(path, &encode_sparse(vectors))
}

pub fn read_sparse(path: &Path) -> Result<Vec<SparseVector>> {
    decode_sparse(&read_file(path)?)
}

pub fn write_tensors(path: &Path, dim: usize, tensors: &[TokenTensor]) -> Result<()> {
    write_file(path, &encode_tensors(dim, tensors)?)
}

pub fn read_tensors(path: &Path) -> Result<(usize, Vec<TokenTensor>)> {
    decode_tensors(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_header_layout() {
        let vs: Vec<DenseVector> = (0..3)
            .map(|i| DenseVector::new(vec![i as f32; 4]).unwrap())
            .collect();
        let bytes = encode_dense(4, &vs).unwrap();
        assert_eq!(&bytes[0..4], b"HSDV");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 4);
        assert_eq!(bytes[20], 0);
        assert_eq!(bytes.len(), 21 + 48);
        let (dim, back) = decode_dense(&bytes).unwrap();
        assert_eq!(dim, 4);
        assert_eq!(back, vs);
    }

    #[test]
    fn dense_truncated_payload() {
        let vs = vec![DenseVector::new(vec![1.0; 4]).unwrap(); 3];
        let bytes = encode_dense(4, &vs).unwrap();
        assert!(matches!(
            decode_dense(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn dense_dim_mismatch_on_write() {
        let vs = vec![
            DenseVector::new(vec![1.0; 4]).unwrap(),
            DenseVector::new(vec![1.0; 3]).unwrap(),
        ];
        assert!(matches!(
            encode_dense(4, &vs),
            Err(Error::DimMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn magic_mismatch_is_detected() {
        let bytes = encode_sparse(&[]);
        assert!(matches!(
            decode_dense(&bytes),
            Err(Error::MagicMismatch { .. })
        ));
    }

    #[test]
    fn empty_tensor_record_reports_ordinal() {
        let mut w = ByteWriter::header(TENSOR_MAGIC, 1);
        w.u64(2);
        w.u32(2);
        w.u32(1);
        w.f32s(&[1.0, 0.0]);
        w.u32(0);
        match decode_tensors(&w.finish()) {
            Err(Error::EmptyTensor { ordinal }) => assert_eq!(ordinal, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sparse_requires_ascending_terms() {
        let mut w = ByteWriter::header(SPARSE_MAGIC, 1);
        w.u64(1);
        w.u32(2);
        w.u32(5);
        w.f32(1.0);
        w.u32(2);
        w.f32(1.0);
        assert!(decode_sparse(&w.finish()).is_err());
    }
}
