use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::model::{DocOrdinal, TokenTensor, TENSOR_MAGIC};

const OFFSETS_MAGIC: &[u8; 4] = b"HSTO";
const TVEC_HEADER_BYTES: u64 = 20;

enum Backend {
    Memory(Vec<f32>),
    /// Records are read on demand with positioned reads; nothing is resident
    /// beyond the offsets table.
    File { file: File, path: PathBuf },
}

/// Per-document token tensors addressable by ordinal.
pub struct TensorStore {
    dim: usize,
    /// Prefix sums of token counts, `doc_count + 1` entries.
    token_start: Vec<u64>,
    backend: Backend,
    loads: AtomicU64,
}

impl std::fmt::Debug for TensorStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TensorStore")
            .field("dim", &self.dim)
            .field("docs", &self.len())
            .field("total_tokens", &self.total_tokens())
            .field(
                "backend",
                &match &self.backend {
                    Backend::Memory(_) => "memory".to_string(),
                    Backend::File { path, .. } => path.display().to_string(),
                },
            )
            .finish()
    }
}

impl TensorStore {
    pub fn from_tensors(dim: usize, tensors: &[TokenTensor]) -> Result<Self> {
        let mut token_start = Vec::with_capacity(tensors.len() + 1);
        token_start.push(0u64);
        let mut flat = Vec::new();
        for t in tensors {
            if t.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: t.dim(),
                });
            }
            flat.extend_from_slice(t.as_flat());
            token_start.push(token_start.last().unwrap() + t.n_tokens() as u64);
        }
        Ok(Self {
            dim,
            token_start,
            backend: Backend::Memory(flat),
            loads: AtomicU64::new(0),
        })
    }

    /// Opens a `.tvec` file for on-demand access, using the `.toff` offsets
    /// sidecar when present and scanning record headers otherwise.
    pub fn open(tvec_path: &Path) -> Result<Self> {
        let file = File::open(tvec_path).map_err(|e| Error::io(tvec_path, e))?;
        let mut header = [0u8; TVEC_HEADER_BYTES as usize];
        read_at(&file, &mut header, 0).map_err(|e| Error::io(tvec_path, e))?;
        let mut r = ByteReader::new(&header);
        r.header(TENSOR_MAGIC, 1)?;
        let count = r.len_prefix()?;
        let dim = r.u32()? as usize;
        let sidecar = offsets_path(tvec_path);
        let token_start = if sidecar.exists() {
            let starts = read_offsets(&sidecar)?;
            if starts.len() != count + 1 {
                return Err(Error::Truncated(format!(
                    "offsets sidecar has {} entries, expected {}",
                    starts.len(),
                    count + 1
                )));
            }
            starts
        } else {
            scan_offsets(&file, tvec_path, count, dim)?
        };
        let expected_len = TVEC_HEADER_BYTES
            + 4 * count as u64
            + token_start[count] * dim as u64 * 4;
        let actual_len = file
            .metadata()
            .map_err(|e| Error::io(tvec_path, e))?
            .len();
        if actual_len != expected_len {
            return Err(Error::Truncated(format!(
                "tensor file is {actual_len} bytes, offsets imply {expected_len}"
            )));
        }
        Ok(Self {
            dim,
            token_start,
            backend: Backend::File {
                file,
                path: tvec_path.to_path_buf(),
            },
            loads: AtomicU64::new(0),
        })
    }

    /// Writes `.tvec` plus the `.toff` offsets sidecar.
    pub fn write(&self, tvec_path: &Path) -> Result<()> {
        let mut w = ByteWriter::header(TENSOR_MAGIC, 1);
        w.u64(self.len() as u64);
        w.u32(self.dim as u32);
        for i in 0..self.len() {
            let t = self.read_raw(i)?;
            w.u32(self.n_tokens(DocOrdinal(i as u32)) as u32);
            w.f32s(&t);
        }
        write_file(tvec_path, &w.finish())?;
        write_offsets(&offsets_path(tvec_path), &self.token_start)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.token_start.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_tokens(&self) -> u64 {
        *self.token_start.last().unwrap()
    }

    pub fn n_tokens(&self, doc: DocOrdinal) -> usize {
        let i = doc.index();
        (self.token_start[i + 1] - self.token_start[i]) as usize
    }

    pub fn token_starts(&self) -> &[u64] {
        &self.token_start
    }

    pub fn is_file_backed(&self) -> bool {
        matches!(self.backend, Backend::File { .. })
    }

    pub fn file_path(&self) -> Option<&Path> {
        match &self.backend {
            Backend::File { path, .. } => Some(path),
            Backend::Memory(_) => None,
        }
    }

    /// Bytes held in memory by this store.
    pub fn resident_bytes(&self) -> usize {
        self.token_start.len() * 8
            + match &self.backend {
                Backend::Memory(v) => v.len() * 4,
                Backend::File { .. } => 0,
            }
    }

    /// Number of tensors fetched through `get` since creation or the last reset.
    pub fn loads(&self) -> u64 {
        self.loads.load(Ordering::Relaxed)
    }

    pub fn reset_loads(&self) {
        self.loads.store(0, Ordering::Relaxed);
    }

    /// Fetches one document's tensor.
    pub fn get(&self, doc: DocOrdinal) -> Result<TokenTensor> {
        if doc.index() >= self.len() {
            return Err(Error::MissingTensor(doc.0));
        }
        self.loads.fetch_add(1, Ordering::Relaxed);
        let data = self.read_raw(doc.index())?;
        TokenTensor::new(self.dim, data)
    }

    fn read_raw(&self, i: usize) -> Result<Vec<f32>> {
        let start = self.token_start[i] as usize * self.dim;
        let end = self.token_start[i + 1] as usize * self.dim;
        match &self.backend {
            Backend::Memory(flat) => Ok(flat[start..end].to_vec()),
            Backend::File { file, path } => {
                let offset = TVEC_HEADER_BYTES + 4 * (i as u64 + 1) + start as u64 * 4;
                let mut buf = vec![0u8; (end - start) * 4];
                read_at(file, &mut buf, offset).map_err(|e| Error::io(path, e))?;
                Ok(buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect())
            }
        }
    }
}

pub fn offsets_path(tvec_path: &Path) -> PathBuf {
    tvec_path.with_extension("toff")
}

fn write_offsets(path: &Path, starts: &[u64]) -> Result<()> {
    let mut w = ByteWriter::header(OFFSETS_MAGIC, 1);
    w.u64(starts.len() as u64 - 1);
    for &s in starts {
        w.u64(s);
    }
    write_file(path, &w.finish())
}

fn read_offsets(path: &Path) -> Result<Vec<u64>> {
    let bytes = read_file(path)?;
    let mut r = ByteReader::new(&bytes);
    r.header(OFFSETS_MAGIC, 1)?;
    let count = r.len_prefix()?;
    let mut starts = Vec::with_capacity(count + 1);
    for _ in 0..=count {
        starts.push(r.u64()?);
    }
    if starts.windows(2).any(|w| w[0] >= w[1]) || starts.first() != Some(&0) {
        return Err(Error::Truncated("offsets are not strictly increasing".into()));
    }
    Ok(starts)
}

fn scan_offsets(file: &File, path: &Path, count: usize, dim: usize) -> Result<Vec<u64>> {
    let mut starts = Vec::with_capacity(count + 1);
    starts.push(0u64);
    let mut pos = TVEC_HEADER_BYTES;
    for ordinal in 0..count {
        let mut n = [0u8; 4];
        read_at(file, &mut n, pos).map_err(|e| Error::io(path, e))?;
        let n_tokens = u32::from_le_bytes(n) as u64;
        if n_tokens == 0 {
            return Err(Error::EmptyTensor { ordinal });
        }
        starts.push(starts.last().unwrap() + n_tokens);
        pos += 4 + n_tokens * dim as u64 * 4;
    }
    Ok(starts)
}

#[cfg(unix)]
fn read_at(file: &File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    use std::os::unix::fs::FileExt;
    file.read_exact_at(buf, offset)
}

#[cfg(windows)]
fn read_at(file: &File, mut buf: &mut [u8], mut offset: u64) -> std::io::Result<()> {
    use std::os::windows::fs::FileExt;
    while !buf.is_empty() {
        match file.seek_read(buf, offset)? {
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => {
                buf = &mut buf[n..];
                offset += n as u64;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::write_tensors;

    fn tensors() -> Vec<TokenTensor> {
        vec![
            TokenTensor::normalized(2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            TokenTensor::normalized(2, vec![1.0, 1.0]).unwrap(),
            TokenTensor::normalized(2, vec![0.0, -1.0, 3.0, 4.0, -1.0, 0.0]).unwrap(),
        ]
    }

    #[test]
    fn memory_and_file_backends_agree() {
        let ts = tensors();
        let mem = TensorStore::from_tensors(2, &ts).unwrap();
        assert_eq!(mem.total_tokens(), 6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("docs.tvec");
        mem.write(&p).unwrap();
        let disk = TensorStore::open(&p).unwrap();
        assert!(disk.is_file_backed());
        for i in [2u32, 0, 1] {
            assert_eq!(disk.get(DocOrdinal(i)).unwrap(), ts[i as usize]);
            assert_eq!(mem.get(DocOrdinal(i)).unwrap(), ts[i as usize]);
        }
        assert_eq!(disk.loads(), 3);
        assert!(matches!(disk.get(DocOrdinal(3)), Err(Error::MissingTensor(3))));
    }

    #[test]
    fn open_without_sidecar_scans_headers() {
        let ts = tensors();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plain.tvec");
        write_tensors(&p, 2, &ts).unwrap();
        let disk = TensorStore::open(&p).unwrap();
        assert_eq!(disk.token_starts(), &[0, 2, 3, 6]);
        assert_eq!(disk.get(DocOrdinal(2)).unwrap(), ts[2]);
    }
}
