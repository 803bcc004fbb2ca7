//! Dense row-major f32 tensor and the CLNT on-disk format.
//!
//! CLNT layout: magic `CLNT`, u32 little-endian rank, rank u64 little-endian
//! extents, then `product(extents)` f32 little-endian values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CLNT";

/// Dense multi-dimensional array of f32, outermost extent first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, enforcing shape/data agreement and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Reads a tensor from a CLNT file.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact_or(&mut reader, &mut magic, path, 4)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic { path: path.into() });
    }

    let mut rank_buf = [0u8; 4];
    read_exact_or(&mut reader, &mut rank_buf, path, 4)?;
    let rank = u32::from_le_bytes(rank_buf) as usize;

    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut ext = [0u8; 8];
        read_exact_or(&mut reader, &mut ext, path, 8)?;
        shape.push(u64::from_le_bytes(ext) as usize);
    }

    let count: usize = shape.iter().product();
    let mut payload = vec![0u8; count * 4];
    let mut filled = 0;
    while filled < payload.len() {
        match reader.read(&mut payload[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    path: path.into(),
                    expected: payload.len(),
                    found: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) => return Err(Error::io(path, e)),
        }
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor::new(shape, data)
}

/// Writes a tensor as a CLNT file; decodable by [`read_tensor`] bit-exactly.
pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(t.shape.len() as u32).to_le_bytes()).map_err(io)?;
    for &ext in &t.shape {
        w.write_all(&(ext as u64).to_le_bytes()).map_err(io)?;
    }
    for &v in &t.data {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_exact_or(
    reader: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    expected: usize,
) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.into(),
                expected,
                found: 0,
            }
        } else {
            Error::io(path, e)
        }
    })
}
