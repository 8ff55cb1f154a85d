//! IDX container reader and writer (the MNIST file format).
//!
//! Header: two zero bytes, a type byte (`0x08` = unsigned byte), the number
//! of dimensions, then one big-endian `u32` per dimension. The payload is
//! row-major.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{DrnError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// A parsed IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.magic().to_be_bytes())?;
        for &d in &self.dims {
            out.write_all(&(d as u32).to_be_bytes())?;
        }
        out.write_all(&self.data)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> DrnError {
    DrnError::Format { offset: offset as u64, message: message.into() }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| format_err(offset, "truncated header"))
}

/// Parses an IDX byte tensor, requiring the given magic number.
pub fn parse_idx_bytes(bytes: &[u8], expected_magic: u32) -> Result<IdxTensor> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected_magic {
        return Err(format_err(0, format!("bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * i)? as usize);
    }
    let header = 4 + 4 * rank;
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < len {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload: {} of {len} bytes present", payload.len()),
        ));
    }
    if payload.len() > len {
        return Err(format_err(header + len, format!("{} trailing bytes", payload.len() - len)));
    }
    Ok(IdxTensor { dims, data: payload.to_vec() })
}

pub fn parse_idx(path: impl AsRef<Path>, expected_magic: u32) -> Result<IdxTensor> {
    parse_idx_bytes(&fs::read(path)?, expected_magic)
}

/// Which half of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images scaled to `[0, 1]` (one flattened image per row) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    /// Height and width of one image.
    pub shape: (usize, usize),
}

impl IdxDataset {
    /// Pairs an image tensor with a label tensor.
    pub fn from_tensors(images: &IdxTensor, labels: &IdxTensor) -> Result<Self> {
        if images.dims.len() != 3 || labels.dims.len() != 1 {
            return Err(DrnError::Dataset("expected a rank-3 image and a rank-1 label tensor".into()));
        }
        let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
        if labels.dims[0] != n {
            return Err(DrnError::Dataset(format!("{n} images but {} labels", labels.dims[0])));
        }
        let pixels = images.data.iter().map(|&b| b as f64 / 255.0).collect();
        let images = Array2::from_shape_vec((n, h * w), pixels).map_err(|e| DrnError::Dataset(e.to_string()))?;
        Ok(IdxDataset { images, labels: labels.data.clone(), shape: (h, w) })
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let images = parse_idx(images, IMAGES_MAGIC)?;
        let labels = parse_idx(labels, LABELS_MAGIC)?;
        Self::from_tensors(&images, &labels)
    }

    /// Loads a split from a directory using the usual MNIST file names
    /// (`train-images-idx3-ubyte`, `t10k-labels-idx1-ubyte`, ...).
    pub fn load_split(dir: impl AsRef<Path>, split: Split) -> Result<Self> {
        let (images, labels) = split_files(dir.as_ref(), split);
        Self::load(images, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` examples.
    pub fn truncate(&mut self, n: usize) {
        if n < self.len() {
            self.images = self.images.slice(ndarray::s![..n, ..]).to_owned();
            self.labels.truncate(n);
        }
    }

    /// Re-encodes as IDX tensors; inverts the `/255` scaling exactly for
    /// data that came from bytes.
    pub fn to_tensors(&self) -> (IdxTensor, IdxTensor) {
        let data = self.images.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        let images = IdxTensor { dims: vec![self.len(), self.shape.0, self.shape.1], data };
        let labels = IdxTensor { dims: vec![self.len()], data: self.labels.clone() };
        (images, labels)
    }
}

pub fn split_files(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}
