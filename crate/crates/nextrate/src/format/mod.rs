//! Little-endian binary files: `.tmv` sequences, checkpoints, datasets.

mod checkpoint;
mod dataset;
mod tmv;

use std::fs;
use std::path::Path;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use dataset::{decode_dataset, encode_dataset, load_dataset, save_dataset, DatasetFile, DATASET_VERSION};
pub use tmv::{decode_tmv, encode_tmv, load_tmv, save_tmv, TMV_VERSION};

use crate::error::{CliError, CliResult};

pub(crate) fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    /// `u32` length then the bytes.
    pub fn block(&mut self, b: &[u8]) -> Result<(), String> {
        self.u32(len32(b.len())?);
        self.bytes(b);
        Ok(())
    }
}

pub(crate) fn len32(n: usize) -> Result<u32, String> {
    u32::try_from(n).map_err(|_| format!("length {n} does not fit in 32 bits"))
}

/// Cursor over a byte slice. Errors are plain messages with the offset.
pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or_else(|| {
            format!("truncated at byte {}: wanted {n} more, {} left", self.pos, self.data.len() - self.pos)
        })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], String> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32, String> {
        self.array().map(u32::from_le_bytes)
    }
    pub fn u64(&mut self) -> Result<u64, String> {
        self.array().map(u64::from_le_bytes)
    }
    pub fn f32(&mut self) -> Result<f32, String> {
        self.array().map(f32::from_le_bytes)
    }
    pub fn f64(&mut self) -> Result<f64, String> {
        self.array().map(f64::from_le_bytes)
    }
    pub fn block(&mut self) -> Result<&'a [u8], String> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<(), String> {
        let got = self.take(4)?;
        if got != magic {
            return Err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            ));
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u32) -> Result<(), String> {
        let v = self.u32()?;
        if v != supported {
            return Err(format!("format version {v} is not supported (expected {supported})"));
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(), String> {
        if self.pos != self.data.len() {
            return Err(format!("{} trailing bytes after byte {}", self.data.len() - self.pos, self.pos));
        }
        Ok(())
    }

    /// `count` little-endian `f32` values.
    pub fn f32s(&mut self, count: usize) -> Result<Vec<f32>, String> {
        let bytes = self.take(count.checked_mul(4).ok_or("element count overflows")?)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

pub(crate) fn read_file_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
