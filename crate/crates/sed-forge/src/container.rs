//! Binary container shared by model and checkpoint files.
//!
//! ```text
//! "<MAGIC> <version>\n"
//! u64 metadata length, metadata (UTF-8 TOML)
//! u32 blob count, then per blob:
//!     u16 name length, name, u8 rank, u64 dims[rank], f32 data (little endian)
//! 32-byte SHA-256 of everything above
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{io_err, FormatError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub metadata: String,
    pub blobs: Vec<Blob>,
}

impl Container {
    pub fn blob(&self, name: &str) -> Option<&Blob> {
        self.blobs.iter().find(|b| b.name == name)
    }

    pub fn to_bytes(&self, magic: &str, version: u32) -> Vec<u8> {
        let mut out = format!("{magic} {version}\n").into_bytes();
        out.extend((self.metadata.len() as u64).to_le_bytes());
        out.extend(self.metadata.as_bytes());
        out.extend((self.blobs.len() as u32).to_le_bytes());
        for b in &self.blobs {
            out.extend((b.name.len() as u16).to_le_bytes());
            out.extend(b.name.as_bytes());
            out.push(b.dims.len() as u8);
            for &d in &b.dims {
                out.extend((d as u64).to_le_bytes());
            }
            for &v in &b.data {
                out.extend(v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    pub fn from_bytes(bytes: &[u8], magic: &'static str, version: u32, path: &Path) -> Result<Self> {
        let corrupt = |reason: &str| FormatError::Corrupt {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let nl = bytes.iter().position(|&b| b == b'\n').filter(|&p| p < 64);
        let header = nl.and_then(|p| std::str::from_utf8(&bytes[..p]).ok());
        let (found_magic, found_version) = match header.and_then(|h| h.split_once(' ')) {
            Some(v) => v,
            None => {
                return Err(FormatError::BadMagic {
                    path: path.to_path_buf(),
                    expected: magic,
                })
            }
        };
        if found_magic != magic {
            return Err(FormatError::BadMagic {
                path: path.to_path_buf(),
                expected: magic,
            });
        }
        if found_version != version.to_string() {
            return Err(FormatError::Version {
                path: path.to_path_buf(),
                found: found_version.to_string(),
                expected: version.to_string(),
            });
        }
        if bytes.len() < 32 {
            return Err(corrupt("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch (truncated or modified)"));
        }
        let mut r = Reader {
            bytes: body,
            pos: nl.unwrap() + 1,
        };
        let meta_len = r.u64().ok_or_else(|| corrupt("metadata length"))? as usize;
        let metadata = std::str::from_utf8(r.take(meta_len).ok_or_else(|| corrupt("metadata"))?)
            .map_err(|_| corrupt("metadata is not UTF-8"))?
            .to_string();
        let count = r.u32().ok_or_else(|| corrupt("blob count"))?;
        let mut blobs = Vec::with_capacity(count.min(4096) as usize);
        for _ in 0..count {
            let name_len = r.u16().ok_or_else(|| corrupt("blob name"))? as usize;
            let name = std::str::from_utf8(r.take(name_len).ok_or_else(|| corrupt("blob name"))?)
                .map_err(|_| corrupt("blob name is not UTF-8"))?
                .to_string();
            let rank = r.take(1).ok_or_else(|| corrupt("blob rank"))?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64().ok_or_else(|| corrupt("blob dims"))? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| corrupt("blob size overflow"))?;
            let raw = r.take(n).ok_or_else(|| corrupt("blob data"))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            blobs.push(Blob { name, dims, data });
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self { metadata, blobs })
    }

    pub fn write(&self, path: &Path, magic: &str, version: u32) -> Result<()> {
        std::fs::write(path, self.to_bytes(magic, version)).map_err(io_err(path))
    }

    pub fn read(path: &Path, magic: &'static str, version: u32) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes, magic, version, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        Some(u16::from_le_bytes(self.take(2)?.try_into().ok()?))
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}
