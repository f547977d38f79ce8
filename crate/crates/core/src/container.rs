//! Versioned, checksummed binary container for trained models.
//!
//! Layout (little endian):
//!
//! ```text
//! magic     8 bytes  "SLPCAST\0"
//! version   u32
//! kind      u16 length + UTF-8 tag, e.g. "tst-model"
//! payload   u64 length + bincode bytes
//! checksum  32 bytes SHA-256 of the payload
//! ```
//!
//! Readers demand an exact version and kind match; there is no fallback.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"SLPCAST\0";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported {kind} format version {found} (expected {expected})")]
    Version { kind: String, found: u32, expected: u32 },
    #[error("file holds a {found:?}, expected a {expected:?}")]
    Kind { found: String, expected: String },
    #[error("file is truncated")]
    Truncated,
    #[error("checksum mismatch, file is corrupt")]
    Checksum,
    #[error("trailing bytes after checksum")]
    Trailing,
    #[error("payload encoding: {0}")]
    Encoding(String),
}

pub fn encode<T: Serialize>(kind: &str, version: u32, value: &T) -> Result<Vec<u8>, ContainerError> {
    let payload = bincode::serialize(value).map_err(|e| ContainerError::Encoding(e.to_string()))?;
    let mut out = Vec::with_capacity(payload.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(kind.len() as u16).to_le_bytes());
    out.extend_from_slice(kind.as_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&Sha256::digest(&payload));
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.buf.len() < n {
            return Err(ContainerError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
}

pub fn decode<T: DeserializeOwned>(kind: &str, version: u32, bytes: &[u8]) -> Result<T, ContainerError> {
    let mut c = Cursor { buf: bytes };
    if c.take(MAGIC.len()).map_err(|_| ContainerError::BadMagic)? != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let found_version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    let kind_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
    let found_kind = String::from_utf8_lossy(c.take(kind_len)?).into_owned();
    if found_kind != kind {
        return Err(ContainerError::Kind {
            found: found_kind,
            expected: kind.to_string(),
        });
    }
    if found_version != version {
        return Err(ContainerError::Version {
            kind: kind.to_string(),
            found: found_version,
            expected: version,
        });
    }
    let len = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let payload = c.take(usize::try_from(len).map_err(|_| ContainerError::Truncated)?)?;
    let checksum = c.take(32)?;
    if !c.buf.is_empty() {
        return Err(ContainerError::Trailing);
    }
    if Sha256::digest(payload).as_slice() != checksum {
        return Err(ContainerError::Checksum);
    }
    bincode::deserialize(payload).map_err(|e| ContainerError::Encoding(e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, kind: &str, version: u32, value: &T) -> Result<(), ContainerError> {
    let bytes = encode(kind, version, value)?;
    write_atomic(path, &bytes).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: &str, version: u32) -> Result<T, ContainerError> {
    let bytes = std::fs::read(path).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(kind, version, &bytes)
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
