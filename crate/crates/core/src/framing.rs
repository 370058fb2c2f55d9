//! Shared binary layout for matrix and cube files:
//! 8-byte magic, u32 LE header length, UTF-8 JSON header, f32 LE payload.

use std::io::{Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("trailing data: expected {expected} bytes, found {actual}")]
    Trailing { expected: u64, actual: u64 },
    #[error("header is not valid JSON: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn write_frame<W: Write>(
    mut w: W,
    magic: &[u8; 8],
    header: &[u8],
    payload: &[f32],
) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(header)?;
    let mut buf = Vec::with_capacity(payload.len() * 4);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

/// Splits a framed file into header bytes and payload bytes; the payload
/// length is checked by the caller once the header is parsed.
pub(crate) fn split_frame<'a>(
    bytes: &'a [u8],
    magic: &[u8; 8],
) -> Result<(&'a [u8], &'a [u8]), FrameError> {
    if bytes.len() < 12 {
        if bytes.len() >= 8 && &bytes[..8] != magic {
            return Err(bad_magic(magic, &bytes[..8]));
        }
        return Err(FrameError::Truncated {
            expected: 12,
            actual: bytes.len() as u64,
        });
    }
    if &bytes[..8] != magic {
        return Err(bad_magic(magic, &bytes[..8]));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + hlen {
        return Err(FrameError::Truncated {
            expected: (12 + hlen) as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok((&bytes[12..12 + hlen], &bytes[12 + hlen..]))
}

pub(crate) fn decode_payload(
    payload: &[u8],
    prefix: usize,
    count: usize,
) -> Result<Vec<f32>, FrameError> {
    let expected = (prefix + count * 4) as u64;
    let actual = (prefix + payload.len()) as u64;
    if payload.len() < count * 4 {
        return Err(FrameError::Truncated { expected, actual });
    }
    if payload.len() > count * 4 {
        return Err(FrameError::Trailing { expected, actual });
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub(crate) fn read_all(path: &std::path::Path) -> std::io::Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn bad_magic(expected: &[u8; 8], found: &[u8]) -> FrameError {
    FrameError::BadMagic {
        expected: String::from_utf8_lossy(expected).into_owned(),
        found: String::from_utf8_lossy(found).into_owned(),
    }
}
