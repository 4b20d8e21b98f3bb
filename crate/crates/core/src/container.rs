//! Binary container shared by every file the toolkit writes.
//!
//! Layout: 4-byte magic, `u64` little-endian header length, UTF-8 JSON
//! header, then raw little-endian IEEE-754 values. The header always carries
//! a `precision` field that fixes the payload encoding.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Precision;

pub const PARAMS_MAGIC: [u8; 4] = *b"ATPM";
pub const DATASET_MAGIC: [u8; 4] = *b"ATDS";
pub const BUNDLE_MAGIC: [u8; 4] = *b"ATTB";

pub(crate) fn encode<H: Serialize>(magic: [u8; 4], header: &H, precision: Precision, payload: &[f64]) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + head.len() + payload.len() * precision.bytes());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    precision.encode_into(payload, &mut out);
    Ok(out)
}

pub(crate) fn write<H: Serialize>(path: &Path, magic: [u8; 4], header: &H, precision: Precision, payload: &[f64]) -> Result<()> {
    let bytes = encode(magic, header, precision, payload)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    // Write-then-rename so a crashed run never leaves a truncated artifact
    // that a later cache lookup would accept.
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Split a container into its JSON header and raw payload bytes.
pub fn read_raw(path: &Path, magic: [u8; 4]) -> Result<(serde_json::Value, Precision, Vec<u8>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    if bytes.len() < 12 {
        return Err(bad("file too short"));
    }
    if bytes[..4] != magic {
        return Err(bad(&format!(
            "wrong magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let head_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + head_len {
        return Err(bad("header length exceeds file size"));
    }
    let header: serde_json::Value =
        serde_json::from_slice(&bytes[12..12 + head_len]).map_err(|e| bad(&format!("header is not JSON: {e}")))?;
    let precision = header
        .get("precision")
        .and_then(|p| p.as_str())
        .ok_or_else(|| bad("header lacks a precision field"))
        .and_then(|p| Precision::parse(p).map_err(|_| bad("unknown precision")))?;
    let payload = bytes[12 + head_len..].to_vec();
    if payload.len() % precision.bytes() != 0 {
        return Err(bad("payload is not a whole number of values"));
    }
    Ok((header, precision, payload))
}

/// Read a container whose header deserializes into `H`.
pub(crate) fn read<H: DeserializeOwned>(path: &Path, magic: [u8; 4]) -> Result<(H, Vec<f64>)> {
    let (value, precision, payload) = read_raw(path, magic)?;
    let header: H = serde_json::from_value(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("unexpected header: {e}"),
    })?;
    Ok((header, precision.decode(&payload)))
}

/// Identify a container type from its magic bytes.
pub fn sniff(path: &Path) -> Result<Option<[u8; 4]>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 {
        return Ok(None);
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    Ok([PARAMS_MAGIC, DATASET_MAGIC, BUNDLE_MAGIC].contains(&magic).then_some(magic))
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config values serialize");
    hex(&Sha256::digest(&json))
}

pub fn file_hash(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

pub fn hash_parts(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Head {
        precision: Precision,
        n: usize,
    }

    #[test]
    fn round_trip_and_magic_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let head = Head { precision: Precision::F64, n: 3 };
        write(&p, DATASET_MAGIC, &head, Precision::F64, &[1.0, 2.5, -3.0]).unwrap();
        let (h, vals): (Head, _) = read(&p, DATASET_MAGIC).unwrap();
        assert_eq!(h, head);
        assert_eq!(vals, vec![1.0, 2.5, -3.0]);
        assert!(matches!(read::<Head>(&p, PARAMS_MAGIC), Err(Error::Format { .. })));
        assert_eq!(sniff(&p).unwrap(), Some(DATASET_MAGIC));
    }

    #[test]
    fn missing_file_is_missing_artifact() {
        let err = read_raw(Path::new("/nonexistent/file.atd"), DATASET_MAGIC).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }

    #[test]
    fn hashes_are_stable() {
        assert_eq!(content_hash(&[1, 2, 3]), content_hash(&[1, 2, 3]));
        assert_ne!(hash_parts(&["ab", "c"]), hash_parts(&["a", "bc"]));
    }
}
