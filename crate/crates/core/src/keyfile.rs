//! Key material on disk.
//!
//! Key files are plain text, one `name=value` record per line. Big integers
//! are lowercase hex without a prefix; the `params.*` profile fields are
//! decimal. Files carrying secrets (`master.key`, `s0.key`, `s1.key`) are
//! created owner-readable only where the platform supports it.
//!
//! The power-table cache is binary: `SPCT` magic, a version byte, the block
//! width, a big-endian u32 table length, the SHA-256 digest of the wire
//! encoding of N^2, a big-endian u32 entry count, then each entry as a
//! length-prefixed minimal big-endian magnitude (the wire integer format).

use crate::fastpai::{PrivateKey, PublicKey, SecurityParams};
use crate::offline::PrecompTable;
use crate::threshold::{PartialKey, ShareIndex};
use crate::transport::{decode_nat, encode_nat};
use num_bigint::BigUint;
use num_traits::Zero;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: missing field {name}")]
    MissingField { path: String, name: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("table cache: {0}")]
    TableFormat(String),
    #[error("table cache was built for a different key")]
    TableDigestMismatch,
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Creates a file readable only by its owner where the platform supports
/// per-user permissions.
fn create_private(path: &Path) -> std::io::Result<fs::File> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        fs::OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .mode(0o600)
            .open(path)
    }
    #[cfg(not(unix))]
    {
        fs::File::create(path)
    }
}

fn push_params(out: &mut String, params: &SecurityParams) {
    use std::fmt::Write as _;
    let _ = writeln!(out, "params.kappa={}", params.kappa);
    let _ = writeln!(out, "params.n_len={}", params.n_len);
    let _ = writeln!(out, "params.l_len={}", params.l_len);
    let _ = writeln!(out, "params.sigma={}", params.sigma);
    let _ = writeln!(out, "params.table_block={}", params.table_block);
    let _ = writeln!(out, "params.table_len={}", params.table_len);
}

fn push_pk(out: &mut String, pk: &PublicKey) {
    use std::fmt::Write as _;
    let _ = writeln!(out, "pk.N={:x}", pk.n);
    let _ = writeln!(out, "pk.h={:x}", pk.h);
}

pub fn write_public_key(
    path: &Path,
    params: &SecurityParams,
    pk: &PublicKey,
) -> Result<(), KeyFileError> {
    let mut body = String::new();
    push_params(&mut body, params);
    push_pk(&mut body, pk);
    fs::write(path, body)?;
    Ok(())
}

pub fn write_master_key(
    path: &Path,
    params: &SecurityParams,
    pk: &PublicKey,
    sk: &PrivateKey,
) -> Result<(), KeyFileError> {
    let mut body = String::new();
    push_params(&mut body, params);
    push_pk(&mut body, pk);
    use std::fmt::Write as _;
    let _ = writeln!(body, "sk.alpha={:x}", sk.alpha);
    create_private(path)?.write_all(body.as_bytes())?;
    Ok(())
}

pub fn write_share_key(
    path: &Path,
    params: &SecurityParams,
    pk: &PublicKey,
    share: &PartialKey,
) -> Result<(), KeyFileError> {
    let mut body = String::new();
    push_params(&mut body, params);
    push_pk(&mut body, pk);
    use std::fmt::Write as _;
    let _ = writeln!(body, "share.index={}", share.index.as_u8());
    let _ = writeln!(body, "share.value={:x}", share.share);
    create_private(path)?.write_all(body.as_bytes())?;
    Ok(())
}

struct Records {
    path: String,
    fields: BTreeMap<String, String>,
}

impl Records {
    fn read(path: &Path) -> Result<Self, KeyFileError> {
        let text = fs::read_to_string(path)?;
        let mut fields = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| KeyFileError::Malformed {
                path: display(path),
                line: idx + 1,
                msg: "expected name=value".into(),
            })?;
            fields.insert(name.trim().to_string(), value.trim().to_string());
        }
        Ok(Records {
            path: display(path),
            fields,
        })
    }

    fn get(&self, name: &str) -> Result<&str, KeyFileError> {
        self.fields
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| KeyFileError::MissingField {
                path: self.path.clone(),
                name: name.into(),
            })
    }

    fn hex(&self, name: &str) -> Result<BigUint, KeyFileError> {
        let raw = self.get(name)?;
        BigUint::parse_bytes(raw.as_bytes(), 16).ok_or_else(|| KeyFileError::Invalid {
            path: self.path.clone(),
            msg: format!("field {name} is not lowercase hex"),
        })
    }

    fn dec(&self, name: &str) -> Result<u32, KeyFileError> {
        let raw = self.get(name)?;
        raw.parse().map_err(|_| KeyFileError::Invalid {
            path: self.path.clone(),
            msg: format!("field {name} is not a decimal integer"),
        })
    }

    fn params(&self) -> Result<SecurityParams, KeyFileError> {
        Ok(SecurityParams {
            kappa: self.dec("params.kappa")?,
            n_len: self.dec("params.n_len")?,
            l_len: self.dec("params.l_len")?,
            sigma: self.dec("params.sigma")?,
            table_block: self.dec("params.table_block")?,
            table_len: self.dec("params.table_len")?,
        })
    }

    fn pk(&self, params: &SecurityParams) -> Result<PublicKey, KeyFileError> {
        let n = self.hex("pk.N")?;
        let h = self.hex("pk.h")?;
        if n.is_zero() || h.is_zero() || h >= n {
            return Err(KeyFileError::Invalid {
                path: self.path.clone(),
                msg: "public key values out of range".into(),
            });
        }
        Ok(PublicKey::new(n, h, params.l_len))
    }
}

pub fn load_public_key(path: &Path) -> Result<(SecurityParams, PublicKey), KeyFileError> {
    let r = Records::read(path)?;
    let params = r.params()?;
    let pk = r.pk(&params)?;
    Ok((params, pk))
}

pub fn load_master_key(
    path: &Path,
) -> Result<(SecurityParams, PublicKey, PrivateKey), KeyFileError> {
    let r = Records::read(path)?;
    let params = r.params()?;
    let pk = r.pk(&params)?;
    let alpha = r.hex("sk.alpha")?;
    if alpha.is_zero() || alpha >= pk.n {
        return Err(KeyFileError::Invalid {
            path: r.path,
            msg: "private exponent out of range".into(),
        });
    }
    let sk = PrivateKey {
        alpha,
        n: pk.n.clone(),
    };
    Ok((params, pk, sk))
}

pub fn load_share_key(
    path: &Path,
) -> Result<(SecurityParams, PublicKey, PartialKey), KeyFileError> {
    let r = Records::read(path)?;
    let params = r.params()?;
    let pk = r.pk(&params)?;
    let index = r.dec("share.index")?;
    let index = u8::try_from(index)
        .ok()
        .and_then(|v| ShareIndex::from_u8(v).ok())
        .ok_or_else(|| KeyFileError::Invalid {
            path: r.path.clone(),
            msg: format!("share.index {index} is not 1 or 2"),
        })?;
    let value = r.hex("share.value")?;
    if value.is_zero() {
        return Err(KeyFileError::Invalid {
            path: r.path,
            msg: "share.value must be positive".into(),
        });
    }
    let share = PartialKey {
        index,
        share: value,
        n: pk.n.clone(),
    };
    Ok((params, pk, share))
}

const TABLE_MAGIC: &[u8; 4] = b"SPCT";
const TABLE_VERSION: u8 = 1;

fn modulus_digest(n_squared: &BigUint) -> [u8; 32] {
    let mut buf = Vec::new();
    encode_nat(&mut buf, n_squared);
    let mut hasher = Sha256::new();
    hasher.update(&buf);
    hasher.finalize().into()
}

pub fn write_table_cache(path: &Path, table: &PrecompTable) -> Result<(), KeyFileError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(TABLE_MAGIC);
    buf.push(TABLE_VERSION);
    buf.push(table.block as u8);
    buf.extend_from_slice(&table.len.to_be_bytes());
    buf.extend_from_slice(&modulus_digest(&table.n_squared));
    buf.extend_from_slice(&(table.entry_count() as u32).to_be_bytes());
    for e in table.entries() {
        encode_nat(&mut buf, e);
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Loads a cached table, refusing one built for a different modulus.
pub fn load_table_cache(path: &Path, pk: &PublicKey) -> Result<PrecompTable, KeyFileError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 46 {
        return Err(KeyFileError::TableFormat("file too short".into()));
    }
    if &bytes[..4] != TABLE_MAGIC {
        return Err(KeyFileError::TableFormat("bad magic".into()));
    }
    if bytes[4] != TABLE_VERSION {
        return Err(KeyFileError::TableFormat(format!(
            "unsupported version {}",
            bytes[4]
        )));
    }
    let block = u32::from(bytes[5]);
    let len = u32::from_be_bytes(bytes[6..10].try_into().unwrap());
    if bytes[10..42] != modulus_digest(&pk.n_squared) {
        return Err(KeyFileError::TableDigestMismatch);
    }
    let count = u32::from_be_bytes(bytes[42..46].try_into().unwrap()) as usize;
    let mut flat = Vec::with_capacity(count);
    let mut pos = 46;
    for _ in 0..count {
        let v = decode_nat(&bytes, &mut pos)
            .map_err(|e| KeyFileError::TableFormat(e.to_string()))?;
        flat.push(v);
    }
    if pos != bytes.len() {
        return Err(KeyFileError::TableFormat(format!(
            "{} trailing bytes",
            bytes.len() - pos
        )));
    }
    PrecompTable::from_parts(block, len, pk.n_squared.clone(), flat)
        .map_err(|e| KeyFileError::TableFormat(e.to_string()))
}
