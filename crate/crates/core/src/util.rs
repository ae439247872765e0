//! Small shared helpers: stable hashing, seed derivation, and JSONL I/O.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// FNV-1a 64-bit. Used wherever a hash must be stable across runs and
/// toolchain versions (feature hashing, seed derivation, config hashes).
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashes a sequence of byte-string parts with a separator so that
/// `("ab","c")` and `("a","bc")` map to different values.
pub fn fnv1a_parts(parts: &[&[u8]]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash ^= 0xff;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives a child seed from a base seed and a context label plus indices.
/// Rollouts, curriculum sampling, and evaluation each derive disjoint
/// streams from the run seed this way.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    let mut hash = fnv1a_parts(&[&base.to_le_bytes(), label.as_bytes()]);
    for &ix in indices {
        hash = fnv1a_parts(&[&hash.to_le_bytes(), &ix.to_le_bytes()]);
    }
    hash
}

/// Reads a JSONL file, one value per non-empty line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> std::io::Result<Vec<T>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), lineno + 1),
            )
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Writes values as JSONL, one object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> std::io::Result<()> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    for value in values {
        let line = serde_json::to_string(value)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
