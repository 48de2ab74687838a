use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 digest of a file's raw bytes. Serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({})", self.to_hex())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for ContentHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim())
            .map_err(|e| Error::Parse(format!("content hash {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Parse(format!("content hash {s:?} is not 32 bytes")))?;
        Ok(ContentHash(arr))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn hash_content(bytes: &[u8]) -> ContentHash {
    ContentHash(Sha256::digest(bytes).into())
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<ContentHash> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_content(&bytes))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn empty_input_digest_is_fixed() {
        assert_eq!(
            hash_content(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn identical_bytes_identical_digest() {
        assert_eq!(hash_content(b"image-bytes"), hash_content(b"image-bytes"));
        assert_ne!(hash_content(b"image-bytes"), hash_content(b"image-bytez"));
    }

    #[test]
    fn hex_round_trip() {
        let h = hash_content(b"abc");
        let s = serde_json::to_string(&h).unwrap();
        let back: ContentHash = serde_json::from_str(&s).unwrap();
        assert_eq!(h, back);
        assert!("zz".parse::<ContentHash>().is_err());
    }

    #[test]
    fn shared_file_dedup_removes_one_copy() {
        let a: Vec<&[u8]> = vec![b"one", b"two", b"shared"];
        let b: Vec<&[u8]> = vec![b"three", b"shared"];
        let left: HashSet<ContentHash> = a.iter().map(|x| hash_content(x)).collect();
        let kept: Vec<&[u8]> = b
            .iter()
            .copied()
            .filter(|x| !left.contains(&hash_content(x)))
            .collect();
        // set-difference oracle on the raw byte strings
        let oracle: Vec<&[u8]> = b.iter().copied().filter(|x| !a.contains(x)).collect();
        assert_eq!(kept, oracle);
        assert_eq!(b.len() - kept.len(), 1);
    }

    #[test]
    fn hash_file_reads_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        std::fs::write(&p, b"payload").unwrap();
        assert_eq!(hash_file(&p).unwrap(), hash_content(b"payload"));
        assert!(hash_file(dir.path().join("missing")).is_err());
    }
}
