//! Text form of a fully evaluated hash chain: a length header, the
//! secret root, then every link up to the public anchor, one lowercase
//! hex value per line.
//!
//! ```text
//! m=4
//! <root hex>
//! <link 1 hex>
//! <link 2 hex>
//! <link 3 hex>
//! <anchor hex>
//! ```

use std::fmt;
use std::fmt::Write as _;

use train_core::chain::{sha256, Hash, HashChain, HASH_LEN};

#[derive(Debug, PartialEq, Eq)]
pub enum ChainFileError {
    /// The first line is not `m=<integer>`.
    Header(String),
    /// The number of value lines does not match the header.
    LineCount { want: usize, got: usize },
    /// A value line is not 32 bytes of hex.
    BadValue { line: usize },
    /// A line is not the hash of its predecessor.
    BrokenLink { line: usize },
}

impl fmt::Display for ChainFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainFileError::Header(line) => {
                write!(f, "line 1: expected m=<integer>, got {line:?}")
            }
            ChainFileError::LineCount { want, got } => {
                write!(f, "expected {want} value lines after the header, found {got}")
            }
            ChainFileError::BadValue { line } => {
                write!(f, "line {line}: not a 32-byte hex value")
            }
            ChainFileError::BrokenLink { line } => {
                write!(f, "line {line}: value is not the hash of the previous line")
            }
        }
    }
}

impl std::error::Error for ChainFileError {}

pub fn render(chain: &HashChain) -> String {
    let mut out = String::with_capacity(12 + chain.links().len() * (2 * HASH_LEN + 1));
    writeln!(out, "m={}", chain.length_m()).expect("write to string");
    for link in chain.links() {
        writeln!(out, "{}", hex::encode(link)).expect("write to string");
    }
    out
}

pub fn parse(text: &str) -> Result<HashChain, ChainFileError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ChainFileError::Header(String::new()))?;
    let m: u32 = header
        .strip_prefix("m=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ChainFileError::Header(header.into()))?;
    let values: Vec<&str> = lines.collect();
    let want = m as usize + 1;
    if values.len() != want {
        return Err(ChainFileError::LineCount {
            want,
            got: values.len(),
        });
    }
    let mut links: Vec<Hash> = Vec::with_capacity(want);
    for (i, value) in values.iter().enumerate() {
        let line = i + 2;
        let bytes =
            hex::decode(value.trim()).map_err(|_| ChainFileError::BadValue { line })?;
        let hash: Hash = bytes
            .try_into()
            .map_err(|_| ChainFileError::BadValue { line })?;
        if let Some(prev) = links.last() {
            if hash != sha256(prev) {
                return Err(ChainFileError::BrokenLink { line });
            }
        }
        links.push(hash);
    }
    HashChain::from_links(links).map_err(|_| ChainFileError::LineCount {
        want,
        got: values.len(),
    })
}

/// Derives the chain root from a hex seed: exactly 32 bytes are used
/// verbatim, anything else is hashed down to 32.
pub fn root_from_seed(seed_hex: &str) -> Result<Hash, String> {
    let bytes = hex::decode(seed_hex.trim())
        .map_err(|_| format!("seed must be hex, got {seed_hex:?}"))?;
    Ok(match <[u8; HASH_LEN]>::try_from(bytes.as_slice()) {
        Ok(root) => root,
        Err(_) => sha256(&bytes),
    })
}
