//! Weight container: a textual header followed by raw little-endian `f32`
//! tensor data in declaration order.
//!
//! ```text
//! SCENERISK-WEIGHTS 1
//! meta <key> <value>
//! tensor <name> <d0>x<d1>x...
//! end
//! <bytes>
//! ```
//!
//! Encoding is deterministic, so `encode(decode(bytes)) == bytes`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::Tensor;

pub const CONTAINER_MAGIC: &str = "SCENERISK-WEIGHTS";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContainerError {
    BadMagic,
    UnsupportedVersion(String),
    MalformedHeader { line: usize, reason: String },
    /// Header text that cannot be written (line breaks, whitespace in names).
    InvalidText(String),
    Truncated { tensor: String, needed: usize, available: usize },
    TrailingBytes(usize),
}

impl fmt::Display for ContainerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContainerError::BadMagic => write!(f, "not a weight file: missing {CONTAINER_MAGIC} magic"),
            ContainerError::UnsupportedVersion(v) => {
                write!(f, "unsupported weight format version {v:?} (expected {CONTAINER_VERSION})")
            }
            ContainerError::MalformedHeader { line, reason } => {
                write!(f, "malformed weight header at line {line}: {reason}")
            }
            ContainerError::InvalidText(t) => write!(f, "cannot encode header text {t:?}"),
            ContainerError::Truncated {
                tensor,
                needed,
                available,
            } => write!(
                f,
                "weight file truncated in tensor {tensor}: needs {needed} bytes, {available} left"
            ),
            ContainerError::TrailingBytes(n) => write!(f, "{n} unexpected bytes after the last tensor"),
        }
    }
}

impl core::error::Error for ContainerError {}

/// Ordered metadata entries and named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightFile {
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace())
}

impl WeightFile {
    /// Values of every metadata entry with this key, in order.
    pub fn meta<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.metadata
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn encode(&self) -> Result<Vec<u8>, ContainerError> {
        let mut header = format!("{CONTAINER_MAGIC} {CONTAINER_VERSION}\n");
        for (key, value) in &self.metadata {
            if !is_token(key) {
                return Err(ContainerError::InvalidText(key.clone()));
            }
            if value.contains(['\n', '\r']) || value.trim() != value {
                return Err(ContainerError::InvalidText(value.clone()));
            }
            header.push_str(&format!("meta {key} {value}\n"));
        }
        for (name, tensor) in &self.tensors {
            if !is_token(name) {
                return Err(ContainerError::InvalidText(name.clone()));
            }
            let dims: Vec<String> = tensor.shape().iter().map(|d| format!("{d}")).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join("x")));
        }
        header.push_str("end\n");
        let payload: usize = self.tensors.iter().map(|(_, t)| t.len() * 4).sum();
        let mut out = Vec::with_capacity(header.len() + payload);
        out.extend_from_slice(header.as_bytes());
        for (_, tensor) in &self.tensors {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut pos = 0;
        let mut line_no = 0;
        let next_line = |pos: &mut usize| -> Option<&[u8]> {
            let rest = &bytes[*pos..];
            let end = rest.iter().position(|&b| b == b'\n')?;
            *pos += end + 1;
            Some(&rest[..end])
        };
        let malformed = |line: usize, reason: &str| ContainerError::MalformedHeader {
            line,
            reason: reason.to_owned(),
        };

        let first = next_line(&mut pos).ok_or(ContainerError::BadMagic)?;
        let first = core::str::from_utf8(first).map_err(|_| ContainerError::BadMagic)?;
        let version = first
            .strip_prefix(CONTAINER_MAGIC)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or(ContainerError::BadMagic)?;
        if version != format!("{CONTAINER_VERSION}") {
            return Err(ContainerError::UnsupportedVersion(version.to_owned()));
        }

        let mut file = WeightFile::default();
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        loop {
            line_no += 1;
            let raw = next_line(&mut pos).ok_or_else(|| ContainerError::Truncated {
                tensor: String::from("<header>"),
                needed: 1,
                available: 0,
            })?;
            let line = core::str::from_utf8(raw).map_err(|_| malformed(line_no, "not UTF-8"))?;
            if line == "end" {
                break;
            }
            let (tag, rest) = line.split_once(' ').ok_or_else(|| malformed(line_no, "missing fields"))?;
            let (name, value) = rest.split_once(' ').ok_or_else(|| malformed(line_no, "missing value"))?;
            match tag {
                "meta" if !shapes.is_empty() => {
                    return Err(malformed(line_no, "metadata after tensor declarations"))
                }
                "meta" => file.metadata.push((name.to_owned(), value.to_owned())),
                "tensor" => {
                    let dims = value
                        .split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| malformed(line_no, "bad tensor shape"))?;
                    if dims.is_empty() || dims.contains(&0) {
                        return Err(malformed(line_no, "empty tensor shape"));
                    }
                    shapes.push((name.to_owned(), dims));
                }
                _ => return Err(malformed(line_no, "unknown header entry")),
            }
        }

        for (name, dims) in shapes {
            let count: usize = dims.iter().product();
            let needed = count * 4;
            let available = bytes.len() - pos;
            if available < needed {
                return Err(ContainerError::Truncated {
                    tensor: name,
                    needed,
                    available,
                });
            }
            let data = bytes[pos..pos + needed]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            pos += needed;
            let tensor = Tensor::new(dims, data).expect("shape product matches buffer");
            file.tensors.push((name, tensor));
        }
        if pos != bytes.len() {
            return Err(ContainerError::TrailingBytes(bytes.len() - pos));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample() -> WeightFile {
        WeightFile {
            metadata: vec![
                ("seed".into(), "42".into()),
                ("layer".into(), "net.0 dense 3 2".into()),
            ],
            tensors: vec![
                (
                    "net.0.weight".into(),
                    Tensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, f32::MIN_POSITIVE, 3.0e7, -0.0]).unwrap(),
                ),
                ("net.0.bias".into(), Tensor::new(vec![2], vec![0.5, 0.25]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let bytes = sample().encode().unwrap();
        let decoded = WeightFile::decode(&bytes).unwrap();
        assert_eq!(decoded.encode().unwrap(), bytes);
        let bits = |f: &WeightFile| -> Vec<u32> {
            f.tensors
                .iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&decoded), bits(&sample()));
        assert_eq!(decoded.meta("layer").collect::<Vec<_>>(), ["net.0 dense 3 2"]);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode().unwrap();
        assert!(bytes.starts_with(b"SCENERISK-WEIGHTS 1\nmeta seed 42\nmeta layer net.0 dense 3 2\n"));
        // 8 floats after the header
        let header_end = bytes.windows(4).position(|w| w == b"end\n").unwrap() + 4;
        assert_eq!(bytes.len() - header_end, 32);
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = sample().encode().unwrap();
        bytes[0] = b'X';
        assert_eq!(WeightFile::decode(&bytes), Err(ContainerError::BadMagic));
        let other = b"SCENERISK-WEIGHTS 9\nend\n";
        assert_eq!(
            WeightFile::decode(other),
            Err(ContainerError::UnsupportedVersion("9".into()))
        );
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample().encode().unwrap();
        let cut = &bytes[..bytes.len() - 6];
        assert!(matches!(
            WeightFile::decode(cut),
            Err(ContainerError::Truncated { ref tensor, .. }) if tensor == "net.0.bias"
        ));
        let header_only = b"SCENERISK-WEIGHTS 1\nmeta a b\n";
        assert!(matches!(WeightFile::decode(header_only), Err(ContainerError::Truncated { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(WeightFile::decode(&extra), Err(ContainerError::TrailingBytes(1)));
    }

    #[test]
    fn rejects_unencodable_text() {
        let mut f = sample();
        f.metadata.push(("bad key".into(), "v".into()));
        assert!(matches!(f.encode(), Err(ContainerError::InvalidText(_))));
        let mut f = sample();
        f.metadata.push(("k".into(), "two\nlines".into()));
        assert!(f.encode().is_err());
    }
}
