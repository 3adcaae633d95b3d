//! Flat parameter layouts and the binary checkpoint container.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! magic        b"LDCK"
//! version      u32
//! kind         u32 length + UTF-8
//! dims         u32 count + u32 values
//! catalog hash u32 length + UTF-8
//! blocks       u32 count, each: u32 name length + name, u32 rows, u32 cols, f32 values
//! ```
//!
//! Training resume state uses the same layout with magic `b"LDST"` and `f64`
//! values.

use std::fs;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LDCK";
pub const STATE_MAGIC: &[u8; 4] = b"LDST";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated or malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint mismatch: {0}")]
    Mismatch(String),
}

/// A named matrix inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    len: usize,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its range in the flat vector.
    pub fn push(&mut self, name: &str, rows: usize, cols: usize) -> Range<usize> {
        let block = ParamBlock { name: name.to_string(), rows, cols, offset: self.len };
        self.len += rows * cols;
        let r = block.range();
        self.blocks.push(block);
        r
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Name of the block holding flat index `i`.
    pub fn block_of(&self, i: usize) -> Option<&str> {
        self.blocks.iter().find(|b| b.range().contains(&i)).map(|b| b.name.as_str())
    }

    /// First block with a non-finite entry.
    pub fn first_non_finite(&self, values: &[f64]) -> Option<&str> {
        self.blocks.iter().find(|b| values[b.range()].iter().any(|v| !v.is_finite())).map(|b| b.name.as_str())
    }
}

/// Parameters plus the metadata needed to rebuild the model around them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub dims: Vec<u32>,
    pub catalog_hash: String,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl Checkpoint {
    /// Writes with `f32` values (checkpoint) or exact `f64` (resume state).
    pub fn to_bytes(&self, exact: bool) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(if exact { STATE_MAGIC } else { CHECKPOINT_MAGIC });
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        put_str(&mut out, &self.catalog_hash);
        out.extend_from_slice(&(self.layout.blocks().len() as u32).to_le_bytes());
        for b in self.layout.blocks() {
            put_str(&mut out, &b.name);
            out.extend_from_slice(&(b.rows as u32).to_le_bytes());
            out.extend_from_slice(&(b.cols as u32).to_le_bytes());
            for v in &self.values[b.range()] {
                if exact {
                    out.extend_from_slice(&v.to_le_bytes());
                } else {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
        out
    }

    /// Reads either flavor; the magic decides the value width.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        let exact = match magic {
            m if m == CHECKPOINT_MAGIC => false,
            m if m == STATE_MAGIC => true,
            _ => return Err(CheckpointError::Magic),
        };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let kind = r.string()?;
        let n = r.u32()? as usize;
        let dims = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let catalog_hash = r.string()?;
        let blocks = r.u32()? as usize;
        let mut layout = ParamLayout::new();
        let mut values = Vec::new();
        for _ in 0..blocks {
            let name = r.string()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            layout.push(&name, rows, cols);
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| CheckpointError::Malformed(format!("block {name} is too large")))?;
            for _ in 0..count {
                values.push(if exact { r.f64()? } else { r.f32()? as f64 });
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint { kind, dims, catalog_hash, layout, values })
    }

    pub fn save(&self, path: &Path, exact: bool) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes(exact)).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.display().to_string(), source };
        let mut bytes = Vec::new();
        fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
        Self::from_bytes(&bytes)
    }

    /// Checks kind, catalog and block schema against what a model expects.
    pub fn expect(&self, kind: &str, catalog_hash: &str, layout: &ParamLayout) -> Result<(), CheckpointError> {
        if self.kind != kind {
            return Err(CheckpointError::Mismatch(format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        if self.catalog_hash != catalog_hash {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint was trained on catalog {}, not {catalog_hash}",
                self.catalog_hash
            )));
        }
        if &self.layout != layout {
            return Err(CheckpointError::Mismatch("parameter blocks differ from the model's".into()));
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Malformed(format!("unexpected end at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("non-UTF-8 string".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut layout = ParamLayout::new();
        layout.push("w", 2, 3);
        layout.push("b", 2, 1);
        Checkpoint {
            kind: "test".into(),
            dims: vec![3, 2],
            catalog_hash: "abcd".into(),
            layout,
            values: vec![0.1, -0.2, 0.3, 1.0, 2.0, 3.0, 0.5, -0.5],
        }
    }

    #[test]
    fn exact_roundtrip() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes(true)).unwrap(), c);
    }

    #[test]
    fn f32_roundtrip_rounds_values() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes(false)).unwrap();
        assert_eq!(back.layout, c.layout);
        for (a, b) in back.values.iter().zip(&c.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(&c.to_bytes(false)[..4], b"LDCK");
    }

    #[test]
    fn corrupt_inputs() {
        let c = sample();
        let bytes = c.to_bytes(false);
        assert!(matches!(Checkpoint::from_bytes(b"XXXX"), Err(CheckpointError::Magic)));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CheckpointError::Malformed(_))));
        let mut v2 = bytes.clone();
        v2[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::Version(9))));
    }

    #[test]
    fn layout_lookup() {
        let c = sample();
        assert_eq!(c.layout.block_of(7), Some("b"));
        assert_eq!(c.layout.block_of(8), None);
        let mut v = c.values.clone();
        v[6] = f64::NAN;
        assert_eq!(c.layout.first_non_finite(&v), Some("b"));
        assert!(c.expect("nmt", "abcd", &c.layout).is_err());
        assert!(c.expect("test", "abcd", &c.layout).is_ok());
    }
}
