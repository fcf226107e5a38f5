//! Little-endian binary helpers shared by the feature, checkpoint, and
//! token file formats.

use thiserror::Error;

use crate::numerics::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated { what: String, expected: usize, actual: usize },

    #[error("invalid contents: {0}")]
    Invalid(String),
}

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn tag(&mut self, tag: &[u8; 4]) {
        self.buf.extend_from_slice(tag);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, values: &[f64]) {
        for &v in values {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }

    /// Rank, dims, then float32 payload.
    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u32(d as u32);
        }
        self.f32s(t.data());
    }
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn at_end(&self) -> bool {
        self.remaining() == 0
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated {
                what: what.to_string(),
                expected: n,
                actual: self.remaining(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn peek_tag(&self) -> Option<[u8; 4]> {
        self.bytes.get(self.pos..self.pos + 4).map(|s| [s[0], s[1], s[2], s[3]])
    }

    pub fn expect_tag(&mut self, tag: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != tag {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(tag).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        let s = self.take(4, what)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    }

    pub fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>, FormatError> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| FormatError::Invalid(format!("{what}: element count overflows")))?;
        let s = self.take(bytes, what)?;
        Ok(s.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    pub fn tensor(&mut self, what: &str) -> Result<Tensor, FormatError> {
        let rank = self.u32(what)? as usize;
        if rank > 8 {
            return Err(FormatError::Invalid(format!("{what}: implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32(what)? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::Invalid(format!("{what}: shape {shape:?} overflows")))?;
        let data = self.f32s(count, what)?;
        Ok(Tensor::new(shape, data).expect("count matches shape"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_record_round_trip() {
        let t = Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.25, 0.0, 8.0, -0.125]).unwrap();
        let mut w = Writer::default();
        w.tensor(&t);
        w.tensor(&Tensor::scalar(1.5));
        let mut r = Reader::new(&w.buf);
        assert_eq!(r.tensor("a").unwrap(), t);
        assert_eq!(r.tensor("b").unwrap(), Tensor::scalar(1.5));
        assert!(r.at_end());
    }

    #[test]
    fn truncation_reports_sizes() {
        let mut w = Writer::default();
        w.u32(1);
        w.u32(4);
        w.f32s(&[1.0, 2.0]);
        let err = Reader::new(&w.buf).tensor("weights").unwrap_err();
        assert_eq!(
            err,
            FormatError::Truncated { what: "weights".into(), expected: 16, actual: 8 }
        );
    }
}
