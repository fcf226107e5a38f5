//! Binary PPM (P6, 8-bit) reader and writer.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Image;

#[derive(Debug, Error)]
pub enum PpmError {
    #[error("bad magic at byte 0: expected \"P6\"")]
    BadMagic,

    #[error("malformed header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },

    #[error("unsupported bit depth: maxval {maxval} (only 8-bit, maxval 255, is supported)")]
    UnsupportedDepth { maxval: u32 },

    #[error("unsupported maxval {maxval} at byte {offset} (expected 255)")]
    UnsupportedMaxval { offset: usize, maxval: u32 },

    #[error("truncated pixel data at byte {offset}: expected {expected} bytes, found {actual}")]
    Truncated { offset: usize, expected: usize, actual: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::BadHeader {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PpmError::BadHeader {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

/// Decodes a P6 file held in memory.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image, PpmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(PpmError::BadMagic);
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(PpmError::BadMagic);
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_offset = {
        cur.skip_space_and_comments();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::BadHeader {
            offset: maxval_offset,
            reason: format!("zero-sized image {width}x{height}"),
        });
    }
    if maxval > 255 {
        return Err(PpmError::UnsupportedDepth { maxval });
    }
    if maxval != 255 {
        return Err(PpmError::UnsupportedMaxval { offset: maxval_offset, maxval });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => {
            return Err(PpmError::BadHeader {
                offset: cur.pos,
                reason: "expected a single whitespace byte before pixel data".into(),
            })
        }
    }
    let (w, h) = (width as usize, height as usize);
    let expected = w * h * 3;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PpmError::Truncated {
            offset: cur.pos,
            expected,
            actual: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Ok(Image::from_raw(h, w, data))
}

/// Encodes an image as P6 with a canonical `P6\n<w> <h>\n255\n` header.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.tensor().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(image.tensor().data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Image, PpmError> {
    decode_ppm(&fs::read(path)?)
}

pub fn save_ppm(image: &Image, path: impl AsRef<Path>) -> Result<(), PpmError> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}
