//! Stitching per-slice token maps into one global 2D map and serializing
//! it, overview first, as a 1D token sequence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::encoder::Origin;
use crate::error::{Error, Result};
use crate::format::{FormatError, Reader, Writer};
use crate::hiwin_attn::TokenMap;
use crate::numerics::Tensor;
use crate::slicing::SliceLayout;

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledTokens {
    pub rows: usize,
    pub cols: usize,
    pub n: usize,
    /// `[N * rows, N * cols, C]`
    pub global_map: Tensor,
    pub overview: TokenMap,
}

impl AssembledTokens {
    pub fn channels(&self) -> usize {
        self.overview.channels()
    }

    /// `N^2 * (1 + rows * cols)`
    pub fn token_count(&self) -> usize {
        self.n * self.n * (1 + self.rows * self.cols)
    }

    /// Block `(i, j)` of the global map as a standalone token map.
    pub fn slice_block(&self, i: usize, j: usize) -> Result<TokenMap> {
        if i >= self.rows || j >= self.cols {
            return Err(Error::InvalidArgument(format!("no slice ({i}, {j}) in a {}x{} layout", self.rows, self.cols)));
        }
        let (n, c) = (self.n, self.channels());
        let data = Tensor::from_hwc_fn(n, n, c, |y, x, ch| self.global_map.at3(i * n + y, j * n + x, ch));
        TokenMap::new(data, Origin::Slice(i * self.cols + j))
    }
}

/// Places slice `k = i * cols + j` at block `(i, j)` of the global map.
pub fn assemble(slice_maps: &[TokenMap], layout: &SliceLayout, overview: TokenMap) -> Result<AssembledTokens> {
    if slice_maps.len() != layout.count() {
        return Err(Error::InvalidArgument(format!(
            "{} slice token maps for a {}x{} layout",
            slice_maps.len(),
            layout.cols,
            layout.rows
        )));
    }
    let (n, c) = (overview.n(), overview.channels());
    for (k, m) in slice_maps.iter().enumerate() {
        if m.data.shape() != overview.data.shape() {
            return Err(Error::Shape(format!(
                "slice {k} tokens are {:?}, overview is {:?}",
                m.data.shape(),
                overview.data.shape()
            )));
        }
    }
    let (rows, cols) = (layout.rows, layout.cols);
    let mut global_map = Tensor::zeros(&[n * rows, n * cols, c]);
    for (k, m) in slice_maps.iter().enumerate() {
        let (i, j) = (k / cols, k % cols);
        for y in 0..n {
            for x in 0..n {
                global_map.pixel_mut(i * n + y, j * n + x).copy_from_slice(m.token(y, x));
            }
        }
    }
    Ok(AssembledTokens {
        rows,
        cols,
        n,
        global_map,
        overview,
    })
}

/// Where a sequence entry came from: `row, col` are positions in the
/// overview grid or in the stitched global map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenIndex {
    pub row: usize,
    pub col: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    /// `[L, C]`
    pub tokens: Tensor,
    pub index: Vec<TokenIndex>,
}

/// Overview tokens row-major, then the global map row-major across its
/// full width, so horizontal neighbors stay adjacent in the sequence.
pub fn flatten(assembled: &AssembledTokens) -> TokenSequence {
    let (n, c) = (assembled.n, assembled.channels());
    let mut data = Vec::with_capacity(assembled.token_count() * c);
    let mut index = Vec::with_capacity(assembled.token_count());
    data.extend_from_slice(assembled.overview.data.data());
    for row in 0..n {
        for col in 0..n {
            index.push(TokenIndex { row, col, origin: Origin::Overview });
        }
    }
    data.extend_from_slice(assembled.global_map.data());
    for row in 0..n * assembled.rows {
        for col in 0..n * assembled.cols {
            let slice = (row / n) * assembled.cols + col / n;
            index.push(TokenIndex { row, col, origin: Origin::Slice(slice) });
        }
    }
    let len = index.len();
    TokenSequence {
        tokens: Tensor::new(vec![len, c], data).expect("token count matches index"),
        index,
    }
}

/// One `seq_idx row col origin` line per token.
pub fn index_map_text(seq: &TokenSequence) -> String {
    let mut out = String::with_capacity(seq.index.len() * 20);
    for (k, t) in seq.index.iter().enumerate() {
        let origin = match t.origin {
            Origin::Overview => "overview".to_string(),
            Origin::Slice(s) => format!("slice{s}"),
            Origin::External => "external".to_string(),
        };
        writeln!(out, "{k} {} {} {origin}", t.row, t.col).expect("writing to a String");
    }
    out
}

const TOKS_MAGIC: &[u8; 4] = b"TOKS";
const TOKS_VERSION: u32 = 1;

/// `TOKS`, version, rows, cols, N, C, then the overview and global map as
/// float32.
pub fn encode_tokens(assembled: &AssembledTokens) -> Vec<u8> {
    let mut w = Writer::default();
    w.tag(TOKS_MAGIC);
    w.u32(TOKS_VERSION);
    for v in [assembled.rows, assembled.cols, assembled.n, assembled.channels()] {
        w.u32(v as u32);
    }
    w.f32s(assembled.overview.data.data());
    w.f32s(assembled.global_map.data());
    w.buf
}

pub fn decode_tokens(bytes: &[u8]) -> Result<AssembledTokens, FormatError> {
    let mut r = Reader::new(bytes);
    r.expect_tag(TOKS_MAGIC)?;
    let version = r.u32("TOKS header")?;
    if version != TOKS_VERSION {
        return Err(FormatError::UnsupportedVersion { format: "TOKS", version });
    }
    let rows = r.u32("TOKS header")? as usize;
    let cols = r.u32("TOKS header")? as usize;
    let n = r.u32("TOKS header")? as usize;
    let c = r.u32("TOKS header")? as usize;
    let overflow = || FormatError::Invalid(format!("TOKS dims {rows}x{cols}x{n}x{c} overflow"));
    let per_map = n.checked_mul(n).and_then(|v| v.checked_mul(c)).ok_or_else(overflow)?;
    let global = per_map.checked_mul(rows * cols).ok_or_else(overflow)?;
    let overview = r.f32s(per_map, "TOKS overview")?;
    let global_map = r.f32s(global, "TOKS global map")?;
    if !r.at_end() {
        return Err(FormatError::Invalid(format!("{} trailing bytes after TOKS payload", r.remaining())));
    }
    Ok(AssembledTokens {
        rows,
        cols,
        n,
        global_map: Tensor::new(vec![n * rows, n * cols, c], global_map).expect("count matches dims"),
        overview: TokenMap {
            data: Tensor::new(vec![n, n, c], overview).expect("count matches dims"),
            origin: Origin::Overview,
        },
    })
}

pub fn save_tokens(assembled: &AssembledTokens, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tokens(assembled))?;
    Ok(())
}

pub fn load_tokens(path: impl AsRef<Path>) -> Result<AssembledTokens> {
    Ok(decode_tokens(&fs::read(path)?)?)
}
