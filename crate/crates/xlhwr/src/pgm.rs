//! Netpbm gray images, plain (P2) and raw (P5), 8-bit.

use std::path::Path;

use xlhwr_core::raster::GrayImage;

use crate::error::{CliError, CliResult};

/// A decoding failure at a byte offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmError {
    pub offset: usize,
    pub msg: String,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> PgmError {
        PgmError {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PgmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.data.len() {
                self.err(format!("unexpected end of data, expected {what}"))
            } else {
                self.err(format!("expected {what}"))
            });
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

pub fn decode(data: &[u8]) -> Result<GrayImage, PgmError> {
    let mut c = Cursor { data, pos: 0 };
    if data.len() < 2 || data[0] != b'P' || !matches!(data[1], b'2' | b'5') {
        return Err(c.err("not a P2/P5 graymap"));
    }
    let raw = data[1] == b'5';
    c.pos = 2;
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(c.err("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(c.err(format!("unsupported maxval {maxval}")));
    }
    let scale = |v: usize| ((v * 255 + maxval / 2) / maxval) as u8;
    let n = width.checked_mul(height).ok_or_else(|| c.err("image too large"))?;
    let mut px = Vec::with_capacity(n);
    if raw {
        if c.pos >= data.len() || !data[c.pos].is_ascii_whitespace() {
            return Err(c.err("expected one whitespace byte before raster"));
        }
        c.pos += 1;
        let avail = data.len() - c.pos;
        if avail < n {
            c.pos = data.len();
            return Err(c.err(format!("raster truncated, {avail} of {n} bytes")));
        }
        for &v in &data[c.pos..c.pos + n] {
            if v as usize > maxval {
                return Err(c.err(format!("sample {v} exceeds maxval")));
            }
            px.push(scale(v as usize));
            c.pos += 1;
        }
    } else {
        for _ in 0..n {
            c.skip_space();
            let start = c.pos;
            let v = c.number("sample")?;
            if v > maxval {
                return Err(PgmError {
                    offset: start,
                    msg: format!("sample {v} exceeds maxval"),
                });
            }
            px.push(scale(v));
        }
    }
    GrayImage::new(width, height, px).map_err(|e| c.err(e.to_string()))
}

/// Raw P5 encoding.
pub fn encode_p5(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// Plain P2 encoding, one image row per line.
pub fn encode_p2(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
    for row in img.data().chunks(img.width()) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn load(path: &Path) -> CliResult<GrayImage> {
    let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&data).map_err(|e| CliError::Image {
        path: path.to_path_buf(),
        offset: e.offset,
        msg: e.msg,
    })
}

pub fn save(path: &Path, img: &GrayImage) -> CliResult<()> {
    crate::error::write_file(path, encode_p5(img))
}
