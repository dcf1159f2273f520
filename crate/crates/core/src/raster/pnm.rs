//! Binary PGM (P5) and PPM (P6) reading and writing.
//!
//! Header: ASCII magic, whitespace separated width, height and maxval
//! (`#` comments allowed between tokens), one whitespace byte, then raw
//! samples. Samples are one byte for maxval < 256, otherwise two bytes
//! big-endian. Writers always emit maxval 255.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{BinaryImage, ColorImage, GrayImage, RasterError};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported magic {0:?} (expected P5 or P6)")]
    BadMagic(String),
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A decoded netpbm image with samples rescaled to 0..=255.
#[derive(Debug, Clone, PartialEq)]
pub enum Pnm {
    Gray(GrayImage),
    Color(ColorImage),
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let c = self.buf[self.pos];
            if c == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8], PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PnmError::BadHeader("unexpected end of header"));
        }
        Ok(&self.buf[start..self.pos])
    }

    fn number(&mut self) -> Result<usize, PnmError> {
        let t = self.token()?;
        std::str::from_utf8(t).ok().and_then(|s| s.parse().ok()).ok_or(PnmError::BadHeader("expected a decimal number"))
    }
}

pub fn decode(buf: &[u8]) -> Result<Pnm, PnmError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.token()?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(PnmError::BadMagic(String::from_utf8_lossy(other).into_owned())),
    };
    let width = cur.number()?;
    let height = cur.number()?;
    let maxval = cur.number()?;
    if width == 0 || height == 0 {
        return Err(PnmError::BadHeader("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::BadHeader("maxval out of range"));
    }
    // exactly one whitespace byte separates header and raster
    if cur.pos >= buf.len() || !buf[cur.pos].is_ascii_whitespace() {
        return Err(PnmError::BadHeader("missing whitespace after maxval"));
    }
    cur.pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let count = width * height * channels;
    let raw = &buf[cur.pos..];
    if raw.len() < count * bytes_per {
        return Err(PnmError::Truncated { expected: count * bytes_per, found: raw.len() });
    }
    let samples: Vec<u32> = if bytes_per == 1 {
        raw[..count].iter().map(|&b| b as u32).collect()
    } else {
        raw[..count * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as u32).collect()
    };
    let scale = 255.0 / maxval as f64;
    if channels == 1 {
        let data = samples.iter().map(|&s| s as f64 * scale).collect();
        Ok(Pnm::Gray(GrayImage::new(width, height, data)?))
    } else {
        let data =
            samples.iter().map(|&s| if maxval == 255 { s as u8 } else { (s as f64 * scale).round() as u8 }).collect();
        Ok(Pnm::Color(ColorImage::new(width, height, data)?))
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn encode_binary(img: &BinaryImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn encode_color(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<Pnm, PnmError> {
    decode(&fs::read(path)?)
}

/// Read any P5/P6 file as a gray image (color goes through the luma weights).
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage, PnmError> {
    Ok(match read(path)? {
        Pnm::Gray(g) => g,
        Pnm::Color(c) => super::to_grayscale(&c),
    })
}

pub fn write_gray(path: impl AsRef<Path>, img: &GrayImage) -> io::Result<()> {
    fs::write(path, encode_gray(img))
}

pub fn write_binary(path: impl AsRef<Path>, img: &BinaryImage) -> io::Result<()> {
    fs::write(path, encode_binary(img))
}

pub fn write_color(path: impl AsRef<Path>, img: &ColorImage) -> io::Result<()> {
    fs::write(path, encode_color(img))
}
