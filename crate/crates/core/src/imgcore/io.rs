//! Raw gray and binary PGM (P5) codecs.
//!
//! Raw gray layout: `width: u32 LE`, `height: u32 LE`, then `width * height`
//! bytes row-major.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::GrayImage;

/// Upper bound on the pixel count accepted by the decoders (1 Gpx).
pub const MAX_PIXELS: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported PGM maxval {0}, only 255 is supported")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after pixel data")]
    TrailingData(usize),
    #[error("image dimensions {width}x{height} overflow")]
    DimensionOverflow { width: usize, height: usize },
    #[error("pixel buffer has {found} bytes, expected {expected}")]
    DataLength { expected: usize, found: usize },
}

fn checked_area(width: usize, height: usize) -> Result<usize, ImageError> {
    width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or(ImageError::DimensionOverflow { width, height })
}

fn take_pixels(body: &[u8], width: usize, height: usize) -> Result<GrayImage, ImageError> {
    let expected = checked_area(width, height)?;
    if body.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: body.len(),
        });
    }
    if body.len() > expected {
        return Err(ImageError::TrailingData(body.len() - expected));
    }
    GrayImage::new(width, height, body.to_vec())
}

pub fn decode_raw(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 8 {
        return Err(ImageError::MalformedHeader(format!(
            "raw header needs 8 bytes, found {}",
            bytes.len()
        )));
    }
    let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    take_pixels(&bytes[8..], width, height)
}

pub fn encode_raw(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + img.data().len());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(img.data());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
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

    fn number(&mut self, what: &str) -> Result<u64, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse::<u64>()
            .map_err(|_| ImageError::MalformedHeader(format!("{what} out of range")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(ImageError::MalformedHeader("missing P5 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::MalformedHeader("no separator after maxval".into())),
    }
    let (width, height) = (
        usize::try_from(width).unwrap_or(usize::MAX),
        usize::try_from(height).unwrap_or(usize::MAX),
    );
    take_pixels(&bytes[cur.pos..], width, height)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Reads an image; `.pgm` files are parsed as P5, anything else as raw gray.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if is_pgm(path) {
        decode_pgm(&bytes)
    } else {
        decode_raw(&bytes)
    }
}

/// Writes an image; the format follows the same extension rule as [`load_image`].
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = if is_pgm(path) { encode_pgm(img) } else { encode_raw(img) };
    fs::write(path, bytes)?;
    Ok(())
}
