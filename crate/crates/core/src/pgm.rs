//! Plain-text PGM (P2) writer and reader.
//!
//! Output layout is fixed: `P2`, `<width> <height>`, `255`, then one line per
//! image row with values separated by single spaces, each line ending in `\n`.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("not a P2 image")]
    BadMagic,
    #[error("truncated or malformed header")]
    BadHeader,
    #[error("pixel data does not match {width}x{height}")]
    BadData { width: usize, height: usize },
}

/// A grey image with one byte per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GreyImage {
    pub fn new(height: usize, width: usize, fill: u8) -> Self {
        Self { width, height, pixels: vec![fill; width * height] }
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn to_pgm(&self) -> String {
        let mut out = String::with_capacity(16 + self.pixels.len() * 4);
        let _ = writeln!(out, "P2");
        let _ = writeln!(out, "{} {}", self.width, self.height);
        let _ = writeln!(out, "255");
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_pgm(text: &str) -> Result<Self, PgmError> {
        let mut tokens = text.lines().filter(|l| !l.trim_start().starts_with('#')).flat_map(str::split_whitespace);
        if tokens.next() != Some("P2") {
            return Err(PgmError::BadMagic);
        }
        let mut header =
            || -> Result<usize, PgmError> { tokens.next().and_then(|t| t.parse().ok()).ok_or(PgmError::BadHeader) };
        let width = header()?;
        let height = header()?;
        let _max = header()?;
        let pixels: Vec<u8> = tokens
            .map(|t| t.parse::<u8>())
            .collect::<Result<_, _>>()
            .map_err(|_| PgmError::BadData { width, height })?;
        if pixels.len() != width * height {
            return Err(PgmError::BadData { width, height });
        }
        Ok(Self { width, height, pixels })
    }
}
