use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Coords;
use crate::train::Dataset;

/// Decoded graymap with samples scaled to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    pub maxval: u16,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn into_dataset(self, metadata: impl Into<String>) -> Result<Dataset> {
        Dataset::new(Coords::grid_2d(self.rows, self.cols), self.values, metadata)?.with_shape(self.rows, self.cols)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("byte {}", self.pos), message)
    }

    fn skip_space(&mut self) {
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

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(format!("byte {start}"), format!("{what} out of range")))
    }
}

/// Parses a binary (P5) or plain (P2) portable graymap.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(cur.err("missing P2/P5 magic number")),
    };
    cur.pos = 2;
    let cols = cur.number("width")? as usize;
    let rows = cur.number("height")? as usize;
    cur.skip_space();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if cols == 0 || rows == 0 {
        return Err(cur.err("image has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(format!("byte {maxval_at}"), format!("maxval {maxval} outside 1..=65535")));
    }
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| cur.err("image dimensions overflow"))?;
    let denom = maxval as f64;
    let mut values = Vec::with_capacity(n);
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected a single whitespace byte before raster"));
        }
        cur.pos += 1;
        let width = if maxval < 256 { 1 } else { 2 };
        let raster = &bytes[cur.pos..];
        if raster.len() < n * width {
            return Err(Error::parse(
                format!("byte {}", bytes.len()),
                format!("raster truncated: {} bytes, expected {}", raster.len(), n * width),
            ));
        }
        for i in 0..n {
            let v = if width == 1 {
                raster[i] as u64
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64
            };
            if v > maxval {
                return Err(Error::parse(format!("byte {}", cur.pos + i * width), format!("sample {v} exceeds maxval")));
            }
            values.push(v as f64 / denom);
        }
    } else {
        for _ in 0..n {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval {
                return Err(Error::parse(format!("byte {at}"), format!("sample {v} exceeds maxval")));
            }
            values.push(v as f64 / denom);
        }
    }
    Ok(GrayImage {
        rows,
        cols,
        maxval: maxval as u16,
        values,
    })
}

/// Reads a graymap into a dataset on the [−1, 1)² grid with every pixel in
/// the training set.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_pgm(&bytes)
        .map_err(|e| e.in_stage(path.display().to_string()))?
        .into_dataset(path.display().to_string())
}

/// Quantizes values in [0, 1] to 8 bits (clamping outside values) and
/// encodes them as P5.
pub fn encode_pgm(values: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols || rows == 0 {
        return Err(Error::Dimension(format!(
            "{} values for a {rows}x{cols} image",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("image values must be finite".into()));
    }
    let mut header = String::new();
    let _ = write!(header, "P5\n{cols} {rows}\n255\n");
    let mut out = header.into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn save_pgm(values: &[f64], rows: usize, cols: usize, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pgm(values, rows, cols)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_bytes_scale_directly() {
        let img = decode_pgm(b"P5\n2 2\n255\n\x00\xff\x80\x40").unwrap();
        assert_eq!(img.values, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn plain_and_binary_agree() {
        let a = decode_pgm(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        let b = decode_pgm(b"P5 2 2 255 \x00\xff\x80\x40").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sixteen_bit_samples() {
        let img = decode_pgm(b"P5\n1 1\n65535\n\xff\xff").unwrap();
        assert_eq!(img.values, vec![1.0]);
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let cases: [(&[u8], &str); 4] = [
            (b"P6\n1 1\n255\n\x00", "byte 0"),
            (b"P5\n1 x\n255\n\x00", "byte 5"),
            (b"P5\n1 1\n0\n\x00", "byte 7"),
            (b"P5\n2 2\n255\n\x00", "byte 12"),
        ];
        for (bytes, at) in cases {
            match decode_pgm(bytes) {
                Err(Error::Parse { context, .. }) => assert_eq!(context, at),
                other => panic!("expected a parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn encode_round_trips_8_bit() {
        let bytes: Vec<u8> = (0..=255).collect();
        let mut file = b"P5\n16 16\n255\n".to_vec();
        file.extend(&bytes);
        let img = decode_pgm(&file).unwrap();
        assert_eq!(encode_pgm(&img.values, 16, 16).unwrap(), file);
    }
}
