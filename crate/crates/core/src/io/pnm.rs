//! 8-bit binary PGM (P5) and PPM (P6) import/export.

use std::io::Write;

use crate::error::{Error, Result};
use crate::frame::Frame;

struct HeaderScanner<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderScanner<'a> {
    fn skip_space(&mut self) -> Result<()> {
        let mut saw_space = false;
        loop {
            match self.buf.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    saw_space = true;
                    self.pos += 1;
                }
                Some(b'#') => {
                    saw_space = true;
                    while let Some(&b) = self.buf.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if saw_space {
            Ok(())
        } else {
            Err(Error::Format("PNM header: missing separator".into()))
        }
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        while matches!(self.buf.get(self.pos), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start || self.pos - start > 9 {
            return Err(Error::Format("PNM header: bad number".into()));
        }
        let s = std::str::from_utf8(&self.buf[start..self.pos]).unwrap();
        s.parse::<usize>()
            .map_err(|e| Error::Format(format!("PNM header: {e}")))
    }
}

/// Parse a binary PGM (P5) or PPM (P6) payload into a frame with values
/// normalized by the declared maxval (8-bit only).
pub fn read_pnm(bytes: &[u8]) -> Result<Frame> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::Format("PNM: bad magic".into())),
    };
    let mut s = HeaderScanner { buf: bytes, pos: 2 };
    s.skip_space()?;
    let width = s.number()?;
    s.skip_space()?;
    let height = s.number()?;
    s.skip_space()?;
    let maxval = s.number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!(
            "PNM maxval {maxval} unsupported (8-bit only)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("PNM: zero dimensions".into()));
    }
    // Exactly one whitespace byte separates the header from raster data.
    match bytes.get(s.pos) {
        Some(b) if b.is_ascii_whitespace() => s.pos += 1,
        _ => return Err(Error::Format("PNM: missing raster separator".into())),
    }
    let n = super::checked_len(&[width, height, channels])?;
    let raster = bytes
        .get(s.pos..s.pos + n)
        .ok_or_else(|| Error::Format("PNM: truncated raster".into()))?;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = raster.iter().map(|&b| b as f64 * scale).collect();
    if data.iter().any(|&v| v > 1.0) {
        return Err(Error::Format("PNM: sample exceeds maxval".into()));
    }
    Frame::from_data(height, width, channels, data)
}

fn write_header<W: Write>(out: &mut W, magic: &str, frame: &Frame) -> Result<()> {
    write!(out, "{magic}\n{} {}\n255\n", frame.width(), frame.height())?;
    Ok(())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a grayscale frame as 8-bit binary PGM.
pub fn write_pgm<W: Write>(frame: &Frame, mut out: W) -> Result<()> {
    let gray = frame.luminance();
    write_header(&mut out, "P5", &gray)?;
    let bytes: Vec<u8> = gray.data().iter().map(|&v| quantize(v)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Write a frame as 8-bit binary PPM (grayscale frames replicate channels).
pub fn write_ppm<W: Write>(frame: &Frame, mut out: W) -> Result<()> {
    write_header(&mut out, "P6", frame)?;
    let mut bytes = Vec::with_capacity(frame.height() * frame.width() * 3);
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if frame.channels() == 3 {
                for c in 0..3 {
                    bytes.push(quantize(frame.at(y, x, c)));
                }
            } else {
                let q = quantize(frame.at(y, x, 0));
                bytes.extend_from_slice(&[q, q, q]);
            }
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}
