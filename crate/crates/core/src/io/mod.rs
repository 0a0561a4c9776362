//! Bit-exact file formats: FRM1 frames, PGM/PPM images, EVS1/CSV event
//! streams, DFB1 displacement fields, WMP1 weight maps.
//!
//! Every reader parses from an in-memory byte slice and validates magic
//! bytes, declared sizes, and value invariants before constructing a type.

mod dfb1;
mod evs1;
mod frm1;
mod pnm;
mod wmp1;

pub use dfb1::{read_dfb1, write_dfb1};
pub use evs1::{read_events_csv, read_evs1, write_events_csv, write_evs1};
pub use frm1::{read_frm1, write_frm1};
pub use pnm::{read_pnm, write_pgm, write_ppm};
pub use wmp1::{read_wmp1, write_wmp1};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Formats recognizable from leading magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Frm1,
    Pgm,
    Ppm,
    Evs1,
    Dfb1,
    Wmp1,
}

/// Identify a payload by its magic bytes.
pub fn sniff_format(bytes: &[u8]) -> Option<FileFormat> {
    match bytes {
        [b'F', b'R', b'M', b'1', ..] => Some(FileFormat::Frm1),
        [b'E', b'V', b'S', b'1', ..] => Some(FileFormat::Evs1),
        [b'D', b'F', b'B', b'1', ..] => Some(FileFormat::Dfb1),
        [b'W', b'M', b'P', b'1', ..] => Some(FileFormat::Wmp1),
        [b'P', b'5', ..] => Some(FileFormat::Pgm),
        [b'P', b'6', ..] => Some(FileFormat::Ppm),
        _ => None,
    }
}

/// Read a frame file in any supported frame format (FRM1, PGM, PPM).
pub fn read_frame_file(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path)?;
    match sniff_format(&bytes) {
        Some(FileFormat::Frm1) => read_frm1(&bytes),
        Some(FileFormat::Pgm) | Some(FileFormat::Ppm) => read_pnm(&bytes),
        _ => Err(Error::Format(format!(
            "{}: not a recognized frame format",
            path.display()
        ))),
    }
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Format(format!(
                "truncated payload: wanted {n} bytes, have {}",
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                got, expect
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn i8(&mut self) -> Result<i8> {
        Ok(self.take(1)?[0] as i8)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Check that exactly `count` f32 values remain, then read them as f64.
    pub fn f32_tail(&mut self, count: usize) -> Result<Vec<f64>> {
        let need = count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        if self.remaining() != need {
            return Err(Error::Format(format!(
                "payload size mismatch: {} bytes left, expected {need}",
                self.remaining()
            )));
        }
        let raw = self.take(need)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Guarded dimension product to pre-validate declared sizes.
pub(crate) fn checked_len(parts: &[usize]) -> Result<usize> {
    let mut acc = 1usize;
    for &p in parts {
        acc = acc
            .checked_mul(p)
            .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    }
    Ok(acc)
}
