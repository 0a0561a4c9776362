//! FRM1 lossless frame format: magic `FRM1`, u32 height, u32 width, u32
//! channels, f64 timestamp, then f32 row-major channel-interleaved data.

use std::io::Write;

use super::{checked_len, Reader};
use crate::error::{Error, Result};
use crate::frame::Frame;

pub fn read_frm1(bytes: &[u8]) -> Result<Frame> {
    let mut r = Reader::new(bytes);
    r.magic(b"FRM1")?;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let timestamp = r.f64()?;
    if channels != 1 && channels != 3 {
        return Err(Error::Format(format!("FRM1 channels {channels}")));
    }
    if !timestamp.is_finite() {
        return Err(Error::Format("FRM1 non-finite timestamp".into()));
    }
    let n = checked_len(&[height, width, channels])?;
    let data = r.f32_tail(n)?;
    let frame = Frame::from_data(height, width, channels, data)
        .map_err(|e| Error::Format(format!("FRM1 data: {e}")))?;
    Ok(frame.with_timestamp(timestamp))
}

pub fn write_frm1<W: Write>(frame: &Frame, mut out: W) -> Result<()> {
    out.write_all(b"FRM1")?;
    out.write_all(&(frame.height() as u32).to_le_bytes())?;
    out.write_all(&(frame.width() as u32).to_le_bytes())?;
    out.write_all(&(frame.channels() as u32).to_le_bytes())?;
    out.write_all(&frame.timestamp.to_le_bytes())?;
    for &v in frame.data() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}
