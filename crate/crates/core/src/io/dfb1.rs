//! DFB1 displacement-field format: magic `DFB1`, u32 T, u32 H, u32 W, f64
//! t0, f64 t1, then f32 data in [component][bin][row][col] order.

use std::io::Write;

use super::{checked_len, Reader};
use crate::error::{Error, Result};
use crate::exposure::TimeBins;
use crate::field::DisplacementField;

pub fn read_dfb1(bytes: &[u8]) -> Result<DisplacementField> {
    let mut r = Reader::new(bytes);
    r.magic(b"DFB1")?;
    let t = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    let t0 = r.f64()?;
    let t1 = r.f64()?;
    let bins =
        TimeBins::new(t0, t1, t).map_err(|e| Error::Format(format!("DFB1 bins: {e}")))?;
    let n = checked_len(&[2, t, height, width])?;
    let data = r.f32_tail(n)?;
    DisplacementField::from_data(bins, height, width, data)
        .map_err(|e| Error::Format(format!("DFB1 data: {e}")))
}

pub fn write_dfb1<W: Write>(field: &DisplacementField, mut out: W) -> Result<()> {
    out.write_all(b"DFB1")?;
    out.write_all(&(field.time_bins() as u32).to_le_bytes())?;
    out.write_all(&(field.height() as u32).to_le_bytes())?;
    out.write_all(&(field.width() as u32).to_le_bytes())?;
    out.write_all(&field.bins.t0.to_le_bytes())?;
    out.write_all(&field.bins.t1.to_le_bytes())?;
    for &v in field.data() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}
