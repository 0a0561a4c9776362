//! WMP1 weight-map format: magic `WMP1`, u32 T, u32 H, u32 W, two
//! serialized exposure models (tag byte + f64 fields; heights equal the
//! header H), then f32 data in [bin][row][col] order.

use std::io::Write;

use super::{checked_len, Reader};
use crate::error::{Error, Result};
use crate::exposure::{ExposureModel, ShutterKind, WeightMap};

const TAG_ROLLING: u8 = 0;
const TAG_GLOBAL: u8 = 1;

fn read_model(r: &mut Reader, height: usize) -> Result<ExposureModel> {
    match r.u8()? {
        TAG_ROLLING => {
            let t_start = r.f64()?;
            let t_end = r.f64()?;
            ExposureModel::rolling(t_start, t_end, height)
                .map_err(|e| Error::Format(format!("WMP1 model: {e}")))
        }
        TAG_GLOBAL => {
            let t_g = r.f64()?;
            ExposureModel::global(t_g, height)
                .map_err(|e| Error::Format(format!("WMP1 model: {e}")))
        }
        tag => Err(Error::Format(format!("WMP1 model tag {tag}"))),
    }
}

fn write_model<W: Write>(model: &ExposureModel, out: &mut W) -> Result<()> {
    match model.kind {
        ShutterKind::RollingShutter { t_start, t_end } => {
            out.write_all(&[TAG_ROLLING])?;
            out.write_all(&t_start.to_le_bytes())?;
            out.write_all(&t_end.to_le_bytes())?;
        }
        ShutterKind::GlobalShutter { t_g } => {
            out.write_all(&[TAG_GLOBAL])?;
            out.write_all(&t_g.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_wmp1(bytes: &[u8]) -> Result<WeightMap> {
    let mut r = Reader::new(bytes);
    r.magic(b"WMP1")?;
    let bins = r.u32()? as usize;
    let height = r.u32()? as usize;
    let width = r.u32()? as usize;
    if bins == 0 || height == 0 || width == 0 {
        return Err(Error::Format("WMP1 zero dimension".into()));
    }
    let src = read_model(&mut r, height)?;
    let dst = read_model(&mut r, height)?;
    let n = checked_len(&[bins, height, width])?;
    let data = r.f32_tail(n)?;
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() || v.abs() > 1.0 + 1e-6 {
            return Err(Error::Format(format!("WMP1 weight {v} at {i}")));
        }
    }
    // Weights are constant along the column axis by construction.
    for bin in 0..bins {
        for row in 0..height {
            let base = (bin * height + row) * width;
            let first = data[base];
            if data[base..base + width].iter().any(|&v| v != first) {
                return Err(Error::Format(format!(
                    "WMP1 weights vary along W at bin {bin}, row {row}"
                )));
            }
        }
    }
    Ok(WeightMap::from_raw(bins, height, width, data, src, dst))
}

pub fn write_wmp1<W: Write>(map: &WeightMap, mut out: W) -> Result<()> {
    out.write_all(b"WMP1")?;
    out.write_all(&(map.bins() as u32).to_le_bytes())?;
    out.write_all(&(map.height() as u32).to_le_bytes())?;
    out.write_all(&(map.width() as u32).to_le_bytes())?;
    write_model(&map.src, &mut out)?;
    write_model(&map.dst, &mut out)?;
    for &v in map.data() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}
