//! EVS1 event-stream format and its CSV text alternative.
//!
//! Binary layout: magic `EVS1`, u32 version=1, u32 width, u32 height, u64
//! count, f64 t_begin, f64 t_end, then `count` 16-byte records of f64 t,
//! u16 x, u16 y, i8 p, 3 zero pad bytes; little-endian throughout.

use std::io::Write;

use super::Reader;
use crate::error::{Error, Result};
use crate::event::{Event, EventStream};

pub fn read_evs1(bytes: &[u8]) -> Result<EventStream> {
    let mut r = Reader::new(bytes);
    r.magic(b"EVS1")?;
    let version = r.u32()?;
    if version != 1 {
        return Err(Error::Format(format!("EVS1 version {version}")));
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let count = r.u64()?;
    let t_begin = r.f64()?;
    let t_end = r.f64()?;
    if !t_begin.is_finite() || !t_end.is_finite() || t_end < t_begin {
        return Err(Error::Format(format!(
            "EVS1 window [{t_begin}, {t_end}]"
        )));
    }
    let need = count
        .checked_mul(16)
        .ok_or_else(|| Error::Format("EVS1 count overflow".into()))?;
    if r.remaining() as u64 != need {
        return Err(Error::Format(format!(
            "EVS1 payload {} bytes for {count} records",
            r.remaining()
        )));
    }
    let mut events = Vec::with_capacity(count as usize);
    let mut last_t = f64::NEG_INFINITY;
    for _ in 0..count {
        let t = r.f64()?;
        let x = r.u16()?;
        let y = r.u16()?;
        let p = r.i8()?;
        let pad = r.take(3)?;
        if pad != [0, 0, 0] {
            return Err(Error::Format("EVS1 nonzero padding".into()));
        }
        if !t.is_finite() || t < last_t {
            return Err(Error::Format("EVS1 events not sorted by time".into()));
        }
        last_t = t;
        events.push(Event { t, x, y, p });
    }
    EventStream::new(width, height, t_begin, t_end, events)
        .map_err(|e| Error::Format(format!("EVS1: {e}")))
}

pub fn write_evs1<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    out.write_all(b"EVS1")?;
    out.write_all(&1u32.to_le_bytes())?;
    out.write_all(&(stream.width as u32).to_le_bytes())?;
    out.write_all(&(stream.height as u32).to_le_bytes())?;
    out.write_all(&(stream.len() as u64).to_le_bytes())?;
    out.write_all(&stream.t_begin.to_le_bytes())?;
    out.write_all(&stream.t_end.to_le_bytes())?;
    for e in stream.events() {
        out.write_all(&e.t.to_le_bytes())?;
        out.write_all(&e.x.to_le_bytes())?;
        out.write_all(&e.y.to_le_bytes())?;
        out.write_all(&[e.p as u8, 0, 0, 0])?;
    }
    Ok(())
}

/// Parse the `t,x,y,p` CSV alternative into raw events (validated for
/// polarity and finiteness; stream assembly is the caller's step).
pub fn read_events_csv(bytes: &[u8]) -> Result<Vec<Event>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Format(format!("events CSV: {e}")))?;
        let expect = ["t", "x", "y", "p"];
        if headers.len() != 4 || headers.iter().zip(expect).any(|(a, b)| a.trim() != b) {
            return Err(Error::Format(format!(
                "events CSV header {:?}, expected t,x,y,p",
                headers
            )));
        }
    }
    let mut events = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(format!("events CSV: {e}")))?;
        if rec.len() != 4 {
            return Err(Error::Format(format!("events CSV row {:?}", rec)));
        }
        let field = |i: usize| rec.get(i).unwrap().trim();
        let t: f64 = field(0)
            .parse()
            .map_err(|e| Error::Format(format!("events CSV t: {e}")))?;
        let x: u16 = field(1)
            .parse()
            .map_err(|e| Error::Format(format!("events CSV x: {e}")))?;
        let y: u16 = field(2)
            .parse()
            .map_err(|e| Error::Format(format!("events CSV y: {e}")))?;
        let p: i8 = field(3)
            .parse()
            .map_err(|e| Error::Format(format!("events CSV p: {e}")))?;
        if !t.is_finite() {
            return Err(Error::Format("events CSV: non-finite t".into()));
        }
        if p != 1 && p != -1 {
            return Err(Error::Format(format!("events CSV polarity {p}")));
        }
        events.push(Event { t, x, y, p });
    }
    Ok(events)
}

pub fn write_events_csv<W: Write>(stream: &EventStream, mut out: W) -> Result<()> {
    writeln!(out, "t,x,y,p")?;
    for e in stream.events() {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
    }
    Ok(())
}
