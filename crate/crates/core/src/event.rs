//! Event-stream synthesis from dense GS video and RS frame composition.

use crate::error::{Error, Result};
use crate::exposure::{ExposureModel, ShutterKind};
use crate::frame::Frame;

/// One brightness-change record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u16,
    pub y: u16,
    /// +1 or -1.
    pub p: i8,
}

/// Asynchronous events over a fixed sensor window, sorted by
/// `(t, y, x, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: usize,
    pub height: usize,
    pub t_begin: f64,
    pub t_end: f64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(
        width: usize,
        height: usize,
        t_begin: f64,
        t_end: f64,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        if !(t_end >= t_begin) {
            return Err(Error::InvalidArgument(format!(
                "stream window [{t_begin}, {t_end}]"
            )));
        }
        for e in &events {
            if (e.x as usize) >= width || (e.y as usize) >= height {
                return Err(Error::InvalidArgument(format!(
                    "event at ({}, {}) outside {width}x{height}",
                    e.x, e.y
                )));
            }
            if e.p != 1 && e.p != -1 {
                return Err(Error::InvalidArgument(format!("polarity {}", e.p)));
            }
            if !e.t.is_finite() || e.t < t_begin || e.t > t_end {
                return Err(Error::InvalidArgument(format!(
                    "event time {} outside [{t_begin}, {t_end}]",
                    e.t
                )));
            }
        }
        sort_events(&mut events);
        Ok(Self {
            width,
            height,
            t_begin,
            t_end,
            events,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

pub(crate) fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.p.cmp(&b.p))
    });
}

/// Tolerance applied when a log level lands exactly on a threshold, so that
/// a change of exactly `k*C` fires `k` events.
const CROSSING_TOL: f64 = 1e-12;

/// Synthesize an event stream from a timestamped GS frame sequence.
///
/// Per pixel, the log intensity `ln(L + log_eps)` is interpolated linearly
/// between consecutive frames; an event of the motion's polarity fires each
/// time the running level moves a full threshold `c` away from the last
/// event's reference level, which then resets to the crossed level.
pub fn simulate_events(frames: &[Frame], c: f64, log_eps: f64) -> Result<EventStream> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(
            "event simulation needs at least 2 frames".into(),
        ));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold C = {c}")));
    }
    if !(log_eps > 0.0) {
        return Err(Error::InvalidArgument(format!("log_eps = {log_eps}")));
    }
    let (h, w, ch) = (frames[0].height(), frames[0].width(), frames[0].channels());
    for f in frames {
        if f.height() != h || f.width() != w || f.channels() != ch {
            return Err(Error::DimensionMismatch("frame sequence".into()));
        }
    }
    for pair in frames.windows(2) {
        if !(pair[1].timestamp > pair[0].timestamp) {
            return Err(Error::InvalidArgument(
                "frame timestamps must strictly increase".into(),
            ));
        }
    }

    // Log-luminance stack.
    let levels: Vec<Frame> = frames
        .iter()
        .map(|f| {
            let lum = f.luminance();
            let mut out = lum.clone();
            for v in out.data_mut() {
                *v = (*v + log_eps).ln();
            }
            out
        })
        .collect();

    let mut events = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut reference = levels[0].at(y, x, 0);
            for k in 0..levels.len() - 1 {
                let l0 = levels[k].at(y, x, 0);
                let l1 = levels[k + 1].at(y, x, 0);
                if l1 == l0 {
                    continue;
                }
                let dir = if l1 > l0 { 1.0 } else { -1.0 };
                let n_cross = (((l1 - reference) * dir) / c + CROSSING_TOL).floor();
                if n_cross < 1.0 {
                    continue;
                }
                let t0 = frames[k].timestamp;
                let t1 = frames[k + 1].timestamp;
                let n = n_cross as usize;
                for j in 1..=n {
                    let level = reference + j as f64 * dir * c;
                    let t = t0 + (level - l0) / (l1 - l0) * (t1 - t0);
                    events.push(Event {
                        t: t.clamp(t0, t1),
                        x: x as u16,
                        y: y as u16,
                        p: if dir > 0.0 { 1 } else { -1 },
                    });
                }
                reference += n as f64 * dir * c;
            }
        }
    }
    EventStream::new(
        w,
        h,
        frames[0].timestamp,
        frames[frames.len() - 1].timestamp,
        events,
    )
}

/// Compose a rolling-shutter frame from a dense timestamped GS stack: row
/// `h` of the output is row `h` of the GS frame whose timestamp is nearest
/// to the row's exposure time (ties go to the earlier frame).
pub fn synthesize_rs(frames: &[Frame], model: &ExposureModel) -> Result<Frame> {
    let (t_start, t_end) = match model.kind {
        ShutterKind::RollingShutter { t_start, t_end } => (t_start, t_end),
        ShutterKind::GlobalShutter { .. } => {
            return Err(Error::InvalidArgument(
                "synthesize_rs needs a rolling-shutter model".into(),
            ));
        }
    };
    if frames.is_empty() {
        return Err(Error::InvalidArgument("empty frame stack".into()));
    }
    let (h, w, ch) = (frames[0].height(), frames[0].width(), frames[0].channels());
    if h != model.height {
        return Err(Error::DimensionMismatch(format!(
            "stack height {h} vs model height {}",
            model.height
        )));
    }
    for f in frames {
        if f.height() != h || f.width() != w || f.channels() != ch {
            return Err(Error::DimensionMismatch("frame stack".into()));
        }
    }
    let tol = 1e-9 * (t_end - t_start).abs().max(1.0);
    let ts_min = frames[0].timestamp;
    let ts_max = frames[frames.len() - 1].timestamp;
    if ts_min > t_start + tol || ts_max < t_end - tol {
        return Err(Error::Inconsistent(format!(
            "GS stack [{ts_min}, {ts_max}] does not cover exposure [{t_start}, {t_end}]"
        )));
    }

    let mut out = Frame::zeros(h, w, ch);
    for row in 0..h {
        let t_h = model.row_time(row)?;
        // Nearest timestamp; ties to the earlier frame.
        let mut best = 0usize;
        let mut best_d = (frames[0].timestamp - t_h).abs();
        for (i, f) in frames.iter().enumerate().skip(1) {
            let d = (f.timestamp - t_h).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        let src = &frames[best];
        let a = row * w * ch;
        out.data_mut()[a..a + w * ch].copy_from_slice(&src.data()[a..a + w * ch]);
    }
    out.timestamp = model.mid_time();
    out.exposure = Some(*model);
    Ok(out)
}
