//! Raw-parameter bandwidth accounting for frame video versus events.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::EventStream;

/// Raw parameter counts and the resulting reduction ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    pub video_params: u64,
    pub event_params: u64,
    pub rs_params: u64,
    pub reduction_ratio: f64,
    /// Set when events plus RS frames exceed the target video and the ratio
    /// was clamped to zero.
    pub clamped: bool,
    pub duration_s: f64,
    pub height: u32,
    pub width: u32,
}

/// Raw parameter count of a video: `round(fps * seconds) * H * W`.
pub fn video_params(fps: f64, height: usize, width: usize, seconds: f64) -> Result<u64> {
    if !(fps > 0.0) || height == 0 || width == 0 || !(seconds >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "video_params(fps={fps}, {height}x{width}, {seconds}s)"
        )));
    }
    let frames = (fps * seconds).round() as u64;
    Ok(frames * height as u64 * width as u64)
}

/// Raw parameter count of an event stream: four per event record.
pub fn event_params(stream: &EventStream) -> u64 {
    4 * stream.len() as u64
}

/// Bandwidth reduction of (RS frames + events) against a high-rate video:
/// `1 - (rs + events) / video(target_fps)`, clamped at zero with a flag.
pub fn reduction_ratio(
    rs_fps: f64,
    stream: &EventStream,
    target_fps: f64,
    height: usize,
    width: usize,
    seconds: f64,
) -> Result<BandwidthReport> {
    if !(target_fps > rs_fps) {
        return Err(Error::InvalidArgument(format!(
            "target fps {target_fps} must exceed rs fps {rs_fps}"
        )));
    }
    if !(seconds > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {seconds}"
        )));
    }
    let video = video_params(target_fps, height, width, seconds)?;
    let rs = video_params(rs_fps, height, width, seconds)?;
    let events = event_params(stream);
    let raw = 1.0 - (rs + events) as f64 / video as f64;
    let clamped = raw < 0.0;
    Ok(BandwidthReport {
        video_params: video,
        event_params: events,
        rs_params: rs,
        reduction_ratio: if clamped { 0.0 } else { raw },
        clamped,
        duration_s: seconds,
        height: height as u32,
        width: width as u32,
    })
}

/// Normalized histogram of per-pixel event counts inside `[t_begin,
/// t_begin + window)`; fractions over all sensor pixels sum to one.
pub fn event_rate_histogram(stream: &EventStream, window: f64) -> Result<BTreeMap<u64, f64>> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window {window}")));
    }
    let mut counts = vec![0u64; stream.width * stream.height];
    let end = stream.t_begin + window;
    for e in stream.events() {
        if e.t >= stream.t_begin && e.t < end {
            counts[e.y as usize * stream.width + e.x as usize] += 1;
        }
    }
    let total = counts.len() as f64;
    let mut tally: BTreeMap<u64, u64> = BTreeMap::new();
    for c in counts {
        *tally.entry(c).or_insert(0) += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(count, pixels)| (count, pixels as f64 / total))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;

    fn empty_stream(w: usize, h: usize) -> EventStream {
        EventStream::new(w, h, 0.0, 1.0, vec![]).unwrap()
    }

    #[test]
    fn video_params_values() {
        // 128 * 260 * 346 and 24 * 260 * 346, computed independently.
        assert_eq!(video_params(128.0, 260, 346, 1.0).unwrap(), 128 * 260 * 346);
        assert_eq!(video_params(128.0, 260, 346, 1.0).unwrap(), 11_514_880);
        assert_eq!(video_params(24.0, 260, 346, 1.0).unwrap(), 2_159_040);
        assert_eq!(video_params(128.0, 260, 346, 0.0).unwrap(), 0);
    }

    #[test]
    fn video_params_linear_scaling() {
        let base = video_params(10.0, 8, 8, 2.0).unwrap();
        assert_eq!(video_params(20.0, 8, 8, 2.0).unwrap(), 2 * base);
        assert_eq!(video_params(10.0, 16, 8, 2.0).unwrap(), 2 * base);
        assert_eq!(video_params(10.0, 8, 8, 4.0).unwrap(), 2 * base);
    }

    #[test]
    fn event_params_values() {
        assert_eq!(event_params(&empty_stream(4, 4)), 0);
        let ev: Vec<Event> = (0..1000)
            .map(|i| Event {
                t: i as f64 / 1000.0,
                x: 0,
                y: 0,
                p: 1,
            })
            .collect();
        let s = EventStream::new(2, 2, 0.0, 1.0, ev).unwrap();
        assert_eq!(event_params(&s), 4000);
    }

    #[test]
    fn median_rate_arithmetic() {
        // 17 events per pixel at 260x346 for one second, four parameters
        // per event.
        let per_pixel = 17u64;
        assert_eq!(4 * per_pixel * 260 * 346, 6_117_280);
    }

    #[test]
    fn reduction_empty_events() {
        let r = reduction_ratio(4.0, &empty_stream(346, 260), 128.0, 260, 346, 1.0).unwrap();
        assert_eq!(r.reduction_ratio, 0.96875);
        assert!(!r.clamped);
    }

    #[test]
    fn reduction_clamps_on_overflow() {
        let ev: Vec<Event> = (0..3000)
            .map(|i| Event {
                t: (i % 100) as f64 / 100.0,
                x: (i % 2) as u16,
                y: 0,
                p: 1,
            })
            .collect();
        let s = EventStream::new(2, 2, 0.0, 1.0, ev).unwrap();
        let r = reduction_ratio(4.0, &s, 128.0, 2, 2, 1.0).unwrap();
        assert_eq!(r.reduction_ratio, 0.0);
        assert!(r.clamped);
    }

    #[test]
    fn reduction_monotone_in_event_count() {
        let mut last = f64::INFINITY;
        for n in [0usize, 50, 200, 800] {
            let ev: Vec<Event> = (0..n)
                .map(|i| Event {
                    t: (i % 97) as f64 / 100.0,
                    x: (i % 4) as u16,
                    y: (i % 4) as u16,
                    p: 1,
                })
                .collect();
            let s = EventStream::new(4, 4, 0.0, 1.0, ev).unwrap();
            let r = reduction_ratio(4.0, &s, 1000.0, 4, 4, 1.0).unwrap();
            assert!(r.reduction_ratio <= last);
            last = r.reduction_ratio;
        }
    }

    #[test]
    fn histogram_empty_and_uniform() {
        let h = event_rate_histogram(&empty_stream(3, 2), 1.0).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[&0], 1.0);

        let ev: Vec<Event> = (0..6)
            .map(|i| Event {
                t: 0.5,
                x: (i % 3) as u16,
                y: (i / 3) as u16,
                p: 1,
            })
            .collect();
        let s = EventStream::new(3, 2, 0.0, 1.0, ev).unwrap();
        let h = event_rate_histogram(&s, 1.0).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[&1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_matches_direct_tally() {
        let ev: Vec<Event> = (0..37)
            .map(|i| Event {
                t: (i as f64 * 0.021) % 1.0,
                x: ((i * 7) % 4) as u16,
                y: ((i * 3) % 3) as u16,
                p: if i % 2 == 0 { 1 } else { -1 },
            })
            .collect();
        let s = EventStream::new(4, 3, 0.0, 1.0, ev.clone()).unwrap();
        let h = event_rate_histogram(&s, 1.0).unwrap();
        let mut tally = vec![0u64; 12];
        for e in &ev {
            tally[e.y as usize * 4 + e.x as usize] += 1;
        }
        let sum: f64 = h.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (count, frac) in &h {
            let direct = tally.iter().filter(|&&c| c == *count).count() as f64 / 12.0;
            assert!((frac - direct).abs() < 1e-12);
        }
    }
}
