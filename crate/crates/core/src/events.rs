//! DVS event preprocessing: loading, denoising, spatial downsampling,
//! time binning into frames and conversion of frames into input spikes.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{self, Tensor, TensorError};

/// Bytes per record in the packed binary event format (u32 t, u16 x, u16 y, u8 p).
pub const PACKED_EVENT_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("event #{index} at ({x}, {y}) outside the {width}x{height} sensor")]
    OutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("packed event file length {0} is not a multiple of 9")]
    TruncatedBinary(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = EventError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    /// Microseconds.
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: u8,
}

impl Event {
    pub fn new(t: u64, x: u16, y: u16, polarity: u8) -> Self {
        Self { t, x, y, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorSize {
    pub width: u32,
    pub height: u32,
}

impl SensorSize {
    pub const DVS128: SensorSize = SensorSize {
        width: 128,
        height: 128,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    Csv,
    Bin,
}

impl EventFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => EventFormat::Bin,
            _ => EventFormat::Csv,
        }
    }
}

/// Loads an event file, validates coordinates and polarity, and sorts by time.
pub fn load_events(
    path: impl AsRef<Path>,
    format: EventFormat,
    sensor: SensorSize,
) -> Result<Vec<Event>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut events = match format {
        EventFormat::Csv => parse_csv(&String::from_utf8_lossy(&bytes))?,
        EventFormat::Bin => parse_packed(&bytes)?,
    };
    for (index, e) in events.iter().enumerate() {
        if u32::from(e.x) >= sensor.width || u32::from(e.y) >= sensor.height {
            return Err(EventError::OutOfBounds {
                index,
                x: e.x.into(),
                y: e.y.into(),
                width: sensor.width,
                height: sensor.height,
            });
        }
    }
    events.sort_by_key(|e| e.t);
    Ok(events)
}

/// Parses `t_us,x,y,p` rows. A non-numeric first line is treated as a header.
pub fn parse_csv(text: &str) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if i == 0 && !line.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let malformed = |message: String| EventError::Malformed {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
        }
        let t = fields[0]
            .parse::<u64>()
            .map_err(|e| malformed(format!("timestamp '{}': {e}", fields[0])))?;
        let x = fields[1]
            .parse::<u16>()
            .map_err(|e| malformed(format!("x '{}': {e}", fields[1])))?;
        let y = fields[2]
            .parse::<u16>()
            .map_err(|e| malformed(format!("y '{}': {e}", fields[2])))?;
        let p = match fields[3] {
            "0" => 0,
            "1" => 1,
            other => return Err(malformed(format!("polarity '{other}' is not 0 or 1"))),
        };
        out.push(Event::new(t, x, y, p));
    }
    Ok(out)
}

pub fn parse_packed(bytes: &[u8]) -> Result<Vec<Event>> {
    if !bytes.len().is_multiple_of(PACKED_EVENT_LEN) {
        return Err(EventError::TruncatedBinary(bytes.len()));
    }
    bytes
        .chunks_exact(PACKED_EVENT_LEN)
        .enumerate()
        .map(|(i, r)| {
            let p = r[8];
            if p > 1 {
                return Err(EventError::Malformed {
                    line: i + 1,
                    message: format!("polarity {p} is not 0 or 1"),
                });
            }
            Ok(Event::new(
                u32::from_le_bytes([r[0], r[1], r[2], r[3]]) as u64,
                u16::from_le_bytes([r[4], r[5]]),
                u16::from_le_bytes([r[6], r[7]]),
                p,
            ))
        })
        .collect()
}

pub fn events_to_csv(events: &[Event]) -> String {
    let mut s = String::from("t_us,x,y,p\n");
    for e in events {
        s.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.polarity));
    }
    s
}

/// Packed binary encoding; timestamps must fit in u32.
pub fn events_to_packed(events: &[Event]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(events.len() * PACKED_EVENT_LEN);
    for e in events {
        let t = u32::try_from(e.t).map_err(|_| {
            EventError::InvalidParameter(format!("timestamp {} exceeds u32", e.t))
        })?;
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity);
    }
    Ok(out)
}

/// Keeps an event iff some *other* event lies within `spatial_px` (Chebyshev
/// distance) and `window_us` of it. Input must be sorted by time.
pub fn denoise(events: &[Event], spatial_px: u32, window_us: u64) -> Vec<Event> {
    if events.is_empty() {
        return Vec::new();
    }
    let width = events.iter().map(|e| e.x as usize).max().unwrap() + 1;
    let height = events.iter().map(|e| e.y as usize).max().unwrap() + 1;
    let r = spatial_px as i64;
    let mut keep = vec![false; events.len()];

    // Forward sweep: latest timestamp seen per pixel among earlier events.
    // Backward sweep: earliest timestamp per pixel among later events. Any
    // other event is earlier or later in the sorted order, so together the
    // two sweeps see the closest neighbour in time on each side.
    let sweep = |indices: &mut dyn Iterator<Item = usize>, keep: &mut [bool]| {
        let mut seen: Vec<Option<u64>> = vec![None; width * height];
        for i in indices {
            let e = events[i];
            let (ex, ey) = (e.x as i64, e.y as i64);
            'search: for y in (ey - r).max(0)..=(ey + r).min(height as i64 - 1) {
                for x in (ex - r).max(0)..=(ex + r).min(width as i64 - 1) {
                    if let Some(t) = seen[y as usize * width + x as usize] {
                        if t.abs_diff(e.t) <= window_us {
                            keep[i] = true;
                            break 'search;
                        }
                    }
                }
            }
            seen[e.y as usize * width + e.x as usize] = Some(e.t);
        }
    };
    sweep(&mut (0..events.len()), &mut keep);
    sweep(&mut (0..events.len()).rev(), &mut keep);

    events
        .iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(*e))
        .collect()
}

/// Integer-divides coordinates by `factor`.
pub fn downsample(events: &[Event], factor: u32) -> Result<Vec<Event>> {
    if factor == 0 {
        return Err(EventError::InvalidParameter(
            "downsample factor must be positive".into(),
        ));
    }
    Ok(events
        .iter()
        .map(|e| Event {
            x: (u32::from(e.x) / factor) as u16,
            y: (u32::from(e.y) / factor) as u16,
            ..*e
        })
        .collect())
}

/// Event counts binned in fixed time windows, `(T, 2, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frames: Tensor<u32>,
    pub bin_ms: u32,
}

impl FrameTensor {
    pub fn timesteps(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    pub fn total(&self) -> u64 {
        self.frames.data().iter().map(|&c| c as u64).sum()
    }

    /// Sidecar encoding (dtype u32). Bin width is not part of the record.
    pub fn to_sidecar(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        tensor::encode_record(&self.frames, &mut out)?;
        Ok(out)
    }

    pub fn from_sidecar(bytes: &[u8], bin_ms: u32) -> Result<Self> {
        let frames: Tensor<u32> = tensor::decode_record_at(bytes, 0)?;
        if frames.shape().len() != 4 {
            return Err(EventError::InvalidParameter(format!(
                "frame tensor must be rank 4, got {:?}",
                frames.shape()
            )));
        }
        Ok(Self { frames, bin_ms })
    }
}

/// Sums events into `bin_ms` windows anchored at the first event's time.
/// `shape` is `(channels, height, width)`; polarity selects the channel.
pub fn bin_frames(events: &[Event], bin_ms: u32, shape: [usize; 3]) -> Result<FrameTensor> {
    if bin_ms == 0 {
        return Err(EventError::InvalidParameter("bin width must be positive".into()));
    }
    let [c, h, w] = shape;
    let Some(first) = events.first() else {
        return Ok(FrameTensor {
            frames: Tensor::filled(vec![0, c, h, w], 0),
            bin_ms,
        });
    };
    let bin_us = bin_ms as u64 * 1000;
    let t0 = first.t;
    let t_last = events.last().unwrap().t;
    let t_count = ((t_last - t0 + 1).div_ceil(bin_us)) as usize;
    let mut frames = Tensor::filled(vec![t_count, c, h, w], 0u32);
    for (index, e) in events.iter().enumerate() {
        if e.x as usize >= w || e.y as usize >= h || e.polarity as usize >= c {
            return Err(EventError::OutOfBounds {
                index,
                x: e.x.into(),
                y: e.y.into(),
                width: w as u32,
                height: h as u32,
            });
        }
        let k = ((e.t - t0) / bin_us) as usize;
        let off = frames.offset(&[k, e.polarity as usize, e.y as usize, e.x as usize]);
        frames.data_mut()[off] += 1;
    }
    Ok(FrameTensor { frames, bin_ms })
}

/// Per-neuron firing timesteps for one population.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpikeTrain {
    size: usize,
    length: usize,
    spikes: Vec<Vec<u32>>,
}

impl SpikeTrain {
    pub fn empty(size: usize, length: usize) -> Self {
        Self {
            size,
            length,
            spikes: vec![Vec::new(); size],
        }
    }

    /// Builds a train from `(neuron, timestep)` pairs in any order.
    pub fn from_pairs(
        size: usize,
        length: usize,
        pairs: impl IntoIterator<Item = (usize, u32)>,
    ) -> Result<Self> {
        let mut train = Self::empty(size, length);
        for (n, t) in pairs {
            if n >= size || t as usize >= length {
                return Err(EventError::InvalidParameter(format!(
                    "spike ({n}, {t}) outside {size} neurons x {length} steps"
                )));
            }
            train.spikes[n].push(t);
        }
        for s in &mut train.spikes {
            s.sort_unstable();
            s.dedup();
        }
        Ok(train)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn neuron(&self, n: usize) -> &[u32] {
        &self.spikes[n]
    }

    pub fn neurons(&self) -> &[Vec<u32>] {
        &self.spikes
    }

    /// Appends a spike; timesteps must be pushed in increasing order.
    pub fn push(&mut self, neuron: usize, t: u32) {
        debug_assert!(self.spikes[neuron].last().is_none_or(|&l| l < t));
        self.spikes[neuron].push(t);
    }

    pub fn total(&self) -> usize {
        self.spikes.iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.spikes.iter().map(Vec::len).collect()
    }

    /// Neurons firing at each timestep, ascending.
    pub fn by_timestep(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.length];
        for (n, times) in self.spikes.iter().enumerate() {
            for &t in times {
                out[t as usize].push(n as u32);
            }
        }
        out
    }

    /// `(neuron, timestep)` pairs sorted by neuron then time.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.spikes
            .iter()
            .enumerate()
            .flat_map(|(n, ts)| ts.iter().map(move |&t| (n, t)))
    }
}

/// Binarizes frames into input spikes: neuron `p*H*W + y*W + x` fires at
/// step `k` iff `frames[k, p, y, x] >= 1`. Only the first `max_timesteps`
/// bins are used.
pub fn frames_to_spikes(f: &FrameTensor, max_timesteps: usize) -> SpikeTrain {
    let steps = max_timesteps.min(f.timesteps());
    let per_step = f.channels() * f.height() * f.width();
    let mut train = SpikeTrain::empty(per_step, max_timesteps);
    let data = f.frames.data();
    for k in 0..steps {
        for (n, &count) in data[k * per_step..(k + 1) * per_step].iter().enumerate() {
            if count >= 1 {
                train.push(n, k as u32);
            }
        }
    }
    train
}

/// Loads, denoises, downsamples and bins a recording; the standard input
/// preprocessing chain.
#[derive(Debug, Clone)]
pub struct Preprocess {
    pub sensor: SensorSize,
    pub denoise: Option<(u32, u64)>,
    pub downsample: u32,
    pub bin_ms: u32,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            sensor: SensorSize::DVS128,
            denoise: Some((1, 1_000_000)),
            downsample: 4,
            bin_ms: 1,
        }
    }
}

impl Preprocess {
    pub fn output_hw(&self) -> [usize; 2] {
        let f = self.downsample.max(1);
        [
            self.sensor.height.div_ceil(f) as usize,
            self.sensor.width.div_ceil(f) as usize,
        ]
    }

    pub fn apply(&self, events: &[Event]) -> Result<FrameTensor> {
        let cleaned;
        let events = match self.denoise {
            Some((px, window)) => {
                cleaned = denoise(events, px, window);
                &cleaned[..]
            }
            None => events,
        };
        let small = downsample(events, self.downsample)?;
        let [h, w] = self.output_hw();
        bin_frames(&small, self.bin_ms, [2, h, w])
    }
}

pub fn write_frames(path: &Path, f: &FrameTensor) -> Result<()> {
    let bytes = f.to_sidecar()?;
    let mut file = fs::File::create(path).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_parses() {
        let ev = parse_csv("1000,5,7,1\n").unwrap();
        assert_eq!(ev, vec![Event::new(1000, 5, 7, 1)]);
    }

    #[test]
    fn csv_header_and_blank_lines_skipped() {
        let ev = parse_csv("t_us,x,y,p\n\n3,1,2,0\n").unwrap();
        assert_eq!(ev, vec![Event::new(3, 1, 2, 0)]);
    }

    #[test]
    fn csv_bad_polarity() {
        let err = parse_csv("1,1,1,2\n").unwrap_err();
        assert!(matches!(err, EventError::Malformed { line: 1, .. }), "{err}");
    }

    #[test]
    fn load_rejects_out_of_bounds_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "1000,128,0,1\n").unwrap();
        let err = load_events(&p, EventFormat::Csv, SensorSize::DVS128).unwrap_err();
        assert!(matches!(err, EventError::OutOfBounds { x: 128, .. }), "{err}");

        fs::write(&p, "50,1,1,0\n10,2,2,1\n").unwrap();
        let ev = load_events(&p, EventFormat::Csv, SensorSize::DVS128).unwrap();
        assert_eq!(ev[0].t, 10);
        assert_eq!(ev[1].t, 50);
    }

    #[test]
    fn empty_file_gives_no_events() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        fs::write(&p, "").unwrap();
        assert!(load_events(&p, EventFormat::Csv, SensorSize::DVS128)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn packed_round_trip() {
        let ev = vec![Event::new(1, 127, 0, 1), Event::new(70_000, 3, 4, 0)];
        let bytes = events_to_packed(&ev).unwrap();
        assert_eq!(bytes.len(), 18);
        assert_eq!(parse_packed(&bytes).unwrap(), ev);
        assert!(matches!(
            parse_packed(&bytes[..10]),
            Err(EventError::TruncatedBinary(10))
        ));
    }

    #[test]
    fn mutual_neighbours_survive_denoise() {
        let ev = vec![Event::new(0, 5, 5, 0), Event::new(100, 6, 5, 1)];
        assert_eq!(denoise(&ev, 1, 1_000_000), ev);
    }

    #[test]
    fn isolated_event_removed() {
        assert!(denoise(&[Event::new(10, 3, 3, 1)], 1, 1_000_000).is_empty());
    }

    #[test]
    fn same_pixel_events_are_neighbours() {
        let ev = vec![Event::new(0, 9, 9, 0), Event::new(5, 9, 9, 0)];
        assert_eq!(denoise(&ev, 1, 10), ev);
        // too far apart in time
        let ev = vec![Event::new(0, 9, 9, 0), Event::new(50, 9, 9, 0)];
        assert!(denoise(&ev, 1, 10).is_empty());
    }

    #[test]
    fn downsample_boundaries() {
        let ev = [Event::new(0, 127, 0, 1), Event::new(1, 0, 0, 0)];
        let out = downsample(&ev, 4).unwrap();
        assert_eq!((out[0].x, out[0].y), (31, 0));
        assert_eq!((out[1].x, out[1].y), (0, 0));
        assert!(downsample(&ev, 0).is_err());
    }

    #[test]
    fn downsample_covers_full_range() {
        let ev: Vec<Event> = (0..128).map(|x| Event::new(0, x, x, 0)).collect();
        let out = downsample(&ev, 4).unwrap();
        assert_eq!(out.iter().map(|e| e.x).max(), Some(31));
        assert_eq!(out.iter().map(|e| e.y).max(), Some(31));
    }

    #[test]
    fn single_bin() {
        let ev = [
            Event::new(0, 0, 0, 0),
            Event::new(500, 1, 0, 1),
            Event::new(999, 0, 1, 0),
        ];
        let f = bin_frames(&ev, 1, [2, 2, 2]).unwrap();
        assert_eq!(f.timesteps(), 1);
        assert_eq!(f.total(), 3);
    }

    #[test]
    fn bin_boundary_split() {
        let ev = [Event::new(0, 0, 0, 0), Event::new(1000, 0, 0, 0)];
        let f = bin_frames(&ev, 1, [2, 1, 1]).unwrap();
        assert_eq!(f.timesteps(), 2);
        assert_eq!(f.frames.data(), &[1, 0, 1, 0]);
    }

    #[test]
    fn bins_anchor_at_first_event() {
        let ev = [Event::new(5_000_250, 0, 0, 1), Event::new(5_001_100, 0, 0, 1)];
        let f = bin_frames(&ev, 1, [2, 1, 1]).unwrap();
        assert_eq!(f.timesteps(), 1);
        assert_eq!(f.frames.data(), &[0, 2]);
    }

    #[test]
    fn frames_to_spikes_binarizes() {
        let mut frames = Tensor::filled(vec![1, 2, 2, 2], 0u32);
        let off = frames.offset(&[0, 1, 1, 0]);
        frames.data_mut()[off] = 5;
        let f = FrameTensor { frames, bin_ms: 1 };
        let s = frames_to_spikes(&f, 1);
        assert_eq!(s.total(), 1);
        assert_eq!(s.neuron(4 + 2), &[0]);
    }

    #[test]
    fn all_zero_frames_give_no_spikes() {
        let f = FrameTensor {
            frames: Tensor::filled(vec![3, 2, 4, 4], 0u32),
            bin_ms: 1,
        };
        let s = frames_to_spikes(&f, 3);
        assert_eq!(s.total(), 0);
        assert_eq!(s.size(), 32);
    }

    #[test]
    fn frames_sidecar_round_trip() {
        let ev = [Event::new(0, 1, 1, 1), Event::new(2500, 0, 1, 0)];
        let f = bin_frames(&ev, 1, [2, 2, 2]).unwrap();
        let back = FrameTensor::from_sidecar(&f.to_sidecar().unwrap(), 1).unwrap();
        assert_eq!(back, f);
    }
}
