//! Events, text-format stream ingestion, and the per-polarity Surface of
//! Active Events.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub const BOTH: [Polarity; 2] = [Polarity::Negative, Polarity::Positive];

    /// -1 or +1.
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    /// Storage slot: 0 for negative, 1 for positive.
    pub fn index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    /// On-disk bit (0 or 1).
    pub fn bit(self) -> u8 {
        self.index() as u8
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// Seconds.
    pub t: f64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u32, y: u32, t: f64, p: Polarity) -> Self {
        Event { x, y, t, p }
    }
}

/// A time-ordered event sequence captured by a `width` x `height` sensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32) -> Self {
        EventStream {
            width,
            height,
            events: Vec::new(),
        }
    }

    /// Builds a stream, checking bounds and timestamp ordering.
    pub fn from_events(width: u32, height: u32, events: Vec<Event>) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            check_bounds(e, width, height)?;
            if e.t < prev {
                return Err(Error::Ordering {
                    line: i + 1,
                    prev,
                    t: e.t,
                });
            }
            prev = e.t;
        }
        Ok(EventStream {
            width,
            height,
            events,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn truncate(&mut self, limit: usize) {
        self.events.truncate(limit);
    }

    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = String::with_capacity(48);
        for e in &self.events {
            buf.clear();
            buf.push_str(&format_timestamp(e.t));
            buf.push_str(&format!(" {} {} {}\n", e.x, e.y, e.p.bit()));
            w.write_all(buf.as_bytes())
                .map_err(|err| Error::io("<stream>", err))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| relabel_io(e, path))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn relabel_io(err: Error, path: &Path) -> Error {
    match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn check_bounds(e: &Event, width: u32, height: u32) -> Result<()> {
    if e.x >= width || e.y >= height {
        return Err(Error::OutOfBounds {
            x: e.x,
            y: e.y,
            width,
            height,
        });
    }
    Ok(())
}

/// Formats a timestamp with at least six decimals and enough digits to
/// parse back to the identical `f64`.
pub fn format_timestamp(t: f64) -> String {
    let fixed = format!("{t:.6}");
    if fixed.parse::<f64>().ok() == Some(t) {
        fixed
    } else {
        format!("{t}")
    }
}

/// Parses one `t x y p` line. Polarity bit 0 maps to negative, 1 to positive.
pub fn parse_event_line(line: &str, line_no: usize) -> Result<Event> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(err(format!(
            "expected 4 fields \"t x y p\", found {}",
            fields.len()
        )));
    }
    let t: f64 = fields[0]
        .parse()
        .map_err(|_| err(format!("non-numeric timestamp {:?}", fields[0])))?;
    if !t.is_finite() || t < 0.0 {
        return Err(err(format!("timestamp {t} must be finite and non-negative")));
    }
    let coord = |s: &str, name: &str| -> Result<u32> {
        s.parse::<u32>()
            .map_err(|_| err(format!("{name} coordinate {s:?} is not a non-negative integer")))
    };
    let x = coord(fields[1], "x")?;
    let y = coord(fields[2], "y")?;
    let p = fields[3]
        .parse::<u8>()
        .ok()
        .and_then(Polarity::from_bit)
        .ok_or_else(|| err(format!("polarity {:?} must be 0 or 1", fields[3])))?;
    Ok(Event { x, y, t, p })
}

/// Reads an event stream. A timestamp may regress by at most `tolerance`
/// seconds, in which case it is clamped to the previous timestamp.
pub fn read_event_stream<R: BufRead>(
    reader: R,
    width: u32,
    height: u32,
    tolerance: f64,
) -> Result<EventStream> {
    let mut stream = EventStream::new(width, height);
    let mut prev = f64::NEG_INFINITY;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e = parse_event_line(&line, line_no)?;
        if e.x >= width || e.y >= height {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "coordinate ({}, {}) outside {width}x{height} sensor",
                    e.x, e.y
                ),
            });
        }
        if e.t < prev {
            if prev - e.t > tolerance {
                return Err(Error::Ordering {
                    line: line_no,
                    prev,
                    t: e.t,
                });
            }
            e.t = prev;
        }
        prev = e.t;
        stream.events.push(e);
    }
    Ok(stream)
}

pub fn load_event_stream(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    tolerance: f64,
) -> Result<EventStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_event_stream(BufReader::new(file), width, height, tolerance)
        .map_err(|e| relabel_io(e, path))
}

/// One occupied SAE cell returned by a window query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaeSample {
    pub x: u32,
    pub y: u32,
    pub t: f64,
}

/// Surface of Active Events: most recent timestamp per pixel, one surface
/// per polarity.
#[derive(Debug, Clone)]
pub struct Sae {
    width: u32,
    height: u32,
    surfaces: [Vec<f64>; 2],
}

const UNOCCUPIED: f64 = f64::NEG_INFINITY;

impl Sae {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Sae {
            width,
            height,
            surfaces: [vec![UNOCCUPIED; n], vec![UNOCCUPIED; n]],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn update(&mut self, e: &Event) -> Result<()> {
        check_bounds(e, self.width, self.height)?;
        let i = self.idx(e.x, e.y);
        let cell = &mut self.surfaces[e.p.index()][i];
        if e.t >= *cell {
            *cell = e.t;
        }
        Ok(())
    }

    pub fn lookup(&self, p: Polarity, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let t = self.surfaces[p.index()][self.idx(x, y)];
        (t != UNOCCUPIED).then_some(t)
    }

    /// Occupied same-polarity cells in the (2R+1)^2 window around `(cx, cy)`,
    /// excluding the center, clipped at the sensor border.
    pub fn window(&self, cx: u32, cy: u32, radius: u32, p: Polarity) -> Vec<SaeSample> {
        let mut out = Vec::new();
        self.window_into(cx, cy, radius, p, &mut out);
        out
    }

    pub fn window_into(
        &self,
        cx: u32,
        cy: u32,
        radius: u32,
        p: Polarity,
        out: &mut Vec<SaeSample>,
    ) {
        out.clear();
        let surface = &self.surfaces[p.index()];
        let x0 = cx.saturating_sub(radius);
        let y0 = cy.saturating_sub(radius);
        let x1 = (cx + radius).min(self.width.saturating_sub(1));
        let y1 = (cy + radius).min(self.height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if x == cx && y == cy {
                    continue;
                }
                let t = surface[self.idx(x, y)];
                if t != UNOCCUPIED {
                    out.push(SaeSample { x, y, t });
                }
            }
        }
    }
}
