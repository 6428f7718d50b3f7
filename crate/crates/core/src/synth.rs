//! Synthetic scenes with known motion: straight edges or polygons translating
//! at constant velocity. Every pixel center swept by an edge fires when the
//! edge crosses it, so the resulting SAE is exactly planar along each edge.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity};
use crate::raster::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeGeometry {
    /// A straight edge between two points at time `t0`.
    Segment {
        a: [f64; 2],
        b: [f64; 2],
        polarity: Polarity,
    },
    /// Closed contour at time `t0`. A bright object emits positive events
    /// on its leading sides and negative events on its trailing sides.
    Polygon { vertices: Vec<[f64; 2]>, bright: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneConfig {
    pub width: u32,
    pub height: u32,
    pub geometry: EdgeGeometry,
    /// Pixels per second.
    pub speed: f64,
    /// Motion direction in radians (0 = +x, pi/2 = +y).
    pub direction: f64,
    pub duration: f64,
    pub t0: f64,
    /// Events emitted per pixel crossing.
    pub events_per_crossing: u32,
    /// Spacing between events of one crossing, seconds.
    pub burst_spacing: f64,
    /// Standard deviation of Gaussian timestamp jitter, seconds.
    pub jitter_std: f64,
    /// Background noise events per pixel per second.
    pub noise_rate: f64,
    pub seed: u64,
}

impl SyntheticSceneConfig {
    /// A full-height vertical edge entering from the left, moving +x.
    pub fn translating_edge(width: u32, height: u32, speed: f64, duration: f64) -> Self {
        SyntheticSceneConfig {
            width,
            height,
            geometry: EdgeGeometry::Segment {
                a: [2.5, -1.0],
                b: [2.5, height as f64],
                polarity: Polarity::Positive,
            },
            speed,
            direction: 0.0,
            duration,
            t0: 0.0,
            events_per_crossing: 1,
            burst_spacing: 1e-4,
            jitter_std: 0.0,
            noise_rate: 0.0,
            seed: 0,
        }
    }

    /// A bright axis-aligned square of side `side` centred in the sensor.
    pub fn square(width: u32, height: u32, side: f64, speed: f64, direction: f64, duration: f64) -> Self {
        let (cx, cy) = (width as f64 / 2.0 - 0.3, height as f64 / 2.0 - 0.3);
        let h = side / 2.0;
        SyntheticSceneConfig {
            width,
            height,
            geometry: EdgeGeometry::Polygon {
                vertices: vec![
                    [cx - h, cy - h],
                    [cx + h, cy - h],
                    [cx + h, cy + h],
                    [cx - h, cy + h],
                ],
                bright: true,
            },
            speed,
            direction,
            duration,
            t0: 0.0,
            events_per_crossing: 1,
            burst_spacing: 1e-4,
            jitter_std: 0.0,
            noise_rate: 0.0,
            seed: 0,
        }
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.direction.cos(), self.speed * self.direction.sin()]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::Config(format!("speed must be > 0, got {}", self.speed)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be >= 0, got {}", self.duration)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("sensor dimensions must be non-zero".into()));
        }
        if self.jitter_std < 0.0 || self.noise_rate < 0.0 || self.burst_spacing < 0.0 {
            return Err(Error::Config("jitter, noise rate, and burst spacing must be >= 0".into()));
        }
        if self.events_per_crossing == 0 {
            return Err(Error::Config("events_per_crossing must be >= 1".into()));
        }
        if let EdgeGeometry::Polygon { vertices, .. } = &self.geometry {
            if vertices.len() < 3 {
                return Err(Error::Config("polygon needs at least 3 vertices".into()));
            }
        }
        Ok(())
    }

    fn sides(&self) -> Vec<Side> {
        let v = self.velocity();
        match &self.geometry {
            EdgeGeometry::Segment { a, b, polarity } => Side::new(*a, *b, v, *polarity).into_iter().collect(),
            EdgeGeometry::Polygon { vertices, bright } => {
                let ccw = signed_area(vertices) > 0.0;
                let n = vertices.len();
                (0..n)
                    .filter_map(|i| {
                        let a = vertices[i];
                        let b = vertices[(i + 1) % n];
                        let d = [b[0] - a[0], b[1] - a[1]];
                        // outward normal for the polygon's winding
                        let out = if ccw { [d[1], -d[0]] } else { [-d[1], d[0]] };
                        let leading = out[0] * v[0] + out[1] * v[1] > 0.0;
                        let brighter = leading == *bright;
                        let p = if brighter { Polarity::Positive } else { Polarity::Negative };
                        Side::new(a, b, v, p)
                    })
                    .collect()
            }
        }
    }
}

fn signed_area(vs: &[[f64; 2]]) -> f64 {
    let n = vs.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vs[i], vs[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// One straight edge with its unit normal oriented along the motion.
struct Side {
    a: [f64; 2],
    tangent: [f64; 2],
    length: f64,
    normal: [f64; 2],
    normal_speed: f64,
    polarity: Polarity,
}

impl Side {
    fn new(a: [f64; 2], b: [f64; 2], v: [f64; 2], polarity: Polarity) -> Option<Side> {
        let d = [b[0] - a[0], b[1] - a[1]];
        let length = d[0].hypot(d[1]);
        if length == 0.0 {
            return None;
        }
        let tangent = [d[0] / length, d[1] / length];
        let mut normal = [-tangent[1], tangent[0]];
        let mut vn = normal[0] * v[0] + normal[1] * v[1];
        if vn < 0.0 {
            normal = [-normal[0], -normal[1]];
            vn = -vn;
        }
        // edges moving (almost) parallel to themselves sweep no pixel centres
        if vn <= 1e-12 * v[0].hypot(v[1]) {
            return None;
        }
        Some(Side {
            a,
            tangent,
            length,
            normal,
            normal_speed: vn,
            polarity,
        })
    }

    /// Seconds after `t0` at which the edge crosses `c`, if it does so
    /// within the segment's extent.
    fn crossing(&self, c: [f64; 2], v: [f64; 2]) -> Option<f64> {
        let rel = [c[0] - self.a[0], c[1] - self.a[1]];
        let s = self.normal[0] * rel[0] + self.normal[1] * rel[1];
        if s < 0.0 {
            return None;
        }
        let tau = s / self.normal_speed;
        let at = [rel[0] - v[0] * tau, rel[1] - v[1] * tau];
        let u = self.tangent[0] * at[0] + self.tangent[1] * at[1];
        (0.0..=self.length).contains(&u).then_some(tau)
    }

    fn normal_flow(&self) -> [f64; 2] {
        [self.normal[0] * self.normal_speed, self.normal[1] * self.normal_speed]
    }
}

/// Per-event ground truth aligned with the generated stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    /// True normal flow (px/s); `None` for background noise events.
    pub normal_flow: Option<[f64; 2]>,
    /// True optical flow of the scene.
    pub optical_flow: [f64; 2],
    /// Time at which the edge crossed the pixel centre.
    pub crossing_time: Option<f64>,
}

impl GroundTruth {
    pub fn is_signal(&self) -> bool {
        self.normal_flow.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub stream: EventStream,
    pub truth: Vec<GroundTruth>,
}

/// Generates the scene's event stream and per-event ground truth, sorted by
/// time (ties by row, column, polarity).
pub fn synth_generate(cfg: &SyntheticSceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let v = cfg.velocity();
    let sides = cfg.sides();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = if cfg.jitter_std > 0.0 {
        Some(Normal::new(0.0, cfg.jitter_std).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let t_end = cfg.t0 + cfg.duration;
    let mut out: Vec<(Event, GroundTruth)> = Vec::new();

    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let c = [x as f64, y as f64];
            for side in &sides {
                let Some(tau) = side.crossing(c, v) else { continue };
                let crossing = cfg.t0 + tau;
                if crossing >= t_end {
                    continue;
                }
                for k in 0..cfg.events_per_crossing {
                    let mut t = crossing + k as f64 * cfg.burst_spacing;
                    if let Some(j) = &jitter {
                        t += j.sample(&mut rng);
                    }
                    let t = t.max(cfg.t0);
                    if t >= t_end {
                        continue;
                    }
                    out.push((
                        Event::new(x, y, t, side.polarity),
                        GroundTruth {
                            normal_flow: Some(side.normal_flow()),
                            optical_flow: v,
                            crossing_time: Some(crossing),
                        },
                    ));
                }
            }
        }
    }

    if cfg.noise_rate > 0.0 && cfg.duration > 0.0 {
        let total_rate = cfg.noise_rate * cfg.width as f64 * cfg.height as f64;
        let mut t = cfg.t0;
        loop {
            let u: f64 = rng.random::<f64>();
            t += -(1.0 - u).ln() / total_rate;
            if t >= t_end {
                break;
            }
            let x = rng.random_range(0..cfg.width);
            let y = rng.random_range(0..cfg.height);
            let p = if rng.random::<bool>() { Polarity::Positive } else { Polarity::Negative };
            out.push((
                Event::new(x, y, t, p),
                GroundTruth {
                    normal_flow: None,
                    optical_flow: v,
                    crossing_time: None,
                },
            ));
        }
    }

    out.sort_by(|(a, _), (b, _)| {
        a.t.total_cmp(&b.t)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.p.cmp(&b.p))
    });
    let (events, truth): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    Ok(SyntheticScene {
        stream: EventStream::from_events(cfg.width, cfg.height, events)?,
        truth,
    })
}

/// Intensity frame of the scene at time `t` (object 0.8, background 0.2),
/// standing in for an APS frame.
pub fn render_frame(cfg: &SyntheticSceneConfig, t: f64) -> GrayImage {
    let v = cfg.velocity();
    let dt = t - cfg.t0;
    let shift = [v[0] * dt, v[1] * dt];
    let (lo, hi) = (0.2f32, 0.8f32);
    match &cfg.geometry {
        EdgeGeometry::Segment { a, b, polarity } => {
            let a = [a[0] + shift[0], a[1] + shift[1]];
            let b = [b[0] + shift[0], b[1] + shift[1]];
            let Some(side) = Side::new(a, b, v, *polarity) else {
                return GrayImage::filled(cfg.width, cfg.height, lo);
            };
            // the region behind the edge is the bright side of a positive edge
            GrayImage::from_fn(cfg.width, cfg.height, |x, y| {
                let rel = [x as f64 - a[0], y as f64 - a[1]];
                let s = side.normal[0] * rel[0] + side.normal[1] * rel[1];
                let u = side.tangent[0] * rel[0] + side.tangent[1] * rel[1];
                let behind = s < 0.0 && (0.0..=side.length).contains(&u);
                if behind == (*polarity == Polarity::Positive) { hi } else { lo }
            })
        }
        EdgeGeometry::Polygon { vertices, bright } => {
            let moved: Vec<[f64; 2]> = vertices
                .iter()
                .map(|p| [p[0] + shift[0], p[1] + shift[1]])
                .collect();
            GrayImage::from_fn(cfg.width, cfg.height, |x, y| {
                let inside = point_in_polygon([x as f64, y as f64], &moved);
                if inside == *bright { hi } else { lo }
            })
        }
    }
}

fn point_in_polygon(p: [f64; 2], vs: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = vs.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vs[i], vs[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertical_edge_row_fires_at_speed_rate() {
        let mut cfg = SyntheticSceneConfig::translating_edge(20, 3, 100.0, 0.1);
        cfg.geometry = EdgeGeometry::Segment {
            a: [0.5, -1.0],
            b: [0.5, 3.0],
            polarity: Polarity::Positive,
        };
        let scene = synth_generate(&cfg).unwrap();
        let row: Vec<&Event> = scene.stream.events.iter().filter(|e| e.y == 1).collect();
        // edge starts at x = 0.5 and travels 10 px: columns 1..=10
        assert_eq!(row.len(), 10);
        for w in row.windows(2) {
            assert_eq!(w[1].x, w[0].x + 1);
            assert!((w[1].t - w[0].t - 0.01).abs() < 1e-12);
        }
        for gt in &scene.truth {
            let f = gt.normal_flow.unwrap();
            assert!((f[0] - 100.0).abs() < 1e-9 && f[1].abs() < 1e-9);
        }
    }

    #[test]
    fn zero_duration_is_empty() {
        let cfg = SyntheticSceneConfig::translating_edge(20, 10, 100.0, 0.0);
        assert!(synth_generate(&cfg).unwrap().stream.is_empty());
    }

    #[test]
    fn diagonal_motion_spacing() {
        let v = 100.0;
        let d = std::f64::consts::FRAC_PI_4;
        let cfg = SyntheticSceneConfig {
            geometry: EdgeGeometry::Segment {
                a: [0.25, 40.0],
                b: [40.0, 0.25],
                polarity: Polarity::Negative,
            },
            direction: d,
            ..SyntheticSceneConfig::translating_edge(40, 40, v, 0.2)
        };
        let scene = synth_generate(&cfg).unwrap();
        let diag: Vec<&Event> = scene.stream.events.iter().filter(|e| e.x == e.y).collect();
        assert!(diag.len() > 5);
        // consecutive pixels along the motion direction are sqrt(2) px apart
        let expect = 2f64.sqrt() / v;
        for w in diag.windows(2) {
            assert!((w[1].t - w[0].t - expect).abs() < 1e-12);
        }
        let f = scene.truth[0].normal_flow.unwrap();
        assert!((f[0].hypot(f[1]) - v).abs() < 1e-9);
    }

    #[test]
    fn polygon_polarities_follow_motion() {
        let cfg = SyntheticSceneConfig::square(64, 64, 20.0, 50.0, 0.0, 0.2);
        let scene = synth_generate(&cfg).unwrap();
        let pos = scene.stream.events.iter().filter(|e| e.p == Polarity::Positive).count();
        let neg = scene.stream.events.len() - pos;
        assert!(pos > 0 && neg > 0);
        for (e, gt) in scene.stream.events.iter().zip(&scene.truth) {
            let f = gt.normal_flow.unwrap();
            assert!(f[0] > 0.0, "square moving +x only has vertical sides sweeping pixels");
            assert_eq!(f[1], 0.0);
            let _ = e;
        }
    }

    #[test]
    fn generation_is_seeded() {
        let mut cfg = SyntheticSceneConfig::translating_edge(32, 16, 80.0, 0.2);
        cfg.jitter_std = 2e-4;
        cfg.noise_rate = 0.5;
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.stream, b.stream);
        cfg.seed = 1;
        assert_ne!(a.stream, synth_generate(&cfg).unwrap().stream);
    }

    #[test]
    fn invalid_speed_rejected() {
        let cfg = SyntheticSceneConfig::translating_edge(8, 8, 0.0, 1.0);
        assert!(synth_generate(&cfg).is_err());
    }

    #[test]
    fn frame_has_bright_region_behind_edge() {
        let cfg = SyntheticSceneConfig::translating_edge(20, 4, 100.0, 0.1);
        let f = render_frame(&cfg, 0.05);
        // edge at x = 7.5
        assert_eq!(f.get(7, 1), 0.8);
        assert_eq!(f.get(8, 1), 0.2);
    }
}
