//! Per-event normal flow from a constrained local plane fit on the SAE, with
//! greedy support selection and scene-adaptive speed-quantile noise
//! rejection.

use std::fmt;

use crate::error::Result;
use crate::event::{Event, Sae, SaeSample};
use crate::reservoir::Reservoir;

/// Why an event carries no flow estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowError {
    /// Fewer than three usable same-polarity neighbors.
    InsufficientSupport { found: usize },
    /// Support pixels are collinear with the anchor.
    DegenerateGeometry,
    /// Zero SAE gradient.
    InfiniteSpeed,
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::InsufficientSupport { found } => {
                write!(f, "insufficient support ({found} usable neighbors)")
            }
            FlowError::DegenerateGeometry => write!(f, "degenerate support geometry"),
            FlowError::InfiniteSpeed => write!(f, "zero SAE gradient (infinite speed)"),
        }
    }
}

impl std::error::Error for FlowError {}

/// Plane `a x + b y + c t + d = 0` through the anchor event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub anchor: Event,
}

impl PlaneParams {
    fn from_gradient(g: [f64; 2], anchor: Event) -> Self {
        PlaneParams {
            a: g[0],
            b: g[1],
            c: -1.0,
            d: anchor.t - g[0] * anchor.x as f64 - g[1] * anchor.y as f64,
            anchor,
        }
    }

    /// SAE spatial gradient (s/px).
    pub fn gradient(&self) -> [f64; 2] {
        [-self.a / self.c, -self.b / self.c]
    }

    /// Plane timestamp at `(x, y)`, evaluated relative to the anchor so the
    /// anchor itself is reproduced exactly.
    pub fn predict(&self, x: f64, y: f64) -> f64 {
        let g = self.gradient();
        self.anchor.t + g[0] * (x - self.anchor.x as f64) + g[1] * (y - self.anchor.y as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFlow {
    /// SAE gradient, s/px.
    pub grad: [f64; 2],
    /// Normal flow, px/s.
    pub v_perp: [f64; 2],
    pub speed: f64,
    /// Direction of `v_perp` in radians.
    pub orientation: f64,
}

impl NormalFlow {
    /// Lifetime in seconds: time to travel one pixel at this speed.
    pub fn lifetime(&self) -> f64 {
        self.grad[0].hypot(self.grad[1])
    }
}

#[derive(Debug, Clone, Copy)]
struct LsqFit {
    grad: [f64; 2],
    residual: f64,
    full_rank: bool,
}

/// Least squares for `dt = g . dp` over offsets relative to the anchor.
/// Rank-deficient sets get the minimum-norm solution along their span.
fn lsq(anchor: &Event, pts: &[SaeSample]) -> Option<LsqFit> {
    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let dx = p.x as f64 - anchor.x as f64;
        let dy = p.y as f64 - anchor.y as f64;
        let dt = p.t - anchor.t;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxt += dx * dt;
        syt += dy * dt;
    }
    let det = sxx * syy - sxy * sxy;
    let trace = sxx + syy;
    if trace == 0.0 {
        return None;
    }
    let (grad, full_rank) = if det > 1e-12 * trace * trace {
        (
            [(syy * sxt - sxy * syt) / det, (sxx * syt - sxy * sxt) / det],
            true,
        )
    } else {
        // all offsets lie on one line through the anchor; project onto it
        let (ux, uy) = if sxx >= syy {
            let n = sxx.hypot(sxy);
            (sxx / n, sxy / n)
        } else {
            let n = sxy.hypot(syy);
            (sxy / n, syy / n)
        };
        let (mut num, mut den) = (0.0, 0.0);
        for p in pts {
            let s = (p.x as f64 - anchor.x as f64) * ux + (p.y as f64 - anchor.y as f64) * uy;
            num += s * (p.t - anchor.t);
            den += s * s;
        }
        let k = if den > 0.0 { num / den } else { 0.0 };
        ([k * ux, k * uy], false)
    };
    let residual = pts
        .iter()
        .map(|p| {
            let dx = p.x as f64 - anchor.x as f64;
            let dy = p.y as f64 - anchor.y as f64;
            let r = (p.t - anchor.t) - (grad[0] * dx + grad[1] * dy);
            r * r
        })
        .sum();
    Some(LsqFit {
        grad,
        residual,
        full_rank,
    })
}

/// Fits the plane through `e` to its support by least squares.
pub fn fit_plane_constrained(e: &Event, support: &[SaeSample]) -> std::result::Result<PlaneParams, FlowError> {
    if support.len() < 3 {
        return Err(FlowError::InsufficientSupport {
            found: support.len(),
        });
    }
    match lsq(e, support) {
        Some(fit) if fit.full_rank => Ok(PlaneParams::from_gradient(fit.grad, *e)),
        _ => Err(FlowError::DegenerateGeometry),
    }
}

/// Sum of squared timestamp residuals of `support` under `plane`.
pub fn fit_residual(plane: &PlaneParams, support: &[SaeSample]) -> f64 {
    support
        .iter()
        .map(|p| {
            let r = p.t - plane.predict(p.x as f64, p.y as f64);
            r * r
        })
        .sum()
}

pub fn flow_from_plane(pl: &PlaneParams) -> std::result::Result<NormalFlow, FlowError> {
    if pl.c == 0.0 {
        return Err(FlowError::DegenerateGeometry);
    }
    let grad = pl.gradient();
    let norm2 = grad[0] * grad[0] + grad[1] * grad[1];
    if !norm2.is_finite() {
        return Err(FlowError::DegenerateGeometry);
    }
    if norm2 == 0.0 {
        return Err(FlowError::InfiniteSpeed);
    }
    let v_perp = [grad[0] / norm2, grad[1] / norm2];
    Ok(NormalFlow {
        grad,
        v_perp,
        speed: 1.0 / norm2.sqrt(),
        orientation: v_perp[1].atan2(v_perp[0]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportParams {
    /// Window radius R; the window is (2R+1)^2 pixels.
    pub radius: u32,
    /// Target support size n.
    pub size: usize,
    /// Neighbors older than `t_e - max_age` are ignored.
    pub max_age: f64,
}

impl Default for SupportParams {
    fn default() -> Self {
        SupportParams {
            radius: 2,
            size: 5,
            max_age: f64::INFINITY,
        }
    }
}

/// Greedy support selection around `e`, which must already be in `sae`.
pub fn select_support(
    sae: &Sae,
    e: &Event,
    params: &SupportParams,
) -> std::result::Result<Vec<SaeSample>, FlowError> {
    let mut window = Vec::with_capacity(24);
    sae.window_into(e.x, e.y, params.radius, e.p, &mut window);
    select_from_window(e, window, params)
}

fn dist2(e: &Event, s: &SaeSample) -> i64 {
    let dx = s.x as i64 - e.x as i64;
    let dy = s.y as i64 - e.y as i64;
    dx * dx + dy * dy
}

fn select_from_window(
    e: &Event,
    mut candidates: Vec<SaeSample>,
    params: &SupportParams,
) -> std::result::Result<Vec<SaeSample>, FlowError> {
    let oldest = e.t - params.max_age;
    candidates.retain(|s| s.t >= oldest && s.t <= e.t);
    if candidates.len() < 3 {
        return Err(FlowError::InsufficientSupport {
            found: candidates.len(),
        });
    }
    // seed: most recent, then nearest, then scan order
    let seed = candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| b.t.total_cmp(&a.t).then(dist2(e, a).cmp(&dist2(e, b))))
        .map(|(i, _)| i)
        .unwrap();
    let mut chosen = vec![candidates.swap_remove(seed)];
    let target = params.size.max(3);
    let mut trial = Vec::with_capacity(target);
    while chosen.len() < target && !candidates.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            trial.clear();
            trial.extend_from_slice(&chosen);
            trial.push(*c);
            let score = lsq(e, &trial).map_or(f64::INFINITY, |f| f.residual);
            let better = match best {
                None => true,
                Some((j, s)) => {
                    let tol = 1e-20 + 1e-9 * s.abs();
                    if score < s - tol {
                        true
                    } else if score <= s + tol {
                        let cur = &candidates[j];
                        c.t > cur.t || (c.t == cur.t && dist2(e, c) < dist2(e, cur))
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some((i, score));
            }
        }
        let (i, _) = best.unwrap();
        // keep scan order of the remaining candidates stable
        chosen.push(candidates.remove(i));
    }
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    /// Only accepted speeds update the statistics.
    Accepted,
    /// Every finite speed updates the statistics.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedStatsConfig {
    pub capacity: usize,
    pub q_lo: f64,
    pub q_hi: f64,
    pub warmup: usize,
    pub feedback: Feedback,
    pub seed: u64,
}

impl Default for SpeedStatsConfig {
    fn default() -> Self {
        SpeedStatsConfig {
            capacity: 4096,
            q_lo: 0.01,
            q_hi: 0.99,
            warmup: 500,
            feedback: Feedback::Accepted,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Reservoir of recent flow speeds; accepts a speed iff it lies between the
/// configured lower and upper quantiles.
#[derive(Debug, Clone)]
pub struct SpeedStats {
    cfg: SpeedStatsConfig,
    reservoir: Reservoir,
}

impl SpeedStats {
    pub fn new(cfg: SpeedStatsConfig) -> Self {
        SpeedStats {
            reservoir: Reservoir::new(cfg.capacity, cfg.seed),
            cfg,
        }
    }

    pub fn config(&self) -> &SpeedStatsConfig {
        &self.cfg
    }

    pub fn warmed_up(&self) -> bool {
        self.reservoir.seen() as usize >= self.cfg.warmup
    }

    pub fn len(&self) -> usize {
        self.reservoir.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reservoir.is_empty()
    }

    /// `(est(q_lo), est(q_hi))`.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        Some((
            self.reservoir.quantile(self.cfg.q_lo)?,
            self.reservoir.quantile(self.cfg.q_hi)?,
        ))
    }

    pub fn samples(&self) -> &[f64] {
        self.reservoir.samples()
    }

    pub fn observe(&mut self, speed: f64) {
        self.reservoir.push(speed);
    }
}

pub fn noise_accept(speed: f64, stats: &mut SpeedStats) -> Decision {
    if !speed.is_finite() {
        return Decision::Reject;
    }
    let decision = if !stats.warmed_up() {
        Decision::Accept
    } else {
        match stats.bounds() {
            Some((lo, hi)) if speed >= lo && speed <= hi => Decision::Accept,
            Some(_) => Decision::Reject,
            None => Decision::Accept,
        }
    };
    if decision == Decision::Accept || stats.cfg.feedback == Feedback::All {
        stats.observe(speed);
    }
    decision
}

/// How the support age limit is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxAge {
    Fixed(f64),
    /// `factor` times the running median per-pixel inter-event interval,
    /// never below `floor`. Unlimited until `min_samples` intervals exist.
    MedianInterval {
        factor: f64,
        floor: f64,
        min_samples: usize,
    },
}

impl Default for MaxAge {
    fn default() -> Self {
        MaxAge::MedianInterval {
            factor: 5.0,
            floor: 0.05,
            min_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub radius: u32,
    pub support_size: usize,
    pub max_age: MaxAge,
    pub stats: SpeedStatsConfig,
    pub noise_filter: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            radius: 2,
            support_size: 5,
            max_age: MaxAge::default(),
            stats: SpeedStatsConfig::default(),
            noise_filter: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.radius < 1 {
            return Err(Error::Config("window radius must be >= 1".into()));
        }
        if self.support_size < 3 || self.support_size > ((2 * self.radius + 1).pow(2) - 1) as usize {
            return Err(Error::Config(format!(
                "support size {} must be in [3, window cells - 1]",
                self.support_size
            )));
        }
        let s = &self.stats;
        if !(0.0..=1.0).contains(&s.q_lo) || !(0.0..=1.0).contains(&s.q_hi) || s.q_lo > s.q_hi {
            return Err(Error::Config(format!(
                "quantiles must satisfy 0 <= q_lo <= q_hi <= 1 (got {}, {})",
                s.q_lo, s.q_hi
            )));
        }
        if s.capacity == 0 {
            return Err(Error::Config("reservoir capacity must be > 0".into()));
        }
        match self.max_age {
            MaxAge::Fixed(a) if !(a > 0.0) => {
                Err(Error::Config("max_age must be > 0".into()))
            }
            MaxAge::MedianInterval { factor, floor, .. } if !(factor > 0.0) || floor < 0.0 => {
                Err(Error::Config("max_age factor must be > 0 and floor >= 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Result of processing one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOutcome {
    pub event: Event,
    pub flow: std::result::Result<NormalFlow, FlowError>,
    pub accepted: bool,
}

/// Stateful per-event flow estimation in stream order.
#[derive(Debug, Clone)]
pub struct FlowEstimator {
    cfg: FlowConfig,
    sae: Sae,
    stats: SpeedStats,
    intervals: Reservoir,
}

impl FlowEstimator {
    pub fn new(width: u32, height: u32, cfg: FlowConfig) -> Self {
        FlowEstimator {
            sae: Sae::new(width, height),
            stats: SpeedStats::new(cfg.stats),
            intervals: Reservoir::new(4096, cfg.stats.seed ^ 0x9e37_79b9_7f4a_7c15),
            cfg,
        }
    }

    pub fn sae(&self) -> &Sae {
        &self.sae
    }

    pub fn stats(&self) -> &SpeedStats {
        &self.stats
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    /// Current support age limit in seconds.
    pub fn max_age(&self) -> f64 {
        match self.cfg.max_age {
            MaxAge::Fixed(a) => a,
            MaxAge::MedianInterval {
                factor,
                floor,
                min_samples,
            } => {
                if self.intervals.len() < min_samples {
                    f64::INFINITY
                } else {
                    (factor * self.intervals.median().unwrap_or(f64::INFINITY)).max(floor)
                }
            }
        }
    }

    pub fn process(&mut self, e: &Event) -> Result<FlowOutcome> {
        let prev = self.sae.lookup(e.p, e.x, e.y);
        self.sae.update(e)?;
        if let Some(prev) = prev {
            if e.t > prev {
                self.intervals.push(e.t - prev);
            }
        }
        let params = SupportParams {
            radius: self.cfg.radius,
            size: self.cfg.support_size,
            max_age: self.max_age(),
        };
        let flow = select_support(&self.sae, e, &params)
            .and_then(|support| fit_plane_constrained(e, &support))
            .and_then(|plane| flow_from_plane(&plane));
        let accepted = match &flow {
            Ok(f) if self.cfg.noise_filter => noise_accept(f.speed, &mut self.stats) == Decision::Accept,
            Ok(f) => f.speed.is_finite(),
            Err(_) => false,
        };
        Ok(FlowOutcome {
            event: *e,
            flow,
            accepted,
        })
    }
}
