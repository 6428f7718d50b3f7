//! Binary Event Images: rendering from the lifetime store, impulse-noise
//! filtering, scene complexity, event rate, and the motion-normalizing
//! rendering interval.

use std::collections::VecDeque;
use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lifetime::{LifetimeRecord, LifetimeStore};
use crate::par;
use crate::raster::{self, hsv_to_rgb, BinaryMap, Pgm};

/// `2 / (1 + sqrt 2)`: expected events per feature per interval for unit
/// desired displacement, midway between the flow-angle bounds.
pub const NORM_CONST: f64 = 2.0 / (1.0 + SQRT_2);

/// Bounds of the frequency-to-pixel conversion factor over flow angles.
pub const ALPHA_BOUNDS: (f64, f64) = (1.0, SQRT_2);

#[derive(Debug, Clone, PartialEq)]
pub struct Bei {
    pub t: f64,
    pub active: BinaryMap,
    /// Flow orientation (radians) of active pixels; NaN elsewhere.
    pub orientation: Vec<f32>,
}

impl Bei {
    pub fn empty(width: u32, height: u32, t: f64) -> Self {
        Bei {
            t,
            active: BinaryMap::new(width, height),
            orientation: vec![f32::NAN; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.active.width
    }

    pub fn height(&self) -> u32 {
        self.active.height
    }

    pub fn active_count(&self) -> usize {
        self.active.count()
    }

    pub fn active_fraction(&self) -> f64 {
        let n = self.active.data.len();
        if n == 0 {
            0.0
        } else {
            self.active_count() as f64 / n as f64
        }
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.active.save_pgm(path)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.active.save_png(path)
    }

    /// Orientation overlay: hue encodes flow direction, inactive pixels black.
    pub fn save_orientation_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut raw = Vec::with_capacity(self.orientation.len() * 3);
        for (&on, &theta) in self.active.data.iter().zip(&self.orientation) {
            if on && theta.is_finite() {
                raw.extend_from_slice(&hsv_to_rgb((theta as f64).rem_euclid(2.0 * PI) / (2.0 * PI), 1.0, 1.0));
            } else {
                raw.extend_from_slice(&[0, 0, 0]);
            }
        }
        raster::save_png_rgb(path.as_ref(), self.width(), self.height(), raw)
    }

    /// Orientation as a 16-bit PGM: 0 for no orientation, otherwise
    /// `1 + round(frac * 65534)` with `frac` the angle as a fraction of a turn.
    pub fn orientation_pgm(&self) -> Pgm {
        let samples = self
            .orientation
            .iter()
            .zip(&self.active.data)
            .map(|(&theta, &on)| {
                if on && theta.is_finite() {
                    let frac = (theta as f64).rem_euclid(2.0 * PI) / (2.0 * PI);
                    1 + (frac * 65534.0).round() as u16
                } else {
                    0
                }
            })
            .collect();
        Pgm {
            width: self.width(),
            height: self.height(),
            maxval: 65535,
            samples,
        }
    }

    /// Rebuilds a BEI from its activity map and optional orientation PGM.
    pub fn from_maps(active: BinaryMap, orientation: Option<&Pgm>, t: f64) -> Result<Self> {
        let n = active.data.len();
        let orientation = match orientation {
            Some(p) => {
                if p.width != active.width || p.height != active.height {
                    return Err(Error::Dimensions("orientation map size differs from BEI".into()));
                }
                p.samples
                    .iter()
                    .zip(&active.data)
                    .map(|(&s, &on)| {
                        if on && s > 0 {
                            let theta = (s - 1) as f64 / 65534.0 * 2.0 * PI;
                            (if theta > PI { theta - 2.0 * PI } else { theta }) as f32
                        } else {
                            f32::NAN
                        }
                    })
                    .collect()
            }
            None => vec![f32::NAN; n],
        };
        Ok(Bei {
            t,
            active,
            orientation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LifetimeKind {
    /// Effective lifetime for the rendered image.
    Bei,
    /// Effective lifetime for scene-complexity estimation.
    Complexity,
}

fn is_active(r: &LifetimeRecord, t: f64, kind: LifetimeKind) -> bool {
    match kind {
        LifetimeKind::Bei => r.active_bei(t),
        LifetimeKind::Complexity => r.active_c(t),
    }
}

/// Renders the store at time `t` using the chosen effective lifetime.
pub fn render_with(store: &LifetimeStore, t: f64, kind: LifetimeKind) -> Bei {
    let (w, h) = (store.width(), store.height());
    let mut bei = Bei::empty(w, h, t);
    let width = w as usize;
    let mut cells: Vec<(bool, f32)> = vec![(false, f32::NAN); width * h as usize];
    par::for_each_row_mut(&mut cells, width, |y, row| {
        for (x, cell) in row.iter_mut().enumerate() {
            let [neg, pos] = store.pixel(y * width + x);
            let mut best: Option<&LifetimeRecord> = None;
            for r in [neg, pos].into_iter().flatten() {
                if is_active(r, t, kind) && best.is_none_or(|b| r.birth > b.birth) {
                    best = Some(r);
                }
            }
            if let Some(r) = best {
                *cell = (true, r.orientation as f32);
            }
        }
    });
    for (i, (on, theta)) in cells.into_iter().enumerate() {
        bei.active.data[i] = on;
        bei.orientation[i] = theta;
    }
    bei
}

/// A pixel is active iff some polarity's record covers `t` with its
/// effective BEI lifetime.
pub fn render_bei(store: &LifetimeStore, t: f64) -> Bei {
    render_with(store, t, LifetimeKind::Bei)
}

/// Clears active pixels that have no active 8-neighbor.
pub fn impulse_filter(b: &Bei) -> Bei {
    let (w, h) = (b.width() as usize, b.height() as usize);
    let src = &b.active.data;
    let mut keep = vec![false; w * h];
    par::for_each_row_mut(&mut keep, w, |y, row| {
        for (x, k) in row.iter_mut().enumerate() {
            if !src[y * w + x] {
                continue;
            }
            let mut found = false;
            'scan: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if (nx, ny) != (x, y) && src[ny * w + nx] {
                        found = true;
                        break 'scan;
                    }
                }
            }
            *k = found;
        }
    });
    let mut out = b.clone();
    for (i, k) in keep.into_iter().enumerate() {
        if !k {
            out.active.data[i] = false;
            out.orientation[i] = f32::NAN;
        }
    }
    out
}

/// Active-pixel count of the impulse-filtered complexity render, floored at 1.
pub fn estimate_scene_complexity(store: &LifetimeStore, t: f64) -> usize {
    let bei = impulse_filter(&render_with(store, t, LifetimeKind::Complexity));
    bei.active_count().max(1)
}

/// Events per second among `times` falling in `(t_now - window, t_now]`.
pub fn estimate_event_rate(times: &[f64], t_now: f64, window: f64) -> f64 {
    let n = times
        .iter()
        .filter(|&&t| t > t_now - window && t <= t_now)
        .count();
    n as f64 / window
}

/// Sliding-window rate over a time-ordered substream.
#[derive(Debug, Clone)]
pub struct RateEstimator {
    window: f64,
    times: VecDeque<f64>,
}

impl RateEstimator {
    pub fn new(window: f64) -> Self {
        RateEstimator {
            window,
            times: VecDeque::new(),
        }
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn push(&mut self, t: f64) {
        self.times.push_back(t);
    }

    /// Rate at `t_now`; samples older than the window are discarded.
    pub fn rate_at(&mut self, t_now: f64) -> f64 {
        let lo = t_now - self.window;
        while self.times.front().is_some_and(|&t| t <= lo) {
            self.times.pop_front();
        }
        let n = self.times.iter().take_while(|&&t| t <= t_now).count();
        n as f64 / self.window
    }
}

/// Scene-adaptive interval parameters and the current estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderScheduler {
    /// Desired expected displacement per interval, px.
    pub s_bar: f64,
    /// Event rate estimate, events/s.
    pub f_hat: f64,
    /// Scene complexity estimate.
    pub c_tilde: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl RenderScheduler {
    /// Per-feature event rate estimate.
    pub fn f_per_feature(&self) -> f64 {
        self.f_hat / self.c_tilde
    }

    /// Unclamped interval `NORM_CONST * s_bar * c_tilde / f_hat`; falls back
    /// to `dt_max` when no events are arriving.
    pub fn rendering_interval(&self) -> f64 {
        if !(self.f_hat > 0.0) {
            return self.dt_max;
        }
        NORM_CONST * self.s_bar * self.c_tilde.max(1.0) / self.f_hat
    }

    pub fn clamped_interval(&self) -> f64 {
        self.rendering_interval().clamp(self.dt_min, self.dt_max)
    }
}

pub fn rendering_interval(sched: &RenderScheduler) -> f64 {
    sched.rendering_interval()
}
