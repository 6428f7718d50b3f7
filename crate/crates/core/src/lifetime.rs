//! Event lifetimes from normal flow, extended lifetimes, and opposite-flow
//! lifetime reset for edge thinning.

use crate::error::{Error, Result};
use crate::event::{Event, Polarity};
use crate::flow::NormalFlow;

/// Lifetime in seconds: the SAE gradient magnitude, i.e. 1 / speed.
pub fn lifetime_from_flow(flow: &NormalFlow) -> Result<f64> {
    lifetime_from_speed(flow.speed)
}

pub fn lifetime_from_speed(speed: f64) -> Result<f64> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::Config(format!(
            "lifetime needs a finite positive speed, got {speed}"
        )));
    }
    Ok(1.0 / speed)
}

/// Extended lifetime `kappa * tau`, `kappa >= 1`.
pub fn augment(tau: f64, kappa: f64) -> Result<f64> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::Config(format!("extension factor must be >= 1, got {kappa}")));
    }
    Ok(kappa * tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    /// Shorten the neighbor's lifetime so it deactivates at the new event's
    /// timestamp.
    Truncate,
    /// Set the neighbor's effective lifetime to zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeConfig {
    pub kappa_bei: f64,
    pub kappa_c: f64,
    pub reset: bool,
    pub reset_mode: ResetMode,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        LifetimeConfig {
            kappa_bei: 3.0,
            kappa_c: 3.0,
            reset: true,
            reset_mode: ResetMode::Truncate,
        }
    }
}

impl LifetimeConfig {
    pub fn validate(&self) -> Result<()> {
        augment(1.0, self.kappa_bei)?;
        augment(1.0, self.kappa_c)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeRecord {
    pub birth: f64,
    pub tau: f64,
    pub tau_ext_bei: f64,
    pub tau_ext_c: f64,
    pub tau_eff_bei: f64,
    pub tau_eff_c: f64,
    /// Normal-flow direction, radians.
    pub orientation: f64,
    pub polarity: Polarity,
}

impl LifetimeRecord {
    pub fn from_flow(e: &Event, flow: &NormalFlow, cfg: &LifetimeConfig) -> Result<Self> {
        let tau = lifetime_from_flow(flow)?;
        let tau_ext_bei = augment(tau, cfg.kappa_bei)?;
        let tau_ext_c = augment(tau, cfg.kappa_c)?;
        Ok(LifetimeRecord {
            birth: e.t,
            tau,
            tau_ext_bei,
            tau_ext_c,
            tau_eff_bei: tau_ext_bei,
            tau_eff_c: tau_ext_c,
            orientation: flow.orientation,
            polarity: e.p,
        })
    }

    #[inline]
    pub fn active_bei(&self, t: f64) -> bool {
        self.birth <= t && t < self.birth + self.tau_eff_bei
    }

    #[inline]
    pub fn active_c(&self, t: f64) -> bool {
        self.birth <= t && t < self.birth + self.tau_eff_c
    }
}

/// Grid offset pointing back along the flow: the component-wise rounded
/// unit vector of `orientation`, negated.
pub fn source_offset(orientation: f64) -> (i32, i32) {
    let (s, c) = orientation.sin_cos();
    (-(c.round() as i32), -(s.round() as i32))
}

/// Most recent lifetime record per pixel and polarity.
#[derive(Debug, Clone)]
pub struct LifetimeStore {
    width: u32,
    height: u32,
    cells: [Vec<Option<LifetimeRecord>>; 2],
}

impl LifetimeStore {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        LifetimeStore {
            width,
            height,
            cells: [vec![None; n], vec![None; n]],
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

    pub fn get(&self, p: Polarity, x: u32, y: u32) -> Option<&LifetimeRecord> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.cells[p.index()][self.idx(x, y)].as_ref()
    }

    /// Records of both polarities at one pixel.
    #[inline]
    pub fn pixel(&self, i: usize) -> [Option<&LifetimeRecord>; 2] {
        [self.cells[0][i].as_ref(), self.cells[1][i].as_ref()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, &LifetimeRecord)> + '_ {
        let w = self.width as usize;
        self.cells.iter().flat_map(move |plane| {
            plane.iter().enumerate().filter_map(move |(i, r)| {
                r.as_ref().map(|r| ((i % w) as u32, (i / w) as u32, r))
            })
        })
    }

    /// Stores `rec` for `e` and, if enabled, resets the same-polarity
    /// neighbor opposite the flow direction.
    pub fn insert_and_reset(&mut self, e: &Event, rec: LifetimeRecord, cfg: &LifetimeConfig) {
        if e.x >= self.width || e.y >= self.height {
            return;
        }
        let i = self.idx(e.x, e.y);
        let slot = &mut self.cells[e.p.index()][i];
        if matches!(slot, Some(old) if old.birth > rec.birth) {
            return;
        }
        *slot = Some(rec);
        if !cfg.reset {
            return;
        }
        let (dx, dy) = source_offset(rec.orientation);
        let nx = e.x as i64 + dx as i64;
        let ny = e.y as i64 + dy as i64;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            return;
        }
        let j = self.idx(nx as u32, ny as u32);
        if let Some(nb) = self.cells[e.p.index()][j].as_mut() {
            let cap = match cfg.reset_mode {
                ResetMode::Truncate => (e.t - nb.birth).max(0.0),
                ResetMode::Zero => 0.0,
            };
            nb.tau_eff_bei = nb.tau_eff_bei.min(cap);
            nb.tau_eff_c = nb.tau_eff_c.min(cap);
        }
    }
}
