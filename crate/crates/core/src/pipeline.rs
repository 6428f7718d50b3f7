//! Event-by-event pipeline: flow estimation, lifetime bookkeeping, and
//! scene-adaptive BEI render scheduling.

use crate::bei::{
    estimate_scene_complexity, impulse_filter, render_bei, Bei, RateEstimator, RenderScheduler,
};
use crate::error::{Error, Result};
use crate::event::{Event, EventStream};
use crate::flow::{FlowConfig, FlowEstimator, FlowOutcome};
use crate::lifetime::{LifetimeConfig, LifetimeRecord, LifetimeStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Desired expected displacement between renders, px.
    pub s_bar: f64,
    /// Event-rate estimation window, seconds.
    pub rate_window: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Time after the first event before the first render; `None` uses the
    /// rate window.
    pub warmup: Option<f64>,
    /// Drop isolated active pixels from rendered BEIs.
    pub impulse_filter: bool,
    /// Debug: render at exact multiples of this period instead.
    pub fixed_interval: Option<f64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            s_bar: 1.0,
            rate_window: 0.01,
            dt_min: 1e-3,
            dt_max: 0.5,
            warmup: None,
            impulse_filter: true,
            fixed_interval: None,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_bar > 0.0) {
            return Err(Error::Config("s_bar must be > 0".into()));
        }
        if !(self.rate_window > 0.0) {
            return Err(Error::Config("rate window must be > 0".into()));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::Config("need 0 < dt_min <= dt_max".into()));
        }
        if matches!(self.warmup, Some(w) if !(w >= 0.0)) {
            return Err(Error::Config("render warm-up must be >= 0".into()));
        }
        if matches!(self.fixed_interval, Some(p) if !(p > 0.0)) {
            return Err(Error::Config("fixed interval must be > 0".into()));
        }
        Ok(())
    }

    fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(self.rate_window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub flow: FlowConfig,
    pub lifetime: LifetimeConfig,
    pub render: RenderConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.lifetime.validate()?;
        self.render.validate()
    }
}

/// One scheduled render.
#[derive(Debug, Clone)]
pub struct Render {
    pub index: usize,
    pub t: f64,
    /// Interval until the next render.
    pub interval: f64,
    pub f_hat: f64,
    pub c_tilde: usize,
    pub bei: Bei,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineCounters {
    pub events: u64,
    pub with_flow: u64,
    pub accepted: u64,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    flow: FlowEstimator,
    store: LifetimeStore,
    rate: RateEstimator,
    next_render: Option<f64>,
    renders: usize,
    counters: PipelineCounters,
}

impl Pipeline {
    pub fn new(width: u32, height: u32, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            flow: FlowEstimator::new(width, height, cfg.flow),
            store: LifetimeStore::new(width, height),
            rate: RateEstimator::new(cfg.render.rate_window),
            next_render: None,
            renders: 0,
            counters: PipelineCounters::default(),
            cfg,
        })
    }

    pub fn store(&self) -> &LifetimeStore {
        &self.store
    }

    pub fn flow(&self) -> &FlowEstimator {
        &self.flow
    }

    pub fn counters(&self) -> PipelineCounters {
        self.counters
    }

    /// Processes one event. Renders due strictly before `e.t` are produced
    /// first, from the state containing every earlier event.
    pub fn push(&mut self, e: &Event) -> Result<(FlowOutcome, Vec<Render>)> {
        let mut renders = Vec::new();
        match self.next_render {
            None => self.next_render = Some(self.first_render_time(e.t)),
            Some(_) => {
                while let Some(t_r) = self.next_render.filter(|&t_r| e.t > t_r) {
                    let r = self.render_at(t_r);
                    self.next_render = Some(self.next_time(t_r, r.interval));
                    renders.push(r);
                }
            }
        }
        let outcome = self.flow.process(e)?;
        self.counters.events += 1;
        if let Ok(flow) = &outcome.flow {
            self.counters.with_flow += 1;
            if outcome.accepted {
                self.counters.accepted += 1;
                let rec = LifetimeRecord::from_flow(e, flow, &self.cfg.lifetime)?;
                self.store.insert_and_reset(e, rec, &self.cfg.lifetime);
                self.rate.push(e.t);
            }
        }
        Ok((outcome, renders))
    }

    fn first_render_time(&self, t_first: f64) -> f64 {
        let t = t_first + self.cfg.render.warmup();
        match self.cfg.render.fixed_interval {
            Some(p) => (t / p).ceil() * p,
            None => t,
        }
    }

    fn next_time(&self, t_r: f64, interval: f64) -> f64 {
        match self.cfg.render.fixed_interval {
            // exact multiples, no accumulated rounding
            Some(p) => ((t_r / p).round() + 1.0) * p,
            None => t_r + interval,
        }
    }

    fn render_at(&mut self, t: f64) -> Render {
        let mut bei = render_bei(&self.store, t);
        if self.cfg.render.impulse_filter {
            bei = impulse_filter(&bei);
        }
        let f_hat = self.rate.rate_at(t);
        let c_tilde = estimate_scene_complexity(&self.store, t);
        let interval = match self.cfg.render.fixed_interval {
            Some(p) => p,
            None => RenderScheduler {
                s_bar: self.cfg.render.s_bar,
                f_hat,
                c_tilde: c_tilde as f64,
                dt_min: self.cfg.render.dt_min,
                dt_max: self.cfg.render.dt_max,
            }
            .clamped_interval(),
        };
        let index = self.renders;
        self.renders += 1;
        Render {
            index,
            t,
            interval,
            f_hat,
            c_tilde,
            bei,
        }
    }
}

/// Runs the whole stream, returning every render and every flow outcome.
pub fn run_stream(stream: &EventStream, cfg: &PipelineConfig) -> Result<(Vec<Render>, Vec<FlowOutcome>)> {
    let mut p = Pipeline::new(stream.width, stream.height, *cfg)?;
    let mut renders = Vec::new();
    let mut outcomes = Vec::with_capacity(stream.len());
    for e in &stream.events {
        let (o, r) = p.push(e)?;
        outcomes.push(o);
        renders.extend(r);
    }
    Ok((renders, outcomes))
}

/// Scheduled BEI renders over a stream.
pub fn schedule_renders(stream: &EventStream, cfg: &PipelineConfig) -> Result<Vec<Render>> {
    Ok(run_stream(stream, cfg)?.0)
}
