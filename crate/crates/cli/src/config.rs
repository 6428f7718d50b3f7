//! Flat `key = value` run configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use evseg::eval::CannyConfig;
use evseg::flow::{Feedback, FlowConfig, MaxAge, SpeedStatsConfig};
use evseg::lifetime::{LifetimeConfig, ResetMode};
use evseg::pipeline::{PipelineConfig, RenderConfig};
use evseg::superevents::{ClusterConfig, MergeRule};
use evseg::synth::SyntheticSceneConfig;

/// Invalid, unknown or unreadable configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Edge,
    Square,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub events: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub out: PathBuf,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub limit: Option<usize>,
    pub time_tolerance: f64,

    pub radius: u32,
    pub support_size: usize,
    /// `None` selects the median-interval rule.
    pub max_age: Option<f64>,
    pub max_age_factor: f64,
    pub max_age_floor: f64,
    pub noise_filter: bool,
    pub q_lo: f64,
    pub q_hi: f64,
    pub reservoir: usize,
    pub warmup_samples: usize,
    pub feedback_all: bool,
    pub dump_all: bool,

    pub kappa_bei: f64,
    pub kappa_c: f64,
    pub reset: bool,
    pub reset_mode: ResetMode,

    pub s_bar: f64,
    pub rate_window: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub render_warmup: Option<f64>,
    pub impulse_filter: bool,
    pub fixed_interval: Option<f64>,

    pub cell_size: u32,
    pub iterations: usize,
    pub compactness: f64,
    pub orientation_weight: f64,
    pub merge_ratio: f64,
    pub merge_rule: MergeRule,

    pub canny_sigma: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub gt_is_edge_map: bool,
    pub pr_tolerance: u32,

    pub synth_scene: SceneKind,
    pub synth_speed: f64,
    pub synth_direction: f64,
    pub synth_duration: f64,
    pub synth_side: f64,
    pub synth_noise_rate: f64,
    pub synth_jitter: f64,
    pub synth_frame_rate: f64,

    pub run_superevents: bool,
    pub run_eval: bool,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let c = ClusterConfig::default();
        let k = CannyConfig::default();
        let (factor, floor) = match p.flow.max_age {
            MaxAge::MedianInterval { factor, floor, .. } => (factor, floor),
            MaxAge::Fixed(_) => (5.0, 0.05),
        };
        Config {
            events: None,
            images: None,
            out: PathBuf::from("out"),
            width: 240,
            height: 180,
            seed: 0,
            limit: None,
            time_tolerance: 0.0,
            radius: p.flow.radius,
            support_size: p.flow.support_size,
            max_age: None,
            max_age_factor: factor,
            max_age_floor: floor,
            noise_filter: p.flow.noise_filter,
            q_lo: p.flow.stats.q_lo,
            q_hi: p.flow.stats.q_hi,
            reservoir: p.flow.stats.capacity,
            warmup_samples: p.flow.stats.warmup,
            feedback_all: false,
            dump_all: false,
            kappa_bei: p.lifetime.kappa_bei,
            kappa_c: p.lifetime.kappa_c,
            reset: p.lifetime.reset,
            reset_mode: p.lifetime.reset_mode,
            s_bar: p.render.s_bar,
            rate_window: p.render.rate_window,
            dt_min: p.render.dt_min,
            dt_max: p.render.dt_max,
            render_warmup: None,
            impulse_filter: p.render.impulse_filter,
            fixed_interval: None,
            cell_size: c.cell_size,
            iterations: c.iterations,
            compactness: c.compactness,
            orientation_weight: c.orientation_weight,
            merge_ratio: c.merge_ratio,
            merge_rule: c.merge_rule,
            canny_sigma: k.sigma,
            canny_low: k.low,
            canny_high: k.high,
            gt_is_edge_map: false,
            pr_tolerance: 1,
            synth_scene: SceneKind::Square,
            synth_speed: 100.0,
            synth_direction: 0.5,
            synth_duration: 0.5,
            synth_side: 60.0,
            synth_noise_rate: 0.2,
            synth_jitter: 0.0,
            synth_frame_rate: 50.0,
            run_superevents: true,
            run_eval: true,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> ConfigError {
    ConfigError(format!("{key}: expected {what}, got {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| bad(key, v, what))
}

fn float(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = num(key, v, "a number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, v, "a finite number"))
    }
}

fn flag(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, v, "true or false")),
    }
}

fn opt_float(key: &str, v: &str, none: &str) -> Result<Option<f64>, ConfigError> {
    if v == none {
        Ok(None)
    } else {
        float(key, v).map(Some)
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_opt(v: Option<f64>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |x| x.to_string())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "events" => self.events = opt_path(v),
            "images" => self.images = opt_path(v),
            "out" => {
                if v.is_empty() {
                    return Err(bad(key, v, "a directory"));
                }
                self.out = PathBuf::from(v)
            }
            "width" => self.width = num(key, v, "a pixel count")?,
            "height" => self.height = num(key, v, "a pixel count")?,
            "seed" => self.seed = num(key, v, "an unsigned integer")?,
            "limit" => {
                self.limit = if v == "none" {
                    None
                } else {
                    Some(num(key, v, "an event count or none")?)
                }
            }
            "time_tolerance" => self.time_tolerance = float(key, v)?,
            "radius" => self.radius = num(key, v, "a pixel count")?,
            "support_size" => self.support_size = num(key, v, "a count")?,
            "max_age" => self.max_age = opt_float(key, v, "auto")?,
            "max_age_factor" => self.max_age_factor = float(key, v)?,
            "max_age_floor" => self.max_age_floor = float(key, v)?,
            "noise_filter" => self.noise_filter = flag(key, v)?,
            "q_lo" => self.q_lo = float(key, v)?,
            "q_hi" => self.q_hi = float(key, v)?,
            "reservoir" => self.reservoir = num(key, v, "a count")?,
            "warmup_samples" => self.warmup_samples = num(key, v, "a count")?,
            "feedback" => {
                self.feedback_all = match v {
                    "accepted" => false,
                    "all" => true,
                    _ => return Err(bad(key, v, "accepted or all")),
                }
            }
            "dump_all" => self.dump_all = flag(key, v)?,
            "kappa_bei" => self.kappa_bei = float(key, v)?,
            "kappa_c" => self.kappa_c = float(key, v)?,
            "reset" => self.reset = flag(key, v)?,
            "reset_mode" => {
                self.reset_mode = match v {
                    "truncate" => ResetMode::Truncate,
                    "zero" => ResetMode::Zero,
                    _ => return Err(bad(key, v, "truncate or zero")),
                }
            }
            "s_bar" => self.s_bar = float(key, v)?,
            "rate_window" => self.rate_window = float(key, v)?,
            "dt_min" => self.dt_min = float(key, v)?,
            "dt_max" => self.dt_max = float(key, v)?,
            "render_warmup" => self.render_warmup = opt_float(key, v, "auto")?,
            "impulse_filter" => self.impulse_filter = flag(key, v)?,
            "fixed_interval" => self.fixed_interval = opt_float(key, v, "none")?,
            "cell_size" => self.cell_size = num(key, v, "a pixel count")?,
            "iterations" => self.iterations = num(key, v, "a count")?,
            "compactness" => self.compactness = float(key, v)?,
            "orientation_weight" => self.orientation_weight = float(key, v)?,
            "merge_ratio" => self.merge_ratio = float(key, v)?,
            "merge_rule" => {
                self.merge_rule = match v {
                    "together" => MergeRule::Together,
                    "absorb" => MergeRule::Absorb,
                    _ => return Err(bad(key, v, "together or absorb")),
                }
            }
            "canny_sigma" => self.canny_sigma = float(key, v)?,
            "canny_low" => self.canny_low = float(key, v)?,
            "canny_high" => self.canny_high = float(key, v)?,
            "gt_is_edge_map" => self.gt_is_edge_map = flag(key, v)?,
            "pr_tolerance" => self.pr_tolerance = num(key, v, "a pixel radius")?,
            "synth_scene" => {
                self.synth_scene = match v {
                    "edge" => SceneKind::Edge,
                    "square" => SceneKind::Square,
                    _ => return Err(bad(key, v, "edge or square")),
                }
            }
            "synth_speed" => self.synth_speed = float(key, v)?,
            "synth_direction" => self.synth_direction = float(key, v)?,
            "synth_duration" => self.synth_duration = float(key, v)?,
            "synth_side" => self.synth_side = float(key, v)?,
            "synth_noise_rate" => self.synth_noise_rate = float(key, v)?,
            "synth_jitter" => self.synth_jitter = float(key, v)?,
            "synth_frame_rate" => self.synth_frame_rate = float(key, v)?,
            "run_superevents" => self.run_superevents = flag(key, v)?,
            "run_eval" => self.run_eval = flag(key, v)?,
            _ => return Err(ConfigError(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its canonical value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("events", show_path(&self.events)),
            ("images", show_path(&self.images)),
            ("out", self.out.display().to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("seed", self.seed.to_string()),
            ("limit", self.limit.map_or("none".into(), |n| n.to_string())),
            ("time_tolerance", self.time_tolerance.to_string()),
            ("radius", self.radius.to_string()),
            ("support_size", self.support_size.to_string()),
            ("max_age", show_opt(self.max_age, "auto")),
            ("max_age_factor", self.max_age_factor.to_string()),
            ("max_age_floor", self.max_age_floor.to_string()),
            ("noise_filter", self.noise_filter.to_string()),
            ("q_lo", self.q_lo.to_string()),
            ("q_hi", self.q_hi.to_string()),
            ("reservoir", self.reservoir.to_string()),
            ("warmup_samples", self.warmup_samples.to_string()),
            ("feedback", if self.feedback_all { "all" } else { "accepted" }.into()),
            ("dump_all", self.dump_all.to_string()),
            ("kappa_bei", self.kappa_bei.to_string()),
            ("kappa_c", self.kappa_c.to_string()),
            ("reset", self.reset.to_string()),
            (
                "reset_mode",
                match self.reset_mode {
                    ResetMode::Truncate => "truncate",
                    ResetMode::Zero => "zero",
                }
                .into(),
            ),
            ("s_bar", self.s_bar.to_string()),
            ("rate_window", self.rate_window.to_string()),
            ("dt_min", self.dt_min.to_string()),
            ("dt_max", self.dt_max.to_string()),
            ("render_warmup", show_opt(self.render_warmup, "auto")),
            ("impulse_filter", self.impulse_filter.to_string()),
            ("fixed_interval", show_opt(self.fixed_interval, "none")),
            ("cell_size", self.cell_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("compactness", self.compactness.to_string()),
            ("orientation_weight", self.orientation_weight.to_string()),
            ("merge_ratio", self.merge_ratio.to_string()),
            (
                "merge_rule",
                match self.merge_rule {
                    MergeRule::Together => "together",
                    MergeRule::Absorb => "absorb",
                }
                .into(),
            ),
            ("canny_sigma", self.canny_sigma.to_string()),
            ("canny_low", self.canny_low.to_string()),
            ("canny_high", self.canny_high.to_string()),
            ("gt_is_edge_map", self.gt_is_edge_map.to_string()),
            ("pr_tolerance", self.pr_tolerance.to_string()),
            (
                "synth_scene",
                match self.synth_scene {
                    SceneKind::Edge => "edge",
                    SceneKind::Square => "square",
                }
                .into(),
            ),
            ("synth_speed", self.synth_speed.to_string()),
            ("synth_direction", self.synth_direction.to_string()),
            ("synth_duration", self.synth_duration.to_string()),
            ("synth_side", self.synth_side.to_string()),
            ("synth_noise_rate", self.synth_noise_rate.to_string()),
            ("synth_jitter", self.synth_jitter.to_string()),
            ("synth_frame_rate", self.synth_frame_rate.to_string()),
            ("run_superevents", self.run_superevents.to_string()),
            ("run_eval", self.run_eval.to_string()),
        ]
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let max_age = match self.max_age {
            Some(a) => MaxAge::Fixed(a),
            None => MaxAge::MedianInterval {
                factor: self.max_age_factor,
                floor: self.max_age_floor,
                min_samples: 100,
            },
        };
        PipelineConfig {
            flow: FlowConfig {
                radius: self.radius,
                support_size: self.support_size,
                max_age,
                stats: SpeedStatsConfig {
                    capacity: self.reservoir,
                    q_lo: self.q_lo,
                    q_hi: self.q_hi,
                    warmup: self.warmup_samples,
                    feedback: if self.feedback_all { Feedback::All } else { Feedback::Accepted },
                    seed: self.seed,
                },
                noise_filter: self.noise_filter,
            },
            lifetime: LifetimeConfig {
                kappa_bei: self.kappa_bei,
                kappa_c: self.kappa_c,
                reset: self.reset,
                reset_mode: self.reset_mode,
            },
            render: RenderConfig {
                s_bar: self.s_bar,
                rate_window: self.rate_window,
                dt_min: self.dt_min,
                dt_max: self.dt_max,
                warmup: self.render_warmup,
                impulse_filter: self.impulse_filter,
                fixed_interval: self.fixed_interval,
            },
        }
    }

    pub fn cluster(&self) -> ClusterConfig {
        ClusterConfig {
            cell_size: self.cell_size,
            iterations: self.iterations,
            compactness: self.compactness,
            orientation_weight: self.orientation_weight,
            merge_ratio: self.merge_ratio,
            merge_rule: self.merge_rule,
        }
    }

    pub fn canny(&self) -> CannyConfig {
        CannyConfig {
            sigma: self.canny_sigma,
            low: self.canny_low,
            high: self.canny_high,
        }
    }

    pub fn scene(&self) -> SyntheticSceneConfig {
        let mut s = match self.synth_scene {
            SceneKind::Edge => {
                let mut s = SyntheticSceneConfig::translating_edge(self.width, self.height, self.synth_speed, self.synth_duration);
                s.direction = self.synth_direction;
                s
            }
            SceneKind::Square => SyntheticSceneConfig::square(
                self.width,
                self.height,
                self.synth_side,
                self.synth_speed,
                self.synth_direction,
                self.synth_duration,
            ),
        };
        s.noise_rate = self.synth_noise_rate;
        s.jitter_std = self.synth_jitter;
        s.seed = self.seed;
        s
    }

    /// Checks every parameter against its module's domain.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: evseg::Error| ConfigError(e.to_string());
        if self.width == 0 || self.height == 0 {
            return Err(ConfigError("width and height must be > 0".into()));
        }
        if !(self.time_tolerance >= 0.0) {
            return Err(ConfigError("time_tolerance must be >= 0".into()));
        }
        self.pipeline().validate().map_err(wrap)?;
        self.cluster().validate().map_err(wrap)?;
        if self.cell_size > self.width.min(self.height) {
            return Err(ConfigError(format!(
                "cell_size {} exceeds min(width, height)",
                self.cell_size
            )));
        }
        self.canny().validate().map_err(wrap)?;
        self.scene().validate().map_err(wrap)?;
        if !(self.synth_frame_rate >= 0.0) {
            return Err(ConfigError("synth_frame_rate must be >= 0".into()));
        }
        Ok(())
    }
}
