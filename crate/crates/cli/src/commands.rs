//! Subcommand implementations. Every output file is written under a
//! `.partial` name and renamed once complete.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use evseg::bei::Bei;
use evseg::eval::{align_frame, boundary_pr, canny, read_frame_manifest};
use evseg::event::{format_timestamp, load_event_stream, EventStream};
use evseg::pipeline::{Pipeline, Render};
use evseg::raster::{BinaryMap, GrayImage, Pgm};
use evseg::superevents::{extract_boundaries, segment, LabelMap};
use evseg::synth::{render_frame, synth_generate};
use log::{debug, info};

use crate::config::{Config, ConfigError};

/// A required input is missing; maps to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn missing(what: &str, path: &Path) -> anyhow::Error {
    InputError(format!("{what} not found: {}", path.display())).into()
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

/// Writes `path` through `write` on a `.partial` sibling, then renames.
fn commit(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = partial_path(path);
    write(&tmp)?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))
}

fn commit_text(path: &Path, text: &str) -> Result<()> {
    commit(path, |p| fs::write(p, text).with_context(|| format!("writing {}", p.display())))
}

/// Buffered CSV/text file that only takes its final name on `finish`.
struct PartialFile {
    path: PathBuf,
    tmp: PathBuf,
    w: BufWriter<File>,
}

impl PartialFile {
    fn create(path: PathBuf) -> Result<Self> {
        let tmp = partial_path(&path);
        let f = File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        Ok(PartialFile {
            path,
            tmp,
            w: BufWriter::new(f),
        })
    }

    fn line(&mut self, s: &str) -> Result<()> {
        self.w.write_all(s.as_bytes())?;
        self.w.write_all(b"\n")?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        drop(self.w);
        fs::rename(&self.tmp, &self.path).with_context(|| format!("renaming {}", self.tmp.display()))
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn checked(cfg: &Config) -> Result<()> {
    cfg.validate()?;
    mkdir(&cfg.out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthSummary {
    pub events: usize,
    pub frames: usize,
}

pub fn cmd_synth(cfg: &Config) -> Result<SynthSummary> {
    checked(cfg)?;
    let scene_cfg = cfg.scene();
    let scene = synth_generate(&scene_cfg)?;
    let events_path = cfg.out.join("events.txt");
    commit(&events_path, |p| Ok(scene.stream.save(p)?))?;

    let mut gt = PartialFile::create(cfg.out.join("ground_truth.csv"))?;
    gt.line("t,x,y,p,signal,nx,ny,crossing_time")?;
    for (e, truth) in scene.stream.events.iter().zip(&scene.truth) {
        let [nx, ny] = truth.normal_flow.unwrap_or([0.0, 0.0]);
        let ct = truth.crossing_time.map(format_timestamp).unwrap_or_default();
        gt.line(&format!(
            "{},{},{},{},{},{nx},{ny},{ct}",
            format_timestamp(e.t),
            e.x,
            e.y,
            e.p.bit(),
            truth.is_signal() as u8
        ))?;
    }
    gt.finish()?;

    let mut frames = 0;
    if cfg.synth_frame_rate > 0.0 {
        let dir = cfg.out.join("images");
        mkdir(&dir)?;
        let mut manifest = PartialFile::create(cfg.out.join("images.txt"))?;
        let t_end = scene_cfg.t0 + scene_cfg.duration;
        loop {
            let t = scene_cfg.t0 + frames as f64 / cfg.synth_frame_rate;
            if t > t_end + 1e-12 {
                break;
            }
            let name = format!("images/frame_{frames:05}.pgm");
            let img = render_frame(&scene_cfg, t);
            commit(&cfg.out.join(&name), |p| Ok(img.save_pgm(p)?))?;
            manifest.line(&format!("{} {name}", format_timestamp(t)))?;
            frames += 1;
        }
        manifest.finish()?;
    }
    info!("synth: {} events, {frames} frames", scene.stream.len());
    Ok(SynthSummary {
        events: scene.stream.len(),
        frames,
    })
}

fn load_events(cfg: &Config) -> Result<EventStream> {
    let path = cfg
        .events
        .as_ref()
        .ok_or_else(|| ConfigError("no events file configured (set `events`)".into()))?;
    if !path.is_file() {
        return Err(missing("events file", path));
    }
    let mut stream = load_event_stream(path, cfg.width, cfg.height, cfg.time_tolerance)
        .with_context(|| format!("loading {}", path.display()))?;
    if let Some(n) = cfg.limit {
        stream.truncate(n);
    }
    Ok(stream)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProcessSummary {
    pub events: usize,
    pub accepted: u64,
    pub flow_rows: usize,
    pub renders: usize,
    pub seconds: f64,
}

impl ProcessSummary {
    pub fn events_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.events as f64 / self.seconds
        } else {
            f64::INFINITY
        }
    }
}

fn save_render(dir: &Path, r: &Render) -> Result<()> {
    let stem = format!("{:05}", r.index);
    commit(&dir.join(format!("bei_{stem}.pgm")), |p| Ok(r.bei.save_pgm(p)?))?;
    commit(&dir.join(format!("bei_{stem}.png")), |p| Ok(r.bei.save_png(p)?))?;
    commit(&dir.join(format!("orient_{stem}.pgm")), |p| {
        fs::write(p, r.bei.orientation_pgm().encode())?;
        Ok(())
    })?;
    commit(&dir.join(format!("orient_{stem}.png")), |p| Ok(r.bei.save_orientation_png(p)?))
}

/// Flow estimation and BEI rendering over the configured event stream.
fn process_events(cfg: &Config, write_flow: bool, write_bei: bool) -> Result<ProcessSummary> {
    checked(cfg)?;
    let stream = load_events(cfg)?;
    let mut pipe = Pipeline::new(stream.width, stream.height, cfg.pipeline())?;
    let mut flow_csv = if write_flow {
        let mut f = PartialFile::create(cfg.out.join("flow.csv"))?;
        f.line("t,x,y,p,gx,gy,speed,orientation,accepted")?;
        Some(f)
    } else {
        None
    };
    let bei_dir = cfg.out.join("bei");
    let mut manifest = if write_bei {
        mkdir(&bei_dir)?;
        let mut f = PartialFile::create(cfg.out.join("renders.csv"))?;
        f.line("index,t_render,interval,f_hat,c_tilde")?;
        Some(f)
    } else {
        None
    };

    let start = Instant::now();
    let mut summary = ProcessSummary::default();
    for e in &stream.events {
        let (outcome, renders) = pipe.push(e)?;
        if let Some(f) = flow_csv.as_mut() {
            if outcome.accepted || cfg.dump_all {
                let row = match &outcome.flow {
                    Ok(fl) => format!(
                        "{},{},{},{},{},{},{},{},{}",
                        format_timestamp(e.t),
                        e.x,
                        e.y,
                        e.p.bit(),
                        fl.grad[0],
                        fl.grad[1],
                        fl.speed,
                        fl.orientation,
                        outcome.accepted as u8
                    ),
                    Err(_) => format!("{},{},{},{},,,,,0", format_timestamp(e.t), e.x, e.y, e.p.bit()),
                };
                f.line(&row)?;
                summary.flow_rows += 1;
            }
        }
        if let Some(m) = manifest.as_mut() {
            for r in &renders {
                save_render(&bei_dir, r)?;
                m.line(&format!(
                    "{},{},{},{},{}",
                    r.index,
                    format_timestamp(r.t),
                    r.interval,
                    r.f_hat,
                    r.c_tilde
                ))?;
                debug!("render {} at t={} active={}", r.index, r.t, r.bei.active_count());
            }
        }
        summary.renders += renders.len();
    }
    summary.seconds = start.elapsed().as_secs_f64();
    summary.events = stream.len();
    summary.accepted = pipe.counters().accepted;
    if let Some(f) = flow_csv {
        f.finish()?;
    }
    if let Some(m) = manifest {
        m.finish()?;
    }
    info!(
        "processed {} events ({} accepted), {} renders, {:.0} events/s",
        summary.events,
        summary.accepted,
        summary.renders,
        summary.events_per_second()
    );
    Ok(summary)
}

pub fn cmd_flow(cfg: &Config) -> Result<ProcessSummary> {
    process_events(cfg, true, false)
}

pub fn cmd_render(cfg: &Config) -> Result<ProcessSummary> {
    process_events(cfg, false, true)
}

/// Render index to timestamp, from `renders.csv`.
fn read_render_times(path: &Path) -> Result<BTreeMap<usize, f64>> {
    let text = fs::read_to_string(path).map_err(|_| missing("render manifest", path))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut it = line.split(',');
        let (Some(i), Some(t)) = (it.next(), it.next()) else {
            bail!("{}:{}: malformed row", path.display(), n + 1);
        };
        let i: usize = i.parse().with_context(|| format!("{}:{}", path.display(), n + 1))?;
        let t: f64 = t.parse().with_context(|| format!("{}:{}", path.display(), n + 1))?;
        out.insert(i, t);
    }
    Ok(out)
}

/// Indices of files named `{prefix}NNNNN.{ext}` in `dir`, ascending.
fn indexed_files(dir: &Path, prefix: &str, ext: &str) -> Result<Vec<usize>> {
    let mut v = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_prefix(prefix).and_then(|s| s.strip_suffix(ext)) {
            if let Ok(i) = stem.parse::<usize>() {
                v.push(i);
            }
        }
    }
    v.sort_unstable();
    Ok(v)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupereventSummary {
    pub maps: usize,
    /// Label count of each map, in index order.
    pub labels: Vec<usize>,
}

pub fn cmd_superevents(cfg: &Config) -> Result<SupereventSummary> {
    checked(cfg)?;
    let bei_dir = cfg.out.join("bei");
    if !bei_dir.is_dir() {
        return Err(missing("BEI directory", &bei_dir));
    }
    let times = read_render_times(&cfg.out.join("renders.csv")).unwrap_or_default();
    let out_dir = cfg.out.join("superevents");
    mkdir(&out_dir)?;
    let ccfg = cfg.cluster();
    let mut summary = SupereventSummary::default();
    for i in indexed_files(&bei_dir, "bei_", ".pgm")? {
        let stem = format!("{i:05}");
        let active = BinaryMap::load(bei_dir.join(format!("bei_{stem}.pgm")))?;
        let orient_path = bei_dir.join(format!("orient_{stem}.pgm"));
        let orient = if orient_path.is_file() {
            Some(Pgm::load(&orient_path)?)
        } else {
            None
        };
        let t = times.get(&i).copied().unwrap_or(0.0);
        let bei = Bei::from_maps(active, orient.as_ref(), t)?;
        let seg = segment(&bei, &ccfg)?;
        commit(&out_dir.join(format!("labels_{stem}.pgm")), |p| Ok(seg.labels.save_pgm(p)?))?;
        commit(&out_dir.join(format!("labels_{stem}.png")), |p| Ok(seg.labels.save_color_png(p)?))?;
        let bounds = extract_boundaries(&seg.labels);
        commit(&out_dir.join(format!("boundaries_{stem}.pgm")), |p| Ok(bounds.save_pgm(p)?))?;
        let mut csv = String::from("label,pixels,active,ratio,cx,cy\n");
        for s in &seg.stats {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.label,
                s.pixels,
                s.active,
                s.ratio(),
                s.cx,
                s.cy
            ));
        }
        commit_text(&out_dir.join(format!("stats_{stem}.csv")), &csv)?;
        summary.maps += 1;
        summary.labels.push(seg.stats.len());
    }
    info!("superevents: {} label maps", summary.maps);
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrRow {
    pub render_index: usize,
    pub t: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn cmd_eval(cfg: &Config) -> Result<Vec<PrRow>> {
    checked(cfg)?;
    let manifest = cfg
        .images
        .as_ref()
        .ok_or_else(|| ConfigError("no images manifest configured (set `images`)".into()))?;
    if !manifest.is_file() {
        return Err(missing("images manifest", manifest));
    }
    let frames = read_frame_manifest(manifest)?;
    let frame_times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    let times = read_render_times(&cfg.out.join("renders.csv"))?;
    let label_dir = cfg.out.join("superevents");
    if !label_dir.is_dir() {
        return Err(missing("label map directory", &label_dir));
    }
    let canny_cfg = cfg.canny();
    let mut gt_cache: BTreeMap<usize, BinaryMap> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut csv = PartialFile::create(cfg.out.join("pr_results.csv"))?;
    csv.line("render_index,t,precision,recall")?;
    for i in indexed_files(&label_dir, "labels_", ".pgm")? {
        let Some(&t) = times.get(&i) else {
            bail!("render {i} has a label map but no row in renders.csv");
        };
        let pgm = Pgm::load(label_dir.join(format!("labels_{i:05}.pgm")))?;
        let labels = LabelMap::from_labels(
            pgm.width,
            pgm.height,
            cfg.cell_size,
            pgm.samples.iter().map(|&v| v as u32).collect(),
        )?;
        let pred = extract_boundaries(&labels);
        let k = align_frame(&frame_times, t)?;
        if !gt_cache.contains_key(&k) {
            let path = &frames[k].path;
            if !path.is_file() {
                return Err(missing("frame", path));
            }
            let img = GrayImage::load(path)?;
            let gt = if cfg.gt_is_edge_map {
                BinaryMap::from_gray(&img, 0.5)
            } else {
                canny(&img, &canny_cfg)?
            };
            gt_cache.insert(k, gt);
        }
        let r = boundary_pr(&pred, &gt_cache[&k], cfg.pr_tolerance)?;
        csv.line(&format!("{i},{},{},{}", format_timestamp(t), r.precision, r.recall))?;
        rows.push(PrRow {
            render_index: i,
            t,
            precision: r.precision,
            recall: r.recall,
        });
    }
    csv.finish()?;
    info!("eval: {} label maps scored", rows.len());
    Ok(rows)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineSummary {
    pub synth: Option<SynthSummary>,
    pub process: ProcessSummary,
    pub superevents: Option<SupereventSummary>,
    pub eval: Option<Vec<PrRow>>,
}

/// All stages in sequence. Without an events file a synthetic scene is
/// generated first.
pub fn cmd_pipeline(cfg: &Config) -> Result<PipelineSummary> {
    checked(cfg)?;
    let mut cfg = cfg.clone();
    let mut summary = PipelineSummary::default();
    if cfg.events.is_none() {
        let s = cmd_synth(&cfg)?;
        cfg.events = Some(cfg.out.join("events.txt"));
        if cfg.images.is_none() && s.frames > 0 {
            cfg.images = Some(cfg.out.join("images.txt"));
        }
        summary.synth = Some(s);
    }
    commit_text(&cfg.out.join("config.txt"), &cfg.to_text())?;
    summary.process = process_events(&cfg, true, true)?;
    if cfg.run_superevents {
        summary.superevents = Some(cmd_superevents(&cfg)?);
        if cfg.run_eval && cfg.images.is_some() {
            summary.eval = Some(cmd_eval(&cfg)?);
        }
    }
    Ok(summary)
}
