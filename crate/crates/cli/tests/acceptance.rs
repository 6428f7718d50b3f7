//! Acceptance suite: one PASS/FAIL line per criterion, exits non-zero if any
//! criterion fails.
//!
//! Set `EVSEG_DATASET` to a directory holding an Event Camera Dataset style
//! `events.txt` (240x180 sensor) to run the dataset smoke test on real data;
//! otherwise a synthetic DAVIS240-sized scene stands in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use evseg::bei::NORM_CONST;
use evseg::eval::{boundary_pr, canny, edge_thickness, CannyConfig};
use evseg::event::{Event, Polarity, Sae};
use evseg::flow::{fit_plane_constrained, flow_from_plane, select_support, SupportParams};
use evseg::pipeline::{run_stream, PipelineConfig, Render};
use evseg::raster::{BinaryMap, GrayImage};
use evseg::superevents::{
    extract_boundaries, init_grid, segment, ClusterConfig, LabelMap, MergeRule,
};
use evseg::synth::{synth_generate, EdgeGeometry, SyntheticScene, SyntheticSceneConfig};
use evseg_cli::{cmd_pipeline, Config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

const EDGE_W: u32 = 64;
const EDGE_H: u32 = 32;
const EDGE_SPEED: f64 = 100.0;

fn edge_scene() -> SyntheticScene {
    let mut cfg = SyntheticSceneConfig::translating_edge(EDGE_W, EDGE_H, EDGE_SPEED, 0.55);
    cfg.noise_rate = 0.5;
    cfg.seed = 0;
    synth_generate(&cfg).unwrap()
}

fn flow_recovery() -> Outcome {
    let start = Instant::now();
    let scene = edge_scene();
    let cfg = PipelineConfig::default();
    let (_, outcomes) = run_stream(&scene.stream, &cfg).unwrap();
    let r = cfg.flow.radius;
    let (mut n, mut good) = (0usize, 0usize);
    for (o, truth) in outcomes.iter().zip(&scene.truth) {
        let e = o.event;
        let interior = e.x >= r && e.y >= r && e.x + r < EDGE_W && e.y + r < EDGE_H;
        let (true, Ok(f), Some(v)) = (o.accepted && interior, o.flow, truth.normal_flow) else {
            continue;
        };
        let want = v[0].hypot(v[1]);
        n += 1;
        good += ((f.speed - want).abs() <= 0.05 * want) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = good as f64 / n.max(1) as f64;
    outcome(
        n > 0 && frac >= 0.9 && secs < 10.0,
        format!("{good}/{n} accepted interior events within 5% ({:.1}%), run {secs:.2}s", 100.0 * frac),
    )
}

// ---------------------------------------------------------------- 2

fn plane_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut ok, mut fitted) = (0, 0);
    let cases = 1000;
    for _ in 0..cases {
        let speed = rng.random_range(5.0..2000.0);
        let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let g = [theta.cos() / speed, theta.sin() / speed];
        let t0 = rng.random_range(0.1..100.0);
        let mut sae = Sae::new(9, 9);
        let anchor = Event::new(4, 4, t0, Polarity::Positive);
        // pixels behind the edge fired earlier, on the plane
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                let dt = g[0] * dx as f64 + g[1] * dy as f64;
                if (dx, dy) != (0, 0) && dt < 0.0 && rng.random_bool(0.9) {
                    let e = Event::new((4 + dx) as u32, (4 + dy) as u32, t0 + dt, Polarity::Positive);
                    sae.update(&e).unwrap();
                }
            }
        }
        sae.update(&anchor).unwrap();
        let Ok(support) = select_support(&sae, &anchor, &SupportParams::default()) else {
            continue;
        };
        let Ok(plane) = fit_plane_constrained(&anchor, &support) else {
            continue;
        };
        fitted += 1;
        let got = plane.gradient();
        let err = (got[0] - g[0]).hypot(got[1] - g[1]) / g[0].hypot(g[1]);
        let speed_ok = flow_from_plane(&plane).is_ok_and(|f| (f.speed - speed).abs() <= 1e-9 * speed);
        if err <= 1e-9 && speed_ok {
            ok += 1;
        }
    }
    outcome(
        ok == fitted && fitted >= cases * 9 / 10,
        format!("{ok}/{fitted} fitted patches exact to 1e-9 ({} of {cases} had enough support)", fitted),
    )
}

// ---------------------------------------------------------------- 3

fn mean_thickness(renders: &[Render], max_run: u32) -> Option<f64> {
    let v: Vec<f64> = renders
        .iter()
        .filter_map(|r| edge_thickness(&r.bei.active, max_run))
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn edge_thickness_claims() -> Outcome {
    let scene = edge_scene();
    let run = |kappa: f64, reset: bool| {
        let mut cfg = PipelineConfig::default();
        cfg.lifetime.kappa_bei = kappa;
        cfg.lifetime.kappa_c = kappa;
        cfg.lifetime.reset = reset;
        let (renders, _) = run_stream(&scene.stream, &cfg).unwrap();
        // skip renders while the edge is still entering the sensor
        let settled: Vec<Render> = renders.into_iter().filter(|r| r.t > 0.1).collect();
        mean_thickness(&settled, 9).unwrap_or(f64::NAN)
    };
    let k1 = run(1.0, false);
    let k3 = run(3.0, false);
    let k3r = run(3.0, true);
    outcome(
        (0.9..=1.5).contains(&k1) && (2.5..=3.5).contains(&k3) && k3r <= 1.5,
        format!("kappa=1 no reset {k1:.3} px, kappa=3 no reset {k3:.3} px, kappa=3 reset {k3r:.3} px"),
    )
}

// ---------------------------------------------------------------- 4

fn scheduler_normalization() -> Outcome {
    // a tilted edge spreads each column's events over time so the rate
    // window sees a steady stream
    let (w, h) = (96u32, 48u32);
    let speed = 120.0;
    let mut sc = SyntheticSceneConfig::translating_edge(w, h, speed, 0.6);
    let tilt = 0.35f64;
    sc.geometry = EdgeGeometry::Segment {
        a: [2.5, -1.0],
        b: [2.5 - tilt * (h as f64 + 1.0), h as f64],
        polarity: Polarity::Positive,
    };
    sc.direction = -(tilt.atan());
    sc.seed = 4;
    let scene = synth_generate(&sc).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.flow.noise_filter = false;
    let (renders, outcomes) = run_stream(&scene.stream, &cfg).unwrap();
    let accepted: Vec<f64> = outcomes.iter().filter(|o| o.accepted).map(|o| o.event.t).collect();
    let v_n = scene.truth.iter().find_map(|t| t.normal_flow).map(|v| v[0].hypot(v[1])).unwrap();

    let mut ratios = Vec::new();
    let mut disp = Vec::new();
    for pair in renders.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        // settled: edge fully inside and away from the far border
        if a.t < 0.1 || b.t > 0.5 {
            continue;
        }
        let n = accepted.iter().filter(|&&t| t > a.t && t <= b.t).count();
        ratios.push(n as f64 / a.c_tilde as f64);
        disp.push(v_n * a.interval);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (r, d) = (mean(&ratios), mean(&disp));
    let s_bar = cfg.render.s_bar;
    let target = NORM_CONST * s_bar;
    let ratio_ok = (r / target - 1.0).abs() <= 0.15;
    let disp_ok = d >= 0.828 * s_bar * 0.85 && d <= 1.172 * s_bar * 1.15;
    outcome(
        !ratios.is_empty() && ratio_ok && disp_ok,
        format!(
            "events/interval / C~ = {r:.4} (target {target:.4}), displacement {d:.4} px over {} intervals",
            ratios.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn random_bei(rng: &mut ChaCha8Rng, w: u32, h: u32) -> evseg::bei::Bei {
    let mut b = evseg::bei::Bei::empty(w, h, 0.0);
    let p = rng.random_range(0.01..0.4);
    for i in 0..(w * h) as usize {
        if rng.random_bool(p) {
            b.active.data[i] = true;
            b.orientation[i] = rng.random_range(-3.1..3.1);
        }
    }
    b
}

fn clustering_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut violations, mut rises, mut sparse_left, mut adjacent_sparse) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..100 {
        let (w, h) = (rng.random_range(32..80), rng.random_range(32..64));
        let bei = random_bei(&mut rng, w, h);
        let rho = 0.05;
        for rule in [MergeRule::Absorb, MergeRule::Together] {
            let cfg = ClusterConfig {
                merge_rule: rule,
                merge_ratio: rho,
                ..Default::default()
            };
            let seg = segment(&bei, &cfg).unwrap();
            violations += seg.assignments.iter().map(|a| a.neighborhood_violations()).sum::<usize>();
            rises += seg
                .objective
                .windows(2)
                .filter(|p| p[1] > p[0] + 1e-9 * p[0].abs().max(1.0))
                .count();
            let below: Vec<u32> = seg.stats.iter().filter(|s| s.ratio() < rho).map(|s| s.label).collect();
            match rule {
                MergeRule::Absorb => {
                    if seg.stats.len() >= 2 {
                        sparse_left += below.len();
                    }
                }
                MergeRule::Together => {
                    adjacent_sparse += count_adjacent_pairs(&seg.labels, &below);
                }
            }
        }
    }
    outcome(
        violations == 0 && rises == 0 && sparse_left == 0 && adjacent_sparse == 0,
        format!(
            "100 BEIs: {violations} neighborhood violations, {rises} objective increases, \
             {sparse_left} sparse labels left (absorb), {adjacent_sparse} adjacent sparse pairs (together)"
        ),
    )
}

fn count_adjacent_pairs(m: &LabelMap, set: &[u32]) -> usize {
    let mut pairs = std::collections::BTreeSet::new();
    for y in 0..m.height {
        for x in 0..m.width {
            let a = m.get(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < m.width && ny < m.height {
                    let b = m.get(nx, ny);
                    if a != b && set.contains(&a) && set.contains(&b) {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    pairs.len()
}

// ---------------------------------------------------------------- 6

fn pr_oracle(pred: &BinaryMap, gt: &BinaryMap) -> [usize; 4] {
    let (w, h) = (pred.width as i64, pred.height as i64);
    let hit = |m: &BinaryMap, x: i64, y: i64| {
        (-1..=1).any(|dy| {
            (-1..=1).any(|dx| {
                let (nx, ny) = (x + dx, y + dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as u32, ny as u32)
            })
        })
    };
    let mut c = [0usize; 4];
    for y in 0..h {
        for x in 0..w {
            if pred.get(x as u32, y as u32) {
                c[0] += 1;
                c[1] += hit(gt, x, y) as usize;
            }
            if gt.get(x as u32, y as u32) {
                c[2] += 1;
                c[3] += hit(pred, x, y) as usize;
            }
        }
    }
    c
}

fn pr_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..100 {
        let (mut labels, _) = init_grid(32, 32, 8).unwrap();
        let k = rng.random_range(2..12);
        for l in &mut labels.labels {
            *l = rng.random_range(0..k);
        }
        let pred = extract_boundaries(&labels);
        let mut gt = BinaryMap::new(32, 32);
        let p = rng.random_range(0.02..0.3);
        for v in &mut gt.data {
            *v = rng.random_bool(p);
        }
        let r = boundary_pr(&pred, &gt, 1).unwrap();
        if [r.pred, r.matched_pred, r.gt, r.matched_gt] != pr_oracle(&pred, &gt) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/100 random 32x32 pairs differ from the double-loop oracle"))
}

// ---------------------------------------------------------------- 7

fn canny_sanity() -> Outcome {
    let step = GrayImage::from_fn(48, 40, |x, _| if x < 20 { 0.1 } else { 0.9 });
    let e = canny(&step, &CannyConfig::default()).unwrap();
    let mut single = true;
    let mut worst = 0i64;
    for y in 1..39 {
        let xs: Vec<u32> = (0..48).filter(|&x| e.get(x, y)).collect();
        if xs.len() != 1 {
            single = false;
            continue;
        }
        // the step lies between columns 19 and 20
        worst = worst.max((xs[0] as i64 - 19).abs().min((xs[0] as i64 - 20).abs()));
    }
    let flat = canny(&GrayImage::filled(48, 40, 0.5), &CannyConfig::default()).unwrap();
    outcome(
        single && worst <= 1 && flat.count() == 0,
        format!(
            "step: one edge pixel per row = {single}, max offset {worst} px; constant image: {} edge pixels",
            flat.count()
        ),
    )
}

// ---------------------------------------------------------------- 8

fn collect_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "config.txt") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = Config {
            out: tmp.path().join(name),
            seed: 0,
            ..Config::default()
        };
        cmd_pipeline(&cfg).unwrap();
        collect_files(&cfg.out)
    };
    let a = run("a");
    let b = run("b");
    let beis = a.keys().filter(|p| p.starts_with("bei")).count();
    let labels = a.keys().filter(|p| p.to_string_lossy().contains("labels_")).count();
    let differing = a.iter().filter(|(k, v)| b.get(*k) != Some(*v)).count() + b.keys().filter(|k| !a.contains_key(*k)).count();
    outcome(
        differing == 0 && beis > 0 && labels > 0,
        format!("{} files compared ({beis} BEI files, {labels} label files), {differing} differ", a.len()),
    )
}

// ---------------------------------------------------------------- 9

fn dataset_smoke() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = Config {
        out: tmp.path().join("out"),
        width: 240,
        height: 180,
        ..Config::default()
    };
    let source;
    match std::env::var_os("EVSEG_DATASET") {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            let events = dir.join("events.txt");
            // first 2 s of the sequence
            let text = fs::read_to_string(&events).unwrap();
            let mut t0 = None;
            let mut kept = String::new();
            for line in text.lines() {
                let Some(t) = line.split_whitespace().next().and_then(|s| s.parse::<f64>().ok()) else {
                    continue;
                };
                let t0 = *t0.get_or_insert(t);
                if t - t0 > 2.0 {
                    break;
                }
                kept.push_str(line);
                kept.push('\n');
            }
            fs::create_dir_all(&cfg.out).unwrap();
            let excerpt = cfg.out.join("excerpt.txt");
            fs::write(&excerpt, kept).unwrap();
            cfg.events = Some(excerpt);
            cfg.run_eval = false;
            source = format!("dataset {}", dir.display());
        }
        None => {
            cfg.synth_scene = evseg_cli::config::SceneKind::Square;
            cfg.synth_duration = 2.0;
            cfg.synth_speed = 80.0;
            cfg.synth_noise_rate = 0.5;
            cfg.synth_frame_rate = 10.0;
            source = "synthetic 240x180 proxy (EVSEG_DATASET unset)".to_string();
        }
    }
    let summary = match cmd_pipeline(&cfg) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("{source}: pipeline failed: {e:#}")),
    };
    let bei_dir = cfg.out.join("bei");
    let mut fractions = Vec::new();
    for entry in fs::read_dir(&bei_dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("bei_") && name.ends_with(".pgm") {
            let m = BinaryMap::load(&p).unwrap();
            fractions.push(m.count() as f64 / m.data.len() as f64);
        }
    }
    let in_range = fractions.iter().filter(|&&f| f > 0.001 && f < 0.30).count();
    let max_labels = (cfg.width * cfg.height / 4) as usize;
    let labels = summary.superevents.map(|s| s.labels).unwrap_or_default();
    let labels_ok = labels.iter().filter(|&&n| n >= 4 && n <= max_labels).count();
    let rate = summary.process.events_per_second();
    outcome(
        in_range >= 1 && labels_ok >= 1 && rate >= 1e5,
        format!(
            "{source}: {} events, {} BEIs ({in_range} with active fraction in (0.1%, 30%)), \
             {labels_ok}/{} label maps with 4..={max_labels} labels, {rate:.0} events/s",
            summary.process.events,
            fractions.len(),
            labels.len()
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 flow recovery", flow_recovery),
        ("2 plane-fit exactness", plane_exactness),
        ("3 edge thickness", edge_thickness_claims),
        ("4 scheduler normalization", scheduler_normalization),
        ("5 clustering invariants", clustering_invariants),
        ("6 boundary P/R oracle", pr_oracle_equivalence),
        ("7 canny sanity", canny_sanity),
        ("8 determinism", determinism),
        ("9 dataset smoke", dataset_smoke),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
