//! Superevents: grid-seeded iterative clustering of a BEI in which every
//! pixel may only join one of the nine grid cells around its own, followed
//! by connectivity enforcement and merging of sparse superevents.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use crate::bei::Bei;
use crate::error::{Error, Result};
use crate::par;
use crate::raster::{self, hsv_to_rgb, BinaryMap, Pgm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Initial grid cell size, px.
    pub cell_size: u32,
    pub iterations: usize,
    /// Compactness m: weight of spatial distance relative to appearance.
    pub compactness: f64,
    /// Weight of the flow-orientation term between active pixels.
    pub orientation_weight: f64,
    /// Superevents with active ratio below this are merged away.
    pub merge_ratio: f64,
    pub merge_rule: MergeRule,
}

/// How superevents below the merge ratio are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeRule {
    /// Sparse superevents merge only with adjacent sparse ones, leaving at
    /// most one sparse region per connected sparse area.
    Together,
    /// Sparse superevents are absorbed by any neighbor until none is sparse
    /// or one label is left.
    Absorb,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            cell_size: 16,
            iterations: 10,
            compactness: 0.5,
            orientation_weight: 0.5,
            merge_ratio: 0.05,
            merge_rule: MergeRule::Together,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size < 2 {
            return Err(Error::Config(format!("cell size must be >= 2, got {}", self.cell_size)));
        }
        if !(self.compactness >= 0.0) || !(self.orientation_weight >= 0.0) {
            return Err(Error::Config("compactness and orientation weight must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.merge_ratio) {
            return Err(Error::Config(format!("merge ratio must be in [0, 1], got {}", self.merge_ratio)));
        }
        Ok(())
    }
}

/// Per-pixel superevent labels. Labels below `cols * rows` are grid cells
/// (`row * cols + col`); larger ids come from splitting a cell's region and
/// remember their originating cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub cell: u32,
    pub cols: u32,
    pub rows: u32,
    pub labels: Vec<u32>,
    /// Originating grid cell of every label id (identity for grid cells).
    pub parents: Vec<u32>,
}

impl LabelMap {
    /// Wraps raw labels, e.g. loaded from a label PGM. Ids beyond the grid
    /// get no known parent cell.
    pub fn from_labels(width: u32, height: u32, cell: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::Dimensions(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        if cell == 0 {
            return Err(Error::Config("cell size must be > 0".into()));
        }
        let (cols, rows) = grid_dims(width, height, cell);
        Ok(LabelMap {
            width,
            height,
            cell,
            cols,
            rows,
            labels,
            parents: (0..cols * rows).collect(),
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn grid_cells(&self) -> u32 {
        self.cols * self.rows
    }

    /// Grid cell containing pixel `(x, y)`.
    #[inline]
    pub fn pixel_cell(&self, x: u32, y: u32) -> (u32, u32) {
        (x / self.cell, y / self.cell)
    }

    pub fn cell_of(&self, label: u32) -> (u32, u32) {
        let c = self.parents.get(label as usize).copied().unwrap_or(label);
        (c % self.cols, c / self.cols)
    }

    /// Distinct labels in ascending order.
    pub fn distinct(&self) -> Vec<u32> {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn label_count(&self) -> usize {
        self.distinct().len()
    }

    /// Pixels whose label's cell is more than one cell away (Chebyshev)
    /// from the pixel's own cell.
    pub fn neighborhood_violations(&self) -> usize {
        let mut n = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                let (pc, pr) = self.pixel_cell(x, y);
                let (lc, lr) = self.cell_of(self.get(x, y));
                if pc.abs_diff(lc) > 1 || pr.abs_diff(lr) > 1 {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn to_pgm(&self) -> Result<Pgm> {
        let samples = self
            .labels
            .iter()
            .map(|&l| {
                u16::try_from(l).map_err(|_| Error::Config(format!("label {l} exceeds 16-bit range")))
            })
            .collect::<Result<Vec<u16>>>()?;
        Ok(Pgm {
            width: self.width,
            height: self.height,
            maxval: 65535,
            samples,
        })
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        raster::write_file(path.as_ref(), &self.to_pgm()?.encode())
    }

    /// Each label gets a stable pseudo-random color.
    pub fn save_color_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut raw = Vec::with_capacity(self.labels.len() * 3);
        for &l in &self.labels {
            let h = (l as f64 * 0.618_033_988_749_895).fract();
            let v = 0.65 + 0.35 * ((l as f64 * 0.377).fract());
            raw.extend_from_slice(&hsv_to_rgb(h, 0.75, v));
        }
        raster::save_png_rgb(path.as_ref(), self.width, self.height, raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub x: f64,
    pub y: f64,
    /// Mean activity in [0, 1].
    pub activity: f64,
    /// Mean orientation unit vector over oriented members.
    pub ux: f64,
    pub uy: f64,
}

fn grid_dims(width: u32, height: u32, cell: u32) -> (u32, u32) {
    (width.div_ceil(cell), height.div_ceil(cell))
}

/// Tiles the image in `cell`-sized squares (edge cells truncated); centroids
/// start at cell centers with zero activity.
pub fn init_grid(width: u32, height: u32, cell: u32) -> Result<(LabelMap, Vec<Centroid>)> {
    if cell < 2 || cell > width.min(height) {
        return Err(Error::Config(format!(
            "cell size {cell} must be in [2, min({width}, {height})]"
        )));
    }
    let (cols, rows) = grid_dims(width, height, cell);
    let mut labels = Vec::with_capacity(width as usize * height as usize);
    for y in 0..height {
        for x in 0..width {
            labels.push((y / cell) * cols + x / cell);
        }
    }
    let mut centroids = Vec::with_capacity((cols * rows) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let x0 = c * cell;
            let x1 = ((c + 1) * cell).min(width);
            let y0 = r * cell;
            let y1 = ((r + 1) * cell).min(height);
            centroids.push(Centroid {
                x: (x0 + x1 - 1) as f64 / 2.0,
                y: (y0 + y1 - 1) as f64 / 2.0,
                activity: 0.0,
                ux: 0.0,
                uy: 0.0,
            });
        }
    }
    let n = cols * rows;
    Ok((
        LabelMap {
            width,
            height,
            cell,
            cols,
            rows,
            labels,
            parents: (0..n).collect(),
        },
        centroids,
    ))
}

#[derive(Debug, Clone, Copy)]
struct PixelFeature {
    activity: f64,
    orient: Option<(f64, f64)>,
}

#[inline]
fn pixel_feature(bei: &Bei, i: usize) -> PixelFeature {
    let on = bei.active.data[i];
    let theta = bei.orientation[i];
    PixelFeature {
        activity: if on { 1.0 } else { 0.0 },
        orient: (on && theta.is_finite()).then(|| {
            let (s, c) = (theta as f64).sin_cos();
            (c, s)
        }),
    }
}

/// Squared distance between a pixel and a centroid.
#[inline]
pub fn distance2(bei: &Bei, x: u32, y: u32, c: &Centroid, cfg: &ClusterConfig, cell: u32) -> f64 {
    let i = y as usize * bei.width() as usize + x as usize;
    let f = pixel_feature(bei, i);
    let da = f.activity - c.activity;
    let mut d = da * da;
    if let Some((ux, uy)) = f.orient {
        let (dx, dy) = (ux - c.ux, uy - c.uy);
        d += cfg.orientation_weight * (dx * dx + dy * dy);
    }
    let k = cfg.compactness / cell as f64;
    let (sx, sy) = (x as f64 - c.x, y as f64 - c.y);
    d + k * k * (sx * sx + sy * sy)
}

/// Candidate labels of the nine cells around `(col, row)` in ascending id.
fn candidates(col: u32, row: u32, cols: u32, rows: u32) -> impl Iterator<Item = u32> {
    let r0 = row.saturating_sub(1);
    let r1 = (row + 1).min(rows - 1);
    let c0 = col.saturating_sub(1);
    let c1 = (col + 1).min(cols - 1);
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| r * cols + c))
}

/// Reassigns every pixel to the nearest centroid among its nine candidate
/// cells; ties go to the smallest label id.
pub fn assign_step(bei: &Bei, labels: &LabelMap, centroids: &[Centroid], cfg: &ClusterConfig) -> LabelMap {
    let mut out = labels.clone();
    let (w, cell, cols, rows) = (labels.width as usize, labels.cell, labels.cols, labels.rows);
    par::for_each_row_mut(&mut out.labels, w, |y, row| {
        for (x, l) in row.iter_mut().enumerate() {
            let (x, y) = (x as u32, y as u32);
            let mut best = (f64::INFINITY, u32::MAX);
            for cand in candidates(x / cell, y / cell, cols, rows) {
                let d = distance2(bei, x, y, &centroids[cand as usize], cfg, cell);
                if d < best.0 {
                    best = (d, cand);
                }
            }
            *l = best.1;
        }
    });
    out.parents = (0..cols * rows).collect();
    out
}

#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    n: f64,
    sx: f64,
    sy: f64,
    sa: f64,
    no: f64,
    sux: f64,
    suy: f64,
}

/// Per-label means over member pixels; labels with no members keep their
/// previous centroid.
pub fn update_centroids(bei: &Bei, labels: &LabelMap, prev: &[Centroid]) -> Vec<Centroid> {
    let k = prev.len();
    let w = labels.width as usize;
    let acc = par::reduce_rows(
        labels.height as usize,
        |y| {
            let mut row = vec![Accum::default(); k];
            for x in 0..w {
                let i = y * w + x;
                let l = labels.labels[i] as usize;
                if l >= k {
                    continue;
                }
                let f = pixel_feature(bei, i);
                let a = &mut row[l];
                a.n += 1.0;
                a.sx += x as f64;
                a.sy += y as f64;
                a.sa += f.activity;
                if let Some((ux, uy)) = f.orient {
                    a.no += 1.0;
                    a.sux += ux;
                    a.suy += uy;
                }
            }
            row
        },
        vec![Accum::default(); k],
        |mut tot, row| {
            for (t, r) in tot.iter_mut().zip(row) {
                t.n += r.n;
                t.sx += r.sx;
                t.sy += r.sy;
                t.sa += r.sa;
                t.no += r.no;
                t.sux += r.sux;
                t.suy += r.suy;
            }
            tot
        },
    );
    acc.iter()
        .zip(prev)
        .map(|(a, p)| {
            if a.n == 0.0 {
                return *p;
            }
            let (ux, uy) = if a.no > 0.0 { (a.sux / a.no, a.suy / a.no) } else { (p.ux, p.uy) };
            Centroid {
                x: a.sx / a.n,
                y: a.sy / a.n,
                activity: a.sa / a.n,
                ux,
                uy,
            }
        })
        .collect()
}

/// Total assignment objective: sum of pixel-to-own-centroid distances.
pub fn objective(bei: &Bei, labels: &LabelMap, centroids: &[Centroid], cfg: &ClusterConfig) -> f64 {
    let w = labels.width as usize;
    par::reduce_rows(
        labels.height as usize,
        |y| {
            (0..w)
                .map(|x| {
                    let l = labels.labels[y * w + x] as usize;
                    distance2(bei, x as u32, y as u32, &centroids[l], cfg, labels.cell)
                })
                .sum::<f64>()
        },
        0.0,
        |a, b| a + b,
    )
}

struct Components {
    /// Component id per pixel, numbered in scan order of first pixel.
    comp: Vec<u32>,
    size: Vec<usize>,
    label: Vec<u32>,
}

fn components_4(map: &LabelMap) -> Components {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut comp = vec![u32::MAX; w * h];
    let mut size = Vec::new();
    let mut label = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = size.len() as u32;
        let l = map.labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut n = 0;
        while let Some(i) = queue.pop_front() {
            n += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if comp[j] == u32::MAX && map.labels[j] == l {
                    comp[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        size.push(n);
        label.push(l);
    }
    Components { comp, size, label }
}

/// Unordered 4-adjacent pixel pairs with differing keys, counted per pair.
fn adjacency_counts(keys: &[u32], w: usize, h: usize) -> HashMap<(u32, u32), usize> {
    let mut m = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            let a = keys[y * w + x];
            if x + 1 < w {
                let b = keys[y * w + x + 1];
                if a != b {
                    *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            if y + 1 < h {
                let b = keys[(y + 1) * w + x];
                if a != b {
                    *m.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
        }
    }
    m
}

/// Makes every label a single 4-connected region. Each label keeps its
/// largest fragment; other fragments of at least `min_size` pixels become
/// new labels and smaller ones join the largest adjacent region.
pub fn enforce_connectivity(map: &LabelMap, min_size: usize) -> LabelMap {
    let (w, h) = (map.width as usize, map.height as usize);
    let comps = components_4(map);
    let n = comps.size.len();

    let mut main: BTreeMap<u32, usize> = BTreeMap::new();
    for c in 0..n {
        let e = main.entry(comps.label[c]).or_insert(c);
        if comps.size[c] > comps.size[*e] {
            *e = c;
        }
    }
    let mut next_id = map.labels.iter().copied().max().unwrap_or(0).max(map.grid_cells().saturating_sub(1)) + 1;
    let mut parents = map.parents.clone();
    // final label per component; None = unresolved orphan
    let mut final_label: Vec<Option<u32>> = vec![None; n];
    for c in 0..n {
        let l = comps.label[c];
        if main[&l] == c {
            final_label[c] = Some(l);
        } else if comps.size[c] >= min_size {
            final_label[c] = Some(next_id);
            let parent = parents.get(l as usize).copied().unwrap_or(l);
            if parents.len() <= next_id as usize {
                parents.resize(next_id as usize + 1, u32::MAX);
            }
            parents[next_id as usize] = parent;
            next_id += 1;
        }
    }

    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (a, b) in adjacency_counts(&comps.comp, w, h).into_keys() {
        neighbors[a as usize].push(b);
        neighbors[b as usize].push(a);
    }
    for nb in &mut neighbors {
        nb.sort_unstable();
    }
    let mut region_size: HashMap<u32, usize> = HashMap::new();
    for c in 0..n {
        if let Some(l) = final_label[c] {
            *region_size.entry(l).or_insert(0) += comps.size[c];
        }
    }
    loop {
        let mut changed = false;
        for c in 0..n {
            if final_label[c].is_some() {
                continue;
            }
            let target = neighbors[c]
                .iter()
                .filter_map(|&nb| final_label[nb as usize])
                .max_by(|a, b| region_size[a].cmp(&region_size[b]).then(b.cmp(a)));
            if let Some(t) = target {
                final_label[c] = Some(t);
                *region_size.get_mut(&t).unwrap() += comps.size[c];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let labels = comps
        .comp
        .iter()
        .map(|&c| final_label[c as usize].unwrap_or(comps.label[c as usize]))
        .collect();
    LabelMap {
        labels,
        parents,
        ..map.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelStats {
    pub label: u32,
    pub pixels: usize,
    pub active: usize,
    pub cx: f64,
    pub cy: f64,
}

impl LabelStats {
    pub fn ratio(&self) -> f64 {
        if self.pixels == 0 {
            0.0
        } else {
            self.active as f64 / self.pixels as f64
        }
    }
}

pub fn label_stats(map: &LabelMap, active: &BinaryMap) -> Vec<LabelStats> {
    let mut acc: BTreeMap<u32, (usize, usize, f64, f64)> = BTreeMap::new();
    let w = map.width as usize;
    for (i, &l) in map.labels.iter().enumerate() {
        let e = acc.entry(l).or_insert((0, 0, 0.0, 0.0));
        e.0 += 1;
        e.1 += active.data[i] as usize;
        e.2 += (i % w) as f64;
        e.3 += (i / w) as f64;
    }
    acc.into_iter()
        .map(|(label, (pixels, act, sx, sy))| LabelStats {
            label,
            pixels,
            active: act,
            cx: sx / pixels as f64,
            cy: sy / pixels as f64,
        })
        .collect()
}

/// Repeatedly merges the sparsest label with active ratio below `rho` into
/// the neighbor sharing the longest boundary (ties to the smaller id), until
/// none remains below `rho` or a single label is left.
pub fn merge_sparse(map: &LabelMap, active: &BinaryMap, rho: f64) -> LabelMap {
    merge_with(map, active, rho, MergeRule::Absorb)
}

/// Like [`merge_sparse`], but a sparse label only merges into an adjacent
/// sparse label. Afterwards no two adjacent labels are both below `rho`.
pub fn merge_sparse_together(map: &LabelMap, active: &BinaryMap, rho: f64) -> LabelMap {
    merge_with(map, active, rho, MergeRule::Together)
}

pub fn merge_with(map: &LabelMap, active: &BinaryMap, rho: f64, rule: MergeRule) -> LabelMap {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut stats: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (i, &l) in map.labels.iter().enumerate() {
        let e = stats.entry(l).or_insert((0, 0));
        e.0 += 1;
        e.1 += active.data[i] as u64;
    }
    let mut boundary: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for ((a, b), n) in adjacency_counts(&map.labels, w, h) {
        *boundary.entry(a).or_default().entry(b).or_insert(0) += n;
        *boundary.entry(b).or_default().entry(a).or_insert(0) += n;
    }
    let mut redirect: HashMap<u32, u32> = HashMap::new();
    let below = |(pixels, act): (u64, u64)| (act as f64) < rho * pixels as f64;

    while stats.len() > 1 {
        // sparsest first; exact rational comparison, ties to smaller id
        let eligible = |l: &u32, n: &u32| rule == MergeRule::Absorb || (l != n && below(stats[n]));
        let pick = stats
            .iter()
            .filter(|(l, s)| below(**s) && boundary.get(l).is_some_and(|b| b.keys().any(|n| eligible(l, n))))
            .min_by(|(la, a), (lb, b)| {
                ((a.1 as u128) * (b.0 as u128))
                    .cmp(&((b.1 as u128) * (a.0 as u128)))
                    .then(la.cmp(lb))
            })
            .map(|(l, _)| *l);
        let Some(src) = pick else { break };
        let dst = boundary[&src]
            .iter()
            .filter(|(n, _)| eligible(&src, n))
            .max_by(|(la, a), (lb, b)| a.cmp(b).then(lb.cmp(la)))
            .map(|(l, _)| *l)
            .unwrap();
        let nbrs = boundary.remove(&src).unwrap_or_default();
        let s = stats.remove(&src).unwrap();
        let d = stats.get_mut(&dst).unwrap();
        d.0 += s.0;
        d.1 += s.1;
        for (nb, n) in nbrs {
            let m = boundary.get_mut(&nb).unwrap();
            m.remove(&src);
            if nb != dst {
                *m.entry(dst).or_insert(0) += n;
                *boundary.get_mut(&dst).unwrap().entry(nb).or_insert(0) += n;
            }
        }
        redirect.insert(src, dst);
    }

    let resolve = |mut l: u32| {
        while let Some(&n) = redirect.get(&l) {
            l = n;
        }
        l
    };
    LabelMap {
        labels: map.labels.iter().map(|&l| resolve(l)).collect(),
        ..map.clone()
    }
}

/// A pixel is a boundary iff its right or bottom neighbor has another label.
pub fn extract_boundaries(map: &LabelMap) -> BinaryMap {
    let (w, h) = (map.width as usize, map.height as usize);
    let mut out = BinaryMap::new(map.width, map.height);
    par::for_each_row_mut(&mut out.data, w, |y, row| {
        for (x, b) in row.iter_mut().enumerate() {
            let l = map.labels[y * w + x];
            *b = (x + 1 < w && map.labels[y * w + x + 1] != l) || (y + 1 < h && map.labels[(y + 1) * w + x] != l);
        }
    });
    out
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Final labels after connectivity and merging.
    pub labels: LabelMap,
    /// Output of the last assignment step.
    pub assignment: LabelMap,
    /// Every assignment step's output, in order.
    pub assignments: Vec<LabelMap>,
    /// Objective after init, then after each assign and update step.
    pub objective: Vec<f64>,
    pub stats: Vec<LabelStats>,
}

pub fn segment(bei: &Bei, cfg: &ClusterConfig) -> Result<Segmentation> {
    cfg.validate()?;
    let (mut labels, mut centroids) = init_grid(bei.width(), bei.height(), cfg.cell_size)?;
    let mut trace = vec![objective(bei, &labels, &centroids, cfg)];
    let mut assignments = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        labels = assign_step(bei, &labels, &centroids, cfg);
        trace.push(objective(bei, &labels, &centroids, cfg));
        centroids = update_centroids(bei, &labels, &centroids);
        trace.push(objective(bei, &labels, &centroids, cfg));
        assignments.push(labels.clone());
    }
    let min_size = (cfg.cell_size as usize).pow(2) / 4;
    let connected = enforce_connectivity(&labels, min_size);
    let merged = merge_with(&connected, &bei.active, cfg.merge_ratio, cfg.merge_rule);
    let stats = label_stats(&merged, &bei.active);
    Ok(Segmentation {
        labels: merged,
        assignment: labels,
        assignments,
        objective: trace,
        stats,
    })
}
