//! Evaluation: Canny edges on intensity frames, tolerance-based boundary
//! precision/recall, edge thickness, and frame alignment.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{BinaryMap, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyConfig {
    pub sigma: f64,
    /// Hysteresis thresholds as fractions of the maximum gradient magnitude.
    pub low: f64,
    pub high: f64,
}

impl Default for CannyConfig {
    fn default() -> Self {
        CannyConfig {
            sigma: 1.4,
            low: 0.15,
            high: 0.45,
        }
    }
}

impl CannyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("canny sigma must be >= 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.low) || !(0.0..=1.0).contains(&self.high) || self.low > self.high {
            return Err(Error::Config(format!(
                "canny thresholds must satisfy 0 <= low <= high <= 1, got {} / {}",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i32;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

#[inline]
fn clamp_idx(i: i64, n: u32) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return img.clone();
    }
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width, img.height);
    let mut tmp = GrayImage::new(w, h);
    par::for_each_row_mut(&mut tmp.data, w as usize, |y, row| {
        let src = &img.data[y * w as usize..(y + 1) * w as usize];
        for (x, out) in row.iter_mut().enumerate() {
            *out = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * src[clamp_idx(x as i64 + j as i64 - r, w)])
                .sum();
        }
    });
    let mut out = GrayImage::new(w, h);
    par::for_each_row_mut(&mut out.data, w as usize, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * tmp.data[clamp_idx(y as i64 + j as i64 - r, h) * w as usize + x])
                .sum();
        }
    });
    out
}

/// Sobel gradients `(gx, gy)` with replicated borders.
pub fn sobel(img: &GrayImage) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width, img.height);
    let at = |x: i64, y: i64| img.data[clamp_idx(y, h) * w as usize + clamp_idx(x, w)];
    let g: Vec<(f32, f32)> = par::map_range(w as usize * h as usize, |i| {
        let (x, y) = ((i % w as usize) as i64, (i / w as usize) as i64);
        let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
        let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
            - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        (gx, gy)
    });
    g.into_iter().unzip()
}

/// Canny edge detector producing a one-pixel-wide binary edge map.
pub fn canny(img: &GrayImage, cfg: &CannyConfig) -> Result<BinaryMap> {
    cfg.validate()?;
    let (w, h) = (img.width as usize, img.height as usize);
    let mut out = BinaryMap::new(img.width, img.height);
    if w < 3 || h < 3 {
        return Ok(out);
    }
    let blurred = gaussian_blur(img, cfg.sigma);
    let (gx, gy) = sobel(&blurred);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = mag.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Ok(out);
    }

    // non-maximum suppression; >= on one side and > on the other so that a
    // plateau two pixels wide keeps exactly one
    let mut thin = vec![0.0f32; w * h];
    par::for_each_row_mut(&mut thin, w, |y, row| {
        if y == 0 || y + 1 == h {
            return;
        }
        for x in 1..w - 1 {
            let i = y * w + x;
            let m = mag[i];
            if m <= 0.0 {
                continue;
            }
            let angle = (gy[i] as f64).atan2(gx[i] as f64).to_degrees().rem_euclid(180.0);
            let (dx, dy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let fwd = mag[((y as isize + dy) as usize) * w + (x as isize + dx) as usize];
            let back = mag[((y as isize - dy) as usize) * w + (x as isize - dx) as usize];
            if m >= fwd && m > back {
                row[x] = m;
            }
        }
    });

    let high = (cfg.high * max as f64) as f32;
    let low = (cfg.low * max as f64) as f32;
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] > high).collect();
    for &i in &stack {
        out.data[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = (i % w, i / w);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let j = ny * w + nx;
                if !out.data[j] && thin[j] > low {
                    out.data[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    Ok(out)
}

/// Binary dilation by a `(2r+1) x (2r+1)` square.
pub fn dilate(map: &BinaryMap, radius: u32) -> BinaryMap {
    if radius == 0 {
        return map.clone();
    }
    let (w, h) = (map.width as usize, map.height as usize);
    let r = radius as usize;
    let mut horiz = BinaryMap::new(map.width, map.height);
    par::for_each_row_mut(&mut horiz.data, w, |y, row| {
        let src = &map.data[y * w..(y + 1) * w];
        for (x, o) in row.iter_mut().enumerate() {
            *o = src[x.saturating_sub(r)..=(x + r).min(w - 1)].iter().any(|&v| v);
        }
    });
    let mut out = BinaryMap::new(map.width, map.height);
    par::for_each_row_mut(&mut out.data, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = (y.saturating_sub(r)..=(y + r).min(h - 1)).any(|yy| horiz.data[yy * w + x]);
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrResult {
    pub precision: f64,
    pub recall: f64,
    /// Predicted boundary pixels with a ground-truth pixel within tolerance.
    pub matched_pred: usize,
    pub pred: usize,
    /// Ground-truth pixels with a predicted pixel within tolerance.
    pub matched_gt: usize,
    pub gt: usize,
}

impl PrResult {
    pub fn f_measure(&self) -> f64 {
        let s = self.precision + self.recall;
        if s == 0.0 {
            0.0
        } else {
            2.0 * self.precision * self.recall / s
        }
    }
}

/// Boundary precision and recall where a pixel counts as matched if the
/// other map has a pixel within Chebyshev distance `radius`.
///
/// Empty maps: both empty gives (1, 1); empty prediction gives (1, 0);
/// empty ground truth gives (0, 1).
pub fn boundary_pr(pred: &BinaryMap, gt: &BinaryMap, radius: u32) -> Result<PrResult> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(Error::Dimensions(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let gt_d = dilate(gt, radius);
    let pred_d = dilate(pred, radius);
    let count = |a: &BinaryMap, b: &BinaryMap| {
        par::reduce_rows(
            a.height as usize,
            |y| {
                let w = a.width as usize;
                let (mut n, mut m) = (0usize, 0usize);
                for i in y * w..(y + 1) * w {
                    if a.data[i] {
                        n += 1;
                        m += b.data[i] as usize;
                    }
                }
                (n, m)
            },
            (0, 0),
            |x, y| (x.0 + y.0, x.1 + y.1),
        )
    };
    let (n_pred, m_pred) = count(pred, &gt_d);
    let (n_gt, m_gt) = count(gt, &pred_d);
    let (precision, recall) = match (n_pred, n_gt) {
        (0, 0) => (1.0, 1.0),
        (0, _) => (1.0, 0.0),
        (_, 0) => (0.0, 1.0),
        _ => (m_pred as f64 / n_pred as f64, m_gt as f64 / n_gt as f64),
    };
    Ok(PrResult {
        precision,
        recall,
        matched_pred: m_pred,
        pred: n_pred,
        matched_gt: m_gt,
        gt: n_gt,
    })
}

/// Mean length of the maximal runs of active pixels along every row and
/// column. Runs longer than `max_run` cross filled regions or run along an
/// edge and are left out. `None` if no run qualifies.
pub fn edge_thickness(map: &BinaryMap, max_run: u32) -> Option<f64> {
    let (w, h) = (map.width as usize, map.height as usize);
    let (mut sum, mut n) = (0u64, 0u64);
    let mut tally = |len: usize| {
        if len > 0 && len <= max_run as usize {
            sum += len as u64;
            n += 1;
        }
    };
    for y in 0..h {
        let mut len = 0;
        for x in 0..w {
            if map.data[y * w + x] {
                len += 1;
            } else {
                tally(len);
                len = 0;
            }
        }
        tally(len);
    }
    for x in 0..w {
        let mut len = 0;
        for y in 0..h {
            if map.data[y * w + x] {
                len += 1;
            } else {
                tally(len);
                len = 0;
            }
        }
        tally(len);
    }
    (n > 0).then(|| sum as f64 / n as f64)
}

/// Index of the frame timestamp nearest to `t`; ties go to the earlier frame.
/// `times` must be sorted.
pub fn align_frame(times: &[f64], t: f64) -> Result<usize> {
    if times.is_empty() {
        return Err(Error::Config("no frames to align against".into()));
    }
    let k = times.partition_point(|&ft| ft < t);
    if k == 0 {
        return Ok(0);
    }
    if k == times.len() {
        return Ok(k - 1);
    }
    Ok(if t - times[k - 1] <= times[k] - t { k - 1 } else { k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameEntry {
    pub t: f64,
    pub path: PathBuf,
}

/// Reads an image manifest: one `timestamp path` per line, paths relative to
/// the manifest's directory. Blank lines and `#` comments are skipped.
pub fn read_frame_manifest(path: impl AsRef<Path>) -> Result<Vec<FrameEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<FrameEntry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(ts), Some(file)) = (it.next(), it.next()) else {
            return Err(Error::Parse {
                line: n + 1,
                msg: "expected `timestamp path`".into(),
            });
        };
        let t: f64 = ts.parse().map_err(|_| Error::Parse {
            line: n + 1,
            msg: format!("bad timestamp {ts:?}"),
        })?;
        if out.last().is_some_and(|p| t < p.t) {
            return Err(Error::Parse {
                line: n + 1,
                msg: "frame timestamps must be non-decreasing".into(),
            });
        }
        out.push(FrameEntry { t, path: base.join(file) });
    }
    Ok(out)
}
