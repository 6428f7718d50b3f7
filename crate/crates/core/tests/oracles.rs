//! Brute-force reference implementations checked against the library.

use std::collections::{BTreeMap, BTreeSet};

use evseg::bei::{estimate_event_rate, render_bei, Bei};
use evseg::eval::{boundary_pr, edge_thickness};
use evseg::event::{Event, Polarity};
use evseg::flow::NormalFlow;
use evseg::lifetime::{LifetimeConfig, LifetimeRecord, LifetimeStore};
use evseg::raster::BinaryMap;
use evseg::superevents::{
    assign_step, distance2, enforce_connectivity, extract_boundaries, init_grid, merge_sparse,
    update_centroids, ClusterConfig, LabelMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(rng: &mut ChaCha8Rng, w: u32, h: u32, p: f64) -> BinaryMap {
    let mut m = BinaryMap::new(w, h);
    for v in &mut m.data {
        *v = rng.random_bool(p);
    }
    m
}

fn random_bei(rng: &mut ChaCha8Rng, w: u32, h: u32, p: f64) -> Bei {
    let mut b = Bei::empty(w, h, 0.0);
    for i in 0..(w * h) as usize {
        if rng.random_bool(p) {
            b.active.data[i] = true;
            b.orientation[i] = rng.random_range(-3.1..3.1);
        }
    }
    b
}

fn pr_oracle(pred: &BinaryMap, gt: &BinaryMap) -> (usize, usize, usize, usize) {
    let (w, h) = (pred.width as i64, pred.height as i64);
    let near = |m: &BinaryMap, x: i64, y: i64| {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as u32, ny as u32) {
                    return true;
                }
            }
        }
        false
    };
    let (mut np, mut mp, mut ng, mut mg) = (0, 0, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if pred.get(x as u32, y as u32) {
                np += 1;
                mp += near(gt, x, y) as usize;
            }
            if gt.get(x as u32, y as u32) {
                ng += 1;
                mg += near(pred, x, y) as usize;
            }
        }
    }
    (np, mp, ng, mg)
}

#[test]
fn boundary_pr_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let pred = random_map(&mut rng, 32, 32, 0.1);
        let gt = random_map(&mut rng, 32, 32, 0.1);
        let r = boundary_pr(&pred, &gt, 1).unwrap();
        assert_eq!((r.pred, r.matched_pred, r.gt, r.matched_gt), pr_oracle(&pred, &gt));
    }
}

fn grid_map(rng: &mut ChaCha8Rng, w: u32, h: u32, cell: u32, k: u32) -> LabelMap {
    let (mut m, _) = init_grid(w, h, cell).unwrap();
    for l in &mut m.labels {
        *l = rng.random_range(0..k);
    }
    m
}

#[test]
fn boundaries_match_neighbor_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let m = grid_map(&mut rng, 24, 20, 4, 4);
        let b = extract_boundaries(&m);
        for y in 0..m.height {
            for x in 0..m.width {
                let l = m.get(x, y);
                let want = (x + 1 < m.width && m.get(x + 1, y) != l) || (y + 1 < m.height && m.get(x, y + 1) != l);
                assert_eq!(b.get(x, y), want);
            }
        }
    }
}

#[test]
fn centroids_match_direct_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let bei = random_bei(&mut rng, 16, 16, 0.3);
    let (_, prev) = init_grid(16, 16, 4).unwrap();
    let labels = grid_map(&mut rng, 16, 16, 4, 16);
    let got = update_centroids(&bei, &labels, &prev);
    for (l, c) in got.iter().enumerate() {
        let members: Vec<(u32, u32)> = (0..16u32)
            .flat_map(|y| (0..16u32).map(move |x| (x, y)))
            .filter(|&(x, y)| labels.get(x, y) == l as u32)
            .collect();
        if members.is_empty() {
            assert_eq!(*c, prev[l]);
            continue;
        }
        let n = members.len() as f64;
        let mx = members.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let my = members.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let ma = members.iter().filter(|p| bei.active.get(p.0, p.1)).count() as f64 / n;
        assert!((c.x - mx).abs() < 1e-12 && (c.y - my).abs() < 1e-12);
        assert!((c.activity - ma).abs() < 1e-12);
    }
}

#[test]
fn assignment_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = ClusterConfig::default();
    let bei = random_bei(&mut rng, 32, 32, 0.2);
    let (grid, mut cents) = init_grid(32, 32, 8).unwrap();
    for c in &mut cents {
        c.activity = rng.random_range(0.0..1.0);
        let a: f64 = rng.random_range(-3.0..3.0);
        c.ux = a.cos();
        c.uy = a.sin();
    }
    let got = assign_step(&bei, &grid, &cents, &cfg);
    for y in 0..32u32 {
        for x in 0..32u32 {
            let (pc, pr) = (x / 8, y / 8);
            let mut best = (f64::INFINITY, u32::MAX);
            for l in 0..cents.len() as u32 {
                let (lc, lr) = (l % 4, l / 4);
                if lc.abs_diff(pc) > 1 || lr.abs_diff(pr) > 1 {
                    continue;
                }
                let d = distance2(&bei, x, y, &cents[l as usize], &cfg, 8);
                if d < best.0 {
                    best = (d, l);
                }
            }
            assert_eq!(got.get(x, y), best.1, "pixel ({x}, {y})");
        }
    }
}

#[test]
fn straddling_blob_unifies() {
    let mut bei = Bei::empty(32, 32, 0.0);
    // 8 columns in the left cell, 2 in the right one
    for y in 4..10 {
        for x in 8..18 {
            bei.active.set(x, y, true);
        }
    }
    let cfg = ClusterConfig {
        compactness: 0.1,
        orientation_weight: 0.0,
        ..Default::default()
    };
    let (mut labels, mut cents) = init_grid(32, 32, 16).unwrap();
    for _ in 0..3 {
        labels = assign_step(&bei, &labels, &cents, &cfg);
        cents = update_centroids(&bei, &labels, &cents);
    }
    let blob: BTreeSet<u32> = (4..10).flat_map(|y| (8..18).map(move |x| (x, y))).map(|(x, y)| labels.get(x, y)).collect();
    assert_eq!(blob.len(), 1, "{blob:?}");
}

fn components(m: &LabelMap) -> usize {
    let (w, h) = (m.width as usize, m.height as usize);
    let mut seen = vec![false; w * h];
    let mut n = 0;
    for s in 0..w * h {
        if seen[s] {
            continue;
        }
        n += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut nb = vec![];
            if x > 0 {
                nb.push(i - 1);
            }
            if x + 1 < w {
                nb.push(i + 1);
            }
            if y > 0 {
                nb.push(i - w);
            }
            if y + 1 < h {
                nb.push(i + w);
            }
            for j in nb {
                if !seen[j] && m.labels[j] == m.labels[i] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    n
}

#[test]
fn connectivity_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..30 {
        let m = grid_map(&mut rng, 20, 20, 4, 6);
        let out = enforce_connectivity(&m, 4);
        assert_eq!(components(&out), out.label_count());
    }
}

/// Same merge rule as the library, recomputing every statistic from pixels.
fn merge_oracle(m: &LabelMap, active: &BinaryMap, rho: f64) -> Vec<u32> {
    let (w, h) = (m.width as usize, m.height as usize);
    let mut labels = m.labels.clone();
    loop {
        let mut stats: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            let e = stats.entry(l).or_default();
            e.0 += 1;
            e.1 += active.data[i] as u64;
        }
        if stats.len() < 2 {
            return labels;
        }
        let mut border: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for y in 0..h {
            for x in 0..w {
                let a = labels[y * w + x];
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx < w && ny < h {
                        let b = labels[ny * w + nx];
                        if a != b {
                            *border.entry((a, b)).or_default() += 1;
                            *border.entry((b, a)).or_default() += 1;
                        }
                    }
                }
            }
        }
        let mut best: Option<(f64, u32)> = None;
        for (&l, &(p, a)) in &stats {
            let r = a as f64 / p as f64;
            if r < rho && best.is_none_or(|(br, _)| r < br) {
                best = Some((r, l));
            }
        }
        let Some((_, src)) = best else { return labels };
        let mut dst: Option<(usize, u32)> = None;
        for (&(a, b), &n) in &border {
            if a == src && dst.is_none_or(|(bn, bl)| n > bn || (n == bn && b < bl)) {
                dst = Some((n, b));
            }
        }
        let dst = dst.unwrap().1;
        for l in &mut labels {
            if *l == src {
                *l = dst;
            }
        }
    }
}

#[test]
fn merge_matches_iterative_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        // 8x8 grid of 4-px cells, alternating sparse and dense
        let (m, _) = init_grid(32, 32, 4).unwrap();
        let mut active = BinaryMap::new(32, 32);
        for y in 0..32u32 {
            for x in 0..32u32 {
                let dense = ((x / 4) + (y / 4)) % 2 == 0;
                let p = if dense { 0.5 } else { 0.03 };
                active.set(x, y, rng.random_bool(p));
            }
        }
        let rho = rng.random_range(0.0..0.3);
        let got = merge_sparse(&m, &active, rho);
        assert_eq!(got.labels, merge_oracle(&m, &active, rho));
    }
}

fn flow_with(speed: f64, orientation: f64) -> NormalFlow {
    let (s, c) = orientation.sin_cos();
    let g = 1.0 / speed;
    NormalFlow {
        grad: [c * g, s * g],
        v_perp: [c * speed, s * speed],
        speed,
        orientation,
    }
}

#[test]
fn render_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = LifetimeConfig::default();
    let mut store = LifetimeStore::new(12, 12);
    let mut recs: Vec<(Event, LifetimeRecord)> = vec![];
    let mut t = 0.0;
    for _ in 0..300 {
        t += rng.random_range(0.0..1e-3);
        let p = if rng.random_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
        let e = Event::new(rng.random_range(0..12), rng.random_range(0..12), t, p);
        let f = flow_with(rng.random_range(20.0..500.0), rng.random_range(-3.0..3.0));
        let rec = LifetimeRecord::from_flow(&e, &f, &cfg).unwrap();
        store.insert_and_reset(&e, rec, &cfg);
        recs.push((e, rec));
    }
    for q in [t * 0.5, t * 0.9, t] {
        let bei = render_bei(&store, q);
        for y in 0..12 {
            for x in 0..12 {
                let want = Polarity::BOTH.iter().any(|&p| store.get(p, x, y).is_some_and(|r| r.birth <= q && q < r.birth + r.tau_eff_bei));
                assert_eq!(bei.active.get(x, y), want);
            }
        }
    }
}

#[test]
fn rate_is_window_count() {
    let times: Vec<f64> = (0..100).map(|i| i as f64 * 1e-3).collect();
    assert!((estimate_event_rate(&times, 0.05, 0.01) - 1000.0).abs() < 1e-9);
}

#[test]
fn thickness_of_diagonal_line() {
    let mut m = BinaryMap::new(20, 20);
    for i in 0..20 {
        m.set(i, i, true);
    }
    assert_eq!(edge_thickness(&m, 9), Some(1.0));
}

