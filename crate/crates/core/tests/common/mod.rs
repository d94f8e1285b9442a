//! Reference implementations used as oracles by the integration tests.
//!
//! Each one is written from the geometric or algebraic definition rather
//! than the optimized traversal it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ccrl_core::encoder::Observation;
use ccrl_core::gridworld::{Cell, GroundTruthMap};
use ccrl_core::nn::{Block, NetShape, Network, ACTIONS};
use ccrl_core::seeding::{rng_from, Rng};
use rand::Rng as _;

pub const EPS: f64 = 1e-9;

/// What a ray sees according to the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRay {
    pub visited: BTreeSet<(usize, usize)>,
    /// `None` when the ray reaches its range; `Some(None)` for a hit
    /// outside the grid.
    pub hit: Option<Option<(usize, usize)>>,
    pub distance: f64,
}

/// Interval `[t_in, t_out]` during which the ray from the center of
/// `(row, col)` with unit direction `(dx, dy)` lies inside cell `(r, c)`.
fn slab(row: usize, col: usize, dx: f64, dy: f64, r: isize, c: isize) -> (f64, f64) {
    let axis = |origin: f64, d: f64, lo: f64| -> (f64, f64) {
        if d == 0.0 {
            if origin > lo && origin < lo + 1.0 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            }
        } else {
            let a = (lo - origin) / d;
            let b = (lo + 1.0 - origin) / d;
            (a.min(b), a.max(b))
        }
    };
    let (x0, x1) = axis(col as f64 + 0.5, dx, c as f64);
    let (y0, y1) = axis(row as f64 + 0.5, dy, r as f64);
    (x0.max(y0), x1.min(y1))
}

/// Supercover ray casting by brute force over every cell near the grid.
///
/// All cells the ray touches (within [`EPS`]) after leaving the origin are
/// ordered by entry time. Cells touched at the same instant form one group;
/// this happens exactly when the ray crosses a cell corner, and the group is
/// the two side cells. Groups are visited in order: a group containing an
/// occupied cell stops the ray at its entry time, otherwise its cells are
/// recorded as seen. Only cells entered before `max_range` count. When both
/// side cells are walls the one sharing a row with the previous cell is
/// reported as the hit.
pub fn oracle_ray(map: &GroundTruthMap, row: usize, col: usize, angle_degrees: f64, max_range: f64) -> OracleRay {
    let theta = angle_degrees.to_radians();
    let (dx, dy) = (theta.cos(), -theta.sin());
    let (dx, dy) = (snap(dx), snap(dy));
    let mut touched: Vec<(f64, f64, isize, isize)> = Vec::new();
    for r in -1..=map.height() as isize {
        for c in -1..=map.width() as isize {
            if (r, c) == (row as isize, col as isize) {
                continue;
            }
            let (t_in, t_out) = slab(row, col, dx, dy, r, c);
            if t_out + EPS >= t_in && t_in > 0.0 && t_in < max_range {
                touched.push((t_in, t_out, r, c));
            }
        }
    }
    touched.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));

    let mut visited = BTreeSet::new();
    let mut prev_row = row as isize;
    let mut i = 0;
    while i < touched.len() {
        let (t0, t1, _, _) = touched[i];
        let mut j = i + 1;
        while j < touched.len() && (touched[j].0 - t0).abs() <= EPS && (touched[j].1 - t1).abs() <= EPS {
            j += 1;
        }
        let group = &touched[i..j];
        let mut walls: Vec<_> = group.iter().filter(|&&(_, _, r, c)| map.cell_at(r, c) == Cell::Occupied).collect();
        walls.sort_by_key(|&&(_, _, r, _)| r != prev_row);
        let blocked = walls.first().copied();
        if let Some(&(_, _, r, c)) = blocked {
            for &(_, _, gr, gc) in group {
                if map.cell_at(gr, gc) == Cell::Free {
                    visited.insert((gr as usize, gc as usize));
                }
            }
            let inside = r >= 0 && c >= 0 && (r as usize) < map.height() && (c as usize) < map.width();
            return OracleRay {
                visited,
                hit: Some(inside.then_some((r as usize, c as usize))),
                distance: group.iter().map(|g| g.0).fold(f64::INFINITY, f64::min),
            };
        }
        visited.extend(group.iter().map(|&(_, _, r, c)| (r as usize, c as usize)));
        prev_row = group.last().unwrap().2;
        i = j;
    }
    OracleRay { visited, hit: None, distance: max_range }
}

/// Plain trigonometry leaves residues like `cos(90deg) = 6e-17`.
fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Walled `h x w` map with interior cells occupied with probability `p`.
pub fn random_map(rng: &mut Rng, h: usize, w: usize, p: f64) -> GroundTruthMap {
    let mut cells = vec![Cell::Occupied; h * w];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            if !rng.gen_bool(p) {
                cells[r * w + c] = Cell::Free;
            }
        }
    }
    GroundTruthMap::new(h, w, cells).expect("border is walled")
}

/// Nearest-neighbour resize from the sampling-point definition:
/// destination pixel `(i, j)` reads the source pixel containing the
/// point `(i * h / H, j * w / W)`.
pub fn oracle_resize<T: Copy>(input: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = (i as f64 * h as f64 / out_h as f64).floor() as usize;
        for j in 0..out_w {
            let x = (j as f64 * w as f64 / out_w as f64).floor() as usize;
            out.push(input[y * w + x]);
        }
    }
    out
}

/// Advantage as a direct discounted sum of TD errors up to the first
/// episode boundary at or after `t`.
pub fn oracle_gae(
    rewards: &[f64],
    values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let delta = |k: usize| {
        let next = if terminated[k] {
            0.0
        } else if truncated[k] || k + 1 == n {
            bootstrap[k]
        } else {
            values[k + 1]
        };
        rewards[k] + gamma * next - values[k]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                sum += weight * delta(k);
                if terminated[k] || truncated[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Observation with map cells drawn from the three encoder levels and
/// uniform auxiliary entries.
pub fn random_observation(rng: &mut Rng, shape: NetShape) -> Observation<f64> {
    let levels = [0.0, 128.0 / 255.0, 1.0];
    Observation {
        height: shape.height,
        width: shape.width,
        maps: (0..2 * shape.height * shape.width).map(|_| levels[rng.gen_range(0..3)]).collect(),
        aux: (0..shape.aux).map(|_| rng.gen()).collect(),
    }
}

/// Largest relative error between backpropagated and central-difference
/// gradients among the sampled coordinates of one parameter block.
#[derive(Debug, Clone, Copy)]
pub struct BlockCheck {
    pub block: Block,
    pub checked: usize,
    pub max_rel_error: f64,
}

pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely; central
/// differences carry roughly `1e-16 / FD_STEP` of rounding noise.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Checks `backward` against central differences of the scalar loss
/// `sum(w * logits) + sum(u * values)` on a two-observation batch, with
/// random weights, biases and observations drawn from `seed`.
///
/// Coordinates whose perturbation flips any ReLU are resampled, since the
/// loss is not differentiable across the flip.
pub fn gradient_check(seed: u64, per_block: usize) -> Vec<BlockCheck> {
    let mut rng = rng_from(seed);
    let shape = NetShape::default();
    let mut net = Network::<f64>::init(shape, &mut rng);
    for b in Block::ALL.into_iter().filter(|b| b.is_bias()) {
        for x in net.block_mut(b) {
            *x = rng.gen_range(-0.1..0.1);
        }
    }
    let obs: Vec<_> = (0..2).map(|_| random_observation(&mut rng, shape)).collect();
    let batch: Vec<&Observation<f64>> = obs.iter().collect();
    let wl: Vec<f64> = (0..2 * ACTIONS).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let wv: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |net: &Network<f64>| {
        let (out, cache) = net.forward_cached(&batch).unwrap();
        let l = out.logits.iter().zip(&wl).map(|(a, b)| a * b).sum::<f64>()
            + out.values.iter().zip(&wv).map(|(a, b)| a * b).sum::<f64>();
        (l, cache.relu_pattern())
    };
    let (_, cache) = net.forward_cached(&batch).unwrap();
    let pattern = cache.relu_pattern();
    let grads = net.backward(&cache, &wl, &wv);

    let mut out = Vec::new();
    for block in Block::ALL {
        let range = net.layout().range(block);
        let mut check = BlockCheck { block, checked: 0, max_rel_error: 0.0 };
        let mut attempts = 0;
        while check.checked < per_block.min(range.len()) && attempts < 50 * per_block {
            attempts += 1;
            let i = rng.gen_range(range.clone());
            let orig = net.params()[i];
            net.params_mut()[i] = orig + FD_STEP;
            let (lp, pp) = loss(&net);
            net.params_mut()[i] = orig - FD_STEP;
            let (lm, pm) = loss(&net);
            net.params_mut()[i] = orig;
            if pp != pattern || pm != pattern {
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let analytic = grads[i];
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(GRAD_FLOOR);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        out.push(check);
    }
    out
}
