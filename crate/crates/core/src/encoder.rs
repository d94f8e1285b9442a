//! Fixed-shape observation encoding.
//!
//! Channel 0 is the local egocentric map (LEM): an `H x W` belief window
//! centered on the agent. Channel 1 is the global exploration map (GEM): the
//! explored bounding box binarized, nearest-neighbour resized to `H x W`, with
//! a `D x D` agent marker. The auxiliary vector carries normalized lidar
//! ranges followed by the normalized compass heading.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::Pose;
use crate::scalar::Scalar;
use crate::sensor::{BBox, BeliefMap, Knowledge, LidarConfig, LidarScan};

pub const UNKNOWN_LEVEL: f64 = 128.0 / 255.0;
pub const MARKER_LEVEL: f64 = 128.0 / 255.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("nothing explored")]
    NothingExplored,
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub height: usize,
    pub width: usize,
    /// Side length of the agent marker stamped into the GEM.
    pub marker: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { height: 24, width: 24, marker: 3 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.marker == 0 || self.height < self.marker || self.width < self.marker {
            return Err(EncodeError::InvalidConfig(format!(
                "need H, W >= D >= 1, got H={} W={} D={}",
                self.height, self.width, self.marker
            )));
        }
        Ok(())
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Network input: a `2 x H x W` map stack and an auxiliary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub height: usize,
    pub width: usize,
    /// Channel-major: `maps[ch * H * W + i * W + j]`.
    pub maps: Vec<T>,
    pub aux: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    pub fn lem(&self) -> &[T] {
        &self.maps[..self.height * self.width]
    }

    pub fn gem(&self) -> &[T] {
        &self.maps[self.height * self.width..]
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.maps.iter().chain(self.aux.iter()).copied()
    }

    /// The heading entry of the auxiliary vector.
    pub fn orientation(&self) -> T {
        *self.aux.last().expect("aux vector always carries the heading")
    }
}

fn knowledge_level<T: Scalar>(k: Knowledge) -> T {
    match k {
        Knowledge::Occupied => T::one(),
        Knowledge::Unknown => T::of(UNKNOWN_LEVEL),
        Knowledge::Free => T::zero(),
    }
}

/// Belief window centered on the agent (agent at `(H/2, W/2)`); cells off
/// the map read as occupied.
pub fn extract_lem<T: Scalar>(belief: &BeliefMap, pose: Pose, cfg: &EncoderConfig) -> Vec<T> {
    let mut out = vec![T::one(); cfg.plane()];
    let top = pose.row as isize - (cfg.height / 2) as isize;
    let left = pose.col as isize - (cfg.width / 2) as isize;
    for i in 0..cfg.height {
        let r = top + i as isize;
        if r < 0 || r as usize >= belief.height() {
            continue;
        }
        for j in 0..cfg.width {
            let c = left + j as isize;
            if c < 0 || c as usize >= belief.width() {
                continue;
            }
            out[i * cfg.width + j] = knowledge_level(belief.get(r as usize, c as usize));
        }
    }
    out
}

pub fn explored_bbox(belief: &BeliefMap) -> Result<BBox, EncodeError> {
    belief.bbox().ok_or(EncodeError::NothingExplored)
}

/// `out(i, j) = input(floor(i*h/H), floor(j*w/W))`.
pub fn nearest_resize<T: Copy>(input: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    assert!(h >= 1 && w >= 1, "resize source must be non-empty");
    assert_eq!(input.len(), h * w, "input does not match {h}x{w}");
    let cols: Vec<usize> = (0..out_w).map(|j| j * w / out_w).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let src = i * h / out_h;
        out.extend(cols.iter().map(|&c| input[src * w + c]));
    }
    out
}

/// Top-left corner of the marker block centered on `center`, shifted so the
/// whole block stays inside `[0, extent)`.
fn marker_origin(center: usize, marker: usize, extent: usize) -> usize {
    center.saturating_sub(marker / 2).min(extent - marker)
}

pub fn extract_gem<T: Scalar>(belief: &BeliefMap, pose: Pose, cfg: &EncoderConfig) -> Result<Vec<T>, EncodeError> {
    let bbox = explored_bbox(belief)?;
    let (bh, bw) = (bbox.height(), bbox.width());
    let mut crop = Vec::with_capacity(bh * bw);
    for r in bbox.row_min..=bbox.row_max {
        for c in bbox.col_min..=bbox.col_max {
            let explored = belief.get(r, c) != Knowledge::Unknown;
            crop.push(if explored { T::one() } else { T::zero() });
        }
    }
    let mut out = nearest_resize(&crop, bh, bw, cfg.height, cfg.width);

    let rel_r = pose.row.saturating_sub(bbox.row_min);
    let rel_c = pose.col.saturating_sub(bbox.col_min);
    let center_r = (rel_r * cfg.height / bh).min(cfg.height - 1);
    let center_c = (rel_c * cfg.width / bw).min(cfg.width - 1);
    let r0 = marker_origin(center_r, cfg.marker, cfg.height);
    let c0 = marker_origin(center_c, cfg.marker, cfg.width);
    let mark = T::of(MARKER_LEVEL);
    for i in r0..r0 + cfg.marker {
        for j in c0..c0 + cfg.marker {
            out[i * cfg.width + j] = mark;
        }
    }
    Ok(out)
}

/// Normalized ranges followed by `heading_degrees / 360`.
pub fn aux_vector<T: Scalar>(scan: &LidarScan, pose: Pose, lidar: &LidarConfig) -> Vec<T> {
    let mut aux: Vec<T> = scan.ranges.iter().map(|&r| T::of((r / lidar.max_range).clamp(0.0, 1.0))).collect();
    aux.push(T::of(pose.heading.degrees() as f64 / 360.0));
    aux
}

pub fn build_observation<T: Scalar>(
    belief: &BeliefMap,
    pose: Pose,
    scan: &LidarScan,
    cfg: &EncoderConfig,
    lidar: &LidarConfig,
) -> Result<Observation<T>, EncodeError> {
    let mut maps = extract_lem(belief, pose, cfg);
    maps.extend(extract_gem::<T>(belief, pose, cfg)?);
    Ok(Observation { height: cfg.height, width: cfg.width, maps, aux: aux_vector(scan, pose, lidar) })
}

/// Rotates a square-or-not plane clockwise by one quarter turn.
fn rotate_plane_cw<T: Copy>(plane: &[T], h: usize, w: usize) -> Vec<T> {
    // result is w x h; new (i, j) = old (h-1-j, i)
    let mut out = Vec::with_capacity(h * w);
    for i in 0..w {
        for j in 0..h {
            out.push(plane[(h - 1 - j) * w + i]);
        }
    }
    out
}

/// Rotates both map channels clockwise by `k` quarter turns and advances the
/// heading entry by `k / 4` (mod 1). Lidar entries are egocentric and stay.
pub fn rotate_observation<T: Scalar>(obs: &Observation<T>, k: usize) -> Observation<T> {
    let k = k % 4;
    if k == 0 {
        return obs.clone();
    }
    let (mut h, mut w) = (obs.height, obs.width);
    let plane = h * w;
    let mut lem = obs.maps[..plane].to_vec();
    let mut gem = obs.maps[plane..].to_vec();
    for _ in 0..k {
        lem = rotate_plane_cw(&lem, h, w);
        gem = rotate_plane_cw(&gem, h, w);
        std::mem::swap(&mut h, &mut w);
    }
    lem.extend(gem);
    let mut aux = obs.aux.clone();
    if let Some(last) = aux.last_mut() {
        // Headings are multiples of a quarter, so the sum stays exact.
        let quarters = (last.as_f64() * 4.0).round() as usize;
        *last = T::of(((quarters + k) % 4) as f64 / 4.0);
    }
    Observation { height: h, width: w, maps: lem, aux }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_map, GroundTruthMap, Heading};
    use crate::sensor::{integrate_scan, scan};

    fn room(n: usize) -> GroundTruthMap {
        let mut text = format!("GRIDMAP v1\n{n} {n}\n");
        for r in 0..n {
            for c in 0..n {
                let wall = r == 0 || c == 0 || r + 1 == n || c + 1 == n;
                text.push(if wall { '#' } else { '.' });
            }
            text.push('\n');
        }
        load_map(&text).unwrap()
    }

    fn fully_known(map: &GroundTruthMap) -> BeliefMap {
        let mut b = BeliefMap::for_map(map);
        for r in 0..map.height() {
            for c in 0..map.width() {
                let k = match map.cell(r, c) {
                    crate::gridworld::Cell::Free => Knowledge::Free,
                    crate::gridworld::Cell::Occupied => Knowledge::Occupied,
                };
                b.mark(r, c, k);
            }
        }
        b
    }

    #[test]
    fn lem_of_centered_agent_on_known_map_is_the_map() {
        let map = room(24);
        let belief = fully_known(&map);
        let pose = Pose::new(12, 12, Heading::North);
        let lem: Vec<f64> = extract_lem(&belief, pose, &EncoderConfig::default());
        for i in 0..24 {
            for j in 0..24 {
                let expect = if map.cell(i, j) == crate::gridworld::Cell::Occupied { 1.0 } else { 0.0 };
                assert_eq!(lem[i * 24 + j], expect);
            }
        }
    }

    #[test]
    fn lem_pads_outside_with_occupied() {
        let map = room(24);
        let belief = BeliefMap::for_map(&map);
        let lem: Vec<f64> = extract_lem(&belief, Pose::new(1, 1, Heading::North), &EncoderConfig::default());
        // Rows/cols 0..11 of the window are off-map.
        for i in 0..24 {
            for j in 0..24 {
                let v = lem[i * 24 + j];
                if i < 11 || j < 11 {
                    assert_eq!(v, 1.0);
                } else {
                    assert_eq!(v, UNKNOWN_LEVEL);
                }
            }
        }
    }

    #[test]
    fn bbox_examples() {
        let mut b = BeliefMap::new(8, 8);
        assert_eq!(explored_bbox(&b), Err(EncodeError::NothingExplored));
        b.mark(3, 5, Knowledge::Free);
        assert_eq!(explored_bbox(&b).unwrap(), BBox { row_min: 3, col_min: 5, row_max: 3, col_max: 5 });
        let mut b = BeliefMap::new(8, 8);
        b.mark(1, 1, Knowledge::Free);
        b.mark(4, 6, Knowledge::Occupied);
        assert_eq!(explored_bbox(&b).unwrap(), BBox { row_min: 1, col_min: 1, row_max: 4, col_max: 6 });
    }

    #[test]
    fn resize_integer_ratio_duplicates_blocks() {
        let input: Vec<u32> = (0..144).collect();
        let out = nearest_resize(&input, 12, 12, 24, 24);
        for i in 0..24 {
            for j in 0..24 {
                assert_eq!(out[i * 24 + j], input[(i / 2) * 12 + j / 2]);
            }
        }
        assert_eq!(nearest_resize(&out, 24, 24, 24, 24), out);
    }

    #[test]
    fn gem_saturated_with_centered_marker() {
        let map = room(24);
        let belief = fully_known(&map);
        let gem: Vec<f64> = extract_gem(&belief, Pose::new(12, 12, Heading::North), &EncoderConfig::default()).unwrap();
        let marked: Vec<usize> = (0..576).filter(|&i| gem[i] == MARKER_LEVEL).collect();
        assert_eq!(marked.len(), 9);
        for i in 11..14 {
            for j in 11..14 {
                assert_eq!(gem[i * 24 + j], MARKER_LEVEL);
            }
        }
        assert_eq!(gem.iter().filter(|&&v| v == 1.0).count(), 576 - 9);
    }

    #[test]
    fn gem_marker_is_clamped_at_corner() {
        let map = room(24);
        let belief = fully_known(&map);
        let cfg = EncoderConfig::default();
        let gem: Vec<f64> = extract_gem(&belief, Pose::new(0, 0, Heading::North), &cfg).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gem[i * 24 + j], MARKER_LEVEL);
            }
        }
        let gem: Vec<f64> = extract_gem(&belief, Pose::new(23, 23, Heading::North), &cfg).unwrap();
        for i in 21..24 {
            for j in 21..24 {
                assert_eq!(gem[i * 24 + j], MARKER_LEVEL);
            }
        }
        assert_eq!(gem.iter().filter(|&&v| v == MARKER_LEVEL).count(), 9);
    }

    #[test]
    fn gem_marker_scales_with_bbox() {
        // Known 12x12 block at rows/cols 2..=13; agent at bbox-relative (3,3).
        let mut belief = BeliefMap::new(20, 20);
        for r in 2..14 {
            for c in 2..14 {
                belief.mark(r, c, Knowledge::Free);
            }
        }
        let gem: Vec<f64> = extract_gem(&belief, Pose::new(5, 5, Heading::North), &EncoderConfig::default()).unwrap();
        for i in 5..8 {
            for j in 5..8 {
                assert_eq!(gem[i * 24 + j], MARKER_LEVEL, "pixel ({i},{j})");
            }
        }
        assert_eq!(gem[4 * 24 + 6], 1.0);
    }

    #[test]
    fn observation_aux_layout() {
        let map = room(40);
        let pose = Pose::new(20, 20, Heading::West);
        let lidar = LidarConfig::default();
        let s = scan(&map, pose, &lidar);
        let mut belief = BeliefMap::for_map(&map);
        integrate_scan(&mut belief, &map, pose, &s);
        let obs: Observation<f64> = build_observation(&belief, pose, &s, &EncoderConfig::default(), &lidar).unwrap();
        assert_eq!(obs.aux.len(), 32);
        assert!(obs.aux[..31].iter().all(|&v| v == 1.0));
        assert_eq!(obs.orientation(), 0.75);
        assert_eq!(obs.maps.len(), 2 * 576);
        assert!(obs.values().all(|v| (0.0..=1.0).contains(&v)));

        let north = Pose::new(20, 20, Heading::North);
        let s = scan(&map, north, &lidar);
        let obs: Observation<f32> = build_observation(&belief, north, &s, &EncoderConfig::default(), &lidar).unwrap();
        let mut expect = vec![1.0f32; 31];
        expect.push(0.0);
        assert_eq!(obs.aux, expect);
    }

    #[test]
    fn rotation_identity_and_closure() {
        let map = room(10);
        let pose = Pose::new(3, 6, Heading::South);
        let lidar = LidarConfig::default();
        let s = scan(&map, pose, &lidar);
        let mut belief = BeliefMap::for_map(&map);
        integrate_scan(&mut belief, &map, pose, &s);
        let obs: Observation<f64> = build_observation(&belief, pose, &s, &EncoderConfig::default(), &lidar).unwrap();
        assert_eq!(rotate_observation(&obs, 0), obs);
        let mut r = obs.clone();
        for _ in 0..4 {
            r = rotate_observation(&r, 1);
        }
        assert_eq!(r, obs);
        assert_eq!(rotate_observation(&obs, 1).orientation(), 0.75);
        assert_eq!(rotate_observation(&obs, 3).orientation(), 0.25);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(EncoderConfig { height: 2, width: 24, marker: 3 }.validate().is_err());
        assert!(EncoderConfig { height: 24, width: 24, marker: 0 }.validate().is_err());
        assert!(EncoderConfig::default().validate().is_ok());
    }
}
