//! Ray-traced 2D lidar and occupancy belief maps.
//!
//! Geometry: cell `(row, col)` spans `[col, col+1] x [row, row+1]`, rays start
//! at the cell center and angles are measured counter-clockwise from East
//! (so 90 degrees points to decreasing row indices).

use serde::{Deserialize, Serialize};

use crate::gridworld::{Cell, GroundTruthMap, Pose};
use crate::pgm::GreyImage;

/// Two traversal events closer than this (in cells along the ray) are
/// treated as simultaneous, i.e. the ray passes through a cell corner.
pub const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub fov_degrees: f64,
    pub resolution_degrees: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { fov_degrees: 270.0, resolution_degrees: 9.0, max_range: 12.0 }
    }
}

impl Eq for LidarConfig {}

impl LidarConfig {
    pub fn beam_count(&self) -> usize {
        (self.fov_degrees / self.resolution_degrees).round() as usize + 1
    }

    /// Beam offsets relative to the heading, from the clockwise edge of the
    /// field of view to the counter-clockwise edge.
    pub fn beam_offsets(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.beam_count()).map(move |i| -self.fov_degrees / 2.0 + i as f64 * self.resolution_degrees)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.resolution_degrees > 0.0 && self.fov_degrees > 0.0 && self.max_range > 0.0) {
            return Err("lidar angles and range must be positive".into());
        }
        let ratio = self.fov_degrees / self.resolution_degrees;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err("lidar fov must be divisible by its resolution".into());
        }
        Ok(())
    }
}

/// Result of one ray cast.
#[derive(Debug, Clone, PartialEq)]
pub struct RayCast {
    /// Distance from the origin center to the terminating cell face, or the
    /// maximum range when nothing was hit.
    pub distance: f64,
    pub hit: bool,
    /// Free cells crossed, in traversal order (origin excluded).
    pub visited: Vec<(usize, usize)>,
    /// The occupied cell that stopped the ray.
    pub hit_cell: Option<(usize, usize)>,
}

/// Unit direction `(dx, dy_down)` for a counter-clockwise angle in degrees.
///
/// The angle is reduced to a quadrant plus remainder and the quadrant is
/// applied by exact component swaps, so directions that differ by a quarter
/// turn are exact rotations of each other.
pub fn direction(angle_degrees: f64) -> (f64, f64) {
    let a = angle_degrees.rem_euclid(360.0);
    let quadrant = (a / 90.0).floor() as usize % 4;
    let rem = a - 90.0 * quadrant as f64;
    let (mut c, mut s) = if rem.abs() < 1e-12 {
        (1.0, 0.0)
    } else if (rem - 45.0).abs() < 1e-12 {
        (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2)
    } else {
        let r = rem.to_radians();
        (r.cos(), r.sin())
    };
    for _ in 0..quadrant {
        (c, s) = (-s, c);
    }
    // Screen rows grow downwards.
    (c, -s)
}

/// Walks the grid from the center of `(origin.row, origin.col)` along
/// `angle_degrees` until an occupied cell or `max_range`.
///
/// When the ray passes exactly through a cell corner both side cells are
/// examined before the diagonal one; if either is occupied the ray stops
/// there, so it never slips through a diagonal wall joint.
pub fn cast_ray(map: &GroundTruthMap, origin: Pose, angle_degrees: f64, max_range: f64) -> RayCast {
    let mut out = RayCast { distance: max_range, hit: false, visited: Vec::new(), hit_cell: None };
    cast_ray_into(map, origin.row, origin.col, angle_degrees, max_range, &mut out);
    out
}

pub(crate) fn cast_ray_into(
    map: &GroundTruthMap,
    row: usize,
    col: usize,
    angle_degrees: f64,
    max_range: f64,
    out: &mut RayCast,
) {
    out.visited.clear();
    out.hit = false;
    out.hit_cell = None;
    out.distance = max_range;

    let (dx, dy) = direction(angle_degrees);
    let step_c: isize = if dx > 0.0 {
        1
    } else if dx < 0.0 {
        -1
    } else {
        0
    };
    let step_r: isize = if dy > 0.0 {
        1
    } else if dy < 0.0 {
        -1
    } else {
        0
    };
    let (delta_c, mut next_c) =
        if step_c != 0 { (1.0 / dx.abs(), 0.5 / dx.abs()) } else { (f64::INFINITY, f64::INFINITY) };
    let (delta_r, mut next_r) =
        if step_r != 0 { (1.0 / dy.abs(), 0.5 / dy.abs()) } else { (f64::INFINITY, f64::INFINITY) };
    let (mut r, mut c) = (row as isize, col as isize);

    loop {
        let t = next_c.min(next_r);
        if t >= max_range {
            return;
        }
        if (next_c - next_r).abs() <= TIE_EPS {
            // Corner crossing: the two side cells are touched at a point.
            let sides = [(r, c + step_c), (r + step_r, c)];
            let mut blocked = None;
            for &(sr, sc) in &sides {
                if map.cell_at(sr, sc) == Cell::Occupied {
                    blocked.get_or_insert((sr, sc));
                } else {
                    out.visited.push((sr as usize, sc as usize));
                }
            }
            if let Some((br, bc)) = blocked {
                out.hit = true;
                out.distance = t;
                out.hit_cell = in_bounds(map, br, bc);
                return;
            }
            r += step_r;
            c += step_c;
            next_c += delta_c;
            next_r += delta_r;
        } else if next_c < next_r {
            c += step_c;
            next_c += delta_c;
        } else {
            r += step_r;
            next_r += delta_r;
        }
        if map.cell_at(r, c) == Cell::Occupied {
            out.hit = true;
            out.distance = t;
            out.hit_cell = in_bounds(map, r, c);
            return;
        }
        out.visited.push((r as usize, c as usize));
    }
}

fn in_bounds(map: &GroundTruthMap, r: isize, c: isize) -> Option<(usize, usize)> {
    (r >= 0 && c >= 0 && (r as usize) < map.height() && (c as usize) < map.width()).then_some((r as usize, c as usize))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub hit_mask: Vec<bool>,
    /// Per-beam traversal, kept for belief integration.
    pub beams: Vec<RayCast>,
}

pub fn scan(map: &GroundTruthMap, pose: Pose, cfg: &LidarConfig) -> LidarScan {
    let mut out = LidarScan { ranges: Vec::new(), hit_mask: Vec::new(), beams: Vec::new() };
    scan_into(map, pose, cfg, &mut out);
    out
}

/// Allocation-reusing form of [`scan`].
pub fn scan_into(map: &GroundTruthMap, pose: Pose, cfg: &LidarConfig, out: &mut LidarScan) {
    let n = cfg.beam_count();
    out.beams.resize_with(n, || RayCast { distance: 0.0, hit: false, visited: Vec::with_capacity(24), hit_cell: None });
    out.beams.truncate(n);
    out.ranges.clear();
    out.hit_mask.clear();
    let heading = pose.heading.math_angle();
    for (beam, offset) in out.beams.iter_mut().zip(cfg.beam_offsets()) {
        cast_ray_into(map, pose.row, pose.col, heading + offset, cfg.max_range, beam);
        out.ranges.push(beam.distance);
        out.hit_mask.push(beam.hit);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Knowledge {
    Unknown,
    Free,
    Occupied,
}

impl Knowledge {
    pub fn pixel(self) -> u8 {
        match self {
            Knowledge::Occupied => 255,
            Knowledge::Unknown => 128,
            Knowledge::Free => 0,
        }
    }
}

/// Inclusive bounding box of known cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    fn include(&mut self, r: usize, c: usize) {
        self.row_min = self.row_min.min(r);
        self.col_min = self.col_min.min(c);
        self.row_max = self.row_max.max(r);
        self.col_max = self.col_max.max(c);
    }
}

/// The agent's accumulated occupancy knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeliefMap {
    height: usize,
    width: usize,
    cells: Vec<Knowledge>,
    known_count: usize,
    bbox: Option<BBox>,
}

impl BeliefMap {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, cells: vec![Knowledge::Unknown; height * width], known_count: 0, bbox: None }
    }

    pub fn for_map(map: &GroundTruthMap) -> Self {
        Self::new(map.height(), map.width())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn known_count(&self) -> usize {
        self.known_count
    }

    pub fn cells(&self) -> &[Knowledge] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> Knowledge {
        self.cells[row * self.width + col]
    }

    /// Tightest box around every known cell, if any.
    pub fn bbox(&self) -> Option<BBox> {
        self.bbox
    }

    /// Records knowledge of a cell; knowledge never reverts to Unknown.
    pub fn mark(&mut self, row: usize, col: usize, value: Knowledge) {
        if value == Knowledge::Unknown {
            return;
        }
        let slot = &mut self.cells[row * self.width + col];
        if *slot == Knowledge::Unknown {
            self.known_count += 1;
            match &mut self.bbox {
                Some(b) => b.include(row, col),
                None => self.bbox = Some(BBox { row_min: row, col_min: col, row_max: row, col_max: col }),
            }
        }
        *slot = value;
    }

    pub fn to_image(&self) -> GreyImage {
        GreyImage { width: self.width, height: self.height, pixels: self.cells.iter().map(|k| k.pixel()).collect() }
    }

    /// The belief rotated clockwise by `k` quarter turns.
    pub fn rotated(&self, k: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..k % 4 {
            let (h, w) = (out.height, out.width);
            let mut next = BeliefMap::new(w, h);
            for i in 0..w {
                for j in 0..h {
                    next.mark(i, j, out.cells[(h - 1 - j) * w + i]);
                }
            }
            out = next;
        }
        out
    }
}

fn knowledge_of(cell: Cell) -> Knowledge {
    match cell {
        Cell::Free => Knowledge::Free,
        Cell::Occupied => Knowledge::Occupied,
    }
}

/// Marks the agent cell, every traversed cell and every beam terminus.
pub fn integrate_scan(belief: &mut BeliefMap, map: &GroundTruthMap, pose: Pose, scan: &LidarScan) {
    assert_eq!((belief.height(), belief.width()), (map.height(), map.width()), "belief and map dimensions differ");
    belief.mark(pose.row, pose.col, knowledge_of(map.cell(pose.row, pose.col)));
    for beam in &scan.beams {
        for &(r, c) in &beam.visited {
            belief.mark(r, c, knowledge_of(map.cell(r, c)));
        }
        if let Some((r, c)) = beam.hit_cell {
            belief.mark(r, c, knowledge_of(map.cell(r, c)));
        }
    }
}

/// Every absolute beam angle a lidar with this config can produce over the
/// four headings.
pub fn all_beam_angles(cfg: &LidarConfig) -> Vec<f64> {
    let mut angles: Vec<f64> = Vec::new();
    for heading in [0.0, 90.0, 180.0, 270.0] {
        for off in cfg.beam_offsets() {
            let a = (heading + off).rem_euclid(360.0);
            if !angles.iter().any(|&b| (a - b).abs() < 1e-9 || (a - b).abs() > 360.0 - 1e-9) {
                angles.push(a);
            }
        }
    }
    angles
}

/// Number of cells some beam reaches from some free cell (free cells
/// themselves included).
pub fn observable_count(map: &GroundTruthMap, cfg: &LidarConfig) -> usize {
    let mut seen = vec![false; map.height() * map.width()];
    let angles = all_beam_angles(cfg);
    let mut ray = RayCast { distance: 0.0, hit: false, visited: Vec::new(), hit_cell: None };
    for (r, c) in map.free_cells() {
        seen[map.index(r, c)] = true;
        for &a in &angles {
            cast_ray_into(map, r, c, a, cfg.max_range, &mut ray);
            for &(vr, vc) in &ray.visited {
                seen[map.index(vr, vc)] = true;
            }
            if let Some((hr, hc)) = ray.hit_cell {
                seen[map.index(hr, hc)] = true;
            }
        }
    }
    seen.into_iter().filter(|&s| s).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_map, Heading};

    fn room(h: usize, w: usize) -> GroundTruthMap {
        let mut text = format!("GRIDMAP v1\n{h} {w}\n");
        for r in 0..h {
            for c in 0..w {
                let wall = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
                text.push(if wall { '#' } else { '.' });
            }
            text.push('\n');
        }
        load_map(&text).unwrap()
    }

    #[test]
    fn default_lidar_has_31_beams() {
        let cfg = LidarConfig::default();
        assert_eq!(cfg.beam_count(), 31);
        let offs: Vec<f64> = cfg.beam_offsets().collect();
        assert_eq!(offs[0], -135.0);
        assert_eq!(offs[30], 135.0);
        assert_eq!(all_beam_angles(&cfg).len(), 40);
    }

    #[test]
    fn wall_three_cells_east_is_hit_at_two_and_a_half() {
        // Agent at col 2, wall column at col 5.
        let map = room(5, 6);
        let ray = cast_ray(&map, Pose::new(2, 2, Heading::North), 0.0, 12.0);
        assert!(ray.hit);
        assert_eq!(ray.distance, 2.5);
        assert_eq!(ray.visited, vec![(2, 3), (2, 4)]);
        assert_eq!(ray.hit_cell, Some((2, 5)));
    }

    #[test]
    fn open_room_rays_reach_max_range() {
        let map = room(30, 30);
        let origin = Pose::new(14, 14, Heading::North);
        for k in 0..40 {
            let ray = cast_ray(&map, origin, k as f64 * 9.0, 12.0);
            assert!(!ray.hit, "angle {}", k * 9);
            assert_eq!(ray.distance, 12.0);
        }
    }

    #[test]
    fn corner_crossing_examines_both_side_cells() {
        // From (2,1) at 45 degrees the ray meets the corner shared by (1,1),
        // (2,2) and the diagonal cell (1,2).
        let diag_wall = load_map("GRIDMAP v1\n5 5\n#####\n#.#.#\n#..##\n#...#\n#####\n").unwrap();
        let ray = cast_ray(&diag_wall, Pose::new(2, 1, Heading::North), 45.0, 12.0);
        assert_eq!(ray.hit_cell, Some((1, 2)));
        assert_eq!(ray.visited, vec![(2, 2), (1, 1)]);
        assert!((ray.distance - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        // Both side cells are walls: the ray must not slip through the joint.
        let joint = load_map("GRIDMAP v1\n5 5\n#####\n##..#\n#.#.#\n#...#\n#####\n").unwrap();
        let ray = cast_ray(&joint, Pose::new(2, 1, Heading::North), 45.0, 12.0);
        assert!(ray.hit);
        assert_eq!(ray.hit_cell, Some((2, 2)));
        assert!(ray.visited.is_empty());
        assert!((ray.distance - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn centered_in_5x5_all_beams_hit_within_corner_distance() {
        let map = room(5, 5);
        let s = scan(&map, Pose::new(2, 2, Heading::North), &LidarConfig::default());
        assert_eq!(s.ranges.len(), 31);
        assert!(s.hit_mask.iter().all(|&h| h));
        // Interior faces sit 1.5 cells from the center, so no hit is farther
        // than the corner distance 1.5 * sqrt(2).
        let corner = 1.5 * std::f64::consts::SQRT_2;
        assert!(s.ranges.iter().all(|&r| r > 0.0 && r <= 2.91 && r <= corner + 1e-12));
    }

    #[test]
    fn scan_is_invariant_to_rotating_world_and_heading() {
        let map = room(9, 9);
        let pose = Pose::new(4, 4, Heading::North);
        let base = scan(&map, pose, &LidarConfig::default());
        for k in 1..4 {
            let rotated = map.rotated(k);
            let p = Pose::new(4, 4, Heading::from_quarter_turns(k));
            let s = scan(&rotated, p, &LidarConfig::default());
            assert_eq!(s.ranges, base.ranges);
            assert_eq!(s.hit_mask, base.hit_mask);
        }
    }

    #[test]
    fn integrate_is_idempotent_and_monotone() {
        let map = room(8, 10);
        let pose = Pose::new(3, 4, Heading::East);
        let s = scan(&map, pose, &LidarConfig::default());
        let mut belief = BeliefMap::for_map(&map);
        integrate_scan(&mut belief, &map, pose, &s);
        let once = belief.clone();
        integrate_scan(&mut belief, &map, pose, &s);
        assert_eq!(belief, once);
        assert!(belief.known_count() > 1);
        assert_eq!(belief.get(3, 4), Knowledge::Free);
    }

    #[test]
    fn belief_encoding_and_bbox() {
        let mut b = BeliefMap::new(6, 8);
        assert_eq!(b.bbox(), None);
        b.mark(1, 1, Knowledge::Free);
        assert_eq!(b.bbox(), Some(BBox { row_min: 1, col_min: 1, row_max: 1, col_max: 1 }));
        b.mark(4, 6, Knowledge::Occupied);
        assert_eq!(b.bbox(), Some(BBox { row_min: 1, col_min: 1, row_max: 4, col_max: 6 }));
        b.mark(4, 6, Knowledge::Unknown);
        assert_eq!(b.get(4, 6), Knowledge::Occupied);
        assert_eq!(b.known_count(), 2);
        let img = b.to_image();
        assert_eq!((img.get(1, 1), img.get(4, 6), img.get(0, 0)), (0, 255, 128));
    }

    #[test]
    fn direction_quadrants_are_exact_rotations() {
        for k in 0..40 {
            let a = k as f64 * 9.0;
            let (x, y) = direction(a);
            let (x2, y2) = direction(a + 90.0);
            // +90 degrees counter-clockwise: (x, y_down) -> (y_down, -x)
            assert_eq!((x2, y2), (y, -x), "angle {a}");
            assert!(((x * x + y * y) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn validate_rejects_indivisible_fov() {
        let cfg = LidarConfig { fov_degrees: 270.0, resolution_degrees: 7.0, max_range: 12.0 };
        assert!(cfg.validate().is_err());
        assert!(LidarConfig::default().validate().is_ok());
    }
}
