//! Ground-truth grid maps, agent kinematics and episode randomization.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng as _;
use thiserror::Error;

use crate::pgm::GreyImage;
use crate::seeding::Rng;
use crate::sensor::{observable_count, LidarConfig};

pub const MAP_MAGIC: &str = "GRIDMAP v1";
pub const DEFAULT_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
}

impl Cell {
    pub fn pixel(self) -> u8 {
        match self {
            Cell::Free => 0,
            Cell::Occupied => 255,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: non-rectangular row (expected {expected} cells, found {found})")]
    NonRectangular { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {column}: unknown cell symbol {symbol:?}")]
    UnknownSymbol { line: usize, column: usize, symbol: char },
    #[error("line {line}, column {column}: border cell is not a wall (unbounded border)")]
    UnboundedBorder { line: usize, column: usize },
    #[error("expected {expected} map rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("map must be at least 3x3, got {height}x{width}")]
    TooSmall { height: usize, width: usize },
    #[error("placement infeasible: {0}")]
    PlacementInfeasible(String),
    #[error("map has no free cells")]
    NoFreeCells,
}

/// Immutable occupancy grid of the true environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMap {
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    observable_count: usize,
    lidar: LidarConfig,
}

impl GroundTruthMap {
    /// Builds a map from row-major cells, checking the wall border and
    /// computing the observable-cell count for the default lidar.
    pub fn new(height: usize, width: usize, cells: Vec<Cell>) -> Result<Self, MapError> {
        Self::with_lidar(height, width, cells, LidarConfig::default())
    }

    pub fn with_lidar(height: usize, width: usize, cells: Vec<Cell>, lidar: LidarConfig) -> Result<Self, MapError> {
        if height < 3 || width < 3 {
            return Err(MapError::TooSmall { height, width });
        }
        assert_eq!(cells.len(), height * width, "cell buffer does not match dimensions");
        for r in 0..height {
            for c in 0..width {
                let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                if border && cells[r * width + c] != Cell::Occupied {
                    // Lines are 1-based and the grid starts on line 3.
                    return Err(MapError::UnboundedBorder { line: r + 3, column: c + 1 });
                }
            }
        }
        let mut map = Self { height, width, cells, observable_count: 0, lidar };
        map.observable_count = observable_count(&map, &map.lidar);
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn lidar(&self) -> &LidarConfig {
        &self.lidar
    }

    /// Cells reachable by at least one lidar beam from some free cell.
    pub fn observable_count(&self) -> usize {
        self.observable_count
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[self.index(row, col)]
    }

    /// Bounds-checked lookup; anything outside the grid reads as a wall.
    pub fn cell_at(&self, row: isize, col: isize) -> Cell {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            Cell::Occupied
        } else {
            self.cells[row as usize * self.width + col as usize]
        }
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width && self.cell(row, col) == Cell::Free
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| (r, c)))
            .filter(move |&(r, c)| self.cell(r, c) == Cell::Free)
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Free).count()
    }

    /// Same layout with the observable count recomputed for `lidar`.
    pub fn relidar(&self, lidar: LidarConfig) -> Self {
        let mut map = self.clone();
        map.lidar = lidar;
        map.observable_count = observable_count(&map, &map.lidar);
        map
    }

    /// The map rotated clockwise by `k` quarter turns.
    pub fn rotated(&self, k: usize) -> Self {
        let mut map = self.clone();
        for _ in 0..k % 4 {
            let (h, w) = (map.height, map.width);
            let mut cells = vec![Cell::Occupied; h * w];
            // new (i, j) of a w x h grid takes old (h-1-j, i)
            for i in 0..w {
                for j in 0..h {
                    cells[i * h + j] = map.cells[(h - 1 - j) * w + i];
                }
            }
            map.height = w;
            map.width = h;
            map.cells = cells;
        }
        map.observable_count = observable_count(&map, &map.lidar);
        map
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAP_MAGIC}\n{} {}\n", self.height, self.width);
        for row in self.cells.chunks(self.width) {
            out.extend(row.iter().map(|c| c.symbol()));
            out.push('\n');
        }
        out
    }

    /// Ground-truth image: Occupied = 255, Free = 0.
    pub fn to_image(&self) -> GreyImage {
        GreyImage { width: self.width, height: self.height, pixels: self.cells.iter().map(|c| c.pixel()).collect() }
    }

    fn with_cells(&self, cells: Vec<Cell>) -> Self {
        let mut map = Self { cells, ..self.clone() };
        map.observable_count = observable_count(&map, &map.lidar);
        map
    }
}

/// Parses the `GRIDMAP v1` text format.
pub fn load_map(text: &str) -> Result<GroundTruthMap, MapError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim_start().starts_with(';'));

    let (magic_line, magic) =
        lines.next().ok_or(MapError::MalformedHeader { line: 1, reason: "empty input".into() })?;
    if magic.trim() != MAP_MAGIC {
        return Err(MapError::MalformedHeader { line: magic_line, reason: format!("expected `{MAP_MAGIC}`") });
    }
    let (dim_line, dims) =
        lines.next().ok_or(MapError::MalformedHeader { line: magic_line + 1, reason: "missing dimensions".into() })?;
    let parsed: Vec<usize> = dims.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| {
        MapError::MalformedHeader { line: dim_line, reason: "dimensions must be two positive integers".into() }
    })?;
    let [height, width] = parsed[..] else {
        return Err(MapError::MalformedHeader {
            line: dim_line,
            reason: "dimensions must be `<height> <width>`".into(),
        });
    };
    if height < 3 || width < 3 {
        return Err(MapError::TooSmall { height, width });
    }

    let mut cells = Vec::with_capacity(height * width);
    let mut rows = 0;
    for (line_no, line) in lines {
        if rows == height {
            if line.trim().is_empty() {
                continue;
            }
            return Err(MapError::RowCount { expected: height, found: rows + 1 });
        }
        let symbols: Vec<char> = line.chars().collect();
        if symbols.len() != width {
            return Err(MapError::NonRectangular { line: line_no, expected: width, found: symbols.len() });
        }
        for (c, &ch) in symbols.iter().enumerate() {
            let cell = match ch {
                '#' => Cell::Occupied,
                '.' => Cell::Free,
                other => return Err(MapError::UnknownSymbol { line: line_no, column: c + 1, symbol: other }),
            };
            let border = rows == 0 || c == 0 || rows + 1 == height || c + 1 == width;
            if border && cell != Cell::Occupied {
                return Err(MapError::UnboundedBorder { line: line_no, column: c + 1 });
            }
            cells.push(cell);
        }
        rows += 1;
    }
    if rows != height {
        return Err(MapError::RowCount { expected: height, found: rows });
    }
    GroundTruthMap::new(height, width, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    /// Compass degrees, clockwise from North.
    pub fn degrees(self) -> u32 {
        self.quarter_turns() as u32 * 90
    }

    pub fn quarter_turns(self) -> usize {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    pub fn from_quarter_turns(k: usize) -> Self {
        Self::ALL[k % 4]
    }

    pub fn left(self) -> Self {
        Self::from_quarter_turns(self.quarter_turns() + 3)
    }

    pub fn right(self) -> Self {
        Self::from_quarter_turns(self.quarter_turns() + 1)
    }

    /// Counter-clockwise angle from East in degrees (the ray-casting frame).
    pub fn math_angle(self) -> f64 {
        match self {
            Heading::North => 90.0,
            Heading::East => 0.0,
            Heading::South => 270.0,
            Heading::West => 180.0,
        }
    }

    /// Unit step as (row delta, col delta); North decreases the row index.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "N" | "North" | "0" => Some(Heading::North),
            "E" | "East" | "90" => Some(Heading::East),
            "S" | "South" | "180" => Some(Heading::South),
            "W" | "West" | "270" => Some(Heading::West),
            _ => None,
        }
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Heading::North => "N",
            Heading::East => "E",
            Heading::South => "S",
            Heading::West => "W",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
    pub heading: Heading,
}

impl Pose {
    pub fn new(row: usize, col: usize, heading: Heading) -> Self {
        Self { row, col, heading }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Forward = 0,
    TurnLeft = 1,
    TurnRight = 2,
}

impl Action {
    pub const COUNT: usize = 3;
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveOutcome {
    pub new_pose: Pose,
    pub collided: bool,
}

pub fn apply_action(map: &GroundTruthMap, pose: Pose, action: Action) -> MoveOutcome {
    match action {
        Action::TurnLeft => MoveOutcome { new_pose: Pose { heading: pose.heading.left(), ..pose }, collided: false },
        Action::TurnRight => MoveOutcome { new_pose: Pose { heading: pose.heading.right(), ..pose }, collided: false },
        Action::Forward => {
            let (dr, dc) = pose.heading.delta();
            let (r, c) = (pose.row as isize + dr, pose.col as isize + dc);
            if map.cell_at(r, c) == Cell::Free {
                MoveOutcome { new_pose: Pose { row: r as usize, col: c as usize, ..pose }, collided: false }
            } else {
                MoveOutcome { new_pose: pose, collided: true }
            }
        }
    }
}

/// Random obstacle layout parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObstacleSpec {
    pub count: usize,
    /// Side length of each square obstacle in cells.
    pub size: usize,
    pub max_attempts: usize,
}

impl ObstacleSpec {
    pub fn unit(count: usize) -> Self {
        Self { count, size: 1, max_attempts: DEFAULT_PLACEMENT_ATTEMPTS }
    }
}

/// Places `count` 1x1 obstacles; see [`place_obstacles_with`].
pub fn place_obstacles(
    map: &GroundTruthMap,
    count: usize,
    start: Pose,
    rng: &mut Rng,
) -> Result<GroundTruthMap, MapError> {
    place_obstacles_with(map, &ObstacleSpec::unit(count), start, rng)
}

/// Converts free cells into square obstacles away from `start` while keeping
/// the free region a single connected component.
pub fn place_obstacles_with(
    map: &GroundTruthMap,
    spec: &ObstacleSpec,
    start: Pose,
    rng: &mut Rng,
) -> Result<GroundTruthMap, MapError> {
    if spec.count == 0 {
        return Ok(map.clone());
    }
    let size = spec.size.max(1);
    let clear_of_start = |r: usize, c: usize| {
        // Chebyshev distance >= 2 from start for every cell of the block.
        let rows = r..r + size;
        let cols = c..c + size;
        let near = |a: usize, b: &std::ops::Range<usize>| b.clone().any(|x| x.abs_diff(a) < 2);
        !(near(start.row, &rows) && near(start.col, &cols))
    };
    let eligible: Vec<(usize, usize)> = (0..map.height())
        .flat_map(|r| (0..map.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| {
            r + size <= map.height()
                && c + size <= map.width()
                && (r..r + size).all(|rr| (c..c + size).all(|cc| map.cell(rr, cc) == Cell::Free))
                && clear_of_start(r, c)
        })
        .collect();
    if spec.count > eligible.len() {
        return Err(MapError::PlacementInfeasible(format!(
            "{} obstacles requested but only {} eligible cells",
            spec.count,
            eligible.len()
        )));
    }
    for _ in 0..spec.max_attempts {
        let mut cells = map.cells().to_vec();
        let mut overlap = false;
        for idx in sample(rng, eligible.len(), spec.count) {
            let (r, c) = eligible[idx];
            for rr in r..r + size {
                for cc in c..c + size {
                    let i = map.index(rr, cc);
                    overlap |= cells[i] == Cell::Occupied;
                    cells[i] = Cell::Occupied;
                }
            }
        }
        if overlap {
            continue;
        }
        if free_region_connected(map.height(), map.width(), &cells, (start.row, start.col)) {
            return Ok(map.with_cells(cells));
        }
    }
    Err(MapError::PlacementInfeasible(format!("no connected layout found in {} attempts", spec.max_attempts)))
}

/// True when a 4-connected flood fill from `start` reaches every free cell.
pub fn free_region_connected(height: usize, width: usize, cells: &[Cell], start: (usize, usize)) -> bool {
    let total = cells.iter().filter(|&&c| c == Cell::Free).count();
    if cells[start.0 * width + start.1] != Cell::Free {
        return false;
    }
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::from([start]);
    seen[start.0 * width + start.1] = true;
    let mut reached = 0;
    while let Some((r, c)) = queue.pop_front() {
        reached += 1;
        for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr as usize >= height || nc as usize >= width {
                continue;
            }
            let i = nr as usize * width + nc as usize;
            if !seen[i] && cells[i] == Cell::Free {
                seen[i] = true;
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    reached == total
}

/// Uniform over (free cell, heading) pairs.
pub fn random_free_pose(map: &GroundTruthMap, rng: &mut Rng) -> Result<Pose, MapError> {
    let free: Vec<(usize, usize)> = map.free_cells().collect();
    if free.is_empty() {
        return Err(MapError::NoFreeCells);
    }
    let k = rng.gen_range(0..free.len() * 4);
    let (row, col) = free[k / 4];
    Ok(Pose { row, col, heading: Heading::from_quarter_turns(k % 4) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;

    const ROOM5: &str = "GRIDMAP v1\n5 5\n#####\n#...#\n#...#\n#...#\n#####\n";

    #[test]
    fn loads_smallest_room() {
        let map = load_map(ROOM5).unwrap();
        assert_eq!((map.height(), map.width()), (5, 5));
        assert_eq!(map.free_count(), 9);
        assert!(map.observable_count() >= map.free_count());
    }

    #[test]
    fn comments_are_ignored() {
        let text = "; a comment\nGRIDMAP v1\n;dims next\n3 3\n###\n;mid\n###\n###\n";
        let map = load_map(text).unwrap();
        assert_eq!(map.free_count(), 0);
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert!(matches!(load_map("GRIDMAP v2\n5 5\n"), Err(MapError::MalformedHeader { line: 1, .. })));
        assert!(matches!(load_map("GRIDMAP v1\n5\n"), Err(MapError::MalformedHeader { line: 2, .. })));
        let ragged = "GRIDMAP v1\n5 5\n#####\n#..#\n#...#\n#...#\n#####\n";
        let err = load_map(ragged).unwrap_err();
        assert_eq!(err, MapError::NonRectangular { line: 4, expected: 5, found: 4 });
        assert!(err.to_string().contains("non-rectangular"));
        let unknown = "GRIDMAP v1\n5 5\n#####\n#.x.#\n#...#\n#...#\n#####\n";
        assert_eq!(load_map(unknown).unwrap_err(), MapError::UnknownSymbol { line: 4, column: 3, symbol: 'x' });
        let open = "GRIDMAP v1\n5 5\n#####\n#....\n#...#\n#...#\n#####\n";
        assert_eq!(load_map(open).unwrap_err(), MapError::UnboundedBorder { line: 4, column: 5 });
        let short = "GRIDMAP v1\n5 5\n#####\n#...#\n#####\n";
        assert_eq!(load_map(short).unwrap_err(), MapError::RowCount { expected: 5, found: 3 });
    }

    #[test]
    fn text_round_trip() {
        let map = load_map(ROOM5).unwrap();
        assert_eq!(map.to_text(), ROOM5);
    }

    #[test]
    fn image_uses_ground_truth_encoding() {
        let img = load_map(ROOM5).unwrap().to_image();
        assert_eq!(img.get(0, 0), 255);
        assert_eq!(img.get(2, 2), 0);
        assert_eq!(img.pixels.iter().filter(|&&p| p == 0).count(), 9);
    }

    #[test]
    fn kinematics_examples() {
        let map = load_map(ROOM5).unwrap();
        let p = Pose::new(2, 2, Heading::North);
        assert_eq!(
            apply_action(&map, p, Action::TurnLeft),
            MoveOutcome { new_pose: Pose::new(2, 2, Heading::West), collided: false }
        );
        assert_eq!(
            apply_action(&map, p, Action::Forward),
            MoveOutcome { new_pose: Pose::new(1, 2, Heading::North), collided: false }
        );
        let blocked = Pose::new(1, 2, Heading::North);
        assert_eq!(apply_action(&map, blocked, Action::Forward), MoveOutcome { new_pose: blocked, collided: true });
    }

    #[test]
    fn action_codes_are_fixed() {
        assert_eq!(Action::Forward.code(), 0);
        assert_eq!(Action::TurnLeft.code(), 1);
        assert_eq!(Action::TurnRight.code(), 2);
        assert_eq!(Action::from_code(3), None);
    }

    #[test]
    fn zero_obstacles_is_identity() {
        let map = load_map(ROOM5).unwrap();
        let mut rng = rng_from(1);
        let out = place_obstacles(&map, 0, Pose::new(2, 2, Heading::North), &mut rng).unwrap();
        assert_eq!(out, map);
    }

    #[test]
    fn too_many_obstacles_is_infeasible() {
        let map = load_map(ROOM5).unwrap();
        let mut rng = rng_from(1);
        // Every interior cell of a 3x3 room is within Chebyshev 1 of the center.
        let err = place_obstacles(&map, 1, Pose::new(2, 2, Heading::North), &mut rng).unwrap_err();
        assert!(matches!(err, MapError::PlacementInfeasible(_)));
    }

    #[test]
    fn single_free_cell_forces_location() {
        let map = load_map("GRIDMAP v1\n3 3\n###\n#.#\n###\n").unwrap();
        let mut seen = [false; 4];
        for s in 0..64 {
            let p = random_free_pose(&map, &mut rng_from(s)).unwrap();
            assert_eq!((p.row, p.col), (1, 1));
            seen[p.heading.quarter_turns()] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn no_free_cells_is_an_error() {
        let map = load_map("GRIDMAP v1\n3 3\n###\n###\n###\n").unwrap();
        assert_eq!(random_free_pose(&map, &mut rng_from(0)), Err(MapError::NoFreeCells));
    }

    #[test]
    fn pose_is_deterministic_per_seed() {
        let map = load_map(ROOM5).unwrap();
        let a = random_free_pose(&map, &mut rng_from(42)).unwrap();
        let b = random_free_pose(&map, &mut rng_from(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_is_a_group_action() {
        let text = "GRIDMAP v1\n4 5\n#####\n#..##\n#...#\n#####\n";
        let map = load_map(text).unwrap();
        let r1 = map.rotated(1);
        assert_eq!((r1.height(), r1.width()), (5, 4));
        // top-left interior cell (1,1) moves to (1, h-2) after a clockwise turn
        assert_eq!(r1.cell(1, 2), Cell::Free);
        assert_eq!(map.rotated(4), map);
        assert_eq!(r1.rotated(3), map);
    }

    #[test]
    fn turns_compose() {
        for h in Heading::ALL {
            assert_eq!(h.left().right(), h);
            assert_eq!(h.left().left().left().left(), h);
        }
        assert_eq!(Heading::West.degrees(), 270);
    }
}
