//! Built-in curriculum and test maps.

use crate::gridworld::{load_map, GroundTruthMap, MapError};

/// Curriculum ladder, easiest first: loop, narrow corridor, multiple rooms,
/// corner, combination.
pub const LEVELS: [(&str, &str); 5] = [
    ("level1_loop", include_str!("../maps/level1_loop.txt")),
    ("level2_corridor", include_str!("../maps/level2_corridor.txt")),
    ("level3_rooms", include_str!("../maps/level3_rooms.txt")),
    ("level4_corner", include_str!("../maps/level4_corner.txt")),
    ("level5_combination", include_str!("../maps/level5_combination.txt")),
];

/// Held-out maps of assorted sizes and layouts.
pub const TEST_MAPS: [(&str, &str); 5] = [
    ("test_hall", include_str!("../maps/test_hall.txt")),
    ("test_wide", include_str!("../maps/test_wide.txt")),
    ("test_office", include_str!("../maps/test_office.txt")),
    ("test_zigzag", include_str!("../maps/test_zigzag.txt")),
    ("test_large", include_str!("../maps/test_large.txt")),
];

pub const LEVEL_COUNT: usize = LEVELS.len();

/// Map text for curriculum level `level` (1-based).
pub fn level_text(level: usize) -> Option<&'static str> {
    level.checked_sub(1).and_then(|i| LEVELS.get(i)).map(|&(_, t)| t)
}

pub fn level_map(level: usize) -> Option<Result<GroundTruthMap, MapError>> {
    level_text(level).map(load_map)
}

/// Looks up a built-in map by name; `level3` and `3` are accepted for levels.
pub fn named_text(name: &str) -> Option<&'static str> {
    let level = name.strip_prefix("level").unwrap_or(name).parse::<usize>().ok().and_then(level_text);
    level.or_else(|| LEVELS.iter().chain(TEST_MAPS.iter()).find(|(n, _)| *n == name).map(|&(_, t)| t))
}

pub fn all_names() -> impl Iterator<Item = &'static str> {
    LEVELS.iter().chain(TEST_MAPS.iter()).map(|&(n, _)| n)
}
