//! Trajectory overlays on the reconstructed belief map.

use crate::env::TraceRow;
use crate::gridworld::{GroundTruthMap, Heading, Pose};
use crate::pgm::GreyImage;
use crate::sensor::{integrate_scan, scan, BeliefMap, LidarConfig};

use super::HarnessError;

/// Grey level of trajectory marks (distinct from free, unknown, occupied).
pub const TRAJECTORY_LEVEL: u8 = 64;

/// Replays the scans of every trace pose on `map`, renders the resulting
/// belief and marks each visited cell.
pub fn render_trace(map: &GroundTruthMap, trace: &[TraceRow], lidar: &LidarConfig) -> Result<GreyImage, HarnessError> {
    let mut belief = BeliefMap::for_map(map);
    let mut poses = Vec::with_capacity(trace.len());
    for row in trace {
        let heading = Heading::parse(&row.heading.to_string())
            .ok_or_else(|| HarnessError::Trace(format!("step {}: bad heading {}", row.step, row.heading)))?;
        if row.row >= map.height() || row.col >= map.width() || !map.is_free(row.row, row.col) {
            return Err(HarnessError::Trace(format!(
                "step {}: cell ({}, {}) is not a free cell of the map",
                row.step, row.row, row.col
            )));
        }
        let pose = Pose::new(row.row, row.col, heading);
        integrate_scan(&mut belief, map, pose, &scan(map, pose, lidar));
        poses.push(pose);
    }
    let mut image = belief.to_image();
    for p in poses {
        image.set(p.row, p.col, TRAJECTORY_LEVEL);
    }
    Ok(image)
}

pub fn count_marks(image: &GreyImage) -> usize {
    image.pixels.iter().filter(|&&p| p == TRAJECTORY_LEVEL).count()
}
