use crate::geometry::{Aabb, Vec3};

/// Index of the first obstacle whose closed box the segment `from -> to` touches.
///
/// A point is safe with respect to a box only if it lies strictly outside
/// along at least one axis, so grazing a face counts as a collision.
pub fn check_collision(from: Vec3, to: Vec3, obstacles: &[Aabb]) -> Option<usize> {
    obstacles.iter().position(|ob| ob.intersects_segment(from, to))
}

pub fn segment_collides(from: Vec3, to: Vec3, obstacles: &[Aabb]) -> bool {
    check_collision(from, to, obstacles).is_some()
}
