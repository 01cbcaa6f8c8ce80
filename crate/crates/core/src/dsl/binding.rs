use crate::world::Vec2;

/// Stand-in position for the closest human when nobody is around.
pub const NO_HUMAN_SENTINEL: Vec2 = Vec2::new(1e6, 1e6);

/// Position of the human nearest to `robot`; ties go to the lowest id.
pub fn closest_human_binding(robot: Vec2, humans: impl IntoIterator<Item = (u32, Vec2)>) -> Vec2 {
    humans
        .into_iter()
        .map(|(id, p)| ((p - robot).norm_squared(), id, p))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map_or(NO_HUMAN_SENTINEL, |(_, _, p)| p)
}
