use serde::{Deserialize, Serialize};

use super::{Vec2, WorldError};

/// Polyline reference path with cumulative arc length per waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath")]
pub struct ReferencePath {
    waypoints: Vec<Vec2>,
    arc_lengths: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPath {
    waypoints: Vec<Vec2>,
    #[serde(default)]
    arc_lengths: Option<Vec<f64>>,
}

impl TryFrom<RawPath> for ReferencePath {
    type Error = WorldError;

    fn try_from(raw: RawPath) -> Result<Self, Self::Error> {
        let path = ReferencePath::new(raw.waypoints)?;
        if let Some(given) = raw.arc_lengths {
            let consistent = given.len() == path.arc_lengths.len()
                && given
                    .iter()
                    .zip(&path.arc_lengths)
                    .all(|(a, b)| (a - b).abs() <= 1e-6 * b.max(1.0));
            if !consistent {
                return Err(WorldError::InvalidPath(
                    "arc_lengths do not match waypoint spacing".into(),
                ));
            }
        }
        Ok(path)
    }
}

/// Result of projecting a point onto a [`ReferencePath`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    /// Arc-length parameter of `closest`.
    pub s: f64,
    pub closest: Vec2,
    /// Unit direction of the segment holding `closest`.
    pub tangent: Vec2,
    /// `tangent` rotated by +90 degrees.
    pub normal: Vec2,
    /// Segment index.
    pub segment: usize,
    /// False when the projection is clamped to the first or last waypoint,
    /// where `s` no longer moves with the point.
    pub interior: bool,
}

impl ReferencePath {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self, WorldError> {
        if waypoints.len() < 2 {
            return Err(WorldError::InvalidPath(
                "need at least two waypoints".into(),
            ));
        }
        if waypoints.iter().any(|w| !w.is_finite()) {
            return Err(WorldError::InvalidPath("non-finite waypoint".into()));
        }
        let mut arc_lengths = Vec::with_capacity(waypoints.len());
        arc_lengths.push(0.0);
        for pair in waypoints.windows(2) {
            let len = pair[0].distance(pair[1]);
            if len <= 0.0 {
                return Err(WorldError::InvalidPath(
                    "coincident consecutive waypoints".into(),
                ));
            }
            let last = *arc_lengths.last().unwrap();
            arc_lengths.push(last + len);
        }
        Ok(ReferencePath {
            waypoints,
            arc_lengths,
        })
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc_lengths
    }

    pub fn length(&self) -> f64 {
        *self.arc_lengths.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.waypoints.last().unwrap()
    }

    /// Point and tangent at arc length `s`, clamped to `[0, length]`.
    pub fn point_at(&self, s: f64) -> (Vec2, Vec2) {
        let s = s.clamp(0.0, self.length());
        let seg = self
            .arc_lengths
            .windows(2)
            .position(|w| s <= w[1])
            .unwrap_or(self.waypoints.len() - 2);
        let (a, b) = (self.waypoints[seg], self.waypoints[seg + 1]);
        let tangent = (b - a).normalized();
        (a + tangent * (s - self.arc_lengths[seg]), tangent)
    }

    /// Euclidean projection onto the polyline.
    ///
    /// Ties between segments resolve to the lower arc length.
    pub fn project(&self, point: Vec2) -> PathProjection {
        let last_seg = self.waypoints.len() - 2;
        let mut best: Option<(f64, PathProjection)> = None;
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let seg = b - a;
            let seg_len = self.arc_lengths[i + 1] - self.arc_lengths[i];
            let t = ((point - a).dot(seg) / seg.norm_squared()).clamp(0.0, 1.0);
            let closest = a + seg * t;
            let d2 = (point - closest).norm_squared();
            let better = match &best {
                None => true,
                Some((best_d2, _)) => d2 < *best_d2 - 1e-12 * best_d2.max(1.0),
            };
            if better {
                let tangent = seg * (1.0 / seg_len);
                let interior = !((i == 0 && t <= 0.0) || (i == last_seg && t >= 1.0));
                best = Some((
                    d2,
                    PathProjection {
                        s: self.arc_lengths[i] + t * seg_len,
                        closest,
                        tangent,
                        normal: tangent.perp(),
                        segment: i,
                        interior,
                    },
                ));
            }
        }
        best.expect("path has at least one segment").1
    }
}

/// Free-function form of [`ReferencePath::project`].
pub fn path_project(path: &ReferencePath, point: Vec2) -> PathProjection {
    path.project(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> ReferencePath {
        ReferencePath::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]).unwrap()
    }

    #[test]
    fn axis_aligned_projection() {
        let p = straight().project(Vec2::new(3.0, 2.0));
        assert_eq!(p.s, 3.0);
        assert_eq!(p.closest, Vec2::new(3.0, 0.0));
        assert_eq!(p.tangent, Vec2::new(1.0, 0.0));
        assert_eq!(p.normal, Vec2::new(0.0, 1.0));
        assert!(p.interior);
    }

    #[test]
    fn clamps_beyond_final_waypoint() {
        let p = straight().project(Vec2::new(12.0, -1.0));
        assert_eq!(p.s, 10.0);
        assert_eq!(p.closest, Vec2::new(10.0, 0.0));
        assert!(!p.interior);
    }

    #[test]
    fn corner_bisector_prefers_lower_arc_length() {
        // Right angle at (1, 0); (0.5, 0.5) is equidistant from both segments.
        let path = ReferencePath::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
        ])
        .unwrap();
        let p = path.project(Vec2::new(0.5, 0.5));
        assert_eq!(p.segment, 0);
        assert_eq!(p.s, 0.5);
        assert_eq!(p.closest, Vec2::new(0.5, 0.0));
    }

    #[test]
    fn rejects_degenerate_paths() {
        assert!(ReferencePath::new(vec![Vec2::ZERO]).is_err());
        assert!(ReferencePath::new(vec![Vec2::ZERO, Vec2::ZERO]).is_err());
    }

    #[test]
    fn arc_lengths_accumulate() {
        let path = ReferencePath::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 4.0),
            Vec2::new(3.0, 6.0),
        ])
        .unwrap();
        assert_eq!(path.arc_lengths(), &[0.0, 5.0, 7.0]);
        let (pt, tan) = path.point_at(6.0);
        assert_eq!(pt, Vec2::new(3.0, 5.0));
        assert_eq!(tan, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn deserializes_and_checks_arc_lengths() {
        let ok: ReferencePath =
            serde_json::from_str(r#"{"waypoints": [[0,0],[2,0]], "arc_lengths": [0, 2]}"#).unwrap();
        assert_eq!(ok.length(), 2.0);
        let bad = serde_json::from_str::<ReferencePath>(
            r#"{"waypoints": [[0,0],[2,0]], "arc_lengths": [0, 3]}"#,
        );
        assert!(bad.is_err());
    }
}
