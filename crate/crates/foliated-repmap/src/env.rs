//! Desk-scale analytic environments and validity checking.
//!
//! The "robot" is a disc (possibly a point) in the ambient space; the carried
//! or parked object is a second disc whose center depends on the leaf's
//! co-parameter. Checking a configuration yields exactly one tag, with
//! precedence RobotInvalid > ObjectInvalid > ConstraintInvalid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foliation::{Configuration, FoliationSet, LeafId};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Aabb {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.iter().zip(&max).any(|(a, b)| a >= b) {
            return Err(Error::InvalidProblem("degenerate bounds".to_string()));
        }
        Ok(Aabb { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(c, (lo, hi))| *c >= *lo && *c <= *hi)
    }

    /// Distance from a point to this box (zero inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(c, (lo, hi))| {
                let d = if c < lo {
                    lo - c
                } else if c > hi {
                    c - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }
}

/// Convex obstacle shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexShape {
    Box { min: Vec<f64>, max: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ConvexShape {
    /// Distance from a point to the shape surface (zero inside).
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        match self {
            ConvexShape::Box { min, max } => p
                .iter()
                .zip(min.iter().zip(max))
                .map(|(c, (lo, hi))| {
                    let d = if c < lo {
                        lo - c
                    } else if c > hi {
                        c - hi
                    } else {
                        0.0
                    };
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ConvexShape::Ball { center, radius } => {
                let d = p
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                (d - radius).max(0.0)
            }
        }
    }

    /// True when a disc of `radius` centered at `p` touches the shape.
    pub fn collides_disc(&self, p: &[f64], radius: f64) -> bool {
        self.distance_to(p) <= radius
    }
}

/// Obstacles and bounds, with separate robot- and object-colliding sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Environment {
    pub bounds: Aabb,
    pub robot_radius: f64,
    pub object_radius: f64,
    pub robot_obstacles: Vec<ConvexShape>,
    pub object_obstacles: Vec<ConvexShape>,
}

impl Environment {
    /// Obstacle-free copy sharing the same bounds, used as the atlas
    /// training world.
    pub fn free_space(&self) -> Environment {
        Environment {
            bounds: self.bounds.clone(),
            robot_radius: self.robot_radius,
            object_radius: self.object_radius,
            robot_obstacles: Vec::new(),
            object_obstacles: Vec::new(),
        }
    }

    pub fn robot_collides(&self, p: &[f64]) -> bool {
        self.robot_obstacles
            .iter()
            .any(|s| s.collides_disc(p, self.robot_radius))
    }

    fn object_collides(&self, center: &[f64]) -> bool {
        self.object_obstacles
            .iter()
            .any(|s| s.collides_disc(center, self.object_radius))
    }
}

/// Outcome of checking one configuration on one leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityTag {
    Valid,
    RobotInvalid,
    ObjectInvalid,
    ConstraintInvalid,
}

impl std::fmt::Display for ValidityTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ValidityTag::Valid => "valid",
            ValidityTag::RobotInvalid => "robot_invalid",
            ValidityTag::ObjectInvalid => "object_invalid",
            ValidityTag::ConstraintInvalid => "constraint_invalid",
        };
        f.write_str(s)
    }
}

/// Tags `q` on `leaf`. Out-of-bounds counts as a robot collision; object
/// collisions cover both object-vs-environment and (for parked objects)
/// robot-vs-object contact; configurations off the leaf beyond the
/// foliation's tolerance are constraint violations.
pub fn check_validity(
    q: &Configuration,
    leaf: LeafId,
    env: &Environment,
    foliations: &FoliationSet,
) -> ValidityTag {
    if !env.bounds.contains(q.as_slice()) {
        return ValidityTag::RobotInvalid;
    }
    if env.robot_collides(q.as_slice()) {
        return ValidityTag::RobotInvalid;
    }
    let foliation = match foliations.foliation(leaf.foliation) {
        Ok(f) => f,
        Err(_) => return ValidityTag::ConstraintInvalid,
    };
    let theta = match foliations.co_param(leaf) {
        Ok(t) => t,
        Err(_) => return ValidityTag::ConstraintInvalid,
    };
    if let Some(center) = foliation.object_pose.object_center(q, theta) {
        if env.object_collides(&center) {
            return ValidityTag::ObjectInvalid;
        }
        // A parked object is a body of its own that the robot disc must
        // clear; an attached object overlaps the hand by construction.
        if matches!(
            foliation.object_pose,
            crate::foliation::ObjectPoseRule::Parked { .. }
        ) {
            let d = q
                .as_slice()
                .iter()
                .zip(&center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d <= env.robot_radius + env.object_radius {
                return ValidityTag::ObjectInvalid;
            }
        }
    }
    let residual = foliation
        .constraint
        .residual(q, theta)
        .iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    if residual > foliation.epsilon {
        return ValidityTag::ConstraintInvalid;
    }
    ValidityTag::Valid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foliation::{CoParameter, ConstraintKind, Foliation, ObjectPoseRule};

    fn test_world() -> (Environment, FoliationSet) {
        let env = Environment {
            bounds: Aabb::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap(),
            robot_radius: 0.1,
            object_radius: 0.3,
            robot_obstacles: vec![ConvexShape::Box {
                min: vec![4.0, 4.0],
                max: vec![6.0, 6.0],
            }],
            object_obstacles: vec![ConvexShape::Ball {
                center: vec![2.0, 1.0],
                radius: 0.5,
            }],
        };
        let f = Foliation {
            id: 0,
            name: "heights".to_string(),
            constraint: ConstraintKind::AxisOffset { axis: 1 },
            co_params: vec![CoParameter::new("h1", vec![1.0, 0.5, 0.0])],
            epsilon: 1e-6,
            sigma_sim: Some(1.0),
            object_pose: ObjectPoseRule::Attached { offset_start: 1 },
        };
        let set = FoliationSet::new(vec![f], 2).unwrap();
        (env, set)
    }

    #[test]
    fn robot_obstacle_containment() {
        let (env, set) = test_world();
        let tag = check_validity(&Configuration(vec![5.0, 1.0]), LeafId::new(0, 0), &env, &set);
        // (5,1) is outside the box but the leaf is y=1; use a point inside it.
        assert_eq!(tag, ValidityTag::Valid);
        let tag = check_validity(&Configuration(vec![5.0, 5.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::RobotInvalid);
    }

    #[test]
    fn out_of_bounds_is_robot_invalid() {
        let (env, set) = test_world();
        let tag = check_validity(
            &Configuration(vec![-1.0, 1.0]),
            LeafId::new(0, 0),
            &env,
            &set,
        );
        assert_eq!(tag, ValidityTag::RobotInvalid);
    }

    #[test]
    fn constraint_violation_when_collision_free() {
        let (env, set) = test_world();
        let tag = check_validity(&Configuration(vec![8.0, 1.3]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::ConstraintInvalid);
    }

    #[test]
    fn on_leaf_collision_free_is_valid() {
        let (env, set) = test_world();
        let tag = check_validity(&Configuration(vec![8.0, 1.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::Valid);
    }

    #[test]
    fn carried_object_collision_depends_on_grasp_offset() {
        let (env, set) = test_world();
        // Robot at (1.5, 1.0): object sits at (2.0, 1.0), inside the object
        // obstacle ball; the robot disc itself is clear.
        let tag = check_validity(&Configuration(vec![1.5, 1.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::ObjectInvalid);
    }

    #[test]
    fn precedence_robot_over_object() {
        let (mut env, set) = test_world();
        // Make the robot obstacle overlap the object obstacle region.
        env.robot_obstacles.push(ConvexShape::Ball {
            center: vec![1.5, 1.0],
            radius: 0.2,
        });
        let tag = check_validity(&Configuration(vec![1.5, 1.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::RobotInvalid);
    }

    #[test]
    fn parked_object_blocks_robot() {
        let env = Environment {
            bounds: Aabb::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap(),
            robot_radius: 0.1,
            object_radius: 0.4,
            robot_obstacles: vec![],
            object_obstacles: vec![],
        };
        let f = Foliation {
            id: 0,
            name: "transit".to_string(),
            constraint: ConstraintKind::Free,
            co_params: vec![CoParameter::new("p", vec![3.0, 3.0])],
            epsilon: 1e-6,
            sigma_sim: Some(1.0),
            object_pose: ObjectPoseRule::Parked { position_start: 0 },
        };
        let set = FoliationSet::new(vec![f], 2).unwrap();
        let tag = check_validity(&Configuration(vec![3.2, 3.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::ObjectInvalid);
        let tag = check_validity(&Configuration(vec![5.0, 5.0]), LeafId::new(0, 0), &env, &set);
        assert_eq!(tag, ValidityTag::Valid);
    }
}
