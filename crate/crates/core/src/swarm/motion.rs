use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::WorldConfig;
use super::geometry::{wrap_angle, Vec2};
use super::sensing::Neighbor;
use super::world::{Environment, RobotState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionIntent {
    Hold,
    Wander,
    /// Head for `point`. When docking the robot drives straight in and
    /// ignores its neighbours.
    GoTo { point: Vec2, docking: bool },
}

fn jitter(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// Cone half-angle in which a neighbour counts as "in the way".
const BLOCK_CONE: f64 = std::f64::consts::FRAC_PI_3;

pub fn is_blocked(robot: &RobotState, dir: Vec2, others: &[Neighbor], clearance: f64) -> bool {
    others.iter().any(|n| {
        if n.id == robot.id {
            return false;
        }
        let v = n.position.sub(robot.position);
        let d = v.norm();
        d < clearance && v.dot(dir) > d * BLOCK_CONE.cos()
    })
}

/// Sum of inverse-square pushes from bodies and walls within clearance.
fn escape_direction(
    at: Vec2,
    me: crate::domain::RobotId,
    others: &[Neighbor],
    env: &Environment,
    cfg: &WorldConfig,
) -> Option<Vec2> {
    let mut push = Vec2::new(0.0, 0.0);
    for n in others.iter().filter(|n| n.id != me) {
        let v = at.sub(n.position);
        let d = v.norm();
        if d > 1e-9 && d < cfg.clearance {
            push = push.add(v.scale(1.0 / (d * d * d)));
        }
    }
    let walls = [
        (at.x, Vec2::new(1.0, 0.0)),
        (env.width - at.x, Vec2::new(-1.0, 0.0)),
        (at.y, Vec2::new(0.0, 1.0)),
        (env.height - at.y, Vec2::new(0.0, -1.0)),
    ];
    for (gap, normal) in walls {
        let d = gap.max(1e-3);
        if d < cfg.clearance {
            push = push.add(normal.scale(1.0 / (d * d)));
        }
    }
    let n = push.norm();
    (n > 1e-9).then(|| push.scale(1.0 / n))
}

/// Advances the robot by one tick of length `dt`.
pub fn navigate(
    robot: &mut RobotState,
    intent: MotionIntent,
    others: &[Neighbor],
    env: &Environment,
    cfg: &WorldConfig,
    dt: f64,
    rng: &mut impl Rng,
) {
    let step = cfg.speed * dt;
    let (desired, remaining) = match intent {
        MotionIntent::Hold => return,
        MotionIntent::GoTo { point, docking: true } => {
            let d = point.sub(robot.position);
            let dist = d.norm();
            if dist > 0.0 {
                robot.heading = d.angle();
                robot.position = if dist <= step {
                    point
                } else {
                    robot.position.add(d.scale(step / dist))
                };
            }
            robot.nav.avoid_timer = 0.0;
            return;
        }
        MotionIntent::GoTo { point, docking: false } => {
            let d = point.sub(robot.position);
            (d.angle() + jitter(cfg.nav_jitter, rng), d.norm())
        }
        MotionIntent::Wander => (robot.heading + jitter(cfg.wander_sigma, rng), f64::INFINITY),
    };
    let desired = if robot.nav.avoid_timer > 0.0 {
        robot.nav.avoid_timer -= dt;
        robot.nav.avoid_heading
    } else {
        desired
    };
    robot.heading = wrap_angle(desired);
    let mut dir = Vec2::from_angle(robot.heading);
    let mut remaining = remaining;
    if is_blocked(robot, dir, others, cfg.clearance) {
        if robot.nav.avoid_timer <= 0.0 {
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            robot.nav.avoid_heading = wrap_angle(desired + side * std::f64::consts::FRAC_PI_2);
            robot.nav.avoid_timer = cfg.avoid_time;
            return;
        }
        // Boxed in on the sidestep as well: back away from the crowd.
        match escape_direction(robot.position, robot.id, others, env, cfg) {
            Some(away) => {
                dir = away;
                remaining = f64::INFINITY;
            }
            None => return,
        }
    }
    let next = robot.position.add(dir.scale(step.min(remaining)));
    let clamped = env.clamp(next, cfg.robot_radius);
    if clamped != next && matches!(intent, MotionIntent::Wander) {
        let centre = Vec2::new(env.width / 2.0, env.height / 2.0);
        robot.heading = wrap_angle(centre.sub(robot.position).angle() + rng.random_range(-0.6..0.6));
    }
    // Never push further into another body.
    let overlaps = others.iter().any(|n| {
        n.id != robot.id
            && n.position.dist(clamped) < 2.0 * cfg.robot_radius
            && n.position.dist(clamped) < n.position.dist(robot.position)
    });
    if !overlaps {
        robot.position = clamped;
    }
}
