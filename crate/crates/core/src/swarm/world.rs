use serde::{Deserialize, Serialize};

use super::config::{LandmarkSpec, WorldConfig};
use super::geometry::{point_segment_distance, Vec2};
use crate::domain::{ClusterId, Observation, RobotId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorProfile {
    Honest,
    /// Inverts every vote it casts.
    SafetyAttacker,
    /// Never submits.
    LivenessAttacker,
    /// Withholds at valuable landmarks, endorses the rest.
    CombinedAttacker,
    /// Never submits; parks in front of the valuable landmark.
    PhysicalAttacker,
}

impl BehaviorProfile {
    pub fn is_attacker(self) -> bool {
        self != BehaviorProfile::Honest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FsmState {
    Query,
    Validate(ClusterId),
    Explore,
    Report,
}

/// A landmark panel on the arena wall with its queueing slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark {
    pub name: String,
    pub center: Vec2,
    /// Unit vector pointing into the arena.
    pub normal: Vec2,
    pub half_width: f64,
    pub true_color: Observation,
    pub valuable: bool,
    pub slots: Vec<Vec2>,
}

impl Landmark {
    pub fn from_spec(spec: &LandmarkSpec, cfg: &WorldConfig) -> Self {
        let [x, y] = spec.position;
        let normal = if y == cfg.arena_height {
            Vec2::new(0.0, -1.0)
        } else if y == 0.0 {
            Vec2::new(0.0, 1.0)
        } else if x == 0.0 {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(-1.0, 0.0)
        };
        let tangent = Vec2::new(-normal.y, normal.x);
        let center = Vec2::new(x, y);
        let n = cfg.occupancy_slots;
        let slots = (0..n)
            .map(|k| {
                let along = (k as f64 - (n as f64 - 1.0) / 2.0) * cfg.slot_spacing;
                center
                    .add(normal.scale(cfg.slot_offset))
                    .add(tangent.scale(along))
            })
            .collect();
        Landmark {
            name: spec.name.clone(),
            center,
            normal,
            half_width: (n as f64 * cfg.slot_spacing / 2.0).max(cfg.slot_spacing),
            true_color: Observation::new(spec.color.clone()),
            valuable: spec.valuable,
            slots,
        }
    }

    pub fn ends(&self) -> (Vec2, Vec2) {
        let t = Vec2::new(-self.normal.y, self.normal.x).scale(self.half_width);
        (self.center.sub(t), self.center.add(t))
    }

    pub fn distance_to_panel(&self, p: Vec2) -> f64 {
        let (a, b) = self.ends();
        point_segment_distance(p, a, b)
    }

    /// Points a camera may aim at; the panel counts as seen if any is.
    pub fn sight_points(&self) -> [Vec2; 3] {
        let (a, b) = self.ends();
        [a.scale(0.8).add(b.scale(0.2)), self.center, a.scale(0.2).add(b.scale(0.8))]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub width: f64,
    pub height: f64,
    pub landmarks: Vec<Landmark>,
    /// `occupancy[landmark][slot]`.
    pub occupancy: Vec<Vec<Option<RobotId>>>,
}

impl Environment {
    pub fn new(cfg: &WorldConfig) -> Self {
        let landmarks: Vec<Landmark> = cfg
            .landmarks
            .iter()
            .map(|l| Landmark::from_spec(l, cfg))
            .collect();
        let occupancy = landmarks.iter().map(|l| vec![None; l.slots.len()]).collect();
        Environment {
            width: cfg.arena_width,
            height: cfg.arena_height,
            landmarks,
            occupancy,
        }
    }

    /// Reserves the free slot nearest to `from`.
    pub fn claim_slot(&mut self, landmark: usize, robot: RobotId, from: Vec2) -> Option<usize> {
        let lm = &self.landmarks[landmark];
        let slot = self.occupancy[landmark]
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_none())
            .map(|(k, _)| k)
            .min_by(|a, b| lm.slots[*a].dist(from).total_cmp(&lm.slots[*b].dist(from)))?;
        self.occupancy[landmark][slot] = Some(robot);
        Some(slot)
    }

    pub fn release(&mut self, landmark: usize, slot: usize, robot: RobotId) {
        if self.occupancy[landmark][slot] == Some(robot) {
            self.occupancy[landmark][slot] = None;
        }
    }

    pub fn free_slots(&self, landmark: usize) -> usize {
        self.occupancy[landmark].iter().filter(|o| o.is_none()).count()
    }

    pub fn clamp(&self, p: Vec2, margin: f64) -> Vec2 {
        Vec2::new(
            p.x.clamp(margin, self.width - margin),
            p.y.clamp(margin, self.height - margin),
        )
    }
}

/// Navigation memory of one robot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Nav {
    /// Landmark the robot is heading for.
    pub goal: Option<usize>,
    /// Reserved slot at `goal`.
    pub slot: Option<usize>,
    /// Seconds spent sampling at the slot.
    pub dwell: f64,
    /// Seconds left in a sidestep, and its heading.
    pub avoid_timer: f64,
    pub avoid_heading: f64,
    /// Closest colour match seen while validating: (landmark, distance).
    pub best: Option<(usize, f64)>,
}

/// A report the robot has sent but not yet seen on its own chain copy.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingReport {
    pub nonce: u64,
    pub target: Option<ClusterId>,
    pub observation: Observation,
    pub deposit: crate::domain::TokenAmount,
    pub submitted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: RobotId,
    pub position: Vec2,
    pub heading: f64,
    pub fsm: FsmState,
    /// Seconds in the current Validate or Explore episode.
    pub state_timer: f64,
    pub behavior: BehaviorProfile,
    /// Systematic sensor offset, fixed for the robot's lifetime.
    pub bias: Observation,
    pub next_nonce: u64,
    pub nav: Nav,
    pub validate_centroid: Option<Observation>,
    pub pending: Vec<PendingReport>,
    /// Landmark to skip when exploring, normally the one just left.
    pub avoid_landmark: Option<usize>,
}

impl RobotState {
    pub fn new(id: RobotId, position: Vec2, heading: f64, behavior: BehaviorProfile, bias: Observation) -> Self {
        RobotState {
            id,
            position,
            heading,
            fsm: FsmState::Query,
            state_timer: 0.0,
            behavior,
            bias,
            next_nonce: 0,
            nav: Nav::default(),
            validate_centroid: None,
            pending: Vec::new(),
            avoid_landmark: None,
        }
    }

    /// Parked in a slot of `landmark`, sampling or waiting.
    pub fn at_slot(&self, env: &Environment) -> Option<(usize, usize)> {
        let (g, s) = (self.nav.goal?, self.nav.slot?);
        (self.position.dist(env.landmarks[g].slots[s]) < 1e-3).then_some((g, s))
    }
}
