use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A colored panel mounted on an arena wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSpec {
    pub name: String,
    /// Panel centre, metres. Must lie on an arena wall.
    pub position: [f64; 2],
    pub color: Vec<f64>,
    pub valuable: bool,
}

/// Physical and behavioural parameters of the arena and its robots. Every
/// field has a default; see the README for which ones are calibrated guesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub robots: u32,
    pub arena_width: f64,
    pub arena_height: f64,
    pub landmarks: Vec<LandmarkSpec>,
    /// Distance from the panel at which its tag can be read.
    pub tag_range: f64,
    /// Robots that can sit in front of one panel at once.
    pub occupancy_slots: usize,
    /// Spacing between neighbouring slots along the panel.
    pub slot_spacing: f64,
    /// Distance of the slot line from the wall.
    pub slot_offset: f64,
    /// Beyond this distance from a panel a robot walks toward it; within it,
    /// it claims a slot or queues.
    pub approach_radius: f64,
    pub speed: f64,
    pub robot_radius: f64,
    /// Centre distance below which a robot ahead blocks motion.
    pub clearance: f64,
    /// Full camera field of view, degrees.
    pub fov_deg: f64,
    /// Seconds a robot may spend in Validate or Explore.
    pub state_timeout: f64,
    /// Seconds a validating robot searches before settling for the closest
    /// match seen so far.
    pub validate_search: f64,
    /// Seconds spent sampling at a tag before reading it.
    pub sample_time: f64,
    /// How long a submitted report counts as "already validated" before it
    /// shows up on chain.
    pub pending_grace: f64,
    /// Per-robot systematic bias, standard deviation per component.
    pub bias_sigma: f64,
    /// Per-reading noise, standard deviation per component.
    pub noise_sigma: f64,
    /// Heading perturbation per tick while wandering, radians.
    pub wander_sigma: f64,
    /// Heading perturbation per tick while navigating, radians.
    pub nav_jitter: f64,
    /// Seconds spent turning away after a blocked move.
    pub avoid_time: f64,
    /// Noise multiplier suffered near a parked physical attacker.
    pub corruption_factor: f64,
    pub corruption_radius: f64,
    /// Whether honest explorers submit reports for landmarks whose tag reads
    /// "not valuable". Validators always report.
    pub explore_reports_non_valuable: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            robots: 12,
            arena_width: 2.0,
            arena_height: 2.0,
            landmarks: default_landmarks(),
            tag_range: 0.10,
            occupancy_slots: 6,
            slot_spacing: 0.075,
            slot_offset: 0.06,
            approach_radius: 0.35,
            speed: 0.1,
            robot_radius: 0.035,
            clearance: 0.09,
            fov_deg: 120.0,
            state_timeout: 100.0,
            validate_search: 30.0,
            sample_time: 1.0,
            pending_grace: 120.0,
            bias_sigma: 8.0,
            noise_sigma: 10.0,
            wander_sigma: 0.15,
            nav_jitter: 0.05,
            avoid_time: 1.0,
            corruption_factor: 3.0,
            corruption_radius: 0.25,
            explore_reports_non_valuable: false,
        }
    }
}

pub fn default_landmarks() -> Vec<LandmarkSpec> {
    vec![
        LandmarkSpec {
            name: "red".into(),
            position: [1.0, 2.0],
            color: vec![190.0, 55.0, 60.0],
            valuable: true,
        },
        LandmarkSpec {
            name: "green".into(),
            position: [0.0, 0.7],
            color: vec![60.0, 165.0, 80.0],
            valuable: false,
        },
        LandmarkSpec {
            name: "blue".into(),
            position: [2.0, 0.7],
            color: vec![50.0, 80.0, 175.0],
            valuable: false,
        },
    ]
}

impl WorldConfig {
    pub fn dim(&self) -> usize {
        self.landmarks.first().map_or(3, |l| l.color.len())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.arena_width <= 0.0 || self.arena_height <= 0.0 {
            return bad("arena dimensions must be positive".into());
        }
        if self.landmarks.is_empty() {
            return bad("at least one landmark is required".into());
        }
        let dim = self.dim();
        for l in &self.landmarks {
            if l.color.len() != dim {
                return bad(format!("landmark {} has {} color components, expected {dim}", l.name, l.color.len()));
            }
            let [x, y] = l.position;
            let on_wall = x == 0.0 || y == 0.0 || x == self.arena_width || y == self.arena_height;
            if !on_wall {
                return bad(format!("landmark {} must sit on an arena wall", l.name));
            }
        }
        for (name, v) in [
            ("tag_range", self.tag_range),
            ("speed", self.speed),
            ("robot_radius", self.robot_radius),
            ("state_timeout", self.state_timeout),
            ("fov_deg", self.fov_deg),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.occupancy_slots == 0 {
            return bad("occupancy_slots must be at least 1".into());
        }
        if self.slot_offset > self.tag_range {
            return bad("slots must lie within tag range".into());
        }
        if self.noise_sigma < 0.0 || self.bias_sigma < 0.0 {
            return bad("noise parameters must be non-negative".into());
        }
        Ok(())
    }
}
