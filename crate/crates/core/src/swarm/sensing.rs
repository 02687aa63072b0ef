use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::WorldConfig;
use super::geometry::{segment_hits_disk, wrap_angle, Vec2};
use super::world::{Environment, RobotState};
use crate::domain::{Observation, RobotId};
use crate::error::{Error, Result};

/// What a robot knows about another robot's body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: RobotId,
    pub position: Vec2,
    /// A physical attacker sitting in a landmark slot.
    pub jamming: bool,
}

/// Recorded colour readings, keyed by robot and colour name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    by_robot: BTreeMap<(u32, String), Vec<Observation>>,
    by_color: BTreeMap<String, Vec<Observation>>,
}

impl Dataset {
    /// Reads `robot id, color name, R, G, B` rows. A header row is allowed.
    pub fn from_reader(input: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let mut ds = Dataset::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 1;
            let malformed = |reason: String| Error::Malformed { line, reason };
            if rec.len() < 3 {
                return Err(malformed(format!("expected robot, color and components, got {} fields", rec.len())));
            }
            let robot: u32 = match rec[0].parse() {
                Ok(r) => r,
                Err(_) if i == 0 => continue,
                Err(e) => return Err(malformed(format!("robot id: {e}"))),
            };
            let color = rec[1].to_ascii_lowercase();
            let comps = rec
                .iter()
                .skip(2)
                .map(|f| f.parse::<f64>().map_err(|e| malformed(format!("component {f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            ds.insert(robot, &color, Observation::new(comps));
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn insert(&mut self, robot: u32, color: &str, obs: Observation) {
        self.by_robot
            .entry((robot, color.to_string()))
            .or_default()
            .push(obs.clone());
        self.by_color.entry(color.to_string()).or_default().push(obs);
    }

    /// Component-wise mean of every reading of `color`.
    pub fn mean(&self, color: &str) -> Option<Observation> {
        let rows = self.by_color.get(&color.to_ascii_lowercase())?;
        let first = rows.first()?;
        let n = rows.len() as f64;
        Some(Observation::new(
            (0..first.dim())
                .map(|d| rows.iter().map(|r| r.0[d]).sum::<f64>() / n)
                .collect::<Vec<_>>(),
        ))
    }

    pub fn len(&self) -> usize {
        self.by_color.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Draws a reading for `robot` at a landmark named `color`, falling back
    /// to other robots' readings of the same colour.
    pub fn sample(&self, robot: RobotId, color: &str, rng: &mut impl Rng) -> Option<Observation> {
        let color = color.to_ascii_lowercase();
        let rows = self
            .by_robot
            .get(&(robot.0, color.clone()))
            .or_else(|| self.by_color.get(&color))?;
        if rows.is_empty() {
            return None;
        }
        Some(rows[rng.random_range(0..rows.len())].clone())
    }
}

#[derive(Debug, Clone, Default)]
pub enum SensorSource {
    /// True colour plus robot bias plus Gaussian noise.
    #[default]
    Synthetic,
    /// Recorded readings; noise is only added under interference.
    Replay(Arc<Dataset>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensed {
    pub landmark: usize,
    pub observation: Observation,
    pub tag_readable: bool,
    /// The reading was taken next to a jamming robot.
    pub corrupted: bool,
}

pub fn in_fov(from: Vec2, heading: f64, target: Vec2, fov_deg: f64) -> bool {
    let bearing = target.sub(from).angle();
    wrap_angle(bearing - heading).abs() <= fov_deg.to_radians() / 2.0
}

/// Bodies containing `from` (the viewer's own) do not block the view.
pub fn line_of_sight(from: Vec2, to: Vec2, others: &[Neighbor], body_radius: f64) -> bool {
    !others.iter().any(|n| {
        n.position.dist(from) >= body_radius && segment_hits_disk(from, to, n.position, body_radius)
    })
}

/// Landmarks with at least one unobstructed sight point inside the field of
/// view. A panel within tag range is always seen.
pub fn visible_landmarks(
    position: Vec2,
    heading: f64,
    env: &Environment,
    others: &[Neighbor],
    cfg: &WorldConfig,
) -> Vec<usize> {
    env.landmarks
        .iter()
        .enumerate()
        .filter(|(_, lm)| {
            lm.distance_to_panel(position) <= cfg.tag_range
                || lm.sight_points().iter().any(|p| {
                    in_fov(position, heading, *p, cfg.fov_deg)
                        && line_of_sight(position, *p, others, cfg.robot_radius)
                })
        })
        .map(|(i, _)| i)
        .collect()
}

/// Colour a robot perceives from afar: no per-reading noise, only its bias.
pub fn perceived_color(robot: &RobotState, env: &Environment, landmark: usize) -> Observation {
    env.landmarks[landmark].true_color.offset(&robot.bias)
}

pub fn is_corrupted(robot: &RobotState, others: &[Neighbor], cfg: &WorldConfig) -> bool {
    others
        .iter()
        .any(|n| n.jamming && n.id != robot.id && n.position.dist(robot.position) <= cfg.corruption_radius)
}

/// Takes one noisy reading of the nearest visible landmark.
pub fn sense(
    robot: &RobotState,
    env: &Environment,
    others: &[Neighbor],
    source: &SensorSource,
    cfg: &WorldConfig,
    rng: &mut impl Rng,
) -> Option<Sensed> {
    let landmark = visible_landmarks(robot.position, robot.heading, env, others, cfg)
        .into_iter()
        .min_by(|a, b| {
            env.landmarks[*a]
                .distance_to_panel(robot.position)
                .total_cmp(&env.landmarks[*b].distance_to_panel(robot.position))
        })?;
    let lm = &env.landmarks[landmark];
    let corrupted = is_corrupted(robot, others, cfg);
    let factor = if corrupted { cfg.corruption_factor } else { 1.0 };
    let (base, sigma) = match source {
        SensorSource::Replay(ds) => match ds.sample(robot.id, &lm.name, rng) {
            Some(o) => (o, cfg.noise_sigma * (factor - 1.0).max(0.0)),
            None => (lm.true_color.offset(&robot.bias), cfg.noise_sigma * factor),
        },
        SensorSource::Synthetic => (lm.true_color.offset(&robot.bias), cfg.noise_sigma * factor),
    };
    let observation = add_noise(&base, sigma, rng);
    Some(Sensed {
        landmark,
        observation,
        tag_readable: lm.distance_to_panel(robot.position) <= cfg.tag_range,
        corrupted,
    })
}

pub fn add_noise(base: &Observation, sigma: f64, rng: &mut impl Rng) -> Observation {
    if sigma <= 0.0 {
        return base.clone();
    }
    let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Observation::new(
        base.components()
            .iter()
            .map(|c| c + n.sample(rng))
            .collect::<Vec<_>>(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swarm::world::BehaviorProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn robot_at(x: f64, y: f64, heading: f64) -> RobotState {
        RobotState::new(
            RobotId(1),
            Vec2::new(x, y),
            heading,
            BehaviorProfile::Honest,
            Observation::zeros(3),
        )
    }

    fn quiet() -> WorldConfig {
        WorldConfig {
            noise_sigma: 0.0,
            bias_sigma: 0.0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn noiseless_reading_at_the_red_tag_is_exact() {
        let cfg = quiet();
        let env = Environment::new(&cfg);
        let slot = env.landmarks[0].slots[2];
        let r = robot_at(slot.x, slot.y, std::f64::consts::FRAC_PI_2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sense(&r, &env, &[], &SensorSource::Synthetic, &cfg, &mut rng).unwrap();
        assert_eq!(s.landmark, 0);
        assert!(s.tag_readable);
        assert_eq!(s.observation, env.landmarks[0].true_color);
    }

    #[test]
    fn landmark_behind_the_camera_is_not_seen() {
        let cfg = quiet();
        let env = Environment::new(&cfg);
        // Centre of the arena facing down: red is on the top wall.
        let r = robot_at(1.0, 1.0, -std::f64::consts::FRAC_PI_2);
        let vis = visible_landmarks(r.position, r.heading, &env, &[], &cfg);
        assert!(!vis.contains(&0));
        let up = visible_landmarks(r.position, std::f64::consts::FRAC_PI_2, &env, &[], &cfg);
        assert!(up.contains(&0));
    }

    #[test]
    fn a_wall_of_robots_hides_the_panel() {
        let cfg = quiet();
        let env = Environment::new(&cfg);
        let me = Vec2::new(1.0, 1.5);
        let heading = std::f64::consts::FRAC_PI_2;
        // Bodies on each sight line, just in front of the panel.
        let blockers: Vec<Neighbor> = env.landmarks[0]
            .sight_points()
            .iter()
            .enumerate()
            .map(|(i, p)| Neighbor {
                id: RobotId(10 + i as u32),
                position: me.add(p.sub(me).scale(0.7)),
                jamming: false,
            })
            .collect();
        assert!(visible_landmarks(me, heading, &env, &blockers, &cfg)
            .iter()
            .all(|l| *l != 0));
        assert!(visible_landmarks(me, heading, &env, &blockers[..2], &cfg).contains(&0));
    }

    #[test]
    fn jamming_neighbour_inflates_noise() {
        let cfg = WorldConfig {
            bias_sigma: 0.0,
            ..WorldConfig::default()
        };
        let env = Environment::new(&cfg);
        let slot = env.landmarks[0].slots[2];
        let r = robot_at(slot.x, slot.y, std::f64::consts::FRAC_PI_2);
        let jammer = [Neighbor {
            id: RobotId(2),
            position: env.landmarks[0].slots[3],
            jamming: true,
        }];
        let spread = |others: &[Neighbor]| {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let n = 4000;
            let mut ss = 0.0;
            for _ in 0..n {
                let s = sense(&r, &env, others, &SensorSource::Synthetic, &cfg, &mut rng).unwrap();
                let d = s.observation.0[0] - env.landmarks[0].true_color.0[0];
                ss += d * d;
            }
            (ss / n as f64).sqrt()
        };
        let clean = spread(&[]);
        let noisy = spread(&jammer);
        assert!((clean - cfg.noise_sigma).abs() < 0.6, "{clean}");
        assert!((noisy / clean - cfg.corruption_factor).abs() < 0.2, "{noisy}");
    }

    #[test]
    fn dataset_ingestion_and_sampling() {
        let csv = "robot,color,r,g,b\n1,red,200,10,12\n1,red,202,11,9\n2,Green,10,180,20\n";
        let ds = Dataset::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = ds.sample(RobotId(1), "red", &mut rng).unwrap();
        assert!(o.0[0] >= 200.0);
        // Robot 5 has no own rows and borrows robot 2's green.
        assert_eq!(
            ds.sample(RobotId(5), "green", &mut rng).unwrap(),
            Observation::new(vec![10.0, 180.0, 20.0])
        );
        assert!(ds.sample(RobotId(1), "blue", &mut rng).is_none());
        assert!(Dataset::from_reader("1,red,abc,1,2\n".as_bytes()).is_err());
    }
}
