use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::behavior::{apply_behavior, honest_action};
use super::config::WorldConfig;
use super::fsm::{fsm_step, FsmContext};
use super::geometry::Vec2;
use super::motion::{navigate, MotionIntent};
use super::sensing::{Neighbor, SensorSource};
use super::world::{BehaviorProfile, Environment, PendingReport, RobotState};
use crate::contract::{ApplyOutcome, ContractParams, ContractState};
use crate::domain::{Observation, Report, RobotId, TokenAmount};
use crate::error::{Error, Result};
use crate::events::{Event, EventKind, RobotInfo};
use crate::ledger::{Adjacency, Block, GossipConfig, Network};

/// Minimum centre distance between robots at start-up.
const START_SEPARATION: f64 = 0.15;

/// A full swarm run: robots in the arena plus their replicated ledger.
#[derive(Debug)]
pub struct Simulation {
    pub cfg: WorldConfig,
    pub env: Environment,
    pub robots: Vec<RobotState>,
    pub network: Network,
    pub rng: ChaCha8Rng,
    pub source: SensorSource,
    pub tick_index: u64,
    pub clock: f64,
    pub events: Vec<Event>,
}

impl Simulation {
    /// `profiles[i]` is the behaviour of robot `i + 1`; every robot starts
    /// with `balance` base units.
    pub fn new(
        cfg: WorldConfig,
        gossip: GossipConfig,
        params: ContractParams,
        balance: TokenAmount,
        profiles: &[BehaviorProfile],
        source: SensorSource,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if profiles.len() != cfg.robots as usize {
            return Err(Error::InvalidConfig(format!(
                "{} behaviour profiles for {} robots",
                profiles.len(),
                cfg.robots
            )));
        }
        if params.dim != cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim(),
                actual: params.dim,
            });
        }
        let genesis = ContractState::new(
            params,
            (1..=cfg.robots).map(|i| (RobotId(i), balance)),
        )?;
        let network = Network::new(genesis, gossip)?;
        let env = Environment::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let robots = place_robots(&cfg, profiles, &mut rng)?;
        let events = vec![Event {
            t: 0.0,
            kind: EventKind::Start {
                seed,
                robots: robots
                    .iter()
                    .map(|r| RobotInfo {
                        robot: r.id,
                        behavior: r.behavior,
                    })
                    .collect(),
                initial_supply: network.genesis.supply().units(),
                capacity: network.genesis.params().quota.capacity(),
                reference: reference(&env, &robots, &source),
            },
        }];
        Ok(Simulation {
            cfg,
            env,
            robots,
            network,
            rng,
            source,
            tick_index: 0,
            clock: 0.0,
            events,
        })
    }

    pub fn dt(&self) -> f64 {
        self.network.config.tick
    }

    pub fn neighbors(&self) -> Vec<Neighbor> {
        self.robots
            .iter()
            .map(|r| Neighbor {
                id: r.id,
                position: r.position,
                jamming: r.behavior == BehaviorProfile::PhysicalAttacker && r.at_slot(&self.env).is_some(),
            })
            .collect()
    }

    fn log(&mut self, kind: EventKind) {
        self.events.push(Event { t: self.clock, kind });
    }

    /// Advances one tick: decisions, motion, gossip, then sealing when a
    /// block is due. Returns the block sealed this tick, if any, with its
    /// canonical outcomes.
    pub fn tick(&mut self) -> Option<(Block, Vec<ApplyOutcome>)> {
        self.tick_index += 1;
        let dt = self.dt();
        self.clock = self.tick_index as f64 * dt;
        let now = self.clock;

        let snapshot = self.neighbors();
        let mut intents = Vec::with_capacity(self.robots.len());
        for i in 0..self.robots.len() {
            let out = {
                let mut ctx = FsmContext {
                    env: &mut self.env,
                    others: &snapshot,
                    view: &self.network.views[i].local_state,
                    cfg: &self.cfg,
                    source: &self.source,
                    now,
                    dt,
                };
                fsm_step(&mut self.robots[i], &mut ctx, &mut self.rng)
            };
            let robot = self.robots[i].id;
            for (from, to) in out.transitions {
                self.log(EventKind::Transition { robot, from, to });
            }
            if let Some((sensed, target)) = out.reading {
                self.handle_reading(i, sensed, target, now);
            }
            intents.push(out.intent);
        }

        for (i, intent) in intents.into_iter().enumerate() {
            if intent == MotionIntent::Hold {
                continue;
            }
            let others = self.neighbors();
            navigate(
                &mut self.robots[i],
                intent,
                &others,
                &self.env,
                &self.cfg,
                dt,
                &mut self.rng,
            );
        }

        let positions: Vec<(f64, f64)> = self.robots.iter().map(|r| (r.position.x, r.position.y)).collect();
        let proximity = Adjacency::within_range(&positions, self.network.config.comm_range);
        let seen = self.network.receptions.len();
        self.network.gossip(&proximity, now);
        for i in seen..self.network.receptions.len() {
            let r = self.network.receptions[i].clone();
            self.log(EventKind::Received {
                block: r.block,
                robot: r.robot,
                delay: r.delay,
            });
        }

        let per_block = self.network.config.ticks_per_block();
        if self.tick_index % per_block != 0 {
            return None;
        }
        let slot = self.tick_index / per_block - 1;
        let (block, outcomes) = self.network.seal(slot, now)?;
        self.log(EventKind::Block {
            index: block.index,
            sealer: block.sealer,
            txs: block.txs.len(),
        });
        for o in &outcomes {
            self.log(EventKind::Applied {
                block: block.index,
                report: o.report,
                status: o.status.clone(),
                open: o.open_peak,
            });
            for s in &o.settlements {
                self.log(EventKind::Settlement(s.clone()));
            }
        }
        Some((block, outcomes))
    }

    fn handle_reading(&mut self, i: usize, sensed: super::sensing::Sensed, target: Option<crate::domain::ClusterId>, now: f64) {
        let lm = &self.env.landmarks[sensed.landmark];
        let (name, valuable) = (lm.name.clone(), lm.valuable);
        let robot = &mut self.robots[i];
        robot.avoid_landmark = Some(sensed.landmark);
        let id = robot.id;
        self.events.push(Event {
            t: now,
            kind: EventKind::Observe {
                robot: id,
                landmark: name.clone(),
                valuable,
                observation: sensed.observation.clone(),
                corrupted: sensed.corrupted,
            },
        });
        let honest = honest_action(
            valuable,
            sensed.observation,
            target,
            self.cfg.explore_reports_non_valuable,
        );
        let action = apply_behavior(robot.behavior, honest);
        if !action.submit {
            return;
        }
        let view = &self.network.views[i].local_state;
        let deposit = view.required_deposit(id).unwrap_or_default();
        let free = view.balance(id).unwrap_or_default();
        let reserved: TokenAmount = robot.pending.iter().map(|p| p.deposit).sum();
        if deposit.is_zero() || free.checked_sub(reserved).is_none_or(|f| f < deposit) {
            self.events.push(Event {
                t: now,
                kind: EventKind::Skip { robot: id, target },
            });
            return;
        }
        let report = Report {
            observation: action.observation,
            robot: id,
            deposit,
            vote: action.vote,
            target: action.target,
            nonce: robot.next_nonce,
        };
        robot.next_nonce += 1;
        robot.pending.push(PendingReport {
            nonce: report.nonce,
            target: report.target,
            observation: report.observation.clone(),
            deposit,
            submitted: now,
        });
        let honest = robot.behavior == BehaviorProfile::Honest;
        self.network.submit(&report, now);
        self.events.push(Event {
            t: now,
            kind: EventKind::Submit {
                report,
                landmark: name,
                valuable,
                honest,
            },
        });
    }

    /// Logs the end of the run after a final full synchronisation and checks
    /// every node against an independent replay.
    pub fn finish(&mut self, reason: &str) -> Result<String> {
        self.network.synchronize();
        let digest = self.network.verify()?.to_string();
        self.log(EventKind::Stop {
            reason: reason.to_string(),
            digest: digest.clone(),
        });
        Ok(digest)
    }
}

/// Mean honest reading of the first valuable landmark: its true colour plus
/// the mean honest bias, or the recorded mean in replay mode.
fn reference(env: &Environment, robots: &[RobotState], source: &SensorSource) -> Option<Observation> {
    let lm = env.landmarks.iter().find(|l| l.valuable)?;
    if let SensorSource::Replay(ds) = source {
        if let Some(m) = ds.mean(&lm.name) {
            return Some(m);
        }
    }
    let honest: Vec<&RobotState> = robots.iter().filter(|r| !r.behavior.is_attacker()).collect();
    if honest.is_empty() {
        return Some(lm.true_color.clone());
    }
    let n = honest.len() as f64;
    let mean_bias: Vec<f64> = (0..lm.true_color.dim())
        .map(|d| honest.iter().map(|r| r.bias.0[d]).sum::<f64>() / n)
        .collect();
    Some(lm.true_color.offset(&Observation::new(mean_bias)))
}

fn place_robots(cfg: &WorldConfig, profiles: &[BehaviorProfile], rng: &mut ChaCha8Rng) -> Result<Vec<RobotState>> {
    let margin = 0.2f64.min(cfg.arena_width / 4.0).min(cfg.arena_height / 4.0);
    let bias = Normal::new(0.0, cfg.bias_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut placed: Vec<Vec2> = Vec::new();
    let mut robots = Vec::with_capacity(profiles.len());
    for (i, profile) in profiles.iter().enumerate() {
        let mut tries = 0;
        let pos = loop {
            let p = Vec2::new(
                rng.random_range(margin..cfg.arena_width - margin),
                rng.random_range(margin..cfg.arena_height - margin),
            );
            if placed.iter().all(|q| q.dist(p) >= START_SEPARATION) {
                break p;
            }
            tries += 1;
            if tries > 10_000 {
                return Err(Error::InvalidConfig("arena too small for the swarm".into()));
            }
        };
        placed.push(pos);
        let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let b: Vec<f64> = (0..cfg.dim())
            .map(|_| if cfg.bias_sigma > 0.0 { bias.sample(rng) } else { 0.0 })
            .collect();
        robots.push(RobotState::new(
            RobotId(i as u32 + 1),
            pos,
            heading,
            *profile,
            Observation::new(b),
        ));
    }
    Ok(robots)
}
