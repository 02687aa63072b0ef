use rand::Rng;

use super::config::WorldConfig;
use super::motion::MotionIntent;
use super::sensing::{perceived_color, sense, visible_landmarks, Neighbor, Sensed, SensorSource};
use super::world::{BehaviorProfile, Environment, FsmState, RobotState};
use crate::clustering::distance;
use crate::contract::{ContractState, Proposal};
use crate::domain::{ClusterId, ReportId};

/// Inside this distance of its slot a robot drives straight in.
const DOCKING_RANGE: f64 = 0.15;

pub struct FsmContext<'a> {
    pub env: &'a mut Environment,
    pub others: &'a [Neighbor],
    /// The robot's own copy of the contract.
    pub view: &'a ContractState,
    pub cfg: &'a WorldConfig,
    pub source: &'a SensorSource,
    pub now: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub transitions: Vec<(FsmState, FsmState)>,
    /// A tag was read this tick; the robot is now in `Report`.
    pub reading: Option<(Sensed, Option<ClusterId>)>,
    pub intent: MotionIntent,
}

impl StepOutput {
    fn hold() -> Self {
        StepOutput {
            transitions: Vec::new(),
            reading: None,
            intent: MotionIntent::Hold,
        }
    }
}

/// Proposals in the local view that the robot has neither joined nor has a
/// report in flight for.
pub fn unvalidated(robot: &RobotState, view: &ContractState) -> Vec<Proposal> {
    view.query()
        .proposals
        .into_iter()
        .filter(|p| !already_validated(robot, view, p))
        .collect()
}

fn already_validated(robot: &RobotState, view: &ContractState, p: &Proposal) -> bool {
    if view.cluster(p.id).is_some_and(|c| c.has_member(robot.id)) {
        return true;
    }
    let radius = view.params().radius;
    robot.pending.iter().any(|pr| match pr.target {
        Some(t) => t == p.id,
        None => distance(&pr.observation, &p.centroid).is_ok_and(|d| d <= radius),
    })
}

fn release_slot(robot: &mut RobotState, env: &mut Environment) {
    if let (Some(g), Some(s)) = (robot.nav.goal, robot.nav.slot) {
        env.release(g, s, robot.id);
    }
    robot.nav.slot = None;
}

/// Forgets the current navigation goal. Physical attackers keep a slot at a
/// valuable landmark.
pub fn reset_navigation(robot: &mut RobotState, env: &mut Environment) {
    let keep = robot.behavior == BehaviorProfile::PhysicalAttacker
        && robot.nav.goal.is_some_and(|g| env.landmarks[g].valuable)
        && robot.nav.slot.is_some();
    if !keep {
        release_slot(robot, env);
        robot.nav.goal = None;
    }
    robot.nav.dwell = 0.0;
    robot.nav.best = None;
}

fn switch(robot: &mut RobotState, to: FsmState, out: &mut StepOutput) {
    out.transitions.push((robot.fsm, to));
    robot.fsm = to;
}

/// One decision step. Query is instantaneous; Validate and Explore steer the
/// robot to a landmark slot and read its tag after `sample_time` seconds.
pub fn fsm_step(robot: &mut RobotState, ctx: &mut FsmContext<'_>, rng: &mut impl Rng) -> StepOutput {
    let view = ctx.view;
    let now = ctx.now;
    let grace = ctx.cfg.pending_grace;
    let id = robot.id;
    robot.pending.retain(|p| {
        !view.is_applied(ReportId { robot: id, nonce: p.nonce }) && now - p.submitted <= grace
    });

    let mut out = StepOutput::hold();
    match robot.fsm {
        FsmState::Query | FsmState::Report => {
            let candidates: Vec<Proposal> = if robot.behavior == BehaviorProfile::PhysicalAttacker {
                Vec::new()
            } else {
                unvalidated(robot, view)
            };
            reset_navigation(robot, ctx.env);
            robot.state_timer = 0.0;
            let next = if candidates.is_empty() {
                robot.validate_centroid = None;
                FsmState::Explore
            } else {
                let p = &candidates[rng.random_range(0..candidates.len())];
                robot.validate_centroid = Some(p.centroid.clone());
                FsmState::Validate(p.id)
            };
            if robot.fsm == FsmState::Report {
                switch(robot, FsmState::Query, &mut out);
            }
            switch(robot, next, &mut out);
        }
        FsmState::Validate(_) | FsmState::Explore => {
            robot.state_timer += ctx.dt;
            if robot.state_timer + 1e-9 >= ctx.cfg.state_timeout {
                reset_navigation(robot, ctx.env);
                switch(robot, FsmState::Query, &mut out);
                return out;
            }
            if let Some((g, _)) = robot.at_slot(ctx.env) {
                robot.nav.dwell += ctx.dt;
                if robot.nav.dwell + 1e-9 >= ctx.cfg.sample_time {
                    robot.nav.dwell = 0.0;
                    if let Some(s) = sense(robot, ctx.env, ctx.others, ctx.source, ctx.cfg, rng) {
                        if s.tag_readable && s.landmark == g {
                            let target = match robot.fsm {
                                FsmState::Validate(c) => Some(c),
                                _ => None,
                            };
                            switch(robot, FsmState::Report, &mut out);
                            out.reading = Some((s, target));
                        }
                    }
                }
                return out;
            }
            if robot.nav.goal.is_none() {
                robot.nav.goal = pick_goal(robot, ctx, rng);
            }
            out.intent = approach(robot, ctx);
        }
    }
    out
}

fn pick_goal(robot: &mut RobotState, ctx: &FsmContext<'_>, rng: &mut impl Rng) -> Option<usize> {
    let visible = visible_landmarks(robot.position, robot.heading, ctx.env, ctx.others, ctx.cfg);
    match robot.fsm {
        FsmState::Validate(_) => {
            let centroid = robot.validate_centroid.as_ref()?;
            let radius = ctx.view.params().radius;
            for l in visible {
                let d = distance(&perceived_color(robot, ctx.env, l), centroid).ok()?;
                if robot.nav.best.is_none_or(|(_, bd)| d < bd) {
                    robot.nav.best = Some((l, d));
                }
            }
            match robot.nav.best {
                Some((l, d)) if d <= radius || robot.state_timer >= ctx.cfg.validate_search => Some(l),
                _ => None,
            }
        }
        _ if robot.behavior == BehaviorProfile::PhysicalAttacker => {
            visible.into_iter().find(|l| ctx.env.landmarks[*l].valuable)
        }
        // Explore: any visible landmark other than the one just reported.
        _ => {
            let options: Vec<usize> = visible
                .into_iter()
                .filter(|l| Some(*l) != robot.avoid_landmark)
                .collect();
            (!options.is_empty()).then(|| options[rng.random_range(0..options.len())])
        }
    }
}

fn approach(robot: &mut RobotState, ctx: &mut FsmContext<'_>) -> MotionIntent {
    let Some(g) = robot.nav.goal else {
        return MotionIntent::Wander;
    };
    let lm_center = ctx.env.landmarks[g].center;
    if robot.nav.slot.is_none() {
        if robot.position.dist(lm_center) > ctx.cfg.approach_radius {
            return MotionIntent::GoTo {
                point: lm_center,
                docking: false,
            };
        }
        match ctx.env.claim_slot(g, robot.id, robot.position) {
            Some(s) => robot.nav.slot = Some(s),
            // Queue until a slot frees up.
            None => return MotionIntent::Hold,
        }
    }
    let slot = ctx.env.landmarks[g].slots[robot.nav.slot.expect("claimed")];
    MotionIntent::GoTo {
        point: slot,
        docking: robot.position.dist(slot) <= DOCKING_RANGE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractParams;
    use crate::domain::{DepositQuota, Observation, Report, RobotId, TokenAmount, Vote};
    use crate::swarm::geometry::Vec2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state() -> ContractState {
        let params = ContractParams {
            quota: DepositQuota::ONE_THIRD,
            issuance: TokenAmount::ZERO,
            radius: 60.0,
            initial_supply: TokenAmount(36_000_000),
            dim: 3,
        };
        ContractState::uniform(params, 12).unwrap()
    }

    fn robot(behavior: BehaviorProfile) -> RobotState {
        RobotState::new(RobotId(1), Vec2::new(1.0, 1.0), 0.0, behavior, Observation::zeros(3))
    }

    fn step(r: &mut RobotState, env: &mut Environment, view: &ContractState, rng: &mut ChaCha8Rng) -> StepOutput {
        let cfg = WorldConfig::default();
        let mut ctx = FsmContext {
            env,
            others: &[],
            view,
            cfg: &cfg,
            source: &SensorSource::Synthetic,
            now: 0.0,
            dt: 0.1,
        };
        fsm_step(r, &mut ctx, rng)
    }

    fn with_red_proposal() -> ContractState {
        let mut s = state();
        let r = Report {
            observation: Observation::new(vec![190.0, 55.0, 60.0]),
            robot: RobotId(2),
            deposit: TokenAmount(1_000_000),
            vote: Vote::Accept,
            target: None,
            nonce: 0,
        };
        s.apply_report(1, &r);
        s
    }

    #[test]
    fn query_without_proposals_explores() {
        let mut env = Environment::new(&WorldConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut r = robot(BehaviorProfile::Honest);
        let out = step(&mut r, &mut env, &state(), &mut rng);
        assert_eq!(r.fsm, FsmState::Explore);
        assert_eq!(out.transitions, vec![(FsmState::Query, FsmState::Explore)]);
    }

    #[test]
    fn query_with_a_foreign_proposal_validates_it() {
        let mut env = Environment::new(&WorldConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let view = with_red_proposal();
        let mut r = robot(BehaviorProfile::Honest);
        step(&mut r, &mut env, &view, &mut rng);
        assert_eq!(r.fsm, FsmState::Validate(ClusterId(1)));

        // The founder itself has nothing left to validate.
        let mut founder = robot(BehaviorProfile::Honest);
        founder.id = RobotId(2);
        step(&mut founder, &mut env, &view, &mut rng);
        assert_eq!(founder.fsm, FsmState::Explore);

        // Physical attackers never validate.
        let mut p = robot(BehaviorProfile::PhysicalAttacker);
        step(&mut p, &mut env, &view, &mut rng);
        assert_eq!(p.fsm, FsmState::Explore);
    }

    #[test]
    fn explore_times_out_back_to_query() {
        let mut env = Environment::new(&WorldConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let view = state();
        let mut r = robot(BehaviorProfile::Honest);
        r.fsm = FsmState::Explore;
        r.state_timer = 99.95;
        let out = step(&mut r, &mut env, &view, &mut rng);
        assert_eq!(r.fsm, FsmState::Query);
        assert_eq!(out.transitions, vec![(FsmState::Explore, FsmState::Query)]);
    }

    #[test]
    fn sampling_at_a_slot_produces_a_reading() {
        let cfg = WorldConfig::default();
        let mut env = Environment::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let view = state();
        let mut r = robot(BehaviorProfile::Honest);
        r.fsm = FsmState::Explore;
        let slot = env.claim_slot(0, r.id, r.position).unwrap();
        r.nav.goal = Some(0);
        r.nav.slot = Some(slot);
        r.position = env.landmarks[0].slots[slot];
        r.heading = std::f64::consts::FRAC_PI_2;
        let mut reading = None;
        for _ in 0..10 {
            let out = step(&mut r, &mut env, &view, &mut rng);
            if out.reading.is_some() {
                reading = out.reading;
                break;
            }
        }
        let (s, target) = reading.expect("read within the sample time");
        assert_eq!(s.landmark, 0);
        assert_eq!(target, None);
        assert_eq!(r.fsm, FsmState::Report);
    }

    #[test]
    fn validator_heads_for_the_matching_colour() {
        let cfg = WorldConfig::default();
        let mut env = Environment::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let view = with_red_proposal();
        let mut r = robot(BehaviorProfile::Honest);
        // Facing up: red (top) and both side panels are in view.
        r.heading = std::f64::consts::FRAC_PI_2;
        step(&mut r, &mut env, &view, &mut rng);
        let out = step(&mut r, &mut env, &view, &mut rng);
        assert_eq!(r.nav.goal, Some(0));
        assert!(matches!(out.intent, MotionIntent::GoTo { .. }));
    }
}
