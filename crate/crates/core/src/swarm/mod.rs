//! Kinematic model of the robot swarm: arena, landmarks, sensing, the
//! per-robot state machine and the attack profiles.

pub mod behavior;
pub mod config;
pub mod fsm;
pub mod geometry;
pub mod motion;
pub mod sensing;
pub mod sim;
pub mod world;

pub use behavior::{apply_behavior, honest_action, Action};
pub use config::{LandmarkSpec, WorldConfig};
pub use fsm::fsm_step;
pub use motion::{navigate, MotionIntent};
pub use sensing::{sense, Dataset, SensorSource};
pub use sim::Simulation;
pub use world::{BehaviorProfile, Environment, FsmState, Landmark, RobotState};
