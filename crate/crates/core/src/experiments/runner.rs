use crate::contract::{ContractState, Verdict};
use crate::error::Result;
use crate::events::{Event, EventKind};
use crate::ledger::Block;
use crate::swarm::Simulation;

use super::config::{ExperimentConfig, StopRule};
use super::metrics::RunMetrics;

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub events: Vec<Event>,
    pub genesis: ContractState,
    pub chain: Vec<Block>,
    pub digest: String,
    /// Largest open-cluster count in any node's copy of the contract.
    pub max_open_any_node: usize,
}

/// Runs one (config, seed) pair to its stop rule. The final state of every
/// node is checked against a replay of the chain before metrics are taken.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    let params = config.contract_params()?;
    let mut sim = Simulation::new(
        config.world_config(),
        config.gossip,
        params,
        crate::domain::TokenAmount(config.initial_balance),
        &config.profiles(),
        config.sensor_source()?,
        seed,
    )?;
    let mut accepted = 0usize;
    let reason = loop {
        if let Some((_, outcomes)) = sim.tick() {
            accepted += outcomes
                .iter()
                .flat_map(|o| &o.settlements)
                .filter(|s| s.verdict == Verdict::Accepted)
                .count();
            match config.stop {
                StopRule::FirstAcceptedAgreement if accepted >= 1 => break "first_accepted_agreement",
                StopRule::AgreementCount { count } if accepted >= count => break "agreement_count",
                _ => {}
            }
        }
        if let StopRule::MaxSimTime { seconds } = config.stop {
            if sim.clock + 1e-9 >= seconds {
                break "max_sim_time";
            }
        }
        if sim.clock + 1e-9 >= config.max_sim_time {
            break "time_limit";
        }
    };
    let digest = sim.finish(reason)?;
    let metrics = RunMetrics::from_events(&sim.events)?;
    Ok(RunOutput {
        config: config.clone(),
        seed,
        metrics,
        genesis: sim.network.genesis.clone(),
        chain: std::mem::take(&mut sim.network.chain),
        digest,
        max_open_any_node: sim.network.max_open,
        events: std::mem::take(&mut sim.events),
    })
}

/// True when the log reports a stop. Runs cut short by an error have none.
pub fn completed(events: &[Event]) -> bool {
    matches!(events.last().map(|e| &e.kind), Some(EventKind::Stop { .. }))
}

/// One independent unit of work for [`run_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub config: ExperimentConfig,
    pub seed: u64,
}

impl Job {
    /// Every seed of every config.
    pub fn expand(configs: &[ExperimentConfig]) -> Vec<Job> {
        configs
            .iter()
            .flat_map(|c| {
                c.seeds.iter().map(|s| Job {
                    config: c.clone(),
                    seed: *s,
                })
            })
            .collect()
    }
}

/// Runs jobs independently; results keep the order of `jobs`.
pub fn run_batch(jobs: &[Job]) -> Vec<Result<RunOutput>> {
    map_jobs(jobs, |j| run(&j.config, j.seed))
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_jobs<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_jobs<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    map_jobs_sequential(items, f)
}

pub fn map_jobs_sequential<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}
