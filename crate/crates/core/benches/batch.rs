//! Seed batches and settlement enumeration, fanned out over rayon versus run
//! on the calling thread. Build with `--no-default-features` to see the
//! sequential `map_jobs` fallback.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use swarm_oracle::contract::{ContractParams, ContractState};
use swarm_oracle::domain::{ClusterId, DepositQuota, Observation, Report, RobotId, TokenAmount, Vote};
use swarm_oracle::experiments::runner::{map_jobs, map_jobs_sequential};
use swarm_oracle::experiments::{run, AttackKind, ExperimentConfig, Job, StopRule};

fn jobs(n: u64) -> Vec<Job> {
    let config = ExperimentConfig {
        attack: AttackKind::Combined,
        attackers: 3,
        stop: StopRule::MaxSimTime { seconds: 60.0 },
        ..Default::default()
    };
    (1..=n).map(|seed| Job { config: config.clone(), seed }).collect()
}

fn simulate(job: &Job) -> String {
    run(&job.config, job.seed).unwrap().digest
}

/// Settles every cluster of `n` members with deposits in 1..=5 under one
/// fixed vote mask; returns the total gain handed out.
fn enumerate(mask: &u32) -> i64 {
    let n = 5usize;
    let mut total = 0;
    for code in 0..5u64.pow(n as u32) {
        let deposits: Vec<u64> = (0..n).map(|i| code / 5u64.pow(i as u32) % 5 + 1).collect();
        let supply = deposits.iter().sum::<u64>() + 100;
        let params = ContractParams {
            quota: DepositQuota::ONE,
            issuance: TokenAmount(7),
            radius: 60.0,
            initial_supply: TokenAmount(supply),
            dim: 3,
        };
        let balances = deposits
            .iter()
            .enumerate()
            .map(|(i, d)| (RobotId(i as u32 + 1), TokenAmount(*d)))
            .chain([(RobotId(n as u32 + 1), TokenAmount(100))]);
        let mut s = ContractState::new(params, balances).unwrap();
        for i in 0..n {
            let robot = RobotId(i as u32 + 1);
            let r = Report {
                observation: Observation::new(vec![200.0, 20.0, 20.0]),
                robot,
                deposit: s.required_deposit(robot).unwrap(),
                vote: if mask >> i & 1 == 1 { Vote::Reject } else { Vote::Accept },
                target: None,
                nonce: 0,
            };
            s.apply_report(1, &r);
        }
        total += s.settle(2, ClusterId(1)).transfers.iter().map(|t| t.gain).sum::<i64>();
    }
    total
}

fn batch(c: &mut Criterion) {
    let mut g = c.benchmark_group("seed_batch");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for n in [4u64, 8] {
        let js = jobs(n);
        g.bench_with_input(BenchmarkId::new("map_jobs", n), &js, |b, js| b.iter(|| black_box(map_jobs(js, simulate))));
        g.bench_with_input(BenchmarkId::new("sequential", n), &js, |b, js| {
            b.iter(|| black_box(map_jobs_sequential(js, simulate)))
        });
    }
    g.finish();

    let masks: Vec<u32> = (0..32).collect();
    let mut g = c.benchmark_group("settlement_enumeration");
    g.sample_size(10);
    g.bench_function("map_jobs", |b| b.iter(|| black_box(map_jobs(&masks, enumerate))));
    g.bench_function("sequential", |b| b.iter(|| black_box(map_jobs_sequential(&masks, enumerate))));
    g.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
