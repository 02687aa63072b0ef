//! Plot-ready tables. Every row starts with the full parameter set of its run
//! so files can be concatenated and filtered freely.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::events::write_events;
use crate::ledger::write_chain;

use super::config::ExperimentConfig;
use super::metrics::RunMetrics;
use super::runner::RunOutput;

const PROVENANCE: [&str; 10] = [
    "config",
    "attack",
    "robots",
    "attackers",
    "radius",
    "quota",
    "issuance",
    "initial_balance",
    "stop",
    "seed",
];

fn provenance(cfg: &ExperimentConfig, seed: u64) -> Vec<String> {
    let stop = match cfg.stop {
        super::config::StopRule::FirstAcceptedAgreement => "first_accepted_agreement".to_string(),
        super::config::StopRule::MaxSimTime { seconds } => format!("max_sim_time:{seconds}"),
        super::config::StopRule::AgreementCount { count } => format!("agreement_count:{count}"),
    };
    vec![
        cfg.name.clone(),
        cfg.attack.name().to_string(),
        cfg.robots.to_string(),
        cfg.attackers.to_string(),
        cfg.radius.to_string(),
        cfg.quota.clone(),
        cfg.issuance_amount().map(|a| a.units()).unwrap_or_default().to_string(),
        cfg.initial_balance.to_string(),
        stop,
        seed.to_string(),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Table {
    path: std::path::PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(dir: &Path, name: &str, columns: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        let header: Vec<&str> = PROVENANCE.iter().chain(columns).copied().collect();
        writer.write_record(&header)?;
        Ok(Table { path, writer })
    }

    fn row(&mut self, run: &RunOutput, fields: Vec<String>) -> Result<()> {
        let mut rec = provenance(&run.config, run.seed);
        rec.extend(fields);
        self.writer.write_record(&rec)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    digest: &'a str,
    stop_reason: Option<&'a str>,
    violated_safety: bool,
    end_time: f64,
    blocks: usize,
    events: String,
    chain: String,
}

/// Writes the tables, the manifest and per-run event logs and chains.
pub fn emit(runs: &[RunOutput], out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let runs_dir = out.join("runs");
    std::fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut summary = Table::create(
        out,
        "runs.csv",
        &[
            "stop_reason",
            "end_time_s",
            "settlements",
            "accepted",
            "violated_safety",
            "honest_reports",
            "attacker_reports",
            "rejected_reports",
            "first_error",
            "baseline_error",
            "max_open",
            "capacity",
            "delay_mean_s",
            "delay_p90_s",
            "digest",
        ],
    )?;
    let err_cols = ["agreement", "verdict", "consensus_error", "baseline_error", "attacker_initiated", "founder_landmark"];
    let mut error_r = Table::create(out, "error_vs_r.csv", &err_cols)?;
    let mut error_f = Table::create(out, "error_vs_f.csv", &err_cols)?;
    let mut cost = Table::create(out, "cost_vs_f.csv", &["time_s", "time_min", "honest_reports", "reached"])?;
    let mut share = Table::create(out, "attacker_share.csv", &["settlement", "time_s", "held", "supply", "share"])?;
    let mut recovery = Table::create(out, "recovery.csv", &["agreement", "time_s", "duration_s", "duration_min", "honest_reports"])?;
    let mut delay = Table::create(out, "block_delay.csv", &["delay_s", "cdf"])?;

    let mut manifest = Vec::new();
    for run in runs {
        let m: &RunMetrics = &run.metrics;
        summary.row(
            run,
            vec![
                m.stop_reason.clone().unwrap_or_default(),
                m.end_time.to_string(),
                m.agreements.len().to_string(),
                m.accepted().count().to_string(),
                m.violated_safety.to_string(),
                m.honest_reports.to_string(),
                m.attacker_reports.to_string(),
                m.rejected_reports.to_string(),
                opt(m.first_error()),
                opt(m.baseline_error),
                m.max_open.to_string(),
                m.capacity.to_string(),
                m.delays.mean.to_string(),
                m.delays.p90.to_string(),
                run.digest.clone(),
            ],
        )?;
        for a in &m.agreements {
            let row = vec![
                a.index.to_string(),
                format!("{:?}", a.verdict).to_lowercase(),
                opt(a.consensus_error),
                opt(m.baseline_error),
                a.attacker_initiated.to_string(),
                a.founder_landmark.clone().unwrap_or_default(),
            ];
            error_r.row(run, row.clone())?;
            error_f.row(run, row)?;
        }
        let c = m.first_cost();
        cost.row(
            run,
            vec![
                c.duration.to_string(),
                (c.duration / 60.0).to_string(),
                c.honest_reports.to_string(),
                c.reached.to_string(),
            ],
        )?;
        for s in &m.attacker_share {
            share.row(
                run,
                vec![
                    s.settlement.to_string(),
                    s.time.to_string(),
                    s.held.to_string(),
                    s.supply.to_string(),
                    s.share().to_string(),
                ],
            )?;
        }
        for c in &m.costs {
            recovery.row(
                run,
                vec![
                    c.index.to_string(),
                    c.time.to_string(),
                    c.duration.to_string(),
                    (c.duration / 60.0).to_string(),
                    c.honest_reports.to_string(),
                ],
            )?;
        }
        for (d, p) in cdf(&m.delay_samples) {
            delay.row(run, vec![d.to_string(), p.to_string()])?;
        }

        let stem = format!("{}-seed{}", sanitize(&run.config.name), run.seed);
        let events_path = runs_dir.join(format!("{stem}.events.jsonl"));
        let chain_path = runs_dir.join(format!("{stem}.chain.jsonl"));
        write_file(&events_path, |w| write_events(w, &run.events))?;
        write_file(&chain_path, |w| write_chain(w, &run.genesis, &run.chain))?;
        manifest.push((run, events_path, chain_path));
    }
    for t in [summary, error_r, error_f, cost, share, recovery, delay] {
        t.finish()?;
    }
    write_aggregate(runs, out)?;

    let entries: Vec<ManifestEntry> = manifest
        .iter()
        .map(|(run, ev, ch)| ManifestEntry {
            config: &run.config,
            seed: run.seed,
            digest: &run.digest,
            stop_reason: run.metrics.stop_reason.as_deref(),
            violated_safety: run.metrics.violated_safety,
            end_time: run.metrics.end_time,
            blocks: run.chain.len(),
            events: relative(out, ev),
            chain: relative(out, ch),
        })
        .collect();
    let path = out.join("manifest.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &entries).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}

/// Mean and standard deviation across seeds, per config.
fn write_aggregate(runs: &[RunOutput], out: &Path) -> Result<()> {
    let mut groups: BTreeMap<&str, Vec<&RunOutput>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.config.name.as_str()).or_default().push(r);
    }
    let path = out.join("summary.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["config", "metric", "n", "mean", "std"])?;
    for (name, rs) in groups {
        let metrics: [(&str, Vec<f64>); 6] = [
            ("first_error", rs.iter().filter_map(|r| r.metrics.first_error()).collect()),
            ("baseline_error", rs.iter().filter_map(|r| r.metrics.baseline_error).collect()),
            ("first_time_s", rs.iter().map(|r| r.metrics.first_cost().duration).collect()),
            (
                "first_honest_reports",
                rs.iter().map(|r| r.metrics.first_cost().honest_reports as f64).collect(),
            ),
            (
                "violated_safety",
                rs.iter().map(|r| f64::from(u8::from(r.metrics.violated_safety))).collect(),
            ),
            (
                "final_attacker_share",
                rs.iter()
                    .filter_map(|r| r.metrics.attacker_share.last().map(|s| s.share()))
                    .collect(),
            ),
        ];
        for (metric, xs) in metrics {
            let (mean, std) = mean_std(&xs);
            w.write_record([
                name.to_string(),
                metric.to_string(),
                xs.len().to_string(),
                opt(mean),
                opt(std),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut d = samples.to_vec();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in d.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = p,
            _ => out.push((*x, p)),
        }
    }
    out
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run, StopRule};

    const TABLES: [&str; 8] = [
        "runs.csv",
        "error_vs_r.csv",
        "error_vs_f.csv",
        "cost_vs_f.csv",
        "attacker_share.csv",
        "recovery.csv",
        "block_delay.csv",
        "summary.csv",
    ];

    fn short() -> RunOutput {
        let cfg = ExperimentConfig {
            name: "short".into(),
            attackers: 1,
            attack: super::super::AttackKind::Safety,
            stop: StopRule::MaxSimTime { seconds: 60.0 },
            ..Default::default()
        };
        run(&cfg, 5).unwrap()
    }

    #[test]
    fn no_runs_give_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        emit(&[], dir.path()).unwrap();
        for t in TABLES {
            let text = std::fs::read_to_string(dir.path().join(t)).unwrap();
            assert_eq!(text.lines().count(), 1, "{t}");
        }
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.trim(), "[]");
    }

    #[test]
    fn identical_runs_give_identical_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        emit(&[short()], a.path()).unwrap();
        emit(&[short()], b.path()).unwrap();
        let mut names: Vec<String> = TABLES.iter().map(|s| s.to_string()).collect();
        names.push("manifest.json".into());
        names.push("runs/short-seed5.events.jsonl".into());
        names.push("runs/short-seed5.chain.jsonl".into());
        for n in names {
            let x = std::fs::read(a.path().join(&n)).unwrap();
            let y = std::fs::read(b.path().join(&n)).unwrap();
            assert!(!x.is_empty(), "{n}");
            assert_eq!(x, y, "{n}");
        }
        let cost = std::fs::read_to_string(a.path().join("cost_vs_f.csv")).unwrap();
        assert_eq!(cost.lines().count(), 2);
    }

    #[test]
    fn unwritable_target_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("taken");
        std::fs::write(&file, b"x").unwrap();
        let err = emit(&[], &file).unwrap_err().to_string();
        assert!(err.contains("taken"), "{err}");
    }

    #[test]
    fn cdf_merges_ties() {
        assert_eq!(cdf(&[2.0, 1.0, 2.0, 4.0]), vec![(1.0, 0.25), (2.0, 0.75), (4.0, 1.0)]);
        assert!(cdf(&[]).is_empty());
        assert_eq!(mean_std(&[1.0, 3.0]), (Some(2.0), Some(1.0)));
        assert_eq!(mean_std(&[]), (None, None));
    }
}
