use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::distance;
use crate::contract::{ReportStatus, SettlementOutcome, Verdict};
use crate::domain::{Observation, ReportId, RobotId};
use crate::error::{Error, Result};
use crate::events::{Event, EventKind};
use crate::ledger::DelaySummary;

/// One settled proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    /// 1-based over all settlements of the run.
    pub index: usize,
    pub block: u64,
    pub cluster: u64,
    pub verdict: Verdict,
    pub centroid: Observation,
    /// Seal time of the settling block.
    pub time: f64,
    /// Founded by an attacker's report at a non-valuable landmark.
    pub attacker_initiated: bool,
    pub founder_landmark: Option<String>,
    /// Only for accepted verdicts.
    pub consensus_error: Option<f64>,
    /// An attacker ended up on the winning side.
    pub attacker_won: bool,
}

/// Duration and honest effort behind one accepted agreement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusCost {
    /// 1-based over accepted agreements.
    pub index: usize,
    pub time: f64,
    /// Seconds since the previous accepted agreement or the start.
    pub duration: f64,
    pub honest_reports: u64,
}

/// Cost of the first accepted agreement. Runs that never reach one are
/// censored at their end time with every honest report counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstCost {
    pub duration: f64,
    pub honest_reports: u64,
    pub reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareSample {
    /// Number of redistributing settlements so far.
    pub settlement: usize,
    pub time: f64,
    pub held: u64,
    pub supply: u64,
}

impl ShareSample {
    pub fn share(&self) -> f64 {
        self.held as f64 / self.supply as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub agreements: Vec<AgreementRecord>,
    pub costs: Vec<ConsensusCost>,
    pub attacker_share: Vec<ShareSample>,
    pub delays: DelaySummary,
    pub delay_samples: Vec<f64>,
    pub reference: Option<Observation>,
    /// Plain mean of every submitted observation.
    pub baseline: Option<Observation>,
    pub baseline_error: Option<f64>,
    pub honest_reports: u64,
    pub attacker_reports: u64,
    pub rejected_reports: u64,
    pub violated_safety: bool,
    pub max_open: usize,
    pub capacity: usize,
    pub end_time: f64,
    pub stop_reason: Option<String>,
    pub digest: Option<String>,
}

impl RunMetrics {
    pub fn accepted(&self) -> impl Iterator<Item = &AgreementRecord> {
        self.agreements.iter().filter(|a| a.verdict == Verdict::Accepted)
    }

    pub fn first_error(&self) -> Option<f64> {
        self.accepted().next().and_then(|a| a.consensus_error)
    }

    pub fn first_cost(&self) -> FirstCost {
        match self.costs.first() {
            Some(c) => FirstCost {
                duration: c.duration,
                honest_reports: c.honest_reports,
                reached: true,
            },
            None => FirstCost {
                duration: self.end_time,
                honest_reports: self.honest_reports,
                reached: false,
            },
        }
    }

    /// Recomputes every metric from the event log.
    pub fn from_events(events: &[Event]) -> Result<Self> {
        let Some(EventKind::Start {
            seed,
            robots,
            initial_supply,
            capacity,
            reference,
        }) = events.first().map(|e| &e.kind)
        else {
            return Err(Error::Malformed {
                line: 1,
                reason: "event log does not open with a start record".into(),
            });
        };
        let attackers: BTreeSet<RobotId> = robots
            .iter()
            .filter(|r| r.behavior.is_attacker())
            .map(|r| r.robot)
            .collect();
        let initial_held = robots.len().max(1) as u64;
        let per_robot = initial_supply / initial_held;
        let mut held = per_robot * attackers.len() as u64;
        let mut supply = *initial_supply;

        let mut m = RunMetrics {
            seed: *seed,
            agreements: Vec::new(),
            costs: Vec::new(),
            attacker_share: vec![ShareSample {
                settlement: 0,
                time: 0.0,
                held,
                supply,
            }],
            delays: DelaySummary::default(),
            delay_samples: Vec::new(),
            reference: reference.clone(),
            baseline: None,
            baseline_error: None,
            honest_reports: 0,
            attacker_reports: 0,
            rejected_reports: 0,
            violated_safety: false,
            max_open: 0,
            capacity: *capacity,
            end_time: events.last().map_or(0.0, |e| e.t),
            stop_reason: None,
            digest: None,
        };

        let mut landmark_of: BTreeMap<ReportId, (String, bool)> = BTreeMap::new();
        let mut submitted: Vec<Observation> = Vec::new();
        let mut window_reports = 0u64;
        let mut last_accept = 0.0f64;
        let mut redistributions = 0usize;

        for e in events {
            match &e.kind {
                EventKind::Submit {
                    report,
                    landmark,
                    valuable,
                    honest,
                } => {
                    landmark_of.insert(report.id(), (landmark.clone(), *valuable));
                    submitted.push(report.observation.clone());
                    if *honest {
                        m.honest_reports += 1;
                        window_reports += 1;
                    } else {
                        m.attacker_reports += 1;
                    }
                }
                EventKind::Applied { status, open, .. } => {
                    m.max_open = m.max_open.max(*open);
                    if matches!(status, ReportStatus::Rejected(_)) {
                        m.rejected_reports += 1;
                    }
                }
                EventKind::Received { delay, .. } => m.delay_samples.push(*delay),
                EventKind::Settlement(s) => {
                    let rec = agreement_record(m.agreements.len() + 1, e.t, s, &attackers, &landmark_of, reference.as_ref());
                    m.violated_safety |= rec.attacker_won;
                    if s.verdict != Verdict::Annulled {
                        for t in &s.transfers {
                            if attackers.contains(&t.robot) {
                                held = (held as i64 + t.gain) as u64;
                            }
                        }
                        supply += s.issued.units();
                        redistributions += 1;
                        m.attacker_share.push(ShareSample {
                            settlement: redistributions,
                            time: e.t,
                            held,
                            supply,
                        });
                    }
                    if s.verdict == Verdict::Accepted {
                        m.costs.push(ConsensusCost {
                            index: m.costs.len() + 1,
                            time: e.t,
                            duration: e.t - last_accept,
                            honest_reports: window_reports,
                        });
                        last_accept = e.t;
                        window_reports = 0;
                    }
                    m.agreements.push(rec);
                }
                EventKind::Stop { reason, digest } => {
                    m.stop_reason = Some(reason.clone());
                    m.digest = Some(digest.clone());
                }
                _ => {}
            }
        }
        m.delays = summarize(&m.delay_samples);
        if let Ok(b) = baseline_average(&submitted) {
            m.baseline_error = reference.as_ref().and_then(|r| consensus_error(&b, r).ok());
            m.baseline = Some(b);
        }
        Ok(m)
    }
}

fn agreement_record(
    index: usize,
    time: f64,
    s: &SettlementOutcome,
    attackers: &BTreeSet<RobotId>,
    landmark_of: &BTreeMap<ReportId, (String, bool)>,
    reference: Option<&Observation>,
) -> AgreementRecord {
    let founder = landmark_of.get(&s.founder);
    let attacker_initiated = attackers.contains(&s.founder.robot) && founder.is_some_and(|(_, valuable)| !valuable);
    AgreementRecord {
        index,
        block: s.block,
        cluster: s.cluster.0,
        verdict: s.verdict,
        centroid: s.centroid.clone(),
        time,
        attacker_initiated,
        founder_landmark: founder.map(|(l, _)| l.clone()),
        consensus_error: match (s.verdict, reference) {
            (Verdict::Accepted, Some(r)) => consensus_error(&s.centroid, r).ok(),
            _ => None,
        },
        attacker_won: s.winners.iter().any(|w| attackers.contains(w)),
    }
}

fn summarize(delays: &[f64]) -> DelaySummary {
    if delays.is_empty() {
        return DelaySummary::default();
    }
    let mut d = delays.to_vec();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    DelaySummary {
        count: n,
        mean: d.iter().sum::<f64>() / n as f64,
        p90: d[rank - 1],
    }
}

pub fn consensus_error(agreement: &Observation, reference: &Observation) -> Result<f64> {
    distance(agreement, reference)
}

/// Unweighted mean of every observation, the centralised baseline.
pub fn baseline_average(observations: &[Observation]) -> Result<Observation> {
    let first = observations.first().ok_or(Error::EmptyReports)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for o in observations {
        if o.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: o.dim(),
            });
        }
        for (a, c) in acc.iter_mut().zip(o.components()) {
            *a += c;
        }
    }
    let n = observations.len() as f64;
    Ok(Observation::new(acc.into_iter().map(|a| a / n).collect::<Vec<_>>()))
}

/// Durations between consecutive accepted agreements.
pub fn time_to_consensus(events: &[Event]) -> Result<Vec<f64>> {
    Ok(RunMetrics::from_events(events)?.costs.iter().map(|c| c.duration).collect())
}

/// Honest reports submitted in each inter-agreement window.
pub fn reports_to_consensus(events: &[Event]) -> Result<Vec<u64>> {
    Ok(RunMetrics::from_events(events)?.costs.iter().map(|c| c.honest_reports).collect())
}
