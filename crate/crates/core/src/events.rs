//! Line-delimited event log. Everything the experiment metrics need can be
//! recomputed from these records alone.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::contract::{ReportStatus, SettlementOutcome};
use crate::domain::{ClusterId, Observation, Report, ReportId, RobotId};
use crate::error::{Error, Result};
use crate::swarm::{BehaviorProfile, FsmState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Simulated seconds.
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotInfo {
    pub robot: RobotId,
    pub behavior: BehaviorProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Start {
        seed: u64,
        robots: Vec<RobotInfo>,
        initial_supply: u64,
        /// Cluster-count cap, `⌊1/K⌋`.
        capacity: usize,
        /// Mean honest reading of the valuable landmark, used to score
        /// agreements.
        reference: Option<Observation>,
    },
    Transition {
        robot: RobotId,
        from: FsmState,
        to: FsmState,
    },
    /// A tag read at a landmark.
    Observe {
        robot: RobotId,
        landmark: String,
        valuable: bool,
        observation: Observation,
        corrupted: bool,
    },
    Submit {
        report: Report,
        landmark: String,
        valuable: bool,
        honest: bool,
    },
    /// A robot wanted to report but its local view says it cannot afford to.
    Skip {
        robot: RobotId,
        target: Option<ClusterId>,
    },
    Block {
        index: u64,
        sealer: RobotId,
        txs: usize,
    },
    Applied {
        block: u64,
        report: ReportId,
        status: ReportStatus,
        /// Open clusters in the canonical state right after admission.
        open: usize,
    },
    /// A robot learned of a block through gossip.
    Received {
        block: u64,
        robot: RobotId,
        delay: f64,
    },
    Settlement(SettlementOutcome),
    Stop {
        reason: String,
        digest: String,
    },
}

pub fn write_events(mut out: impl Write, events: &[Event]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events(input: impl BufRead) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let malformed = |reason: String| Error::Malformed { line: i + 1, reason };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(events)
}
