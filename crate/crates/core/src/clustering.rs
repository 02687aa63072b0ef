//! Incremental k-means over the ordered report stream.
//!
//! Reports are admitted one at a time and never reassigned. A report joins
//! the nearest open cluster whose centroid lies within the threshold `R`,
//! otherwise it seeds a new cluster if there is a free slot.
//!
//! A report attached to a cluster by target while lying outside `R` is kept
//! as an outlier: its deposit and vote count, its observation does not move
//! the centroid.

use serde::{Deserialize, Serialize};

use std::collections::BTreeSet;

use crate::domain::{ClusterId, Observation, Report, ReportId, TokenAmount};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterStatus {
    Open,
    Accepted,
    Rejected,
    Dropped,
}

/// A pending proposal: its member reports in ledger order and their
/// deposit-weighted centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub members: Vec<Report>,
    pub centroid: Observation,
    pub pool: TokenAmount,
    pub status: ClusterStatus,
    /// Members left out of the centroid.
    #[serde(default)]
    pub outliers: BTreeSet<ReportId>,
}

impl Cluster {
    pub fn seed(id: ClusterId, report: Report) -> Self {
        let centroid = report.observation.clone();
        let pool = report.deposit;
        Cluster {
            id,
            members: vec![report],
            centroid,
            pool,
            status: ClusterStatus::Open,
            outliers: BTreeSet::new(),
        }
    }

    /// Appends a member and refreshes pool and centroid.
    pub fn admit(&mut self, report: Report) {
        self.pool += report.deposit;
        self.members.push(report);
        self.centroid = recompute_centroid(self).expect("cluster has members");
    }

    /// Appends a member without moving the centroid.
    pub fn admit_outlier(&mut self, report: Report) {
        self.pool += report.deposit;
        self.outliers.insert(report.id());
        self.members.push(report);
    }

    pub fn has_member(&self, robot: crate::domain::RobotId) -> bool {
        self.members.iter().any(|m| m.robot == robot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignmentDecision {
    Joined(ClusterId),
    Created(ClusterId),
    Dropped,
}

pub fn distance(a: &Observation, b: &Observation) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Decides where `report` goes. `next_id` is the identifier a newly created
/// cluster would receive.
///
/// Ties between equidistant centroids resolve to the lowest cluster id, and a
/// report exactly `radius` away still joins.
pub fn assign<'a>(
    report: &Report,
    clusters: impl IntoIterator<Item = &'a Cluster>,
    radius: f64,
    capacity: usize,
    next_id: ClusterId,
) -> Result<AssignmentDecision> {
    let mut open = 0usize;
    let mut best: Option<(f64, ClusterId)> = None;
    for c in clusters {
        if c.status != ClusterStatus::Open {
            continue;
        }
        open += 1;
        let d = distance(&c.centroid, &report.observation)?;
        if d > radius {
            continue;
        }
        best = match best {
            Some((bd, bid)) if bd < d || (bd == d && bid < c.id) => Some((bd, bid)),
            _ => Some((d, c.id)),
        };
    }
    Ok(match best {
        Some((_, id)) => AssignmentDecision::Joined(id),
        None if open < capacity => AssignmentDecision::Created(next_id),
        None => AssignmentDecision::Dropped,
    })
}

/// Deposit-weighted mean of the member observations, outliers excluded.
pub fn recompute_centroid(cluster: &Cluster) -> Result<Observation> {
    let first = cluster.members.first().ok_or(Error::EmptyCluster)?;
    let dim = first.observation.dim();
    let mut acc = vec![0.0f64; dim];
    let mut weight = 0u128;
    let inliers: Vec<&Report> = cluster
        .members
        .iter()
        .filter(|m| !cluster.outliers.contains(&m.id()))
        .collect();
    let members = if inliers.is_empty() {
        cluster.members.iter().collect()
    } else {
        inliers
    };
    for m in &members {
        if m.observation.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.observation.dim(),
            });
        }
        let w = m.deposit.units() as f64;
        for (a, c) in acc.iter_mut().zip(m.observation.components()) {
            *a += w * c;
        }
        weight += m.deposit.units() as u128;
    }
    if weight == 0 {
        // Only reachable with zero deposits, which the contract refuses.
        let n = members.len() as f64;
        let mut mean = vec![0.0; dim];
        for m in &members {
            for (a, c) in mean.iter_mut().zip(m.observation.components()) {
                *a += c / n;
            }
        }
        return Ok(Observation(mean));
    }
    let w = weight as f64;
    Ok(Observation(acc.into_iter().map(|a| a / w).collect()))
}
