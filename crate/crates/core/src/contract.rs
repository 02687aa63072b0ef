//! The oracle contract: a deterministic state machine folded over the
//! globally ordered report stream.
//!
//! Each admitted report escrows a deposit of `⌊K · holdings⌋` into a cluster.
//! Once a cluster's pool reaches `⅔ · K · supply` it is settled by weighted
//! majority: winners split the losers' deposits and the issuance `I_c`,
//! losers forfeit their deposits. Accepted centroids are appended to the
//! consensus list.
//!
//! Issuance grows the supply while clusters are pending. For the threshold
//! and the majority, each deposit is weighed at its share of the supply it
//! was made under, rescaled to the current supply: `d · T / T_admit`. With
//! no settlement in between this is just the pool.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clustering::{self, AssignmentDecision, Cluster, ClusterStatus};
use crate::domain::{
    proportional_split, ClusterId, DepositQuota, Observation, Report, ReportId, RobotId,
    TokenAmount, Vote,
};
use crate::error::{Error, Result};

/// Version tag embedded in every canonical serialization.
pub const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractParams {
    pub quota: DepositQuota,
    pub issuance: TokenAmount,
    pub radius: f64,
    pub initial_supply: TokenAmount,
    pub dim: usize,
}

impl ContractParams {
    /// `I_c = T₀ / ⌊1/K⌋`, floored to base units.
    pub fn default_issuance(initial_supply: TokenAmount, quota: DepositQuota) -> TokenAmount {
        TokenAmount(initial_supply.units() / quota.capacity() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "clustering radius must be positive, got {}",
                self.radius
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter("observation dimension is zero".into()));
        }
        if self.quota.capacity() < 1 {
            return Err(Error::InvalidQuota {
                num: self.quota.num(),
                den: self.quota.den(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
    Annulled,
}

/// Per-member settlement result. `credited` is what flows back from escrow
/// and issuance into the free balance; `gain` is the reputation gain relative
/// to the balance before the report was made.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub robot: RobotId,
    pub nonce: u64,
    pub vote: Vote,
    pub deposit: TokenAmount,
    pub credited: TokenAmount,
    pub gain: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementOutcome {
    pub block: u64,
    pub cluster: ClusterId,
    pub verdict: Verdict,
    pub centroid: Observation,
    pub winners: Vec<RobotId>,
    pub transfers: Vec<Transfer>,
    /// Escrow released back to members or redistributed.
    pub pool: TokenAmount,
    pub issued: TokenAmount,
    /// Founding report of the settled cluster.
    pub founder: ReportId,
}

impl SettlementOutcome {
    /// Credits equal released escrow plus issuance.
    pub fn is_balanced(&self) -> bool {
        let credited: TokenAmount = self.transfers.iter().map(|t| t.credited).sum();
        credited == self.pool + self.issued
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEntry {
    pub cluster: ClusterId,
    pub observation: Observation,
    pub block: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    UnknownRobot,
    DuplicateReport,
    DimensionMismatch,
    ZeroDeposit,
    WrongDeposit { expected: TokenAmount },
    InsufficientBalance,
    DuplicateMember(ClusterId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReportStatus {
    Admitted {
        cluster: ClusterId,
        created: bool,
        /// The vote was turned into a rejection because the observation did
        /// not match the targeted proposal.
        coerced: bool,
    },
    /// No matching proposal and no free slot; the deposit stays with the robot.
    Dropped,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyOutcome {
    pub report: ReportId,
    pub status: ReportStatus,
    pub settlements: Vec<SettlementOutcome>,
    /// Open clusters right after admission, before any settlement.
    pub open_peak: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub id: ClusterId,
    pub centroid: Observation,
    pub pool: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryView {
    pub proposals: Vec<Proposal>,
    pub consensus: Vec<ConsensusEntry>,
}

/// Fixed-size digest of the canonical serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateDigest(pub [u8; 32]);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractState {
    params: ContractParams,
    balances: BTreeMap<RobotId, TokenAmount>,
    escrow: BTreeMap<ClusterId, TokenAmount>,
    clusters: BTreeMap<ClusterId, Cluster>,
    consensus: Vec<ConsensusEntry>,
    supply: TokenAmount,
    /// Supply at the time each pending deposit was escrowed.
    #[serde(with = "pairs")]
    basis: BTreeMap<ReportId, TokenAmount>,
    next_cluster: u64,
    settlements: u64,
    applied: BTreeSet<ReportId>,
    applied_log: Vec<ReportId>,
}

impl ContractState {
    /// Genesis state. The initial balances must add up to
    /// `params.initial_supply`.
    pub fn new(
        params: ContractParams,
        balances: impl IntoIterator<Item = (RobotId, TokenAmount)>,
    ) -> Result<Self> {
        params.validate()?;
        let balances: BTreeMap<_, _> = balances.into_iter().collect();
        let supply: TokenAmount = balances.values().sum();
        if supply != params.initial_supply {
            return Err(Error::InvalidParameter(format!(
                "initial balances sum to {supply}, expected {}",
                params.initial_supply
            )));
        }
        Ok(ContractState {
            params,
            balances,
            escrow: BTreeMap::new(),
            clusters: BTreeMap::new(),
            consensus: Vec::new(),
            supply,
            basis: BTreeMap::new(),
            next_cluster: 1,
            settlements: 0,
            applied: BTreeSet::new(),
            applied_log: Vec::new(),
        })
    }

    /// `n` robots with identical balances.
    pub fn uniform(params: ContractParams, robots: u32) -> Result<Self> {
        let each = TokenAmount(params.initial_supply.units() / robots.max(1) as u64);
        Self::new(params, (1..=robots).map(|i| (RobotId(i), each)))
    }

    pub fn params(&self) -> &ContractParams {
        &self.params
    }

    pub fn supply(&self) -> TokenAmount {
        self.supply
    }

    pub fn settlements(&self) -> u64 {
        self.settlements
    }

    pub fn balance(&self, robot: RobotId) -> Option<TokenAmount> {
        self.balances.get(&robot).copied()
    }

    pub fn balances(&self) -> &BTreeMap<RobotId, TokenAmount> {
        &self.balances
    }

    pub fn escrow(&self) -> &BTreeMap<ClusterId, TokenAmount> {
        &self.escrow
    }

    pub fn open_clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn open_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn consensus(&self) -> &[ConsensusEntry] {
        &self.consensus
    }

    pub fn applied_log(&self) -> &[ReportId] {
        &self.applied_log
    }

    pub fn is_applied(&self, id: ReportId) -> bool {
        self.applied.contains(&id)
    }

    /// Tokens the robot currently has locked in open clusters.
    pub fn escrowed_by(&self, robot: RobotId) -> TokenAmount {
        self.clusters
            .values()
            .flat_map(|c| c.members.iter())
            .filter(|m| m.robot == robot)
            .map(|m| m.deposit)
            .sum()
    }

    /// Free balance plus escrowed deposits.
    pub fn holdings(&self, robot: RobotId) -> Option<TokenAmount> {
        self.balance(robot).map(|b| b + self.escrowed_by(robot))
    }

    /// `⌊K · t_i⌋` where `t_i` counts the robot's free and escrowed tokens.
    pub fn required_deposit(&self, robot: RobotId) -> Result<TokenAmount> {
        let holdings = self.holdings(robot).ok_or(Error::UnknownRobot(robot.0))?;
        Ok(self.params.quota.apply_floor(holdings))
    }

    /// `3 · Σ d·T/T_admit ≥ 2 · K · T`, exactly. Reduces to
    /// `3 · pool ≥ 2 · K · supply` when no issuance happened since the
    /// first deposit.
    pub fn quorum_reached(&self, cluster: &Cluster) -> bool {
        match self.single_basis(cluster) {
            Some(t) => quorum_reached(cluster.pool, self.params.quota, t),
            None => {
                let (weights, scale) = self.rescaled(cluster);
                let total: BigUint = weights.iter().sum();
                let q = self.params.quota;
                total * 3u32 * q.den() >= scale * 2u32 * q.num()
            }
        }
    }

    /// Supply a member's deposit was made under. Members inserted without
    /// going through admission count at the current supply.
    pub fn basis_of(&self, id: ReportId) -> TokenAmount {
        self.basis.get(&id).copied().unwrap_or(self.supply)
    }

    fn single_basis(&self, cluster: &Cluster) -> Option<TokenAmount> {
        let first = self.basis_of(cluster.members.first()?.id());
        cluster
            .members
            .iter()
            .all(|m| self.basis_of(m.id()) == first)
            .then_some(first)
    }

    /// Member weights over a common denominator: `w_i = d_i · D / T_i`
    /// where `D` is the product of the distinct bases.
    fn rescaled(&self, cluster: &Cluster) -> (Vec<BigUint>, BigUint) {
        let bases: BTreeSet<u64> = cluster.members.iter().map(|m| self.basis_of(m.id()).units()).collect();
        let scale: BigUint = bases.iter().map(|b| BigUint::from(*b)).product();
        let weights = cluster
            .members
            .iter()
            .map(|m| BigUint::from(m.deposit.units()) * &scale / self.basis_of(m.id()).units())
            .collect();
        (weights, scale)
    }

    /// Weighted majority over rescaled deposits.
    pub fn majority(&self, cluster: &Cluster) -> Option<Vote> {
        if self.single_basis(cluster).is_some() {
            return weighted_majority(cluster);
        }
        let (weights, _) = self.rescaled(cluster);
        let mut accept = BigUint::ZERO;
        let mut total = BigUint::ZERO;
        for (m, w) in cluster.members.iter().zip(weights) {
            if m.vote == Vote::Accept {
                accept += &w;
            }
            total += w;
        }
        let reject = &total - &accept;
        if &accept * 2u32 > total {
            Some(Vote::Accept)
        } else if reject * 2u32 > total {
            Some(Vote::Reject)
        } else {
            None
        }
    }

    /// Holdings of a set of robots over the current supply, as exact parts.
    pub fn share_of(&self, robots: &BTreeSet<RobotId>) -> (u64, u64) {
        let held: TokenAmount = robots.iter().filter_map(|r| self.holdings(*r)).sum();
        (held.units(), self.supply.units())
    }

    /// `sum(balances) + sum(escrow) == supply`, and every escrow entry
    /// matches its cluster's pool.
    pub fn is_conserved(&self) -> bool {
        let free: TokenAmount = self.balances.values().sum();
        let locked: TokenAmount = self.escrow.values().sum();
        let pools_match = self.escrow.len() == self.clusters.len()
            && self
                .clusters
                .values()
                .all(|c| self.escrow.get(&c.id) == Some(&c.pool));
        pools_match && free + locked == self.supply
    }

    /// Applies one ordered report. Never fails: every refusal is reported in
    /// the returned status and leaves balances untouched.
    pub fn apply_report(&mut self, block: u64, report: &Report) -> ApplyOutcome {
        let id = report.id();
        let status = self.admit(report);
        let open_peak = self.clusters.len();
        let mut settlements = Vec::new();
        if matches!(status, ReportStatus::Admitted { .. }) {
            // The threshold only rises with issuance, so one pass in id
            // order settles everything that is due.
            let due: Vec<ClusterId> = self.clusters.keys().copied().collect();
            for cid in due {
                let quorate = self.clusters.get(&cid).is_some_and(|c| self.quorum_reached(c));
                if quorate {
                    settlements.push(self.settle(block, cid));
                }
            }
        }
        ApplyOutcome {
            report: id,
            status,
            settlements,
            open_peak,
        }
    }

    fn admit(&mut self, report: &Report) -> ReportStatus {
        use ReportStatus::Rejected;
        let id = report.id();
        if self.applied.contains(&id) {
            return Rejected(RejectReason::DuplicateReport);
        }
        self.applied.insert(id);

        let Some(free) = self.balance(report.robot) else {
            return Rejected(RejectReason::UnknownRobot);
        };
        if report.observation.dim() != self.params.dim || !report.observation.is_finite() {
            return Rejected(RejectReason::DimensionMismatch);
        }
        let expected = self
            .required_deposit(report.robot)
            .expect("robot has a balance");
        if expected.is_zero() {
            return Rejected(RejectReason::ZeroDeposit);
        }
        if report.deposit != expected {
            return Rejected(RejectReason::WrongDeposit { expected });
        }
        if report.deposit > free {
            return Rejected(RejectReason::InsufficientBalance);
        }

        let mut member = report.clone();
        let mut coerced = false;
        let mut outlier = false;
        let targeted = report.target.filter(|t| self.clusters.contains_key(t));
        let decision = match targeted {
            Some(cid) => {
                let cluster = &self.clusters[&cid];
                let d = clustering::distance(&cluster.centroid, &member.observation)
                    .expect("dimension checked");
                outlier = d > self.params.radius;
                if outlier && member.vote == Vote::Accept {
                    member.vote = Vote::Reject;
                    coerced = true;
                }
                AssignmentDecision::Joined(cid)
            }
            None => clustering::assign(
                &member,
                self.clusters.values(),
                self.params.radius,
                self.params.quota.capacity(),
                ClusterId(self.next_cluster),
            )
            .expect("dimension checked"),
        };

        let (cid, created) = match decision {
            AssignmentDecision::Dropped => return ReportStatus::Dropped,
            AssignmentDecision::Joined(cid) => {
                if self.clusters[&cid].has_member(report.robot) {
                    return Rejected(RejectReason::DuplicateMember(cid));
                }
                (cid, false)
            }
            AssignmentDecision::Created(cid) => (cid, true),
        };

        // Escrow.
        *self.balances.get_mut(&report.robot).expect("checked") -= member.deposit;
        *self.escrow.entry(cid).or_default() += member.deposit;
        self.basis.insert(id, self.supply);
        if created {
            self.clusters.insert(cid, Cluster::seed(cid, member));
            self.next_cluster += 1;
        } else if outlier {
            self.clusters.get_mut(&cid).expect("open").admit_outlier(member);
        } else {
            self.clusters.get_mut(&cid).expect("open").admit(member);
        }
        self.applied_log.push(id);
        ReportStatus::Admitted {
            cluster: cid,
            created,
            coerced,
        }
    }

    /// Settles an open cluster: redistributes escrow, mints issuance and
    /// records accepted centroids.
    pub fn settle(&mut self, block: u64, cid: ClusterId) -> SettlementOutcome {
        let mut cluster = self.clusters.remove(&cid).expect("settling an open cluster");
        let pool = self.escrow.remove(&cid).unwrap_or_default();
        debug_assert_eq!(pool, cluster.pool);
        let founder = cluster.members[0].id();
        let majority = self.majority(&cluster);
        for m in &cluster.members {
            self.basis.remove(&m.id());
        }

        let Some(majority) = majority else {
            let transfers = cluster
                .members
                .iter()
                .map(|m| {
                    *self.balances.get_mut(&m.robot).expect("member has balance") += m.deposit;
                    Transfer {
                        robot: m.robot,
                        nonce: m.nonce,
                        vote: m.vote,
                        deposit: m.deposit,
                        credited: m.deposit,
                        gain: 0,
                    }
                })
                .collect();
            cluster.status = ClusterStatus::Dropped;
            return SettlementOutcome {
                block,
                cluster: cid,
                verdict: Verdict::Annulled,
                centroid: cluster.centroid,
                winners: Vec::new(),
                transfers,
                pool,
                issued: TokenAmount::ZERO,
                founder,
            };
        };

        let winners: Vec<RobotId> = cluster
            .members
            .iter()
            .filter(|m| m.vote == majority)
            .map(|m| m.robot)
            .collect();
        let forfeited: TokenAmount = cluster
            .members
            .iter()
            .filter(|m| m.vote != majority)
            .map(|m| m.deposit)
            .sum();
        let issued = self.params.issuance;
        let loser_shares = proportional_split(forfeited, &winners).expect("majority is non-empty");
        let issue_shares = proportional_split(issued, &winners).expect("majority is non-empty");

        let mut w = 0;
        let mut transfers = Vec::with_capacity(cluster.members.len());
        for m in &cluster.members {
            let t = if m.vote == majority {
                let bonus = loser_shares[w] + issue_shares[w];
                w += 1;
                Transfer {
                    robot: m.robot,
                    nonce: m.nonce,
                    vote: m.vote,
                    deposit: m.deposit,
                    credited: m.deposit + bonus,
                    gain: bonus.units() as i64,
                }
            } else {
                Transfer {
                    robot: m.robot,
                    nonce: m.nonce,
                    vote: m.vote,
                    deposit: m.deposit,
                    credited: TokenAmount::ZERO,
                    gain: -(m.deposit.units() as i64),
                }
            };
            *self.balances.get_mut(&m.robot).expect("member has balance") += t.credited;
            transfers.push(t);
        }

        self.supply += issued;
        self.settlements += 1;
        let verdict = match majority {
            Vote::Accept => {
                cluster.status = ClusterStatus::Accepted;
                self.consensus.push(ConsensusEntry {
                    cluster: cid,
                    observation: cluster.centroid.clone(),
                    block,
                });
                Verdict::Accepted
            }
            Vote::Reject => {
                cluster.status = ClusterStatus::Rejected;
                Verdict::Rejected
            }
        };
        SettlementOutcome {
            block,
            cluster: cid,
            verdict,
            centroid: cluster.centroid,
            winners,
            transfers,
            pool,
            issued,
            founder,
        }
    }

    /// Read-only snapshot of pending proposals and accepted agreements.
    pub fn query(&self) -> QueryView {
        QueryView {
            proposals: self
                .clusters
                .values()
                .map(|c| Proposal {
                    id: c.id,
                    centroid: c.centroid.clone(),
                    pool: c.pool,
                })
                .collect(),
            consensus: self.consensus.clone(),
        }
    }

    /// Versioned, byte-stable serialization: balances sorted by robot,
    /// clusters by id, consensus in order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Canonical<'a> {
            version: u32,
            state: &'a ContractState,
        }
        serde_json::to_vec(&Canonical {
            version: CANONICAL_VERSION,
            state: self,
        })
        .expect("contract state serializes")
    }

    pub fn state_digest(&self) -> StateDigest {
        StateDigest(Sha256::digest(self.canonical_bytes()).into())
    }
}

/// Maps with struct keys as ordered `[key, value]` lists, since JSON object
/// keys must be strings.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(
        map: &BTreeMap<K, V>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

pub fn quorum_reached(pool: TokenAmount, quota: DepositQuota, supply: TokenAmount) -> bool {
    3 * pool.units() as u128 * quota.den() as u128
        >= 2 * quota.num() as u128 * supply.units() as u128
}

/// The vote whose deposits strictly exceed half the pool, if any.
pub fn weighted_majority(cluster: &Cluster) -> Option<Vote> {
    let accept: u128 = cluster
        .members
        .iter()
        .filter(|m| m.vote == Vote::Accept)
        .map(|m| m.deposit.units() as u128)
        .sum();
    let total: u128 = cluster.members.iter().map(|m| m.deposit.units() as u128).sum();
    let reject = total - accept;
    if 2 * accept > total {
        Some(Vote::Accept)
    } else if 2 * reject > total {
        Some(Vote::Reject)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params(quota: DepositQuota, issuance: u64, supply: u64) -> ContractParams {
        ContractParams {
            quota,
            issuance: TokenAmount(issuance),
            radius: 60.0,
            initial_supply: TokenAmount(supply),
            dim: 3,
        }
    }

    fn rep(state: &ContractState, robot: u32, nonce: u64, obs: [f64; 3], vote: Vote) -> Report {
        Report {
            observation: Observation::new(obs.to_vec()),
            robot: RobotId(robot),
            deposit: state.required_deposit(RobotId(robot)).unwrap(),
            vote,
            target: None,
            nonce,
        }
    }

    fn member(robot: u32, deposit: u64, vote: Vote) -> Report {
        Report {
            observation: Observation::new(vec![200.0, 50.0, 50.0]),
            robot: RobotId(robot),
            deposit: TokenAmount(deposit),
            vote,
            target: None,
            nonce: 0,
        }
    }

    fn cluster_of(members: Vec<Report>) -> Cluster {
        let mut it = members.into_iter();
        let mut c = Cluster::seed(ClusterId(1), it.next().unwrap());
        for m in it {
            c.admit(m);
        }
        c
    }

    const RED: [f64; 3] = [200.0, 50.0, 50.0];
    const BLUE: [f64; 3] = [50.0, 80.0, 175.0];

    #[test]
    fn required_deposit_examples() {
        let s = ContractState::new(
            params(DepositQuota::ONE, 0, 1_000_000),
            [(RobotId(1), TokenAmount(1_000_000))],
        )
        .unwrap();
        assert_eq!(s.required_deposit(RobotId(1)).unwrap(), TokenAmount(1_000_000));

        let s = ContractState::new(
            params(DepositQuota::ONE_THIRD, 0, 1_000_000),
            [(RobotId(1), TokenAmount(1_000_000)), (RobotId(2), TokenAmount(0))],
        )
        .unwrap();
        assert_eq!(s.required_deposit(RobotId(1)).unwrap(), TokenAmount(333_333));
        assert_eq!(s.required_deposit(RobotId(2)).unwrap(), TokenAmount(0));
        assert!(matches!(
            s.required_deposit(RobotId(9)),
            Err(Error::UnknownRobot(9))
        ));

        let mut s = s;
        let r = Report {
            deposit: TokenAmount(0),
            ..rep(&s, 2, 0, RED, Vote::Accept)
        };
        let out = s.apply_report(1, &r);
        assert_eq!(out.status, ReportStatus::Rejected(RejectReason::ZeroDeposit));
    }

    #[test]
    fn eighth_aligned_report_triggers_settlement() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        for robot in 1..=7 {
            let out = s.apply_report(1, &rep(&s, robot, 0, RED, Vote::Accept));
            assert!(out.settlements.is_empty(), "settled early at report {robot}");
        }
        let out = s.apply_report(1, &rep(&s, 8, 0, RED, Vote::Accept));
        assert_eq!(out.settlements.len(), 1);
        assert_eq!(out.settlements[0].verdict, Verdict::Accepted);
        assert_eq!(out.settlements[0].pool, TokenAmount(8_000_000));
    }

    #[test]
    fn duplicate_nonce_is_rejected_without_state_change() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        let r = rep(&s, 1, 0, RED, Vote::Accept);
        s.apply_report(1, &r);
        let before = s.balances().clone();
        let clusters = s.open_count();
        let out = s.apply_report(2, &r);
        assert_eq!(out.status, ReportStatus::Rejected(RejectReason::DuplicateReport));
        assert_eq!(s.balances(), &before);
        assert_eq!(s.open_count(), clusters);
    }

    #[test]
    fn same_robot_cannot_join_a_cluster_twice() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        s.apply_report(1, &rep(&s, 1, 0, RED, Vote::Accept));
        let out = s.apply_report(1, &rep(&s, 1, 1, RED, Vote::Accept));
        assert_eq!(
            out.status,
            ReportStatus::Rejected(RejectReason::DuplicateMember(ClusterId(1)))
        );
        // A different cluster is fine.
        let out = s.apply_report(1, &rep(&s, 1, 2, [0.0, 200.0, 0.0], Vote::Reject));
        assert!(matches!(out.status, ReportStatus::Admitted { created: true, .. }));
        assert!(s.is_conserved());
    }

    #[test]
    fn wrong_deposit_is_refused() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        let mut r = rep(&s, 1, 0, RED, Vote::Accept);
        r.deposit = TokenAmount(r.deposit.units() + 1);
        let out = s.apply_report(1, &r);
        assert_eq!(
            out.status,
            ReportStatus::Rejected(RejectReason::WrongDeposit {
                expected: TokenAmount(1_000_000)
            })
        );
        assert_eq!(s.balance(RobotId(1)), Some(TokenAmount(3_000_000)));
    }

    #[test]
    fn k_one_allows_a_single_outstanding_report() {
        let mut s = ContractState::uniform(params(DepositQuota::ONE, 0, 12_000_000), 12).unwrap();
        let out = s.apply_report(1, &rep(&s, 1, 0, RED, Vote::Accept));
        assert!(matches!(out.status, ReportStatus::Admitted { .. }));
        let out = s.apply_report(1, &rep(&s, 1, 1, [0.0, 200.0, 0.0], Vote::Accept));
        assert_eq!(out.status, ReportStatus::Rejected(RejectReason::InsufficientBalance));
    }

    #[test]
    fn full_slots_drop_and_refund() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        for (i, obs) in [[0.0, 0.0, 0.0], [200.0, 0.0, 0.0], [0.0, 200.0, 0.0]]
            .into_iter()
            .enumerate()
        {
            s.apply_report(1, &rep(&s, i as u32 + 1, 0, obs, Vote::Accept));
        }
        let before = s.balance(RobotId(4));
        let out = s.apply_report(1, &rep(&s, 4, 0, [0.0, 0.0, 200.0], Vote::Accept));
        assert_eq!(out.status, ReportStatus::Dropped);
        assert_eq!(s.balance(RobotId(4)), before);
        assert_eq!(s.open_count(), 3);
    }

    #[test]
    fn quorum_boundary() {
        let quota = DepositQuota::ONE_THIRD;
        let supply = TokenAmount(36_000_000);
        assert!(quorum_reached(TokenAmount(8_000_000), quota, supply));
        assert!(!quorum_reached(TokenAmount(7_999_999), quota, supply));
        assert!(quorum_reached(supply, DepositQuota::ONE, supply));
    }

    #[test]
    fn weighted_majority_examples() {
        let c = cluster_of(vec![
            member(1, 10, Vote::Accept),
            member(2, 10, Vote::Accept),
            member(3, 10, Vote::Reject),
        ]);
        assert_eq!(weighted_majority(&c), Some(Vote::Accept));
        let c = cluster_of(vec![member(1, 10, Vote::Accept), member(2, 10, Vote::Reject)]);
        assert_eq!(weighted_majority(&c), None);
        let c = cluster_of(vec![member(1, 3, Vote::Accept), member(2, 9, Vote::Accept)]);
        assert_eq!(weighted_majority(&c), Some(Vote::Accept));
    }

    fn settle_cluster(members: Vec<Report>, issuance: u64) -> (ContractState, SettlementOutcome) {
        let n = members.len() as u32;
        let each = 100u64;
        let mut s = ContractState::uniform(
            params(DepositQuota::ONE, issuance, each * n as u64),
            n,
        )
        .unwrap();
        let cluster = cluster_of(members);
        // Install the cluster directly, escrowing its deposits.
        for m in &cluster.members {
            *s.balances.get_mut(&m.robot).unwrap() -= m.deposit;
        }
        s.escrow.insert(cluster.id, cluster.pool);
        s.clusters.insert(cluster.id, cluster);
        s.next_cluster = 2;
        let out = s.settle(7, ClusterId(1));
        (s, out)
    }

    #[test]
    fn settle_redistributes_per_gain_function() {
        let (s, out) = settle_cluster(
            vec![
                member(1, 10, Vote::Accept),
                member(2, 10, Vote::Accept),
                member(3, 10, Vote::Reject),
            ],
            30,
        );
        assert_eq!(out.verdict, Verdict::Accepted);
        let gains: Vec<i64> = out.transfers.iter().map(|t| t.gain).collect();
        assert_eq!(gains, vec![20, 20, -10]);
        assert_eq!(s.balance(RobotId(1)), Some(TokenAmount(120)));
        assert_eq!(s.balance(RobotId(3)), Some(TokenAmount(90)));
        assert_eq!(s.supply(), TokenAmount(330));
        assert!(s.is_conserved());
        assert!(out.is_balanced());
        assert_eq!(s.consensus().len(), 1);
        assert_eq!(s.consensus()[0].block, 7);
    }

    #[test]
    fn unanimous_settlement_without_issuance_is_neutral() {
        let members = (1..=5).map(|i| member(i, 10, Vote::Accept)).collect();
        let (s, out) = settle_cluster(members, 0);
        assert!(out.transfers.iter().all(|t| t.gain == 0));
        assert!(s.balances().values().all(|b| *b == TokenAmount(100)));
    }

    #[test]
    fn tie_annuls_and_refunds() {
        let (s, out) = settle_cluster(
            vec![member(1, 10, Vote::Accept), member(2, 10, Vote::Reject)],
            30,
        );
        assert_eq!(out.verdict, Verdict::Annulled);
        assert_eq!(out.issued, TokenAmount::ZERO);
        assert_eq!(s.supply(), TokenAmount(200));
        assert_eq!(s.settlements(), 0);
        assert!(s.consensus().is_empty());
        assert!(s.balances().values().all(|b| *b == TokenAmount(100)));
    }

    #[test]
    fn rejected_verdict_skips_consensus() {
        let (s, out) = settle_cluster(
            vec![
                member(1, 10, Vote::Reject),
                member(2, 10, Vote::Reject),
                member(3, 10, Vote::Accept),
            ],
            30,
        );
        assert_eq!(out.verdict, Verdict::Rejected);
        assert!(s.consensus().is_empty());
        assert_eq!(s.supply(), TokenAmount(330));
    }

    #[test]
    fn default_issuance() {
        let i = ContractParams::default_issuance(TokenAmount(12_000_000), DepositQuota::ONE_THIRD);
        assert_eq!(i, TokenAmount(4_000_000));
        let i = ContractParams::default_issuance(TokenAmount(12_000_000), DepositQuota::ONE);
        assert_eq!(i, TokenAmount(12_000_000));
    }

    #[test]
    fn query_snapshots() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        assert_eq!(s.query(), QueryView::default());
        s.apply_report(1, &rep(&s, 1, 0, RED, Vote::Accept));
        let q = s.query();
        assert_eq!(q.proposals.len(), 1);
        assert_eq!(q.proposals[0].centroid, Observation::new(RED.to_vec()));
        for robot in 2..=8 {
            s.apply_report(2, &rep(&s, robot, 0, RED, Vote::Accept));
        }
        let q = s.query();
        assert!(q.proposals.is_empty());
        assert_eq!(q.consensus.len(), 1);
    }

    #[test]
    fn targeted_mismatch_is_coerced_to_reject() {
        let mut s =
            ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        s.apply_report(1, &rep(&s, 1, 0, [50.0, 180.0, 60.0], Vote::Accept));
        let mut r = rep(&s, 2, 0, RED, Vote::Accept);
        r.target = Some(ClusterId(1));
        let out = s.apply_report(1, &r);
        assert_eq!(
            out.status,
            ReportStatus::Admitted {
                cluster: ClusterId(1),
                created: false,
                coerced: true
            }
        );
        let c = s.cluster(ClusterId(1)).unwrap();
        assert_eq!(c.members[1].vote, Vote::Reject);
        // The mismatching reading counts as a vote but leaves the proposal's value alone.
        assert_eq!(c.centroid, Observation::new(vec![50.0, 180.0, 60.0]));
        assert_eq!(c.pool, TokenAmount(2_000_000));
        let mut r = rep(&s, 4, 0, RED, Vote::Reject);
        r.target = Some(ClusterId(1));
        s.apply_report(1, &r);
        assert_eq!(s.cluster(ClusterId(1)).unwrap().centroid, Observation::new(vec![50.0, 180.0, 60.0]));

        // A target that is no longer open falls back to clustering.
        let mut r = rep(&s, 3, 0, RED, Vote::Accept);
        r.target = Some(ClusterId(99));
        let out = s.apply_report(1, &r);
        assert!(matches!(out.status, ReportStatus::Admitted { created: true, .. }));
    }

    #[test]
    fn digest_tracks_every_unit() {
        let s = ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 36_000_000), 12).unwrap();
        assert_eq!(s.state_digest(), s.clone().state_digest());
        let mut t = s.clone();
        *t.balances.get_mut(&RobotId(3)).unwrap() += TokenAmount(1);
        assert_ne!(s.state_digest(), t.state_digest());
    }

    #[test]
    fn pending_deposits_keep_their_weight_across_issuance() {
        let mut s = ContractState::uniform(
            params(DepositQuota::ONE_THIRD, 12_000_000, 36_000_000),
            12,
        )
        .unwrap();
        // Seven reports wait on a blue proposal while a red one settles.
        for robot in 1..=7 {
            s.apply_report(1, &rep(&s, robot, 0, BLUE, Vote::Accept));
        }
        for robot in 1..=8 {
            s.apply_report(1, &rep(&s, robot, 1, RED, Vote::Accept));
        }
        assert_eq!(s.supply(), TokenAmount(48_000_000));
        let blue = s.open_clusters().next().unwrap().clone();
        assert_eq!(blue.pool, TokenAmount(7_000_000));
        // A raw pool check would now ask for 10.67e6.
        assert!(!quorum_reached(blue.pool, DepositQuota::ONE_THIRD, s.supply()));
        assert!(!s.quorum_reached(&blue));
        // One more deposit made under the grown supply completes the
        // rescaled quorum: 7/36 + d/48 >= 2/9 needs d >= 1.33e6. Robot 12
        // still holds 3e6 and falls short, robot 8 just won 1.5e6.
        let out = s.apply_report(2, &rep(&s, 12, 0, BLUE, Vote::Accept));
        assert!(out.settlements.is_empty());
        let out = s.apply_report(2, &rep(&s, 8, 2, BLUE, Vote::Accept));
        assert_eq!(out.settlements.len(), 1);
        assert_eq!(out.settlements[0].verdict, Verdict::Accepted);
        assert!(s.is_conserved());
        assert!(s.basis.is_empty());
    }

    #[test]
    fn majority_weighs_deposits_at_their_admission_supply() {
        let mut s = ContractState::uniform(params(DepositQuota::ONE_THIRD, 0, 300), 3).unwrap();
        let a = member(1, 10, Vote::Accept);
        let b = member(2, 10, Vote::Reject);
        let c = cluster_of(vec![a.clone(), b.clone()]);
        assert_eq!(s.majority(&c), None);
        // Same deposit made when the supply was half as large weighs double.
        s.basis.insert(a.id(), TokenAmount(150));
        assert_eq!(s.majority(&c), Some(Vote::Accept));
        s.basis.insert(b.id(), TokenAmount(100));
        assert_eq!(s.majority(&c), Some(Vote::Reject));
    }
}
