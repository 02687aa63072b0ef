//! Fork-free proof-of-authority ledger shared by the simulated robots.
//!
//! Transactions and blocks spread by epidemic exchange between robots within
//! communication range, one hop per tick. Every block period the scheduled
//! sealer packages its mempool into the next block. Each robot folds the
//! blocks it has received, in index order, into its own contract copy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::contract::{ApplyOutcome, ContractParams, ContractState, StateDigest, CANONICAL_VERSION};
use crate::domain::{Report, ReportId, RobotId, TokenAmount};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GossipConfig {
    /// Metres.
    pub comm_range: f64,
    /// Seconds between sealing slots.
    pub block_period: f64,
    /// Simulation step in seconds.
    pub tick: f64,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            comm_range: 0.15,
            block_period: 10.0,
            tick: 0.1,
        }
    }
}

impl GossipConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("comm_range", self.comm_range),
            ("block_period", self.block_period),
            ("tick", self.tick),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Ticks per block period, rounded to the nearest integer.
    pub fn ticks_per_block(&self) -> u64 {
        (self.block_period / self.tick).round().max(1.0) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub sealer: RobotId,
    pub timestamp: f64,
    pub txs: Vec<Report>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingTx {
    pub report: Report,
    pub received: f64,
}

/// One robot's copy of the ledger.
#[derive(Debug, Clone)]
pub struct NodeView {
    pub robot: RobotId,
    pub mempool: BTreeMap<ReportId, PendingTx>,
    /// Every block index this node has heard of, applied or buffered.
    pub known_blocks: BTreeSet<u64>,
    pub buffered: BTreeMap<u64, Block>,
    pub chain_head: u64,
    pub local_state: ContractState,
    /// Largest open-cluster count seen after any applied transaction.
    pub max_open: usize,
}

impl NodeView {
    pub fn new(robot: RobotId, genesis: ContractState) -> Self {
        NodeView {
            robot,
            mempool: BTreeMap::new(),
            known_blocks: BTreeSet::new(),
            buffered: BTreeMap::new(),
            chain_head: 0,
            max_open: genesis.open_count(),
            local_state: genesis,
        }
    }

    /// Adds a transaction unless it is already pending or already applied.
    pub fn offer_tx(&mut self, report: &Report, now: f64) -> bool {
        let id = report.id();
        if self.mempool.contains_key(&id) || self.local_state.is_applied(id) {
            return false;
        }
        self.mempool.insert(
            id,
            PendingTx {
                report: report.clone(),
                received: now,
            },
        );
        true
    }

    /// Accepts a block. Blocks beyond `chain_head + 1` wait in the buffer
    /// until their predecessors arrive; the returned outcomes cover every
    /// block that could be applied.
    pub fn apply_block(&mut self, block: Block) -> Vec<ApplyOutcome> {
        self.known_blocks.insert(block.index);
        if block.index <= self.chain_head {
            return Vec::new();
        }
        self.buffered.insert(block.index, block);
        let mut outcomes = Vec::new();
        while let Some(next) = self.buffered.remove(&(self.chain_head + 1)) {
            for tx in &next.txs {
                outcomes.push(self.local_state.apply_report(next.index, tx));
                self.max_open = self.max_open.max(self.local_state.open_count());
                self.mempool.remove(&tx.id());
            }
            self.chain_head = next.index;
        }
        outcomes
    }
}

/// Round-robin sealer rotation. Slot `k` belongs to `order[k mod n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealerSchedule {
    pub order: Vec<RobotId>,
    pub offline: BTreeSet<RobotId>,
}

impl SealerSchedule {
    pub fn round_robin(robots: u32) -> Self {
        SealerSchedule {
            order: (1..=robots).map(RobotId).collect(),
            offline: BTreeSet::new(),
        }
    }

    pub fn sealer_for(&self, slot: u64) -> Option<RobotId> {
        if self.order.is_empty() {
            return None;
        }
        let r = self.order[(slot % self.order.len() as u64) as usize];
        (!self.offline.contains(&r)).then_some(r)
    }
}

/// Symmetric neighbour lists indexed by node position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adjacency(pub Vec<Vec<usize>>);

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Adjacency(vec![Vec::new(); n])
    }

    pub fn complete(n: usize) -> Self {
        Adjacency((0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect())
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        Adjacency(adj)
    }

    /// Unit-disk graph over planar positions.
    pub fn within_range(positions: &[(f64, f64)], range: f64) -> Self {
        let n = positions.len();
        let r2 = range * range;
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                let dx = positions[i].0 - positions[j].0;
                let dy = positions[i].1 - positions[j].1;
                if dx * dx + dy * dy <= r2 {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        Adjacency(adj)
    }

    pub fn is_symmetric(&self) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, ns)| ns.iter().all(|&j| self.0[j].contains(&i)))
    }
}

/// First time a node learned of a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reception {
    pub block: u64,
    pub robot: RobotId,
    pub time: f64,
    pub delay: f64,
}

/// One epidemic exchange round. Every adjacent pair unions mempools and known
/// blocks, reading from the state at the start of the step so information
/// moves exactly one hop. Newly learned blocks are taken from `chain`.
pub fn gossip_step(
    views: &mut [NodeView],
    proximity: &Adjacency,
    now: f64,
    chain: &[Block],
    receptions: &mut Vec<Reception>,
) {
    debug_assert!(proximity.is_symmetric());
    let mut tx_in: Vec<Vec<Report>> = vec![Vec::new(); views.len()];
    let mut blocks_in: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); views.len()];
    for (i, neighbours) in proximity.0.iter().enumerate() {
        for &j in neighbours {
            let (me, other) = (&views[i], &views[j]);
            for (id, p) in &other.mempool {
                if !me.mempool.contains_key(id) && !me.local_state.is_applied(*id) {
                    tx_in[i].push(p.report.clone());
                }
            }
            if other.known_blocks.len() != me.known_blocks.len()
                || other.known_blocks.last() != me.known_blocks.last()
            {
                blocks_in[i].extend(other.known_blocks.difference(&me.known_blocks));
            }
        }
    }
    for (i, view) in views.iter_mut().enumerate() {
        for r in &tx_in[i] {
            view.offer_tx(r, now);
        }
        for &b in &blocks_in[i] {
            let block = &chain[(b - 1) as usize];
            receptions.push(Reception {
                block: b,
                robot: view.robot,
                time: now,
                delay: now - block.timestamp,
            });
            view.apply_block(block.clone());
        }
    }
}

/// Packages the scheduled sealer's mempool into the next block. Transactions
/// already on `chain` are skipped; ordering is by sealer reception time, then
/// robot id, then nonce. Returns `None` when the slot's sealer is offline.
pub fn seal_block(
    views: &[NodeView],
    schedule: &SealerSchedule,
    slot: u64,
    now: f64,
    chain: &[Block],
    on_chain: &BTreeSet<ReportId>,
) -> Option<Block> {
    let sealer = schedule.sealer_for(slot)?;
    let view = views.iter().find(|v| v.robot == sealer)?;
    let mut txs: Vec<&PendingTx> = view
        .mempool
        .iter()
        .filter(|(id, _)| !on_chain.contains(id))
        .map(|(_, p)| p)
        .collect();
    txs.sort_by(|a, b| {
        a.received
            .total_cmp(&b.received)
            .then(a.report.robot.cmp(&b.report.robot))
            .then(a.report.nonce.cmp(&b.report.nonce))
    });
    Some(Block {
        index: chain.len() as u64 + 1,
        sealer,
        timestamp: now,
        txs: txs.into_iter().map(|p| p.report.clone()).collect(),
    })
}

/// The whole replicated system: one view per robot, the sealed chain and a
/// canonical contract copy that folds each block as soon as it is sealed.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: GossipConfig,
    pub schedule: SealerSchedule,
    pub genesis: ContractState,
    pub views: Vec<NodeView>,
    pub chain: Vec<Block>,
    pub on_chain: BTreeSet<ReportId>,
    pub receptions: Vec<Reception>,
    pub canonical: ContractState,
    /// Largest open-cluster count seen in any copy of the contract.
    pub max_open: usize,
}

impl Network {
    pub fn new(genesis: ContractState, config: GossipConfig) -> Result<Self> {
        config.validate()?;
        let robots: Vec<RobotId> = genesis.balances().keys().copied().collect();
        let views = robots
            .iter()
            .map(|r| NodeView::new(*r, genesis.clone()))
            .collect();
        Ok(Network {
            config,
            schedule: SealerSchedule {
                order: robots,
                offline: BTreeSet::new(),
            },
            max_open: genesis.open_count(),
            canonical: genesis.clone(),
            genesis,
            views,
            chain: Vec::new(),
            on_chain: BTreeSet::new(),
            receptions: Vec::new(),
        })
    }

    pub fn view(&self, robot: RobotId) -> Option<&NodeView> {
        self.views.iter().find(|v| v.robot == robot)
    }

    /// Puts a freshly signed report into its author's mempool.
    pub fn submit(&mut self, report: &Report, now: f64) -> bool {
        match self.views.iter_mut().find(|v| v.robot == report.robot) {
            Some(v) => v.offer_tx(report, now),
            None => false,
        }
    }

    pub fn gossip(&mut self, proximity: &Adjacency, now: f64) {
        gossip_step(
            &mut self.views,
            proximity,
            now,
            &self.chain,
            &mut self.receptions,
        );
        self.track_open();
    }

    /// Seals the block for `slot`, hands it to its sealer and folds it into
    /// the canonical copy. Returns the block and the canonical outcomes.
    pub fn seal(&mut self, slot: u64, now: f64) -> Option<(Block, Vec<ApplyOutcome>)> {
        let block = seal_block(
            &self.views,
            &self.schedule,
            slot,
            now,
            &self.chain,
            &self.on_chain,
        )?;
        for tx in &block.txs {
            self.on_chain.insert(tx.id());
        }
        self.chain.push(block.clone());
        if let Some(v) = self.views.iter_mut().find(|v| v.robot == block.sealer) {
            v.known_blocks.insert(block.index);
            v.apply_block(block.clone());
        }
        let outcomes = block
            .txs
            .iter()
            .map(|tx| {
                let o = self.canonical.apply_report(block.index, tx);
                self.max_open = self.max_open.max(self.canonical.open_count());
                o
            })
            .collect();
        self.track_open();
        Some((block, outcomes))
    }

    /// Delivers every sealed block to every node, as if the swarm regrouped.
    pub fn synchronize(&mut self) {
        for v in &mut self.views {
            for b in &self.chain {
                if !v.known_blocks.contains(&b.index) {
                    v.apply_block(b.clone());
                }
            }
        }
        self.track_open();
    }

    /// Checks that every node that has applied the full chain agrees with an
    /// independent replay, and returns the replayed digest.
    pub fn verify(&self) -> Result<StateDigest> {
        let replayed = replay(&self.genesis, &self.chain)?.state_digest();
        let head = self.chain.len() as u64;
        let canon = self.canonical.state_digest();
        if canon != replayed {
            return Err(Error::DigestMismatch {
                robot: 0,
                node: canon.to_string(),
                replay: replayed.to_string(),
            });
        }
        for v in self.views.iter().filter(|v| v.chain_head == head) {
            let d = v.local_state.state_digest();
            if d != replayed {
                return Err(Error::DigestMismatch {
                    robot: v.robot.0,
                    node: d.to_string(),
                    replay: replayed.to_string(),
                });
            }
        }
        Ok(replayed)
    }

    fn track_open(&mut self) {
        for v in &self.views {
            self.max_open = self.max_open.max(v.max_open);
        }
    }
}

/// Folds a contiguous chain, starting at block 1, over `genesis`.
pub fn replay(genesis: &ContractState, log: &[Block]) -> Result<ContractState> {
    let mut state = genesis.clone();
    for (i, block) in log.iter().enumerate() {
        let expected = i as u64 + 1;
        if block.index != expected {
            return Err(Error::NonContiguousChain {
                expected,
                found: block.index,
            });
        }
        for tx in &block.txs {
            state.apply_report(block.index, tx);
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DelaySummary {
    pub count: usize,
    pub mean: f64,
    pub p90: f64,
}

pub fn block_delay_stats(receptions: &[Reception]) -> DelaySummary {
    if receptions.is_empty() {
        return DelaySummary::default();
    }
    let mut delays: Vec<f64> = receptions.iter().map(|r| r.delay).collect();
    delays.sort_by(f64::total_cmp);
    let n = delays.len();
    let mean = delays.iter().sum::<f64>() / n as f64;
    // Nearest-rank percentile.
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    DelaySummary {
        count: n,
        mean,
        p90: delays[rank - 1],
    }
}

/// Empirical CDF of reception delays: `(delay, P[D ≤ delay])` per distinct
/// delay value.
pub fn delay_cdf(receptions: &[Reception]) -> Vec<(f64, f64)> {
    let mut delays: Vec<f64> = receptions.iter().map(|r| r.delay).collect();
    delays.sort_by(f64::total_cmp);
    let n = delays.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, d) in delays.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *d => last.1 = p,
            _ => out.push((*d, p)),
        }
    }
    out
}

/// Line-delimited chain export. The first record carries the genesis state
/// so the file can be replayed on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainRecord {
    Genesis {
        version: u32,
        params: ContractParams,
        balances: Vec<(RobotId, TokenAmount)>,
    },
    Block {
        version: u32,
        #[serde(flatten)]
        block: Block,
    },
}

pub fn write_chain(
    mut out: impl Write,
    genesis: &ContractState,
    chain: &[Block],
) -> std::io::Result<()> {
    let header = ChainRecord::Genesis {
        version: CANONICAL_VERSION,
        params: genesis.params().clone(),
        balances: genesis.balances().iter().map(|(r, b)| (*r, *b)).collect(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for block in chain {
        let rec = ChainRecord::Block {
            version: CANONICAL_VERSION,
            block: block.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_chain(input: impl BufRead) -> Result<(ContractState, Vec<Block>)> {
    let mut genesis = None;
    let mut chain = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ChainRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        match rec {
            ChainRecord::Genesis {
                params, balances, ..
            } => {
                if genesis.is_some() {
                    return Err(Error::Malformed {
                        line: i + 1,
                        reason: "second genesis record".into(),
                    });
                }
                genesis = Some(ContractState::new(params, balances)?);
            }
            ChainRecord::Block { block, .. } => chain.push(block),
        }
    }
    let genesis = genesis.ok_or(Error::Malformed {
        line: 1,
        reason: "missing genesis record".into(),
    })?;
    Ok((genesis, chain))
}
