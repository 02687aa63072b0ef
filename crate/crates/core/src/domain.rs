//! Value types shared by the contract, the ledger and the simulator.
//!
//! Token balances are exact integers in base units; observations are plain
//! `f64` vectors that only ever feed distances and centroids.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base units per whole token.
pub const UNITS_PER_TOKEN: u64 = 1_000_000;

/// Robot identity, `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub u32);

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Monotonically increasing proposal identifier, starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Non-negative token quantity in indivisible base units.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TokenAmount(pub u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn units(self) -> u64 {
        self.0
    }

    pub fn from_tokens(tokens: u64) -> Self {
        TokenAmount(tokens * UNITS_PER_TOKEN)
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(rhs.0).map(TokenAmount)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for TokenAmount {
    type Output = TokenAmount;
    fn add(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.checked_add(rhs.0).expect("token overflow"))
    }
}

impl AddAssign for TokenAmount {
    fn add_assign(&mut self, rhs: TokenAmount) {
        *self = *self + rhs;
    }
}

impl Sub for TokenAmount {
    type Output = TokenAmount;
    fn sub(self, rhs: TokenAmount) -> TokenAmount {
        TokenAmount(self.0.checked_sub(rhs.0).expect("negative token amount"))
    }
}

impl SubAssign for TokenAmount {
    fn sub_assign(&mut self, rhs: TokenAmount) {
        *self = *self - rhs;
    }
}

impl Sum for TokenAmount {
    fn sum<I: Iterator<Item = TokenAmount>>(iter: I) -> Self {
        iter.fold(TokenAmount::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a TokenAmount> for TokenAmount {
    fn sum<I: Iterator<Item = &'a TokenAmount>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point in observation space (RGB in the landmark scenario).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn new(components: impl Into<Vec<f64>>) -> Self {
        Observation(components.into())
    }

    pub fn zeros(dim: usize) -> Self {
        Observation(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Component-wise sum, used for additive bias and noise.
    pub fn offset(&self, delta: &Observation) -> Observation {
        Observation(self.0.iter().zip(&delta.0).map(|(a, b)| a + b).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vote {
    Accept,
    Reject,
}

impl Vote {
    pub fn inverted(self) -> Vote {
        match self {
            Vote::Accept => Vote::Reject,
            Vote::Reject => Vote::Accept,
        }
    }
}

/// Globally unique report identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReportId {
    pub robot: RobotId,
    pub nonce: u64,
}

/// One robot's contribution to the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub observation: Observation,
    pub robot: RobotId,
    pub deposit: TokenAmount,
    pub vote: Vote,
    /// Proposal the robot set out to validate, if any.
    pub target: Option<ClusterId>,
    pub nonce: u64,
}

impl Report {
    pub fn id(&self) -> ReportId {
        ReportId {
            robot: self.robot,
            nonce: self.nonce,
        }
    }
}

/// Exact rational deposit quota `K = num / den` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepositQuota {
    num: u64,
    den: u64,
}

impl DepositQuota {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::InvalidQuota { num, den });
        }
        Ok(DepositQuota { num, den })
    }

    pub const ONE: DepositQuota = DepositQuota { num: 1, den: 1 };
    pub const ONE_THIRD: DepositQuota = DepositQuota { num: 1, den: 3 };

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    /// `⌊1/K⌋`, the maximum number of concurrently open proposals.
    pub fn capacity(self) -> usize {
        (self.den / self.num) as usize
    }

    /// `⌊K · amount⌋`.
    pub fn apply_floor(self, amount: TokenAmount) -> TokenAmount {
        let v = amount.0 as u128 * self.num as u128 / self.den as u128;
        TokenAmount(v as u64)
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for DepositQuota {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Splits `pool` into near-equal integer shares, one per recipient.
///
/// Shares differ by at most one base unit; the first `pool mod n` recipients
/// (in the order given) receive the extra unit.
pub fn proportional_split(pool: TokenAmount, recipients: &[RobotId]) -> Result<Vec<TokenAmount>> {
    let n = recipients.len() as u64;
    if n == 0 {
        return Err(Error::NoRecipients);
    }
    let base = pool.0 / n;
    let extra = pool.0 % n;
    Ok((0..n)
        .map(|i| TokenAmount(base + u64::from(i < extra)))
        .collect())
}
