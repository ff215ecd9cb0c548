//! Ballots over a finite value domain `1..=K`.
//!
//! A ballot is either the null ballot `<0:_>` or a pair of a round `n >= 1`
//! and a value. Ballots are totally ordered by round, then value, with the
//! null ballot below everything.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// A proposal value. Valid values for a domain of size `K` are `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Value(pub u32);

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ballot {
    #[default]
    Null,
    Round {
        n: u32,
        x: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BallotError {
    #[error("malformed ballot {0:?}")]
    Malformed(String),
    #[error("round 0 is reserved for the null ballot")]
    ZeroRound,
}

impl Ballot {
    pub fn new(n: u32, x: u32) -> Ballot {
        assert!(n >= 1, "round 0 is reserved for the null ballot");
        Ballot::Round { n, x: Value(x) }
    }

    pub fn round(self) -> u32 {
        match self {
            Ballot::Null => 0,
            Ballot::Round { n, .. } => n,
        }
    }

    pub fn value(self) -> Option<Value> {
        match self {
            Ballot::Null => None,
            Ballot::Round { x, .. } => Some(x),
        }
    }

    /// Same value; the null ballot is compatible with nothing.
    pub fn compatible(self, other: Ballot) -> bool {
        matches!((self.value(), other.value()), (Some(a), Some(b)) if a == b)
    }

    /// `self` is less than and incompatible with `b`.
    pub fn lic(self, b: Ballot) -> bool {
        self < b && !self.compatible(b)
    }

    /// Next ballot in the order over `1..=k`.
    pub fn succ(self, k: u32) -> Ballot {
        match self {
            Ballot::Null => Ballot::new(1, 1),
            Ballot::Round { n, x } if x.0 < k => Ballot::new(n, x.0 + 1),
            Ballot::Round { n, .. } => Ballot::new(n + 1, 1),
        }
    }

    /// Previous ballot in the order over `1..=k`; `None` for the null ballot.
    pub fn pred(self, k: u32) -> Option<Ballot> {
        match self {
            Ballot::Null => None,
            Ballot::Round { n: 1, x } if x.0 <= 1 => Some(Ballot::Null),
            Ballot::Round { n, x } if x.0 <= 1 => Some(Ballot::new(n - 1, k)),
            Ballot::Round { n, x } => Some(Ballot::new(n, x.0 - 1)),
        }
    }
}

impl fmt::Display for Ballot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ballot::Null => f.write_str("<0:_>"),
            Ballot::Round { n, x } => write!(f, "<{n}:{x}>"),
        }
    }
}

impl FromStr for Ballot {
    type Err = BallotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BallotError::Malformed(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('<')
            .and_then(|r| r.strip_suffix('>'))
            .ok_or_else(bad)?;
        let (n, x) = inner.split_once(':').ok_or_else(bad)?;
        let n: u32 = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return if x.trim() == "_" {
                Ok(Ballot::Null)
            } else {
                Err(BallotError::ZeroRound)
            };
        }
        let x: u32 = x.trim().parse().map_err(|_| bad())?;
        Ok(Ballot::Round { n, x: Value(x) })
    }
}

/// Every ballot with round at most `max_round`, in ascending order.
pub fn ballots_up_to(max_round: u32, k: u32) -> Vec<Ballot> {
    let mut out = vec![Ballot::Null];
    for n in 1..=max_round {
        for x in 1..=k {
            out.push(Ballot::new(n, x));
        }
    }
    out
}

/// Ballots less than and incompatible with `b`, ascending.
pub fn lic_set(b: Ballot, k: u32) -> Vec<Ballot> {
    ballots_up_to(b.round(), k)
        .into_iter()
        .filter(|c| c.lic(b))
        .collect()
}

/// The half-open interval `[z, b)`, ascending.
pub fn interval(z: Ballot, b: Ballot, k: u32) -> Vec<Ballot> {
    ballots_up_to(b.round(), k)
        .into_iter()
        .filter(|c| z <= *c && *c < b)
        .collect()
}

/// `lic(b) ⊆ lic(bu)`: a statement about `bu` also aborts everything `b` needs aborted.
pub fn prep_covers(bu: Ballot, b: Ballot, k: u32) -> bool {
    match (bu, b) {
        (_, Ballot::Null) => true,
        (Ballot::Null, _) => false,
        (Ballot::Round { x: y, .. }, Ballot::Round { n, x }) => {
            if x == y {
                b <= bu || k == 1
            } else {
                n == 1 && y > x
            }
        }
    }
}

/// Parses `[<0:_>,<1:1>]`.
pub fn parse_ballot_list(s: &str) -> Result<Vec<Ballot>, BallotError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| BallotError::Malformed(s.to_string()))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(str::parse).collect()
}

pub fn format_ballot_list(bs: &[Ballot]) -> String {
    let parts: Vec<String> = bs.iter().map(Ballot::to_string).collect();
    format!("[{}]", parts.join(","))
}
