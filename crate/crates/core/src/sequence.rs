//! Bidder orderings under the slack constraint.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ecosystem::SiteIdx;
use crate::error::{Error, Result};

/// Largest allowed spread between the most and fewest bids placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slack {
    Finite(u32),
    Infinite,
}

impl Slack {
    pub fn finite(n: u32) -> Result<Self> {
        if n == 0 {
            Err(Error::ZeroSlack)
        } else {
            Ok(Slack::Finite(n))
        }
    }

    fn admits(&self, spread: u64) -> bool {
        match *self {
            Slack::Infinite => true,
            Slack::Finite(s) => spread <= u64::from(s),
        }
    }
}

impl fmt::Display for Slack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slack::Finite(n) => write!(f, "{n}"),
            Slack::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Slack {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "∞" => Ok(Slack::Infinite),
            other => {
                let n: u32 = other.parse().map_err(|_| Error::Config(format!("bad slack {s:?}")))?;
                Slack::finite(n)
            }
        }
    }
}

impl Serialize for Slack {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Slack {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Slack::finite(n).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceConstraint {
    pub slack: Slack,
    /// Site that may cut in line, if any. It is left out of the dictated
    /// sequence and may never bid twice in a row.
    pub cutline: Option<SiteIdx>,
    /// Bids counted after the first-bid round.
    pub length: usize,
}

impl SequenceConstraint {
    pub fn new(slack: Slack, length: usize) -> Self {
        Self {
            slack,
            cutline: None,
            length,
        }
    }
}

/// Sites allowed to bid next given per-site counts (since the first-bid round).
pub fn eligible_bidders(
    counts: &[u32],
    slack: Slack,
    cutline: Option<SiteIdx>,
    last_bidder: Option<SiteIdx>,
) -> Vec<SiteIdx> {
    let min = counts.iter().copied().min().unwrap_or(0);
    (0..counts.len())
        .filter(|&s| slack.admits(u64::from(counts[s]) + 1 - u64::from(min)))
        .filter(|&s| !(cutline == Some(s) && last_bidder == Some(s)))
        .collect()
}

/// Samples a sequence uniformly among eligible bidders at each step. Under
/// cutline the designated site is excluded, so the sequence dictates peers
/// only and slack is tracked over them.
pub fn generate_sequence(n: usize, constraint: &SequenceConstraint, seed: u64) -> Result<Vec<SiteIdx>> {
    if n < 3 {
        return Err(Error::TooFewSites(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<SiteIdx> = (0..n).filter(|&s| Some(s) != constraint.cutline).collect();
    let mut counts = vec![0u32; sites.len()];
    let mut out = Vec::with_capacity(constraint.length);
    for _ in 0..constraint.length {
        let eligible = eligible_bidders(&counts, constraint.slack, None, None);
        let pick = eligible[rng.random_range(0..eligible.len())];
        counts[pick] += 1;
        out.push(sites[pick]);
    }
    Ok(out)
}

/// The next `foresight` dictated bidders after position `pos`.
pub fn foresight_window(sequence: &[SiteIdx], pos: usize, foresight: usize) -> &[SiteIdx] {
    let start = pos.min(sequence.len());
    let end = (start + foresight).min(sequence.len());
    &sequence[start..end]
}

/// Whitespace-separated 1-based site ids.
pub fn format_sequence(sequence: &[SiteIdx]) -> String {
    let ids: Vec<String> = sequence.iter().map(|s| (s + 1).to_string()).collect();
    ids.join(" ")
}

pub fn parse_sequence(text: &str, n: usize) -> Result<Vec<SiteIdx>> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| {
            let id: usize = tok.parse().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("token {i} ({tok:?}) is not a site id"),
            })?;
            if id == 0 || id > n {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("site id {id} out of range 1..={n}"),
                });
            }
            Ok(id - 1)
        })
        .collect()
}
