//! The user–site membership structure shared by every simulation component.
//!
//! Sites are indexed `0..n` internally; index 0 is the target site and the
//! text format writes indices as 1-based ids. Users are `0..ℓ`.
//!
//! Site-strategy code must go through [`LocalView`] (cardinalities only) or
//! [`Ecosystem::psi_intersection`], which refuses to hand out member sets in
//! PSICA mode. Attacker code reads full sets through [`Ecosystem::members`].

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a site, `0..n`. Index 0 is the target.
pub type SiteIdx = usize;
/// Index of a user, `0..ℓ`.
pub type UserId = u32;

/// How much a site knows about the users it shares with a peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Privacy {
    /// Membership of the intersection is known.
    Psi,
    /// Only the intersection's cardinality is known.
    Psica,
}

impl fmt::Display for Privacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Privacy::Psi => f.write_str("psi"),
            Privacy::Psica => f.write_str("psica"),
        }
    }
}

impl FromStr for Privacy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "psi" => Ok(Privacy::Psi),
            "psica" => Ok(Privacy::Psica),
            other => Err(Error::Config(format!("unknown privacy level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ecosystem {
    users: usize,
    privacy: Privacy,
    members: Vec<Vec<UserId>>,
    user_sites: Vec<Vec<u32>>,
    /// Per site, sorted `(peer, |U_s ∩ U_peer|)` for every peer with a non-empty intersection.
    shared: Vec<Vec<(u32, u64)>>,
    capacities: Vec<u64>,
    /// Unordered pair `(lo, hi)` → reuse rate; absent pairs default to 1.0.
    reuse: BTreeMap<(SiteIdx, SiteIdx), f64>,
}

impl Ecosystem {
    /// Builds an ecosystem from per-site member lists. Member lists are sorted
    /// and deduplicated; capacities must have one entry per site.
    pub fn new(users: usize, mut members: Vec<Vec<UserId>>, capacities: Vec<u64>, privacy: Privacy) -> Result<Self> {
        let n = members.len();
        if n < 3 {
            return Err(Error::TooFewSites(n));
        }
        if users == 0 {
            return Err(Error::NoUsers);
        }
        if capacities.len() != n {
            return Err(Error::Config(format!(
                "expected {n} capacities, got {}",
                capacities.len()
            )));
        }
        let mut user_sites = vec![Vec::new(); users];
        for (s, list) in members.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &u in list.iter() {
                let slot = user_sites
                    .get_mut(u as usize)
                    .ok_or(Error::UnknownUser { user: u, users })?;
                slot.push(s as u32);
            }
        }

        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for sites in &user_sites {
            for (i, &a) in sites.iter().enumerate() {
                for &b in &sites[i + 1..] {
                    *pair_counts.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
        let mut shared = vec![Vec::new(); n];
        for (&(a, b), &c) in &pair_counts {
            shared[a as usize].push((b, c));
            shared[b as usize].push((a, c));
        }
        for row in &mut shared {
            row.sort_unstable();
        }

        Ok(Self {
            users,
            privacy,
            members,
            user_sites,
            shared,
            capacities,
            reuse: BTreeMap::new(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.members.len()
    }

    pub fn n_users(&self) -> usize {
        self.users
    }

    pub fn privacy(&self) -> Privacy {
        self.privacy
    }

    pub fn with_privacy(mut self, privacy: Privacy) -> Self {
        self.privacy = privacy;
        self
    }

    pub fn set_privacy(&mut self, privacy: Privacy) {
        self.privacy = privacy;
    }

    fn check_site(&self, s: SiteIdx) -> Result<()> {
        if s < self.n_sites() {
            Ok(())
        } else {
            Err(Error::UnknownSite(s))
        }
    }

    /// Full member set of a site. Attacker-side accessor.
    pub fn members(&self, s: SiteIdx) -> &[UserId] {
        &self.members[s]
    }

    /// `|U_s|`.
    pub fn user_count(&self, s: SiteIdx) -> u64 {
        self.members[s].len() as u64
    }

    /// Sites at which user `u` holds an account (`S_u`), ascending.
    pub fn sites_of(&self, u: UserId) -> &[u32] {
        &self.user_sites[u as usize]
    }

    pub fn capacity(&self, s: SiteIdx) -> u64 {
        self.capacities[s]
    }

    pub fn capacities(&self) -> &[u64] {
        &self.capacities
    }

    pub fn set_capacities(&mut self, capacities: Vec<u64>) -> Result<()> {
        if capacities.len() != self.n_sites() {
            return Err(Error::CoefficientCount {
                expected: self.n_sites(),
                got: capacities.len(),
            });
        }
        self.capacities = capacities;
        Ok(())
    }

    /// Resets every capacity to `floor(capC(s) × |U_s|)`.
    pub fn apply_capacity_coefficients(&mut self, coefficients: &[f64]) -> Result<()> {
        if coefficients.len() != self.n_sites() {
            return Err(Error::CoefficientCount {
                expected: self.n_sites(),
                got: coefficients.len(),
            });
        }
        let mut caps = Vec::with_capacity(coefficients.len());
        for (s, &c) in coefficients.iter().enumerate() {
            caps.push(capacity_from_coefficient(c, self.user_count(s))?);
        }
        self.capacities = caps;
        Ok(())
    }

    /// `|U_s ∩ U_s'|`; zero for `s == s'`.
    pub fn shared_count(&self, s: SiteIdx, peer: SiteIdx) -> u64 {
        if s == peer {
            return 0;
        }
        let row = &self.shared[s];
        match row.binary_search_by_key(&(peer as u32), |&(p, _)| p) {
            Ok(i) => row[i].1,
            Err(_) => 0,
        }
    }

    /// Peers with which `s` shares at least one user, with the counts.
    pub fn shared_row(&self, s: SiteIdx) -> &[(u32, u64)] {
        &self.shared[s]
    }

    /// The member set `U_s ∩ U_s'`, regardless of privacy level. Attacker-side accessor.
    pub fn shared_users(&self, s: SiteIdx, peer: SiteIdx) -> Vec<UserId> {
        let (a, b) = (&self.members[s], &self.members[peer]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Site-side accessor for the intersection members; `None` in PSICA mode.
    pub fn psi_intersection(&self, s: SiteIdx, peer: SiteIdx) -> Option<Vec<UserId>> {
        match self.privacy {
            Privacy::Psi => Some(self.shared_users(s, peer)),
            Privacy::Psica => None,
        }
    }

    /// Reuse rate of the unordered pair; 1.0 unless overridden.
    pub fn reuse_rate(&self, s: SiteIdx, peer: SiteIdx) -> f64 {
        let key = (s.min(peer), s.max(peer));
        self.reuse.get(&key).copied().unwrap_or(1.0)
    }

    pub fn set_reuse_rate(&mut self, s: SiteIdx, peer: SiteIdx, rate: f64) -> Result<()> {
        self.check_site(s)?;
        self.check_site(peer)?;
        if s == peer {
            return Err(Error::SelfPair(s));
        }
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::ReuseOutOfRange(rate));
        }
        self.reuse.insert((s.min(peer), s.max(peer)), rate);
        Ok(())
    }

    /// Explicit reuse overrides, keyed by unordered pair.
    pub fn reuse_overrides(&self) -> impl Iterator<Item = ((SiteIdx, SiteIdx), f64)> + '_ {
        self.reuse.iter().map(|(&k, &v)| (k, v))
    }

    /// Reuse of user `u`'s credential between `s` and `peer`. Per-pair rates apply
    /// uniformly to every shared user; users not in both sites reuse nothing.
    pub fn user_reuse(&self, u: UserId, s: SiteIdx, peer: SiteIdx) -> f64 {
        let sites = self.sites_of(u);
        let has = |x: SiteIdx| sites.binary_search(&(x as u32)).is_ok();
        if s != peer && has(s) && has(peer) {
            self.reuse_rate(s, peer)
        } else {
            0.0
        }
    }

    /// Cardinality-only view for site-strategy code.
    pub fn local_view(&self, s: SiteIdx) -> LocalView {
        let mut shared = vec![0; self.n_sites()];
        for &(p, c) in &self.shared[s] {
            shared[p as usize] = c;
        }
        LocalView {
            site: s,
            own_users: self.user_count(s),
            capacity: self.capacities[s],
            privacy: self.privacy,
            shared,
        }
    }

    /// Users of `s` with at least one other account whose credential they reuse
    /// there (`V_s`).
    pub fn vulnerable_users(&self, s: SiteIdx) -> Result<Vec<UserId>> {
        self.check_site(s)?;
        Ok(self.members[s]
            .iter()
            .copied()
            .filter(|&u| {
                self.sites_of(u)
                    .iter()
                    .any(|&p| p as usize != s && self.reuse_rate(s, p as usize) > 0.0)
            })
            .collect())
    }

    /// Sub-ecosystem over the given sites (in the given order), keeping only
    /// users with an account at one of them. Users are renumbered densely.
    pub fn restrict(&self, sites: &[SiteIdx]) -> Result<Ecosystem> {
        for &s in sites {
            self.check_site(s)?;
        }
        let mut remap: HashMap<UserId, UserId> = HashMap::new();
        let mut all: Vec<UserId> = sites.iter().flat_map(|&s| self.members[s].iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        for (i, u) in all.iter().enumerate() {
            remap.insert(*u, i as UserId);
        }
        let members = sites
            .iter()
            .map(|&s| self.members[s].iter().map(|u| remap[u]).collect())
            .collect();
        let caps = sites.iter().map(|&s| self.capacities[s]).collect();
        let mut out = Ecosystem::new(all.len().max(1), members, caps, self.privacy)?;
        for (i, &a) in sites.iter().enumerate() {
            for (j, &b) in sites.iter().enumerate().skip(i + 1) {
                let key = (a.min(b), a.max(b));
                if let Some(&r) = self.reuse.get(&key) {
                    out.set_reuse_rate(i, j, r)?;
                }
            }
        }
        Ok(out)
    }

    /// Line-oriented text form: a `sites`/`users`/`privacy` header, one `site`
    /// line per site, then optional `reuse` lines. Ids are 1-based.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "sites {} users {} privacy {}",
            self.n_sites(),
            self.users,
            self.privacy
        );
        for (s, list) in self.members.iter().enumerate() {
            let ids: Vec<String> = list.iter().map(|u| u.to_string()).collect();
            let _ = writeln!(out, "site {} cap {} users {}", s + 1, self.capacities[s], ids.join(","));
        }
        for (&(a, b), &r) in &self.reuse {
            let _ = writeln!(out, "reuse {} {} {}", a + 1, b + 1, r);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Ecosystem> {
        let perr = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "sites" || h[2] != "users" || h[4] != "privacy" {
            return Err(perr(hline, "expected `sites <n> users <l> privacy <psi|psica>`"));
        }
        let n: usize = h[1].parse().map_err(|_| perr(hline, "bad site count"))?;
        let users: usize = h[3].parse().map_err(|_| perr(hline, "bad user count"))?;
        let privacy: Privacy = h[5].parse().map_err(|_| perr(hline, "bad privacy level"))?;

        let mut members: Vec<Option<Vec<UserId>>> = vec![None; n];
        let mut caps = vec![0u64; n];
        let mut reuse = Vec::new();
        for (ln, line) in lines {
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("site") => {
                    let id: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr(ln, "bad site id"))?;
                    if id == 0 || id > n {
                        return Err(perr(ln, "site id out of range"));
                    }
                    if tok.next() != Some("cap") {
                        return Err(perr(ln, "expected `cap`"));
                    }
                    let cap: u64 = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr(ln, "bad capacity"))?;
                    if tok.next() != Some("users") {
                        return Err(perr(ln, "expected `users`"));
                    }
                    let list = match tok.next() {
                        None => Vec::new(),
                        Some(ids) => ids
                            .split(',')
                            .filter(|t| !t.is_empty())
                            .map(|t| t.parse::<UserId>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| perr(ln, "bad user id"))?,
                    };
                    if members[id - 1].is_some() {
                        return Err(perr(ln, "duplicate site line"));
                    }
                    members[id - 1] = Some(list);
                    caps[id - 1] = cap;
                }
                Some("reuse") => {
                    let parts: Vec<&str> = tok.collect();
                    if parts.len() != 3 {
                        return Err(perr(ln, "expected `reuse <s> <s'> <rate>`"));
                    }
                    let a: usize = parts[0].parse().map_err(|_| perr(ln, "bad site id"))?;
                    let b: usize = parts[1].parse().map_err(|_| perr(ln, "bad site id"))?;
                    let r: f64 = parts[2].parse().map_err(|_| perr(ln, "bad rate"))?;
                    if a == 0 || b == 0 || a > n || b > n {
                        return Err(perr(ln, "site id out of range"));
                    }
                    reuse.push((a - 1, b - 1, r));
                }
                _ => return Err(perr(ln, "unrecognised line")),
            }
        }
        let members = members
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or_else(|| perr(0, &format!("missing site {}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        let mut eco = Ecosystem::new(users, members, caps, privacy)?;
        for (a, b, r) in reuse {
            eco.set_reuse_rate(a, b, r)?;
        }
        Ok(eco)
    }
}

pub(crate) fn capacity_from_coefficient(coefficient: f64, users: u64) -> Result<u64> {
    if !coefficient.is_finite() || coefficient < 0.0 {
        return Err(Error::BadCapacityCoefficient(coefficient));
    }
    Ok((coefficient * users as f64).floor() as u64)
}

/// What one site may see when computing its own bids: its user count, its
/// capacity, and the cardinality of each intersection. Indexed by site; the
/// entry for the site itself is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalView {
    pub site: SiteIdx,
    pub own_users: u64,
    pub capacity: u64,
    pub privacy: Privacy,
    pub shared: Vec<u64>,
}

impl LocalView {
    pub fn n_sites(&self) -> usize {
        self.shared.len()
    }

    pub fn peers(&self) -> impl Iterator<Item = SiteIdx> + '_ {
        let me = self.site;
        (0..self.shared.len()).filter(move |&p| p != me)
    }
}
