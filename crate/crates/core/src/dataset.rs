//! Breach-dump ingestion: parsing, deduplication, hashed-entry filtering, the
//! largest connected component of the user–site graph, pairwise reuse rates
//! and size-quartile sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ecosystem::{Ecosystem, Privacy, SiteIdx, UserId};
use crate::error::{Error, Result};

/// Heuristic for passwords that are stored hashes rather than plaintext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFilter {
    pub enabled: bool,
    pub hex_lengths: Vec<usize>,
    pub crypt_prefixes: Vec<String>,
}

impl Default for HashFilter {
    fn default() -> Self {
        Self {
            enabled: true,
            hex_lengths: vec![32, 40, 64, 128],
            crypt_prefixes: [
                "$1$", "$2a$", "$2b$", "$2y$", "$5$", "$6$", "$y$", "$argon2", "$pbkdf2", "$sha1$",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

impl HashFilter {
    pub fn looks_hashed(&self, password: &str) -> bool {
        if !self.enabled {
            return false;
        }
        let hex = self.hex_lengths.contains(&password.len()) && password.bytes().all(|b| b.is_ascii_hexdigit());
        hex || self.crypt_prefixes.iter().any(|p| password.starts_with(p.as_str()))
    }
}

/// Salted SHA-256 of a lower-cased email, hex encoded.
pub fn anonymize(salt: &[u8], email: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt);
    h.update([0u8]);
    h.update(email.trim().to_lowercase().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub lines: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub hashed: usize,
    pub entries: usize,
    pub sites: usize,
    pub users: usize,
    pub lcc_sites: usize,
    pub lcc_users: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairReuse {
    pub shared: u64,
    pub same_password: u64,
}

/// Reuse counts per unordered pair of output sites.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReuseTable {
    pairs: BTreeMap<(SiteIdx, SiteIdx), PairReuse>,
}

impl ReuseTable {
    pub fn get(&self, s: SiteIdx, peer: SiteIdx) -> Option<PairReuse> {
        self.pairs.get(&(s.min(peer), s.max(peer))).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((SiteIdx, SiteIdx), PairReuse)> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Median rate over all pairs with shared users.
    pub fn median_rate(&self) -> Option<f64> {
        let mut r: Vec<f64> = self
            .pairs
            .values()
            .map(|p| p.same_password as f64 / p.shared as f64)
            .collect();
        if r.is_empty() {
            return None;
        }
        r.sort_by(f64::total_cmp);
        let m = r.len() / 2;
        Some(if r.len() % 2 == 1 {
            r[m]
        } else {
            0.5 * (r[m - 1] + r[m])
        })
    }
}

pub fn reuse_rate(table: &ReuseTable, s: SiteIdx, peer: SiteIdx) -> Result<f64> {
    match table.get(s, peer) {
        Some(p) if p.shared > 0 => Ok(p.same_password as f64 / p.shared as f64),
        _ => Err(Error::NoSharedUsers(s, peer)),
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Site `i` of the ecosystem is `site_names[i]`; sites are sorted by name.
    pub site_names: Vec<String>,
    /// PSI privacy, capacities equal to user counts.
    pub ecosystem: Ecosystem,
    pub reuse: ReuseTable,
    pub summary: IngestSummary,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Reads `site<TAB>email<TAB>password` lines.
pub fn ingest<R: BufRead>(input: R, salt: &[u8], filter: &HashFilter) -> Result<Dataset> {
    let mut summary = IngestSummary::default();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    let mut site_ix: BTreeMap<String, usize> = BTreeMap::new();
    let mut user_ix: HashMap<String, usize> = HashMap::new();
    let mut user_keys: Vec<String> = Vec::new();
    // (site, user) -> passwords
    let mut creds: HashMap<(usize, usize), BTreeSet<String>> = HashMap::new();
    let mut site_names: Vec<String> = Vec::new();

    for line in input.lines() {
        let line = line?;
        summary.lines += 1;
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            summary.malformed += 1;
            continue;
        }
        let (site, email, password) = (fields[0].trim(), fields[1].trim(), fields[2]);
        if !seen.insert((site.to_string(), email.to_string(), password.to_string())) {
            summary.duplicates += 1;
            continue;
        }
        if filter.looks_hashed(password) {
            summary.hashed += 1;
            continue;
        }
        summary.entries += 1;
        let s = *site_ix.entry(site.to_string()).or_insert_with(|| {
            site_names.push(site.to_string());
            site_names.len() - 1
        });
        let key = anonymize(salt, email);
        let u = *user_ix.entry(key.clone()).or_insert_with(|| {
            user_keys.push(key);
            user_keys.len() - 1
        });
        creds.entry((s, u)).or_default().insert(password.to_string());
    }
    summary.sites = site_names.len();
    summary.users = user_keys.len();

    // sites occupy nodes 0..S, users S..S+U
    let n_sites = site_names.len();
    let mut uf = UnionFind::new(n_sites + user_keys.len());
    for &(s, u) in creds.keys() {
        uf.union(s, n_sites + u);
    }
    let mut comp_size: HashMap<usize, usize> = HashMap::new();
    for x in 0..n_sites + user_keys.len() {
        *comp_size.entry(uf.find(x)).or_default() += 1;
    }
    // largest by node count; ties go to the component holding the first site name
    let mut best: Option<(usize, usize)> = None;
    for name in site_ix.keys() {
        let root = uf.find(site_ix[name]);
        let size = comp_size[&root];
        if best.is_none_or(|(_, b)| size > b) {
            best = Some((root, size));
        }
    }
    let root = best.ok_or(Error::TooFewSites(0))?.0;

    let kept_sites: Vec<&String> = site_ix.keys().filter(|n| uf.find(site_ix[*n]) == root).collect();
    let mut kept_users: Vec<(String, usize)> = user_keys
        .iter()
        .enumerate()
        .filter(|&(u, _)| uf.find(n_sites + u) == root)
        .map(|(u, k)| (k.clone(), u))
        .collect();
    kept_users.sort();
    let new_user: HashMap<usize, UserId> = kept_users
        .iter()
        .enumerate()
        .map(|(i, &(_, u))| (u, i as UserId))
        .collect();
    let new_site: HashMap<usize, SiteIdx> = kept_sites.iter().enumerate().map(|(i, n)| (site_ix[*n], i)).collect();
    summary.lcc_sites = kept_sites.len();
    summary.lcc_users = kept_users.len();

    let mut members: Vec<Vec<UserId>> = vec![Vec::new(); kept_sites.len()];
    let mut pw: Vec<HashMap<UserId, &BTreeSet<String>>> = vec![HashMap::new(); kept_sites.len()];
    for (&(s, u), set) in &creds {
        if let (Some(&ns), Some(&nu)) = (new_site.get(&s), new_user.get(&u)) {
            members[ns].push(nu);
            pw[ns].insert(nu, set);
        }
    }
    let caps: Vec<u64> = members.iter().map(|m| m.len() as u64).collect();
    let mut eco = Ecosystem::new(kept_users.len(), members, caps, Privacy::Psi)?;

    let mut pairs = BTreeMap::new();
    for a in 0..eco.n_sites() {
        for b in a + 1..eco.n_sites() {
            let shared = eco.shared_users(a, b);
            if shared.is_empty() {
                continue;
            }
            let same = shared.iter().filter(|u| !pw[a][u].is_disjoint(pw[b][u])).count() as u64;
            pairs.insert(
                (a, b),
                PairReuse {
                    shared: shared.len() as u64,
                    same_password: same,
                },
            );
        }
    }
    let reuse = ReuseTable { pairs };
    for ((a, b), p) in reuse.iter() {
        eco.set_reuse_rate(a, b, p.same_password as f64 / p.shared as f64)?;
    }

    Ok(Dataset {
        site_names: kept_sites.into_iter().cloned().collect(),
        ecosystem: eco,
        reuse,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quartile {
    S,
    M,
    L,
    XL,
}

impl Quartile {
    pub const ALL: [Quartile; 4] = [Quartile::S, Quartile::M, Quartile::L, Quartile::XL];

    pub fn label(&self) -> &'static str {
        match self {
            Quartile::S => "S",
            Quartile::M => "M",
            Quartile::L => "L",
            Quartile::XL => "XL",
        }
    }
}

impl std::str::FromStr for Quartile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Quartile::S),
            "M" => Ok(Quartile::M),
            "L" => Ok(Quartile::L),
            "XL" => Ok(Quartile::XL),
            _ => Err(Error::Config(format!("unknown quartile {s:?}"))),
        }
    }
}

/// Linear-interpolation percentile of sorted data, `p` in `[0, 100]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Site quartile by `|U_s|`: S up to the 25th percentile, M up to the 50th,
/// L up to the 75th, XL above.
pub fn quartiles(e: &Ecosystem) -> Vec<Quartile> {
    let mut sizes: Vec<f64> = (0..e.n_sites()).map(|s| e.user_count(s) as f64).collect();
    sizes.sort_by(f64::total_cmp);
    let (p25, p50, p75) = (
        percentile(&sizes, 25.0),
        percentile(&sizes, 50.0),
        percentile(&sizes, 75.0),
    );
    (0..e.n_sites())
        .map(|s| {
            let x = e.user_count(s) as f64;
            if x <= p25 {
                Quartile::S
            } else if x <= p50 {
                Quartile::M
            } else if x <= p75 {
                Quartile::L
            } else {
                Quartile::XL
            }
        })
        .collect()
}

/// `count` distinct sites of quartile `q`, sampled uniformly, in index order.
pub fn quartile_sample(e: &Ecosystem, q: Quartile, count: usize, seed: u64) -> Result<Vec<SiteIdx>> {
    let members: Vec<SiteIdx> = quartiles(e)
        .into_iter()
        .enumerate()
        .filter(|&(_, x)| x == q)
        .map(|(s, _)| s)
        .collect();
    if count > members.len() {
        return Err(Error::QuartileTooSmall {
            quartile: q.label(),
            available: members.len(),
            requested: count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<SiteIdx> = sample(&mut rng, members.len(), count)
        .into_iter()
        .map(|i| members[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteStats {
    pub site: usize,
    pub name: String,
    pub users: u64,
    /// Users with an account at some other site.
    pub shared: u64,
    /// Users reusing a password at some other site.
    pub capturable: u64,
    pub quartile: &'static str,
}

pub fn site_stats(d: &Dataset) -> Result<Vec<SiteStats>> {
    let e = &d.ecosystem;
    let q = quartiles(e);
    (0..e.n_sites())
        .map(|s| {
            let shared = e.members(s).iter().filter(|&&u| e.sites_of(u).len() > 1).count() as u64;
            Ok(SiteStats {
                site: s + 1,
                name: d.site_names[s].clone(),
                users: e.user_count(s),
                shared,
                capturable: e.vulnerable_users(s)?.len() as u64,
                quartile: q[s].label(),
            })
        })
        .collect()
}

pub fn write_reuse_csv<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["site_a", "site_b", "shared", "same_password", "rate"])?;
    for ((a, b), p) in d.reuse.iter() {
        w.write_record([
            d.site_names[a].clone(),
            d.site_names[b].clone(),
            p.shared.to_string(),
            p.same_password.to_string(),
            (p.same_password as f64 / p.shared as f64).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_site_stats_csv<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in site_stats(d)? {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
