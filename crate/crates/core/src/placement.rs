//! Synthetic user placement with a popularity gradient anchored at the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ecosystem::{capacity_from_coefficient, Ecosystem, Privacy, UserId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementParams {
    /// Popularity of the target site (id 1), in `[0, 1]`.
    pub popularity: f64,
    /// Per-site capacity coefficient; `cap(s) = floor(capC(s) × |U_s|)`.
    pub capacity_coefficients: Vec<f64>,
    pub privacy: Privacy,
}

impl PlacementParams {
    /// Target gets `target_coefficient`, every peer gets `peer_coefficient`.
    pub fn uniform(
        popularity: f64,
        n: usize,
        target_coefficient: f64,
        peer_coefficient: f64,
        privacy: Privacy,
    ) -> Self {
        let mut capacity_coefficients = vec![peer_coefficient; n];
        if n > 0 {
            capacity_coefficients[0] = target_coefficient;
        }
        Self {
            popularity,
            capacity_coefficients,
            privacy,
        }
    }
}

/// `Pr[s ∈ S_u]` for the site with 1-based id `id` among `n`.
pub fn membership_probability(popularity: f64, id: usize, n: usize) -> f64 {
    let (id, n) = (id as f64, n as f64);
    (1.0 - popularity) * id / n + popularity * (1.0 - (id - 1.0) / n)
}

/// Draws every user's membership at every site independently. Site index `i`
/// carries id `i + 1`, so the target (index 0) has id 1.
pub fn generate_placement(params: &PlacementParams, n: usize, users: usize, seed: u64) -> Result<Ecosystem> {
    if n < 3 {
        return Err(Error::TooFewSites(n));
    }
    if users == 0 {
        return Err(Error::NoUsers);
    }
    if !(0.0..=1.0).contains(&params.popularity) {
        return Err(Error::PopularityOutOfRange(params.popularity));
    }
    if params.capacity_coefficients.len() != n {
        return Err(Error::CoefficientCount {
            expected: n,
            got: params.capacity_coefficients.len(),
        });
    }
    for &c in &params.capacity_coefficients {
        capacity_from_coefficient(c, 0)?;
    }

    let probs: Vec<f64> = (1..=n)
        .map(|id| membership_probability(params.popularity, id, n))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members: Vec<Vec<UserId>> = vec![Vec::new(); n];
    for u in 0..users {
        for (s, &p) in probs.iter().enumerate() {
            if rng.random::<f64>() < p {
                members[s].push(u as UserId);
            }
        }
    }
    let caps = members
        .iter()
        .zip(&params.capacity_coefficients)
        .map(|(m, &c)| capacity_from_coefficient(c, m.len() as u64))
        .collect::<Result<Vec<_>>>()?;
    Ecosystem::new(users, members, caps, params.privacy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_endpoints() {
        let n = 7;
        assert_eq!(membership_probability(1.0, 1, n), 1.0);
        assert!((membership_probability(1.0, n, n) - 1.0 / n as f64).abs() < 1e-15);
        assert!((membership_probability(0.0, 1, n) - 1.0 / n as f64).abs() < 1e-15);
        assert_eq!(membership_probability(0.0, n, n), 1.0);
        for id in 1..=n {
            let p = membership_probability(0.5, id, n);
            assert!((p - (n as f64 + 1.0) / (2.0 * n as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn full_popularity_puts_everyone_at_target() {
        let params = PlacementParams::uniform(1.0, 4, 0.5, 0.5, Privacy::Psi);
        let e = generate_placement(&params, 4, 200, 3).unwrap();
        assert_eq!(e.user_count(0), 200);
        assert_eq!(e.capacity(0), 100);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PlacementParams::uniform(0.5, 2, 1.0, 1.0, Privacy::Psi);
        assert!(matches!(generate_placement(&p, 2, 10, 0), Err(Error::TooFewSites(2))));
        let p = PlacementParams::uniform(1.5, 3, 1.0, 1.0, Privacy::Psi);
        assert!(matches!(
            generate_placement(&p, 3, 10, 0),
            Err(Error::PopularityOutOfRange(_))
        ));
        let p = PlacementParams::uniform(-0.1, 3, 1.0, 1.0, Privacy::Psi);
        assert!(generate_placement(&p, 3, 10, 0).is_err());
        let p = PlacementParams::uniform(0.5, 3, -1.0, 1.0, Privacy::Psi);
        assert!(generate_placement(&p, 3, 10, 0).is_err());
    }
}
