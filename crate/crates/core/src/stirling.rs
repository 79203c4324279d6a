//! Log-factorials and the Stirling/Robbins approximation of binomial ratios.
//!
//! `ln(x!) = x ln x − x + ½ ln(2πx) + ε_x` with `1/(12x+1) < ε_x < 1/(12x)`.
//! The ratio `C(N−f, m) / C(N, m)` becomes `S · exp(E)` where `S` collects the
//! Stirling terms and `E` the four correction terms; the Robbins bounds on each
//! `ε` bracket `E` and therefore the exact ratio.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Exact log-factorials are tabulated for `x < TABLE_LEN`.
pub const TABLE_LEN: usize = 1 << 16;

/// Below this argument the correction `ε_x` is read off the table instead of
/// the asymptotic series.
const SERIES_CUTOFF: u64 = 10;

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Kahan-compensated running sum of ln(i).
        let mut out = Vec::with_capacity(TABLE_LEN);
        out.push(0.0);
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for i in 1..TABLE_LEN {
            let y = (i as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            out.push(sum);
        }
        out
    })
}

/// `ln(x!)`: tabulated below [`TABLE_LEN`], Stirling series above it.
pub fn ln_factorial(x: u64) -> f64 {
    if (x as usize) < TABLE_LEN {
        table()[x as usize]
    } else {
        stirling_ln_factorial(x) + correction_estimate(x)
    }
}

/// `x ln x − x + ½ ln(2πx)` for `x ≥ 1`.
pub fn stirling_ln_factorial(x: u64) -> f64 {
    let x = x as f64;
    x * x.ln() - x + 0.5 * (2.0 * PI * x).ln()
}

/// Robbins bounds `(1/(12x+1), 1/(12x))` on `ε_x`, `x ≥ 1`.
pub fn robbins_bounds(x: u64) -> (f64, f64) {
    let t = 12.0 * x as f64;
    (1.0 / (t + 1.0), 1.0 / t)
}

/// Best estimate of `ε_x`: exact for small `x`, asymptotic series otherwise.
fn correction_estimate(x: u64) -> f64 {
    if x < SERIES_CUTOFF {
        return table()[x as usize] - stirling_ln_factorial(x);
    }
    let x = x as f64;
    let x2 = x * x;
    let inv = 1.0 / x;
    let inv2 = 1.0 / x2;
    inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Stirling estimate of `C(N−f, m) / C(N, m)` with its Robbins bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StirlingRatio {
    /// `S`: the ratio with every `ε` dropped.
    pub base: f64,
    /// `S · exp(Ê)` with each `ε` replaced by its series estimate.
    pub approx: f64,
    /// `S · exp(E_lower)`.
    pub lower: f64,
    /// `S · exp(E_upper)`.
    pub upper: f64,
}

/// Requires `N−f`, `N−m`, `N−f−m` and `N` all at least 1; callers route the
/// degenerate cases to the exact path.
pub fn stirling_binom_ratio(n: u64, f: u64, m: u64) -> Result<StirlingRatio> {
    if n == 0 || f.checked_add(m).is_none_or(|fm| fm >= n) {
        return Err(Error::StirlingDegenerate { n, f, m });
    }
    let a = n - f;
    let b = n - m;
    let c = n - f - m;
    // The −x and ½ln(2π) parts cancel across the four terms.
    let xlnx = |x: u64| {
        let x = x as f64;
        x * x.ln()
    };
    let half_ln = |x: u64| 0.5 * (x as f64).ln();
    let ln_base = (xlnx(a) + xlnx(b) - xlnx(c) - xlnx(n)) + (half_ln(a) + half_ln(b) - half_ln(c) - half_ln(n));

    let (a_lo, a_hi) = robbins_bounds(a);
    let (b_lo, b_hi) = robbins_bounds(b);
    let (c_lo, c_hi) = robbins_bounds(c);
    let (n_lo, n_hi) = robbins_bounds(n);
    let e_lower = a_lo + b_lo - c_hi - n_hi;
    let e_upper = a_hi + b_hi - c_lo - n_lo;
    let e_hat = correction_estimate(a) + correction_estimate(b) - correction_estimate(c) - correction_estimate(n);

    let base = ln_base.exp();
    Ok(StirlingRatio {
        base,
        approx: (ln_base + e_hat.clamp(e_lower, e_upper)).exp(),
        lower: (ln_base + e_lower).exp(),
        upper: (ln_base + e_upper).exp(),
    })
}
