//! Maximum-weighted-entropy re-estimation of ill-calibrated counts.
//!
//! Given the normalized ill counts `ν^(i)_k` and an exponent `t`, the weights
//! are `w_k = (ν^(i)_k)^t` on the positive support. The maximizer of
//! `H(ν') = -Σ w_k ν'_k log ν'_k` subject to `Σ ν'_k = 1` satisfies
//! `w_k (log ν'_k + 1) + λ = 0`, i.e. `ν'_k = exp(-1 - λ / w_k)`, where the
//! multiplier `λ` is the unique root of the strictly decreasing function
//! `g(λ) = Σ_k exp(-1 - λ / w_k) - 1`.

use crate::error::{Error, Result};
use crate::sampler::Counts;

const SUM_TOL: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-12;
const NEWTON_STEPS: usize = 5;
const BRACKET_LIMIT_FACTOR: f64 = 1e6;

/// Normalized ill counts `ν^(i)_k = n^(i)_k / N_ill`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::OutOfRange("weights must be finite and non-negative".into()));
        }
        let s: f64 = weights.iter().sum();
        if !((s - 1.0).abs() <= SUM_TOL) {
            return Err(Error::OutOfRange(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self { weights })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::OutOfRange("all counts are zero".into()));
        }
        let weights = counts.iter().map(|&n| n as f64 / total as f64).collect();
        Ok(Self { weights })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// `M_{>0}`.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// `w_k^t` on the positive support, zero elsewhere.
    pub fn exponentiated(&self, t: f64) -> Vec<f64> {
        self.weights
            .iter()
            .map(|&w| if w > 0.0 { w.powf(t) } else { 0.0 })
            .collect()
    }
}

/// `-Σ_{w_k > 0} w_k ν'_k log ν'_k` with `0 log 0 = 0`.
pub fn weighted_entropy(weights: &WeightVector, nu_prime: &[f64]) -> Result<f64> {
    entropy_with_weights(weights.as_slice(), nu_prime)
}

pub(crate) fn entropy_with_weights(weights: &[f64], nu_prime: &[f64]) -> Result<f64> {
    if weights.len() != nu_prime.len() {
        return Err(Error::DimensionMismatch(weights.len(), nu_prime.len()));
    }
    let mut h = 0.0;
    for (&w, &v) in weights.iter().zip(nu_prime) {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange(format!("frequency {v} not in [0, 1]")));
        }
        if w == 0.0 {
            if v > 0.0 {
                return Err(Error::OutOfRange(
                    "frequency support exceeds the positive-weight support".into(),
                ));
            }
            continue;
        }
        if v > 0.0 {
            h -= w * v * v.ln();
        }
    }
    Ok(h)
}

/// Coarse-grained frequencies and their multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct MweSolution {
    /// `ν^MWE_k`, zero exactly where the input count was zero.
    pub nu: Vec<f64>,
    pub lambda: f64,
    /// `N_ill · ν^MWE_k`.
    pub n_mwe: Vec<f64>,
    /// Exponent applied to the weights.
    pub t: f64,
    /// Effective weights `w_k^t`, zero off the support.
    pub weights: Vec<f64>,
}

impl MweSolution {
    /// `max_k |w_k (log ν_k + 1) + λ|` over the positive support.
    ///
    /// Entries whose analytic value `exp(-1 - λ/w_k)` underflows the normal
    /// range are stored at `f64::MIN_POSITIVE` and skipped here.
    pub fn stationarity_residual(&self) -> f64 {
        let floor = f64::MIN_POSITIVE.ln();
        self.weights
            .iter()
            .zip(&self.nu)
            .filter(|(&w, _)| w > 0.0)
            .filter(|(&w, _)| -1.0 - self.lambda / w > floor)
            .map(|(&w, &v)| (w * (v.ln() + 1.0) + self.lambda).abs())
            .fold(0.0, f64::max)
    }
}

fn lagrange_residual(weights: &[f64], lambda: f64) -> f64 {
    weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| (-1.0 - lambda / w).exp())
        .sum::<f64>()
        - 1.0
}

fn lagrange_slope(weights: &[f64], lambda: f64) -> f64 {
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| (-1.0 - lambda / w).exp() / w)
        .sum::<f64>()
}

/// Root of `g(λ)` by bracketed bisection with Newton polishing.
fn solve_multiplier(weights: &[f64]) -> Result<f64> {
    let g = |l: f64| lagrange_residual(weights, l);
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let limit = BRACKET_LIMIT_FACTOR * wmax.max(1.0);

    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if g0 > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    if g0 > 0.0 {
        while g(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > limit {
                return Err(Error::Numerical("multiplier bracket expansion failed".into()));
            }
        }
    } else {
        while g(lo) < 0.0 {
            hi = lo;
            lo *= 2.0;
            if -lo > limit {
                return Err(Error::Numerical("multiplier bracket expansion failed".into()));
            }
        }
    }

    let mut mid = 0.5 * (lo + hi);
    loop {
        let gm = g(mid);
        if gm.abs() < ROOT_TOL {
            break;
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            break;
        }
        mid = next;
    }

    for _ in 0..NEWTON_STEPS {
        let gm = g(mid);
        let slope = lagrange_slope(weights, mid);
        if gm == 0.0 || !(slope < 0.0) {
            break;
        }
        let cand = mid - gm / slope;
        if cand.is_finite() && cand >= lo && cand <= hi && g(cand).abs() <= gm.abs() {
            mid = cand;
        } else {
            break;
        }
    }
    Ok(mid)
}

/// Maximizes the weighted entropy for arbitrary effective weights
/// (`w_k ≥ 0`, at least one positive). Returns `(ν, λ)`.
pub fn maximize_weighted_entropy(weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::OutOfRange("weights must be finite and non-negative".into()));
    }
    let support: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] > 0.0).collect();
    match support.len() {
        0 => Err(Error::OutOfRange("no positive weight".into())),
        1 => {
            let mut nu = vec![0.0; weights.len()];
            nu[support[0]] = 1.0;
            Ok((nu, -weights[support[0]]))
        }
        _ => {
            let lambda = solve_multiplier(weights)?;
            let mut nu: Vec<f64> = weights
                .iter()
                .map(|&w| {
                    if w > 0.0 {
                        (-1.0 - lambda / w).exp().max(f64::MIN_POSITIVE)
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = nu.iter().sum();
            nu.iter_mut().for_each(|x| *x /= s);
            Ok((nu, lambda))
        }
    }
}

/// MWE frequencies for the ill counts with weight exponent `t` (default 1).
pub fn mwe_frequencies(ill_counts: &[u64], t: f64) -> Result<MweSolution> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::OutOfRange(format!("weight exponent {t} must be finite and >= 0")));
    }
    let nu_ill = WeightVector::from_counts(ill_counts)?;
    let weights = nu_ill.exponentiated(t);
    let (nu, lambda) = maximize_weighted_entropy(&weights)?;
    let n_ill: u64 = ill_counts.iter().sum();
    let n_mwe = nu.iter().map(|&v| v * n_ill as f64).collect();
    Ok(MweSolution {
        nu,
        lambda,
        n_mwe,
        t,
        weights,
    })
}

/// Real-valued detection record `{n^(w)_j; n^MWE_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseCounts {
    pub well: Vec<f64>,
    pub ill: Vec<f64>,
}

impl CoarseCounts {
    pub fn total(&self) -> f64 {
        self.well.iter().chain(&self.ill).sum()
    }

    pub fn all(&self) -> Vec<f64> {
        self.well.iter().chain(&self.ill).copied().collect()
    }
}

impl From<&Counts> for CoarseCounts {
    fn from(c: &Counts) -> Self {
        Self {
            well: c.well.iter().map(|&n| n as f64).collect(),
            ill: c.ill.iter().map(|&n| n as f64).collect(),
        }
    }
}

/// Replaces the ill counts by their MWE re-estimates; well counts pass through.
pub fn mwe_counts(counts: &Counts, t: f64) -> Result<CoarseCounts> {
    let well = counts.well.iter().map(|&n| n as f64).collect();
    if counts.n_ill() == 0 {
        return Ok(CoarseCounts {
            well,
            ill: vec![0.0; counts.ill.len()],
        });
    }
    let sol = mwe_frequencies(&counts.ill, t)?;
    Ok(CoarseCounts {
        well,
        ill: sol.n_mwe,
    })
}
