//! Simulated detection records.

use rand::Rng;

use crate::error::{Error, Result};
use crate::qops::{check_dims, DensityMatrix};
use crate::randgen::{MeasurementSetup, SeedSpec};

const NEGATIVE_PROB_TOL: f64 = 1e-12;

/// Integer detection record `{n^(w)_j; n^(i)_k}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub well: Vec<u64>,
    pub ill: Vec<u64>,
}

impl Counts {
    pub fn new(well: Vec<u64>, ill: Vec<u64>) -> Result<Self> {
        let c = Self { well, ill };
        if c.total() == 0 {
            return Err(Error::OutOfRange("counts must contain at least one detection".into()));
        }
        Ok(c)
    }

    /// `N`.
    pub fn total(&self) -> u64 {
        self.well.iter().sum::<u64>() + self.n_ill()
    }

    /// `N_ill`.
    pub fn n_ill(&self) -> u64 {
        self.ill.iter().sum()
    }

    /// Well counts followed by ill counts.
    pub fn all(&self) -> Vec<u64> {
        self.well.iter().chain(&self.ill).copied().collect()
    }
}

/// Draws `n` categorical samples by inverting the cumulative sum with one
/// uniform per draw. `probs` must be normalized.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    let mut tallies = vec![0u64; probs.len()];
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let idx = cdf.partition_point(|&c| c <= u).min(last_positive);
        tallies[idx] += 1;
    }
    tallies
}

/// Outcome probabilities of the actual outcomes, negative rounding clamped.
pub(crate) fn click_probabilities(rho: &DensityMatrix, setup: &MeasurementSetup) -> Result<Vec<f64>> {
    check_dims(rho.dim(), setup.dim)?;
    setup
        .well
        .iter()
        .chain(&setup.actual_ill)
        .map(|p| {
            let x = rho.op().trace_product(p.op());
            if x < -NEGATIVE_PROB_TOL {
                Err(Error::InvalidSetup(format!("negative outcome probability {x:e}")))
            } else {
                Ok(x.max(0.0))
            }
        })
        .collect()
}

pub fn simulate_counts_with<R: Rng + ?Sized>(
    rho_true: &DensityMatrix,
    setup: &MeasurementSetup,
    n: u64,
    rng: &mut R,
) -> Result<Counts> {
    if n == 0 {
        return Err(Error::OutOfRange("number of copies must be at least 1".into()));
    }
    let mut p = click_probabilities(rho_true, setup)?;
    let eta: f64 = p.iter().sum();
    if !(eta > 0.0) {
        return Err(Error::InvalidSetup(format!("total click probability {eta} is not positive")));
    }
    p.iter_mut().for_each(|x| *x /= eta);
    let mut tallies = sample_categorical(&p, n, rng);
    let ill = tallies.split_off(setup.m_well);
    Ok(Counts { well: tallies, ill })
}

/// `N` detections conditioned on a click, drawn from `p_l / η` over the well
/// and actual ill-calibrated outcomes.
pub fn simulate_counts(
    rho_true: &DensityMatrix,
    setup: &MeasurementSetup,
    n: u64,
    seed: &SeedSpec,
) -> Result<Counts> {
    simulate_counts_with(rho_true, setup, n, &mut seed.rng())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{HermitianOperator, PovmElement};
    use crate::randgen::{haar_pure_state, perturb_pom, random_rank1_pom};

    fn setup(mu: f64) -> MeasurementSetup {
        let clean = random_rank1_pom(4, 16, &SeedSpec::from_master(21)).unwrap();
        perturb_pom(&clean, 4, mu, &SeedSpec::from_master(22)).unwrap()
    }

    #[test]
    fn totals_are_conserved() {
        let s = setup(0.3);
        let rho = haar_pure_state(4, &SeedSpec::from_master(1)).unwrap();
        let c = simulate_counts(&rho, &s, 8000, &SeedSpec::from_master(2)).unwrap();
        assert_eq!(c.total(), 8000);
        assert_eq!(c.well.len(), 4);
        assert_eq!(c.ill.len(), 12);
        assert_eq!(c.n_ill(), c.ill.iter().sum::<u64>());
    }

    #[test]
    fn fixed_seed_fixed_counts() {
        let s = setup(0.1);
        let rho = haar_pure_state(4, &SeedSpec::from_master(1)).unwrap();
        let a = simulate_counts(&rho, &s, 500, &SeedSpec::from_master(9)).unwrap();
        let b = simulate_counts(&rho, &s, 500, &SeedSpec::from_master(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_distribution_puts_everything_on_one_outcome() {
        let p0 = PovmElement::new(HermitianOperator::from_diagonal(&[1.0, 0.0])).unwrap();
        let p1 = PovmElement::new(HermitianOperator::from_diagonal(&[0.0, 1.0])).unwrap();
        let s = MeasurementSetup {
            dim: 2,
            m_total: 2,
            m_well: 0,
            well: vec![],
            intended: vec![p0.clone(), p1.clone()],
            actual_ill: vec![p0, p1],
            scale: 1.0,
            mu: 0.0,
        };
        let rho = DensityMatrix::new(HermitianOperator::from_diagonal(&[1.0, 0.0])).unwrap();
        let c = simulate_counts(&rho, &s, 1000, &SeedSpec::from_master(3)).unwrap();
        assert_eq!(c.ill, vec![1000, 0]);
    }

    #[test]
    fn rejects_zero_copies_and_dim_mismatch() {
        let s = setup(0.1);
        let rho = haar_pure_state(4, &SeedSpec::from_master(1)).unwrap();
        assert!(simulate_counts(&rho, &s, 0, &SeedSpec::from_master(3)).is_err());
        let small = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            simulate_counts(&small, &s, 10, &SeedSpec::from_master(3)),
            Err(Error::DimensionMismatch(2, 4))
        ));
    }

    #[test]
    fn categorical_never_picks_zero_probability_tail() {
        let mut rng = SeedSpec::from_master(4).rng();
        let t = sample_categorical(&[0.5, 0.5, 0.0], 10_000, &mut rng);
        assert_eq!(t[2], 0);
        assert_eq!(t.iter().sum::<u64>(), 10_000);
    }
}
