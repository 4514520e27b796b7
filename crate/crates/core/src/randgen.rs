//! Seeded random ensembles and the noisy-outcome construction.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::qops::{
    eigh, sum_operators, CMatrix, CVector, DensityMatrix, HermitianOperator, PovmElement, C64,
    INPUT_TOL,
};

/// Purpose tags separating independent random streams of one task.
pub mod purpose {
    pub const POM: u64 = 1;
    pub const TRUE_STATE: u64 = 2;
    pub const NOISE: u64 = 3;
    /// Counts streams are `COUNTS + (admixture index << 8)`.
    pub const COUNTS: u64 = 4;
    pub const GENERIC: u64 = 5;
}

/// Master seed plus stream indices `(state, mu, experiment, purpose)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub state: u64,
    pub mu: u64,
    pub experiment: u64,
    pub purpose: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, state: u64, mu: u64, experiment: u64, purpose: u64) -> Self {
        Self {
            master_seed,
            state,
            mu,
            experiment,
            purpose,
        }
    }

    /// Stream `(0, 0, 0, GENERIC)` of `master_seed`.
    pub fn from_master(master_seed: u64) -> Self {
        Self::new(master_seed, 0, 0, 0, purpose::GENERIC)
    }

    /// Folds master seed and indices into one generator seed.
    pub fn derive(&self) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for idx in [self.state, self.mu, self.experiment, self.purpose] {
            h = splitmix64(h ^ splitmix64(idx.wrapping_add(0x632b_e59b_d9b4_e019)));
        }
        h
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::UnsupportedDimension(dim, "random ensembles need D >= 2"));
    }
    Ok(())
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im)
}

/// Normalized vector of i.i.d. standard complex Gaussians (Haar distributed).
pub fn haar_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
        let n = v.norm();
        if n > 0.0 {
            return v.unscale(n);
        }
    }
}

pub fn ginibre<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    DMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng))
}

pub fn haar_pure_state_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    check_dim(dim)?;
    DensityMatrix::pure(&haar_vector(dim, rng))
}

/// Haar-random pure state `|ψ⟩⟨ψ|`.
pub fn haar_pure_state(dim: usize, seed: &SeedSpec) -> Result<DensityMatrix> {
    haar_pure_state_with(dim, &mut seed.rng())
}

pub fn hs_random_state_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DensityMatrix> {
    check_dim(dim)?;
    let g = ginibre(dim, rng);
    let gg = HermitianOperator::symmetrized(&g * g.adjoint());
    let tr = gg.trace();
    DensityMatrix::new(gg.scale(1.0 / tr))
}

/// Hilbert–Schmidt random mixed state `G G† / tr(G G†)` with square Ginibre `G`.
pub fn hs_random_state(dim: usize, seed: &SeedSpec) -> Result<DensityMatrix> {
    hs_random_state_with(dim, &mut seed.rng())
}

const MAX_POM_REDRAWS: usize = 100;
const MAX_POM_CONDITION: f64 = 1e12;
const GRAM_RANK_THRESHOLD: f64 = 1e-8;

/// Rank of the `M × D²` matrix of vectorized operators; singular values below
/// `1e-8 · s_max` are treated as zero.
pub fn operator_span_rank(ops: &[&HermitianOperator]) -> usize {
    if ops.is_empty() {
        return 0;
    }
    let d = ops[0].dim();
    let mut stacked = CMatrix::zeros(ops.len(), d * d);
    for (row, op) in ops.iter().enumerate() {
        for (col, z) in op.matrix().iter().enumerate() {
            stacked[(row, col)] = *z;
        }
    }
    let sv = stacked.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > GRAM_RANK_THRESHOLD * smax).count()
}

pub fn random_rank1_pom_with<R: Rng + ?Sized>(
    dim: usize,
    m: usize,
    rng: &mut R,
) -> Result<Vec<PovmElement>> {
    check_dim(dim)?;
    if m < dim * dim {
        return Err(Error::OutOfRange(format!(
            "rank-one POM needs M >= D^2 = {} outcomes, got {m}",
            dim * dim
        )));
    }
    for _ in 0..MAX_POM_REDRAWS {
        let vectors: Vec<CVector> = (0..m).map(|_| haar_vector(dim, rng)).collect();
        let projectors: Vec<HermitianOperator> =
            vectors.iter().map(HermitianOperator::outer).collect();
        let frame = sum_operators(&projectors, dim)?;
        let spec = eigh(&frame);
        if !(spec.min() > 0.0) || spec.max() / spec.min() > MAX_POM_CONDITION {
            continue;
        }
        let inv_sqrt = spec.rebuild(|x| 1.0 / x.sqrt());
        let elems: Vec<HermitianOperator> = vectors
            .iter()
            .map(|v| HermitianOperator::outer(&(inv_sqrt.matrix() * v)))
            .collect();
        let refs: Vec<&HermitianOperator> = elems.iter().collect();
        if operator_span_rank(&refs) < dim * dim {
            continue;
        }
        return elems.into_iter().map(PovmElement::new).collect();
    }
    Err(Error::Numerical(format!(
        "no well-conditioned informationally complete POM after {MAX_POM_REDRAWS} draws"
    )))
}

/// `M` rank-one outcomes `S^{-1/2}|φ_l⟩⟨φ_l|S^{-1/2}` summing to the identity,
/// from Haar-random `|φ_l⟩` with frame operator `S = Σ|φ_l⟩⟨φ_l|`.
pub fn random_rank1_pom(dim: usize, m: usize, seed: &SeedSpec) -> Result<Vec<PovmElement>> {
    random_rank1_pom_with(dim, m, &mut seed.rng())
}

/// Well-calibrated, intended and actual ill-calibrated outcomes of one experiment.
#[derive(Debug, Clone)]
pub struct MeasurementSetup {
    pub dim: usize,
    pub m_total: usize,
    pub m_well: usize,
    pub well: Vec<PovmElement>,
    pub intended: Vec<PovmElement>,
    pub actual_ill: Vec<PovmElement>,
    /// Uniform rescaling `𝒩` applied to every outcome.
    pub scale: f64,
    pub mu: f64,
}

impl MeasurementSetup {
    pub fn m_ill(&self) -> usize {
        self.m_total - self.m_well
    }

    /// Well outcomes followed by the intended outcomes.
    pub fn nominal_outcomes(&self) -> Vec<PovmElement> {
        self.well.iter().chain(&self.intended).cloned().collect()
    }

    /// Well outcomes followed by the outcomes actually measured.
    pub fn actual_outcomes(&self) -> Vec<PovmElement> {
        self.well.iter().chain(&self.actual_ill).cloned().collect()
    }

    /// Checks the structural invariants.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.well.len() != self.m_well
            || self.intended.len() != self.m_ill()
            || self.actual_ill.len() != self.m_ill()
        {
            return Err(Error::InvalidSetup("outcome counts disagree with M, M1".into()));
        }
        for (name, set) in [
            ("actual", self.actual_outcomes()),
            ("nominal", self.nominal_outcomes()),
        ] {
            let total = sum_operators(set.iter().map(PovmElement::op), self.dim)?;
            let top = eigh(&total).max();
            if top > 1.0 + tol {
                return Err(Error::InvalidSetup(format!(
                    "{name} outcomes sum to an operator with eigenvalue {top} > 1"
                )));
            }
        }
        Ok(())
    }
}

pub fn perturb_pom_with<R: Rng + ?Sized>(
    clean: &[PovmElement],
    m_well: usize,
    mu: f64,
    rng: &mut R,
) -> Result<MeasurementSetup> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::OutOfRange(format!("noise level mu {mu} not in [0, 1]")));
    }
    if clean.is_empty() {
        return Err(Error::InvalidSetup("empty POM".into()));
    }
    if m_well > clean.len() {
        return Err(Error::OutOfRange(format!(
            "M1 = {m_well} exceeds M = {}",
            clean.len()
        )));
    }
    let dim = clean[0].dim();
    let total = sum_operators(clean.iter().map(PovmElement::op), dim)?;
    let dev = total.max_abs_diff(&HermitianOperator::identity(dim));
    if dev > INPUT_TOL {
        return Err(Error::InvalidSetup(format!(
            "clean POM does not sum to identity (deviation {dev:e})"
        )));
    }

    let perturbed: Vec<HermitianOperator> = clean[m_well..]
        .iter()
        .map(|p| {
            let noise = hs_random_state_with(dim, rng)?;
            p.op().scale(1.0 - mu).add(&noise.op().scale(mu))
        })
        .collect::<Result<_>>()?;

    let well_sum = sum_operators(clean[..m_well].iter().map(PovmElement::op), dim)?;
    let ill_sum = sum_operators(&perturbed, dim)?;
    let top = eigh(&well_sum.add(&ill_sum)?).max();
    let scale = if mu == 0.0 { 1.0 } else { 1.0 / top };

    let rescale = |op: &HermitianOperator| PovmElement::new(op.scale(scale));
    Ok(MeasurementSetup {
        dim,
        m_total: clean.len(),
        m_well,
        well: clean[..m_well].iter().map(|p| rescale(p.op())).collect::<Result<_>>()?,
        intended: clean[m_well..].iter().map(|p| rescale(p.op())).collect::<Result<_>>()?,
        actual_ill: perturbed.iter().map(rescale).collect::<Result<_>>()?,
        scale,
        mu,
    })
}

/// Builds `Π^(i)_k = 𝒩[(1 − μ)Π̃_{k+M₁} + μ ρ^noise_k]` with a fresh
/// Hilbert–Schmidt `ρ^noise_k` per ill outcome, `𝒩` the reciprocal of the top
/// eigenvalue of the perturbed sum.
pub fn perturb_pom(
    clean: &[PovmElement],
    m_well: usize,
    mu: f64,
    seed: &SeedSpec,
) -> Result<MeasurementSetup> {
    perturb_pom_with(clean, m_well, mu, &mut seed.rng())
}
