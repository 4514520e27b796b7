//! Maximum-likelihood reconstruction for η-normalized likelihoods.
//!
//! For outcomes with `G = Σ_l Π_l ≤ 1` the likelihood `Π_l (p_l/η)^{n_l}` in ρ
//! equals the plain likelihood `Π_l q_l^{n_l}` of `σ ∝ G^{1/2} ρ G^{1/2}` under
//! the completed outcomes `Π'_l = G^{-1/2} Π_l G^{-1/2}`, with `q_l = p_l/η`.
//! The iteration runs on σ with `R(σ) = Σ_l (n_l/N) Π'_l / q_l`, taking the full
//! step `R σ R` when it increases the likelihood and otherwise the diluted step
//! `(I + εR̄) σ (I + εR̄)` with `R̄ = R - I` and ε halved until ascent.
//!
//! Two accelerating candidates compete with every undiluted step: an
//! Anderson-mixed extrapolation of recent iterates and a Newton step over
//! trace-preserving Hermitian moves. Both are pulled back toward the plain
//! step until positive definite and replace it only when their gain is larger,
//! so every accepted iterate still increases the likelihood. Iterates stuck on
//! a face of the state space with `λ_max(R) > 1` are released along the top
//! eigenvector of `R` before convergence is declared.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mwe::{mwe_counts, CoarseCounts};
use crate::qops::{
    check_dims, eigh, sum_operators, trace_product, CMatrix, DensityMatrix,
    HermitianOperator, PovmElement, C64,
};
use crate::randgen::{operator_span_rank, MeasurementSetup};
use crate::sampler::Counts;

const PROB_FLOOR: f64 = 1e-300;
const MAX_OUTCOME_SUM_CONDITION: f64 = 1e12;
const MAX_DILUTIONS: usize = 60;
const MAX_MIXING_BACKTRACKS: usize = 10;
/// Mixed iterates may shrink the smallest eigenvalue of the plain step by at
/// most this factor; the multiplicative update cannot regrow a zero eigenvalue.
const MIN_EIGEN_SHRINK: f64 = 0.1;
/// Relative size below which a shrinking eigen-direction may be dropped.
const FACE_THRESHOLD: f64 = 1e-3;
/// Relative curvature below which a factor direction counts as flat.
const FACTOR_CURVATURE_CUTOFF: f64 = 1e-10;
/// Largest eigenvalue of `R` tolerated at a stationary point.
const KKT_TOL: f64 = 1e-6;

/// Outcomes with their (possibly non-integer) counts.
#[derive(Debug, Clone)]
pub struct LikelihoodSpec {
    outcomes: Vec<PovmElement>,
    counts: Vec<f64>,
}

impl LikelihoodSpec {
    pub fn new(outcomes: Vec<PovmElement>, counts: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidSetup("no outcomes".into()));
        }
        if outcomes.len() != counts.len() {
            return Err(Error::DimensionMismatch(outcomes.len(), counts.len()));
        }
        let dim = outcomes[0].dim();
        for o in &outcomes {
            check_dims(dim, o.dim())?;
        }
        if counts.iter().any(|&n| !(n >= 0.0) || !n.is_finite()) {
            return Err(Error::OutOfRange("counts must be finite and non-negative".into()));
        }
        if !(counts.iter().sum::<f64>() > 0.0) {
            return Err(Error::OutOfRange("counts must not all be zero".into()));
        }
        Ok(Self { outcomes, counts })
    }

    pub fn from_integer_counts(outcomes: Vec<PovmElement>, counts: &[u64]) -> Result<Self> {
        Self::new(outcomes, counts.iter().map(|&n| n as f64).collect())
    }

    pub fn outcomes(&self) -> &[PovmElement] {
        &self.outcomes
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn dim(&self) -> usize {
        self.outcomes[0].dim()
    }

    /// `N = Σ n_l`.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    /// Bound on the trace norm of `R σ - σ` at exit.
    pub tol: f64,
    pub max_iters: usize,
    /// Bound on the log-likelihood gain of the last accepted step at exit.
    pub gain_tol: f64,
    /// Keep the log-likelihood of every accepted iterate.
    pub record_trace: bool,
    /// History length of the Anderson-mixed candidate; 0 disables it.
    pub anderson_depth: usize,
    /// Also try a Newton step in the affine trace-one coordinates.
    pub newton: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
            gain_tol: 1e-10,
            record_trace: false,
            anderson_depth: 8,
            newton: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub rho_hat: DensityMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Fixed-point defect `‖R σ - σ‖_tr` at exit.
    pub residual: f64,
    pub converged: bool,
    /// Set when the outcomes do not span the operator space.
    pub possibly_non_unique: bool,
    /// Log-likelihood of the start point and of every accepted step, when requested.
    pub trace: Vec<f64>,
}

/// `p_l = tr(ρ Π_l)` clamped at zero, and `η = Σ p_l`.
pub fn probabilities(rho: &DensityMatrix, outcomes: &[PovmElement]) -> Result<(Vec<f64>, f64)> {
    let mut p = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        check_dims(rho.dim(), o.dim())?;
        p.push(rho.op().trace_product(o.op()).max(0.0));
    }
    let eta = p.iter().sum();
    Ok((p, eta))
}

/// `Σ_l n_l log(p_l / η)`; `-∞` when a detected outcome has zero probability.
pub fn log_likelihood(spec: &LikelihoodSpec, rho: &DensityMatrix) -> Result<f64> {
    let (p, eta) = probabilities(rho, &spec.outcomes)?;
    if !(eta > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut ll = 0.0;
    for (&n, &pl) in spec.counts.iter().zip(&p) {
        if n == 0.0 {
            continue;
        }
        if pl <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += n * (pl / eta).ln();
    }
    Ok(ll)
}

/// The problem mapped to completed outcomes.
struct Reduced {
    g_inv_sqrt: CMatrix,
    completed: Vec<CMatrix>,
    counts: Vec<f64>,
    freqs: Vec<f64>,
    total: f64,
}

impl Reduced {
    fn new(spec: &LikelihoodSpec) -> Result<Self> {
        let dim = spec.dim();
        let g = sum_operators(spec.outcomes.iter().map(PovmElement::op), dim)?;
        let spec_g = eigh(&g);
        let cond = if spec_g.min() > 0.0 {
            spec_g.max() / spec_g.min()
        } else {
            f64::INFINITY
        };
        if !(cond < MAX_OUTCOME_SUM_CONDITION) {
            return Err(Error::SingularOutcomeSum(cond));
        }
        let g_inv_sqrt = spec_g.rebuild(|x| 1.0 / x.sqrt()).into_matrix();
        let completed = spec
            .outcomes
            .iter()
            .map(|o| hermitize(&g_inv_sqrt * o.matrix() * &g_inv_sqrt))
            .collect();
        let total = spec.total();
        Ok(Self {
            g_inv_sqrt,
            completed,
            counts: spec.counts.clone(),
            freqs: spec.counts.iter().map(|&n| n / total).collect(),
            total,
        })
    }

    fn probs(&self, sigma: &CMatrix) -> Vec<f64> {
        self.completed
            .iter()
            .map(|p| trace_product(sigma, p).max(PROB_FLOOR))
            .collect()
    }

    /// `Σ n_l log(q_l / Σ q)`, invariant under rescaling σ.
    fn loglik(&self, q: &[f64]) -> f64 {
        let total: f64 = q.iter().sum();
        self.counts
            .iter()
            .zip(q)
            .filter(|(&n, _)| n > 0.0)
            .map(|(&n, &x)| n * (x / total).ln())
            .sum()
    }

    /// Probabilities at `cand` and the log-likelihood change from `sigma`.
    ///
    /// The change is accumulated from `δq_l = tr((cand - σ) Π'_l)` as
    /// `Σ n_l ln(1 + δq_l/q_l) - N ln(1 + Σδq/Σq)`, which resolves gains far
    /// below the rounding level of the log-likelihood itself.
    fn step_gain(&self, sigma: &CMatrix, q: &[f64], cand: &CMatrix) -> (Vec<f64>, f64) {
        let delta = cand - sigma;
        let q_c = self.probs(cand);
        let mut gain = 0.0;
        let mut dq_total = 0.0;
        for ((p, &n), &ql) in self.completed.iter().zip(&self.counts).zip(q) {
            let dq = trace_product(&delta, p);
            dq_total += dq;
            if n > 0.0 {
                let rel = dq / ql;
                if rel <= -1.0 {
                    return (q_c, f64::NEG_INFINITY);
                }
                gain += n * rel.ln_1p();
            }
        }
        let q_total: f64 = q.iter().sum();
        gain -= self.total * (dq_total / q_total).ln_1p();
        (q_c, gain)
    }

    fn r_operator(&self, q: &[f64]) -> CMatrix {
        let d = self.g_inv_sqrt.nrows();
        let mut r = CMatrix::zeros(d, d);
        for ((p, &f), &x) in self.completed.iter().zip(&self.freqs).zip(q) {
            if f > 0.0 {
                r += p.scale(f / x);
            }
        }
        hermitize(r)
    }
}

fn hermitize(m: CMatrix) -> CMatrix {
    let adj = m.adjoint();
    (m + adj).scale(0.5)
}

fn normalized_sandwich(a: &CMatrix, sigma: &CMatrix) -> CMatrix {
    let m = hermitize(a * sigma * a);
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    m.unscale(tr)
}

fn trace_norm(m: &CMatrix) -> f64 {
    m.singular_values().iter().sum()
}

fn residual(r: &CMatrix, sigma: &CMatrix) -> f64 {
    trace_norm(&(r * sigma - sigma))
}

/// Real coordinates of a Hermitian matrix: diagonal, then Re/Im of the
/// strict upper triangle.
fn hermitian_coords(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut v = DVector::zeros(d * d);
    let mut k = 0;
    for i in 0..d {
        v[k] = m[(i, i)].re;
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            v[k] = m[(i, j)].re;
            v[k + 1] = m[(i, j)].im;
            k += 2;
        }
    }
    v
}

fn from_hermitian_coords(v: &DVector<f64>, d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        m[(i, i)] = C64::new(v[k], 0.0);
        k += 1;
    }
    for i in 0..d {
        for j in i + 1..d {
            let z = C64::new(v[k], v[k + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            k += 2;
        }
    }
    m
}

/// Anderson mixing over the fixed-point map `σ ↦ step(σ)`.
struct Anderson {
    depth: usize,
    prev: Option<(DVector<f64>, DVector<f64>)>,
    dx: VecDeque<DVector<f64>>,
    df: VecDeque<DVector<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            dx: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.dx.clear();
        self.df.clear();
    }

    /// Records `x` with defect `f = step(x) - x` and returns the mixed iterate.
    fn propose(&mut self, x: DVector<f64>, f: DVector<f64>) -> Option<DVector<f64>> {
        if self.depth == 0 {
            return None;
        }
        if let Some((px, pf)) = self.prev.take() {
            self.dx.push_back(&x - px);
            self.df.push_back(&f - pf);
            if self.dx.len() > self.depth {
                self.dx.pop_front();
                self.df.pop_front();
            }
        }
        self.prev = Some((x.clone(), f.clone()));
        if self.dx.is_empty() {
            return None;
        }
        let m = self.dx.len();
        let df = DMatrix::from_columns(self.df.make_contiguous());
        let dx = DMatrix::from_columns(self.dx.make_contiguous());
        let gamma = df.clone().svd(true, true).solve(&f, 1e-14).ok()?;
        debug_assert_eq!(gamma.len(), m);
        let mixed = x + &f - (dx + df) * gamma;
        mixed.iter().all(|v| v.is_finite()).then_some(mixed)
    }
}

/// Traceless Hermitian basis: `E_ii - E_DD`, `E_ij + E_ji`, `i(E_ij - E_ji)`.
fn traceless_basis(d: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(d * d - 1);
    for i in 0..d - 1 {
        let mut m = CMatrix::zeros(d, d);
        m[(i, i)] = C64::new(1.0, 0.0);
        m[(d - 1, d - 1)] = C64::new(-1.0, 0.0);
        basis.push(m);
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut re = CMatrix::zeros(d, d);
            re[(i, j)] = C64::new(1.0, 0.0);
            re[(j, i)] = C64::new(1.0, 0.0);
            basis.push(re);
            let mut im = CMatrix::zeros(d, d);
            im[(i, j)] = C64::new(0.0, 1.0);
            im[(j, i)] = C64::new(0.0, -1.0);
            basis.push(im);
        }
    }
    basis
}

/// Second-order model of the log-likelihood over trace-preserving moves.
struct NewtonModel {
    basis: Vec<CMatrix>,
    /// `coords[(l, a)] = tr(E_a Π'_l)`.
    coords: DMatrix<f64>,
}

impl NewtonModel {
    fn new(red: &Reduced, dim: usize) -> Self {
        let basis = traceless_basis(dim);
        let coords = DMatrix::from_fn(red.completed.len(), basis.len(), |l, a| {
            trace_product(&basis[a], &red.completed[l])
        });
        Self { basis, coords }
    }

    /// `σ + δ` with `δ` the Newton step of `Σ n_l ln q_l`.
    fn target(&self, red: &Reduced, sigma: &CMatrix, q: &[f64]) -> Option<CMatrix> {
        newton_move(red, &self.basis, &self.coords, q).map(|d| sigma + d)
    }
}

/// Newton move of `Σ n_l ln(q_l/Σq)` in the span of `basis`, where
/// `coords[(l, a)] = tr(basis[a] Π'_l)`.
fn newton_move(red: &Reduced, basis: &[CMatrix], coords: &DMatrix<f64>, q: &[f64]) -> Option<CMatrix> {
    let k = basis.len();
    let mut grad = DVector::<f64>::zeros(k);
    let mut hess = DMatrix::<f64>::zeros(k, k);
    // Gradient of the η-normalized form. The subtracted mean keeps the
    // coefficients small near the optimum, so rounding does not swamp weakly
    // determined directions.
    let mean = red.total / q.iter().sum::<f64>();
    for (l, (&n, &ql)) in red.counts.iter().zip(q).enumerate() {
        let row = coords.row(l).transpose();
        grad.axpy(n / ql - mean, &row, 1.0);
        if n > 0.0 {
            hess.ger(n / (ql * ql), &row, &row, 1.0);
        }
    }
    let step = hess.cholesky()?.solve(&grad);
    if !step.iter().all(|x| x.is_finite()) {
        return None;
    }
    let d = red.g_inv_sqrt.nrows();
    let mut delta = CMatrix::zeros(d, d);
    for (e, &x) in basis.iter().zip(step.iter()) {
        delta += e.scale(x);
    }
    Some(delta)
}

/// Best candidate found so far in one iteration.
type Candidate = (CMatrix, Vec<f64>, f64);

/// Walks from `target` back toward `base` until the smallest eigenvalue stays
/// above `floor`, then evaluates the gain. With `support`, only the compression
/// onto its columns is checked.
fn backtracked(
    red: &Reduced,
    sigma: &CMatrix,
    q: &[f64],
    base: &CMatrix,
    target: &CMatrix,
    floor: f64,
    support: Option<&CMatrix>,
) -> Option<Candidate> {
    let mut theta = 1.0;
    for _ in 0..MAX_MIXING_BACKTRACKS {
        let blend = HermitianOperator::symmetrized(base + (target - base).scale(theta));
        let lowest = match support {
            Some(u) => min_eigenvalue(&(u.adjoint() * blend.matrix() * u)),
            None => eigh(&blend).min(),
        };
        if lowest >= floor {
            let m = blend.into_matrix();
            let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
            if !(tr > 0.0) {
                return None;
            }
            let cand = m.unscale(tr);
            let (q_c, gain) = red.step_gain(sigma, q, &cand);
            return Some((cand, q_c, gain));
        }
        theta *= 0.5;
    }
    None
}

/// Ascent step along the top eigenvector of `R` when it exceeds one, i.e. when
/// the iterate sits on a face of the state space that the multiplicative update
/// cannot leave.
fn boundary_escape(red: &Reduced, r: &CMatrix, sigma: &CMatrix, q: &[f64]) -> Option<Candidate> {
    let spec = eigh(&HermitianOperator::symmetrized(r.clone()));
    if spec.max() <= 1.0 + KKT_TOL {
        return None;
    }
    let d = sigma.nrows();
    let v = spec.vectors.column(d - 1).into_owned();
    let proj = &v * v.adjoint();
    let mut eps = 0.1;
    for _ in 0..MAX_DILUTIONS {
        let cand = (sigma + proj.scale(eps)).unscale(1.0 + eps);
        let (q_c, gain) = red.step_gain(sigma, q, &cand);
        if gain > 0.0 {
            return Some((cand, q_c, gain));
        }
        eps *= 0.1;
        if eps < 1e-14 {
            break;
        }
    }
    None
}

/// Newton steps on the factor `B` of `σ ∝ B B†`, after dropping none, some or
/// all of the smallest eigen-directions that are tiny and still shrinking under
/// `R`. Boundary optima are otherwise approached only linearly.
fn factor_candidates(red: &Reduced, r: &CMatrix, sigma: &CMatrix, q: &[f64]) -> Vec<Candidate> {
    let spec = eigh(&HermitianOperator::symmetrized(sigma.clone()));
    let d = sigma.nrows();
    let top = spec.max();
    let droppable = (0..d - 1)
        .take_while(|&i| {
            let v = spec.vectors.column(i);
            let pull = (v.adjoint() * r * v)[(0, 0)].re;
            spec.values[i] < FACE_THRESHOLD * top && pull < 1.0
        })
        .count();
    let from_factor = |b: &CMatrix| {
        let m = hermitize(b * b.adjoint());
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        m.unscale(tr)
    };
    let mut out = Vec::new();
    for drop in 0..=droppable {
        let factor = CMatrix::from_columns(
            &(drop..d)
                .map(|i| spec.vectors.column(i) * C64::new(spec.values[i].max(0.0).sqrt(), 0.0))
                .collect::<Vec<_>>(),
        );
        let face = from_factor(&factor);
        let mut best = (drop > 0).then(|| {
            let (q_c, gain) = red.step_gain(sigma, q, &face);
            (face, q_c, gain)
        });
        if let Some(dir) = factor_newton_direction(red, &factor) {
            let mut alpha = 1.0;
            for _ in 0..4 {
                let cand = from_factor(&(&factor + dir.scale(alpha)));
                let (q_c, gain) = red.step_gain(sigma, q, &cand);
                if gain > best.as_ref().map_or(0.0, |c| c.2) {
                    best = Some((cand, q_c, gain));
                    break;
                }
                alpha *= 0.5;
            }
        }
        out.extend(best);
    }
    out
}

/// Newton direction of `Σ n_l ln(q_l / Σq)` with `q_l = tr(B B† Π'_l)` over
/// the real and imaginary parts of `B`. Directions of non-positive curvature,
/// including the gauge freedom `B → B U`, are left out.
fn factor_newton_direction(red: &Reduced, b: &CMatrix) -> Option<CMatrix> {
    let (d, k) = b.shape();
    let n = 2 * d * k;
    let idx = |c: usize, part: usize, row: usize| c * 2 * d + part * d + row;
    let mut grad = DVector::<f64>::zeros(n);
    let mut hess = DMatrix::<f64>::zeros(n, n);
    let mut lin_sum = DVector::<f64>::zeros(n);
    let mut quad_sum = DMatrix::<f64>::zeros(2 * d, 2 * d);
    let mut q_sum = 0.0;
    for (p, &cnt) in red.completed.iter().zip(&red.counts) {
        let c_mat = p * b;
        let mut lin = DVector::<f64>::zeros(n);
        for c in 0..k {
            for row in 0..d {
                lin[idx(c, 0, row)] = 2.0 * c_mat[(row, c)].re;
                lin[idx(c, 1, row)] = 2.0 * c_mat[(row, c)].im;
            }
        }
        // Real form of z ↦ z† Π z for one column z = u + iv.
        let quad = DMatrix::<f64>::from_fn(2 * d, 2 * d, |i, j| {
            let (pi, ri) = (i / d, i % d);
            let (pj, rj) = (j / d, j % d);
            let z = p[(ri, rj)];
            match (pi, pj) {
                (0, 0) | (1, 1) => 2.0 * z.re,
                (0, 1) => -2.0 * z.im,
                _ => 2.0 * z.im,
            }
        });
        let ql = (b.adjoint() * &c_mat).trace().re.max(PROB_FLOOR);
        q_sum += ql;
        lin_sum += &lin;
        quad_sum += &quad;
        if cnt == 0.0 {
            continue;
        }
        grad.axpy(cnt / ql, &lin, 1.0);
        hess.ger(-cnt / (ql * ql), &lin, &lin, 1.0);
        for c in 0..k {
            let o = c * 2 * d;
            let mut blk = hess.view_mut((o, o), (2 * d, 2 * d));
            blk += quad.scale(cnt / ql);
        }
    }
    let total = red.total;
    grad.axpy(-total / q_sum, &lin_sum, 1.0);
    hess.ger(total / (q_sum * q_sum), &lin_sum, &lin_sum, 1.0);
    for c in 0..k {
        let o = c * 2 * d;
        let mut blk = hess.view_mut((o, o), (2 * d, 2 * d));
        blk -= quad_sum.scale(total / q_sum);
    }
    let neg = nalgebra::SymmetricEigen::new(-hess);
    let scale = neg.eigenvalues.amax();
    if !(scale > 0.0) {
        return None;
    }
    let mut step = DVector::<f64>::zeros(n);
    for (i, &e) in neg.eigenvalues.iter().enumerate() {
        if e > FACTOR_CURVATURE_CUTOFF * scale {
            let v = neg.eigenvectors.column(i);
            step.axpy(v.dot(&grad) / e, &v, 1.0);
        }
    }
    if !step.iter().all(|x| x.is_finite()) {
        return None;
    }
    Some(CMatrix::from_fn(d, k, |row, c| C64::new(step[idx(c, 0, row)], step[idx(c, 1, row)])))
}

fn min_eigenvalue(m: &CMatrix) -> f64 {
    eigh(&HermitianOperator::symmetrized(m.clone())).min()
}

/// Maximizes the η-normalized likelihood of `spec`.
pub fn ml_estimate(spec: &LikelihoodSpec, options: &MlOptions) -> Result<EstimationResult> {
    let dim = spec.dim();
    let red = Reduced::new(spec)?;
    let newton = options.newton.then(|| NewtonModel::new(&red, dim));
    let ident = CMatrix::identity(dim, dim);

    let mut sigma = ident.unscale(dim as f64);
    let mut q = red.probs(&sigma);
    let mut ll = red.loglik(&q);
    let mut trace = Vec::new();
    if options.record_trace {
        trace.push(ll);
    }

    let mut mixer = Anderson::new(options.anderson_depth);
    let mut last_gain = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut res = f64::INFINITY;

    loop {
        let r = red.r_operator(&q);
        let mut escape = None;
        if last_gain < options.gain_tol {
            res = residual(&r, &sigma);
            if res < options.tol {
                escape = boundary_escape(&red, &r, &sigma, &q);
                if escape.is_none() {
                    converged = true;
                    break;
                }
            }
        }
        if iterations >= options.max_iters {
            break;
        }

        let mut accepted: Option<Candidate> = None;
        let mut diluted = false;
        if escape.is_some() {
            accepted = escape;
            mixer.reset();
        } else {
            let full = normalized_sandwich(&r, &sigma);
            let (q_full, gain_full) = red.step_gain(&sigma, &q, &full);
            if gain_full >= 0.0 {
                accepted = Some((full, q_full, gain_full));
            } else {
                diluted = true;
                let r_bar = &r - &ident;
                let mut eps = 0.5;
                for _ in 0..MAX_DILUTIONS {
                    let step = &ident + r_bar.scale(eps);
                    let cand = normalized_sandwich(&step, &sigma);
                    let (q_c, gain_c) = red.step_gain(&sigma, &q, &cand);
                    if gain_c >= 0.0 {
                        accepted = Some((cand, q_c, gain_c));
                        break;
                    }
                    eps *= 0.5;
                }
            }
        }

        if diluted {
            mixer.reset();
        }
        if let Some((plain, _, _)) = accepted.clone().filter(|_| !diluted) {
            let floor = MIN_EIGEN_SHRINK * min_eigenvalue(&plain).min(min_eigenvalue(&sigma));
            let x = hermitian_coords(&sigma);
            let f = hermitian_coords(&plain) - &x;
            let mut extra = Vec::new();
            if let Some(mixed) = mixer.propose(x, f) {
                let target = from_hermitian_coords(&mixed, dim);
                extra.extend(backtracked(&red, &sigma, &q, &plain, &target, floor, None));
            }
            if let Some(model) = &newton {
                if let Some(target) = model.target(&red, &sigma, &q) {
                    extra.extend(backtracked(&red, &sigma, &q, &sigma, &target, floor, None));
                }
                extra.extend(factor_candidates(&red, &r, &sigma, &q));
            }
            for cand in extra {
                if cand.2 > accepted.as_ref().map_or(0.0, |a| a.2) {
                    accepted = Some(cand);
                }
            }
        }

        iterations += 1;
        match accepted {
            Some((s, qn, gain)) => {
                last_gain = gain;
                sigma = s;
                q = qn;
                ll += gain;
                if options.record_trace {
                    trace.push(ll);
                }
            }
            None => {
                // No ascent direction left at working precision.
                res = residual(&r, &sigma);
                converged = res < options.tol;
                break;
            }
        }
    }

    if !res.is_finite() {
        res = residual(&red.r_operator(&q), &sigma);
    }

    let back = hermitize(&red.g_inv_sqrt * &sigma * &red.g_inv_sqrt);
    let rho_hat = DensityMatrix::from_unnormalized(&HermitianOperator::symmetrized(back))?;
    let log_likelihood = log_likelihood(spec, &rho_hat)?;
    let refs: Vec<&HermitianOperator> = spec.outcomes.iter().map(PovmElement::op).collect();
    let possibly_non_unique = operator_span_rank(&refs) < dim * dim;

    Ok(EstimationResult {
        rho_hat,
        log_likelihood,
        iterations,
        residual: res,
        converged,
        possibly_non_unique,
        trace,
    })
}

fn check_counts(counts: &Counts, setup: &MeasurementSetup) -> Result<()> {
    if counts.well.len() != setup.m_well || counts.ill.len() != setup.m_ill() {
        return Err(Error::InvalidSetup(format!(
            "counts have {}+{} entries, setup has {}+{} outcomes",
            counts.well.len(),
            counts.ill.len(),
            setup.m_well,
            setup.m_ill()
        )));
    }
    Ok(())
}

/// Strategy 1: treat the ill-calibrated outcomes as the intended ones.
pub fn strategy1(
    counts: &Counts,
    setup: &MeasurementSetup,
    options: &MlOptions,
) -> Result<EstimationResult> {
    check_counts(counts, setup)?;
    let spec = LikelihoodSpec::from_integer_counts(setup.nominal_outcomes(), &counts.all())?;
    ml_estimate(&spec, options)
}

/// Strategy 2: discard the ill-calibrated data.
///
/// When the well outcomes are informationally incomplete the returned state is
/// the limit reached from the maximally mixed start and `possibly_non_unique`
/// is set.
pub fn strategy2(
    counts: &Counts,
    setup: &MeasurementSetup,
    options: &MlOptions,
) -> Result<EstimationResult> {
    check_counts(counts, setup)?;
    if setup.m_well == 0 {
        return Err(Error::StrategyInapplicable(
            "no well-calibrated outcomes to estimate from",
        ));
    }
    let spec = LikelihoodSpec::from_integer_counts(setup.well.clone(), &counts.well)?;
    ml_estimate(&spec, options)
}

/// Strategy 3: MWE-coarse-grained ill counts on the intended outcomes.
pub fn strategy3(
    counts: &Counts,
    setup: &MeasurementSetup,
    t: f64,
    options: &MlOptions,
) -> Result<EstimationResult> {
    check_counts(counts, setup)?;
    let cg = mwe_counts(counts, t)?;
    estimate_coarse(&cg, setup, options)
}

/// ML on the intended outcomes with real-valued counts.
pub fn estimate_coarse(
    counts: &CoarseCounts,
    setup: &MeasurementSetup,
    options: &MlOptions,
) -> Result<EstimationResult> {
    let spec = LikelihoodSpec::new(setup.nominal_outcomes(), counts.all())?;
    ml_estimate(&spec, options)
}

/// ML with the outcomes actually measured (available only in simulation).
pub fn reference_estimate(
    counts: &Counts,
    setup: &MeasurementSetup,
    options: &MlOptions,
) -> Result<EstimationResult> {
    check_counts(counts, setup)?;
    let spec = LikelihoodSpec::from_integer_counts(setup.actual_outcomes(), &counts.all())?;
    ml_estimate(&spec, options)
}
