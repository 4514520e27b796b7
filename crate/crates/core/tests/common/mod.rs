#![allow(dead_code)]

use tomocg::qops::{CMatrix, PovmElement, C64};

/// `−Σ w_k ν_k ln ν_k` with `0 ln 0 = 0`.
pub fn weighted_entropy(w: &[f64], nu: &[f64]) -> f64 {
    w.iter()
        .zip(nu)
        .filter(|(_, &x)| x > 0.0)
        .map(|(&wk, &x)| -wk * x * x.ln())
        .sum()
}

/// Best point of a simplex grid with `steps` divisions (support size ≤ 3).
pub fn simplex_grid_best(w: &[f64], steps: usize) -> Vec<f64> {
    let m = w.len();
    let h = 1.0 / steps as f64;
    let mut best = (f64::NEG_INFINITY, vec![1.0 / m as f64; m]);
    let mut consider = |nu: Vec<f64>| {
        let v = weighted_entropy(w, &nu);
        if v > best.0 {
            best = (v, nu);
        }
    };
    match m {
        1 => consider(vec![1.0]),
        2 => (0..=steps).for_each(|i| consider(vec![i as f64 * h, 1.0 - i as f64 * h])),
        3 => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let (a, b) = (i as f64 * h, j as f64 * h);
                    consider(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
        _ => panic!("grid search only for support size <= 3"),
    }
    best.1
}

const TINY: f64 = 1e-300;

/// Damped Newton ascent of the weighted entropy in reduced coordinates: the
/// currently largest entry is eliminated through `Σν = 1` and the others are
/// moved, kept inside the open simplex by backtracking. Independent of the
/// Lagrange-multiplier route.
pub fn projected_newton_ascent(w: &[f64], start: &[f64]) -> Vec<f64> {
    let m = w.len();
    if m == 1 {
        return vec![1.0];
    }
    let mut nu: Vec<f64> = start.iter().map(|x| x.max(1e-3)).collect();
    let s: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= s);
    for _ in 0..20_000 {
        let last = (0..m).max_by(|&a, &b| nu[a].total_cmp(&nu[b])).unwrap();
        // f'(ν_k) = −w_k (ln ν_k + 1); reduced gradient g_k = f'_k − f'_last.
        let d_last = -w[last] * (nu[last].ln() + 1.0);
        // Entries whose optimum lies below the f64 range are pinned at zero
        // once they reach TINY and the gradient still points down.
        let at_tiny = |k: usize| -w[k] * (TINY.ln() + 1.0);
        for k in 0..m {
            if k != last && nu[k] < TINY && at_tiny(k) < d_last {
                nu[last] += nu[k];
                nu[k] = 0.0;
            }
        }
        let free: Vec<usize> = (0..m).filter(|&k| k != last && nu[k] > 0.0).collect();
        if free.is_empty() {
            break;
        }
        let d = |k: usize| -w[k] * (nu[k].ln() + 1.0);
        let c_last = w[last] / nu[last];
        let g: Vec<f64> = free.iter().map(|&k| d(k) - d(last)).collect();
        // Reduced Hessian −(diag(w_k/ν_k) + c_last 11ᵀ); invert by Sherman–Morrison.
        let inv_c: Vec<f64> = free.iter().map(|&k| nu[k] / w[k]).collect();
        let dot: f64 = inv_c.iter().zip(&g).map(|(a, b)| a * b).sum();
        let denom = 1.0 + c_last * inv_c.iter().sum::<f64>();
        let step: Vec<f64> = (0..free.len())
            .map(|i| inv_c[i] * g[i] - inv_c[i] * c_last * dot / denom)
            .collect();
        let f0 = weighted_entropy(w, &nu);
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand = nu.clone();
            for (i, &k) in free.iter().enumerate() {
                cand[k] = nu[k] + alpha * step[i];
            }
            cand[last] = 1.0 - free.iter().map(|&k| cand[k]).sum::<f64>();
            if cand[last] > 0.0 && free.iter().all(|&k| cand[k] > 0.0) && weighted_entropy(w, &cand) >= f0 {
                nu = cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        // Stop once the relative step is at rounding level.
        let rel = free
            .iter()
            .enumerate()
            .map(|(i, &k)| (step[i] / nu[k]).abs())
            .fold(0.0, f64::max);
        if !moved || rel < 1e-15 {
            break;
        }
    }
    nu
}

/// Oracle maximizer on the support of `w` (entries with `w > 0`).
pub fn mwe_oracle(w: &[f64]) -> Vec<f64> {
    let support: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();
    let ws: Vec<f64> = support.iter().map(|&k| w[k]).collect();
    let start = if ws.len() <= 3 {
        simplex_grid_best(&ws, 400)
    } else {
        vec![1.0 / ws.len() as f64; ws.len()]
    };
    let sol = projected_newton_ascent(&ws, &start);
    let mut nu = vec![0.0; w.len()];
    for (i, &k) in support.iter().enumerate() {
        nu[k] = sol[i];
    }
    nu
}

/// `Σ n_l ln(p_l/η)` evaluated term by term.
pub fn direct_log_likelihood(outcomes: &[PovmElement], counts: &[f64], rho: &CMatrix) -> f64 {
    let p: Vec<f64> = outcomes
        .iter()
        .map(|o| (rho * o.matrix()).trace().re)
        .collect();
    let eta: f64 = p.iter().sum();
    counts
        .iter()
        .zip(&p)
        .filter(|(&n, _)| n > 0.0)
        .map(|(&n, &pl)| n * (pl / eta).ln())
        .sum()
}

/// Gradient ascent of the η-normalized log-likelihood over `ρ ∝ A A†`, a
/// generic parametrization independent of the fixed-point solver.
/// Returns the best log-likelihood and state found.
pub fn cholesky_ascent(outcomes: &[PovmElement], counts: &[f64], iters: usize) -> (f64, CMatrix) {
    let d = outcomes[0].dim();
    let g: CMatrix = outcomes.iter().map(|o| o.matrix()).sum();
    let total: f64 = counts.iter().sum();
    let normalize = |a: &CMatrix| {
        let r = a * a.adjoint();
        let t = r.trace().re;
        r.unscale(t)
    };
    let mut a = CMatrix::identity(d, d);
    let mut rho = normalize(&a);
    let mut ll = direct_log_likelihood(outcomes, counts, &rho);
    let mut step = 1e-3;
    for _ in 0..iters {
        let p: Vec<f64> = outcomes.iter().map(|o| (&rho * o.matrix()).trace().re).collect();
        let eta: f64 = p.iter().sum();
        let mut k = g.scale(-total / eta);
        for ((o, &n), &pl) in outcomes.iter().zip(counts).zip(&p) {
            if n > 0.0 {
                k += o.matrix().scale(n / pl);
            }
        }
        let grad = &k * &a;
        let mut improved = false;
        for _ in 0..40 {
            let cand = &a + grad.scale(step);
            let r = normalize(&cand);
            let lc = direct_log_likelihood(outcomes, counts, &r);
            if lc > ll {
                a = cand.unscale(cand.norm());
                rho = r;
                ll = lc;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (ll, rho)
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
