//! Low-lying eigenpairs of the truncated Hamiltonians.
//!
//! Matrices up to `DENSE_THRESHOLD` are diagonalized densely; above that a
//! Lanczos iteration with full reorthogonalization extracts the requested
//! number of lowest eigenpairs. Cutoff convergence is driven by
//! [`converge_cutoff`], which grows the Fock cutoff geometrically until the
//! tracked eigenvalues stop moving.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    build_basis, fix_vector_sign, hamiltonian, ModelParams, OperatorMatrix, Potentials,
    Truncation, TruncatedBasis, WaveFunction,
};

/// Above this dimension the solver switches from dense to Lanczos.
pub const DENSE_THRESHOLD: usize = 1024;

/// Relative residual target for accepted eigenpairs.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Growth factor for the Fock cutoff during convergence.
const CUTOFF_GROWTH: f64 = 1.5;

/// Low-lying spectrum of one Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Ascending eigenvalues, length k.
    pub eigenvalues: Vec<f64>,
    /// Matching orthonormal eigenvectors, sign-fixed.
    pub eigenvectors: Vec<WaveFunction>,
    /// eigenvalue[1] − eigenvalue[0] (0 when k = 1).
    pub gap: f64,
    /// Ground level within the degeneracy tolerance of the first excited one.
    pub degenerate_flag: bool,
    /// Fock cutoff the result was computed at.
    pub cutoff_used: usize,
    /// max_i ‖Hψ_i − E_iψ_i‖.
    pub residual: f64,
}

impl SpectralResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &WaveFunction {
        &self.eigenvectors[0]
    }

    /// Default degeneracy tolerance 1e−9·(1+|E₀|).
    pub fn default_degeneracy_tol(&self) -> f64 {
        1e-9 * (1.0 + self.ground_energy().abs())
    }
}

/// Number of eigenvalues within `tol_deg` of the lowest.
pub fn ground_degeneracy(result: &SpectralResult, tol_deg: f64) -> usize {
    let e0 = result.eigenvalues[0];
    result
        .eigenvalues
        .iter()
        .take_while(|&&e| e - e0 <= tol_deg)
        .count()
}

/// k lowest eigenpairs of `h`, ascending, eigenvector signs fixed so the
/// largest-magnitude coefficient is positive.
pub fn eigensolve(h: &OperatorMatrix, k: usize) -> Result<SpectralResult> {
    eigensolve_seeded(h, k, 0x5eed)
}

/// [`eigensolve`] with an explicit seed for the Lanczos start vector.
pub fn eigensolve_seeded(h: &OperatorMatrix, k: usize, seed: u64) -> Result<SpectralResult> {
    let dim = h.dim();
    if k == 0 || k > dim {
        return Err(Error::Domain(format!(
            "requested {k} eigenpairs of a dimension-{dim} operator"
        )));
    }
    let (vals, vecs) = if dim <= DENSE_THRESHOLD || k * 4 >= dim {
        dense_lowest(&h.to_dense(), k)
    } else {
        match lanczos_lowest(h, k, seed) {
            Ok(pair) => pair,
            // robustness fallback: dense solve regardless of size
            Err(Error::Solver { .. }) => dense_lowest(&h.to_dense(), k),
            Err(e) => return Err(e),
        }
    };

    let mut residual = 0.0f64;
    for (val, vec) in vals.iter().zip(&vecs) {
        let r = (h.apply(vec) - vec * *val).norm();
        residual = residual.max(r);
    }
    let e0 = vals[0];
    let scale = 1.0 + e0.abs();
    if residual > RESIDUAL_TOL * scale * 10.0 {
        return Err(Error::Solver {
            what: "eigensolve".into(),
            residual,
        });
    }

    let basis = Arc::clone(h.basis());
    let eigenvectors: Vec<WaveFunction> = vecs
        .into_iter()
        .map(|v| WaveFunction::new(v, Arc::clone(&basis)).map(WaveFunction::fix_sign))
        .collect::<Result<_>>()?;
    let gap = if vals.len() > 1 { vals[1] - vals[0] } else { 0.0 };
    let tol_deg = 1e-9 * scale;
    Ok(SpectralResult {
        degenerate_flag: vals.len() > 1 && gap <= tol_deg,
        eigenvalues: vals,
        eigenvectors,
        gap,
        cutoff_used: basis.fock_cutoff(),
        residual,
    })
}

fn dense_lowest(h: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .take(k)
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (vals, vecs)
}

/// Lanczos with full two-pass reorthogonalization. Deterministic for a fixed
/// seed; restarts with a fresh random direction when the Krylov space closes.
fn lanczos_lowest(
    h: &OperatorMatrix,
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let dim = h.dim();
    let max_iter = (40 * k + 200).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v0 = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
    v0 /= v0.norm();
    q.push(v0);

    let mut check_every = 8usize;
    for step in 0..max_iter {
        let qj = q[step].clone();
        let mut w = h.apply(&qj);
        if step > 0 {
            w -= &q[step - 1] * betas[step - 1];
        }
        let alpha = qj.dot(&w);
        w -= &qj * alpha;
        alphas.push(alpha);
        // full reorthogonalization; a second pass only when the first one
        // removed a large component (classical twice-is-enough criterion)
        let pre = w.norm();
        for qi in &q {
            let c = qi.dot(&w);
            w -= qi * c;
        }
        if w.norm() < 0.5 * pre {
            for qi in &q {
                let c = qi.dot(&w);
                w -= qi * c;
            }
        }
        let beta = w.norm();
        if beta < 1e-13 {
            // invariant subspace: restart direction
            let mut r = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
            for _ in 0..2 {
                for qi in &q {
                    let c = qi.dot(&r);
                    r -= qi * c;
                }
            }
            let rn = r.norm();
            if rn < 1e-13 {
                break; // space exhausted
            }
            betas.push(0.0);
            q.push(r / rn);
            continue;
        }
        betas.push(beta);
        q.push(&w / beta);

        let m = alphas.len();
        if m >= k + 2 && (m.is_multiple_of(check_every) || step + 1 == max_iter) {
            let (theta, s) = tridiag_eigen(&alphas, &betas[..m - 1]);
            let mut converged = true;
            for i in 0..k {
                let resid = (betas[m - 1] * s[(m - 1, theta_order(&theta, i))]).abs();
                if resid > RESIDUAL_TOL * (1.0 + theta[theta_order(&theta, i)].abs()) {
                    converged = false;
                    break;
                }
            }
            if converged {
                return Ok(ritz_pairs(&q[..m], &theta, &s, k));
            }
            check_every = (check_every + 4).min(32);
        }
    }

    // last attempt with whatever Krylov space we have
    let m = alphas.len();
    if m >= k {
        let (theta, s) = tridiag_eigen(&alphas, &betas[..m.saturating_sub(1)]);
        let worst = (0..k)
            .map(|i| (betas[m - 1] * s[(m - 1, theta_order(&theta, i))]).abs())
            .fold(0.0f64, f64::max);
        if worst <= 1e-7 {
            return Ok(ritz_pairs(&q[..m], &theta, &s, k));
        }
        return Err(Error::Solver {
            what: "lanczos".into(),
            residual: worst,
        });
    }
    Err(Error::Solver {
        what: "lanczos".into(),
        residual: f64::INFINITY,
    })
}

fn tridiag_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Index of the i-th smallest value of `theta`.
fn theta_order(theta: &[f64], i: usize) -> usize {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| theta[a].partial_cmp(&theta[b]).unwrap());
    order[i]
}

fn ritz_pairs(
    q: &[DVector<f64>],
    theta: &[f64],
    s: &DMatrix<f64>,
    k: usize,
) -> (Vec<f64>, Vec<DVector<f64>>) {
    let dim = q[0].len();
    let mut vals = Vec::with_capacity(k);
    let mut vecs = Vec::with_capacity(k);
    for i in 0..k {
        let col = theta_order(theta, i);
        vals.push(theta[col]);
        let mut y = DVector::zeros(dim);
        for (j, qj) in q.iter().enumerate() {
            y += qj * s[(j, col)];
        }
        // Ritz vectors can lose orthogonality at the last digit; re-orthonormalize
        for prev in &vecs {
            let c: f64 = y.dot(prev);
            y -= prev * c;
        }
        y /= y.norm();
        vecs.push(y);
    }
    (vals, vecs)
}

/// Eigensolve at growing cutoffs K, ⌈1.5K⌉, … until all k tracked
/// eigenvalues move by less than `tol`. `tol = ∞` returns the first pass.
pub fn converge_cutoff(
    params: &ModelParams,
    pots: &Potentials,
    start: Truncation,
    tol: f64,
    k: usize,
) -> Result<SpectralResult> {
    converge_cutoff_capped(params, pots, start, tol, k, crate::model::DEFAULT_DIM_CAP)
}

pub fn converge_cutoff_capped(
    params: &ModelParams,
    pots: &Potentials,
    start: Truncation,
    tol: f64,
    k: usize,
    dim_cap: usize,
) -> Result<SpectralResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Domain("convergence tolerance must be positive".into()));
    }
    let solve = |cutoff: usize| -> Result<SpectralResult> {
        let basis = crate::model::build_basis_capped(params, &Truncation::new(cutoff)?, dim_cap)?;
        let h = hamiltonian(params, pots, &basis);
        eigensolve(&h, k)
    };

    let mut cutoff = start.fock_cutoff();
    let mut current = solve(cutoff)?;
    if tol == f64::INFINITY {
        return Ok(current);
    }
    loop {
        let next_cutoff = grow_cutoff(cutoff);
        let next = match solve(next_cutoff) {
            Ok(r) => r,
            Err(Error::Sizing { .. }) => {
                let drift = current.residual.max(tol);
                return Err(Error::Convergence {
                    what: format!("cutoff convergence (cap at K={cutoff})"),
                    best: current.ground_energy(),
                    err_estimate: drift,
                });
            }
            Err(e) => return Err(e),
        };
        let drift = current
            .eigenvalues
            .iter()
            .zip(&next.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if drift < tol {
            return Ok(next);
        }
        cutoff = next_cutoff;
        current = next;
    }
}

fn grow_cutoff(k: usize) -> usize {
    ((k as f64 * CUTOFF_GROWTH).ceil() as usize).max(k + 1)
}

/// Convenience: converged ground state of H(v,j) starting from a small cutoff.
pub fn converged_ground(
    params: &ModelParams,
    pots: &Potentials,
    tol: f64,
    k: usize,
) -> Result<SpectralResult> {
    let start = default_start_cutoff(params, pots);
    converge_cutoff(params, pots, Truncation::new(start)?, tol, k)
}

/// Heuristic starting cutoff: the displaced ground state sits near coherent
/// amplitude |Λσ+j|/2 per mode, so size K to hold its occupation tail.
pub fn default_start_cutoff(params: &ModelParams, pots: &Potentials) -> usize {
    let mut drift = 0.0f64;
    for m in 0..params.n_modes() {
        let lam_row: f64 = (0..params.n_spins())
            .map(|n| params.coupling()[(m, n)].abs())
            .sum();
        drift = drift.max(lam_row + pots.j[m].abs());
    }
    let mean_occ = (drift / 2.0) * (drift / 2.0) / 2.0;
    (6.0 + mean_occ + 5.0 * (mean_occ + 1.0).sqrt()).ceil().max(10.0) as usize
}

/// Fixed-cutoff ground solve used by inner loops that manage K themselves.
pub fn ground_at_cutoff(
    params: &ModelParams,
    pots: &Potentials,
    basis: &Arc<TruncatedBasis>,
    k: usize,
) -> Result<SpectralResult> {
    let h = hamiltonian(params, pots, basis);
    eigensolve(&h, k)
}

/// Basis sized for `params` at cutoff `k`.
pub fn basis_at(params: &ModelParams, k: usize) -> Result<Arc<TruncatedBasis>> {
    build_basis(params, &Truncation::new(k)?)
}

/// Fixes the sign convention on a raw eigenvector (test helper and internal).
pub fn sign_fixed(mut v: DVector<f64>) -> DVector<f64> {
    fix_vector_sign(&mut v);
    v
}
