//! Pure-state constrained search for F_LL.
//!
//! The minimization of ⟨ψ,H₀ψ⟩ over the constraint manifold
//! {‖ψ‖ = 1, σ_ψ = σ, ξ_ψ = ξ} runs in two stages:
//!
//! 1. An augmented Lagrangian over real coefficient vectors, descended with
//!    sphere-projected gradient steps (Barzilai–Borwein step sizes, Armijo
//!    backtracking). Stationarity is measured by the gradient component
//!    tangent to the constraint manifold, i.e. orthogonal to
//!    {ψ, σ_z^nψ, x_mψ}. Initialized at the displaced-Gaussian trial state,
//!    with perturbed restarts.
//! 2. A polish stage exploiting that interior optimizers satisfy a strong
//!    Schrödinger equation H(v,j)ψ = Eψ: starting from the recovered
//!    multipliers, Newton on v drives the density of the tracked eigenstate
//!    branch onto the target, which pushes the Schrödinger residual down to
//!    eigensolver precision. j never enters the solve; it is fixed by force
//!    balance.
//!
//! Magnetization components pinned at ±1 force the matching spinor blocks to
//! vanish; those spins are frozen out exactly and the search recurses on the
//! reduced model.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    build_basis_capped, fix_vector_sign, hamiltonian, ModelParams, OperatorMatrix, OperatorSet,
    Potentials, Truncation, TruncatedBasis, WaveFunction, DEFAULT_DIM_CAP,
};
use crate::spectral::{self, eigensolve};

use super::{
    density_pair_with, force_balance_j, trial_state, DensityPair, FunctionalResult, Multipliers,
    Optimizer,
};

/// Tuning knobs for [`fll_constrained_search_opts`].
#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Outer constraint tolerance on |⟨A⟩ − target|.
    pub constraint_tol: f64,
    /// Inner projected-gradient stationarity tolerance.
    pub inner_tol: f64,
    pub penalty_start: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// Random restarts from perturbed trial states.
    pub restarts: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Overall value tolerance; tol ≤ 1e−8 triggers a cutoff re-verification.
    pub tol: f64,
    pub seed: u64,
    /// Attempt the eigenstate polish stage (on by default).
    pub polish: bool,
    /// Fock cutoff override.
    pub cutoff: Option<usize>,
    /// Warm start replacing the trial state on the first restart. Must match
    /// the basis implied by `cutoff`.
    pub initial_state: Option<DVector<f64>>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            constraint_tol: 1e-8,
            inner_tol: 1e-10,
            penalty_start: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e6,
            restarts: 5,
            max_outer: 14,
            max_inner: 4000,
            tol: 1e-8,
            seed: 0,
            polish: true,
            cutoff: None,
            initial_state: None,
        }
    }
}

/// F_LL by direct constrained search; see the module docs.
pub fn fll_constrained_search(
    params: &ModelParams,
    target: &DensityPair,
    tol: f64,
    seed: u64,
) -> Result<FunctionalResult> {
    let opts = SearchOptions {
        tol,
        constraint_tol: tol.min(1e-8),
        seed,
        ..SearchOptions::default()
    };
    fll_constrained_search_opts(params, target, &opts)
}

pub fn fll_constrained_search_opts(
    params: &ModelParams,
    target: &DensityPair,
    opts: &SearchOptions,
) -> Result<FunctionalResult> {
    if target.n_spins() != params.n_spins() || target.n_modes() != params.n_modes() {
        return Err(Error::Config("density pair shape mismatch".into()));
    }

    if let Some(frozen) = boundary_partition(target, 1e-10) {
        return frozen_search(params, target, &frozen, opts);
    }

    // an explicit cutoff pins the basis; the caller owns convergence control
    if let Some(k) = opts.cutoff {
        return search_at_cutoff(params, target, k, opts);
    }

    let mut cutoff = auto_cutoff(params, target);
    let mut previous_value: Option<f64> = None;
    let mut last: Option<FunctionalResult> = None;
    // escalate the cutoff until the value stops moving (re-verify rule)
    for _ in 0..4 {
        let result = search_at_cutoff(params, target, cutoff, opts)?;
        let drift = previous_value.map(|p| (p - result.value).abs());
        let mut result = result;
        if let Some(d) = drift {
            result.residuals.insert("cutoff_drift".into(), d);
        }
        let done = match drift {
            Some(d) => d <= opts.tol.max(1e-10),
            None => opts.tol > 1e-8, // loose tolerance: single pass
        };
        if done {
            return Ok(result);
        }
        previous_value = Some(result.value);
        last = Some(result);
        cutoff = grow(cutoff);
    }
    last.ok_or_else(|| Error::Convergence {
        what: "constrained search cutoff escalation".into(),
        best: f64::NAN,
        err_estimate: f64::NAN,
    })
}

fn grow(k: usize) -> usize {
    ((k as f64 * 1.5).ceil() as usize).max(k + 1)
}

/// Cutoff heuristic: hold the trial state's coherent tail below ~1e−10 and
/// the ground-state drift of the force-balance potentials.
fn auto_cutoff(params: &ModelParams, target: &DensityPair) -> usize {
    let j = force_balance_j(params, target);
    let pots = Potentials {
        v: vec![0.0; params.n_spins()],
        j: j.iter().copied().collect(),
    };
    let from_drift = spectral::default_start_cutoff(params, &pots);
    let b2 = target.xi.iter().map(|x| x * x / 2.0).fold(0.0f64, f64::max);
    let from_tail = (b2 + 5.0 * (b2 + 1.0).sqrt() + 6.0).ceil() as usize;
    from_drift.max(from_tail).max(12)
}

// ---------------------------------------------------------------------------
// One full search at a fixed cutoff
// ---------------------------------------------------------------------------

fn search_at_cutoff(
    params: &ModelParams,
    target: &DensityPair,
    cutoff: usize,
    opts: &SearchOptions,
) -> Result<FunctionalResult> {
    let basis = build_basis_capped(params, &Truncation::new(cutoff)?, DEFAULT_DIM_CAP)?;
    let ops = OperatorSet::build(params, &basis);
    let trial = trial_state(target, &basis)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_al: Option<AlRun> = None;
    let mut polished: Option<Polished> = None;

    'restarts: for restart in 0..=opts.restarts {
        let mut psi0 = match (&opts.initial_state, restart) {
            (Some(init), 0) if init.len() == basis.dim() => init.clone(),
            _ => trial.coeffs().clone(),
        };
        if restart > 0 {
            let scale = 0.05 * restart as f64;
            for c in psi0.iter_mut() {
                *c += scale * (rng.random::<f64>() - 0.5);
            }
            psi0 /= psi0.norm();
        }
        // a cheap AL pass feeds the polish; full effort only when polishing
        // is off or keeps failing
        let efforts: &[AlEffort] = if opts.polish {
            &[AlEffort::Quick, AlEffort::Full]
        } else {
            &[AlEffort::Full]
        };
        let mut warm = psi0;
        for &effort in efforts {
            let run = al_minimize(&ops, target, warm.clone(), opts, effort);
            warm = run.psi.clone();
            if opts.polish {
                let (mult, _, _) = recover_multipliers(&ops, &run.psi);
                if let Ok(pol) = polish(params, target, &basis, &ops, &run.psi, &mult.v, opts) {
                    // accept the polished eigenstate unless the feasible AL
                    // point is genuinely lower (wrong branch)
                    let al_feasible = run.constraint_inf <= opts.constraint_tol * 10.0;
                    if !al_feasible || run.value >= pol.value - 1e-6 {
                        polished = Some(pol);
                        best_al = pick_better(best_al, run, opts);
                        break 'restarts;
                    }
                }
            }
            let feasible_enough = run.constraint_inf <= opts.constraint_tol;
            best_al = pick_better(best_al, run, opts);
            if feasible_enough && !opts.polish {
                break 'restarts;
            }
        }
    }

    let al = best_al.expect("at least one AL run");
    let mut residuals = BTreeMap::new();
    residuals.insert("al_value".into(), al.value);
    residuals.insert("al_constraint".into(), al.constraint_inf);
    residuals.insert("al_stationarity".into(), al.stationarity);

    if let Some(pol) = polished {
        residuals.insert("gap".into(), pol.gap);
        residuals.insert("schrodinger".into(), pol.schrodinger);
        residuals.insert("sigma_error".into(), pol.sigma_error);
        residuals.insert("xi_error".into(), pol.xi_error);
        let converged = pol.sigma_error <= opts.constraint_tol.max(1e-9) * 10.0;
        return Ok(FunctionalResult {
            value: pol.value,
            representing_potentials: Some(pol.multipliers.potentials()),
            multipliers: Some(pol.multipliers),
            optimizer: Optimizer::Pure(pol.psi),
            converged,
            residuals,
            cutoff_used: cutoff,
        });
    }

    // AL-only result: recover multipliers by least squares
    let (mult, rank_ok, ls_residual) = recover_multipliers(&ops, &al.psi);
    let h = hamiltonian(params, &mult.potentials(), &basis);
    let schrodinger = (h.apply(&al.psi) - &al.psi * mult.e).norm();
    residuals.insert("schrodinger".into(), schrodinger);
    residuals.insert("multiplier_ls".into(), ls_residual);
    let achieved = density_pair_with(&ops, &al.psi);
    residuals.insert(
        "sigma_error".into(),
        (&achieved.sigma - &target.sigma).amax(),
    );
    residuals.insert("xi_error".into(), (&achieved.xi - &target.xi).amax());
    let converged = al.constraint_inf <= opts.constraint_tol;
    if !converged {
        return Err(Error::Convergence {
            what: "constrained search (constraint violation at exit)".into(),
            best: al.value,
            err_estimate: al.constraint_inf,
        });
    }
    let mut psi = al.psi.clone();
    fix_vector_sign(&mut psi);
    Ok(FunctionalResult {
        value: al.value,
        representing_potentials: rank_ok.then(|| mult.potentials()),
        multipliers: rank_ok.then_some(mult),
        optimizer: Optimizer::Pure(WaveFunction::new(psi, Arc::clone(&basis))?),
        converged: true,
        residuals,
        cutoff_used: cutoff,
    })
}

fn pick_better(best: Option<AlRun>, run: AlRun, opts: &SearchOptions) -> Option<AlRun> {
    match best {
        None => Some(run),
        Some(b) => {
            let b_ok = b.constraint_inf <= opts.constraint_tol;
            let r_ok = run.constraint_inf <= opts.constraint_tol;
            let better = match (b_ok, r_ok) {
                (true, false) => false,
                (false, true) => true,
                _ => run.value < b.value,
            };
            Some(if better { run } else { b })
        }
    }
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian stage
// ---------------------------------------------------------------------------

struct AlRun {
    psi: DVector<f64>,
    value: f64,
    constraint_inf: f64,
    stationarity: f64,
}

/// Inner-loop budget. Quick runs feed the polish stage; Full uses the
/// spec-level budget and is the fallback when polishing fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AlEffort {
    Quick,
    Full,
}

fn al_minimize(
    ops: &OperatorSet,
    target: &DensityPair,
    psi0: DVector<f64>,
    opts: &SearchOptions,
    effort: AlEffort,
) -> AlRun {
    let cons: Vec<&OperatorMatrix> = ops.spin_z.iter().chain(ops.position.iter()).collect();
    let targets: Vec<f64> = target
        .sigma
        .iter()
        .chain(target.xi.iter())
        .copied()
        .collect();
    let cc = cons.len();
    let (max_inner, inner_tol, max_outer) = match effort {
        AlEffort::Quick => (opts.max_inner.min(500), opts.inner_tol.max(1e-8), 8),
        AlEffort::Full => (opts.max_inner, opts.inner_tol, opts.max_outer),
    };

    let constraints = |psi: &DVector<f64>| -> Vec<f64> {
        cons.iter()
            .zip(&targets)
            .map(|(op, t)| op.expectation(psi) - t)
            .collect()
    };

    let mut psi = psi0.normalize();
    let mut mu = vec![0.0f64; cc];
    let mut rho = opts.penalty_start;
    let mut prev_inf = f64::INFINITY;
    let mut stationarity = f64::INFINITY;

    for _outer in 0..max_outer {
        stationarity = inner_descent(
            ops, &cons, &targets, &mut psi, &mu, rho, max_inner, inner_tol,
        );
        let g = constraints(&psi);
        let ginf = g.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let stationary_enough =
            effort == AlEffort::Quick || stationarity <= opts.inner_tol * 100.0;
        if ginf <= opts.constraint_tol && stationary_enough {
            break;
        }
        for (m, gc) in mu.iter_mut().zip(&g) {
            *m += rho * gc;
        }
        if ginf > 0.25 * prev_inf {
            rho = (rho * opts.penalty_growth).min(opts.penalty_max);
        }
        prev_inf = ginf;
    }

    let g = constraints(&psi);
    let constraint_inf = g.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let value = ops.h0.expectation(&psi);
    AlRun {
        psi,
        value,
        constraint_inf,
        stationarity,
    }
}

/// Sphere-projected gradient descent on the augmented Lagrangian. Returns the
/// norm of the objective gradient projected onto the constraint tangent
/// space (the first-order optimality measure on the manifold).
#[allow(clippy::too_many_arguments)]
fn inner_descent(
    ops: &OperatorSet,
    cons: &[&OperatorMatrix],
    targets: &[f64],
    psi: &mut DVector<f64>,
    mu: &[f64],
    rho: f64,
    max_inner: usize,
    inner_tol: f64,
) -> f64 {
    let value_and_grad = |p: &DVector<f64>| -> (f64, DVector<f64>) {
        let hp = ops.h0.apply(p);
        let mut f = p.dot(&hp);
        let mut w = hp;
        for ((op, &t), &m) in cons.iter().zip(targets).zip(mu) {
            let ap = op.apply(p);
            let g = p.dot(&ap) - t;
            f += m * g + 0.5 * rho * g * g;
            w += ap * (m + rho * g);
        }
        // sphere projection of the Euclidean gradient 2w
        let radial = p.dot(&w);
        let grad = (w - p * radial) * 2.0;
        (f, grad)
    };

    let (mut f, mut grad) = value_and_grad(psi);
    let mut alpha = 1e-2 / (1.0 + rho);
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;

    for _ in 0..max_inner {
        let gn2 = grad.norm_squared();
        if gn2.sqrt() <= inner_tol * (1.0 + f.abs()) {
            break;
        }
        if let Some((ps, pg)) = &prev {
            let s = &*psi - ps;
            let y = &grad - pg;
            let sy = s.dot(&y).abs();
            if sy > 1e-300 {
                alpha = (s.norm_squared() / sy).clamp(1e-9, 1e3);
            }
        }
        let mut accepted = false;
        let mut a = alpha;
        for _ in 0..50 {
            let cand = (&*psi - &grad * a).normalize();
            let (fc, gc) = value_and_grad(&cand);
            if fc <= f - 1e-4 * a * gn2 {
                prev = Some((psi.clone(), grad.clone()));
                *psi = cand;
                f = fc;
                grad = gc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // tangent-projected objective gradient: orthogonalize H₀ψ against
    // span{ψ, σ_zψ, xψ}
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(cons.len() + 1);
    frame.push(psi.clone());
    for op in cons {
        frame.push(op.apply(psi));
    }
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(frame.len());
    for mut v in frame {
        for u in &ortho {
            let c = u.dot(&v);
            v -= u * c;
        }
        let n = v.norm();
        if n > 1e-12 {
            ortho.push(v / n);
        }
    }
    let mut t = ops.h0.apply(psi);
    for u in &ortho {
        let c = u.dot(&t);
        t -= u * c;
    }
    2.0 * t.norm()
}

// ---------------------------------------------------------------------------
// Multiplier recovery
// ---------------------------------------------------------------------------

/// Least squares recovery of (E, v, j) from H₀ψ ≈ Eψ − Σ v_n σ_z^nψ − Σ j_m x_mψ.
/// The boolean reports full column rank (false at irregular targets).
pub fn recover_multipliers(
    ops: &OperatorSet,
    psi: &DVector<f64>,
) -> (Multipliers, bool, f64) {
    let n = ops.spin_z.len();
    let m = ops.position.len();
    let dim = psi.len();
    let mut a = DMatrix::zeros(dim, 1 + n + m);
    a.column_mut(0).copy_from(psi);
    for (c, op) in ops.spin_z.iter().enumerate() {
        a.column_mut(1 + c).copy_from(&(-op.apply(psi)));
    }
    for (c, op) in ops.position.iter().enumerate() {
        a.column_mut(1 + n + c).copy_from(&(-op.apply(psi)));
    }
    let b = ops.h0.apply(psi);

    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let rank_ok = svd
        .singular_values
        .iter()
        .all(|&s| s > 1e-10 * (1.0 + max_sv));
    let sol = svd.solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(1 + n + m));
    let residual = (&a * &sol - &b).norm();
    let mult = Multipliers {
        e: sol[0],
        v: DVector::from_fn(n, |i, _| sol[1 + i]),
        j: DVector::from_fn(m, |i, _| sol[1 + n + i]),
    };
    (mult, rank_ok, residual)
}

// ---------------------------------------------------------------------------
// Polish stage
// ---------------------------------------------------------------------------

struct Polished {
    psi: WaveFunction,
    value: f64,
    multipliers: Multipliers,
    schrodinger: f64,
    sigma_error: f64,
    xi_error: f64,
    gap: f64,
}

fn polish(
    params: &ModelParams,
    target: &DensityPair,
    basis: &Arc<TruncatedBasis>,
    ops: &OperatorSet,
    psi_ref: &DVector<f64>,
    v_init: &DVector<f64>,
    opts: &SearchOptions,
) -> Result<Polished> {
    let n = params.n_spins();
    let j_vec = force_balance_j(params, target);
    let j: Vec<f64> = j_vec.iter().copied().collect();
    let k_full = (n + params.n_modes() + 2).min(basis.dim());
    let tol_density = (opts.tol * 1e-2).clamp(1e-12, 1e-9);

    let solve = |v: &DVector<f64>, k: usize| -> Result<spectral::SpectralResult> {
        let pots = Potentials {
            v: v.iter().copied().collect(),
            j: j.clone(),
        };
        eigensolve(&hamiltonian(params, &pots, basis), k)
    };

    let mut v = v_init.clone();
    if v.iter().any(|x| !x.is_finite()) {
        v = DVector::zeros(n);
    }
    let mut spec = solve(&v, k_full)?;
    let mut branch = best_branch(&spec, psi_ref);
    // once the tracked branch is known, only a small window around it is
    // needed for the Newton solves
    let mut k_solve = (branch + 2).min(k_full).max(2.min(basis.dim()));
    let mut sigma = ops.sigma_of(spec.eigenvectors[branch].coeffs());
    let mut err = (&sigma - &target.sigma).amax();

    for _iter in 0..60 {
        if err <= tol_density {
            break;
        }
        let h = 1e-5;
        let mut jac = DMatrix::zeros(n, n);
        let reference = spec.eigenvectors[branch].clone();
        for b in 0..n {
            let mut vp = v.clone();
            vp[b] += h;
            let sp = solve(&vp, k_solve)?;
            let bb = best_branch_state(&sp, &reference);
            let sig_p = ops.sigma_of(sp.eigenvectors[bb].coeffs());
            for aa in 0..n {
                jac[(aa, b)] = (sig_p[aa] - sigma[aa]) / h;
            }
        }
        let residual = &sigma - &target.sigma;
        let step = jac
            .lu()
            .solve(&residual)
            .ok_or_else(|| Error::Convergence {
                what: "polish jacobian singular".into(),
                best: f64::NAN,
                err_estimate: err,
            })?;

        let mut improved = false;
        let mut alpha = 1.0f64;
        for _ in 0..12 {
            let v_try = &v - &step * alpha;
            let spec_try = solve(&v_try, k_solve)?;
            let b_try = best_branch_state(&spec_try, &reference);
            if spec_try.eigenvectors[b_try].overlap(&reference).abs() < 0.5 {
                alpha *= 0.5;
                continue;
            }
            let sig_try = ops.sigma_of(spec_try.eigenvectors[b_try].coeffs());
            let err_try = (&sig_try - &target.sigma).amax();
            if err_try < err {
                v = v_try;
                spec = spec_try;
                branch = b_try;
                // keep one spare level above the tracked branch
                k_solve = (branch + 2).clamp(k_solve, k_full);
                sigma = sig_try;
                err = err_try;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            return Err(Error::Convergence {
                what: "polish newton stagnation".into(),
                best: f64::NAN,
                err_estimate: err,
            });
        }
    }
    if err > tol_density.max(opts.constraint_tol) {
        return Err(Error::Convergence {
            what: "polish density mismatch".into(),
            best: f64::NAN,
            err_estimate: err,
        });
    }

    let psi = spec.eigenvectors[branch].clone();
    let e = spec.eigenvalues[branch];
    let achieved = density_pair_with(ops, psi.coeffs());
    let value = ops.h0.expectation(psi.coeffs());
    let pots = Potentials {
        v: v.iter().copied().collect(),
        j: j.clone(),
    };
    let h = hamiltonian(params, &pots, basis);
    let schrodinger = (h.apply(psi.coeffs()) - psi.coeffs() * e).norm();
    Ok(Polished {
        psi,
        value,
        multipliers: Multipliers { e, v, j: j_vec },
        schrodinger,
        sigma_error: err,
        xi_error: (&achieved.xi - &target.xi).amax(),
        gap: spec.gap,
    })
}

fn best_branch(spec: &spectral::SpectralResult, psi: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_ov = -1.0;
    for (i, vec) in spec.eigenvectors.iter().enumerate() {
        let ov = vec.coeffs().dot(psi).abs();
        if ov > best_ov {
            best_ov = ov;
            best = i;
        }
    }
    best
}

fn best_branch_state(spec: &spectral::SpectralResult, reference: &WaveFunction) -> usize {
    let mut best = 0;
    let mut best_ov = -1.0;
    for (i, vec) in spec.eigenvectors.iter().enumerate() {
        let ov = vec.overlap(reference).abs();
        if ov > best_ov {
            best_ov = ov;
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Boundary freezing
// ---------------------------------------------------------------------------

/// Spins with |σ_n| pinned at 1 and the effective photon drift they leave
/// behind.
pub(crate) struct FrozenPartition {
    pub frozen: Vec<(usize, f64)>,
    pub free: Vec<usize>,
}

pub(crate) fn boundary_partition(target: &DensityPair, eps: f64) -> Option<FrozenPartition> {
    let mut frozen = Vec::new();
    let mut free = Vec::new();
    for (n, &s) in target.sigma.iter().enumerate() {
        if s.abs() >= 1.0 - eps {
            frozen.push((n, s.signum()));
        } else {
            free.push(n);
        }
    }
    if frozen.is_empty() {
        None
    } else {
        Some(FrozenPartition { frozen, free })
    }
}

/// Photon drift d_m = Σ_{frozen n} Λ_{mn} sign_n left behind by frozen spins.
fn frozen_drift(params: &ModelParams, part: &FrozenPartition) -> DVector<f64> {
    DVector::from_fn(params.n_modes(), |m, _| {
        part.frozen
            .iter()
            .map(|&(n, s)| params.coupling()[(m, n)] * s)
            .sum()
    })
}

/// Value of the functional at a target with boundary components, via exact
/// spin freezing (pure and mixed functionals coincide along this reduction).
pub(crate) fn frozen_value(
    params: &ModelParams,
    target: &DensityPair,
    eps: f64,
) -> Result<f64> {
    let part = boundary_partition(target, eps).ok_or_else(|| {
        Error::Domain("frozen_value called without boundary components".into())
    })?;
    let drift = frozen_drift(params, &part);
    let drift_term = drift.dot(&target.xi);
    if part.free.is_empty() {
        return Ok(params.n_modes() as f64 + target.xi.norm_squared() + drift_term);
    }
    let (reduced, red_target) = build_reduced(params, target, &part)?;
    let inner = fll_constrained_search(&reduced, &red_target, 1e-8, 17)?;
    Ok(inner.value + drift_term)
}

fn build_reduced(
    params: &ModelParams,
    target: &DensityPair,
    part: &FrozenPartition,
) -> Result<(ModelParams, DensityPair)> {
    let m = params.n_modes();
    let coupling_rows: Vec<Vec<f64>> = (0..m)
        .map(|mm| part.free.iter().map(|&n| params.coupling()[(mm, n)]).collect())
        .collect();
    let rows: Vec<&[f64]> = coupling_rows.iter().map(|r| r.as_slice()).collect();
    let tunneling: Vec<f64> = part.free.iter().map(|&n| params.tunneling()[n]).collect();
    let reduced = ModelParams::new(part.free.len(), m, &rows, &tunneling).map_err(|_| {
        Error::Domain(
            "cannot freeze boundary spins: remaining tunneling vector vanishes".into(),
        )
    })?;
    let sigma_red = DVector::from_fn(part.free.len(), |i, _| target.sigma[part.free[i]]);
    let red_target = DensityPair::new(sigma_red, target.xi.clone())?;
    Ok((reduced, red_target))
}

/// Constrained search at a boundary target: freeze pinned spins, recurse on
/// the free ones, embed the optimizer back into the full basis.
fn frozen_search(
    params: &ModelParams,
    target: &DensityPair,
    part: &FrozenPartition,
    opts: &SearchOptions,
) -> Result<FunctionalResult> {
    let drift = frozen_drift(params, part);
    let drift_term = drift.dot(&target.xi);
    let mut residuals = BTreeMap::new();
    residuals.insert("non_representable".into(), 1.0);

    if part.free.is_empty() {
        // photon-only problem: displaced Gaussian per mode is exact
        let value = params.n_modes() as f64 + target.xi.norm_squared() + drift_term;
        let cutoff = auto_cutoff(params, target);
        let basis = build_basis_capped(params, &Truncation::new(cutoff)?, DEFAULT_DIM_CAP)?;
        let psi = trial_state(target, &basis)?;
        return Ok(FunctionalResult {
            value,
            representing_potentials: None,
            multipliers: None,
            optimizer: Optimizer::Pure(psi),
            converged: true,
            residuals,
            cutoff_used: cutoff,
        });
    }

    let (reduced, red_target) = build_reduced(params, target, part)?;
    let inner_opts = SearchOptions {
        cutoff: None,
        ..opts.clone()
    };
    let inner = fll_constrained_search_opts(&reduced, &red_target, &inner_opts)?;
    let value = inner.value + drift_term;
    residuals.extend(
        inner
            .residuals
            .iter()
            .map(|(k, v)| (format!("reduced_{k}"), *v)),
    );

    let optimizer = match &inner.optimizer {
        Optimizer::Pure(red_psi) => {
            let full = embed_frozen(params, part, red_psi)?;
            Optimizer::Pure(full)
        }
        _ => Optimizer::None,
    };
    Ok(FunctionalResult {
        value,
        representing_potentials: None,
        multipliers: None,
        optimizer,
        converged: inner.converged,
        residuals,
        cutoff_used: inner.cutoff_used,
    })
}

/// Embeds a reduced-model optimizer into the full basis: frozen spins become
/// tensor factors in their pinned σ_z eigenstate.
pub(crate) fn embed_frozen(
    params: &ModelParams,
    part: &FrozenPartition,
    red_psi: &WaveFunction,
) -> Result<WaveFunction> {
    let red_basis = red_psi.basis();
    let k = red_basis.fock_cutoff();
    let full_basis = build_basis_capped(params, &Truncation::new(k)?, DEFAULT_DIM_CAP)?;
    let n_full = params.n_spins();
    let mut frozen_bits = 0usize;
    for &(n, sign) in &part.frozen {
        if sign < 0.0 {
            frozen_bits |= 1usize << (n_full - 1 - n);
        }
    }
    let mut coeffs = DVector::zeros(full_basis.dim());
    for i_red in 0..red_basis.dim() {
        let c = red_psi.coeffs()[i_red];
        if c == 0.0 {
            continue;
        }
        let s_red = red_basis.spin_index(i_red);
        let mut s_full = frozen_bits;
        for (slot_red, &n) in part.free.iter().enumerate() {
            if s_red & red_basis.spin_bit(slot_red) != 0 {
                s_full |= 1usize << (n_full - 1 - n);
            }
        }
        let occ: Vec<usize> = (0..params.n_modes())
            .map(|m| red_basis.occupation(i_red, m))
            .collect();
        coeffs[full_basis.index(&occ, s_full)] = c;
    }
    WaveFunction::new(coeffs, full_basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{lieb_functional, zero_coupling_fll};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_coupling_search_matches_closed_form() {
        let p = ModelParams::rabi(0.0, 1.0).unwrap();
        let t = DensityPair::from_slices(&[0.35], &[0.4]).unwrap();
        let res = fll_constrained_search(&p, &t, 1e-6, 3).unwrap();
        let f0 = zero_coupling_fll(&p, &t).unwrap();
        assert_abs_diff_eq!(res.value, f0, epsilon = 1e-7);
        assert!(res.converged);
        // optimizer is real by construction and reproduces the target
        let psi = res.optimizer.pure().unwrap();
        let d = crate::functionals::density_pair(psi);
        assert_abs_diff_eq!(d.sigma[0], 0.35, epsilon = 1e-7);
        assert_abs_diff_eq!(d.xi[0], 0.4, epsilon = 1e-7);
    }

    #[test]
    fn zero_coupling_two_spins_two_modes() {
        let p = ModelParams::new(2, 2, &[&[0.0, 0.0], &[0.0, 0.0]], &[1.0, 0.6]).unwrap();
        let t = DensityPair::from_slices(&[0.5, -0.3], &[0.2, -0.7]).unwrap();
        let res = fll_constrained_search(&p, &t, 1e-6, 4).unwrap();
        let f0 = zero_coupling_fll(&p, &t).unwrap();
        assert_abs_diff_eq!(res.value, f0, epsilon = 1e-6);
    }

    #[test]
    fn rabi_search_matches_lieb() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        for (s, x) in [(0.2, 0.0), (-0.45, 0.3), (0.6, -0.2)] {
            let t = DensityPair::from_slices(&[s], &[x]).unwrap();
            let fll = fll_constrained_search(&p, &t, 1e-6, 5).unwrap();
            let fl = lieb_functional(&p, &t, 1e-8).unwrap();
            assert_abs_diff_eq!(fll.value, fl.value, epsilon = 1e-6);
        }
    }

    #[test]
    fn multiplier_recovery_gives_schrodinger_residual() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        let t = DensityPair::from_slices(&[0.3], &[0.1]).unwrap();
        let res = fll_constrained_search(&p, &t, 1e-8, 6).unwrap();
        let mult = res.multipliers.as_ref().unwrap();
        assert!(res.residuals["schrodinger"] <= 1e-7);
        // F_LL = E − v·σ − j·ξ
        let recon = mult.e - mult.v[0] * 0.3 - mult.j[0] * 0.1;
        assert_abs_diff_eq!(res.value, recon, epsilon = 1e-7);
    }

    #[test]
    fn boundary_sigma_plus_one_closed_form() {
        let p = ModelParams::rabi(1.3, 1.0).unwrap();
        for xi in [0.0, 0.4, -0.7] {
            let t = DensityPair::from_slices(&[1.0], &[xi]).unwrap();
            let res = fll_constrained_search(&p, &t, 1e-8, 7).unwrap();
            let lam = 1.3;
            assert_abs_diff_eq!(res.value, 1.0 + lam * xi + xi * xi, epsilon = 1e-9);
            assert!(res.representing_potentials.is_none());
            // optimizer is the shifted oscillator ground state in the + sector
            let psi = res.optimizer.pure().unwrap();
            let d = crate::functionals::density_pair(psi);
            assert_abs_diff_eq!(d.sigma[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.xi[0], xi, epsilon = 1e-8);
        }
    }

    #[test]
    fn partial_freeze_two_spins() {
        // one spin pinned, one free: value reduces to the free Rabi problem
        // plus the frozen drift term
        let p = ModelParams::new(2, 1, &[&[0.8, 0.5]], &[1.0, 1.0]).unwrap();
        let t = DensityPair::from_slices(&[1.0, 0.2], &[0.3]).unwrap();
        let res = fll_constrained_search(&p, &t, 1e-7, 8).unwrap();
        let reduced = ModelParams::rabi(0.5, 1.0).unwrap();
        let rt = DensityPair::from_slices(&[0.2], &[0.3]).unwrap();
        let inner = fll_constrained_search(&reduced, &rt, 1e-7, 8).unwrap();
        let drift_term = 0.8 * 0.3;
        assert_abs_diff_eq!(res.value, inner.value + drift_term, epsilon = 1e-7);
        let psi = res.optimizer.pure().unwrap();
        let d = crate::functionals::density_pair(psi);
        assert_abs_diff_eq!(d.sigma[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.sigma[1], 0.2, epsilon = 1e-6);
    }

    #[test]
    fn sign_flip_symmetry_rabi() {
        let p = ModelParams::rabi(0.9, 1.0).unwrap();
        let t = DensityPair::from_slices(&[0.37], &[0.21]).unwrap();
        let a = fll_constrained_search(&p, &t, 1e-7, 9).unwrap();
        let b = fll_constrained_search(&p, &t.flipped(), 1e-7, 9).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-7);
    }

    #[test]
    fn al_without_polish_still_lands_near_closed_form() {
        // keeps the first-order searcher honest as its own route
        let p = ModelParams::rabi(0.0, 1.0).unwrap();
        let t = DensityPair::from_slices(&[0.25], &[0.15]).unwrap();
        let opts = SearchOptions {
            polish: false,
            tol: 1e-6,
            seed: 10,
            ..SearchOptions::default()
        };
        let res = fll_constrained_search_opts(&p, &t, &opts).unwrap();
        let f0 = zero_coupling_fll(&p, &t).unwrap();
        assert!((res.value - f0).abs() < 2e-5, "AL value {} vs {}", res.value, f0);
        assert!(res.residuals["al_constraint"] <= 1e-8);
    }

    #[test]
    fn coupling_concavity_along_scaling() {
        // s ↦ F_LL at fixed density is midpoint-concave along s·Λ
        let p = ModelParams::rabi(1.2, 1.0).unwrap();
        let t = DensityPair::from_slices(&[0.3], &[0.0]).unwrap();
        let f = |s: f64| {
            fll_constrained_search(&p.scaled_coupling(s), &t, 1e-7, 11)
                .unwrap()
                .value
        };
        for (a, b) in [(0.0, 1.0), (0.3, 0.9), (0.5, 1.0)] {
            let mid = f(0.5 * (a + b));
            assert!(mid >= 0.5 * (f(a) + f(b)) - 1e-7);
        }
    }
}
