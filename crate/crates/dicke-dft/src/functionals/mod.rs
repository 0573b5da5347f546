//! Universal density functionals over the pair (σ, ξ).
//!
//! The density variables are the magnetization σ_n = ⟨σ_z^n⟩ and the
//! displacement ξ_m = ⟨x_m⟩. Two functionals are evaluated:
//!
//! * `F_LL` — pure-state constrained search: the minimum of ⟨ψ,H₀ψ⟩ over
//!   normalized states with the prescribed density pair
//!   ([`fll_constrained_search`]).
//! * `F_L` — the mixed-state relaxation, computed through Legendre duality
//!   as `E(v*,j*) − v*·σ − j*·ξ` at the representing potentials
//!   ([`lieb_functional`]).
//!
//! The photonic potential is fixed analytically by force balance,
//! `j = −(Λσ + 2ξ)`, leaving a concave N-dimensional dual problem for `v`.
//! Ground-state degeneracies are resolved into convex mixtures by
//! [`ensemble_fit`].

mod search;

pub use search::{
    fll_constrained_search, fll_constrained_search_opts, recover_multipliers, SearchOptions,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    build_basis_capped, OperatorSet, ModelParams, Potentials, Truncation, TruncatedBasis,
    WaveFunction, DEFAULT_DIM_CAP,
};
use crate::spectral::{
    self, converge_cutoff, eigensolve, ground_degeneracy, SpectralResult,
};

/// Slack allowed on |σ_n| ≤ 1 for incoming targets.
pub const SIGMA_SLACK: f64 = 1e-12;

/// Components with |σ_n| ≥ 1 − ε are treated as boundary (not v-representable).
pub const BOUNDARY_EPS: f64 = 1e-6;

/// Coherent-state tail mass allowed to fall outside the truncated basis.
pub const TAIL_LIMIT: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// The density pair (σ, ξ): magnetization in [−1,1]^N, displacement in ℝ^M.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub sigma: DVector<f64>,
    pub xi: DVector<f64>,
}

impl DensityPair {
    pub fn new(sigma: DVector<f64>, xi: DVector<f64>) -> Result<Self> {
        for (n, &s) in sigma.iter().enumerate() {
            if s.is_nan() || s.abs() > 1.0 + SIGMA_SLACK {
                return Err(Error::Domain(format!(
                    "sigma[{n}] = {s} outside [-1,1]"
                )));
            }
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("displacement must be finite".into()));
        }
        Ok(DensityPair { sigma, xi })
    }

    pub fn from_slices(sigma: &[f64], xi: &[f64]) -> Result<Self> {
        DensityPair::new(
            DVector::from_column_slice(sigma),
            DVector::from_column_slice(xi),
        )
    }

    pub fn n_spins(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_modes(&self) -> usize {
        self.xi.len()
    }

    /// Euclidean distance in the joint (σ, ξ) space.
    pub fn distance(&self, other: &DensityPair) -> f64 {
        let ds = (&self.sigma - &other.sigma).norm_squared();
        let dx = (&self.xi - &other.xi).norm_squared();
        (ds + dx).sqrt()
    }

    /// Sign-flipped pair (−σ, −ξ).
    pub fn flipped(&self) -> DensityPair {
        DensityPair {
            sigma: -&self.sigma,
            xi: -&self.xi,
        }
    }
}

/// Lagrange multipliers (E, v, j) of a constrained-search optimizer.
#[derive(Debug, Clone)]
pub struct Multipliers {
    pub e: f64,
    pub v: DVector<f64>,
    pub j: DVector<f64>,
}

impl Multipliers {
    pub fn potentials(&self) -> Potentials {
        Potentials {
            v: self.v.iter().copied().collect(),
            j: self.j.iter().copied().collect(),
        }
    }
}

/// Convex mixture of orthonormal states.
#[derive(Debug, Clone)]
pub struct Ensemble {
    weights: Vec<f64>,
    states: Vec<WaveFunction>,
}

impl Ensemble {
    pub fn new(weights: Vec<f64>, states: Vec<WaveFunction>) -> Result<Self> {
        if weights.len() != states.len() || weights.is_empty() {
            return Err(Error::Config("ensemble weights/states mismatch".into()));
        }
        if weights.iter().any(|&w| w < -1e-14) {
            return Err(Error::Domain("ensemble weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "ensemble weights sum to {total}, not 1"
            )));
        }
        for a in 0..states.len() {
            for b in a + 1..states.len() {
                if states[a].overlap(&states[b]).abs() > 1e-10 {
                    return Err(Error::Domain("ensemble states are not orthonormal".into()));
                }
            }
        }
        Ok(Ensemble { weights, states })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn states(&self) -> &[WaveFunction] {
        &self.states
    }

    pub fn density_pair(&self, ops: &OperatorSet) -> DensityPair {
        let n = ops.spin_z.len();
        let m = ops.position.len();
        let mut sigma = DVector::zeros(n);
        let mut xi = DVector::zeros(m);
        for (w, st) in self.weights.iter().zip(&self.states) {
            sigma += ops.sigma_of(st.coeffs()) * *w;
            xi += ops.xi_of(st.coeffs()) * *w;
        }
        DensityPair { sigma, xi }
    }

    /// Weighted internal energy Tr(H₀ Γ).
    pub fn internal_energy(&self, ops: &OperatorSet) -> f64 {
        self.weights
            .iter()
            .zip(&self.states)
            .map(|(w, st)| w * st.expectation(&ops.h0))
            .sum()
    }
}

/// Optimizer attached to a functional value.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Pure(WaveFunction),
    Ensemble(Ensemble),
    None,
}

impl Optimizer {
    pub fn pure(&self) -> Option<&WaveFunction> {
        match self {
            Optimizer::Pure(w) => Some(w),
            _ => None,
        }
    }
}

/// Value of F_LL or F_L together with everything recovered along the way.
#[derive(Debug, Clone)]
pub struct FunctionalResult {
    pub value: f64,
    pub representing_potentials: Option<Potentials>,
    pub multipliers: Option<Multipliers>,
    pub optimizer: Optimizer,
    pub converged: bool,
    /// Named residuals (Schrödinger, constraint, force-balance, …).
    pub residuals: BTreeMap<String, f64>,
    pub cutoff_used: usize,
}

// ---------------------------------------------------------------------------
// Densities and closed forms
// ---------------------------------------------------------------------------

/// Density pair of a normalized state.
pub fn density_pair(psi: &WaveFunction) -> DensityPair {
    let basis = psi.basis();
    let n = basis.n_spins();
    let m = basis.n_modes();
    let sigma = DVector::from_fn(n, |slot, _| {
        psi.coeffs()
            .iter()
            .enumerate()
            .map(|(i, &c)| c * c * basis.spin_z(basis.spin_index(i), slot))
            .sum()
    });
    let mut xi = DVector::zeros(m);
    for mode in 0..m {
        let x = crate::model::position(basis, mode);
        xi[mode] = x.expectation(psi.coeffs());
    }
    DensityPair { sigma, xi }
}

/// Density pair via a prebuilt operator set (hot loops).
pub fn density_pair_with(ops: &OperatorSet, psi: &DVector<f64>) -> DensityPair {
    DensityPair {
        sigma: ops.sigma_of(psi),
        xi: ops.xi_of(psi),
    }
}

/// Closed form of the zero-coupling functional:
/// `F⁰(σ, ξ) = M + |ξ|² − Σ_n t_n √(1 − σ_n²)`.
pub fn zero_coupling_fll(params: &ModelParams, target: &DensityPair) -> Result<f64> {
    if params.coupling().iter().any(|&c| c != 0.0) {
        return Err(Error::Domain(
            "zero_coupling_fll requires a vanishing coupling matrix".into(),
        ));
    }
    check_shapes(params, target)?;
    let mut tunneling_gain = 0.0;
    for n in 0..params.n_spins() {
        let s = target.sigma[n];
        if s.abs() > 1.0 + SIGMA_SLACK {
            return Err(Error::Domain(format!("sigma[{n}] outside [-1,1]")));
        }
        tunneling_gain += params.tunneling()[n] * (1.0 - s * s).max(0.0).sqrt();
    }
    Ok(params.n_modes() as f64 + target.xi.norm_squared() - tunneling_gain)
}

fn check_shapes(params: &ModelParams, target: &DensityPair) -> Result<()> {
    if target.n_spins() != params.n_spins() || target.n_modes() != params.n_modes() {
        return Err(Error::Config("density pair shape mismatch".into()));
    }
    Ok(())
}

/// Displaced-Gaussian ⊗ product-spin state with the prescribed density pair:
/// coherent states centered at ξ_m per mode, spin factors
/// (√((1+σ_n)/2), √((1−σ_n)/2)). Errors when the coherent tail does not fit
/// the cutoff.
pub fn trial_state(target: &DensityPair, basis: &Arc<TruncatedBasis>) -> Result<WaveFunction> {
    if target.n_spins() != basis.n_spins() || target.n_modes() != basis.n_modes() {
        return Err(Error::Config("density pair does not match basis".into()));
    }
    let k = basis.fock_cutoff();

    // per-mode coherent amplitudes in the Fock basis
    let mut kept_mass = 1.0f64;
    let mut photon: Vec<Vec<f64>> = Vec::with_capacity(basis.n_modes());
    for m in 0..basis.n_modes() {
        let beta = target.xi[m] / 2.0f64.sqrt();
        let mut c = vec![0.0f64; k];
        c[0] = (-beta * beta / 2.0).exp();
        for n in 1..k {
            c[n] = c[n - 1] * beta / (n as f64).sqrt();
        }
        let mass: f64 = c.iter().map(|x| x * x).sum();
        kept_mass *= mass;
        photon.push(c);
    }
    let tail = 1.0 - kept_mass;
    if tail > TAIL_LIMIT {
        return Err(Error::Truncation {
            tail_mass: tail,
            limit: TAIL_LIMIT,
        });
    }

    let n_spins = basis.n_spins();
    let spin_dim = basis.spin_dim();
    let mut spin = vec![1.0f64; spin_dim];
    for (s, amp) in spin.iter_mut().enumerate() {
        for n in 0..n_spins {
            let sigma = target.sigma[n].clamp(-1.0, 1.0);
            let factor = if s & basis.spin_bit(n) == 0 {
                ((1.0 + sigma) / 2.0).sqrt()
            } else {
                ((1.0 - sigma) / 2.0).sqrt()
            };
            *amp *= factor;
        }
    }

    let mut coeffs = DVector::zeros(basis.dim());
    for i in 0..basis.dim() {
        let mut amp = spin[basis.spin_index(i)];
        if amp == 0.0 {
            continue;
        }
        for m in 0..basis.n_modes() {
            amp *= photon[m][basis.occupation(i, m)];
        }
        coeffs[i] = amp;
    }
    WaveFunction::from_unnormalized(coeffs, Arc::clone(basis))
}

// ---------------------------------------------------------------------------
// Ground-state energy map
// ---------------------------------------------------------------------------

/// Converged ground energy of H(v,j) with the ground-state density pair.
pub fn energy(
    params: &ModelParams,
    pots: &Potentials,
    tol: f64,
) -> Result<(f64, DensityPair, SpectralResult)> {
    let spec = spectral::converged_ground(params, pots, tol, 2)?;
    let pair = density_pair(spec.ground_state());
    Ok((spec.ground_energy(), pair, spec))
}

// ---------------------------------------------------------------------------
// Inverse map (σ, ξ) → (v, j)
// ---------------------------------------------------------------------------

/// Options controlling the potential solve.
#[derive(Debug, Clone)]
pub struct InverseOptions {
    /// |σ_n| ≥ 1 − boundary_eps is rejected as non-representable.
    pub boundary_eps: f64,
    /// Magnetization tolerance for the v-solve.
    pub tol: f64,
    pub max_iter: usize,
    /// Warm start for v.
    pub v_init: Option<DVector<f64>>,
    /// Fock cutoff to start from (sized automatically when None).
    pub cutoff: Option<usize>,
}

impl Default for InverseOptions {
    fn default() -> Self {
        InverseOptions {
            boundary_eps: BOUNDARY_EPS,
            tol: 1e-8,
            max_iter: 200,
            v_init: None,
            cutoff: None,
        }
    }
}

/// Representing potentials for a density pair, with the solved spectrum.
#[derive(Debug, Clone)]
pub struct InverseSolution {
    pub potentials: Potentials,
    pub multipliers: Multipliers,
    pub spectrum: SpectralResult,
    pub achieved: DensityPair,
    pub cutoff_used: usize,
    /// ‖σ(v) − σ_target‖_∞ at exit.
    pub sigma_error: f64,
}

/// j is fixed analytically by force balance, `j = −(Λσ + 2ξ)`; v is solved so
/// that the ground state of H(v,j) reproduces σ. Monotone bracketing for
/// N = 1, damped Newton with a concave dual-ascent fallback for N > 1.
pub fn inverse_map(
    params: &ModelParams,
    target: &DensityPair,
    opts: &InverseOptions,
) -> Result<InverseSolution> {
    check_shapes(params, target)?;
    for (n, &s) in target.sigma.iter().enumerate() {
        if s.abs() >= 1.0 - opts.boundary_eps {
            return Err(Error::Boundary { index: n });
        }
    }
    let j_vec = force_balance_j(params, target);
    let j_pots: Vec<f64> = j_vec.iter().copied().collect();

    let mut cutoff = opts.cutoff.unwrap_or_else(|| {
        let probe = Potentials {
            v: vec![0.0; params.n_spins()],
            j: j_pots.clone(),
        };
        spectral::default_start_cutoff(params, &probe).max(10)
    });

    let mut v_guess = opts.v_init.clone();
    for _escalation in 0..5 {
        let basis = build_basis_capped(params, &Truncation::new(cutoff)?, DEFAULT_DIM_CAP)?;
        let v = solve_v(params, target, &j_pots, &basis, opts, v_guess.as_ref())?;

        // verify on a grown cutoff; the verified solve is the one returned
        let bigger = ((cutoff as f64 * 1.5).ceil() as usize).max(cutoff + 1);
        let basis_big = build_basis_capped(params, &Truncation::new(bigger)?, DEFAULT_DIM_CAP)?;
        let pots = Potentials {
            v: v.iter().copied().collect(),
            j: j_pots.clone(),
        };
        let spec = spectral::ground_at_cutoff(params, &pots, &basis_big, 2)?;
        let achieved = density_pair(spec.ground_state());
        let sigma_error = (&achieved.sigma - &target.sigma).amax();
        if sigma_error <= 10.0 * opts.tol {
            let multipliers = Multipliers {
                e: spec.ground_energy(),
                v: v.clone(),
                j: j_vec.clone(),
            };
            return Ok(InverseSolution {
                potentials: pots,
                multipliers,
                spectrum: spec,
                achieved,
                cutoff_used: bigger,
                sigma_error,
            });
        }
        v_guess = Some(v);
        cutoff = bigger;
    }
    Err(Error::Convergence {
        what: "inverse_map cutoff escalation".into(),
        best: 0.0,
        err_estimate: f64::NAN,
    })
}

/// The force-balance value j = −(Λσ + 2ξ).
pub fn force_balance_j(params: &ModelParams, target: &DensityPair) -> DVector<f64> {
    -(params.coupling_times_sigma(&target.sigma) + &target.xi * 2.0)
}

fn sigma_at(
    params: &ModelParams,
    v: &DVector<f64>,
    j: &[f64],
    basis: &Arc<TruncatedBasis>,
) -> Result<(DVector<f64>, SpectralResult)> {
    let pots = Potentials {
        v: v.iter().copied().collect(),
        j: j.to_vec(),
    };
    let spec = spectral::ground_at_cutoff(params, &pots, basis, 2)?;
    Ok((density_pair(spec.ground_state()).sigma, spec))
}

fn solve_v(
    params: &ModelParams,
    target: &DensityPair,
    j: &[f64],
    basis: &Arc<TruncatedBasis>,
    opts: &InverseOptions,
    v_init: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    if params.n_spins() == 1 {
        solve_v_bracketed(params, target, j, basis, opts)
    } else {
        solve_v_newton(params, target, j, basis, opts, v_init)
    }
}

/// σ(v) is non-increasing (E is concave in v), so the scalar case brackets
/// and closes in with an Illinois-style false-position iteration.
fn solve_v_bracketed(
    params: &ModelParams,
    target: &DensityPair,
    j: &[f64],
    basis: &Arc<TruncatedBasis>,
    opts: &InverseOptions,
) -> Result<DVector<f64>> {
    let want = target.sigma[0];
    let f = |v: f64| -> Result<f64> {
        let (s, _) = sigma_at(params, &DVector::from_element(1, v), j, basis)?;
        Ok(s[0] - want)
    };
    let mut lo = -1.0f64;
    let mut hi = 1.0f64;
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    let mut grow = 0;
    while flo < 0.0 && grow < 60 {
        lo *= 2.0;
        flo = f(lo)?;
        grow += 1;
    }
    while fhi > 0.0 && grow < 120 {
        hi *= 2.0;
        fhi = f(hi)?;
        grow += 1;
    }
    if flo < 0.0 || fhi > 0.0 {
        return Err(Error::Convergence {
            what: "inverse_map bracket".into(),
            best: 0.0,
            err_estimate: flo.abs().min(fhi.abs()),
        });
    }
    let mut side = 0i32;
    for _ in 0..opts.max_iter {
        let mid = if (fhi - flo).abs() > 1e-300 {
            (lo * fhi - hi * flo) / (fhi - flo)
        } else {
            0.5 * (lo + hi)
        };
        let mid = if mid.is_finite() && mid > lo && mid < hi {
            mid
        } else {
            0.5 * (lo + hi)
        };
        let fm = f(mid)?;
        if fm.abs() <= opts.tol || (hi - lo).abs() < 1e-15 * (1.0 + hi.abs()) {
            return Ok(DVector::from_element(1, mid));
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            hi = mid;
            fhi = fm;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::Convergence {
        what: "inverse_map scalar solve".into(),
        best: 0.5 * (lo + hi),
        err_estimate: flo.abs().min(fhi.abs()),
    })
}

fn solve_v_newton(
    params: &ModelParams,
    target: &DensityPair,
    j: &[f64],
    basis: &Arc<TruncatedBasis>,
    opts: &InverseOptions,
    v_init: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let n = params.n_spins();
    let mut v = v_init.cloned().unwrap_or_else(|| DVector::zeros(n));
    let (mut sigma, _) = sigma_at(params, &v, j, basis)?;
    let mut residual = &sigma - &target.sigma;
    let mut stagnations = 0usize;
    for iter in 0..opts.max_iter {
        let err = residual.amax();
        if err <= opts.tol {
            return Ok(v);
        }
        // finite-difference Jacobian ∂σ/∂v
        let h = 1e-5;
        let mut jac = DMatrix::zeros(n, n);
        for b in 0..n {
            let mut vp = v.clone();
            vp[b] += h;
            let (sp, _) = sigma_at(params, &vp, j, basis)?;
            for a in 0..n {
                jac[(a, b)] = (sp[a] - sigma[a]) / h;
            }
        }
        let step = jac
            .clone()
            .lu()
            .solve(&residual)
            .unwrap_or_else(|| residual.clone());

        let mut alpha = 1.0f64;
        let mut improved = false;
        for _ in 0..10 {
            let v_try = &v - &step * alpha;
            let (s_try, _) = sigma_at(params, &v_try, j, basis)?;
            let r_try = &s_try - &target.sigma;
            if r_try.amax() < err {
                v = v_try;
                sigma = s_try;
                residual = r_try;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            // supergradient ascent on the concave dual v ↦ E(v,j) − v·σ
            let eta = 0.5 / (1.0 + iter as f64).sqrt();
            let v_try = &v - &residual * eta; // −residual is the ascent direction on −g
            let (s_try, _) = sigma_at(params, &v_try, j, basis)?;
            let r_try = &s_try - &target.sigma;
            if r_try.amax() < err {
                v = v_try;
                sigma = s_try;
                residual = r_try;
                stagnations = 0;
            } else {
                stagnations += 1;
                if stagnations >= 3 {
                    return Err(Error::Convergence {
                        what: "inverse_map newton stagnation".into(),
                        best: v[0],
                        err_estimate: err,
                    });
                }
                v = v_try;
                sigma = s_try;
                residual = r_try;
            }
        }
    }
    Err(Error::Convergence {
        what: "inverse_map newton".into(),
        best: v[0],
        err_estimate: residual.amax(),
    })
}

// ---------------------------------------------------------------------------
// Lieb functional
// ---------------------------------------------------------------------------

/// F_L(σ,ξ) = E(v*,j*) − v*·σ − j*·ξ at the representing potentials.
///
/// Boundary magnetizations return the limiting value with no representing
/// potentials. When the representing ground space is degenerate, the
/// optimizer is the fitted ensemble; when the target is not reachable by a
/// ground state (irregular σ), a concave dual ascent still produces the
/// value, with the ensemble fitted in the degenerate ground space.
pub fn lieb_functional(
    params: &ModelParams,
    target: &DensityPair,
    tol: f64,
) -> Result<FunctionalResult> {
    check_shapes(params, target)?;
    if target
        .sigma
        .iter()
        .any(|&s| s.abs() >= 1.0 - BOUNDARY_EPS)
    {
        return boundary_limit_value(params, target);
    }

    let opts = InverseOptions {
        tol: tol.min(1e-8),
        ..InverseOptions::default()
    };
    match inverse_map(params, target, &opts) {
        Ok(inv) => {
            let value = inv.multipliers.e
                - inv.multipliers.v.dot(&target.sigma)
                - inv.multipliers.j.dot(&target.xi);
            let mut residuals = BTreeMap::new();
            residuals.insert("gap".into(), inv.spectrum.gap);
            residuals.insert("schrodinger".into(), inv.spectrum.residual);
            residuals.insert("sigma_error".into(), inv.sigma_error);
            let fb = (&inv.multipliers.j
                + params.coupling_times_sigma(&inv.achieved.sigma)
                + &inv.achieved.xi * 2.0)
                .norm();
            residuals.insert("force_balance".into(), fb);

            let basis = Arc::clone(inv.spectrum.ground_state().basis());
            let ops = OperatorSet::build(params, &basis);
            let tol_deg = inv.spectrum.default_degeneracy_tol();
            let optimizer = if inv.spectrum.degenerate_flag {
                match ensemble_fit(&inv.spectrum, target, &ops, tol_deg, 1e-6) {
                    Ok(ens) => Optimizer::Ensemble(ens),
                    Err(_) => Optimizer::Pure(inv.spectrum.ground_state().clone()),
                }
            } else {
                Optimizer::Pure(inv.spectrum.ground_state().clone())
            };
            Ok(FunctionalResult {
                value,
                representing_potentials: Some(inv.potentials.clone()),
                multipliers: Some(inv.multipliers),
                optimizer,
                converged: true,
                residuals,
                cutoff_used: inv.cutoff_used,
            })
        }
        Err(Error::Convergence { .. }) => dual_ascent_value(params, target, tol),
        Err(e) => Err(e),
    }
}

/// Limiting value at boundary magnetizations: spins with |σ_n| = 1 decouple
/// into frozen σ_z eigenstates, shifting the photon drift; the remaining
/// model is evaluated recursively.
fn boundary_limit_value(params: &ModelParams, target: &DensityPair) -> Result<FunctionalResult> {
    let value = search::frozen_value(params, target, BOUNDARY_EPS)?;
    let mut residuals = BTreeMap::new();
    residuals.insert("non_representable".into(), 1.0);
    Ok(FunctionalResult {
        value,
        representing_potentials: None,
        multipliers: None,
        optimizer: Optimizer::None,
        converged: true,
        residuals,
        cutoff_used: 0,
    })
}

/// Maximizes the concave dual v ↦ E(v, j*) − v·σ with diminishing
/// supergradient steps; exact when no ground state hits the target.
fn dual_ascent_value(
    params: &ModelParams,
    target: &DensityPair,
    tol: f64,
) -> Result<FunctionalResult> {
    let j_vec = force_balance_j(params, target);
    let j: Vec<f64> = j_vec.iter().copied().collect();
    let probe = Potentials {
        v: vec![0.0; params.n_spins()],
        j: j.clone(),
    };
    let cutoff = spectral::default_start_cutoff(params, &probe).max(12);
    let basis = build_basis_capped(params, &Truncation::new(cutoff)?, DEFAULT_DIM_CAP)?;

    let mut v = DVector::zeros(params.n_spins());
    let mut best_g = f64::NEG_INFINITY;
    let mut best_v = v.clone();
    let mut best_spec: Option<SpectralResult> = None;
    for k in 0..400 {
        let pots = Potentials {
            v: v.iter().copied().collect(),
            j: j.clone(),
        };
        let spec = spectral::ground_at_cutoff(params, &pots, &basis, 3)?;
        let sigma = density_pair(spec.ground_state()).sigma;
        let g = spec.ground_energy() - v.dot(&target.sigma);
        if g > best_g {
            best_g = g;
            best_v = v.clone();
            best_spec = Some(spec.clone());
        }
        let grad = &sigma - &target.sigma;
        if grad.amax() <= tol {
            break;
        }
        let eta = 0.5 / (1.0 + k as f64).sqrt();
        v += grad * eta; // ascent: ∂g/∂v = σ(v) − σ_target
    }
    let spec = best_spec.expect("at least one dual iterate");
    let value = best_g - j_vec.dot(&target.xi);
    let ops = OperatorSet::build(params, &basis);
    let tol_deg = spec.default_degeneracy_tol().max(1e-7 * (1.0 + spec.ground_energy().abs()));
    let d = ground_degeneracy(&spec, tol_deg);
    let (optimizer, hull_dist) = if d >= 2 {
        match ensemble_fit(&spec, target, &ops, tol_deg, 1e-6) {
            Ok(ens) => {
                let dist = ens.density_pair(&ops).distance(target);
                (Optimizer::Ensemble(ens), dist)
            }
            Err(Error::Infeasible { distance }) => {
                (Optimizer::Pure(spec.ground_state().clone()), distance)
            }
            Err(e) => return Err(e),
        }
    } else {
        let dist = density_pair(spec.ground_state()).distance(target);
        (Optimizer::Pure(spec.ground_state().clone()), dist)
    };
    let mut residuals = BTreeMap::new();
    residuals.insert("schrodinger".into(), spec.residual);
    residuals.insert("target_distance".into(), hull_dist);
    Ok(FunctionalResult {
        value,
        representing_potentials: Some(Potentials {
            v: best_v.iter().copied().collect(),
            j,
        }),
        multipliers: None,
        optimizer,
        converged: hull_dist <= 1e-5,
        residuals,
        cutoff_used: cutoff,
    })
}

// ---------------------------------------------------------------------------
// Ensembles over degenerate ground spaces
// ---------------------------------------------------------------------------

/// Fits a convex mixture over a (possibly rotated) orthonormal basis of the
/// degenerate ground space so its density pair hits `target`.
pub fn ensemble_fit(
    spec: &SpectralResult,
    target: &DensityPair,
    ops: &OperatorSet,
    tol_deg: f64,
    tol: f64,
) -> Result<Ensemble> {
    let d = ground_degeneracy(spec, tol_deg);
    let states: Vec<WaveFunction> = spec.eigenvectors[..d].to_vec();
    if d == 1 {
        let own = density_pair_with(ops, states[0].coeffs());
        let dist = own.distance(target);
        if dist > tol {
            return Err(Error::Infeasible { distance: dist });
        }
        return Ensemble::new(vec![1.0], states);
    }

    // candidate orthonormal families: the eigenbasis itself plus plane
    // rotations of each pair (rotations change the reachable pure densities)
    let mut best: Option<(f64, Vec<f64>, Vec<WaveFunction>)> = None;
    let mut consider = |family: &[WaveFunction]| {
        let pairs: Vec<DensityPair> = family
            .iter()
            .map(|st| density_pair_with(ops, st.coeffs()))
            .collect();
        let (weights, dist) = simplex_fit(&pairs, target);
        if best.as_ref().is_none_or(|(bd, _, _)| dist < *bd) {
            best = Some((dist, weights, family.to_vec()));
        }
    };

    consider(&states);
    let angles = 48usize;
    for a in 0..d {
        for b in a + 1..d {
            for k in 1..angles {
                let theta = std::f64::consts::PI * k as f64 / angles as f64;
                let (ca, sa) = (theta.cos(), theta.sin());
                let mut family = states.clone();
                let va = states[a].coeffs() * ca + states[b].coeffs() * sa;
                let vb = states[a].coeffs() * -sa + states[b].coeffs() * ca;
                family[a] = WaveFunction::new(va, Arc::clone(states[a].basis()))?;
                family[b] = WaveFunction::new(vb, Arc::clone(states[b].basis()))?;
                consider(&family);
            }
        }
    }

    let (dist, weights, family) = best.expect("at least one candidate family");
    if dist > tol {
        return Err(Error::Infeasible { distance: dist });
    }
    // drop negligible weights, keep deterministic order
    let mut w = Vec::new();
    let mut s = Vec::new();
    for (wi, st) in weights.iter().zip(family) {
        if *wi > 1e-12 {
            w.push(*wi);
            s.push(st);
        }
    }
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    Ensemble::new(w, s)
}

/// min_w ‖Σ w_i p_i − target‖ over the probability simplex (Frank–Wolfe with
/// exact line search; the problem is tiny).
fn simplex_fit(pairs: &[DensityPair], target: &DensityPair) -> (Vec<f64>, f64) {
    let d = pairs.len();
    let dim = target.sigma.len() + target.xi.len();
    let cols: Vec<DVector<f64>> = pairs
        .iter()
        .map(|p| {
            let mut v = DVector::zeros(dim);
            v.rows_mut(0, p.sigma.len()).copy_from(&p.sigma);
            v.rows_mut(p.sigma.len(), p.xi.len()).copy_from(&p.xi);
            v
        })
        .collect();
    let mut q = DVector::zeros(dim);
    q.rows_mut(0, target.sigma.len()).copy_from(&target.sigma);
    q.rows_mut(target.sigma.len(), target.xi.len())
        .copy_from(&target.xi);

    let mut w = vec![1.0 / d as f64; d];
    let current = |w: &[f64]| -> DVector<f64> {
        let mut acc = DVector::zeros(dim);
        for (wi, c) in w.iter().zip(&cols) {
            acc += c * *wi;
        }
        acc
    };
    let mut p = current(&w);
    for _ in 0..2000 {
        let r = &p - &q;
        if r.norm() < 1e-14 {
            break;
        }
        // vertex minimizing the linearized objective
        let mut best_i = 0;
        let mut best_val = f64::INFINITY;
        for (i, c) in cols.iter().enumerate() {
            let val = r.dot(c);
            if val < best_val {
                best_val = val;
                best_i = i;
            }
        }
        let dir = &cols[best_i] - &p;
        let denom = dir.norm_squared();
        if denom < 1e-30 {
            break;
        }
        let gamma = (-r.dot(&dir) / denom).clamp(0.0, 1.0);
        if gamma <= 1e-16 {
            break;
        }
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= 1.0 - gamma;
            if i == best_i {
                *wi += gamma;
            }
        }
        p = current(&w);
    }
    let dist = (&p - &q).norm();
    (w, dist)
}

// ---------------------------------------------------------------------------
// Gap and aufbau index
// ---------------------------------------------------------------------------

/// F_LL − F_L at a target; errors when it dips below −tol, which would
/// contradict the variational ordering.
pub fn fll_fl_gap(
    params: &ModelParams,
    target: &DensityPair,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    let fll = fll_constrained_search(params, target, tol, seed)?;
    let fl = lieb_functional(params, target, tol)?;
    let gap = fll.value - fl.value;
    if gap < -tol {
        return Err(Error::Solver {
            what: "fll_fl_gap ordering".into(),
            residual: -gap,
        });
    }
    Ok(gap)
}

/// Position of ψ* in the spectrum of H(v,j), identified by overlap > 0.99.
/// The constrained-search optimizer must appear within the lowest N+M+1
/// levels; anything deeper is reported as an identification failure.
pub fn aufbau_index(
    params: &ModelParams,
    multipliers: &Multipliers,
    psi_star: &WaveFunction,
) -> Result<usize> {
    let basis = psi_star.basis();
    let bound = params.n_spins() + params.n_modes();
    let k = (bound + 2).min(basis.dim());
    let h = crate::model::hamiltonian(params, &multipliers.potentials(), basis);
    let spec = eigensolve(&h, k)?;
    for (i, vec) in spec.eigenvectors.iter().enumerate() {
        if psi_star.overlap(vec).abs() > 0.99 {
            if i > bound {
                return Err(Error::Identification(format!(
                    "optimizer sits at eigenstate {i}, beyond the N+M bound {bound}"
                )));
            }
            return Ok(i);
        }
    }
    Err(Error::Identification(
        "optimizer overlaps no eigenvector above 0.99".into(),
    ))
}

/// Converged ground solve reused by scan drivers: density at given potentials.
pub fn ground_density(
    params: &ModelParams,
    pots: &Potentials,
    tol: f64,
) -> Result<(f64, DensityPair, SpectralResult)> {
    let spec = converge_cutoff(
        params,
        pots,
        Truncation::new(spectral::default_start_cutoff(params, pots).max(8))?,
        tol,
        2,
    )?;
    Ok((
        spec.ground_energy(),
        density_pair(spec.ground_state()),
        spec,
    ))
}
