//! Adiabatic connection along the coupling strength.
//!
//! The functional at full coupling is rebuilt from the zero-coupling closed
//! form by integrating the coupling derivative over s ∈ [0,1], where ψ_s is
//! a real optimizer of the constrained search at coupling sΛ and ξ = 0:
//!
//! ```text
//! F^Λ(σ,ξ) = M + |ξ|² − Σ_n t_n√(1−σ_n²) + ξ·Λσ + G^Λ(σ),
//! G^Λ(σ)   = ∫₀¹ ⟨ψ_s, x·Λσ_z ψ_s⟩ ds
//!          = ¼|Λσ|² − ∫₀¹ [ (s/2)‖Λσ_z ψ_s‖² + ⟨t·σ_x ψ_s, ∇·Λ(σ_z−σ) ψ_s⟩ ] ds.
//! ```
//!
//! The two integrand forms are tied together node-by-node by the coupling
//! identity of real optimizers, so integrating both and differencing is a
//! strong end-to-end residual ([`ac_consistency`]).
//!
//! Quadrature is Gauss–Legendre with node doubling until the value settles.
//! Node optimizers come from the inverse map (ground states) for the
//! single-spin single-mode model and from the constrained search otherwise,
//! warm-started along s in the default chained mode.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::functionals::{
    fll_constrained_search_opts, force_balance_j, zero_coupling_fll, DensityPair, SearchOptions,
};
use crate::model::{ModelParams, OperatorSet, Potentials, WaveFunction};
use crate::spectral;

/// Default quadrature tolerance.
pub const DEFAULT_QUAD_TOL: f64 = 1e-6;

/// Starting Gauss–Legendre node count; doubled until converged.
pub const STARTING_NODES: usize = 16;

const MAX_NODES: usize = 256;

/// Record of one adiabatic-connection integration.
#[derive(Debug, Clone)]
pub struct AdiabaticTrace {
    /// Quadrature nodes in (0,1), ascending.
    pub s_nodes: Vec<f64>,
    /// Coupling-derivative integrand ⟨x·Λσ_z⟩ at each node.
    pub integrand_values: Vec<f64>,
    /// Per-node defect of the scaled virial relation.
    pub virial_residuals: Vec<f64>,
    /// Optimizers ψ_s, one per node.
    pub optimizers: Vec<WaveFunction>,
    /// G^Λ(σ) from the explicit (norm + tunneling) integrand form.
    pub g_value: f64,
    /// F^Λ(σ,ξ) reconstructed from the zero-coupling closed form plus G.
    pub f_reconstructed: f64,
    /// |route A − route B| over the final node set.
    pub route_residual: f64,
    /// Set when an adjacent-node integrand jump exceeds 10× the local
    /// variation (possible optimizer non-uniqueness along s).
    pub jump_flag: bool,
}

/// Options for node optimizer computation.
#[derive(Debug, Clone)]
pub struct AcOptions {
    /// Chain warm starts along s (sequential nodes). Off makes nodes
    /// independent.
    pub chain_warm_starts: bool,
    /// Constrained-search seed for the general-model path.
    pub seed: u64,
    /// Fock cutoff override for all nodes.
    pub cutoff: Option<usize>,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            chain_warm_starts: true,
            seed: 0,
            cutoff: None,
        }
    }
}

struct NodeContext {
    params: ModelParams,
    sigma: DVector<f64>,
    basis: std::sync::Arc<crate::model::TruncatedBasis>,
    warm_v: Option<DVector<f64>>,
    warm_psi: Option<DVector<f64>>,
    opts: AcOptions,
}

impl NodeContext {
    fn new(params: &ModelParams, sigma: &DVector<f64>, opts: &AcOptions) -> Result<Self> {
        // size the cutoff for the strongest coupling (s = 1)
        let target = DensityPair::new(sigma.clone(), DVector::zeros(params.n_modes()))?;
        let j = force_balance_j(params, &target);
        let probe = Potentials {
            v: vec![0.0; params.n_spins()],
            j: j.iter().copied().collect(),
        };
        let k = opts
            .cutoff
            .unwrap_or_else(|| spectral::default_start_cutoff(params, &probe).max(16) + 8);
        let basis = spectral::basis_at(params, k)?;
        Ok(NodeContext {
            params: params.clone(),
            sigma: sigma.clone(),
            basis,
            warm_v: None,
            warm_psi: None,
            opts: opts.clone(),
        })
    }

    fn reset(&mut self) {
        self.warm_v = None;
        self.warm_psi = None;
    }

    /// Real optimizer of the constrained search at coupling sΛ, ξ = 0.
    fn optimizer(&mut self, s: f64) -> Result<WaveFunction> {
        let params_s = self.params.scaled_coupling(s);
        let target = DensityPair::new(self.sigma.clone(), DVector::zeros(self.params.n_modes()))?;
        if self.params.n_spins() == 1 && self.params.n_modes() == 1 {
            // unique ground-state route
            let opts = crate::functionals::InverseOptions {
                tol: 1e-10,
                v_init: if self.opts.chain_warm_starts {
                    self.warm_v.clone()
                } else {
                    None
                },
                cutoff: Some(self.basis.fock_cutoff()),
                ..crate::functionals::InverseOptions::default()
            };
            let inv = crate::functionals::inverse_map(&params_s, &target, &opts)?;
            if self.opts.chain_warm_starts {
                self.warm_v = Some(inv.multipliers.v.clone());
            }
            // re-solve on this context's basis so all nodes share one cutoff
            let spec = spectral::ground_at_cutoff(&params_s, &inv.potentials, &self.basis, 1)?;
            Ok(spec.ground_state().clone())
        } else {
            let mut search = SearchOptions {
                tol: 1e-8,
                seed: self.opts.seed,
                cutoff: Some(self.basis.fock_cutoff()),
                ..SearchOptions::default()
            };
            if self.opts.chain_warm_starts {
                search.initial_state = self.warm_psi.clone();
            }
            let res = fll_constrained_search_opts(&params_s, &target, &search)?;
            let psi = res
                .optimizer
                .pure()
                .ok_or_else(|| Error::Solver {
                    what: "adiabatic node optimizer".into(),
                    residual: f64::NAN,
                })?
                .clone();
            if psi.basis().dim() != self.basis.dim() {
                return Err(Error::Solver {
                    what: "adiabatic node basis mismatch".into(),
                    residual: f64::NAN,
                });
            }
            if self.opts.chain_warm_starts {
                self.warm_psi = Some(psi.coeffs().clone());
            }
            Ok(psi)
        }
    }
}

struct NodeEval {
    integrand_a: f64,
    integrand_b: f64,
    virial: f64,
}

/// Both integrand forms and the virial defect at one node.
fn evaluate_node(
    params: &ModelParams,
    ops: &OperatorSet,
    sigma: &DVector<f64>,
    s: f64,
    psi: &WaveFunction,
) -> NodeEval {
    let p = psi.coeffs();
    let m_modes = params.n_modes();
    let lam_sigma = params.coupling_times_sigma(sigma);

    // (Λσ_z)_m ψ per mode
    let mut coupled: Vec<DVector<f64>> = Vec::with_capacity(m_modes);
    for m in 0..m_modes {
        let mut acc = DVector::zeros(p.len());
        for n in 0..params.n_spins() {
            let lam = params.coupling()[(m, n)];
            if lam != 0.0 {
                acc += ops.spin_z[n].apply(p) * lam;
            }
        }
        coupled.push(acc);
    }

    let mut integrand_a = 0.0;
    let mut norm2 = 0.0;
    for (x_op, coup) in ops.position.iter().zip(&coupled) {
        integrand_a += x_op.apply(p).dot(coup);
        norm2 += coup.norm_squared();
    }

    // tunneling term ⟨t·σ_x ψ, Σ_m ∂_m (Λ(σ_z − σ))_m ψ⟩
    let mut t_psi = DVector::zeros(p.len());
    for n in 0..params.n_spins() {
        t_psi += ops.spin_x[n].apply(p) * params.tunneling()[n];
    }
    let mut k_term = 0.0;
    for m in 0..m_modes {
        let shifted = &coupled[m] - p * lam_sigma[m];
        k_term += t_psi.dot(&ops.derivative[m].apply(&shifted));
    }

    // route B integrand: the (s/2)|Λσ|² part is integrated analytically into
    // the ¼|Λσ|² constant, leaving −(s/2)‖Λσ_zψ‖² − K(s)
    let integrand_b = -0.5 * s * norm2 - k_term;

    // scaled virial at the node: ‖∇ψ‖² − ‖xψ‖² = (s/2)⟨x·Λσ_z⟩
    let mut kinetic = 0.0;
    let mut potential = 0.0;
    for m in 0..m_modes {
        kinetic += ops.derivative[m].apply(p).norm_squared();
        potential += ops.position[m].apply(p).norm_squared();
    }
    let virial = (kinetic - potential - 0.5 * s * integrand_a).abs();

    NodeEval {
        integrand_a,
        integrand_b,
        virial,
    }
}

/// Gauss–Legendre nodes and weights on [0,1].
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton from the Chebyshev-type initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // map [−1,1] → [0,1]
    for x in nodes.iter_mut() {
        *x = 0.5 * (*x + 1.0);
    }
    for w in weights.iter_mut() {
        *w *= 0.5;
    }
    (nodes, weights)
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0f64;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Coupling-derivative integrand ⟨ψ_s, x·Λσ_z ψ_s⟩ at one coupling fraction.
pub fn ac_integrand(
    params: &ModelParams,
    sigma: &DVector<f64>,
    s: f64,
    opts: &AcOptions,
) -> Result<f64> {
    let mut ctx = NodeContext::new(params, sigma, opts)?;
    let psi = ctx.optimizer(s)?;
    let ops = OperatorSet::build(params, &ctx.basis);
    Ok(evaluate_node(params, &ops, sigma, s, &psi).integrand_a)
}

/// Integrates the adiabatic connection and reconstructs F^Λ(σ,ξ).
pub fn g_lambda(
    params: &ModelParams,
    sigma: &DVector<f64>,
    xi: &DVector<f64>,
    quad_tol: f64,
    opts: &AcOptions,
) -> Result<AdiabaticTrace> {
    integrate(params, sigma, xi, quad_tol, opts)
}

/// Absolute difference between the direct-derivative and explicit-form
/// integration routes.
pub fn ac_consistency(
    params: &ModelParams,
    sigma: &DVector<f64>,
    quad_tol: f64,
    opts: &AcOptions,
) -> Result<f64> {
    let xi = DVector::zeros(params.n_modes());
    let trace = integrate(params, sigma, &xi, quad_tol, opts)?;
    Ok(trace.route_residual)
}

fn integrate(
    params: &ModelParams,
    sigma: &DVector<f64>,
    xi: &DVector<f64>,
    quad_tol: f64,
    opts: &AcOptions,
) -> Result<AdiabaticTrace> {
    if quad_tol.is_nan() || quad_tol <= 0.0 {
        return Err(Error::Domain("quadrature tolerance must be positive".into()));
    }
    let mut ctx = NodeContext::new(params, sigma, opts)?;
    let ops = OperatorSet::build(params, &ctx.basis);
    let lam_sigma = params.coupling_times_sigma(sigma);
    let zero_params = params.scaled_coupling(0.0);
    let target0 = DensityPair::new(sigma.clone(), DVector::zeros(params.n_modes()))?;
    let f0 = zero_coupling_fll(&zero_params, &target0)?;

    let mut n = STARTING_NODES;
    let mut prev: Option<(f64, f64)> = None;
    loop {
        let (nodes, weights) = gauss_legendre_unit(n);
        let mut integrand_values = Vec::with_capacity(n);
        let mut virials = Vec::with_capacity(n);
        let mut optimizers = Vec::with_capacity(n);
        let mut int_a = 0.0;
        let mut int_b = 0.0;
        ctx.reset();
        for (&s, &w) in nodes.iter().zip(&weights) {
            let psi = ctx.optimizer(s)?;
            let eval = evaluate_node(params, &ops, sigma, s, &psi);
            int_a += w * eval.integrand_a;
            int_b += w * eval.integrand_b;
            integrand_values.push(eval.integrand_a);
            virials.push(eval.virial);
            optimizers.push(psi);
        }
        let g_a = int_a;
        let g_b = 0.25 * lam_sigma.norm_squared() + int_b;
        if let Some((pa, pb)) = prev {
            if (g_a - pa).abs() < quad_tol && (g_b - pb).abs() < quad_tol {
                let g_value = g_b;
                let f_reconstructed = f0 + xi.norm_squared() + xi.dot(&lam_sigma) + g_value;
                return Ok(AdiabaticTrace {
                    jump_flag: has_jump(&integrand_values),
                    s_nodes: nodes,
                    integrand_values,
                    virial_residuals: virials,
                    optimizers,
                    g_value,
                    f_reconstructed,
                    route_residual: (g_a - g_b).abs(),
                });
            }
        }
        prev = Some((g_a, g_b));
        n *= 2;
        if n > MAX_NODES {
            return Err(Error::Convergence {
                what: "adiabatic quadrature refinement".into(),
                best: prev.map(|(a, _)| a).unwrap_or(f64::NAN),
                err_estimate: quad_tol,
            });
        }
    }
}

fn has_jump(values: &[f64]) -> bool {
    if values.len() < 4 {
        return false;
    }
    let mut diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = diffs[diffs.len() / 2];
    let worst = diffs[diffs.len() - 1];
    worst > 10.0 * median + 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{fll_constrained_search, lieb_functional};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(8);
        // ∫₀¹ x^k dx = 1/(k+1), exact through degree 15
        for k in 0..=15usize {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            assert_abs_diff_eq!(got, 1.0 / (k as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn integrand_vanishes_at_zero_coupling_fraction() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.4]);
        let v = ac_integrand(&p, &sigma, 0.0, &AcOptions::default()).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn integrand_nonpositive_at_symmetric_point() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.0]);
        for s in [0.25, 0.5, 1.0] {
            let v = ac_integrand(&p, &sigma, s, &AcOptions::default()).unwrap();
            assert!(v <= 1e-10, "integrand {v} at s={s}");
        }
    }

    #[test]
    fn zero_coupling_trace_is_trivial() {
        let p = ModelParams::rabi(0.0, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.3]);
        let xi = DVector::from_vec(vec![0.2]);
        let trace = g_lambda(&p, &sigma, &xi, 1e-8, &AcOptions::default()).unwrap();
        assert_abs_diff_eq!(trace.g_value, 0.0, epsilon = 1e-10);
        let t = DensityPair::new(sigma, xi).unwrap();
        let f0 = zero_coupling_fll(&p, &t).unwrap();
        assert_abs_diff_eq!(trace.f_reconstructed, f0, epsilon = 1e-10);
        assert_abs_diff_eq!(trace.route_residual, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn reconstruction_matches_direct_functional() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.3]);
        let xi = DVector::from_vec(vec![0.25]);
        let trace = g_lambda(&p, &sigma, &xi, 1e-7, &AcOptions::default()).unwrap();
        let t = DensityPair::new(sigma, xi).unwrap();
        let fll = fll_constrained_search(&p, &t, 1e-7, 2).unwrap();
        assert_abs_diff_eq!(trace.f_reconstructed, fll.value, epsilon = 1e-5);
        assert!(
            trace.route_residual <= 2e-7,
            "routes differ by {}",
            trace.route_residual
        );
        assert!(!trace.jump_flag);
    }

    #[test]
    fn symmetric_point_cross_check_against_lieb() {
        // G(0) must equal F(0,0) − (1 − t)
        let t_tun = 1.0;
        let p = ModelParams::rabi(0.8, t_tun).unwrap();
        let sigma = DVector::from_vec(vec![0.0]);
        let xi = DVector::zeros(1);
        let trace = g_lambda(&p, &sigma, &xi, 1e-7, &AcOptions::default()).unwrap();
        let f = lieb_functional(
            &p,
            &DensityPair::from_slices(&[0.0], &[0.0]).unwrap(),
            1e-9,
        )
        .unwrap()
        .value;
        assert_abs_diff_eq!(trace.g_value, f - (1.0 - t_tun), epsilon = 1e-6);
    }

    #[test]
    fn node_virials_hold_and_integrand_monotone() {
        let p = ModelParams::rabi(1.0, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.5]);
        let xi = DVector::zeros(1);
        let trace = g_lambda(&p, &sigma, &xi, 1e-6, &AcOptions::default()).unwrap();
        for r in &trace.virial_residuals {
            assert!(*r <= 1e-6, "virial residual {r}");
        }
        // supergradients of a concave function are non-increasing in s
        for w in trace.integrand_values.windows(2) {
            assert!(w[1] <= w[0] + 1e-7);
        }
    }

    #[test]
    fn g_independent_of_xi() {
        let p = ModelParams::rabi(0.9, 1.0).unwrap();
        let sigma = DVector::from_vec(vec![0.35]);
        let lam_sigma = p.coupling_times_sigma(&sigma);
        let g_est = |xi_val: f64| {
            let t = DensityPair::from_slices(&[0.35], &[xi_val]).unwrap();
            let f = fll_constrained_search(&p, &t, 1e-8, 3).unwrap().value;
            let f0 = 1.0 + xi_val * xi_val - (1.0f64 - 0.35 * 0.35).sqrt();
            f - f0 - xi_val * lam_sigma[0]
        };
        let a = g_est(0.0);
        let b = g_est(0.4);
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        let trace = g_lambda(&p, &sigma, &DVector::zeros(1), 1e-7, &AcOptions::default()).unwrap();
        assert_abs_diff_eq!(trace.g_value, a, epsilon = 1e-5);
    }

    #[test]
    fn consistency_for_two_spin_model() {
        let p = ModelParams::new(2, 1, &[&[0.6, 0.4]], &[1.0, 0.8]).unwrap();
        let sigma = DVector::from_vec(vec![0.3, -0.2]);
        let r = ac_consistency(&p, &sigma, 1e-5, &AcOptions::default()).unwrap();
        assert!(r <= 2e-5, "two-spin route residual {r}");
    }
}
