//! The KMS boundary condition, time invariance and continuity moduli of
//! finite-volume Gibbs states, and the transfer of shift moduli from `Λ_1` to
//! larger chains.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{eigenfunctions_at, GridSpec};
use crate::chain::{ChainSpec, LabeledOperator, LocalTerms, Site};
use crate::dynamics::EvolutionPlan;
use crate::error::{Error, Result};
use crate::gibbs::{trace_product, truncation_budget, GibbsState, ProductMultiplier};
use crate::kernel::{continuity_modulus, log_mehler, shift_amplification};
use crate::linalg::{hermitian_function, kron, rotate_real, to_complex, C64, I};

/// `F_{Q,R}(z) = ψ(Q α_z(R))` for a Gibbs state, evaluated from the spectral
/// formula `Z⁻¹ Σ_{m,n} e^{−βE_m} Q_mn R_nm e^{iz(E_n−E_m)}`.
#[derive(Debug, Clone)]
pub struct KmsFunction {
    pub beta: f64,
    energies: Array1<f64>,
    /// `E_0 − E_m ≤ 0`
    gaps: Array1<f64>,
    /// `log(e^{−βE_0}/Z)`
    log_ground: f64,
    /// `Q̃_mn R̃_nm`
    product: Array2<C64>,
}

impl KmsFunction {
    pub fn new(state: &GibbsState<f64>, q: &LabeledOperator<C64>, r: &LabeledOperator<C64>) -> Result<Self> {
        let v = &state.spectral.eigenvectors;
        let lift = |a: &LabeledOperator<C64>| -> Result<Array2<C64>> {
            if a.site_dim() != state.site_dim {
                return Err(Error::SupportMismatch("site dimensions differ".into()));
            }
            Ok(rotate_real(v, &a.embed(&state.support)?.into_matrix()))
        };
        let qt = lift(q)?;
        let rt = lift(r)?;
        let product = &qt * &rt.t();
        let energies = state.spectral.eigenvalues.clone();
        let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        let gaps = energies.mapv(|e| e0 - e);
        Ok(Self { beta: state.beta, energies, gaps, log_ground: -state.beta * e0 - state.log_z, product })
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        let y = z.im;
        let slack = 1e-12 * self.beta.max(1.0);
        if y < -slack || y > self.beta + slack {
            return Err(Error::OutOfStrip { im: y, beta: self.beta });
        }
        let y = y.clamp(0.0, self.beta);
        let x = z.re;
        let u: Array1<C64> = Array1::from_shape_fn(self.energies.len(), |m| {
            (C64::new((self.beta - y) * self.gaps[m], -x * self.energies[m])).exp()
        });
        let v: Array1<C64> =
            Array1::from_shape_fn(self.energies.len(), |n| (C64::new(y * self.gaps[n], x * self.energies[n])).exp());
        let inner = self.product.dot(&v);
        let s: C64 = u.iter().zip(inner.iter()).map(|(a, b)| a * b).sum();
        Ok(s * self.log_ground.exp())
    }
}

/// Convenience wrapper around [`KmsFunction`].
pub fn kms_function(state: &GibbsState<f64>, q: &LabeledOperator<C64>, r: &LabeledOperator<C64>, z: C64) -> Result<C64> {
    KmsFunction::new(state, q, r)?.eval(z)
}

/// `ψ(A)` for an operator on the state's support.
fn expect_full(rho: &Array2<C64>, a: &Array2<C64>) -> C64 {
    trace_product(rho, a)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryRow {
    pub t: f64,
    /// `F(t)`
    pub value: C64,
    /// `|F(t+iβ) − ψ(α_t(R)Q)|`
    pub boundary: f64,
    /// `|F(t) − ψ(Qα_t(R))|`
    pub real_axis: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    /// `max_t |F(t+iβ) − ψ(α_t(R)Q)|`
    pub boundary_residual: f64,
    /// `max_t |F(t) − ψ(Qα_t(R))|`
    pub real_axis_residual: f64,
    pub rows: Vec<BoundaryRow>,
}

/// Compares the continued spectral formula with the direct evaluation of
/// `ψ(α_t(R)Q)` through Heisenberg evolution.
pub fn boundary_check(
    state: &GibbsState<f64>,
    plan: &EvolutionPlan,
    q: &LabeledOperator<C64>,
    r: &LabeledOperator<C64>,
    t_grid: &[f64],
) -> Result<BoundaryReport> {
    let f = KmsFunction::new(state, q, r)?;
    let rho = to_complex(&state.rho());
    let qm = q.embed(&state.support)?.into_matrix();
    // ψ(α_t(R)Q) = Tr(Qρ α_t(R)) and ψ(Qα_t(R)) = Tr(ρQ α_t(R))
    let q_rho = qm.dot(&rho);
    let rho_q = rho.dot(&qm);
    let evolved = plan.heisenberg_at(r, t_grid)?;
    let rows: Vec<BoundaryRow> = t_grid
        .iter()
        .zip(&evolved)
        .map(|(&t, rt)| -> Result<BoundaryRow> {
            let top = trace_product(&q_rho, rt);
            let bottom = trace_product(&rho_q, rt);
            let ft = f.eval(C64::new(t, state.beta))?;
            let f0 = f.eval(C64::new(t, 0.0))?;
            Ok(BoundaryRow { t, value: f0, boundary: (ft - top).norm(), real_axis: (f0 - bottom).norm() })
        })
        .collect::<Result<_>>()?;
    Ok(BoundaryReport {
        boundary_residual: rows.iter().map(|r| r.boundary).fold(0.0, f64::max),
        real_axis_residual: rows.iter().map(|r| r.real_axis).fold(0.0, f64::max),
        rows,
    })
}

/// `max_t |Tr(ρ α_t(Q)) − Tr(ρ Q)|` for an arbitrary density `ρ`.
pub fn invariance_residual(rho: &Array2<C64>, plan: &EvolutionPlan, q: &LabeledOperator<C64>, t_grid: &[f64]) -> Result<f64> {
    let q0 = expect_full(rho, &q.embed(plan.h.support())?.into_matrix());
    let evolved = plan.heisenberg_at(q, t_grid)?;
    Ok(evolved.iter().map(|qt| (expect_full(rho, qt) - q0).norm()).fold(0.0, f64::max))
}

/// Invariance of the Gibbs state under its own dynamics over the plan's grid.
pub fn invariance_check(state: &GibbsState<f64>, plan: &EvolutionPlan, q: &LabeledOperator<C64>) -> Result<f64> {
    invariance_residual(&to_complex(&state.rho()), plan, q, &plan.t_grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusPoint {
    pub delta: f64,
    pub modulus: f64,
}

/// `ω(δ) = max_{|t|≤δ} |ψ(Qα_t(R)) − ψ(QR)|` for `δ = t_max/2^k`, `k = 0..levels`.
pub fn continuity_scan(f: &KmsFunction, t_max: f64, samples: usize, levels: usize) -> Result<Vec<ModulusPoint>> {
    let f0 = f.eval(C64::new(0.0, 0.0))?;
    let ts: Vec<f64> = (-(samples as i64)..=samples as i64).map(|k| t_max * k as f64 / samples as f64).collect();
    let vals: Vec<(f64, f64)> = ts.iter().map(|&t| Ok((t, (f.eval(C64::new(t, 0.0))? - f0).norm()))).collect::<Result<_>>()?;
    Ok((0..levels)
        .map(|k| {
            let delta = t_max / 2f64.powi(k as i32);
            let modulus = vals.iter().filter(|(t, _)| t.abs() <= delta + 1e-15).map(|v| v.1).fold(0.0, f64::max);
            ModulusPoint { delta, modulus }
        })
        .collect())
}

/// Largest `|∂_y F − i ∂_x F|` over interior points, by fourth-order central
/// differences with step `h`.
pub fn cauchy_riemann_residual(f: &KmsFunction, points: &[C64], h: f64) -> Result<f64> {
    let d = |z: C64, dir: C64| -> Result<C64> {
        let e = |k: f64| f.eval(z + dir * (k * h));
        Ok((e(-2.0)? - e(2.0)? * 1.0 + (e(1.0)? - e(-1.0)?) * 8.0) / (12.0 * h))
    };
    let mut worst = 0.0f64;
    for &z in points {
        let dx = d(z, C64::new(1.0, 0.0))?;
        let dy = d(z, I)?;
        worst = worst.max((dy - I * dx).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct StripReport {
    pub interior_max: f64,
    pub boundary_max: f64,
}

/// `max |F|` on interior lines against the two boundary lines, on a shared
/// set of real parts.
pub fn strip_maximum(f: &KmsFunction, xs: &[f64], lines: usize) -> Result<StripReport> {
    let mut interior_max = 0.0f64;
    let mut boundary_max = 0.0f64;
    for &x in xs {
        boundary_max = boundary_max.max(f.eval(C64::new(x, 0.0))?.norm()).max(f.eval(C64::new(x, f.beta))?.norm());
        for k in 1..lines {
            let y = f.beta * k as f64 / lines as f64;
            interior_max = interior_max.max(f.eval(C64::new(x, y))?.norm());
        }
    }
    Ok(StripReport { interior_max, boundary_max })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityRow {
    pub delta: f64,
    /// `max_{|t|≤δ} |ψ_L(Q W₀(t)) − ψ_L(Q)|` for the inner and outer chain
    pub modulus_inner: f64,
    pub modulus_outer: f64,
    /// `max_{|t|≤δ} ∫ν₁ |r_h(t) − 1|`
    pub structure: f64,
    /// `max_{|t|≤δ} ∫ν₁ r_h(t)`
    pub mass: f64,
    /// `(β/2) c(Ãδ)`
    pub shift_envelope: f64,
    pub bound_inner: f64,
    pub bound_outer: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub beta: f64,
    pub phi_sup: f64,
    pub a_tilde: f64,
    pub transfer_factor: f64,
    pub tau: f64,
    /// `ψ₁(Q)` from the matrix state and from the kernel quadrature.
    pub psi_inner: f64,
    pub psi_inner_quadrature: f64,
    pub rows: Vec<RegularityRow>,
    pub c_small: f64,
    pub c_large: f64,
    pub passed: bool,
}

/// Settings for [`regularity_transfer`].
#[derive(Debug, Clone, Serialize)]
pub struct RegularitySettings {
    pub t_max: f64,
    pub samples: usize,
    pub grid: GridSpec,
    pub trotter_steps: Vec<usize>,
}

impl Default for RegularitySettings {
    fn default() -> Self {
        Self { t_max: 0.2, samples: 20, grid: GridSpec::new(-7.0, 7.0, 64).expect("valid grid"), trotter_steps: vec![16, 32, 64] }
    }
}

/// Moduli of `t ↦ ψ_L(Q e^{itp₀})` for the inner chain `Λ_1` and an outer
/// chain, with `Q` a positive multiplication operator on `Λ_1 = {0, 1}`.
///
/// With `ν₁(x,y) = K₁(x,y)² Q(x)` and `K₁` the normalised kernel of
/// `e^{−βH₁/2}`, the shift ratio bound and the pointwise kernel sandwich give
/// `m_L(δ) ≤ e^{4β‖φ‖∞}[∫ν₁|r_h − 1| + (e^{(β/2)c(Ãδ)} − 1)∫ν₁ r_h]`
/// where `r_h` is the Mehler ratio at `β/2` on site 0.
pub fn regularity_transfer(
    chain: &ChainSpec,
    terms: &LocalTerms,
    inner: &GibbsState<f64>,
    outer: &GibbsState<f64>,
    q: &ProductMultiplier,
    settings: &RegularitySettings,
) -> Result<RegularityReport> {
    let pair: [Site; 2] = [0, 1];
    if q.sites != pair || inner.support != pair {
        return Err(Error::SupportMismatch("regularity transfer works on Λ_1 = {0, 1}".into()));
    }
    let beta = chain.beta;
    let omega = chain.omega;
    let d = chain.site_dim;
    let half = beta / 2.0;

    // W₀(t) on the reduced densities of Λ_1
    let rho_in = to_complex(&inner.reduced_density(&pair)?);
    let rho_out = to_complex(&outer.reduced_density(&pair)?);
    let qc = to_complex(q.operator(terms)?.matrix());
    let ts: Vec<f64> = (-(settings.samples as i64)..=settings.samples as i64)
        .map(|k| settings.t_max * k as f64 / settings.samples as f64)
        .collect();
    let shift = |t: f64| -> Result<Array2<C64>> {
        let local = hermitian_function(&terms.momentum, |p| (I * (t * p)).exp())?;
        Ok(kron(&local, &Array2::<C64>::eye(d)))
    };
    let mut f_in = Vec::with_capacity(ts.len());
    let mut f_out = Vec::with_capacity(ts.len());
    for &t in &ts {
        let qw = qc.dot(&shift(t)?);
        f_in.push(trace_product(&rho_in, &qw));
        f_out.push(trace_product(&rho_out, &qw));
    }
    let zero = settings.samples;

    // ν₁ marginal on (x₀, y₀)
    let grid = &settings.grid;
    let nodes = grid.nodes();
    let weights = grid.weights();
    let g = nodes.len();
    let psi = eigenfunctions_at(&chain.basis(), nodes.as_slice().expect("contiguous"));
    let phi2 = kron(&psi, &psi).dot(&inner.spectral.eigenvectors);
    let scale = inner.spectral.eigenvalues.mapv(|e| (-half * e - inner.log_z / 2.0).exp());
    let scaled = &phi2 * &scale.view().insert_axis(Axis(0));
    let qgrid = Array2::from_shape_fn((g, g), |(a, b)| q.factors[0].eval(nodes[a]) * q.factors[1].eval(nodes[b]));
    let nu: Vec<Array1<f64>> = (0..g)
        .into_par_iter()
        .map(|i0| {
            let rows = scaled.slice(ndarray::s![i0 * g..(i0 + 1) * g, ..]);
            let k = rows.dot(&phi2.t());
            // ν(x₀, y₀) = Σ_{x₁,y₁} w w K² Q
            Array1::from_shape_fn(g, |j0| {
                let mut s = 0.0;
                for i1 in 0..g {
                    let mut inner_sum = 0.0;
                    for j1 in 0..g {
                        let kv = k[[i1, j0 * g + j1]];
                        inner_sum += weights[j1] * kv * kv;
                    }
                    s += weights[i1] * qgrid[[i0, i1]] * inner_sum;
                }
                s
            })
        })
        .collect();
    let mut psi_quad = 0.0;
    for i0 in 0..g {
        for j0 in 0..g {
            psi_quad += weights[i0] * weights[j0] * nu[i0][j0];
        }
    }
    let structure_at = |t: f64| -> (f64, f64) {
        let mut s = 0.0;
        let mut m = 0.0;
        for i0 in 0..g {
            for j0 in 0..g {
                let w = weights[i0] * weights[j0] * nu[i0][j0];
                let r = (log_mehler(half, omega, nodes[i0] + t, nodes[j0]) - log_mehler(half, omega, nodes[i0], nodes[j0])).exp();
                s += w * (r - 1.0).abs();
                m += w * r;
            }
        }
        (s, m)
    };
    let per_t: Vec<(f64, f64)> = ts.iter().map(|&t| structure_at(t)).collect();

    let phi_sup = chain.phi.sup_norm();
    let transfer_factor = (4.0 * beta * phi_sup).exp();
    let a_tilde = shift_amplification(omega, half, &settings.trotter_steps);
    let tau = truncation_budget(beta, omega, d, outer.support.len());
    let psi_inner = f_in[zero].re;
    let psi_outer = f_out[zero].re;

    let mut rows = Vec::new();
    for k in 1..=settings.samples {
        let delta = settings.t_max * k as f64 / settings.samples as f64;
        let within: Vec<usize> = (0..ts.len()).filter(|&i| ts[i].abs() <= delta + 1e-15).collect();
        let modulus = |f: &[C64]| within.iter().map(|&i| (f[i] - f[zero]).norm()).fold(0.0, f64::max);
        let modulus_inner = modulus(&f_in);
        let modulus_outer = modulus(&f_out);
        let structure = within.iter().map(|&i| per_t[i].0).fold(0.0, f64::max);
        let mass = within.iter().map(|&i| per_t[i].1).fold(0.0, f64::max);
        let shift_envelope = half * continuity_modulus(&chain.v, &chain.phi, a_tilde * delta);
        let core = structure + shift_envelope.exp_m1() * mass;
        let bound_inner = core + tau * psi_inner;
        let bound_outer = transfer_factor * core + tau * psi_outer;
        let passed = modulus_inner <= bound_inner && modulus_outer <= bound_outer;
        rows.push(RegularityRow {
            delta,
            modulus_inner,
            modulus_outer,
            structure,
            mass,
            shift_envelope,
            bound_inner,
            bound_outer,
            passed,
        });
    }
    let c_small = continuity_modulus(&chain.v, &chain.phi, 0.01);
    let c_large = continuity_modulus(&chain.v, &chain.phi, 0.1);
    let c_zero = continuity_modulus(&chain.v, &chain.phi, 0.0);
    let passed = rows.iter().all(|r| r.passed) && c_zero == 0.0 && c_small < c_large;
    Ok(RegularityReport {
        beta,
        phi_sup,
        a_tilde,
        transfer_factor,
        tau,
        psi_inner,
        psi_inner_quadrature: psi_quad,
        rows,
        c_small,
        c_large,
        passed,
    })
}
