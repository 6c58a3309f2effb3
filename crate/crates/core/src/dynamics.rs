//! Heisenberg evolution by cached spectral decompositions, the Dyson series
//! in the harmonic interaction picture, symplectic free evolution,
//! Lieb–Robinson curves and finite-volume convergence.

use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{
    hamiltonian_from, interaction_norm, lattice, lr_constant, lr_distance, normalize_sites, positions_in, ChainSpec,
    LabeledOperator, Site,
};
use crate::error::{Error, Result};
use crate::gibbs::SpectralDecomposition;
use crate::linalg::{apply_local_left, apply_local_right, gauss_legendre, legendre, max_abs, op_norm, op_norm_c, rotate_real, unrotate_real, C64, I};
use crate::resolvent::SymplecticVector;

/// A Hamiltonian with its eigendecomposition and a time grid.
#[derive(Debug, Clone)]
pub struct EvolutionPlan {
    pub h: LabeledOperator<f64>,
    pub spectral: Arc<SpectralDecomposition<f64>>,
    pub t_grid: Vec<f64>,
}

impl EvolutionPlan {
    pub fn new(h: LabeledOperator<f64>, t_grid: Vec<f64>) -> Result<Self> {
        let spectral = Arc::new(SpectralDecomposition::new(h.matrix())?);
        Ok(Self { h, spectral, t_grid })
    }

    pub fn with_spectral(h: LabeledOperator<f64>, spectral: Arc<SpectralDecomposition<f64>>, t_grid: Vec<f64>) -> Self {
        Self { h, spectral, t_grid }
    }

    /// `e^{itH}`.
    pub fn propagator(&self, t: f64) -> Array2<C64> {
        self.spectral.apply_function(|e| (I * (t * e)).exp())
    }

    /// `max_t ‖U(t)U(t)* − 1‖` over the grid (entrywise).
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.spectral.dim();
        let eye = Array2::<C64>::eye(n);
        self.t_grid
            .iter()
            .map(|&t| {
                let u = self.propagator(t);
                let uu = u.dot(&u.t().mapv(|z| z.conj()));
                max_abs(&(uu - &eye))
            })
            .fold(0.0, f64::max)
    }

    fn lift(&self, q: &LabeledOperator<C64>) -> Result<Array2<C64>> {
        if q.site_dim() != self.h.site_dim() {
            return Err(Error::SupportMismatch(format!(
                "site dimension {} vs {}",
                q.site_dim(),
                self.h.site_dim()
            )));
        }
        Ok(q.embed(self.h.support())?.into_matrix())
    }

    /// `α_t(Q) = e^{itH} Q e^{−itH}`; `Q` is embedded if its support is smaller.
    pub fn heisenberg(&self, t: f64, q: &LabeledOperator<C64>) -> Result<LabeledOperator<C64>> {
        let rotated = rotate_real(&self.spectral.eigenvectors, &self.lift(q)?);
        let out = unrotate_real(&self.spectral.eigenvectors, &self.phase(&rotated, t));
        LabeledOperator::new(self.h.support().to_vec(), self.h.site_dim(), out)
    }

    /// `α_t(Q)` for every grid time, sharing one basis change of `Q`.
    pub fn heisenberg_grid(&self, q: &LabeledOperator<C64>) -> Result<Vec<Array2<C64>>> {
        self.heisenberg_at(q, &self.t_grid)
    }

    /// `α_t(Q)` for each `t` in `times`.
    pub fn heisenberg_at(&self, q: &LabeledOperator<C64>, times: &[f64]) -> Result<Vec<Array2<C64>>> {
        let rotated = rotate_real(&self.spectral.eigenvectors, &self.lift(q)?);
        Ok(times
            .par_iter()
            .map(|&t| unrotate_real(&self.spectral.eigenvectors, &self.phase(&rotated, t)))
            .collect())
    }

    /// `B_jk ↦ B_jk e^{it(E_j − E_k)}`.
    fn phase(&self, b: &Array2<C64>, t: f64) -> Array2<C64> {
        let ph: Array1<C64> = self.spectral.eigenvalues.mapv(|e| (I * (t * e)).exp());
        let mut out = b.clone();
        Zip::indexed(&mut out).for_each(|(j, k), z| *z *= ph[j] * ph[k].conj());
        out
    }
}

/// `T_t f` with `Ψ(T_t f) = α^h_t(Ψ(f))`: per site,
/// `(a, b) ↦ (a cos 2ωt − ω b sin 2ωt, ω⁻¹ a sin 2ωt + b cos 2ωt)`
/// for `f_k = a + ib`.
pub fn free_symplectic(t: f64, omega: f64, f: &SymplecticVector) -> SymplecticVector {
    let (s, c) = (2.0 * omega * t).sin_cos();
    SymplecticVector {
        coefficients: f
            .coefficients
            .iter()
            .map(|(&k, z)| (k, C64::new(z.re * c - omega * z.im * s, z.re * s / omega + z.im * c)))
            .collect(),
    }
}

/// Truncated Dyson series of `U(t) = e^{itH}e^{−itH_h}` and its bounds.
#[derive(Debug, Clone)]
pub struct DysonResult {
    pub unitary: Array2<C64>,
    /// `Σ_{k>order} (|t|‖Υ‖)^k / k!`
    pub tail_bound: f64,
    /// Difference against the same series on a coarser rule.
    pub quadrature_estimate: f64,
}

pub const DYSON_NODES: usize = 32;
pub const DYSON_MAX_ORDER: usize = 6;
/// Largest admissible `|t| · (E_max − E_min) · order` for the collocation rule.
pub const DYSON_PHASE_BUDGET: f64 = 120.0;

/// `Σ_{k>n} x^k/k!`, summed directly so small values keep their precision.
pub fn exp_tail(x: f64, n: usize) -> f64 {
    let mut term = 1.0;
    for k in 1..=n {
        term *= x / k as f64;
    }
    let mut sum = 0.0;
    let mut k = n;
    loop {
        k += 1;
        term *= x / k as f64;
        sum += term;
        if term <= sum * 1e-17 || k > n + 400 {
            break;
        }
    }
    sum
}

/// Spectral integration on `[-1, 1]`: `S[j,k]` integrates the interpolant of
/// nodal values from −1 to node `j`.
fn integration_matrix(nodes: &[f64], weights: &[f64]) -> Array2<f64> {
    let n = nodes.len();
    let p: Vec<Vec<f64>> = nodes.iter().map(|&x| legendre(n, x)).collect();
    let mut s = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            let mut v = weights[k] * (nodes[j] + 1.0) / 2.0;
            for m in 1..n {
                v += weights[k] * p[k][m] * (p[j][m + 1] - p[j][m - 1]) / 2.0;
            }
            s[[j, k]] = v;
        }
    }
    s
}

fn dyson_collocation(energies: &Array1<f64>, y: &Array2<f64>, t: f64, order: usize, nodes: usize) -> Array2<C64> {
    let (x, w) = gauss_legendre(nodes);
    let smat = integration_matrix(&x, &w);
    let half = t / 2.0;
    let s: Vec<f64> = x.iter().map(|&xi| half * (xi + 1.0)).collect();
    let dim = energies.len();
    // Υ(s) = e^{isH_h} Υ e^{−isH_h} in the eigenbasis of H_h
    let ups: Vec<Array2<C64>> = s
        .iter()
        .map(|&sj| {
            let mut m = Array2::<C64>::zeros((dim, dim));
            Zip::indexed(&mut m).for_each(|(a, b), z| *z = (I * (sj * (energies[a] - energies[b]))).exp() * y[[a, b]]);
            m
        })
        .collect();
    let mut prev: Vec<Array2<C64>> = vec![Array2::<C64>::eye(dim); nodes];
    let mut total = Array2::<C64>::eye(dim);
    for _ in 0..order {
        let integrand: Vec<Array2<C64>> = prev.iter().zip(&ups).map(|(tp, u)| tp.dot(u)).collect();
        let mut end = Array2::<C64>::zeros((dim, dim));
        for (k, g) in integrand.iter().enumerate() {
            end.scaled_add(I * (half * w[k]), g);
        }
        total += &end;
        prev = (0..nodes)
            .map(|j| {
                let mut acc = Array2::<C64>::zeros((dim, dim));
                for (k, g) in integrand.iter().enumerate() {
                    acc.scaled_add(I * (half * smat[[j, k]]), g);
                }
                acc
            })
            .collect();
    }
    total
}

/// `U(t) ≈ 1 + Σ_{n=1}^{order} iⁿ ∫_{0<t_n<…<t_1<t} Υ(t_n)⋯Υ(t_1)`, ordered so
/// that `U' = iU α^h_t(Υ)`; the nested integrals are evaluated by Picard
/// iteration on Legendre–Gauss collocation nodes.
pub fn dyson_unitary(h_h: &Array2<f64>, upsilon: &Array2<f64>, t: f64, order: usize) -> Result<DysonResult> {
    if order == 0 || order > DYSON_MAX_ORDER {
        return Err(Error::InvalidParameter(format!("Dyson order {order} outside 1..={DYSON_MAX_ORDER}")));
    }
    let spec = SpectralDecomposition::new(h_h)?;
    let e = &spec.eigenvalues;
    let spread = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - e.iter().cloned().fold(f64::INFINITY, f64::min);
    if t.abs() * spread * order as f64 > DYSON_PHASE_BUDGET {
        return Err(Error::QuadratureBudgetExceeded(format!(
            "|t|·spread·order = {:.3} exceeds {DYSON_PHASE_BUDGET}",
            t.abs() * spread * order as f64
        )));
    }
    let v = &spec.eigenvectors;
    let y = v.t().dot(upsilon).dot(v);
    let fine = dyson_collocation(e, &y, t, order, DYSON_NODES);
    let coarse = dyson_collocation(e, &y, t, order, DYSON_NODES - 8);
    let quadrature_estimate = max_abs(&(&fine - &coarse));
    let unitary = unrotate_real(v, &fine);
    let tail_bound = exp_tail(t.abs() * op_norm(upsilon)?, order);
    Ok(DysonResult { unitary, tail_bound, quadrature_estimate })
}

/// `e^{itH} e^{−itH_h}` from the two spectral decompositions.
pub fn interaction_unitary(h: &Array2<f64>, h_h: &Array2<f64>, t: f64) -> Result<Array2<C64>> {
    let a = SpectralDecomposition::new(h)?.apply_function(|e| (I * (t * e)).exp());
    let b = SpectralDecomposition::new(h_h)?.apply_function(|e| (-I * (t * e)).exp());
    Ok(a.dot(&b))
}

#[derive(Debug, Clone, Serialize)]
pub struct LrPoint {
    pub t: f64,
    pub commutator: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LrReport {
    pub site_dim: usize,
    pub q_norm: f64,
    pub r_norm: f64,
    pub interaction_norm: f64,
    pub distance: f64,
    pub points: Vec<LrPoint>,
    /// `max g/envelope` over `t ≠ 0`.
    pub max_ratio: f64,
}

/// `(2‖Q‖‖R‖/C)(e^{2‖Φ‖_int C|t|} − 1) D(Γ₁,Γ₂)`.
pub fn lr_envelope(q_norm: f64, r_norm: f64, phi_int: f64, distance: f64, t: f64) -> f64 {
    let c = lr_constant();
    2.0 * q_norm * r_norm / c * (2.0 * phi_int * c * t.abs()).exp_m1() * distance
}

/// `g(t) = ‖[α^N_t(α^{free}_{−t}(Q)), R]‖` on the chain `Λ_N`, with `Q`
/// and `R` real, local and disjointly supported. Real data make `g` even in
/// `t`, so only `|t|` is evaluated.
pub fn lr_experiment(chain: &ChainSpec, q: &LabeledOperator<f64>, r: &LabeledOperator<f64>, t_grid: &[f64]) -> Result<LrReport> {
    let sites = chain.sites();
    let (g1, g2) = (q.support().to_vec(), r.support().to_vec());
    if positions_in(&g1, &sites).is_none() || positions_in(&g2, &sites).is_none() {
        return Err(Error::SupportMismatch(format!("{g1:?}, {g2:?} not inside Λ_{}", chain.l)));
    }
    let distance = lr_distance(&g1, &g2)?;
    chain.dim()?;
    let terms = chain.local_terms()?;
    let hams = hamiltonian_from(&terms, &sites)?;
    let plan = EvolutionPlan::new(hams.full, vec![])?;
    let local_free = hamiltonian_from(&terms, &g1)?.free;
    let free = EvolutionPlan::new(local_free, vec![])?;
    let qc = q.to_complex();
    let r_pos = positions_in(&g2, &sites).expect("checked above");
    let r_local = r.to_complex().into_matrix();
    let q_norm = q.norm()?;
    let r_norm = r.norm()?;
    let phi_int = interaction_norm(chain)?.operator;

    let mut abs_t: Vec<f64> = t_grid.iter().map(|t| t.abs()).collect();
    abs_t.sort_by(f64::total_cmp);
    abs_t.dedup();
    let values: Vec<(f64, f64)> = abs_t
        .par_iter()
        .map(|&t| -> Result<(f64, f64)> {
            if t == 0.0 {
                return Ok((t, 0.0));
            }
            let q_back = free.heisenberg(-t, &qc)?;
            let b = plan.heisenberg(t, &q_back)?.into_matrix();
            let (n, d) = (sites.len(), chain.site_dim);
            let comm = apply_local_right(&r_local, &r_pos, n, d, &b) - apply_local_left(&r_local, &r_pos, n, d, &b);
            Ok((t, op_norm_c(&comm)?))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(t_grid.len());
    let mut max_ratio = 0.0f64;
    for &t in t_grid {
        let g = values.iter().find(|(s, _)| *s == t.abs()).map(|v| v.1).unwrap_or(0.0);
        let envelope = lr_envelope(q_norm, r_norm, phi_int, distance, t);
        if t != 0.0 && envelope > 0.0 {
            max_ratio = max_ratio.max(g / envelope);
        }
        points.push(LrPoint { t, commutator: g, envelope });
    }
    Ok(LrReport { site_dim: chain.site_dim, q_norm, r_norm, interaction_norm: phi_int, distance, points, max_ratio })
}

/// Largest pointwise `|g_a(t) − g_b(t)|` between two curves on the same grid.
pub fn lr_drift(a: &LrReport, b: &LrReport) -> f64 {
    a.points.iter().zip(&b.points).map(|(p, q)| (p.commutator - q.commutator).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeRow {
    pub n: usize,
    pub n_outer: usize,
    pub delta: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VolumeReport {
    pub t: f64,
    pub l: usize,
    pub rows: Vec<VolumeRow>,
    pub envelope_decreasing: bool,
    pub delta_decreasing: bool,
    pub within_envelope: bool,
}

/// `Σ_{k∈Λ_L} Σ_{l∈Λ_{N'}∖Λ_N} 1/(1+|k−l|)²`.
pub fn volume_double_sum(l: usize, n: usize, n_outer: usize) -> f64 {
    let inner = lattice(l);
    let ring: Vec<Site> = lattice(n_outer).into_iter().filter(|s| !lattice(n).contains(s)).collect();
    inner.iter().flat_map(|k| ring.iter().map(move |m| 1.0 / (1.0 + (k - m).abs() as f64).powi(2))).sum()
}

/// `½T(1 + e^{½C‖φ‖∞T})‖Q‖ Σ Σ 1/(1+|k−l|)²`.
pub fn volume_envelope(t: f64, phi_sup: f64, q_norm: f64, l: usize, n: usize, n_outer: usize) -> f64 {
    let tt = t.abs();
    0.5 * tt * (1.0 + (0.5 * lr_constant() * phi_sup * tt).exp()) * q_norm * volume_double_sum(l, n, n_outer)
}

/// `δ(N, N+1) = ‖α^{N+1}_t(Q) − α^N_t(Q)‖` for consecutive volumes in `n_list`.
pub fn volume_convergence(chain: &ChainSpec, q: &LabeledOperator<f64>, t: f64, n_list: &[usize]) -> Result<VolumeReport> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let supp = normalize_sites(q.support());
    let l = supp.iter().map(|&s| if s > 0 { s as usize } else { (1 - s) as usize }).max().unwrap_or(1).max(1);
    if ns.first().map_or(true, |&n| n < l) {
        return Err(Error::InvalidParameter(format!("volumes {ns:?} must contain Λ_{l}")));
    }
    for &n in &ns {
        chain.with_l(n).dim()?;
    }
    let terms = chain.local_terms()?;
    let qc = q.to_complex();
    let evolved: Vec<LabeledOperator<C64>> = ns
        .iter()
        .map(|&n| {
            let plan = EvolutionPlan::new(hamiltonian_from(&terms, &lattice(n))?.full, vec![])?;
            plan.heisenberg(t, &qc)
        })
        .collect::<Result<_>>()?;
    let q_norm = q.norm()?;
    let phi_sup = chain.phi.sup_norm();
    let mut rows = Vec::new();
    for w in 0..ns.len().saturating_sub(1) {
        let small = evolved[w].embed(evolved[w + 1].support())?;
        let delta = op_norm(&(evolved[w + 1].matrix() - small.matrix()))?;
        rows.push(VolumeRow {
            n: ns[w],
            n_outer: ns[w + 1],
            delta,
            envelope: volume_envelope(t, phi_sup, q_norm, l, ns[w], ns[w + 1]),
        });
    }
    let envelope_decreasing = rows.windows(2).all(|w| w[1].envelope < w[0].envelope);
    let delta_decreasing = rows.windows(2).all(|w| w[1].delta <= w[0].delta);
    let within_envelope = rows.iter().all(|r| r.delta <= r.envelope);
    Ok(VolumeReport { t, l, rows, envelope_decreasing, delta_decreasing, within_envelope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PotentialSpec;
    use crate::chain::LocalTerms;
    use crate::linalg::{random_hermitian, to_complex};
    use crate::resolvent::{block_residual, field_operator};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(l: usize, d: usize, v: f64, phi: f64) -> ChainSpec {
        ChainSpec::new(
            l,
            d,
            1.0,
            PotentialSpec::gaussian(v, 0.0, 1.0).unwrap(),
            PotentialSpec::gaussian(phi, 0.0, 1.0).unwrap(),
            0.5,
        )
        .unwrap()
    }

    fn gaussian_on(terms: &LocalTerms, site: Site) -> LabeledOperator<f64> {
        LabeledOperator::new(vec![site], terms.site_dim, terms.quadrature.multiplication(|x| (-x * x).exp())).unwrap()
    }

    #[test]
    fn exp_tail_values() {
        // e − Σ_{k≤3} 1/k! = e − 8/3
        assert_abs_diff_eq!(exp_tail(1.0, 3), std::f64::consts::E - 8.0 / 3.0, epsilon = 1e-15);
        assert_eq!(exp_tail(0.0, 2), 0.0);
        assert_abs_diff_eq!(exp_tail(0.1, 1), 0.1f64.exp() - 1.1, epsilon = 1e-16);
    }

    #[test]
    fn integration_matrix_is_exact_on_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s = integration_matrix(&x, &w);
        // ∫_{−1}^{x} 3u² du = x³ + 1
        for j in 0..12 {
            let v: f64 = (0..12).map(|k| s[[j, k]] * 3.0 * x[k] * x[k]).sum();
            assert_abs_diff_eq!(v, x[j].powi(3) + 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn evolution_group_law_and_norm() {
        let c = spec(1, 4, 0.5, 0.3);
        let h = hamiltonian_from(&c.local_terms().unwrap(), &c.sites()).unwrap().full;
        let plan = EvolutionPlan::new(h, vec![-1.0, 0.0, 0.3, 2.0]).unwrap();
        assert!(plan.unitarity_defect() <= 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = LabeledOperator::new(vec![0, 1], 4, random_hermitian(16, &mut rng)).unwrap();
        let zero = plan.heisenberg(0.0, &q).unwrap();
        assert!(max_abs(&(zero.matrix() - q.matrix())) < 1e-12);
        let a = plan.heisenberg(0.4, &plan.heisenberg(0.7, &q).unwrap()).unwrap();
        let b = plan.heisenberg(1.1, &q).unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) <= 1e-10);
        assert_abs_diff_eq!(b.norm().unwrap(), q.norm().unwrap(), epsilon = 1e-10);
        let grid = plan.heisenberg_grid(&q).unwrap();
        let direct = plan.heisenberg(0.3, &q).unwrap();
        assert!(max_abs(&(&grid[2] - direct.matrix())) < 1e-12);
    }

    #[test]
    fn harmonic_position_rotates() {
        let c = spec(1, 16, 0.0, 0.0);
        let terms = c.local_terms().unwrap();
        let plan = EvolutionPlan::new(terms.harmonic(&[0]).unwrap(), vec![]).unwrap();
        let x = LabeledOperator::new(vec![0], 16, to_complex(&terms.position)).unwrap();
        for &t in &[0.2, 0.7, 1.9] {
            let got = plan.heisenberg(t, &x).unwrap().into_matrix();
            let want = to_complex(&terms.position).mapv(|z| z * (2.0 * t).cos()) + terms.momentum.mapv(|z| z * (2.0 * t).sin());
            assert!(block_residual(&(got - want), 1, 16) <= 1e-8);
        }
    }

    #[test]
    fn free_symplectic_matches_heisenberg() {
        let omega = 1.7;
        let c = ChainSpec::new(1, 12, omega, PotentialSpec::zero(), PotentialSpec::zero(), 1.0).unwrap();
        let terms = c.local_terms().unwrap();
        let sites = c.sites();
        let plan = EvolutionPlan::new(terms.harmonic(&sites).unwrap(), vec![]).unwrap();
        let f = SymplecticVector::from_pairs(&[(0, C64::new(0.4, -0.9)), (1, C64::new(1.2, 0.3))]);
        for &t in &[0.1, 0.55, 2.3] {
            let lhs = plan.heisenberg(t, &field_operator(&terms, &sites, &f).unwrap()).unwrap().into_matrix();
            let rhs = field_operator(&terms, &sites, &free_symplectic(t, omega, &f)).unwrap().into_matrix();
            assert!(block_residual(&(lhs - rhs), 2, 12) <= 1e-8);
        }
    }

    #[test]
    fn free_symplectic_preserves_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = |rng: &mut ChaCha8Rng| {
            SymplecticVector::from_pairs(
                &(-2..=2).map(|k| (k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect::<Vec<_>>(),
            )
        };
        for _ in 0..50 {
            let f = draw(&mut rng);
            let g = draw(&mut rng);
            let t = rng.gen_range(-3.0..3.0);
            let omega = rng.gen_range(0.3..2.0);
            let s = free_symplectic(t, omega, &f).sigma(&free_symplectic(t, omega, &g));
            assert_abs_diff_eq!(s, f.sigma(&g), epsilon = 1e-13);
        }
        let id = free_symplectic(0.0, 1.3, &SymplecticVector::delta(0, C64::new(0.5, 0.2)));
        assert_eq!(id.get(0), C64::new(0.5, 0.2));
        let q = free_symplectic(std::f64::consts::FRAC_PI_4, 1.0, &SymplecticVector::delta(0, C64::new(1.0, 0.0)));
        assert_abs_diff_eq!(q.get(0).re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(0).im, 1.0, epsilon = 1e-15);
    }

    fn toy() -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let c = spec(1, 2, 0.5, 0.3);
        let h = hamiltonian_from(&c.local_terms().unwrap(), &c.sites()).unwrap();
        (h.full.into_matrix(), h.harmonic.into_matrix(), h.upsilon.into_matrix())
    }

    #[test]
    fn dyson_zero_interaction() {
        let (_, hh, _) = toy();
        let z = Array2::<f64>::zeros(hh.dim());
        let d = dyson_unitary(&hh, &z, 0.8, 3).unwrap();
        assert!(max_abs(&(d.unitary - Array2::<C64>::eye(4))) < 1e-14);
        assert_eq!(d.tail_bound, 0.0);
    }

    #[test]
    fn dyson_within_tail() {
        let (h, hh, ups) = toy();
        for &t in &[0.25, 0.5, 1.0] {
            let exact = interaction_unitary(&h, &hh, t).unwrap();
            let mut prev = f64::INFINITY;
            for order in 1..=6 {
                let d = dyson_unitary(&hh, &ups, t, order).unwrap();
                let err = op_norm(&(&d.unitary - &exact)).unwrap();
                assert!(err <= d.tail_bound + 1e-6, "t={t} order={order}: {err:e} > {:e}", d.tail_bound);
                assert!(d.quadrature_estimate < 1e-10);
                assert!(err < prev);
                prev = err;
            }
        }
    }

    #[test]
    fn dyson_factorial_ratio() {
        let (h, hh, ups) = toy();
        let t = 0.5;
        let exact = interaction_unitary(&h, &hh, t).unwrap();
        let x = t * op_norm(&ups).unwrap();
        let errs: Vec<f64> = (1..=4)
            .map(|o| op_norm(&(&dyson_unitary(&hh, &ups, t, o).unwrap().unitary - &exact)).unwrap())
            .collect();
        for o in 1..4 {
            let ratio = errs[o] / errs[o - 1];
            assert!(ratio < 1.5 * x / (o + 1) as f64, "order {o}: ratio {ratio} vs {}", x / (o + 1) as f64);
        }
    }

    #[test]
    fn dyson_rejects_bad_input() {
        let (_, hh, ups) = toy();
        assert!(dyson_unitary(&hh, &ups, 1.0, 0).is_err());
        assert!(dyson_unitary(&hh, &ups, 1.0, 7).is_err());
        assert!(matches!(dyson_unitary(&hh, &ups, 50.0, 6), Err(Error::QuadratureBudgetExceeded(_))));
    }

    #[test]
    fn lr_decoupled_vanishes() {
        let c = spec(2, 3, 0.5, 0.0);
        let terms = c.local_terms().unwrap();
        let q = gaussian_on(&terms, 0);
        let r = gaussian_on(&terms, 2);
        let rep = lr_experiment(&c, &q, &r, &[-0.5, 0.0, 0.5, 1.0]).unwrap();
        assert!(rep.points.iter().all(|p| p.commutator <= 1e-10), "{rep:?}");
    }

    #[test]
    fn lr_small_chain_below_envelope() {
        let c = spec(2, 3, 0.5, 0.3);
        let terms = c.local_terms().unwrap();
        let q = gaussian_on(&terms, 0);
        let r = gaussian_on(&terms, 2);
        let grid: Vec<f64> = (-4..=4).map(|k| k as f64 * 0.25).collect();
        let rep = lr_experiment(&c, &q, &r, &grid).unwrap();
        assert_eq!(rep.points[4].commutator, 0.0);
        assert_abs_diff_eq!(rep.distance, 1.0 / 3.0, epsilon = 1e-15);
        assert!(rep.max_ratio < 1.0, "{rep:?}");
        assert_eq!(rep.points[0].commutator, rep.points[8].commutator);
        assert!(rep.points[8].commutator > 0.0);
    }

    #[test]
    fn lr_rejects_outside_support() {
        let c = spec(1, 3, 0.5, 0.3);
        let terms = c.local_terms().unwrap();
        assert!(lr_experiment(&c, &gaussian_on(&terms, 0), &gaussian_on(&terms, 5), &[0.1]).is_err());
    }

    #[test]
    fn volume_sum_value() {
        // 2(1/9 + 1/16)
        assert_abs_diff_eq!(volume_double_sum(1, 2, 3), 0.3472222222222222, epsilon = 1e-15);
    }

    #[test]
    fn volume_decoupled_is_exact() {
        let c = spec(1, 3, 0.5, 0.0);
        let q = gaussian_on(&c.local_terms().unwrap(), 0);
        let rep = volume_convergence(&c, &q, 0.7, &[1, 2, 3]).unwrap();
        assert!(rep.rows.iter().all(|r| r.delta <= 1e-12));
    }

    #[test]
    fn volume_converges() {
        let c = spec(1, 3, 0.5, 0.3);
        let q = gaussian_on(&c.local_terms().unwrap(), 0);
        let rep = volume_convergence(&c, &q, 1.0, &[1, 2, 3]).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.envelope_decreasing && rep.within_envelope, "{rep:?}");
        assert!(rep.delta_decreasing, "{rep:?}");
    }
}
