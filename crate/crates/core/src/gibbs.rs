//! Eigendecompositions, Gibbs states and their reductions.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::basis::PotentialSpec;
use crate::chain::{complement, hamiltonian_from, lattice, split_index_map, ChainSpec, LabeledOperator, LocalTerms, Site};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, DenseScalar, eigh, eigvalsh, kron, log_sum_exp, trace, trace_norm, C64};

/// `H = U diag(E) U*`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<S = f64> {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<S>,
}

impl<S: DenseScalar> SpectralDecomposition<S> {
    pub fn new(h: &Array2<S>) -> Result<Self> {
        let (eigenvalues, eigenvectors) = eigh(h)?;
        Ok(Self { eigenvalues, eigenvectors })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(E)) U*`.
    pub fn apply_function<F: Fn(f64) -> C64>(&self, f: F) -> Array2<C64> {
        let u = self.eigenvectors.mapv(|x| C64::new(x.re(), x.im()));
        let mut scaled = u.clone();
        for (mut col, &e) in scaled.columns_mut().into_iter().zip(self.eigenvalues.iter()) {
            let fe = f(e);
            col.mapv_inplace(|x| x * fe);
        }
        scaled.dot(&adjoint(&u))
    }

    /// `U diag(E) U*`.
    pub fn reconstruct(&self) -> Array2<S> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &e) in scaled.columns_mut().into_iter().zip(self.eigenvalues.iter()) {
            col.mapv_inplace(|x| x.mul_real(e));
        }
        scaled.dot(&adjoint(&self.eigenvectors))
    }
}

/// Decomposition of a chain operator.
pub fn spectral(h: &LabeledOperator<f64>) -> Result<SpectralDecomposition<f64>> {
    SpectralDecomposition::new(h.matrix())
}

/// `ρ = e^{−βH}/Z`, kept in the eigenbasis of `H`.
#[derive(Debug, Clone)]
pub struct GibbsState<S = f64> {
    pub beta: f64,
    pub log_z: f64,
    /// Boltzmann weights `e^{−βE_n}/Z`.
    pub populations: Array1<f64>,
    pub spectral: Arc<SpectralDecomposition<S>>,
    pub support: Vec<Site>,
    pub site_dim: usize,
}

impl<S: DenseScalar> GibbsState<S> {
    pub fn new(spectral: Arc<SpectralDecomposition<S>>, beta: f64, support: Vec<Site>, site_dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        let log_w: Vec<f64> = spectral.eigenvalues.iter().map(|e| -beta * e).collect();
        let log_z = log_sum_exp(log_w.iter().copied());
        let populations = Array1::from_iter(log_w.iter().map(|w| (w - log_z).exp()));
        Ok(Self { beta, log_z, populations, spectral, support, site_dim })
    }

    pub fn dim(&self) -> usize {
        self.populations.len()
    }

    /// Dense `ρ`.
    pub fn rho(&self) -> Array2<S> {
        let u = &self.spectral.eigenvectors;
        let mut scaled = u.clone();
        for (mut col, &p) in scaled.columns_mut().into_iter().zip(self.populations.iter()) {
            col.mapv_inplace(|x| x.mul_real(p));
        }
        scaled.dot(&adjoint(u))
    }

    /// `Tr_{support∖keep} ρ`, assembled from the eigenvectors without forming
    /// `ρ`.
    pub fn reduced_density(&self, keep: &[Site]) -> Result<Array2<S>> {
        let map = split_index_map(&self.support, keep, self.site_dim)?;
        let (k, r) = map.dim();
        let u = &self.spectral.eigenvectors;
        let n = self.dim();
        let mut x = Array2::<S>::zeros((k, r * n));
        for a in 0..k {
            for rr in 0..r {
                let row = map[[a, rr]];
                for j in 0..n {
                    x[[a, rr * n + j]] = u[[row, j]].mul_real(self.populations[j].sqrt());
                }
            }
        }
        Ok(x.dot(&adjoint(&x)))
    }

    /// `Tr(ρ Q)` through the reduced density on the support of `Q`.
    pub fn expectation(&self, q: &LabeledOperator<C64>) -> Result<C64> {
        if q.site_dim() != self.site_dim {
            return Err(Error::SupportMismatch("site dimensions differ".into()));
        }
        let red = self.reduced_density(q.support())?;
        let red = red.mapv(|x| C64::new(x.re(), x.im()));
        Ok(trace_product(&red, q.matrix()))
    }

    pub fn expectation_real(&self, q: &LabeledOperator<f64>) -> Result<f64> {
        Ok(self.expectation(&q.to_complex())?.re)
    }
}

/// `Tr(AB)` without forming the product.
pub fn trace_product(a: &Array2<C64>, b: &Array2<C64>) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            s += a[[i, j]] * b[[j, i]];
        }
    }
    s
}

/// Gibbs state of a chain operator.
pub fn gibbs_state(h: &LabeledOperator<f64>, beta: f64) -> Result<GibbsState<f64>> {
    let spec = Arc::new(spectral(h)?);
    GibbsState::new(spec, beta, h.support().to_vec(), h.site_dim())
}

/// Positive multiplication operator `F(x) = Π_k f_k(x_k)` on consecutive
/// sites, with each `f_k` a nonnegative bump sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductMultiplier {
    pub sites: Vec<Site>,
    pub factors: Vec<PotentialSpec>,
}

impl ProductMultiplier {
    pub fn new(sites: Vec<Site>, factors: Vec<PotentialSpec>) -> Result<Self> {
        if sites.len() != factors.len() {
            return Err(Error::InvalidParameter("one factor per site required".into()));
        }
        for f in &factors {
            if f.terms.iter().any(|b| b.amplitude < 0.0) {
                return Err(Error::NotPositive(format!("factor {f:?} has a negative amplitude")));
            }
        }
        Ok(Self { sites, factors })
    }

    /// Quadrature image `M_F` on `sites`; positive semidefinite since each
    /// factor is `Ψᵀ diag(w f) Ψ` with `w f ≥ 0`.
    pub fn operator(&self, terms: &LocalTerms) -> Result<LabeledOperator<f64>> {
        let mut m = Array2::<f64>::eye(1);
        for f in &self.factors {
            let local = terms.quadrature.multiplication(|x| f.eval(x));
            m = kron(&m, &local);
        }
        let op = LabeledOperator::new(self.sites.clone(), terms.site_dim, m)?;
        let min = eigvalsh(op.matrix())?[0];
        if min < -1e-12 * op.matrix().iter().fold(1.0f64, |a, b| a.max(b.abs())) {
            return Err(Error::NotPositive(format!("multiplication operator has eigenvalue {min:e}")));
        }
        Ok(op)
    }
}

/// Gibbs states needed by the sandwich and Gibbs-condition checks: the inner
/// chain `Λ_L`, the outer chain `Λ_{L'}` and the decoupled remainder.
#[derive(Debug, Clone)]
pub struct NestedStates {
    pub inner: GibbsState,
    pub outer: GibbsState,
    pub rest: GibbsState,
}

impl NestedStates {
    pub fn build(chain: &ChainSpec, l: usize, l_outer: usize, terms: &LocalTerms) -> Result<Self> {
        Self::with_outer(chain, l, l_outer, terms, None)
    }

    /// As [`NestedStates::build`], reusing an existing decomposition of
    /// `H_{L'}`.
    pub fn with_outer(
        chain: &ChainSpec,
        l: usize,
        l_outer: usize,
        terms: &LocalTerms,
        outer: Option<Arc<SpectralDecomposition>>,
    ) -> Result<Self> {
        if l_outer <= l {
            return Err(Error::InvalidParameter(format!("L'={l_outer} must exceed L={l}")));
        }
        chain.dim_of(2 * l_outer)?;
        let beta = chain.beta;
        let inner = gibbs_state(&terms.region_hamiltonian(&lattice(l))?, beta)?;
        let rest = gibbs_state(&terms.region_hamiltonian(&complement(l, l_outer))?, beta)?;
        let outer_sites = lattice(l_outer);
        let outer_spec = match outer {
            Some(s) => s,
            None => Arc::new(spectral(&hamiltonian_from(terms, &outer_sites)?.full)?),
        };
        let outer = GibbsState::new(outer_spec, beta, outer_sites, chain.site_dim)?;
        Ok(Self { inner, outer, rest })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichRow {
    pub index: usize,
    pub psi_inner: f64,
    pub psi_outer: f64,
    pub state_ratio: f64,
    /// `log Tr(e^{−βH_{L'}} M_F)`.
    pub log_trace_outer: f64,
    /// `log[Tr(e^{−βH_{L'∖L}}) Tr(e^{−βH_L} M_F)]`.
    pub log_trace_split: f64,
    pub trace_ratio: f64,
    pub state_pass: bool,
    pub trace_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub beta: f64,
    pub phi_sup: f64,
    pub tau: f64,
    pub state_lower: f64,
    pub state_upper: f64,
    pub trace_lower: f64,
    pub trace_upper: f64,
    pub rows: Vec<SandwichRow>,
}

impl SandwichReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.state_pass && r.trace_pass)
    }
}

/// Relative weight of the neglected Boltzmann tail, per site:
/// `Σ_{n≥dim} e^{−βω(2n+1)} / Σ_{n≥0} e^{−βω(2n+1)} = e^{−2βω·dim}`.
pub fn boltzmann_tail(beta: f64, omega: f64, dim: usize) -> f64 {
    (-2.0 * beta * omega * dim as f64).exp()
}

/// Truncation budget for comparisons across chains of up to `n_sites` sites:
/// ten times the summed per-site Boltzmann tail.
pub fn truncation_budget(beta: f64, omega: f64, dim: usize, n_sites: usize) -> f64 {
    10.0 * n_sites as f64 * boltzmann_tail(beta, omega, dim)
}

/// Compares `ψ_{L'}(F)` with `ψ_L(F)` and the trace forms against the
/// `e^{±4β‖φ‖∞}` and `e^{±2β‖φ‖∞}` envelopes.
pub fn sandwich_check(
    chain: &ChainSpec,
    states: &NestedStates,
    terms: &LocalTerms,
    multipliers: &[ProductMultiplier],
) -> Result<SandwichReport> {
    let beta = chain.beta;
    let phi_sup = chain.phi.sup_norm();
    let tau = truncation_budget(beta, chain.omega, chain.site_dim, states.outer.support.len());
    let state_lower = (-4.0 * beta * phi_sup).exp() * (1.0 - tau);
    let state_upper = (4.0 * beta * phi_sup).exp() * (1.0 + tau);
    let trace_lower = (-2.0 * beta * phi_sup).exp() * (1.0 - tau);
    let trace_upper = (2.0 * beta * phi_sup).exp() * (1.0 + tau);
    let mut rows = Vec::with_capacity(multipliers.len());
    for (index, f) in multipliers.iter().enumerate() {
        let op = f.operator(terms)?;
        let psi_inner = states.inner.expectation_real(&op)?;
        let psi_outer = states.outer.expectation_real(&op)?;
        if !(psi_inner > 0.0 && psi_outer > 0.0) {
            return Err(Error::NotPositive(format!("expectations {psi_inner:e}, {psi_outer:e}")));
        }
        let state_ratio = psi_outer / psi_inner;
        let log_trace_outer = states.outer.log_z + psi_outer.ln();
        let log_trace_split = states.rest.log_z + states.inner.log_z + psi_inner.ln();
        let trace_ratio = (log_trace_outer - log_trace_split).exp();
        rows.push(SandwichRow {
            index,
            psi_inner,
            psi_outer,
            state_ratio,
            log_trace_outer,
            log_trace_split,
            trace_ratio,
            state_pass: state_ratio >= state_lower && state_ratio <= state_upper,
            trace_pass: trace_ratio >= trace_lower && trace_ratio <= trace_upper,
        });
    }
    Ok(SandwichReport { beta, phi_sup, tau, state_lower, state_upper, trace_lower, trace_upper, rows })
}

/// Gibbs state of `H − W`.
pub fn perturbed_gibbs(h: &LabeledOperator<f64>, w: &LabeledOperator<f64>, beta: f64) -> Result<GibbsState<f64>> {
    let w = w.embed(h.support())?;
    let defect = crate::linalg::hermitian_defect(w.matrix());
    if defect > 1e-12 {
        return Err(Error::NotHermitian(defect));
    }
    let shifted = LabeledOperator::new(h.support().to_vec(), h.site_dim(), h.matrix() - w.matrix())?;
    gibbs_state(&shifted, beta)
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    /// `‖ρ^{βW} − ρ_L ⊗ ρ_{L'∖L}‖₁`.
    pub trace_distance: f64,
    /// Worst `|ψ'(Q⊗R) − ψ_L(Q)ψ'(R)|` over the sampled pairs.
    pub expectation_defect: f64,
    pub samples: usize,
}

/// Removes the boundary couplings `W(L)` from `H_{L'}` and compares the
/// resulting Gibbs state with the product of the inner and remainder states.
pub fn gibbs_condition_check<R: rand::Rng + ?Sized>(
    chain: &ChainSpec,
    l: usize,
    l_outer: usize,
    terms: &LocalTerms,
    samples: usize,
    rng: &mut R,
) -> Result<FactorizationReport> {
    let outer_sites = lattice(l_outer);
    let h = hamiltonian_from(terms, &outer_sites)?.full;
    let w = crate::chain::boundary_coupling(terms, l, l_outer)?;
    let perturbed = perturbed_gibbs(&h, &w, chain.beta)?;
    let inner = gibbs_state(&terms.region_hamiltonian(&lattice(l))?, chain.beta)?;
    let rest = gibbs_state(&terms.region_hamiltonian(&complement(l, l_outer))?, chain.beta)?;
    let rho_inner = LabeledOperator::new(inner.support.clone(), chain.site_dim, inner.rho())?;
    let rho_rest = LabeledOperator::new(rest.support.clone(), chain.site_dim, rest.rho())?;
    let product = rho_inner.tensor(&rho_rest)?;
    let trace_distance = trace_norm(&(perturbed.rho() - product.matrix()))?;

    let d_in = rho_inner.dim();
    let d_rest = rho_rest.dim();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let q = LabeledOperator::new(inner.support.clone(), chain.site_dim, crate::linalg::random_hermitian(d_in, rng))?;
        let r = LabeledOperator::new(rest.support.clone(), chain.site_dim, crate::linalg::random_hermitian(d_rest, rng))?;
        let qr = q.tensor(&r)?;
        let lhs = perturbed.expectation(&qr)?;
        let rhs = inner.expectation(&q)? * perturbed.expectation(&r)?;
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(FactorizationReport { trace_distance, expectation_defect: worst, samples })
}

/// `Tr ρ` and the smallest eigenvalue, for density-matrix sanity checks.
pub fn density_diagnostics<S: DenseScalar>(rho: &Array2<S>) -> Result<(f64, f64)> {
    let tr = trace(rho).re();
    let min = eigvalsh(rho)?[0];
    Ok((tr, min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{harmonic_hamiltonian, position_matrix, Bump, HermiteBasis};
    use crate::chain::hamiltonian;
    use crate::linalg::{commutator, max_abs, random_hermitian, to_complex};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_site(dim: usize) -> LabeledOperator<f64> {
        let b = HermiteBasis::new(dim, 1.0).unwrap();
        LabeledOperator::new(vec![0], dim, harmonic_hamiltonian(&b)).unwrap()
    }

    fn coupled(l: usize, d: usize, phi: f64) -> ChainSpec {
        ChainSpec::new(
            l,
            d,
            1.0,
            PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap(),
            PotentialSpec::gaussian(phi, 0.0, 1.0).unwrap(),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn spectral_of_diagonal() {
        let s = spectral(&single_site(3)).unwrap();
        assert_eq!(s.eigenvalues.to_vec(), vec![1.0, 3.0, 5.0]);
        assert!(max_abs(&(&s.eigenvectors - &Array2::<f64>::eye(3))) == 0.0);
    }

    #[test]
    fn spectral_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(64, &mut rng);
        let s = SpectralDecomposition::new(&h).unwrap();
        assert!(max_abs(&(s.reconstruct() - &h)) <= 1e-11);
        let u = &s.eigenvectors;
        assert!(max_abs(&(adjoint(u).dot(u) - Array2::<C64>::eye(64))) <= 1e-12);
    }

    #[test]
    fn harmonic_partition_function() {
        // Σ_{n<32} e^{-(2n+1)}
        let g = gibbs_state(&single_site(32), 1.0).unwrap();
        let partial: f64 = (0..32).map(|n| (-((2 * n + 1) as f64)).exp()).sum();
        assert_abs_diff_eq!(g.log_z.exp(), partial, epsilon = 1e-13);
        assert_abs_diff_eq!(g.log_z.exp(), 0.4254590641196608, epsilon = 1e-13);
    }

    #[test]
    fn ground_state_limit() {
        let g = gibbs_state(&single_site(8), 50.0).unwrap();
        assert!(g.populations[0] >= 1.0 - 1e-10);
    }

    #[test]
    fn degenerate_block_is_maximally_mixed() {
        let h = LabeledOperator::new(vec![0], 4, Array2::from_diag(&ndarray::arr1(&[2.0, 2.0, 2.0, 7.0]))).unwrap();
        let rho = gibbs_state(&h, 1.3).unwrap().rho();
        assert!((rho[[0, 0]] - rho[[1, 1]]).abs() < 1e-15 && (rho[[1, 1]] - rho[[2, 2]]).abs() < 1e-15);
    }

    #[test]
    fn position_moments() {
        let b = HermiteBasis::new(40, 1.0).unwrap();
        let g = gibbs_state(&single_site(40), 1.0).unwrap();
        let x = position_matrix(&b);
        let x2 = LabeledOperator::new(vec![0], 40, x.dot(&x)).unwrap();
        // coth(1)/2
        assert_abs_diff_eq!(g.expectation_real(&x2).unwrap(), 0.6565176427496657, epsilon = 1e-12);
        let x1 = LabeledOperator::new(vec![0], 40, x).unwrap();
        assert!(g.expectation_real(&x1).unwrap().abs() < 1e-15);
        let id = LabeledOperator::<f64>::identity(vec![0], 40).unwrap();
        assert_abs_diff_eq!(g.expectation_real(&id).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gibbs_invariants() {
        let c = coupled(1, 6, 0.3);
        let h = hamiltonian(&c).unwrap().full;
        let g = gibbs_state(&h, 0.7).unwrap();
        let rho = g.rho();
        let (tr, min) = density_diagnostics(&rho).unwrap();
        assert_abs_diff_eq!(tr, 1.0, epsilon = 1e-12);
        assert!(min >= -1e-12);
        assert!(max_abs(&commutator(&rho, h.matrix())) <= 1e-10);
    }

    #[test]
    fn reduced_density_duality() {
        let c = coupled(2, 3, 0.3);
        let h = hamiltonian(&c).unwrap().full;
        let g = gibbs_state(&h, 0.5).unwrap();
        let rho = to_complex(&g.rho());
        let keep = [0, 2];
        let red = to_complex(&g.reduced_density(&keep).unwrap());
        let dense = crate::chain::partial_trace(&rho, &g.support, &keep, 3).unwrap();
        assert!(max_abs(&(&red - &dense)) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a = LabeledOperator::new(keep.to_vec(), 3, random_hermitian(9, &mut rng)).unwrap();
            let full = a.embed(&g.support).unwrap();
            let lhs = trace_product(&red, a.matrix());
            let rhs = trace_product(&rho, full.matrix());
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn decoupled_sandwich_is_exact() {
        let c = coupled(2, 4, 0.0);
        let terms = c.local_terms().unwrap();
        let states = NestedStates::build(&c, 1, 2, &terms).unwrap();
        let f = ProductMultiplier::new(vec![0, 1], vec![PotentialSpec::gaussian(1.0, 0.3, 0.8).unwrap(), PotentialSpec::gaussian(0.5, -0.2, 1.5).unwrap()])
            .unwrap();
        let id = ProductMultiplier::new(vec![0, 1], vec![PotentialSpec::gaussian(1.0, 0.0, 1e6).unwrap(); 2]).unwrap();
        let rep = sandwich_check(&c, &states, &terms, &[f, id]).unwrap();
        for r in &rep.rows {
            assert_abs_diff_eq!(r.state_ratio, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.trace_ratio, 1.0, epsilon = 1e-12);
        }
        assert!(rep.passed());
    }

    #[test]
    fn coupled_sandwich_small() {
        let c = coupled(2, 4, 0.3);
        let terms = c.local_terms().unwrap();
        let states = NestedStates::build(&c, 1, 2, &terms).unwrap();
        let f = ProductMultiplier::new(
            vec![0, 1],
            vec![
                PotentialSpec { terms: vec![Bump::new(1.0, 0.5, 0.7).unwrap(), Bump::new(0.2, -1.0, 0.4).unwrap()] },
                PotentialSpec::gaussian(2.0, 0.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let rep = sandwich_check(&c, &states, &terms, &[f]).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!((rep.rows[0].state_ratio - 1.0).abs() > 1e-6);
    }

    #[test]
    fn negative_multiplier_rejected() {
        assert!(matches!(
            ProductMultiplier::new(vec![0], vec![PotentialSpec::gaussian(-1.0, 0.0, 1.0).unwrap()]),
            Err(Error::NotPositive(_))
        ));
    }

    #[test]
    fn gibbs_condition_factorizes() {
        let c = coupled(2, 3, 0.3);
        let terms = c.local_terms().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rep = gibbs_condition_check(&c, 1, 2, &terms, 10, &mut rng).unwrap();
        assert!(rep.trace_distance <= 1e-10, "{rep:?}");
        assert!(rep.expectation_defect <= 1e-10, "{rep:?}");
    }

    #[test]
    fn zero_perturbation() {
        let c = coupled(1, 3, 0.3);
        let h = hamiltonian(&c).unwrap().full;
        let w = LabeledOperator::<f64>::zeros(vec![0, 1], 3).unwrap();
        let a = perturbed_gibbs(&h, &w, 0.5).unwrap().rho();
        let b = gibbs_state(&h, 0.5).unwrap().rho();
        assert!(max_abs(&(a - b)) < 1e-15);
    }
}
