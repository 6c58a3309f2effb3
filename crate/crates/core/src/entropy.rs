//! Relative entropy of density matrices and the inequalities built on it.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{boundary_coupling, complement, lattice, partial_trace, ChainSpec, LabeledOperator, LocalTerms, Site};
use crate::error::{Error, Result};
use crate::gibbs::{truncation_budget, NestedStates, SpectralDecomposition};
use crate::linalg::{adjoint, DenseScalar, eigh, eigvalsh, hermitian_defect, log_sum_exp, random_density, random_hermitian, trace, trace_norm, C64};

/// Relative eigenvalue cutoff defining the support of a density matrix.
pub const SUPPORT_CUTOFF: f64 = 1e-13;

fn check_density<S: DenseScalar>(rho: &Array2<S>) -> Result<()> {
    let (n, m) = rho.dim();
    if n != m || n == 0 {
        return Err(Error::NotDensity(format!("shape {n}×{m}")));
    }
    let defect = hermitian_defect(rho);
    if defect > 1e-10 {
        return Err(Error::NotDensity(format!("Hermitian defect {defect:e}")));
    }
    let tr = trace(rho);
    if (tr.re() - 1.0).abs() > 1e-8 || tr.im().abs() > 1e-8 {
        return Err(Error::NotDensity(format!("trace {}", tr)));
    }
    Ok(())
}

/// `S(ρ₁, ρ₂) = Tr ρ₁(log ρ₁ − log ρ₂)`, or `+∞` when the support of `ρ₁`
/// is not inside that of `ρ₂`.
pub fn relative_entropy<S: DenseScalar>(rho1: &Array2<S>, rho2: &Array2<S>) -> Result<f64> {
    check_density(rho1)?;
    check_density(rho2)?;
    if rho1.dim() != rho2.dim() {
        return Err(Error::NotDensity("densities act on different spaces".into()));
    }
    let (p, u) = eigh(rho1)?;
    let (q, v) = eigh(rho2)?;
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let qmax = q.iter().cloned().fold(0.0, f64::max);
    let overlap = adjoint(&u).dot(&v);
    let mut s = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi <= SUPPORT_CUTOFF * pmax {
            continue;
        }
        s += pi * pi.ln();
        for (j, &qj) in q.iter().enumerate() {
            let w = overlap[[i, j]].abs().powi(2) * pi;
            if qj <= SUPPORT_CUTOFF * qmax {
                if w > SUPPORT_CUTOFF {
                    return Ok(f64::INFINITY);
                }
                continue;
            }
            s -= w * qj.ln();
        }
    }
    Ok(s.max(0.0))
}

/// `½‖ρ₁ − ρ₂‖₁² ≤ S(ρ₁, ρ₂)`; returns `(S, ½‖ρ₁ − ρ₂‖₁², holds)`.
pub fn pinsker<S: DenseScalar>(rho1: &Array2<S>, rho2: &Array2<S>) -> Result<(f64, f64, bool)> {
    let s = relative_entropy(rho1, rho2)?;
    let d = trace_norm(&(rho1 - rho2))?;
    let lower = 0.5 * d * d;
    Ok((s, lower, s + 1e-12 >= lower))
}

/// `Tr_{rest}(ρ) ⊗ 1/d_rest`, the trace-preserving conditional expectation
/// onto the operators on `keep`.
pub fn conditional_expectation(rho: &Array2<C64>, support: &[Site], keep: &[Site], site_dim: usize) -> Result<Array2<C64>> {
    let reduced = partial_trace(rho, support, keep, site_dim)?;
    let rest: Vec<Site> = support.iter().copied().filter(|s| !keep.contains(s)).collect();
    let kept = LabeledOperator::new(keep.to_vec(), site_dim, reduced)?;
    if rest.is_empty() {
        return Ok(kept.embed(support)?.into_matrix());
    }
    let d_rest = site_dim.pow(rest.len() as u32) as f64;
    let id = LabeledOperator::<C64>::identity(rest, site_dim)?;
    let id = LabeledOperator::new(id.support().to_vec(), site_dim, id.matrix().mapv(|z| z / d_rest))?;
    Ok(kept.tensor(&id)?.into_matrix())
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub full: f64,
    pub restricted: f64,
    /// Entropy between the conditional expectations, equal to `restricted`.
    pub conditioned: f64,
    pub pinsker_full: bool,
    pub pinsker_restricted: bool,
    pub passed: bool,
}

/// `0 ≤ S(ρ₁↾keep, ρ₂↾keep) ≤ S(ρ₁, ρ₂) + 1e−9`.
pub fn monotonicity_check(
    rho1: &Array2<C64>,
    rho2: &Array2<C64>,
    support: &[Site],
    keep: &[Site],
    site_dim: usize,
) -> Result<MonotonicityReport> {
    if keep.is_empty() {
        return Err(Error::InvalidParameter("restriction set is empty".into()));
    }
    let (full, _, pinsker_full) = pinsker(rho1, rho2)?;
    let r1 = partial_trace(rho1, support, keep, site_dim)?;
    let r2 = partial_trace(rho2, support, keep, site_dim)?;
    let (restricted, _, pinsker_restricted) = pinsker(&r1, &r2)?;
    let conditioned = relative_entropy(
        &conditional_expectation(rho1, support, keep, site_dim)?,
        &conditional_expectation(rho2, support, keep, site_dim)?,
    )?;
    let passed = restricted >= 0.0 && restricted <= full + 1e-9 && pinsker_full && pinsker_restricted;
    Ok(MonotonicityReport { full, restricted, conditioned, pinsker_full, pinsker_restricted, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct PeierlsBogoliubovReport {
    /// `log Tr e^{−β(H−W)} − log Tr e^{−βH}`
    pub lhs: f64,
    /// `β Tr(ρ_β W)`
    pub rhs: f64,
    pub passed: bool,
}

/// `log(Tr e^{−βH+βW} / Tr e^{−βH}) ≥ β Tr(ρ_β W)`.
pub fn peierls_bogoliubov_check(h: &Array2<C64>, w: &Array2<C64>, beta: f64) -> Result<PeierlsBogoliubovReport> {
    for m in [h, w] {
        let d = hermitian_defect(m);
        if d > 1e-12 {
            return Err(Error::NotHermitian(d));
        }
    }
    let spec = SpectralDecomposition::new(h)?;
    let log_z = log_sum_exp(spec.eigenvalues.iter().map(|e| -beta * e));
    let log_z_w = log_sum_exp(eigvalsh(&(h - w))?.iter().map(|e| -beta * e));
    let pops = spec.eigenvalues.mapv(|e| (-beta * e - log_z).exp());
    let wt = adjoint(&spec.eigenvectors).dot(w).dot(&spec.eigenvectors);
    let mean: f64 = pops.iter().enumerate().map(|(k, p)| p * wt[[k, k]].re).sum();
    let lhs = log_z_w - log_z;
    let rhs = beta * mean;
    Ok(PeierlsBogoliubovReport { lhs, rhs, passed: lhs >= rhs - 1e-10 })
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport<T> {
    pub trials: Vec<T>,
    pub passed: usize,
}

impl<T> SuiteReport<T> {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials.len()
    }
}

/// Random Hermitian `H`, `W` of size `dim`; trial `k` draws from seed `seed + k`.
pub fn peierls_bogoliubov_suite(trials: usize, dim: usize, beta: f64, seed: u64) -> Result<SuiteReport<PeierlsBogoliubovReport>> {
    let reports: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let h = random_hermitian(dim, &mut rng).mapv(|z| z * 4.0);
            let w = random_hermitian(dim, &mut rng);
            peierls_bogoliubov_check(&h, &w, beta)
        })
        .collect::<Result<_>>()?;
    let passed = reports.iter().filter(|r| r.passed).count();
    Ok(SuiteReport { trials: reports, passed })
}

/// Random density pairs on two sites of dimension `site_dim`, restricted to
/// the first site.
pub fn monotonicity_suite(trials: usize, site_dim: usize, seed: u64) -> Result<SuiteReport<MonotonicityReport>> {
    let reports: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let n = site_dim * site_dim;
            let r1 = random_density(n, &mut rng);
            let r2 = random_density(n, &mut rng);
            monotonicity_check(&r1, &r2, &[0, 1], &[0], site_dim)
        })
        .collect::<Result<_>>()?;
    let passed = reports.iter().filter(|r| r.passed).count();
    Ok(SuiteReport { trials: reports, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct RestrictionEntropy {
    pub sites: Vec<Site>,
    pub entropy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub beta: f64,
    pub phi_sup: f64,
    /// `4|β|‖φ‖∞`
    pub bound: f64,
    pub tau: f64,
    /// `S(ψ↾Λ_L, φ↾Λ_L)` with `ψ` decoupled and `φ` coupled.
    pub entropy: f64,
    /// Entropies for nested restriction sets, largest first.
    pub restrictions: Vec<RestrictionEntropy>,
    /// `β(ψ(W) − φ(W))` for the boundary couplings `W(L)`.
    pub boundary_gap: f64,
    pub pinsker: bool,
    pub monotone: bool,
    pub passed: bool,
}

/// Compares the decoupled state `Gibbs(H_L) ⊗ Gibbs(H_{N∖L})` with the coupled
/// `Gibbs(H_N)` on `Λ_N`, `Λ_L` and `{0}`.
pub fn uniqueness_bound_experiment(chain: &ChainSpec, states: &NestedStates, terms: &LocalTerms, l: usize) -> Result<UniquenessReport> {
    let beta = chain.beta;
    let phi_sup = chain.phi.sup_norm();
    let outer_sites = states.outer.support.clone();
    let l_outer = outer_sites.len() / 2;
    let inner_sites = lattice(l);
    let rest_sites = complement(l, l_outer);
    let d = chain.site_dim;

    let psi_inner = LabeledOperator::new(inner_sites.clone(), d, states.inner.rho())?;
    let psi_rest = LabeledOperator::new(rest_sites, d, states.rest.rho())?;
    let psi_full = psi_inner.tensor(&psi_rest)?.into_matrix();
    let phi_full = states.outer.rho();

    let mut restrictions = vec![RestrictionEntropy { sites: outer_sites.clone(), entropy: relative_entropy(&psi_full, &phi_full)? }];
    let (entropy, pinsker_ok) = {
        let a = states.inner.rho();
        let b = states.outer.reduced_density(&inner_sites)?;
        let (s, _, ok) = pinsker(&a, &b)?;
        (s, ok)
    };
    restrictions.push(RestrictionEntropy { sites: inner_sites.clone(), entropy });
    let origin = [0 as Site];
    restrictions.push(RestrictionEntropy {
        sites: origin.to_vec(),
        entropy: relative_entropy(&states.inner.reduced_density(&origin)?, &states.outer.reduced_density(&origin)?)?,
    });
    let monotone = restrictions.windows(2).all(|w| w[1].entropy <= w[0].entropy + 1e-9);

    let w = boundary_coupling(terms, l, l_outer)?;
    let psi_w = trace(&psi_full.dot(w.matrix()));
    let phi_w = trace(&phi_full.dot(w.matrix()));
    let boundary_gap = beta * (psi_w - phi_w);

    let bound = 4.0 * beta.abs() * phi_sup;
    let tau = truncation_budget(beta, chain.omega, d, outer_sites.len());
    let passed = entropy >= 0.0 && entropy <= bound + tau && pinsker_ok && monotone;
    Ok(UniquenessReport { beta, phi_sup, bound, tau, entropy, restrictions, boundary_gap, pinsker: pinsker_ok, monotone, passed })
}

#[derive(Debug, Clone, Serialize)]
pub struct LscReport {
    pub sequence: Vec<f64>,
    pub limit: f64,
    /// Smallest value over the last quarter of the sequence.
    pub tail_min: f64,
    pub passed: bool,
}

/// `S(ρ, σ) ≤ liminf S(ρ_i, σ_i) + 1e−6`, the liminf estimated by the
/// minimum over the last quarter of the sequence.
pub fn lsc_check(pairs: &[(Array2<C64>, Array2<C64>)], limit: (&Array2<C64>, &Array2<C64>)) -> Result<LscReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    let sequence: Vec<f64> = pairs.iter().map(|(r, s)| relative_entropy(r, s)).collect::<Result<_>>()?;
    let limit = relative_entropy(limit.0, limit.1)?;
    let tail_min = sequence[sequence.len() * 3 / 4..].iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LscReport { sequence, limit, tail_min, passed: limit <= tail_min + 1e-6 })
}

/// `(1 − 1/i)ρ + (1/i)·1/d` for dyadic `i = 2^k`, `k = 0..n`. The entropy
/// converges at rate `1/i`, so a linear index never gets the tail within
/// reach of a 1e−6 comparison.
pub fn mixing_sequence(rho: &Array2<C64>, n: usize) -> Vec<Array2<C64>> {
    let d = rho.nrows();
    let id = Array2::<C64>::eye(d).mapv(|z| z / d as f64);
    (0..n)
        .map(|k| {
            let a = 0.5f64.powi(k as i32);
            rho.mapv(|z| z * (1.0 - a)) + id.mapv(|z| z * a)
        })
        .collect()
}

/// Harmonic single-site Gibbs state truncated to `dim` levels and padded with
/// zeros to `padded` levels.
pub fn padded_harmonic_gibbs(beta: f64, omega: f64, dim: usize, padded: usize) -> Array2<C64> {
    let w: Vec<f64> = (0..dim).map(|n| -beta * omega * (2 * n + 1) as f64).collect();
    let lz = log_sum_exp(w.iter().copied());
    let mut rho = Array2::<C64>::zeros((padded, padded));
    for (n, wn) in w.iter().enumerate() {
        rho[[n, n]] = C64::new((wn - lz).exp(), 0.0);
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::PotentialSpec;
    use crate::linalg::kron;
    use approx::assert_abs_diff_eq;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn closed_forms() {
        let pure = Array2::from_diag(&ndarray::arr1(&[c(1.0), c(0.0)]));
        let mixed = Array2::from_diag(&ndarray::arr1(&[c(0.5), c(0.5)]));
        assert_abs_diff_eq!(relative_entropy(&pure, &mixed).unwrap(), std::f64::consts::LN_2, epsilon = 1e-14);
        assert_eq!(relative_entropy(&mixed, &mixed).unwrap(), 0.0);
        assert_eq!(relative_entropy(&mixed, &pure).unwrap(), f64::INFINITY);
        let not_density = Array2::from_diag(&ndarray::arr1(&[c(0.7), c(0.7)]));
        assert!(matches!(relative_entropy(&not_density, &mixed), Err(Error::NotDensity(_))));
    }

    #[test]
    fn commuting_states_reduce_to_classical() {
        let p = [0.2, 0.3, 0.5];
        let q = [0.6, 0.1, 0.3];
        let a = Array2::from_diag(&ndarray::arr1(&p.map(c)));
        let b = Array2::from_diag(&ndarray::arr1(&q.map(c)));
        let kl: f64 = p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum();
        assert_abs_diff_eq!(relative_entropy(&a, &b).unwrap(), kl, epsilon = 1e-14);
    }

    #[test]
    fn additivity_and_product_restriction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_density(4, &mut rng);
        let b = random_density(4, &mut rng);
        let tau = random_density(4, &mut rng);
        let s = relative_entropy(&a, &b).unwrap();
        let st = relative_entropy(&kron(&a, &tau), &kron(&b, &tau)).unwrap();
        assert_abs_diff_eq!(s, st, epsilon = 1e-10);
        let rep = monotonicity_check(&kron(&a, &tau), &kron(&b, &tau), &[0, 1], &[0], 4).unwrap();
        assert_abs_diff_eq!(rep.restricted, rep.full, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.conditioned, rep.restricted, epsilon = 1e-10);
        let all = monotonicity_check(&kron(&a, &tau), &kron(&b, &tau), &[0, 1], &[0, 1], 4).unwrap();
        assert_abs_diff_eq!(all.restricted, all.full, epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_random_suite() {
        let suite = monotonicity_suite(50, 4, 100).unwrap();
        assert!(suite.all_passed());
        assert!(suite.trials.iter().all(|t| (t.conditioned - t.restricted).abs() < 1e-9));
    }

    #[test]
    fn peierls_bogoliubov_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_hermitian(6, &mut rng);
        let w = Array2::<C64>::eye(6).mapv(|z| z * 0.37);
        let r = peierls_bogoliubov_check(&h, &w, 1.3).unwrap();
        assert_abs_diff_eq!(r.lhs, 1.3 * 0.37, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rhs, 1.3 * 0.37, epsilon = 1e-12);
        // commuting: Jensen on eigenvalues
        let hd = Array2::from_diag(&ndarray::arr1(&[c(0.0), c(1.0), c(2.5)]));
        let wd = Array2::from_diag(&ndarray::arr1(&[c(0.4), c(-0.3), c(1.0)]));
        let r = peierls_bogoliubov_check(&hd, &wd, 1.0).unwrap();
        let e = [0.0, 1.0, 2.5];
        let wv = [0.4, -0.3, 1.0];
        let z: f64 = e.iter().map(|x: &f64| (-x).exp()).sum();
        let zw: f64 = e.iter().zip(&wv).map(|(x, w)| (-x + w).exp()).sum();
        let mean: f64 = e.iter().zip(&wv).map(|(x, w)| (-x).exp() * w).sum::<f64>() / z;
        assert_abs_diff_eq!(r.lhs, (zw / z).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(r.rhs, mean, epsilon = 1e-14);
        assert!(r.passed);
        assert!(peierls_bogoliubov_suite(50, 16, 1.0, 7).unwrap().all_passed());
    }

    #[test]
    fn lower_semicontinuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_density(5, &mut rng);
        let sigma = random_density(5, &mut rng);
        let pairs: Vec<_> = mixing_sequence(&rho, 40).into_iter().map(|r| (r, sigma.clone())).collect();
        let rep = lsc_check(&pairs, (&rho, &sigma)).unwrap();
        assert!(rep.passed);
        let constant = vec![(rho.clone(), sigma.clone()); 3];
        let rep = lsc_check(&constant, (&rho, &sigma)).unwrap();
        assert_eq!(rep.limit, rep.tail_min);

        let sigma = padded_harmonic_gibbs(0.7, 1.0, 24, 24);
        let seq: Vec<_> = (4..=24).step_by(4).map(|d| (padded_harmonic_gibbs(1.0, 1.0, d, 24), sigma.clone())).collect();
        let target = padded_harmonic_gibbs(1.0, 1.0, 24, 24);
        assert!(lsc_check(&seq, (&target, &sigma)).unwrap().passed);
    }

    #[test]
    fn uniqueness_decoupled_is_zero() {
        let chain = ChainSpec::new(1, 3, 1.0, PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap(), PotentialSpec::zero(), 0.5).unwrap();
        let terms = chain.local_terms().unwrap();
        let states = NestedStates::build(&chain, 1, 2, &terms).unwrap();
        let rep = uniqueness_bound_experiment(&chain, &states, &terms, 1).unwrap();
        assert!(rep.entropy.abs() < 1e-10, "{rep:?}");
        assert!(rep.passed);
    }

    #[test]
    fn uniqueness_small_chain() {
        let chain = ChainSpec::new(
            1,
            4,
            1.0,
            PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap(),
            PotentialSpec::gaussian(0.3, 0.0, 1.0).unwrap(),
            0.5,
        )
        .unwrap();
        let terms = chain.local_terms().unwrap();
        let states = NestedStates::build(&chain, 1, 2, &terms).unwrap();
        let rep = uniqueness_bound_experiment(&chain, &states, &terms, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.entropy > 0.0 && rep.entropy < 0.6);
        assert_eq!(rep.restrictions.len(), 3);
    }

    #[test]
    fn conditional_expectation_is_a_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density(27, &mut rng);
        let e = conditional_expectation(&rho, &[-1, 0, 1], &[0], 3).unwrap();
        assert_abs_diff_eq!(trace(&e).re, 1.0, epsilon = 1e-12);
        let twice = conditional_expectation(&e, &[-1, 0, 1], &[0], 3).unwrap();
        assert!(crate::linalg::max_abs(&(twice - &e)) < 1e-14);
    }
}
