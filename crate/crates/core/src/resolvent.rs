//! Field operators, resolvents and Weyl operators in the truncated basis.
//!
//! The CCR hold only away from the truncation edge, so relation residuals
//! are measured on the low-energy block `P` spanned by the first half of each
//! site's basis.

use std::collections::BTreeMap;

use ndarray::{s, Array2};
use serde::Serialize;

use crate::chain::{accumulate_local, normalize_sites, positions_in, LabeledOperator, LocalTerms, Site};
use crate::error::{Error, Result};
use crate::gibbs::SpectralDecomposition;
use crate::linalg::{adjoint, max_abs, to_complex, C64, I};

/// Finitely supported `f: Z → C`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SymplecticVector {
    pub coefficients: BTreeMap<Site, C64>,
}

impl SymplecticVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `c·δ_site`.
    pub fn delta(site: Site, c: C64) -> Self {
        let mut v = Self::zero();
        v.coefficients.insert(site, c);
        v
    }

    pub fn from_pairs(pairs: &[(Site, C64)]) -> Self {
        let mut v = Self::zero();
        for &(k, c) in pairs {
            *v.coefficients.entry(k).or_insert(C64::new(0.0, 0.0)) += c;
        }
        v
    }

    pub fn get(&self, site: Site) -> C64 {
        self.coefficients.get(&site).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn support(&self) -> Vec<Site> {
        self.coefficients.iter().filter(|(_, c)| c.norm() != 0.0).map(|(&k, _)| k).collect()
    }

    pub fn scale(&self, nu: f64) -> Self {
        Self { coefficients: self.coefficients.iter().map(|(&k, &c)| (k, c * nu)).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&k, &c) in &other.coefficients {
            *out.coefficients.entry(k).or_insert(C64::new(0.0, 0.0)) += c;
        }
        out
    }

    /// `σ(f, g) = Im⟨f, g⟩ = Σ_k (Re f_k Im g_k − Im f_k Re g_k)`.
    pub fn sigma(&self, other: &Self) -> f64 {
        self.coefficients.iter().map(|(&k, f)| (f.conj() * other.get(k)).im).sum()
    }
}

/// `Ψ(f) = Σ_k Re f_k x_k + Im f_k p_k` on `sites ⊇ supp f`.
pub fn field_operator(terms: &LocalTerms, sites: &[Site], f: &SymplecticVector) -> Result<LabeledOperator<C64>> {
    let sites = normalize_sites(sites);
    let supp = f.support();
    let pos = positions_in(&supp, &sites)
        .ok_or_else(|| Error::SupportMismatch(format!("field support {supp:?} not inside {sites:?}")))?;
    let d = terms.site_dim;
    let dim = d.pow(sites.len() as u32);
    let mut out = Array2::<C64>::zeros((dim, dim));
    let x = to_complex(&terms.position);
    for (&k, &p) in supp.iter().zip(pos.iter()) {
        let c = f.get(k);
        let local = x.mapv(|v| v * c.re) + terms.momentum.mapv(|v| v * c.im);
        accumulate_local(&mut out, &local, &[p], sites.len(), d, C64::new(1.0, 0.0));
    }
    LabeledOperator::new(sites, d, out)
}

/// `R(λ, f) = (iλ + Ψ(f))^{-1}` by functional calculus on `Ψ(f)`.
pub fn resolvent(field: &LabeledOperator<C64>, lambda: f64) -> Result<LabeledOperator<C64>> {
    if lambda == 0.0 {
        return Err(Error::LambdaZero);
    }
    let spec = SpectralDecomposition::new(field.matrix())?;
    let r = spec.apply_function(|e| 1.0 / (I * lambda + e));
    LabeledOperator::new(field.support().to_vec(), field.site_dim(), r)
}

/// `W(f) = e^{iΨ(f)}`.
pub fn weyl_operator(field: &LabeledOperator<C64>) -> Result<LabeledOperator<C64>> {
    let spec = SpectralDecomposition::new(field.matrix())?;
    let w = spec.apply_function(|e| (I * e).exp());
    LabeledOperator::new(field.support().to_vec(), field.site_dim(), w)
}

/// The trivial state: zero on every nonempty resolvent word, one on the unit.
pub fn trivial_state(word: &[(f64, SymplecticVector)]) -> C64 {
    if word.is_empty() {
        C64::new(1.0, 0.0)
    } else {
        C64::new(0.0, 0.0)
    }
}

/// Index set of the low-energy block: every site in its lowest `keep` states.
pub fn low_block_indices(n_sites: usize, site_dim: usize, keep: usize) -> Vec<usize> {
    let dim = site_dim.pow(n_sites as u32);
    (0..dim)
        .filter(|&i| {
            let mut r = i;
            (0..n_sites).all(|_| {
                let ok = r % site_dim < keep;
                r /= site_dim;
                ok
            })
        })
        .collect()
}

/// `max |(PAP)_ij|` with `P` the low-energy block of half the site dimension.
pub fn block_residual(a: &Array2<C64>, n_sites: usize, site_dim: usize) -> f64 {
    let idx = low_block_indices(n_sites, site_dim, site_dim / 2);
    let mut worst = 0.0f64;
    for &i in &idx {
        for &j in &idx {
            worst = worst.max(a[[i, j]].norm());
        }
    }
    worst
}

/// One sample `(λ, μ, f, g)` for the relation suite.
#[derive(Debug, Clone, Serialize)]
pub struct RelationSample {
    pub lambda: f64,
    pub mu: f64,
    pub f: SymplecticVector,
    pub g: SymplecticVector,
}

pub const RELATION_NAMES: [&str; 6] = [
    "zero_field",
    "adjoint",
    "scaling",
    "first_resolvent",
    "commutator",
    "sum_rule",
];

/// Largest block residual of each relation over the samples, in the order of
/// [`RELATION_NAMES`], plus the residual of the sum rule written with a single
/// `R(λ,f)` in the `σ` term.
#[derive(Debug, Clone, Serialize)]
pub struct RelationResiduals {
    pub site_dim: usize,
    pub residuals: [f64; 6],
    pub sum_rule_single_power: f64,
    pub max_norm_excess: f64,
}

/// Evaluates the six resolvent relations on `sites`:
/// 1. `R(λ,0) = −i/λ`
/// 2. `R(λ,f)* = R(−λ,f)`
/// 3. `νR(νλ,νf) = R(λ,f)` (ν = 2.5)
/// 4. `R(λ,f) − R(μ,f) = i(μ−λ)R(λ,f)R(μ,f)`
/// 5. `[R(λ,f), R(μ,g)] = iσ(f,g) R(λ,f)R(μ,g)²R(λ,f)`
/// 6. `R(λ,f)R(μ,g) = R(λ+μ,f+g){R(λ,f) + R(μ,g) + iσ(f,g)R(λ,f)²R(μ,g)}`
pub fn relation_suite(terms: &LocalTerms, sites: &[Site], samples: &[RelationSample]) -> Result<RelationResiduals> {
    let n = sites.len();
    let d = terms.site_dim;
    let nu = 2.5;
    let mut res = [0.0f64; 6];
    let mut single = 0.0f64;
    let mut excess = 0.0f64;
    let field = |f: &SymplecticVector| field_operator(terms, sites, f);
    let dim = d.pow(n as u32);
    let eye = Array2::<C64>::eye(dim);
    for smp in samples {
        let (lambda, mu) = (smp.lambda, smp.mu);
        let pf = field(&smp.f)?;
        let pg = field(&smp.g)?;
        let rf = resolvent(&pf, lambda)?.into_matrix();
        let rg = resolvent(&pg, mu)?.into_matrix();
        let sigma = smp.f.sigma(&smp.g);

        let r0 = resolvent(&field(&SymplecticVector::zero())?, lambda)?.into_matrix();
        res[0] = res[0].max(block_residual(&(&r0 - &eye.mapv(|v| v * (-I / lambda))), n, d));

        let rminus = resolvent(&pf, -lambda)?.into_matrix();
        res[1] = res[1].max(max_abs(&(adjoint(&rf) - &rminus)));

        let scaled = resolvent(&field(&smp.f.scale(nu))?, nu * lambda)?.into_matrix();
        res[2] = res[2].max(max_abs(&(scaled.mapv(|v| v * nu) - &rf)));

        let rmu_f = resolvent(&pf, mu)?.into_matrix();
        let first = &rf - &rmu_f - rf.dot(&rmu_f).mapv(|v| v * (I * (mu - lambda)));
        res[3] = res[3].max(max_abs(&first));

        let comm = rf.dot(&rg) - rg.dot(&rf);
        let rhs = rf.dot(&rg).dot(&rg).dot(&rf).mapv(|v| v * (I * sigma));
        res[4] = res[4].max(block_residual(&(comm - rhs), n, d));

        if lambda + mu != 0.0 {
            let rsum = resolvent(&field(&smp.f.add(&smp.g))?, lambda + mu)?.into_matrix();
            let lhs = rf.dot(&rg);
            let isig = I * sigma;
            let bracket = &rf + &rg + rf.dot(&rf).dot(&rg).mapv(|v| v * isig);
            res[5] = res[5].max(block_residual(&(&lhs - &rsum.dot(&bracket)), n, d));
            let literal = &rf + &rg + rf.dot(&rg).mapv(|v| v * isig);
            single = single.max(block_residual(&(&lhs - &rsum.dot(&literal)), n, d));
        }

        let norm = crate::linalg::op_norm(&rf)?;
        excess = excess.max(norm - 1.0 / lambda.abs());
    }
    Ok(RelationResiduals { site_dim: d, residuals: res, sum_rule_single_power: single, max_norm_excess: excess })
}

/// Residuals across increasing site dimensions and whether each relation
/// decreases from one dimension to the next (or already sits at `floor`).
#[derive(Debug, Clone, Serialize)]
pub struct RelationConvergence {
    pub per_dim: Vec<RelationResiduals>,
    pub monotone: [bool; 6],
    pub floor: f64,
}

pub fn relation_convergence(per_dim: Vec<RelationResiduals>, floor: f64) -> RelationConvergence {
    let mut monotone = [true; 6];
    for (k, flag) in monotone.iter_mut().enumerate() {
        *flag = per_dim.windows(2).all(|w| w[1].residuals[k] < w[0].residuals[k] || w[1].residuals[k] <= floor);
    }
    RelationConvergence { per_dim, monotone, floor }
}

/// `‖P[W(f)W(g) − e^{−iσ(f,g)/2}W(f+g)]P‖` (entrywise max on the block).
pub fn weyl_residual(terms: &LocalTerms, sites: &[Site], f: &SymplecticVector, g: &SymplecticVector) -> Result<f64> {
    let wf = weyl_operator(&field_operator(terms, sites, f)?)?.into_matrix();
    let wg = weyl_operator(&field_operator(terms, sites, g)?)?.into_matrix();
    let wfg = weyl_operator(&field_operator(terms, sites, &f.add(g))?)?.into_matrix();
    let phase = (-I * f.sigma(g) / 2.0).exp();
    let diff = wf.dot(&wg) - wfg.mapv(|v| v * phase);
    Ok(block_residual(&diff, sites.len(), terms.site_dim))
}

/// `‖P([Ψ(f),Ψ(g)] − iσ(f,g))P‖`.
pub fn ccr_residual(terms: &LocalTerms, sites: &[Site], f: &SymplecticVector, g: &SymplecticVector) -> Result<f64> {
    let a = field_operator(terms, sites, f)?.into_matrix();
    let b = field_operator(terms, sites, g)?.into_matrix();
    let c = a.dot(&b) - b.dot(&a);
    let target = Array2::<C64>::eye(a.nrows()).mapv(|v| v * (I * f.sigma(g)));
    Ok(block_residual(&(c - target), sites.len(), terms.site_dim))
}

/// Upper-left `k × k` corner.
pub fn corner(a: &Array2<C64>, k: usize) -> Array2<C64> {
    a.slice(s![0..k, 0..k]).to_owned()
}
