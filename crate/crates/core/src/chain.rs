//! Chains `Λ_L = {−L+1, …, L}` of coupled oscillators.
//!
//! Operators carry their site support; matrices on a support use the
//! Kronecker layout with sites in ascending order, first site most
//! significant.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{harmonic_hamiltonian, momentum_matrix, position_matrix, GridSpec, HermiteBasis, PotentialSpec, SiteQuadrature};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, C64};

pub type Site = i64;

pub const DEFAULT_DIM_CAP: usize = 65536;

/// `site_dim^n_sites`, or `None` on overflow.
pub fn total_dim(site_dim: usize, n_sites: usize) -> Option<usize> {
    site_dim.checked_pow(u32::try_from(n_sites).ok()?)
}

fn check_sorted(sites: &[Site]) -> Result<()> {
    if sites.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::SupportMismatch(format!("support {sites:?} is not strictly ascending")));
    }
    Ok(())
}

/// Sorted, deduplicated copy of a site list.
pub fn normalize_sites(sites: &[Site]) -> Vec<Site> {
    let mut v = sites.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Positions of `sub` inside `sup` (both ascending); `None` if not a subset.
pub fn positions_in(sub: &[Site], sup: &[Site]) -> Option<Vec<usize>> {
    sub.iter().map(|s| sup.binary_search(s).ok()).collect()
}

/// Matrix on the tensor product of the sites in `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledOperator<S> {
    support: Vec<Site>,
    site_dim: usize,
    matrix: Array2<S>,
}

impl<S: ndarray::LinalgScalar + PartialEq> LabeledOperator<S> {
    pub fn new(support: Vec<Site>, site_dim: usize, matrix: Array2<S>) -> Result<Self> {
        check_sorted(&support)?;
        let dim = total_dim(site_dim, support.len()).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        if matrix.dim() != (dim, dim) {
            return Err(Error::SupportMismatch(format!(
                "matrix shape {:?} does not match {} sites of dimension {site_dim}",
                matrix.dim(),
                support.len()
            )));
        }
        Ok(Self { support, site_dim, matrix })
    }

    pub fn identity(support: Vec<Site>, site_dim: usize) -> Result<Self> {
        let dim = total_dim(site_dim, support.len()).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        Self::new(support, site_dim, Array2::eye(dim))
    }

    pub fn zeros(support: Vec<Site>, site_dim: usize) -> Result<Self> {
        let dim = total_dim(site_dim, support.len()).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        Self::new(support, site_dim, Array2::zeros((dim, dim)))
    }

    pub fn support(&self) -> &[Site] {
        &self.support
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<S> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<S> {
        self.matrix
    }

    /// `A ⊗ 1` on `target ⊇ support`.
    pub fn embed(&self, target: &[Site]) -> Result<Self> {
        check_sorted(target)?;
        let pos = positions_in(&self.support, target).ok_or_else(|| {
            Error::SupportMismatch(format!("support {:?} not contained in {target:?}", self.support))
        })?;
        let dim = total_dim(self.site_dim, target.len()).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        let mut out = Array2::zeros((dim, dim));
        accumulate_local(&mut out, &self.matrix, &pos, target.len(), self.site_dim, S::one());
        Self::new(target.to_vec(), self.site_dim, out)
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Self::new(self.support.clone(), self.site_dim, self.matrix.dot(&other.matrix))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Self::new(self.support.clone(), self.site_dim, &self.matrix + &other.matrix)
    }

    pub fn same_layout(&self, other: &Self) -> Result<()> {
        if self.support != other.support || self.site_dim != other.site_dim {
            return Err(Error::SupportMismatch(format!("{:?} vs {:?}", self.support, other.support)));
        }
        Ok(())
    }
}

impl LabeledOperator<f64> {
    pub fn to_complex(&self) -> LabeledOperator<C64> {
        LabeledOperator { support: self.support.clone(), site_dim: self.site_dim, matrix: crate::linalg::to_complex(&self.matrix) }
    }

    pub fn norm(&self) -> Result<f64> {
        op_norm(&self.matrix)
    }
}

impl LabeledOperator<C64> {
    pub fn norm(&self) -> Result<f64> {
        op_norm(&self.matrix)
    }
}

/// `out += scale · (local ⊗ 1)`, where `local` acts on the tensor factors at
/// `positions` (ascending) of an `n_sites`-fold product.
pub fn accumulate_local<S: ndarray::LinalgScalar + PartialEq>(
    out: &mut Array2<S>,
    local: &Array2<S>,
    positions: &[usize],
    n_sites: usize,
    site_dim: usize,
    scale: S,
) {
    let k = positions.len();
    let local_dim = local.nrows();
    // stride of each tensor factor in the flat index
    let stride: Vec<usize> = (0..n_sites).map(|i| site_dim.pow((n_sites - 1 - i) as u32)).collect();
    let local_offset: Vec<usize> = (0..local_dim)
        .map(|mut a| {
            let mut off = 0;
            for j in (0..k).rev() {
                off += (a % site_dim) * stride[positions[j]];
                a /= site_dim;
            }
            off
        })
        .collect();
    let rest: Vec<usize> = (0..n_sites).filter(|i| !positions.contains(i)).collect();
    let rest_count = site_dim.pow(rest.len() as u32);
    for mut r in 0..rest_count {
        let mut base = 0;
        for &p in rest.iter().rev() {
            base += (r % site_dim) * stride[p];
            r /= site_dim;
        }
        for a in 0..local_dim {
            let row = base + local_offset[a];
            for b in 0..local_dim {
                let v = local[[a, b]];
                if v != S::zero() {
                    out[[row, base + local_offset[b]]] = out[[row, base + local_offset[b]]] + scale * v;
                }
            }
        }
    }
}

/// Flat indices of `support`'s product basis, arranged as
/// `map[[a, r]]` with `a` running over the `keep` factors and `r` over the
/// rest (both in ascending site order).
pub fn split_index_map(support: &[Site], keep: &[Site], site_dim: usize) -> Result<Array2<usize>> {
    let pos = positions_in(keep, support)
        .ok_or_else(|| Error::SupportMismatch(format!("{keep:?} not contained in {support:?}")))?;
    let n = support.len();
    let rest: Vec<usize> = (0..n).filter(|i| !pos.contains(i)).collect();
    let stride: Vec<usize> = (0..n).map(|i| site_dim.pow((n - 1 - i) as u32)).collect();
    let offsets = |factors: &[usize]| -> Vec<usize> {
        let count = site_dim.pow(factors.len() as u32);
        (0..count)
            .map(|mut a| {
                let mut off = 0;
                for &f in factors.iter().rev() {
                    off += (a % site_dim) * stride[f];
                    a /= site_dim;
                }
                off
            })
            .collect()
    };
    let ka = offsets(&pos);
    let ra = offsets(&rest);
    Ok(Array2::from_shape_fn((ka.len(), ra.len()), |(a, r)| ka[a] + ra[r]))
}

/// `Tr_{support∖keep} ρ`.
pub fn partial_trace<S: ndarray::LinalgScalar>(rho: &Array2<S>, support: &[Site], keep: &[Site], site_dim: usize) -> Result<Array2<S>> {
    let dim = total_dim(site_dim, support.len()).unwrap_or(0);
    if rho.dim() != (dim, dim) {
        return Err(Error::SupportMismatch(format!("matrix shape {:?} does not match support {support:?}", rho.dim())));
    }
    let map = split_index_map(support, keep, site_dim)?;
    let (k, r) = map.dim();
    Ok(Array2::from_shape_fn((k, k), |(a, b)| (0..r).fold(S::zero(), |acc, x| acc + rho[[map[[a, x]], map[[b, x]]]])))
}

impl<S: ndarray::LinalgScalar + PartialEq> LabeledOperator<S> {
    /// `A ⊗ B` for disjoint supports, laid out on the merged ascending support.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        if self.site_dim != other.site_dim {
            return Err(Error::SupportMismatch("site dimensions differ".into()));
        }
        if self.support.iter().any(|s| other.support.contains(s)) {
            return Err(Error::NotDisjoint);
        }
        let merged = normalize_sites(&[self.support.clone(), other.support.clone()].concat());
        let map = split_index_map(&merged, &self.support, self.site_dim)?;
        let (ka, kb) = map.dim();
        let dim = ka * kb;
        let mut out = Array2::zeros((dim, dim));
        for a in 0..ka {
            for c in 0..ka {
                let x = self.matrix[[a, c]];
                if x == S::zero() {
                    continue;
                }
                for b in 0..kb {
                    let row = map[[a, b]];
                    for d in 0..kb {
                        out[[row, map[[c, d]]]] = x * other.matrix[[b, d]];
                    }
                }
            }
        }
        Self::new(merged, self.site_dim, out)
    }
}

/// Parameters of a chain on `Λ_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub l: usize,
    pub site_dim: usize,
    pub omega: f64,
    pub v: PotentialSpec,
    pub phi: PotentialSpec,
    pub beta: f64,
    pub grid: GridSpec,
    pub dim_cap: usize,
}

impl ChainSpec {
    pub fn new(l: usize, site_dim: usize, omega: f64, v: PotentialSpec, phi: PotentialSpec, beta: f64) -> Result<Self> {
        let basis = HermiteBasis::new(site_dim, omega)?;
        let spec = Self { l, site_dim, omega, v, phi, beta, grid: GridSpec::for_basis(&basis), dim_cap: DEFAULT_DIM_CAP };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::InvalidParameter("L must be positive".into()));
        }
        HermiteBasis::new(self.site_dim, self.omega)?;
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {}", self.beta)));
        }
        self.v.validate()?;
        self.phi.validate()?;
        self.grid.validate()
    }

    pub fn with_l(&self, l: usize) -> Self {
        Self { l, ..self.clone() }
    }

    /// Same chain at another truncation; the grid follows the basis.
    pub fn with_site_dim(&self, site_dim: usize) -> Self {
        let grid = match HermiteBasis::new(site_dim, self.omega) {
            Ok(b) => GridSpec::for_basis(&b),
            Err(_) => self.grid,
        };
        Self { site_dim, grid, ..self.clone() }
    }

    pub fn with_phi(&self, phi: PotentialSpec) -> Self {
        Self { phi, ..self.clone() }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self { beta, ..self.clone() }
    }

    pub fn basis(&self) -> HermiteBasis {
        HermiteBasis::new(self.site_dim, self.omega).expect("validated chain")
    }

    /// `Λ_L` in ascending order.
    pub fn sites(&self) -> Vec<Site> {
        lattice(self.l)
    }

    pub fn dim(&self) -> Result<usize> {
        self.dim_of(2 * self.l)
    }

    /// Dimension of `n` sites, checked against the cap.
    pub fn dim_of(&self, n: usize) -> Result<usize> {
        match total_dim(self.site_dim, n) {
            Some(d) if d <= self.dim_cap => Ok(d),
            Some(d) => Err(Error::DimensionOverflow { dim: d, cap: self.dim_cap }),
            None => Err(Error::DimensionOverflow { dim: usize::MAX, cap: self.dim_cap }),
        }
    }

    /// Single-site and pair matrices shared by every construction on this
    /// chain.
    pub fn local_terms(&self) -> Result<LocalTerms> {
        self.validate()?;
        let basis = self.basis();
        let quad = SiteQuadrature::new(basis, self.grid)?;
        let v = if self.v.is_zero() { Array2::zeros((self.site_dim, self.site_dim)) } else { quad.multiplication(|x| self.v.eval(x)) };
        let d2 = self.site_dim * self.site_dim;
        let pair = if self.phi.is_zero() { Array2::zeros((d2, d2)) } else { quad.pair_multiplication(|a, b| self.phi.eval(a - b)) };
        Ok(LocalTerms {
            site_dim: self.site_dim,
            harmonic: harmonic_hamiltonian(&basis),
            position: position_matrix(&basis),
            momentum: momentum_matrix(&basis),
            v,
            pair,
            quadrature: quad,
        })
    }
}

/// `{−L+1, …, L}`.
pub fn lattice(l: usize) -> Vec<Site> {
    let l = l as Site;
    (-l + 1..=l).collect()
}

/// Single-site and nearest-neighbour building blocks.
#[derive(Debug, Clone)]
pub struct LocalTerms {
    pub site_dim: usize,
    pub harmonic: Array2<f64>,
    pub position: Array2<f64>,
    pub momentum: Array2<Complex64>,
    /// `V(x)` on one site.
    pub v: Array2<f64>,
    /// `φ(x_a − x_b)` on two sites, left site first.
    pub pair: Array2<f64>,
    pub quadrature: SiteQuadrature,
}

impl LocalTerms {
    /// `Φ(Λ)` as an operator on `Λ` itself.
    pub fn interaction(&self, sites: &[Site]) -> Result<LabeledOperator<f64>> {
        let sites = normalize_sites(sites);
        match sites.as_slice() {
            [_] => LabeledOperator::new(sites, self.site_dim, self.v.clone()),
            [a, b] if b - a == 1 => LabeledOperator::new(sites, self.site_dim, self.pair.clone()),
            _ => LabeledOperator::zeros(sites, self.site_dim),
        }
    }

    /// `Υ(Γ) = Σ_{Λ⊆Γ} Φ(Λ)` on `Γ`.
    pub fn upsilon(&self, gamma: &[Site]) -> Result<LabeledOperator<f64>> {
        let gamma = normalize_sites(gamma);
        let n = gamma.len();
        let dim = total_dim(self.site_dim, n).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        let mut out = Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            accumulate_local(&mut out, &self.v, &[i], n, self.site_dim, 1.0);
            if i + 1 < n && gamma[i + 1] - gamma[i] == 1 {
                accumulate_local(&mut out, &self.pair, &[i, i + 1], n, self.site_dim, 1.0);
            }
        }
        LabeledOperator::new(gamma, self.site_dim, out)
    }

    /// `Σ_{k∈Γ} (p_k² + ω²x_k²)` on `Γ`, diagonal in the product basis.
    pub fn harmonic(&self, gamma: &[Site]) -> Result<LabeledOperator<f64>> {
        let gamma = normalize_sites(gamma);
        let n = gamma.len();
        let d = self.site_dim;
        let dim = total_dim(d, n).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        let e = self.harmonic.diag();
        let mut out = Array2::<f64>::zeros((dim, dim));
        for idx in 0..dim {
            let mut r = idx;
            let mut s = 0.0;
            for _ in 0..n {
                s += e[r % d];
                r /= d;
            }
            out[[idx, idx]] = s;
        }
        LabeledOperator::new(gamma, d, out)
    }

    /// `Σ_{k∈Γ} V(x_k)` on `Γ`.
    pub fn onsite(&self, gamma: &[Site]) -> Result<LabeledOperator<f64>> {
        let gamma = normalize_sites(gamma);
        let n = gamma.len();
        let dim = total_dim(self.site_dim, n).ok_or(Error::DimensionOverflow { dim: usize::MAX, cap: usize::MAX })?;
        let mut out = Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            accumulate_local(&mut out, &self.v, &[i], n, self.site_dim, 1.0);
        }
        LabeledOperator::new(gamma, self.site_dim, out)
    }

    /// `H(Γ) = H^h(Γ) + Υ(Γ)`.
    pub fn region_hamiltonian(&self, gamma: &[Site]) -> Result<LabeledOperator<f64>> {
        self.harmonic(gamma)?.add(&self.upsilon(gamma)?)
    }
}

/// `H_L`, `H^h_L` and `H^free_L` on the same space.
#[derive(Debug, Clone)]
pub struct ChainHamiltonians {
    pub full: LabeledOperator<f64>,
    pub harmonic: LabeledOperator<f64>,
    pub free: LabeledOperator<f64>,
    pub upsilon: LabeledOperator<f64>,
}

/// `Φ(Λ)` embedded on `Λ`; zero unless `Λ` is a singleton or adjacent pair.
pub fn interaction_map(chain: &ChainSpec, sites: &[Site]) -> Result<LabeledOperator<f64>> {
    let lat = chain.sites();
    if positions_in(&normalize_sites(sites), &lat).is_none() {
        return Err(Error::SupportMismatch(format!("{sites:?} not inside Λ_{}", chain.l)));
    }
    chain.local_terms()?.interaction(sites)
}

pub fn upsilon(chain: &ChainSpec, gamma: &[Site]) -> Result<LabeledOperator<f64>> {
    let lat = chain.sites();
    let gamma = normalize_sites(gamma);
    if positions_in(&gamma, &lat).is_none() {
        return Err(Error::SupportMismatch(format!("{gamma:?} not inside Λ_{}", chain.l)));
    }
    chain.dim_of(gamma.len())?;
    chain.local_terms()?.upsilon(&gamma)
}

pub fn hamiltonian(chain: &ChainSpec) -> Result<ChainHamiltonians> {
    chain.dim()?;
    let terms = chain.local_terms()?;
    hamiltonian_from(&terms, &chain.sites())
}

pub fn hamiltonian_from(terms: &LocalTerms, sites: &[Site]) -> Result<ChainHamiltonians> {
    let harmonic = terms.harmonic(sites)?;
    let upsilon = terms.upsilon(sites)?;
    let full = harmonic.add(&upsilon)?;
    let free = harmonic.add(&terms.onsite(sites)?)?;
    Ok(ChainHamiltonians { full, harmonic, free, upsilon })
}

/// Boundary couplings `W(L) = Φ({L, L+1}) + Φ({−L, −L+1})`, embedded in
/// `Λ_{L'}` (requires `L' > L`).
pub fn boundary_coupling(terms: &LocalTerms, l: usize, l_outer: usize) -> Result<LabeledOperator<f64>> {
    if l_outer <= l {
        return Err(Error::InvalidParameter(format!("outer chain L'={l_outer} must exceed L={l}")));
    }
    let outer = lattice(l_outer);
    let li = l as Site;
    let a = terms.interaction(&[li, li + 1])?.embed(&outer)?;
    let b = terms.interaction(&[-li, -li + 1])?.embed(&outer)?;
    a.add(&b)
}

/// `Λ_{L'} ∖ Λ_L`.
pub fn complement(l: usize, l_outer: usize) -> Vec<Site> {
    let inner = lattice(l);
    lattice(l_outer).into_iter().filter(|s| !inner.contains(s)).collect()
}

/// `‖Φ‖_int` restricted to nearest-neighbour supports: the operator norm of
/// the pair term over `(1+1)²`, with the analytic bound `‖φ‖∞/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InteractionNorm {
    pub operator: f64,
    pub bound: f64,
}

pub fn interaction_norm(chain: &ChainSpec) -> Result<InteractionNorm> {
    let bound = chain.phi.sup_norm() / 4.0;
    if chain.phi.is_zero() {
        return Ok(InteractionNorm { operator: 0.0, bound });
    }
    let terms = chain.local_terms()?;
    Ok(InteractionNorm { operator: op_norm(&terms.pair)? / 4.0, bound })
}

/// `4 Σ_{x ≤ n} 1/(1+|x|)²` summed over `|x| ≤ n`.
pub fn lr_constant_partial(n: u64) -> f64 {
    // smallest terms first
    let tail: f64 = (1..=n).rev().map(|x| 1.0 / ((1 + x) as f64).powi(2)).sum();
    4.0 * (1.0 + 2.0 * tail)
}

/// `C = 4 Σ_{x∈Z} 1/(1+|x|)² = 4(π²/3 − 1)`, from a partial sum plus the
/// Euler–Maclaurin tail of `Σ_{k>M} 1/k²`.
pub fn lr_constant() -> f64 {
    let m = 1000u64;
    let mf = (m + 1) as f64;
    // Σ_{k ≥ M+2} 1/k² = 1/(M+1) − 1/(2(M+1)²) + 1/(6(M+1)³) − 1/(30(M+1)⁵) + …
    let tail = 1.0 / mf - 0.5 / mf.powi(2) + 1.0 / (6.0 * mf.powi(3)) - 1.0 / (30.0 * mf.powi(5));
    lr_constant_partial(m) + 8.0 * tail
}

/// Sites of `gamma` with a neighbour outside `gamma`.
pub fn lr_boundary(gamma: &[Site]) -> Vec<Site> {
    let g = normalize_sites(gamma);
    g.iter().copied().filter(|s| g.binary_search(&(s - 1)).is_err() || g.binary_search(&(s + 1)).is_err()).collect()
}

/// `D(Γ₁, Γ₂)`: the smaller of the two boundary-weighted double sums of
/// `1/(1+|x−y|)`.
pub fn lr_distance(g1: &[Site], g2: &[Site]) -> Result<f64> {
    let a = normalize_sites(g1);
    let b = normalize_sites(g2);
    if a.iter().any(|s| b.binary_search(s).is_ok()) {
        return Err(Error::NotDisjoint);
    }
    let sum = |xs: &[Site], ys: &[Site]| -> f64 {
        xs.iter().flat_map(|x| ys.iter().map(move |y| 1.0 / (1.0 + (x - y).abs() as f64))).sum()
    };
    let first = sum(&lr_boundary(&a), &b);
    let second = sum(&a, &lr_boundary(&b));
    Ok(first.min(second))
}
