//! Single-site quantization in the eigenbasis of `h = p² + ω²x²`.
//!
//! The basis keeps the lowest `dim` eigenfunctions, with energies `ω(2n+1)`.
//! Position and momentum come from the ladder algebra; multiplication
//! operators `V(x)` are assembled by trapezoid quadrature on a uniform grid,
//! which is spectrally accurate for the Gaussian-decaying integrands involved.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Truncated oscillator eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteBasis {
    dim: usize,
    omega: f64,
}

impl HermiteBasis {
    pub fn new(dim: usize, omega: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("basis dim must be >= 2, got {dim}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { dim, omega })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Harmonic energies `ω(2n+1)`, n = 0..dim.
    pub fn energies(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.dim, |n| self.omega * (2 * n + 1) as f64)
    }
}

/// Uniform quadrature grid with trapezoid weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, points: usize) -> Result<Self> {
        let g = Self { x_min, x_max, points };
        g.validate()?;
        Ok(g)
    }

    /// `[-8/√ω, 8/√ω]` with 512 points.
    pub fn default_for(omega: f64) -> Self {
        let half = 8.0 / omega.sqrt();
        Self { x_min: -half, x_max: half, points: 512 }
    }

    /// The default grid, widened to `±(√(2·dim+1) + 4.5)/√ω` once the highest
    /// retained eigenfunction reaches past `±8/√ω`.
    pub fn for_basis(basis: &HermiteBasis) -> Self {
        let mut g = Self::default_for(basis.omega());
        if basis.dim() > 16 {
            let half = ((2 * basis.dim() + 1) as f64).sqrt() + 4.5;
            g.x_min = -half / basis.omega().sqrt();
            g.x_max = half / basis.omega().sqrt();
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy x_min < x_max, got [{}, {}]",
                self.x_min, self.x_max
            )));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Array1<f64> {
        Array1::linspace(self.x_min, self.x_max, self.points)
    }

    pub fn weights(&self) -> Array1<f64> {
        let h = self.spacing();
        let mut w = Array1::from_elem(self.points, h);
        w[0] = 0.5 * h;
        w[self.points - 1] = 0.5 * h;
        w
    }

    /// Same interval with twice the resolution.
    pub fn refined(&self) -> Self {
        Self { points: 2 * self.points - 1, ..*self }
    }
}

/// One Gaussian bump `a·exp(−(x−c)²/s²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Bump {
    pub fn new(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("bump width must be positive, got {width}")));
        }
        Ok(Self { amplitude, center, width })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        self.amplitude * (-u * u).exp()
    }

    /// `sup |d/dx|` of the bump, attained at `x − c = ±s/√2`.
    pub fn lipschitz(&self) -> f64 {
        self.amplitude.abs() * (2.0 / std::f64::consts::E).sqrt() / self.width
    }
}

/// Finite sum of Gaussian bumps; the empty sum is the zero potential.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub terms: Vec<Bump>,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Result<Self> {
        Ok(Self { terms: vec![Bump::new(amplitude, center, width)?] })
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.terms {
            if !(b.width > 0.0) || !b.amplitude.is_finite() || !b.center.is_finite() {
                return Err(Error::InvalidParameter(format!("bad bump {b:?}")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|b| b.amplitude == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|b| b.eval(x)).sum()
    }

    /// Upper bound on the Lipschitz constant (sum over terms).
    pub fn lipschitz(&self) -> f64 {
        self.terms.iter().map(Bump::lipschitz).sum()
    }

    /// Interval outside of which every term is below `1e-16` of its amplitude.
    pub fn effective_support(&self) -> (f64, f64) {
        let lo = self.terms.iter().map(|b| b.center - 6.1 * b.width).fold(f64::INFINITY, f64::min);
        let hi = self.terms.iter().map(|b| b.center + 6.1 * b.width).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() {
            (lo, hi)
        } else {
            (0.0, 0.0)
        }
    }

    /// Smallest bump width (sets the refinement-grid resolution).
    fn min_width(&self) -> f64 {
        self.terms.iter().map(|b| b.width).fold(f64::INFINITY, f64::min)
    }

    /// `sup |V|`: dense scan over the effective support followed by
    /// golden-section refinement around the best sample.
    pub fn sup_norm(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        sup_abs(|x| self.eval(x), self.effective_support(), self.min_width())
    }
}

/// `sup |f|` on `[lo, hi]` for a smooth `f` with features no narrower than
/// `width`.
pub(crate) fn sup_abs<F: Fn(f64) -> f64>(f: F, (lo, hi): (f64, f64), width: f64) -> f64 {
    let h = (width / 64.0).min((hi - lo).max(1e-12) / 16.0);
    let n = ((hi - lo) / h).ceil() as usize + 1;
    let mut best_i = 0;
    let mut best = -1.0;
    for i in 0..n {
        let v = f(lo + i as f64 * h).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let a = lo + (best_i as f64 - 1.0) * h;
    let b = lo + (best_i as f64 + 1.0) * h;
    best.max(golden_max(|x| f(x).abs(), a.max(lo), b.min(hi)))
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// Matrix of `x` in the oscillator eigenbasis: `x = (a + a†)/√(2ω)`.
pub fn position_matrix(basis: &HermiteBasis) -> Array2<f64> {
    let n = basis.dim();
    let scale = 1.0 / (2.0 * basis.omega()).sqrt();
    let mut x = Array2::zeros((n, n));
    for k in 0..n - 1 {
        let v = ((k + 1) as f64).sqrt() * scale;
        x[[k, k + 1]] = v;
        x[[k + 1, k]] = v;
    }
    x
}

/// Matrix of `p = −i d/dx`: `p = i√(ω/2)(a† − a)`, so `[x, p] = i` away from
/// the truncation edge.
pub fn momentum_matrix(basis: &HermiteBasis) -> Array2<C64> {
    let n = basis.dim();
    let scale = (basis.omega() / 2.0).sqrt();
    let mut p = Array2::zeros((n, n));
    for k in 0..n - 1 {
        let v = ((k + 1) as f64).sqrt() * scale;
        p[[k, k + 1]] = C64::new(0.0, -v);
        p[[k + 1, k]] = C64::new(0.0, v);
    }
    p
}

/// `diag(ω(2n+1))`.
pub fn harmonic_hamiltonian(basis: &HermiteBasis) -> Array2<f64> {
    Array2::from_diag(&basis.energies())
}

/// `ψ_n(x_i)` for each point (rows) and `n < dim` (columns), by the
/// normalized three-term recurrence.
pub fn eigenfunctions_at(basis: &HermiteBasis, xs: &[f64]) -> Array2<f64> {
    let omega = basis.omega();
    let n = basis.dim();
    let norm0 = (omega / std::f64::consts::PI).powf(0.25);
    let mut out = Array2::zeros((xs.len(), n));
    for (i, &x) in xs.iter().enumerate() {
        let xi = omega.sqrt() * x;
        let mut prev = 0.0;
        let mut cur = norm0 * (-0.5 * xi * xi).exp();
        out[[i, 0]] = cur;
        for k in 0..n - 1 {
            let kf = k as f64;
            let next = (2.0 / (kf + 1.0)).sqrt() * xi * cur - (kf / (kf + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
            out[[i, k + 1]] = cur;
        }
    }
    out
}

const NORMALIZATION_TOL: f64 = 1e-8;

/// Eigenfunctions sampled on `grid`, verified to be orthonormal under the
/// grid's quadrature weights.
pub fn eigenfunctions_on_grid(basis: &HermiteBasis, grid: &GridSpec) -> Result<Array2<f64>> {
    grid.validate()?;
    let nodes = grid.nodes();
    let psi = eigenfunctions_at(basis, nodes.as_slice().expect("linspace is contiguous"));
    let w = grid.weights();
    for n in 0..basis.dim() {
        let col = psi.column(n);
        let norm: f64 = col.iter().zip(w.iter()).map(|(p, w)| w * p * p).sum();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::GridTooCoarse(format!(
                "eigenfunction {n} has quadrature norm {norm:.12} on [{}, {}] with {} points",
                grid.x_min, grid.x_max, grid.points
            )));
        }
    }
    Ok(psi)
}

/// Quadrature data for one site: nodes, weights and sampled eigenfunctions.
#[derive(Debug, Clone)]
pub struct SiteQuadrature {
    pub basis: HermiteBasis,
    pub grid: GridSpec,
    pub nodes: Array1<f64>,
    pub weights: Array1<f64>,
    /// `psi[[i, n]] = ψ_n(x_i)`.
    pub psi: Array2<f64>,
}

impl SiteQuadrature {
    pub fn new(basis: HermiteBasis, grid: GridSpec) -> Result<Self> {
        let psi = eigenfunctions_on_grid(&basis, &grid)?;
        Ok(Self { basis, grid, nodes: grid.nodes(), weights: grid.weights(), psi })
    }

    /// `⟨ψ_m, f ψ_n⟩` by quadrature.
    pub fn multiplication<F: Fn(f64) -> f64>(&self, f: F) -> Array2<f64> {
        let weighted = {
            let mut w = self.psi.clone();
            for (mut row, (&x, &wt)) in w.rows_mut().into_iter().zip(self.nodes.iter().zip(self.weights.iter())) {
                let s = wt * f(x);
                row.mapv_inplace(|v| v * s);
            }
            w
        };
        let m = self.psi.t().dot(&weighted);
        // exact symmetry
        (&m + &m.t()) * 0.5
    }

    /// Two-site multiplication operator `g(x_a, x_b)` on the product basis,
    /// indexed `(m_a·dim + m_b, n_a·dim + n_b)`.
    pub fn pair_multiplication<G: Fn(f64, f64) -> f64>(&self, g: G) -> Array2<f64> {
        let d = self.basis.dim();
        let npts = self.nodes.len();
        // B[(m, n), i] = w_i ψ_m(x_i) ψ_n(x_i)
        let mut b = Array2::<f64>::zeros((d * d, npts));
        for i in 0..npts {
            let wi = self.weights[i];
            for m in 0..d {
                let pm = self.psi[[i, m]] * wi;
                for n in 0..d {
                    b[[m * d + n, i]] = pm * self.psi[[i, n]];
                }
            }
        }
        let gm = Array2::from_shape_fn((npts, npts), |(i, j)| g(self.nodes[i], self.nodes[j]));
        let t = b.dot(&gm).dot(&b.t());
        // t[(ma, na), (mb, nb)] -> out[(ma, mb), (na, nb)]
        let mut out = Array2::<f64>::zeros((d * d, d * d));
        for ma in 0..d {
            for na in 0..d {
                for mb in 0..d {
                    for nb in 0..d {
                        out[[ma * d + mb, na * d + nb]] = t[[ma * d + na, mb * d + nb]];
                    }
                }
            }
        }
        (&out + &out.t()) * 0.5
    }
}

/// Matrix of `V(x)` in the basis, by quadrature on `grid`.
pub fn multiplication_operator(basis: &HermiteBasis, potential: &PotentialSpec, grid: &GridSpec) -> Result<Array2<f64>> {
    potential.validate()?;
    if potential.is_zero() {
        return Ok(Array2::zeros((basis.dim(), basis.dim())));
    }
    let quad = SiteQuadrature::new(*basis, *grid)?;
    Ok(quad.multiplication(|x| potential.eval(x)))
}
