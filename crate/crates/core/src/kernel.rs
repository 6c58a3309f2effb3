//! Position-space kernels of `e^{−βH}`: the Mehler closed form, truncated
//! eigensums, plain Lie–Trotter products, and the shift estimates used for
//! regularity of the thermal states.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::basis::{eigenfunctions_at, multiplication_operator, sup_abs, GridSpec, HermiteBasis, PotentialSpec};
use crate::error::{Error, Result};
use crate::linalg::eigh;

/// Where a kernel's values came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelKind {
    Mehler,
    Eigensum,
    Trotter(usize),
}

/// `k(x_i, y_j)` on a grid.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    pub grid: GridSpec,
    pub values: Array2<f64>,
    pub beta: f64,
    pub kind: KernelKind,
}

impl HeatKernel {
    /// `Σ_i w_i k(x_i, x_i)`.
    pub fn quadrature_trace(&self) -> f64 {
        let w = self.grid.weights();
        self.values.diag().iter().zip(w.iter()).map(|(k, w)| k * w).sum()
    }

    pub fn asymmetry(&self) -> f64 {
        let v = &self.values;
        v.iter().zip(v.t().iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `max |k − other| / max |other|`.
    pub fn relative_error(&self, other: &HeatKernel) -> f64 {
        relative_error(&self.values, &other.values)
    }
}

pub fn relative_error(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(reference.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

/// `log k^h_β(x, y)` for `h = p² + ω²x²`.
pub fn log_mehler(beta: f64, omega: f64, x: f64, y: f64) -> f64 {
    let a = 2.0 * omega * beta;
    // log sinh a, stable for large a
    let log_sinh = a + (-(-2.0 * a).exp_m1()).ln() - std::f64::consts::LN_2;
    let coth = 1.0 / a.tanh();
    let cosech = (-log_sinh).exp();
    0.5 * (omega / (2.0 * std::f64::consts::PI)).ln() - 0.5 * log_sinh
        - 0.5 * omega * ((x * x + y * y) * coth - 2.0 * x * y * cosech)
}

/// Single-site Mehler kernel
/// `(ω/(2π sinh 2ωβ))^{1/2} exp(−ω[(x²+y²) coth 2ωβ − 2xy cosech 2ωβ]/2)`.
pub fn mehler(beta: f64, omega: f64, x: f64, y: f64) -> f64 {
    log_mehler(beta, omega, x, y).exp()
}

/// Product of single-site Mehler kernels.
pub fn mehler_multi(beta: f64, omega: f64, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter().zip(ys.iter()).map(|(&x, &y)| log_mehler(beta, omega, x, y)).sum::<f64>().exp()
}

pub fn mehler_kernel(beta: f64, omega: f64, grid: &GridSpec) -> Result<HeatKernel> {
    positive_beta(beta)?;
    grid.validate()?;
    let x = grid.nodes();
    let values = Array2::from_shape_fn((x.len(), x.len()), |(i, j)| mehler(beta, omega, x[i], x[j]));
    Ok(HeatKernel { grid: *grid, values, beta, kind: KernelKind::Mehler })
}

fn positive_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")))
    }
}

/// Largest neglected Boltzmann factor accepted by [`eigensum_kernel`].
pub const EIGENSUM_TAIL_LIMIT: f64 = 1e-12;

/// `Σ_{n<dim} e^{−βω(2n+1)} ψ_n(x) ψ_n(y)` and the neglected weight
/// `Σ_{n≥dim} e^{−βω(2n+1)}`.
pub fn eigensum_kernel(basis: &HermiteBasis, beta: f64, grid: &GridSpec) -> Result<(HeatKernel, f64)> {
    positive_beta(beta)?;
    grid.validate()?;
    let omega = basis.omega();
    let first_dropped = (-beta * omega * (2 * basis.dim() + 1) as f64).exp();
    if first_dropped >= EIGENSUM_TAIL_LIMIT {
        return Err(Error::InsufficientDim { dim: basis.dim(), beta, tail: first_dropped });
    }
    let tail = first_dropped / -(-2.0 * beta * omega).exp_m1();
    let nodes = grid.nodes();
    let psi = eigenfunctions_at(basis, nodes.as_slice().expect("contiguous"));
    let weights = basis.energies().mapv(|e| (-beta * e).exp());
    let values = spectral_sum(&psi, &weights);
    Ok((HeatKernel { grid: *grid, values, beta, kind: KernelKind::Eigensum }, tail))
}

/// `Σ_n w_n f_n(x_i) f_n(x_j)` from sampled functions (columns).
fn spectral_sum(f: &Array2<f64>, weights: &Array1<f64>) -> Array2<f64> {
    let mut scaled = f.clone();
    for (mut col, &w) in scaled.columns_mut().into_iter().zip(weights.iter()) {
        col.mapv_inplace(|v| v * w);
    }
    scaled.dot(&f.t())
}

/// Eigensum kernel of `h + V` from a basis of `basis.dim()` oscillator
/// functions; the reference for Trotter convergence.
pub fn interacting_eigensum_kernel(basis: &HermiteBasis, v: &PotentialSpec, beta: f64, grid: &GridSpec) -> Result<HeatKernel> {
    positive_beta(beta)?;
    let quad_grid = GridSpec::for_basis(basis);
    let h = crate::basis::harmonic_hamiltonian(basis) + multiplication_operator(basis, v, &quad_grid)?;
    let (e, u) = eigh(&h)?;
    let nodes = grid.nodes();
    let f = eigenfunctions_at(basis, nodes.as_slice().expect("contiguous")).dot(&u);
    let weights = e.mapv(|e| (-beta * e).exp());
    Ok(HeatKernel { grid: *grid, values: spectral_sum(&f, &weights), beta, kind: KernelKind::Eigensum })
}

/// Kernel of `e^{−β₁h}e^{−β₂h}` by quadrature: `K₁ W K₂`.
pub fn compose(a: &HeatKernel, b: &HeatKernel) -> Result<HeatKernel> {
    if a.grid != b.grid {
        return Err(Error::InvalidParameter("kernels live on different grids".into()));
    }
    let w = a.grid.weights();
    let mut bw = b.values.clone();
    for (mut row, &wi) in bw.rows_mut().into_iter().zip(w.iter()) {
        row.mapv_inplace(|v| v * wi);
    }
    Ok(HeatKernel { grid: a.grid, values: a.values.dot(&bw), beta: a.beta + b.beta, kind: a.kind })
}

/// Pieces of a single-site Lie–Trotter product `(e^{−τh/m} e^{−τV/m})^m`.
struct TrotterFactors {
    nodes: Array1<f64>,
    /// `A_ij = k_{τ/m}(x_i, x_j)`
    a: Array2<f64>,
    /// `e^{−τV(x_j)/m}`
    d: Array1<f64>,
    /// `T = A·diag(w·d)`
    t: Array2<f64>,
}

impl TrotterFactors {
    fn new(v: &PotentialSpec, omega: f64, beta: f64, m: usize, grid: &GridSpec) -> Self {
        let step = beta / m as f64;
        let nodes = grid.nodes();
        let n = nodes.len();
        let a = Array2::from_shape_fn((n, n), |(i, j)| mehler(step, omega, nodes[i], nodes[j]));
        let d = nodes.mapv(|x| (-step * v.eval(x)).exp());
        let wd = &grid.weights() * &d;
        let mut t = a.clone();
        for (mut col, &s) in t.columns_mut().into_iter().zip(wd.iter()) {
            col.mapv_inplace(|x| x * s);
        }
        Self { nodes, a, d, t }
    }

    /// Rows of the product kernel at the points `rows`; the first Mehler
    /// factor is evaluated in closed form there.
    fn rows(&self, rows: &[f64], omega: f64, step: f64, m: usize, grid: &GridSpec) -> Array2<f64> {
        let n = self.nodes.len();
        let first = Array2::from_shape_fn((rows.len(), n), |(i, j)| mehler(step, omega, rows[i], self.nodes[j]));
        // tail = T^{m−1} A D  (columns scaled by D)
        let mut tail = self.a.clone();
        for (mut col, &s) in tail.columns_mut().into_iter().zip(self.d.iter()) {
            col.mapv_inplace(|x| x * s);
        }
        if m == 1 {
            return scale_columns(first, &self.d);
        }
        for _ in 0..m - 2 {
            tail = self.t.dot(&tail);
        }
        let wd = &grid.weights() * &self.d;
        let first = scale_columns(first, &wd);
        first.dot(&tail)
    }
}

fn scale_columns(mut m: Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    for (mut col, &v) in m.columns_mut().into_iter().zip(s.iter()) {
        col.mapv_inplace(|x| x * v);
    }
    m
}

/// Single-site Lie–Trotter kernel `(e^{−βh/m} e^{−βV/m})^m (x, y)` on the grid.
/// The product is not symmetrized, so `K(x,y) ≠ K(y,x)` at finite `m`.
pub fn trotter_kernel(v: &PotentialSpec, omega: f64, beta: f64, m: usize, grid: &GridSpec) -> Result<HeatKernel> {
    let rows = grid.nodes();
    let values = trotter_rows(v, omega, beta, m, grid, rows.as_slice().expect("contiguous"))?;
    Ok(HeatKernel { grid: *grid, values, beta, kind: KernelKind::Trotter(m) })
}

/// Rows `x ∈ rows` of the Trotter kernel, columns on the grid.
pub fn trotter_rows(v: &PotentialSpec, omega: f64, beta: f64, m: usize, grid: &GridSpec, rows: &[f64]) -> Result<Array2<f64>> {
    positive_beta(beta)?;
    grid.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("Trotter steps must be positive".into()));
    }
    check_step_resolution(omega, beta / m as f64, grid)?;
    let f = TrotterFactors::new(v, omega, beta, m, grid);
    Ok(f.rows(rows, omega, beta / m as f64, m, grid))
}

/// The short-time Mehler factor has width `√(tanh(2ωs)/ω)`; the trapezoid rule
/// needs a few points across it.
fn check_step_resolution(omega: f64, step: f64, grid: &GridSpec) -> Result<()> {
    let width = ((2.0 * omega * step).tanh() / omega).sqrt();
    if grid.spacing() > width {
        return Err(Error::GridTooCoarse(format!(
            "spacing {:.3e} exceeds the Trotter step width {width:.3e}",
            grid.spacing()
        )));
    }
    Ok(())
}

/// Trotter error against a reference kernel for each `m`, and the observed
/// orders `log₂(err(m)/err(2m))` between consecutive entries.
#[derive(Debug, Clone, Serialize)]
pub struct TrotterConvergence {
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

pub fn trotter_convergence(
    v: &PotentialSpec,
    omega: f64,
    beta: f64,
    steps: &[usize],
    grid: &GridSpec,
    reference: &HeatKernel,
) -> Result<TrotterConvergence> {
    let errors = steps
        .iter()
        .map(|&m| Ok(trotter_kernel(v, omega, beta, m, grid)?.relative_error(reference)))
        .collect::<Result<Vec<_>>>()?;
    let orders = errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, m)| (e[0] / e[1]).ln() / (m[1] as f64 / m[0] as f64).ln())
        .collect();
    Ok(TrotterConvergence { steps: steps.to_vec(), errors, orders })
}

/// Columns `K(·, y_s)` of the two-site Trotter kernel
/// `(e^{−βH^h/m} e^{−βΥ/m})^m` with `Υ = V(x₀) + V(x₁) + φ(x₀ − x₁)`,
/// each returned as a `points × points` array over `(x₀, x₁)`.
pub fn trotter_two_site_columns(
    v: &PotentialSpec,
    phi: &PotentialSpec,
    omega: f64,
    beta: f64,
    m: usize,
    grid: &GridSpec,
    columns: &[(usize, usize)],
) -> Result<Vec<Array2<f64>>> {
    positive_beta(beta)?;
    grid.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("Trotter steps must be positive".into()));
    }
    let step = beta / m as f64;
    check_step_resolution(omega, step, grid)?;
    let x = grid.nodes();
    let n = x.len();
    let w = grid.weights();
    let a = Array2::from_shape_fn((n, n), |(i, j)| mehler(step, omega, x[i], x[j]));
    let d = Array2::from_shape_fn((n, n), |(i, j)| (-step * (v.eval(x[i]) + v.eval(x[j]) + phi.eval(x[i] - x[j]))).exp());
    let wd = Array2::from_shape_fn((n, n), |(i, j)| w[i] * w[j] * d[[i, j]]);
    let at = a.t().to_owned();
    columns
        .iter()
        .map(|&(j0, j1)| {
            if j0 >= n || j1 >= n {
                return Err(Error::InvalidParameter(format!("column ({j0}, {j1}) outside the grid")));
            }
            let dy = d[[j0, j1]];
            // A[:, y₀] ⊗ A[:, y₁] · D(y)
            let mut col = Array2::from_shape_fn((n, n), |(i0, i1)| a[[i0, j0]] * a[[i1, j1]] * dy);
            for _ in 0..m - 1 {
                col = a.dot(&(&col * &wd)).dot(&at);
            }
            Ok(col)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PairSandwichReport {
    pub phi_sup: f64,
    /// Extremes of `log(K_coupled/K_decoupled)` over the sampled entries.
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Pointwise comparison of the coupled two-site Trotter kernel with the
/// decoupled one (`φ` removed) against `e^{±2β‖φ‖∞}`.
pub fn pair_kernel_sandwich(
    v: &PotentialSpec,
    phi: &PotentialSpec,
    omega: f64,
    beta: f64,
    m: usize,
    grid: &GridSpec,
    columns: &[(usize, usize)],
) -> Result<PairSandwichReport> {
    let coupled = trotter_two_site_columns(v, phi, omega, beta, m, grid, columns)?;
    let free = trotter_two_site_columns(v, &PotentialSpec::zero(), omega, beta, m, grid, columns)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (c, f) in coupled.iter().zip(free.iter()) {
        let peak = f.iter().fold(0.0f64, |a, b| a.max(*b));
        for (a, b) in c.iter().zip(f.iter()) {
            // entries far below the column peak carry no digits
            if *b > 1e-200 && *b > peak * 1e-250 {
                let r = (a / b).ln();
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    let phi_sup = phi.sup_norm();
    let bound = 2.0 * beta * phi_sup;
    Ok(PairSandwichReport { phi_sup, min_log_ratio: lo, max_log_ratio: hi, bound, passed: lo >= -bound - 1e-9 && hi <= bound + 1e-9 })
}

/// Composed Mehler integral `∫ k(x,z₁)k(z₁,z₂)…k(z_{m−1},y) dz` by quadrature
/// after re-centering each `z_k` by `s_k` (length `m−1`).
pub fn shifted_composition(beta: f64, omega: f64, x: f64, y: f64, shifts: &[f64], grid: &GridSpec) -> f64 {
    let m = shifts.len() + 1;
    let step = beta / m as f64;
    let z = grid.nodes();
    let w = grid.weights();
    // v(z) = k(x, z + s₁)
    let mut v: Array1<f64> = z.mapv(|zi| mehler(step, omega, x, zi + shifts.first().copied().unwrap_or(0.0)));
    if shifts.is_empty() {
        return mehler(beta, omega, x, y);
    }
    for k in 1..shifts.len() {
        let (s_prev, s) = (shifts[k - 1], shifts[k]);
        let vw = &v * &w;
        v = Array1::from_shape_fn(z.len(), |j| {
            z.iter().zip(vw.iter()).map(|(&zi, &c)| c * mehler(step, omega, zi + s_prev, z[j] + s)).sum()
        });
    }
    let s_last = *shifts.last().expect("nonempty");
    z.iter().zip(v.iter()).zip(w.iter()).map(|((&zi, &c), &wi)| wi * c * mehler(step, omega, zi + s_last, y)).sum()
}

/// Solves `s_{k−1} − 2cosh(a) s_k + s_{k+1} = 0`, `s₀ = t`, `s_m = 0`,
/// `a = 2ωβ/m`: the shifts that cancel the linear terms of the composed
/// Mehler exponent when `x` moves by `t`. Returns `s₁ … s_{m−1}`.
pub fn shift_solution(omega: f64, beta: f64, m: usize, t: f64) -> Vec<f64> {
    if m < 2 {
        return Vec::new();
    }
    let a = 2.0 * omega * beta / m as f64;
    let diag = -2.0 * a.cosh();
    let n = m - 1;
    // Thomas algorithm, unit off-diagonals
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    rhs[0] = -t;
    c[0] = 1.0 / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let denom = diag - c[i - 1];
        c[i] = 1.0 / denom;
        d[i] = (rhs[i] - d[i - 1]) / denom;
    }
    let mut s = vec![0.0; n];
    s[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        s[i] = d[i] - c[i] * s[i + 1];
    }
    s
}

/// `Ã = max_{n,k} |s_k|/|t|` over the given step counts.
pub fn shift_amplification(omega: f64, beta: f64, steps: &[usize]) -> f64 {
    steps
        .iter()
        .flat_map(|&m| shift_solution(omega, beta, m, 1.0))
        .fold(0.0f64, |a, s| a.max(s.abs()))
        .max(1.0)
}

/// `c(t) = sup|V(·+t) − V| + 2 sup|φ(·+t) − φ|`.
pub fn continuity_modulus(v: &PotentialSpec, phi: &PotentialSpec, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    shift_sup(v, t) + 2.0 * shift_sup(phi, t)
}

fn shift_sup(f: &PotentialSpec, t: f64) -> f64 {
    if f.is_zero() {
        return 0.0;
    }
    let (lo, hi) = f.effective_support();
    let width = f.terms.iter().map(|b| b.width).fold(f64::INFINITY, f64::min);
    let g = |x: f64| f.eval(x + t) - f.eval(x);
    sup_abs(g, (lo - t.abs(), hi + t.abs()), width.min(t.abs().max(1e-6)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftRatioReport {
    pub beta: f64,
    pub t: f64,
    pub steps: usize,
    pub a_tilde: f64,
    pub modulus: f64,
    /// `β·c(Ãt)`: half-width of the allowed band for the log ratio.
    pub envelope: f64,
    /// Extremes of `log[K(x+t,y)/K(x,y)] − log[k^h(x+t,y)/k^h(x,y)]`.
    pub min_log_excess: f64,
    pub max_log_excess: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Compares the shift ratio of the single-site Trotter kernel of `h + V`
/// with the Mehler ratio on `|x|, |y| ≤ window`; the log difference must stay
/// within `±β c(Ã t)`.
pub fn kernel_shift_ratio_check(
    v: &PotentialSpec,
    omega: f64,
    beta: f64,
    t: f64,
    m: usize,
    grid: &GridSpec,
    window: f64,
) -> Result<ShiftRatioReport> {
    let nodes = grid.nodes();
    let rows: Vec<f64> = nodes.iter().copied().filter(|x| x.abs() <= window).collect();
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty sample window".into()));
    }
    if rows.iter().any(|x| x + t > grid.x_max || x + t < grid.x_min) {
        return Err(Error::GridTooCoarse("shifted rows leave the grid".into()));
    }
    let shifted: Vec<f64> = rows.iter().map(|x| x + t).collect();
    let base = trotter_rows(v, omega, beta, m, grid, &rows)?;
    let moved = trotter_rows(v, omega, beta, m, grid, &shifted)?;
    let a_tilde = shift_amplification(omega, beta, &[m / 4, m / 2, m].iter().copied().filter(|&k| k >= 2).collect::<Vec<_>>());
    let modulus = continuity_modulus(v, &PotentialSpec::zero(), a_tilde * t);
    let envelope = beta * modulus;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut samples = 0;
    for (i, &x) in rows.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            if y.abs() > window {
                continue;
            }
            let r = (moved[[i, j]] / base[[i, j]]).ln() - (log_mehler(beta, omega, x + t, y) - log_mehler(beta, omega, x, y));
            lo = lo.min(r);
            hi = hi.max(r);
            samples += 1;
        }
    }
    let slack = 1e-9;
    Ok(ShiftRatioReport {
        beta,
        t,
        steps: m,
        a_tilde,
        modulus,
        envelope,
        min_log_excess: lo,
        max_log_excess: hi,
        samples,
        passed: lo >= -envelope - slack && hi <= envelope + slack,
    })
}

/// Per-row sums `Σ_j w_j K_ij`, used to compare kernel mass.
pub fn row_mass(k: &HeatKernel) -> Array1<f64> {
    let w = k.grid.weights();
    (&k.values * &w.insert_axis(Axis(0))).sum_axis(Axis(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v_bump() -> PotentialSpec {
        PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap()
    }

    #[test]
    fn mehler_closed_form() {
        // (1/(2π sinh 1))^{1/2}
        assert_abs_diff_eq!(mehler(0.5, 1.0, 0.0, 0.0), 0.3680051987075608, epsilon = 1e-15);
        assert_eq!(mehler(0.7, 1.3, 0.4, -1.1), mehler(0.7, 1.3, -1.1, 0.4));
        assert!(mehler(40.0, 1.0, 0.0, 0.0) > 0.0);
    }

    #[test]
    fn mehler_matches_eigensum() {
        let grid = GridSpec::new(-6.0, 6.0, 256).unwrap();
        let basis = HermiteBasis::new(60, 1.0).unwrap();
        for beta in [0.25, 0.5, 1.0, 2.0] {
            let m = mehler_kernel(beta, 1.0, &grid).unwrap();
            let (e, _) = eigensum_kernel(&basis, beta, &grid).unwrap();
            assert!(m.relative_error(&e) <= 1e-8, "beta {beta}: {}", m.relative_error(&e));
        }
    }

    #[test]
    fn eigensum_low_temperature() {
        let grid = GridSpec::new(-4.0, 4.0, 33).unwrap();
        let basis = HermiteBasis::new(8, 1.0).unwrap();
        let (k, tail) = eigensum_kernel(&basis, 5.0, &grid).unwrap();
        assert!(tail < 1e-30);
        let psi0 = eigenfunctions_at(&basis, grid.nodes().as_slice().unwrap()).column(0).to_owned();
        for i in 0..33 {
            let lead = (-5.0f64).exp() * psi0[i] * psi0[i];
            assert!(((k.values[[i, i]] - lead) / lead).abs() <= (-10.0f64).exp() * 2.0 * (1.0 + grid.nodes()[i].powi(2)));
        }
    }

    #[test]
    fn eigensum_rejects_short_basis() {
        let grid = GridSpec::new(-4.0, 4.0, 16).unwrap();
        let basis = HermiteBasis::new(10, 1.0).unwrap();
        assert!(matches!(eigensum_kernel(&basis, 0.5, &grid), Err(Error::InsufficientDim { .. })));
    }

    #[test]
    fn eigensum_trace_is_partition_function() {
        let grid = GridSpec::new(-10.0, 10.0, 400).unwrap();
        let basis = HermiteBasis::new(40, 1.0).unwrap();
        let (k, _) = eigensum_kernel(&basis, 1.0, &grid).unwrap();
        let z = 1.0 / (2.0 * 1f64.sinh());
        assert_abs_diff_eq!(k.quadrature_trace(), z, epsilon = 1e-10);
        let peak = k.values.iter().fold(0.0f64, |a, b| a.max(*b));
        assert!(k.values.iter().all(|&v| v > -1e-14 * peak));
    }

    #[test]
    fn semigroup() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let a = mehler_kernel(0.3, 1.0, &grid).unwrap();
        let b = mehler_kernel(0.45, 1.0, &grid).unwrap();
        let ab = compose(&a, &b).unwrap();
        let direct = mehler_kernel(0.75, 1.0, &grid).unwrap();
        assert!(ab.relative_error(&direct) <= 1e-7);
    }

    #[test]
    fn trotter_without_potential_is_mehler() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let exact = mehler_kernel(1.0, 1.0, &grid).unwrap();
        for m in [1, 3, 8] {
            let k = trotter_kernel(&PotentialSpec::zero(), 1.0, 1.0, m, &grid).unwrap();
            assert!(k.relative_error(&exact) <= 1e-8, "m={m}");
        }
    }

    #[test]
    fn trotter_first_order() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let basis = HermiteBasis::new(64, 1.0).unwrap();
        let reference = interacting_eigensum_kernel(&basis, &v_bump(), 1.0, &grid).unwrap();
        let conv = trotter_convergence(&v_bump(), 1.0, 1.0, &[8, 16, 32], &grid, &reference).unwrap();
        for w in conv.errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.7..=2.3).contains(&ratio), "{conv:?}");
        }
    }

    #[test]
    fn trotter_rejects_coarse_grid() {
        let grid = GridSpec::new(-8.0, 8.0, 32).unwrap();
        assert!(matches!(trotter_kernel(&v_bump(), 1.0, 1.0, 64, &grid), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn trotter_trace_within_sandwich() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let k = trotter_kernel(&v_bump(), 1.0, 1.0, 32, &grid).unwrap();
        let z0 = 1.0 / (2.0 * 1f64.sinh());
        let tr = k.quadrature_trace();
        assert!(tr <= z0 + 1e-12 && tr >= z0 * (-0.5f64).exp() - 1e-12);
        assert!(k.values.iter().all(|&x| x >= 0.0));
        // asymmetry shrinks with m
        let k2 = trotter_kernel(&v_bump(), 1.0, 1.0, 64, &grid).unwrap();
        assert!(k2.asymmetry() < k.asymmetry());
    }

    #[test]
    fn two_site_decoupled_factorizes() {
        let grid = GridSpec::new(-6.0, 6.0, 64).unwrap();
        let cols = trotter_two_site_columns(&v_bump(), &PotentialSpec::zero(), 1.0, 0.5, 8, &grid, &[(30, 35)]).unwrap();
        let single = trotter_kernel(&v_bump(), 1.0, 0.5, 8, &grid).unwrap();
        let expect = Array2::from_shape_fn((64, 64), |(i, j)| single.values[[i, 30]] * single.values[[j, 35]]);
        assert!(relative_error(&cols[0], &expect) < 1e-12);
    }

    #[test]
    fn pair_kernel_within_envelope() {
        let grid = GridSpec::new(-6.0, 6.0, 64).unwrap();
        let phi = PotentialSpec::gaussian(0.3, 0.0, 1.0).unwrap();
        let rep = pair_kernel_sandwich(&v_bump(), &phi, 1.0, 0.5, 8, &grid, &[(32, 32), (20, 40), (10, 50)]).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_log_ratio - rep.min_log_ratio > 1e-3);
    }

    #[test]
    fn shift_identity() {
        let grid = GridSpec::new(-9.0, 9.0, 181).unwrap();
        let plain = shifted_composition(0.8, 1.0, 0.3, -0.4, &[0.0; 3], &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..5 {
            let s: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let moved = shifted_composition(0.8, 1.0, 0.3, -0.4, &s, &grid);
            assert!((moved - plain).abs() <= 1e-6 * plain);
        }
        assert!((plain - mehler(0.8, 1.0, 0.3, -0.4)).abs() < 1e-8);
    }

    #[test]
    fn shift_solution_closed_form() {
        for m in [2, 5, 16, 64] {
            let a = 2.0 * 0.5 / m as f64;
            let s = shift_solution(1.0, 0.5, m, 0.7);
            for (k, sk) in s.iter().enumerate() {
                let kk = (k + 1) as f64;
                let exact = 0.7 * ((m as f64 - kk) * a).sinh() / (m as f64 * a).sinh();
                assert_abs_diff_eq!(*sk, exact, epsilon = 1e-13);
            }
        }
        assert_abs_diff_eq!(shift_amplification(1.0, 0.5, &[4, 16, 64]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn modulus_values() {
        assert_eq!(continuity_modulus(&v_bump(), &v_bump(), 0.0), 0.0);
        assert_eq!(continuity_modulus(&PotentialSpec::zero(), &PotentialSpec::zero(), 0.3), 0.0);
        let v = PotentialSpec::gaussian(1.0, 0.0, 1.0).unwrap();
        // dense 1e−5 grid oracle
        assert_abs_diff_eq!(continuity_modulus(&v, &PotentialSpec::zero(), 0.1), 0.085633594518709, epsilon = 1e-10);
        let phi = PotentialSpec::gaussian(0.3, 0.0, 1.0).unwrap();
        let a = continuity_modulus(&v, &phi, 0.01);
        let b = continuity_modulus(&v, &phi, 0.1);
        assert!(a < b);
        assert_abs_diff_eq!(continuity_modulus(&v, &phi, -0.1), b, epsilon = 1e-12);
    }

    #[test]
    fn shift_ratio_trivial_cases() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let rep = kernel_shift_ratio_check(&PotentialSpec::zero(), 1.0, 1.0, 0.05, 16, &grid, 3.0).unwrap();
        assert!(rep.max_log_excess.abs() < 1e-8 && rep.min_log_excess.abs() < 1e-8);
        let rep = kernel_shift_ratio_check(&v_bump(), 1.0, 1.0, 0.0, 16, &grid, 3.0).unwrap();
        assert_eq!(rep.envelope, 0.0);
        assert!(rep.max_log_excess.abs() < 1e-12);
    }

    #[test]
    fn shift_ratio_interacting() {
        let grid = GridSpec::new(-8.0, 8.0, 256).unwrap();
        let rep = kernel_shift_ratio_check(&v_bump(), 1.0, 1.0, 0.05, 64, &grid, 3.0).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_log_excess - rep.min_log_excess > 0.0);
    }
}
