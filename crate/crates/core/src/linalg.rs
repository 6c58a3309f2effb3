//! Dense linear-algebra helpers shared by the physics modules.
//!
//! Everything here works on `ndarray` matrices. Hermitian eigenproblems go
//! through LAPACK via `ndarray-linalg`; the rest is plain array code.

use ndarray::{Array1, Array2, ArrayD, IxDyn, LinalgScalar};
use ndarray_linalg::{Scalar, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
pub use crate::syevd::DenseScalar;
use crate::syevd::{eigh_dc, eigvalsh_dc};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Kronecker product `a ⊗ b`.
pub fn kron<S: LinalgScalar + PartialEq>(a: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<S>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == S::zero() {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

pub fn identity<S: LinalgScalar>(n: usize) -> Array2<S> {
    Array2::eye(n)
}

pub fn to_complex(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|x| C64::new(x, 0.0))
}

/// Conjugate transpose.
pub fn adjoint<S: Scalar<Real = f64>>(a: &Array2<S>) -> Array2<S> {
    a.t().mapv(|x| x.conj())
}

/// Largest entrywise modulus of `a - a^†`.
pub fn hermitian_defect<S: Scalar<Real = f64>>(a: &Array2<S>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).abs();
            worst = worst.max(d);
        }
    }
    worst
}

pub fn max_abs<S: Scalar<Real = f64>>(a: &Array2<S>) -> f64 {
    a.iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max)
}

pub fn trace<S: LinalgScalar>(a: &Array2<S>) -> S {
    a.diag().iter().fold(S::zero(), |acc, &x| acc + x)
}

pub fn commutator<S: LinalgScalar>(a: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    a.dot(b) - b.dot(a)
}

/// Symmetrize `(a + a^†)/2` to remove rounding drift before an eigensolve.
pub fn hermitize<S: Scalar<Real = f64>>(a: &Array2<S>) -> Array2<S> {
    let half = S::from_real(S::real(0.5));
    (a + &adjoint(a)).mapv(|x| x * half)
}

/// Ascending eigenpairs of a Hermitian matrix. Each eigenvector is rotated so
/// that its largest-modulus entry is real and positive, which makes the output
/// independent of LAPACK's phase choices.
pub fn eigh<S>(a: &Array2<S>) -> Result<(Array1<f64>, Array2<S>)>
where
    S: DenseScalar,
{
    let scale = max_abs(a).max(1.0);
    let defect = hermitian_defect(a);
    if defect > 1e-9 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let (vals, mut vecs) = eigh_dc(&hermitize(a))?;
    for mut col in vecs.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            let m = v.abs();
            if m > best_abs * (1.0 + 1e-12) {
                best = i;
                best_abs = m;
            }
        }
        if best_abs > 0.0 {
            let pivot = col[best];
            let phase = pivot.conj().div_real(pivot.abs());
            col.mapv_inplace(|x| x * phase);
        }
    }
    Ok((vals, vecs))
}

pub fn eigvalsh<S>(a: &Array2<S>) -> Result<Array1<f64>>
where
    S: DenseScalar,
{
    eigvalsh_dc(&hermitize(a))
}

/// Spectral (operator) norm. Hermitian and anti-Hermitian inputs use the
/// eigenvalue route; everything else falls back to the SVD.
pub fn op_norm<S>(a: &Array2<S>) -> Result<f64>
where
    S: DenseScalar,
{
    if a.is_empty() {
        return Ok(0.0);
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        return Ok(0.0);
    }
    if hermitian_defect(a) <= 1e-13 * scale {
        let vals = eigvalsh(a)?;
        return Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let (_, s, _) = a.svd(false, false)?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// Spectral norm of a complex matrix that is Hermitian or anti-Hermitian up
/// to rounding. Commutators of Hermitian operators land here.
pub fn op_norm_c(a: &Array2<C64>) -> Result<f64> {
    let scale = max_abs(a);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let anti = a.iter().zip(a.t().iter()).fold(0.0f64, |m, (x, y)| m.max((x + y.conj()).norm()));
    if anti <= 1e-12 * scale {
        let h = a.mapv(|x| x * I);
        let vals = eigvalsh(&h)?;
        return Ok(vals.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    op_norm(a)
}

/// Trace norm (sum of singular values).
pub fn trace_norm<S>(a: &Array2<S>) -> Result<f64>
where
    S: DenseScalar,
{
    let scale = max_abs(a);
    if scale == 0.0 {
        return Ok(0.0);
    }
    if hermitian_defect(a) <= 1e-13 * scale {
        let vals = eigvalsh(a)?;
        return Ok(vals.iter().map(|v| v.abs()).sum());
    }
    let (_, s, _) = a.svd(false, false)?;
    Ok(s.iter().cloned().sum())
}

/// `f(A)` for Hermitian `A` through its eigendecomposition.
pub fn hermitian_function<S, F>(a: &Array2<S>, f: F) -> Result<Array2<C64>>
where
    S: DenseScalar,
    F: Fn(f64) -> C64,
{
    let (vals, vecs) = eigh(a)?;
    let vecs = vecs.mapv(|x| {
        C64::new(x.re(), x.im())
    });
    let mut scaled = vecs.clone();
    for (mut col, &v) in scaled.columns_mut().into_iter().zip(vals.iter()) {
        let fv = f(v);
        col.mapv_inplace(|x| x * fv);
    }
    Ok(scaled.dot(&adjoint(&vecs)))
}

/// `Uᵀ B U` for a real orthogonal `U` and complex `B`, done as real products.
pub fn rotate_real(u: &Array2<f64>, b: &Array2<C64>) -> Array2<C64> {
    let re = b.mapv(|x| x.re);
    let im = b.mapv(|x| x.im);
    let ut = u.t();
    let re = ut.dot(&re).dot(u);
    let im = ut.dot(&im).dot(u);
    combine(re, im)
}

/// `U B Uᵀ` for a real orthogonal `U` and complex `B`.
pub fn unrotate_real(u: &Array2<f64>, b: &Array2<C64>) -> Array2<C64> {
    let re = b.mapv(|x| x.re);
    let im = b.mapv(|x| x.im);
    let ut = u.t();
    let re = u.dot(&re).dot(&ut);
    let im = u.dot(&im).dot(&ut);
    combine(re, im)
}

fn combine(re: Array2<f64>, im: Array2<f64>) -> Array2<C64> {
    let mut out = Array2::<C64>::zeros(re.dim());
    ndarray::Zip::from(&mut out)
        .and(&re)
        .and(&im)
        .for_each(|o, &r, &i| *o = C64::new(r, i));
    out
}

/// Left-multiply `mat` (acting on `n_sites` tensor factors of dimension
/// `site_dim`, first factor most significant) by `local ⊗ 1`, where `local`
/// acts on the factor positions `positions` (ascending).
pub fn apply_local_left<S: LinalgScalar>(
    local: &Array2<S>,
    positions: &[usize],
    n_sites: usize,
    site_dim: usize,
    mat: &Array2<S>,
) -> Array2<S> {
    let (rows, cols) = mat.dim();
    debug_assert_eq!(rows, site_dim.pow(n_sites as u32));
    let k = positions.len();
    let local_dim = site_dim.pow(k as u32);
    debug_assert_eq!(local.dim(), (local_dim, local_dim));
    if k == n_sites {
        return local.dot(mat);
    }

    let mut shape = vec![site_dim; n_sites];
    shape.push(cols);
    let tensor = mat
        .to_owned()
        .into_shape(IxDyn(&shape))
        .expect("contiguous matrix reshapes to tensor");

    // Bring the acted-on factors to the front.
    let mut order: Vec<usize> = positions.to_vec();
    order.extend((0..=n_sites).filter(|p| !positions.contains(p)));
    let permuted = tensor.permuted_axes(IxDyn(&order));
    let rest = rows / local_dim * cols;
    let flat = permuted
        .as_standard_layout()
        .into_owned()
        .into_shape((local_dim, rest))
        .expect("standard layout reshapes");
    let acted = local.dot(&flat);

    let mut permuted_shape: Vec<usize> = order.iter().map(|&p| shape[p]).collect();
    permuted_shape.truncate(order.len());
    let acted = acted
        .into_shape(IxDyn(&permuted_shape))
        .expect("product keeps element count");
    let mut inverse = vec![0usize; order.len()];
    for (i, &p) in order.iter().enumerate() {
        inverse[p] = i;
    }
    let restored: ArrayD<S> = acted.permuted_axes(IxDyn(&inverse));
    restored
        .as_standard_layout()
        .into_owned()
        .into_shape((rows, cols))
        .expect("restores matrix shape")
}

/// Right-multiply `mat` by `local ⊗ 1` (see [`apply_local_left`]).
pub fn apply_local_right<S: LinalgScalar>(
    local: &Array2<S>,
    positions: &[usize],
    n_sites: usize,
    site_dim: usize,
    mat: &Array2<S>,
) -> Array2<S> {
    let lt = local.t().to_owned();
    let mt = mat.t().as_standard_layout().into_owned();
    let prod = apply_local_left(&lt, positions, n_sites, site_dim, &mt);
    prod.t().as_standard_layout().into_owned()
}

/// Random Hermitian matrix with i.i.d. Gaussian entries, normalized to unit
/// operator norm.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<C64> {
    let g = random_ginibre(n, rng);
    let h = hermitize(&g);
    let norm = op_norm(&h).unwrap_or(1.0).max(1e-300);
    h.mapv(|x| x / norm)
}

pub fn random_ginibre<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Full-rank random density matrix `G G^† / Tr(G G^†)`.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<C64> {
    let g = random_ginibre(n, rng);
    let rho = g.dot(&adjoint(&g));
    let tr = trace(&rho).re;
    hermitize(&rho.mapv(|x| x / tr))
}

/// `log(Σ exp(x_i))` without overflow.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `[P_0(x), …, P_n(x)]` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> Vec<f64> {
    let mut p = vec![1.0, x];
    for k in 1..n {
        let kf = k as f64;
        p.push(((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0));
    }
    p.truncate(n + 1);
    p
}

/// Legendre–Gauss nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let p = legendre(n, x);
            let dp = nf * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            let dx = p[n] / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let p = legendre(n, x);
        let dp = nf * (x * p[n] - p[n - 1]) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_ginibre(2, &mut rng);
        let b = random_ginibre(3, &mut rng);
        let c = random_ginibre(2, &mut rng);
        let d = random_ginibre(3, &mut rng);
        let lhs = kron(&a, &b).dot(&kron(&c, &d));
        let rhs = kron(&a.dot(&c), &b.dot(&d));
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn local_application_matches_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = 3;
        let local = random_ginibre(d * d, &mut rng);
        let mat = random_ginibre(d * d * d, &mut rng);
        // local acts on factors 0 and 2 of three.
        let swap = {
            // permutation matrix exchanging factors 1 and 2
            let n = d * d * d;
            let mut p = Array2::<C64>::zeros((n, n));
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        p[[a * d * d + b * d + c, a * d * d + c * d + b]] = C64::new(1.0, 0.0);
                    }
                }
            }
            p
        };
        let full = swap.dot(&kron(&local, &identity::<C64>(d))).dot(&swap);
        let expect = full.dot(&mat);
        let got = apply_local_left(&local, &[0, 2], 3, d, &mat);
        assert!(max_abs(&(expect - got)) < 1e-12);
        let expect_r = mat.dot(&full);
        let got_r = apply_local_right(&local, &[0, 2], 3, d, &mat);
        assert!(max_abs(&(expect_r - got_r)) < 1e-12);
    }

    #[test]
    fn eigh_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(24, &mut rng);
        let (vals, vecs) = eigh(&h).unwrap();
        let mut scaled = vecs.clone();
        for (mut c, &v) in scaled.columns_mut().into_iter().zip(vals.iter()) {
            c.mapv_inplace(|x| x * v);
        }
        let back = scaled.dot(&adjoint(&vecs));
        assert!(max_abs(&(back - &h)) < 1e-12);
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let a = ndarray::array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(eigh(&a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn norms_of_simple_matrices() {
        let a = ndarray::array![[3.0, 0.0], [0.0, -4.0]];
        assert!((op_norm(&a).unwrap() - 4.0).abs() < 1e-14);
        assert!((trace_norm(&a).unwrap() - 7.0).abs() < 1e-14);
        let n = ndarray::array![[0.0, 2.0], [0.0, 0.0]];
        assert!((op_norm(&n).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m12: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m12 - 2.0 / 13.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }
}
