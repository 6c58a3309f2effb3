//! Divide-and-conquer Hermitian eigensolvers called straight through LAPACK.
//! The generic wrapper routes through ?syev/?heev, which is several times
//! slower at the dimensions the chain experiments reach.

use std::os::raw::{c_char, c_int};

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Lapack, Scalar};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalars with a divide-and-conquer Hermitian eigensolver.
pub trait DenseScalar: Scalar<Real = f64> + Lapack {
    /// Runs ?syevd/?heevd on a column-major `n x n` buffer (lower triangle).
    /// With `vectors` the buffer is overwritten by the eigenvectors.
    #[doc(hidden)]
    fn heevd(vectors: bool, n: usize, a: &mut [Self], w: &mut [f64]) -> Result<()>;
}

fn check(info: c_int, routine: &str) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Linalg(format!("{routine} returned info={info}")))
    }
}

impl DenseScalar for f64 {
    fn heevd(vectors: bool, n: usize, a: &mut [f64], w: &mut [f64]) -> Result<()> {
        let jobz = if vectors { b'V' } else { b'N' } as c_char;
        let uplo = b'L' as c_char;
        let n_i = n as c_int;
        let lda = n.max(1) as c_int;
        let mut info: c_int = 0;
        let mut work_q = [0.0f64];
        let mut iwork_q = [0 as c_int];
        let query: c_int = -1;
        unsafe {
            lapack_sys::dsyevd_(
                &jobz, &uplo, &n_i, a.as_mut_ptr(), &lda, w.as_mut_ptr(),
                work_q.as_mut_ptr(), &query, iwork_q.as_mut_ptr(), &query, &mut info,
            );
        }
        check(info, "dsyevd workspace query")?;
        let lwork = work_q[0] as c_int;
        let liwork = iwork_q[0];
        let mut work = vec![0.0f64; lwork.max(1) as usize];
        let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
        unsafe {
            lapack_sys::dsyevd_(
                &jobz, &uplo, &n_i, a.as_mut_ptr(), &lda, w.as_mut_ptr(),
                work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
            );
        }
        check(info, "dsyevd")
    }
}

impl DenseScalar for Complex64 {
    fn heevd(vectors: bool, n: usize, a: &mut [Complex64], w: &mut [f64]) -> Result<()> {
        let jobz = if vectors { b'V' } else { b'N' } as c_char;
        let uplo = b'L' as c_char;
        let n_i = n as c_int;
        let lda = n.max(1) as c_int;
        let mut info: c_int = 0;
        let mut work_q = [Complex64::new(0.0, 0.0)];
        let mut rwork_q = [0.0f64];
        let mut iwork_q = [0 as c_int];
        let query: c_int = -1;
        // Complex64 and the bindgen complex type are both two packed f64s.
        let ap = a.as_mut_ptr() as *mut lapack_sys::__BindgenComplex<f64>;
        unsafe {
            lapack_sys::zheevd_(
                &jobz, &uplo, &n_i, ap, &lda, w.as_mut_ptr(),
                work_q.as_mut_ptr() as *mut _, &query, rwork_q.as_mut_ptr(), &query,
                iwork_q.as_mut_ptr(), &query, &mut info,
            );
        }
        check(info, "zheevd workspace query")?;
        let lwork = work_q[0].re as c_int;
        let lrwork = rwork_q[0] as c_int;
        let liwork = iwork_q[0];
        let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
        let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
        let mut iwork = vec![0 as c_int; liwork.max(1) as usize];
        unsafe {
            lapack_sys::zheevd_(
                &jobz, &uplo, &n_i, ap, &lda, w.as_mut_ptr(),
                work.as_mut_ptr() as *mut _, &lwork, rwork.as_mut_ptr(), &lrwork,
                iwork.as_mut_ptr(), &liwork, &mut info,
            );
        }
        check(info, "zheevd")
    }
}

/// Eigenpairs of a Hermitian matrix; only the lower triangle is read.
pub(crate) fn eigh_dc<S: DenseScalar>(a: &Array2<S>) -> Result<(Array1<f64>, Array2<S>)> {
    let n = a.nrows();
    let mut f = Array2::zeros((n, n).f());
    f.assign(a);
    let mut w = vec![0.0; n];
    if n > 0 {
        let buf = f.as_slice_memory_order_mut().expect("contiguous");
        S::heevd(true, n, buf, &mut w)?;
    }
    Ok((Array1::from(w), f))
}

pub(crate) fn eigvalsh_dc<S: DenseScalar>(a: &Array2<S>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let mut f = Array2::zeros((n, n).f());
    f.assign(a);
    let mut w = vec![0.0; n];
    if n > 0 {
        let buf = f.as_slice_memory_order_mut().expect("contiguous");
        S::heevd(false, n, buf, &mut w)?;
    }
    Ok(Array1::from(w))
}
