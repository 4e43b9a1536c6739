//! Dense factorizations (in place, via faer), a 1-norm condition estimator
//! and a matrix-free GMRES.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::lu::partial_pivoting as pplu;
use faer::perm::PermRef;
use faer::traits::ComplexField;
use faer::{Mat, MatMut, MatRef, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn par() -> Par {
    let n = rayon::current_num_threads();
    if n > 1 {
        Par::rayon(n)
    } else {
        Par::Seq
    }
}

/// Scalars the factorizations are used with.
pub trait Scalar: ComplexField + Copy {
    fn magnitude(&self) -> f64;
}

impl Scalar for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Scalar for f32 {
    fn magnitude(&self) -> f64 {
        self.abs() as f64
    }
}

impl Scalar for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// A factorized square matrix; the factors overwrite the input storage.
pub enum DenseFactor<T> {
    Cholesky(Mat<T>),
    Lu {
        lu: Mat<T>,
        fwd: Vec<usize>,
        bwd: Vec<usize>,
    },
}

impl<T: Scalar> DenseFactor<T> {
    /// Cholesky factorization; `None` when the matrix is not numerically
    /// positive definite (the storage is consumed either way).
    pub fn cholesky(mut a: Mat<T>) -> Option<Self> {
        let n = a.nrows();
        let p = par();
        let mut mem = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<T>(
            n,
            p,
            Default::default(),
        ));
        let stack = MemStack::new(&mut mem);
        llt::factor::cholesky_in_place(
            a.as_mut(),
            Default::default(),
            p,
            stack,
            Default::default(),
        )
        .ok()?;
        Some(DenseFactor::Cholesky(a))
    }

    /// LU with partial pivoting; fails on an exactly zero or non-finite pivot.
    pub fn lu(mut a: Mat<T>) -> Result<Self> {
        let n = a.nrows();
        let p = par();
        let mut fwd = vec![0usize; n];
        let mut bwd = vec![0usize; n];
        let mut mem = MemBuffer::new(pplu::factor::lu_in_place_scratch::<usize, T>(
            n,
            n,
            p,
            Default::default(),
        ));
        pplu::factor::lu_in_place(
            a.as_mut(),
            &mut fwd,
            &mut bwd,
            p,
            MemStack::new(&mut mem),
            Default::default(),
        );
        for i in 0..n {
            let d = a[(i, i)].magnitude();
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
        }
        Ok(DenseFactor::Lu { lu: a, fwd, bwd })
    }

    pub fn dim(&self) -> usize {
        match self {
            DenseFactor::Cholesky(l) => l.nrows(),
            DenseFactor::Lu { lu, .. } => lu.nrows(),
        }
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self, DenseFactor::Cholesky(_))
    }

    /// Overwrites `rhs` with `A^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: MatMut<'_, T>) {
        let p = par();
        match self {
            DenseFactor::Cholesky(l) => {
                let mut mem = MemBuffer::new(llt::solve::solve_in_place_scratch::<T>(
                    l.nrows(),
                    rhs.ncols(),
                    p,
                ));
                llt::solve::solve_in_place(l.as_ref(), rhs, p, MemStack::new(&mut mem));
            }
            DenseFactor::Lu { lu, fwd, bwd } => {
                let perm = PermRef::new_checked(fwd, bwd, lu.nrows());
                let mut mem = MemBuffer::new(pplu::solve::solve_in_place_scratch::<usize, T>(
                    lu.nrows(),
                    rhs.ncols(),
                    p,
                ));
                pplu::solve::solve_in_place(
                    lu.as_ref(),
                    lu.as_ref(),
                    perm,
                    rhs,
                    p,
                    MemStack::new(&mut mem),
                );
            }
        }
    }

    /// Overwrites `rhs` with `A^{-T} rhs` (plain transpose, no conjugation).
    pub fn solve_transpose_in_place(&self, rhs: MatMut<'_, T>) {
        let p = par();
        match self {
            // the Cholesky path is only used for real symmetric matrices
            DenseFactor::Cholesky(_) => self.solve_in_place(rhs),
            DenseFactor::Lu { lu, fwd, bwd } => {
                let perm = PermRef::new_checked(fwd, bwd, lu.nrows());
                let mut mem = MemBuffer::new(
                    pplu::solve::solve_transpose_in_place_scratch::<usize, T>(
                        lu.nrows(),
                        rhs.ncols(),
                        p,
                    ),
                );
                pplu::solve::solve_transpose_in_place(
                    lu.as_ref(),
                    lu.as_ref(),
                    perm,
                    rhs,
                    p,
                    MemStack::new(&mut mem),
                );
            }
        }
    }

    pub fn solve(&self, rhs: MatRef<'_, T>) -> Mat<T> {
        let mut x = rhs.to_owned();
        self.solve_in_place(x.as_mut());
        x
    }
}

/// Maximum absolute column sum.
pub fn one_norm(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Lower estimate of `||A^{-1}||_1` from a factorization (Hager's method
/// with Higham's alternating-sign safeguard).
pub fn inverse_one_norm_estimate(f: &DenseFactor<f64>) -> f64 {
    hager_estimate(
        f.dim(),
        |x: &mut Mat<f64>| f.solve_in_place(x.as_mut()),
        |x: &mut Mat<f64>| f.solve_transpose_in_place(x.as_mut()),
    )
}

/// Hager's estimator for `||A^{-1}||_1` given solves with `A` and `A^T`.
pub fn hager_estimate(n: usize, solve: impl Fn(&mut Mat<f64>), solve_t: impl Fn(&mut Mat<f64>)) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0f64;
    let mut last = usize::MAX;
    for _ in 0..5 {
        let mut y = x.clone();
        solve(&mut y);
        est = est.max((0..n).map(|i| y[(i, 0)].abs()).sum());
        let mut z = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        solve_t(&mut z);
        let (j, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].abs()))
            .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx || j == last {
            break;
        }
        last = j;
        x = Mat::zeros(n, 1);
        x[(j, 0)] = 1.0;
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut b = Mat::<f64>::from_fn(n, 1, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / denom)
    });
    solve(&mut b);
    let alt = 2.0 * (0..n).map(|i| b[(i, 0)].abs()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt)
}

/// Solver for symmetric positive definite systems: a single-precision
/// Cholesky factor refined to double precision against the original matrix.
/// Falls back to a double-precision LU when the matrix is not numerically
/// positive definite in single precision.
pub enum SpdSolver {
    Refined { a: Mat<f64>, low: DenseFactor<f32>, norm1: f64 },
    Direct { f: DenseFactor<f64>, norm1: f64 },
}

const REFINE_MAX: usize = 30;

impl SpdSolver {
    pub fn new(a: Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        let norm1 = one_norm(a.as_ref());
        if !norm1.is_finite() {
            return Err(Error::Singular("matrix has non-finite entries".into()));
        }
        let low = Mat::<f32>::from_fn(n, n, |i, j| a[(i, j)] as f32);
        match DenseFactor::cholesky(low) {
            Some(low) => Ok(SpdSolver::Refined { a, low, norm1 }),
            None => {
                log::warn!("matrix is not positive definite in single precision, using LU");
                Ok(SpdSolver::Direct { f: DenseFactor::lu(a)?, norm1 })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Refined { a, .. } => a.nrows(),
            SpdSolver::Direct { f, .. } => f.dim(),
        }
    }

    fn low_solve(low: &DenseFactor<f32>, r: &Mat<f64>) -> Mat<f64> {
        let mut r32 = Mat::<f32>::from_fn(r.nrows(), r.ncols(), |i, j| r[(i, j)] as f32);
        low.solve_in_place(r32.as_mut());
        Mat::<f64>::from_fn(r.nrows(), r.ncols(), |i, j| r32[(i, j)] as f64)
    }

    /// `A^{-1} b` to double-precision accuracy.
    pub fn solve(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match self {
            SpdSolver::Direct { f, .. } => Ok(f.solve(b)),
            SpdSolver::Refined { a, low, .. } => {
                let mut x = Self::low_solve(low, &b.to_owned());
                let mut prev = f64::INFINITY;
                for _ in 0..REFINE_MAX {
                    let r = b - a * &x;
                    let dx = Self::low_solve(low, &r);
                    x += &dx;
                    let step = dx.norm_max() / x.norm_max();
                    if step <= 4.0 * f64::EPSILON {
                        return Ok(x);
                    }
                    if step > 0.5 * prev {
                        // stagnated at the attainable accuracy
                        return Ok(x);
                    }
                    prev = step;
                }
                Err(Error::IllConditioned {
                    condition: self.condition_estimate(),
                    context: "iterative refinement did not converge".into(),
                })
            }
        }
    }

    /// 1-norm condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        match self {
            SpdSolver::Direct { f, norm1 } => norm1 * inverse_one_norm_estimate(f),
            SpdSolver::Refined { low, norm1, .. } => {
                let s = |x: &mut Mat<f64>| *x = Self::low_solve(low, x);
                norm1 * hager_estimate(self.dim(), s, s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Target relative residual `||b - A x|| / ||b||`.
    pub tol: f64,
    /// Total matvec budget.
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // <a, b> = sum conj(a_i) b_i
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// GMRES without restarts for the operator `apply(x, y): y = A x`.
///
/// The Arnoldi recurrence runs until the estimated residual falls below the
/// target; the true residual is then recomputed and, if rounding has left it
/// above the target, a correction cycle continues from it within the same
/// budget.
pub fn gmres<F>(apply: F, b: &[Complex64], x0: Option<&[Complex64]>, opts: GmresOptions) -> Result<GmresOutcome>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![Complex64::new(0.0, 0.0); n],
    };
    if bnorm == 0.0 {
        return Ok(GmresOutcome {
            x: vec![Complex64::new(0.0, 0.0); n],
            iterations: 0,
            residual: 0.0,
            history: vec![0.0],
        });
    }
    let mut history = Vec::new();
    let mut used = 0usize;
    let mut ax = vec![Complex64::new(0.0, 0.0); n];
    loop {
        apply(&x, &mut ax);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let rnorm = norm(&r);
        let rel = rnorm / bnorm;
        history.push(rel);
        if rel <= opts.tol {
            return Ok(GmresOutcome {
                x,
                iterations: used,
                residual: rel,
                history,
            });
        }
        if used >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: used,
                residual: rel,
                history,
            });
        }
        let budget = opts.max_iter - used;
        // aim a little below the target so the recomputed residual passes
        let inner_tol = 0.5 * opts.tol * bnorm;
        let (dx, steps) = arnoldi_cycle(&apply, &r, rnorm, inner_tol, budget, &mut history, bnorm);
        used += steps;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
}

fn arnoldi_cycle<F>(
    apply: &F,
    r: &[Complex64],
    rnorm: f64,
    abs_tol: f64,
    budget: usize,
    history: &mut Vec<f64>,
    bnorm: f64,
) -> (Vec<Complex64>, usize)
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let n = r.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut basis: Vec<Vec<Complex64>> = vec![r.iter().map(|z| z / rnorm).collect()];
    // Hessenberg columns after Givens rotations (upper triangular R)
    let mut rcols: Vec<Vec<Complex64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<Complex64> = Vec::new();
    let mut g = vec![Complex64::new(rnorm, 0.0)];
    let mut w = vec![zero; n];
    let mut k = 0;
    while k < budget {
        apply(&basis[k], &mut w);
        let mut h = vec![zero; k + 2];
        // modified Gram-Schmidt, twice for robustness
        for _pass in 0..2 {
            for (j, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                h[j] += c;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let hn = norm(&w);
        h[k + 1] = Complex64::new(hn, 0.0);
        for j in 0..k {
            let t = h[j] * cs[j] + sn[j] * h[j + 1];
            h[j + 1] = -sn[j].conj() * h[j] + h[j + 1] * cs[j];
            h[j] = t;
        }
        let (c, s, rr) = givens(h[k], h[k + 1]);
        cs.push(c);
        sn.push(s);
        h[k] = rr;
        h[k + 1] = zero;
        let gk = g[k];
        g[k] = gk * c;
        g.push(-s.conj() * gk);
        rcols.push(h);
        k += 1;
        let est = g[k].norm();
        history.push(est / bnorm);
        if est <= abs_tol || hn == 0.0 {
            break;
        }
        basis.push(w.iter().map(|z| z / hn).collect());
    }
    // back substitution R y = g
    let mut y = vec![zero; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= rcols[j][i] * y[j];
        }
        y[i] = s / rcols[i][i];
    }
    let mut dx = vec![zero; n];
    for (j, yj) in y.iter().enumerate() {
        for (d, v) in dx.iter_mut().zip(&basis[j]) {
            *d += yj * v;
        }
    }
    (dx, k)
}

/// Rotation with `c` real such that `[c s; -conj(s) c] [a; b] = [r; 0]`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        return (0.0, Complex64::new(1.0, 0.0) * (b.conj() / bn), Complex64::new(bn, 0.0));
    }
    let scale = (an * an + bn * bn).sqrt();
    let c = an / scale;
    let phase = a / an;
    let s = phase * b.conj() / scale;
    (c, s, phase * scale)
}
