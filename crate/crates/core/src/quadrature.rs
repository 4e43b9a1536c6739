//! Quadrature on triangles: Dunavant's degree-5 rule with adaptive
//! subdivision for nearly singular integrands, and exact or Duffy-type
//! treatment of weakly singular integrands on the source triangle itself.

use crate::Vec3;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Degree-5 seven-point rule: barycentric coordinates and weights summing to one.
pub fn dunavant7() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a = (6.0 - s15) / 21.0;
    let b = (6.0 + s15) / 21.0;
    let wa = (155.0 - s15) / 1200.0;
    let wb = (155.0 + s15) / 1200.0;
    let t = 1.0 / 3.0;
    [
        ([t, t, t], 9.0 / 40.0),
        ([a, a, 1.0 - 2.0 * a], wa),
        ([a, 1.0 - 2.0 * a, a], wa),
        ([1.0 - 2.0 * a, a, a], wa),
        ([b, b, 1.0 - 2.0 * b], wb),
        ([b, 1.0 - 2.0 * b, b], wb),
        ([1.0 - 2.0 * b, b, b], wb),
    ]
}

fn area(c: &[Vec3; 3]) -> f64 {
    0.5 * (c[1] - c[0]).cross(&(c[2] - c[0])).norm()
}

fn max_edge(c: &[Vec3; 3]) -> f64 {
    (c[1] - c[0])
        .norm()
        .max((c[2] - c[1]).norm())
        .max((c[0] - c[2]).norm())
}

fn add<const N: usize>(acc: &mut [f64; N], v: &[f64; N], s: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += s * b;
    }
}

/// Seven-point approximation of `int_T f(x - y) dy`.
pub fn dunavant_integrate<const N: usize, F>(c: &[Vec3; 3], x: &Vec3, f: &F) -> [f64; N]
where
    F: Fn(&Vec3) -> [f64; N],
{
    let ar = area(c);
    let mut acc = [0.0; N];
    for (l, w) in dunavant7() {
        let y = c[0] * l[0] + c[1] * l[1] + c[2] * l[2];
        add(&mut acc, &f(&(x - y)), w * ar);
    }
    acc
}

/// `int_T f(x - y) dy` for `x` outside `T`, refining `T` by midpoint
/// subdivision until every piece is at least `ratio` piece-diameters away
/// from `x` (or `max_depth` is reached).
pub fn adaptive_integrate<const N: usize, F>(
    c: &[Vec3; 3],
    x: &Vec3,
    f: &F,
    ratio: f64,
    max_depth: u32,
) -> [f64; N]
where
    F: Fn(&Vec3) -> [f64; N],
{
    let centroid = (c[0] + c[1] + c[2]) / 3.0;
    if max_depth == 0 || (x - centroid).norm() >= ratio * max_edge(c) {
        return dunavant_integrate(c, x, f);
    }
    let m01 = (c[0] + c[1]) * 0.5;
    let m12 = (c[1] + c[2]) * 0.5;
    let m20 = (c[2] + c[0]) * 0.5;
    let mut acc = [0.0; N];
    for sub in [
        [c[0], m01, m20],
        [m01, c[1], m12],
        [m20, m12, c[2]],
        [m01, m12, m20],
    ] {
        add(&mut acc, &adaptive_integrate(&sub, x, f, ratio, max_depth - 1), 1.0);
    }
    acc
}

/// `int_T f(x - y) dy` for `x` in the interior of `T` and `f` positively
/// homogeneous of degree -1.
///
/// Splitting `T` at `x` into three triangles with apex `x` and writing
/// `y = x + s e(w)` on each, the Jacobian `s` cancels the singularity and the
/// radial integral is exact, leaving a smooth 1D integral along the opposite
/// edge.
pub fn duffy_integrate<const N: usize, F>(c: &[Vec3; 3], x: &Vec3, f: &F, gl: &(Vec<f64>, Vec<f64>)) -> [f64; N]
where
    F: Fn(&Vec3) -> [f64; N],
{
    let mut acc = [0.0; N];
    for k in 0..3 {
        let p = c[k] - x;
        let q = c[(k + 1) % 3] - x;
        let two_area = p.cross(&q).norm();
        for (w, wt) in gl.0.iter().zip(&gl.1) {
            let e = p + (q - p) * *w;
            // f(-e): the integrand is sampled at x - y = -s e
            add(&mut acc, &f(&(-e)), two_area * wt);
        }
    }
    acc
}

/// Exact `int_T 1/|x - y| dy` for `x` in the plane of `T`, inside or on it.
pub fn inv_r_in_plane(c: &[Vec3; 3], x: &Vec3) -> f64 {
    let mut sum = 0.0;
    for k in 0..3 {
        let a = c[k];
        let b = c[(k + 1) % 3];
        let t = (b - a).normalize();
        let foot = a + t * (x - a).dot(&t);
        let h = (x - foot).norm();
        if h == 0.0 {
            continue;
        }
        let sa = (a - foot).dot(&t);
        let sb = (b - foot).dot(&t);
        sum += h * ((sb / h).asinh() - (sa / h).asinh());
    }
    sum
}
