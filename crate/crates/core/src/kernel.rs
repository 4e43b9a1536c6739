//! Kupradze (time-harmonic) and Kelvin (static) fundamental tensors of the
//! Navier equation, and their gradients.
//!
//! Both tensors have the radial structure `G(x, y) = p(r) I + b(r) e e^T`
//! with `r = |x - y|` and `e = (x - y) / r`. The dynamic coefficients are
//! evaluated from the Helmholtz-kernel closed form; the combinations
//! `(exp(ix)(ix - 1) + 1) / x^2` and `(exp(ix)(3 - 3ix - x^2) - 3) / x^2`
//! suffer cancellation at small `x = kappa r` and switch to their Taylor
//! series there.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::medium::ElasticMedium;
use crate::{CMat3, CVec3, Vec3};

/// Default rejection radius for `|x - y|` (domain diameter normalized to one).
pub const DEFAULT_CUTOFF: f64 = 1e-10;

const SERIES_SWITCH: f64 = 0.1;
const SERIES_TERMS: usize = 14;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `(exp(ix)(ix - 1) + 1) / x^2`, equal to `-1/2` at the origin.
fn psi1(x: f64) -> Complex64 {
    if x.abs() < SERIES_SWITCH {
        // sum_{n>=2} (n-1)/n! (ix)^n / x^2
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(-0.5, 0.0); // n = 2: i^2 / 2!
        for n in 2..SERIES_TERMS {
            sum += term * (n as f64 - 1.0);
            term *= I * x / (n as f64 + 1.0);
        }
        sum
    } else {
        let e = Complex64::new(0.0, x).exp();
        (e * Complex64::new(-1.0, x) + 1.0) / (x * x)
    }
}

/// `(exp(ix)(3 - 3ix - x^2) - 3) / x^2`, equal to `1/2` at the origin.
fn psi2(x: f64) -> Complex64 {
    if x.abs() < SERIES_SWITCH {
        // sum_{n>=2} (n-1)(n-3)/n! (ix)^n / x^2
        let mut sum = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(-0.5, 0.0);
        for n in 2..SERIES_TERMS {
            let nf = n as f64;
            sum += term * ((nf - 1.0) * (nf - 3.0));
            term *= I * x / (nf + 1.0);
        }
        sum
    } else {
        let e = Complex64::new(0.0, x).exp();
        (e * Complex64::new(3.0 - x * x, -3.0 * x) - 3.0) / (x * x)
    }
}

/// Radial coefficients of a fundamental tensor and their `r`-derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Radial {
    pub p: Complex64,
    pub b: Complex64,
}

/// Precomputed evaluator for the Kupradze tensor of one medium.
#[derive(Debug, Clone, Copy)]
pub struct Kupradze {
    inv_cs2: f64,
    inv_cp2: f64,
    kappa_s: f64,
    kappa_p: f64,
    is_static: bool,
    cutoff: f64,
}

impl Kupradze {
    pub fn new(medium: &ElasticMedium) -> Self {
        Self {
            inv_cs2: 1.0 / medium.mu(),
            inv_cp2: 1.0 / medium.p_modulus(),
            kappa_s: medium.kappa_s(),
            kappa_p: medium.kappa_p(),
            is_static: medium.is_static(),
            cutoff: DEFAULT_CUTOFF,
        }
    }

    /// Kelvin tensor of the same Lamé pair.
    pub fn kelvin(medium: &ElasticMedium) -> Self {
        Self {
            kappa_s: 0.0,
            kappa_p: 0.0,
            is_static: true,
            ..Self::new(medium)
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Coefficients `p, b` of `G = p I + b e e^T` at distance `r > 0`.
    #[inline]
    pub fn radial(&self, r: f64) -> Radial {
        let inv = 1.0 / (4.0 * PI * r);
        if self.is_static {
            return Radial {
                p: Complex64::new(0.5 * (self.inv_cs2 + self.inv_cp2) * inv, 0.0),
                b: Complex64::new(0.5 * (self.inv_cs2 - self.inv_cp2) * inv, 0.0),
            };
        }
        let xs = self.kappa_s * r;
        let xp = self.kappa_p * r;
        let es = Complex64::new(0.0, xs).exp();
        let p = (es + psi1(xs)) * self.inv_cs2 - psi1(xp) * self.inv_cp2;
        let b = psi2(xs) * self.inv_cs2 - psi2(xp) * self.inv_cp2;
        Radial {
            p: p * inv,
            b: b * inv,
        }
    }

    /// Coefficients and their derivatives `(p, b, dp/dr, db/dr)`.
    pub fn radial_with_derivative(&self, r: f64) -> (Radial, Radial) {
        let rad = self.radial(r);
        if self.is_static {
            return (
                rad,
                Radial {
                    p: -rad.p / r,
                    b: -rad.b / r,
                },
            );
        }
        let xs = self.kappa_s * r;
        let xp = self.kappa_p * r;
        let es = Complex64::new(0.0, xs).exp();
        let ep = Complex64::new(0.0, xp).exp();
        let inv = 1.0 / (4.0 * PI * r * r);
        let dp = (es * Complex64::new(-2.0, xs) - psi1(xs) * 3.0) * self.inv_cs2
            + (ep + psi1(xp) * 3.0) * self.inv_cp2;
        let db = (es * Complex64::new(1.0, -xs) - psi2(xs) * 3.0) * self.inv_cs2
            - (ep * Complex64::new(1.0, -xp) - psi2(xp) * 3.0) * self.inv_cp2;
        (
            rad,
            Radial {
                p: dp * inv,
                b: db * inv,
            },
        )
    }

    fn check(&self, d: &Vec3) -> Result<f64> {
        let r = d.norm();
        if !(r >= self.cutoff) {
            return Err(Error::Singularity {
                distance: r,
                cutoff: self.cutoff,
            });
        }
        Ok(r)
    }

    /// Tensor at separation `d = x - y` without the cutoff check.
    #[inline]
    pub fn matrix_unchecked(&self, d: &Vec3) -> CMat3 {
        let r = d.norm();
        let Radial { p, b } = self.radial(r);
        let e = d / r;
        let mut g = CMat3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = b * (e[i] * e[j]);
            }
            g[(i, i)] += p;
        }
        g
    }

    /// `G(d) v` without forming the matrix.
    #[inline]
    pub fn apply_unchecked(&self, d: &Vec3, v: &CVec3) -> CVec3 {
        let r = d.norm();
        let Radial { p, b } = self.radial(r);
        let e = d / r;
        let ev = v.x * e.x + v.y * e.y + v.z * e.z;
        let s = b * ev;
        CVec3::new(p * v.x + s * e.x, p * v.y + s * e.y, p * v.z + s * e.z)
    }

    pub fn matrix(&self, x: &Vec3, y: &Vec3) -> Result<CMat3> {
        let d = x - y;
        self.check(&d)?;
        Ok(self.matrix_unchecked(&d))
    }

    /// `grad_y G(x, y)`: entry `k` holds the matrix `dG/dy_k`.
    pub fn gradient(&self, x: &Vec3, y: &Vec3) -> Result<[CMat3; 3]> {
        let d = x - y;
        let r = self.check(&d)?;
        let (rad, der) = self.radial_with_derivative(r);
        let e = d / r;
        let c3 = der.b - rad.b * (2.0 / r);
        let bo = rad.b / r;
        let mut out = [CMat3::zeros(); 3];
        for (k, gk) in out.iter_mut().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = c3 * (e[i] * e[j] * e[k]);
                    if i == j {
                        v += der.p * e[k];
                    }
                    if i == k {
                        v += bo * e[j];
                    }
                    if j == k {
                        v += bo * e[i];
                    }
                    // d/dy = -d/d(x - y)
                    gk[(i, j)] = -v;
                }
            }
        }
        Ok(out)
    }
}

/// Kupradze tensor `Gamma^omega(x, y)`; the static Kelvin tensor when omega = 0.
pub fn kupradze_tensor(medium: &ElasticMedium, x: &Vec3, y: &Vec3) -> Result<CMat3> {
    Kupradze::new(medium).matrix(x, y)
}

/// `grad_y Gamma^omega(x, y)` as three 3x3 matrices (one per component of y).
pub fn kupradze_gradient(medium: &ElasticMedium, x: &Vec3, y: &Vec3) -> Result<[CMat3; 3]> {
    Kupradze::new(medium).gradient(x, y)
}

/// Kelvin tensor in real arithmetic.
pub fn kelvin_tensor(lambda: f64, mu: f64, d: &Vec3) -> crate::Mat3 {
    let r = d.norm();
    let a = (1.0 / mu + 1.0 / (lambda + 2.0 * mu)) / (8.0 * PI * r);
    let b = (1.0 / mu - 1.0 / (lambda + 2.0 * mu)) / (8.0 * PI * r * r * r);
    crate::Mat3::identity() * a + (d * d.transpose()) * b
}

/// `int_{|y| < radius} Kelvin(y) dy`, a multiple of the identity.
pub fn kelvin_ball_integral(medium: &ElasticMedium, radius: f64) -> f64 {
    radius * radius * (1.0 / (3.0 * medium.mu()) + 1.0 / (6.0 * medium.p_modulus()))
}

/// `lim_{r -> 0} (Gamma^omega - Kelvin)`, a multiple of the identity.
pub fn dynamic_remainder_at_origin(medium: &ElasticMedium) -> Complex64 {
    let w = medium.omega();
    Complex64::new(
        0.0,
        w / (12.0 * PI) * (2.0 / medium.c_s().powi(3) + 1.0 / medium.c_p().powi(3)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_diff(a: &CMat3, b: &CMat3) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn max_abs(a: &CMat3) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn series_switch_is_continuous() {
        for f in [psi1, psi2] {
            let below = f(SERIES_SWITCH * (1.0 - 1e-12));
            let above = f(SERIES_SWITCH * (1.0 + 1e-12));
            assert!((below - above).norm() < 1e-13, "{below} vs {above}");
        }
        assert_relative_eq!(psi1(0.0).re, -0.5);
        assert_relative_eq!(psi2(0.0).re, 0.5);
    }

    #[test]
    fn static_branch_matches_kelvin() {
        let m = ElasticMedium::new(1.0, 1.0, 0.0).unwrap();
        let x = Vec3::new(1.0, 0.0, 0.0);
        let g = kupradze_tensor(&m, &x, &Vec3::zeros()).unwrap();
        let k = kelvin_tensor(1.0, 1.0, &x);
        // (1/8pi)[(1 + 1/3) I + (1 - 1/3) e1 e1^T]
        assert_relative_eq!(k[(0, 0)], 2.0 / (8.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(k[(1, 1)], (4.0 / 3.0) / (8.0 * PI), epsilon = 1e-15);
        assert!(max_diff(&g, &k.map(|v| Complex64::new(v, 0.0))) < 1e-15);
    }

    #[test]
    fn low_frequency_tends_to_kelvin() {
        let d = Vec3::new(0.3, -0.2, 0.4);
        let k = kelvin_tensor(1.0, 1.0, &d).map(|v| Complex64::new(v, 0.0));
        let mut prev = f64::INFINITY;
        for w in [1e-1, 1e-2, 1e-3, 1e-4] {
            let m = ElasticMedium::new(1.0, 1.0, w).unwrap();
            let g = Kupradze::new(&m).matrix_unchecked(&d);
            let err = max_diff(&g, &k);
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4 * max_abs(&k));
    }

    #[test]
    fn symmetric_and_translation_invariant() {
        let m = ElasticMedium::new(2.0, 0.7, 1.3).unwrap();
        let x = Vec3::new(0.1, 0.5, -0.2);
        let y = Vec3::new(-0.4, 0.2, 0.3);
        let gxy = kupradze_tensor(&m, &x, &y).unwrap();
        let gyx = kupradze_tensor(&m, &y, &x).unwrap();
        assert!(max_diff(&gxy, &gyx) < 1e-15);
        assert!(max_diff(&gxy, &gxy.transpose()) < 1e-15);
        let h = Vec3::new(3.0, -1.0, 2.0);
        let shifted = kupradze_tensor(&m, &(x + h), &(y + h)).unwrap();
        assert!(max_diff(&gxy, &shifted) < 1e-13);
    }

    #[test]
    fn rejects_coincident_points() {
        let m = ElasticMedium::new(1.0, 1.0, 1.0).unwrap();
        let x = Vec3::new(0.2, 0.2, 0.2);
        assert!(matches!(
            kupradze_tensor(&m, &x, &x),
            Err(Error::Singularity { .. })
        ));
        let y = x + Vec3::new(1e-12, 0.0, 0.0);
        assert!(kupradze_gradient(&m, &x, &y).is_err());
        let loose = Kupradze::new(&m).with_cutoff(1e-13);
        assert!(loose.matrix(&x, &y).is_ok());
    }

    #[test]
    fn apply_matches_matrix() {
        let m = ElasticMedium::new(1.0, 1.0, 1.0).unwrap();
        let k = Kupradze::new(&m);
        let d = Vec3::new(0.05, 0.3, -0.7);
        let v = CVec3::new(
            Complex64::new(1.0, 2.0),
            Complex64::new(-0.5, 0.1),
            Complex64::new(0.0, -1.0),
        );
        let a = k.apply_unchecked(&d, &v);
        let b = k.matrix_unchecked(&d) * v;
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn gradient_bound_example() {
        // lambda = mu = 1, omega = 1, |x - y| = 0.3, diam = 1
        let m = ElasticMedium::new(1.0, 1.0, 1.0).unwrap();
        let c = crate::bounds::green_bound_constants(&m, 1.0).unwrap();
        let x = Vec3::new(0.3, 0.0, 0.0);
        let g = kupradze_gradient(&m, &x, &Vec3::zeros()).unwrap();
        let bound = c.c_ring / (4.0 * PI * 0.09);
        for gk in &g {
            assert!(max_abs(gk) <= bound);
        }
    }

    #[test]
    fn static_gradient_is_homogeneous() {
        let m = ElasticMedium::new(0.5, 1.0, 0.0).unwrap();
        let d = Vec3::new(0.2, -0.1, 0.35);
        let g1 = kupradze_gradient(&m, &d, &Vec3::zeros()).unwrap();
        let g2 = kupradze_gradient(&m, &(d * 3.0), &Vec3::zeros()).unwrap();
        for k in 0..3 {
            assert!(max_diff(&(g1[k] / Complex64::new(9.0, 0.0)), &g2[k]) < 1e-14 * max_abs(&g1[k]));
        }
    }

    #[test]
    fn ball_integral_matches_radial_quadrature() {
        // Angular average of e e^T is I/3, so the ball integral reduces to
        // 4 pi int_0^R (p + b/3) r^2 dr with p, b ~ 1/r.
        let m = ElasticMedium::new(1.5, 0.8, 0.0).unwrap();
        let k = Kupradze::new(&m);
        let rad = k.radial(1.0);
        let radius = 0.37;
        let expect = 4.0 * PI * (rad.p.re + rad.b.re / 3.0) * radius * radius / 2.0;
        assert_relative_eq!(kelvin_ball_integral(&m, radius), expect, epsilon = 1e-15);
    }

    #[test]
    fn dynamic_remainder_limit() {
        let m = ElasticMedium::new(1.0, 1.0, 1.0).unwrap();
        let dynk = Kupradze::new(&m);
        let stat = Kupradze::kelvin(&m);
        let r = 1e-9;
        let diff = dynk.radial(r).p - stat.radial(r).p;
        let expect = dynamic_remainder_at_origin(&m);
        assert!((diff - expect).norm() < 1e-8);
        assert!((dynk.radial(r).b - stat.radial(r).b).norm() < 1e-6);
    }
}
