//! Isotropic elastic background and incident plane waves.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CVec3, Vec3};

/// Homogeneous isotropic elastic medium driven at a fixed angular frequency.
///
/// The background density is normalized to one unless set otherwise; the
/// derived speeds and wavenumbers are cached at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MediumParams", into = "MediumParams")]
pub struct ElasticMedium {
    lambda: f64,
    mu: f64,
    omega: f64,
    rho_background: f64,
    c_p: f64,
    c_s: f64,
    kappa_p: f64,
    kappa_s: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct MediumParams {
    lambda: f64,
    mu: f64,
    omega: f64,
    #[serde(default = "one")]
    rho_background: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<MediumParams> for ElasticMedium {
    type Error = Error;

    fn try_from(p: MediumParams) -> Result<Self> {
        ElasticMedium::with_density(p.lambda, p.mu, p.omega, p.rho_background)
    }
}

impl From<ElasticMedium> for MediumParams {
    fn from(m: ElasticMedium) -> Self {
        MediumParams {
            lambda: m.lambda,
            mu: m.mu,
            omega: m.omega,
            rho_background: m.rho_background,
        }
    }
}

/// Checks `mu > 0` and `3 lambda + 2 mu > 0`.
pub fn validate_lame(lambda: f64, mu: f64) -> Result<()> {
    let fail = |violated: String| Error::InvalidMedium {
        lambda,
        mu,
        violated,
    };
    if !lambda.is_finite() || !mu.is_finite() {
        return Err(fail("Lamé constants must be finite".into()));
    }
    if mu <= 0.0 {
        return Err(fail(format!("mu > 0 violated (mu = {mu})")));
    }
    let bulk = 3.0 * lambda + 2.0 * mu;
    if bulk <= 0.0 {
        return Err(fail(format!(
            "3*lambda + 2*mu > 0 violated (3*lambda + 2*mu = {bulk})"
        )));
    }
    Ok(())
}

impl ElasticMedium {
    pub fn new(lambda: f64, mu: f64, omega: f64) -> Result<Self> {
        Self::with_density(lambda, mu, omega, 1.0)
    }

    pub fn with_density(lambda: f64, mu: f64, omega: f64, rho_background: f64) -> Result<Self> {
        validate_lame(lambda, mu)?;
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "angular frequency must be finite and >= 0, got {omega}"
            )));
        }
        if !(rho_background > 0.0 && rho_background.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "background density must be positive, got {rho_background}"
            )));
        }
        let c_p = (lambda + 2.0 * mu).sqrt();
        let c_s = mu.sqrt();
        Ok(Self {
            lambda,
            mu,
            omega,
            rho_background,
            c_p,
            c_s,
            kappa_p: omega / c_p,
            kappa_s: omega / c_s,
        })
    }

    /// Same Lamé constants at another frequency.
    pub fn at_frequency(&self, omega: f64) -> Result<Self> {
        Self::with_density(self.lambda, self.mu, omega, self.rho_background)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn rho_background(&self) -> f64 {
        self.rho_background
    }
    /// Longitudinal speed `sqrt(lambda + 2 mu)`.
    pub fn c_p(&self) -> f64 {
        self.c_p
    }
    /// Transversal speed `sqrt(mu)`.
    pub fn c_s(&self) -> f64 {
        self.c_s
    }
    pub fn kappa_p(&self) -> f64 {
        self.kappa_p
    }
    pub fn kappa_s(&self) -> f64 {
        self.kappa_s
    }
    /// `lambda + 2 mu`, the P-wave modulus.
    pub fn p_modulus(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }
    pub fn is_static(&self) -> bool {
        self.omega == 0.0
    }
}

/// `U(x) = alpha * theta * exp(i kp theta.x) + beta * theta_perp * exp(i ks theta.x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentPlaneWave {
    theta: [f64; 3],
    theta_perp: [f64; 3],
    alpha: Complex64,
    beta: Complex64,
}

const UNIT_TOL: f64 = 1e-12;

impl IncidentPlaneWave {
    pub fn new(theta: Vec3, theta_perp: Vec3, alpha: Complex64, beta: Complex64) -> Result<Self> {
        if (theta.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "incidence direction must be a unit vector (|theta| = {})",
                theta.norm()
            )));
        }
        if (theta_perp.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "polarization direction must be a unit vector (|theta_perp| = {})",
                theta_perp.norm()
            )));
        }
        if theta.dot(&theta_perp).abs() > UNIT_TOL {
            return Err(Error::InvalidInput(format!(
                "theta . theta_perp = {:e}, expected 0",
                theta.dot(&theta_perp)
            )));
        }
        Ok(Self {
            theta: theta.into(),
            theta_perp: theta_perp.into(),
            alpha,
            beta,
        })
    }

    /// Pure pressure wave travelling along `theta`.
    pub fn pressure(theta: Vec3) -> Result<Self> {
        let perp = any_perpendicular(&theta);
        Self::new(theta, perp, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    /// Pure shear wave travelling along `theta`, polarized along `theta_perp`.
    pub fn shear(theta: Vec3, theta_perp: Vec3) -> Result<Self> {
        Self::new(
            theta,
            theta_perp,
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        )
    }

    pub fn theta(&self) -> Vec3 {
        Vec3::from(self.theta)
    }
    pub fn theta_perp(&self) -> Vec3 {
        Vec3::from(self.theta_perp)
    }
    pub fn alpha(&self) -> Complex64 {
        self.alpha
    }
    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    /// Same directions with new amplitudes.
    pub fn with_amplitudes(&self, alpha: Complex64, beta: Complex64) -> Self {
        Self {
            alpha,
            beta,
            ..*self
        }
    }

    pub fn eval(&self, medium: &ElasticMedium, x: &Vec3) -> CVec3 {
        let theta = self.theta();
        let phase = theta.dot(x);
        let ep = Complex64::new(0.0, medium.kappa_p() * phase).exp() * self.alpha;
        let es = Complex64::new(0.0, medium.kappa_s() * phase).exp() * self.beta;
        let perp = self.theta_perp();
        CVec3::new(
            ep * theta.x + es * perp.x,
            ep * theta.y + es * perp.y,
            ep * theta.z + es * perp.z,
        )
    }
}

/// A unit vector orthogonal to `v` (deterministic choice).
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let axis = if v.x.abs() <= v.y.abs() && v.x.abs() <= v.z.abs() {
        Vec3::x()
    } else if v.y.abs() <= v.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    v.cross(&axis).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_speeds() {
        let m = ElasticMedium::new(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(m.c_p(), 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(m.c_s(), 1.0);
        assert_relative_eq!(m.kappa_p(), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(m.kappa_s(), 1.0);
        assert!(m.kappa_p() < m.kappa_s());
    }

    #[test]
    fn static_medium() {
        let m = ElasticMedium::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(m.kappa_p(), 0.0);
        assert_eq!(m.kappa_s(), 0.0);
        assert!(m.is_static());
    }

    #[test]
    fn rejects_negative_bulk() {
        let err = ElasticMedium::new(-1.0, 0.1, 1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3*lambda + 2*mu > 0"), "{msg}");
        assert!(msg.contains("-2.8"), "{msg}");
        assert!(ElasticMedium::new(1.0, 0.0, 1.0).is_err());
        assert!(ElasticMedium::new(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let m = ElasticMedium::new(2.0, 0.5, 0.7).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: ElasticMedium = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"lambda": -1.0, "mu": 0.1, "omega": 1.0}"#;
        assert!(serde_json::from_str::<ElasticMedium>(bad).is_err());
    }

    #[test]
    fn plane_wave_checks_orthogonality() {
        let t = Vec3::new(0.0, 0.0, 1.0);
        assert!(IncidentPlaneWave::new(
            t,
            Vec3::new(0.0, 0.6, 0.8),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0)
        )
        .is_err());
        assert!(IncidentPlaneWave::new(
            Vec3::new(0.0, 0.0, 2.0),
            Vec3::x(),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0)
        )
        .is_err());
        let w = IncidentPlaneWave::pressure(Vec3::new(0.6, 0.0, 0.8)).unwrap();
        assert!(w.theta().dot(&w.theta_perp()).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_evaluation() {
        let m = ElasticMedium::new(1.0, 1.0, 2.0).unwrap();
        let w = IncidentPlaneWave::new(
            Vec3::z(),
            Vec3::x(),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
        )
        .unwrap();
        let x = Vec3::new(0.3, -0.1, 0.5);
        let u = w.eval(&m, &x);
        let ep = Complex64::new(0.0, m.kappa_p() * 0.5).exp();
        let es = Complex64::new(0.0, m.kappa_s() * 0.5).exp() * Complex64::new(0.0, 2.0);
        assert_relative_eq!((u.z - ep).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!((u.x - es).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(u.y, Complex64::new(0.0, 0.0));
    }
}
