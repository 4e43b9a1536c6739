//! Explicit constants bounding the Kupradze tensor and its gradient over a
//! domain of given diameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::ElasticMedium;

/// `|G| <= (C7 / r + C8) / 4pi`, `|grad G| <= (C9 / r^2 + C10) / 4pi`, and the
/// combined `|G| <= c_ring / (4pi r)`, `|grad G| <= c_ring / (4pi r^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenBoundConstants {
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub n_omega: u64,
    pub c_ring: f64,
    /// False when `max(kappa_s, kappa_p) < 2 / diam` fails; the numbers are
    /// then still evaluated but carry no guarantee.
    pub reliable: bool,
}

/// `sum_{k < n} q^k`, the finite geometric sum written without the quotient
/// so that `q = 1` needs no special case.
fn geometric(q: f64, n: u64) -> f64 {
    let mut s = 0.0;
    let mut term = 1.0;
    for _ in 0..n {
        s += term;
        term *= q;
    }
    s
}

/// Constants for `medium` on a domain of diameter `diam`; fails outside the
/// small-wavenumber regime `max(kappa_s, kappa_p) < 2 / diam`.
pub fn green_bound_constants(medium: &ElasticMedium, diam: f64) -> Result<GreenBoundConstants> {
    let c = green_bound_constants_unchecked(medium, diam)?;
    if !c.reliable {
        return Err(Error::BoundCondition {
            kappa: medium.kappa_s().max(medium.kappa_p()),
            limit: 2.0 / diam,
        });
    }
    Ok(c)
}

/// As [`green_bound_constants`] but reports a violated wavenumber condition
/// through `reliable = false` instead of an error.
pub fn green_bound_constants_unchecked(
    medium: &ElasticMedium,
    diam: f64,
) -> Result<GreenBoundConstants> {
    if !(diam > 0.0 && diam.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "domain diameter must be positive, got {diam}"
        )));
    }
    let ks = medium.kappa_s();
    let kp = medium.kappa_p();
    let kmax = ks.max(kp);
    let inv_cs2 = 1.0 / medium.mu();
    let inv_cp2 = 1.0 / medium.p_modulus();
    let w2 = medium.omega() * medium.omega();

    let n = (2.0 * diam * kmax * std::f64::consts::E.powi(2)).floor() as u64;
    let tail = 0.5f64.powi(n as i32 - 1);
    let gs = geometric(0.5 * ks * diam, n) + tail;
    let gp = geometric(0.5 * kp * diam, n) + tail;

    let c7 = inv_cs2 + 2.0 * inv_cp2;
    let c9 = 3.0 * (inv_cs2 + inv_cp2);
    let c8 = 2.0 * ks * inv_cs2 * gs + kp * inv_cp2 * gp;
    let c10 = 2.0 * w2 * inv_cs2 * inv_cs2 * (0.125 + gs) + w2 * inv_cp2 * inv_cp2 * (0.25 + gp);
    let c_ring = c7.max(c8 * diam).max(c8).max(c10 * diam);

    Ok(GreenBoundConstants {
        c7,
        c8,
        c9,
        c10,
        n_omega: n,
        c_ring,
        reliable: kmax < 2.0 / diam,
    })
}
