//! The Foldy–Lax point-interaction system for many small rigid bodies and the
//! far fields of its solution.
//!
//! With body capacitances `C_m` (scaled to the diameter `a`) the amplitudes
//! solve
//!
//! ```text
//! C_m^{-1} Q_m + sum_{j != m} G(z_m, z_j) Q_j = -U^i(z_m).
//! ```
//!
//! The unknown actually iterated on is `y_m = C_m^{-1} Q_m`, which turns the
//! system into `(I + G C) y = -U^i`.

use std::f64::consts::PI;
use std::path::Path;

use faer::Mat;
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::green_bound_constants_unchecked;
use crate::distribution::{min_center_distance, ScattererConfiguration};
use crate::error::{Error, Result};
use crate::io::{fmt17, write_atomic};
use crate::kernel::Kupradze;
use crate::linalg::{gmres, DenseFactor, GmresOptions};
use crate::medium::{ElasticMedium, IncidentPlaneWave};
use crate::{CVec3, Complex64, Mat3, Vec3};

/// Largest system size (`3M`) solved by dense LU under [`SolverChoice::Auto`].
pub const DENSE_LIMIT: usize = 6000;
/// Relative residual required of every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Default for the spacing constant `c0` in `sqrt(M - 1) a / d <= c0`.
pub const DEFAULT_C0: f64 = 1.0;

const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldyOptions {
    pub solver: SolverChoice,
    pub tol: f64,
    /// Iteration budget; `ceil(10 sqrt(3M))` when unset.
    pub max_iter: Option<usize>,
    /// When set, the solve refuses configurations failing the invertibility
    /// precheck on a domain of this diameter.
    pub require_precheck: Option<f64>,
}

impl Default for FoldyOptions {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Auto,
            tol: RESIDUAL_TOL,
            max_iter: None,
            require_precheck: None,
        }
    }
}

/// Outcome of the two sufficient invertibility conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecheckReport {
    pub a: f64,
    pub m: usize,
    pub m_max: f64,
    pub lame_sum: f64,
    pub c_ring: f64,
    /// False when the wavenumber condition behind `c_ring` fails.
    pub c_ring_reliable: bool,
    /// `max_m C^a_m / a`.
    pub capacitance_value: f64,
    /// `pi / (sqrt(26 M_max) c_ring (lambda + 2 mu))`.
    pub capacitance_limit: f64,
    pub capacitance_ok: bool,
    /// `sqrt(M - 1) a / d`.
    pub spacing_value: f64,
    pub c0: f64,
    pub spacing_ok: bool,
}

impl PrecheckReport {
    pub fn passes(&self) -> bool {
        self.capacitance_ok && self.spacing_ok
    }

    pub fn capacitance_margin(&self) -> f64 {
        self.capacitance_limit - self.capacitance_value
    }

    pub fn spacing_margin(&self) -> f64 {
        self.c0 - self.spacing_value
    }

    /// `sqrt(26 M_max) c_ring / pi`.
    fn interaction(&self) -> f64 {
        (26.0 * self.m_max).sqrt() * self.c_ring / PI
    }

    /// Right side of the a-priori estimate
    /// `sum |Q_m|^2 <= ((lambda + 2 mu)^{-1} - s max C^a_m / a)^{-2} (max C^a_m)^2 sum |U^i(z_m)|^2`
    /// with `s = sqrt(26 M_max) c_ring / pi`; `None` when its hypothesis fails.
    pub fn amplitude_bound(&self, incident_sq_sum: f64) -> Option<f64> {
        if !self.capacitance_ok {
            return None;
        }
        let gap = 1.0 / self.lame_sum - self.interaction() * self.capacitance_value;
        let cmax = self.capacitance_value * self.a;
        Some(cmax * cmax * incident_sq_sum / (gap * gap))
    }

    /// The `l1` companion estimate
    /// `sum |Q_m|_1 <= ((lambda + 2 mu)^{-1} - s max C^a_m / a)^{-1} max C^a_m M max |U^i(z_m)|`.
    pub fn amplitude_l1_bound(&self, incident_max: f64) -> Option<f64> {
        if !self.capacitance_ok {
            return None;
        }
        let gap = 1.0 / self.lame_sum - self.interaction() * self.capacitance_value;
        Some(self.capacitance_value * self.a * self.m as f64 * incident_max / gap)
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "capacitance condition max C^a_m / a < pi / (sqrt(26 M_max) c_ring (lambda + 2 mu)): \
             {:.6e} < {:.6e} {}; spacing condition sqrt(M - 1) a / d <= c0: {:.6e} <= {} {}",
            self.capacitance_value,
            self.capacitance_limit,
            if self.capacitance_ok { "holds" } else { "FAILS" },
            self.spacing_value,
            self.c0,
            if self.spacing_ok { "holds" } else { "FAILS" },
        );
        if !self.c_ring_reliable {
            s.push_str("; c_ring unreliable (wavenumber condition violated)");
        }
        s
    }
}

/// Evaluates the sufficient conditions for unique solvability with the
/// default `c0`.
pub fn precheck_invertibility(
    config: &ScattererConfiguration,
    medium: &ElasticMedium,
    diam_omega: f64,
) -> Result<PrecheckReport> {
    precheck_invertibility_with(config, medium, diam_omega, DEFAULT_C0)
}

pub fn precheck_invertibility_with(
    config: &ScattererConfiguration,
    medium: &ElasticMedium,
    diam_omega: f64,
    c0: f64,
) -> Result<PrecheckReport> {
    let m = config.len();
    if m == 0 {
        return Err(Error::InvalidInput("configuration has no bodies".into()));
    }
    let mut cmax: f64 = 0.0;
    for i in 0..m {
        let c = config
            .capacitance(i)
            .ok_or_else(|| Error::InvalidInput(format!("body {i} has no capacitance attached")))?;
        cmax = cmax.max(c.c_acoustic);
    }
    let consts = green_bound_constants_unchecked(medium, diam_omega)?;
    let m_max = config.m_max_const.max(1.0);
    let lame_sum = medium.p_modulus();
    let limit = PI / ((26.0 * m_max).sqrt() * consts.c_ring * lame_sum);
    let spacing = if m == 1 {
        0.0
    } else {
        ((m - 1) as f64).sqrt() * config.a / config.d_actual
    };
    Ok(PrecheckReport {
        a: config.a,
        m,
        m_max,
        lame_sum,
        c_ring: consts.c_ring,
        c_ring_reliable: consts.reliable,
        capacitance_value: cmax,
        capacitance_limit: limit,
        capacitance_ok: cmax < limit,
        spacing_value: spacing,
        c0,
        spacing_ok: spacing <= c0,
    })
}

#[derive(Debug, Clone)]
pub struct ScatteringAmplitudes {
    pub q: Vec<CVec3>,
    /// `|(I + G C) y + U^i| / |U^i|`.
    pub residual_norm: f64,
    pub solver: SolverKind,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl ScatteringAmplitudes {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn sum_sq(&self) -> f64 {
        self.q.iter().map(|v| v.norm_squared()).sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.q.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// The interaction operator `y -> (I + G C) y` of one configuration.
pub struct FoldySystem {
    kernel: Kupradze,
    points: Vec<Vec3>,
    caps: Vec<Mat3>,
}

pub(crate) fn cv(v: &[Complex64]) -> CVec3 {
    CVec3::new(v[0], v[1], v[2])
}

pub(crate) fn real_times(c: &Mat3, v: &CVec3) -> CVec3 {
    CVec3::from_fn(|i, _| c[(i, 0)] * v[0] + c[(i, 1)] * v[1] + c[(i, 2)] * v[2])
}

impl FoldySystem {
    pub fn new(config: &ScattererConfiguration, medium: &ElasticMedium) -> Result<Self> {
        let m = config.len();
        if m == 0 {
            return Err(Error::InvalidInput("configuration has no bodies".into()));
        }
        if !(config.a > 0.0) {
            return Err(Error::InvalidInput(format!("a must be positive, got {}", config.a)));
        }
        let kernel = Kupradze::new(medium);
        let points = config.points();
        if m > 1 {
            let d = min_center_distance(&points);
            if d <= kernel.cutoff() {
                return Err(Error::InvalidInput(format!(
                    "body centers must be distinct (minimum separation {d:e})"
                )));
            }
        }
        let mut caps = Vec::with_capacity(m);
        for i in 0..m {
            let c = config
                .capacitance(i)
                .ok_or_else(|| Error::InvalidInput(format!("body {i} has no capacitance attached")))?;
            let mat = c.scaled(config.a);
            let eig = SymmetricEigen::new(mat).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 1e-14 * hi) {
                return Err(Error::Singular(format!(
                    "capacitance of body {i} is not invertible (eigenvalues {lo:e} .. {hi:e})"
                )));
            }
            caps.push(mat);
        }
        Ok(Self { kernel, points, caps })
    }

    pub fn dim(&self) -> usize {
        3 * self.points.len()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Capacitances scaled to the body diameter.
    pub fn capacitances(&self) -> &[Mat3] {
        &self.caps
    }

    pub fn kernel(&self) -> &Kupradze {
        &self.kernel
    }

    /// `out = (I + G C) y`, re-evaluating the kernel for every pair.
    pub fn apply(&self, y: &[Complex64], out: &mut [Complex64]) {
        let w: Vec<CVec3> = self
            .caps
            .iter()
            .enumerate()
            .map(|(j, c)| real_times(c, &cv(&y[3 * j..3 * j + 3])))
            .collect();
        let points = &self.points;
        out.par_chunks_mut(3).enumerate().for_each(|(m, o)| {
            let zm = points[m];
            let mut acc = cv(&y[3 * m..3 * m + 3]);
            for (j, zj) in points.iter().enumerate() {
                if j != m {
                    acc += self.kernel.apply_unchecked(&(zm - zj), &w[j]);
                }
            }
            o.copy_from_slice(acc.as_slice());
        });
    }

    /// Dense `I + G C`.
    pub fn assemble(&self) -> Mat<Complex64> {
        let n = self.dim();
        let m = self.points.len();
        let mut a = Mat::<Complex64>::zeros(n, n);
        let blocks: Vec<Vec<CMat3Block>> = (0..m)
            .into_par_iter()
            .map(|i| {
                (0..m)
                    .map(|j| {
                        if i == j {
                            CMat3Block::identity()
                        } else {
                            let g = self.kernel.matrix_unchecked(&(self.points[i] - self.points[j]));
                            let c = self.caps[j];
                            CMat3Block::from_fn(|r, s| g[(r, 0)] * c[(0, s)] + g[(r, 1)] * c[(1, s)] + g[(r, 2)] * c[(2, s)])
                        }
                    })
                    .collect()
            })
            .collect();
        for (i, row) in blocks.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                for r in 0..3 {
                    for s in 0..3 {
                        a[(3 * i + r, 3 * j + s)] = b[(r, s)];
                    }
                }
            }
        }
        a
    }

    pub fn rhs(&self, medium: &ElasticMedium, wave: &IncidentPlaneWave) -> Vec<Complex64> {
        let mut b = Vec::with_capacity(self.dim());
        for z in &self.points {
            let u = wave.eval(medium, z);
            b.extend(u.iter().map(|x| -x));
        }
        b
    }

    pub fn residual(&self, y: &[Complex64], b: &[Complex64]) -> f64 {
        let mut ay = vec![Complex64::new(0.0, 0.0); y.len()];
        self.apply(y, &mut ay);
        let bn = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let rn = ay.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        if bn == 0.0 {
            rn
        } else {
            rn / bn
        }
    }

    pub fn amplitudes(&self, y: &[Complex64]) -> Vec<CVec3> {
        self.caps
            .iter()
            .enumerate()
            .map(|(j, c)| real_times(c, &cv(&y[3 * j..3 * j + 3])))
            .collect()
    }
}

type CMat3Block = crate::CMat3;

/// Solves the Foldy–Lax system with default options.
pub fn solve_foldy(
    config: &ScattererConfiguration,
    medium: &ElasticMedium,
    wave: &IncidentPlaneWave,
) -> Result<ScatteringAmplitudes> {
    solve_foldy_with(config, medium, wave, &FoldyOptions::default())
}

pub fn solve_foldy_with(
    config: &ScattererConfiguration,
    medium: &ElasticMedium,
    wave: &IncidentPlaneWave,
    opts: &FoldyOptions,
) -> Result<ScatteringAmplitudes> {
    if let Some(diam) = opts.require_precheck {
        let report = precheck_invertibility(config, medium, diam)?;
        if !report.passes() {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
                context: format!("invertibility precheck failed: {}", report.describe()),
            });
        }
    }
    let sys = FoldySystem::new(config, medium)?;
    let b = sys.rhs(medium, wave);
    let n = sys.dim();
    let kind = match opts.solver {
        SolverChoice::Dense => SolverKind::Dense,
        SolverChoice::Iterative => SolverKind::Iterative,
        SolverChoice::Auto if n <= DENSE_LIMIT => SolverKind::Dense,
        SolverChoice::Auto => SolverKind::Iterative,
    };
    let budget = opts.max_iter.unwrap_or_else(|| (10.0 * (n as f64).sqrt()).ceil() as usize);
    let (y, iterations, history) = match kind {
        SolverKind::Dense => {
            let f = DenseFactor::lu(sys.assemble())?;
            let mut rhs = Mat::<Complex64>::from_fn(n, 1, |i, _| b[i]);
            f.solve_in_place(rhs.as_mut());
            let mut y: Vec<Complex64> = (0..n).map(|i| rhs[(i, 0)]).collect();
            let mut history = vec![sys.residual(&y, &b)];
            // a couple of refinement steps absorb rounding in the factors
            let mut steps = 0;
            while *history.last().unwrap() > opts.tol && steps < 3 {
                let mut ay = vec![Complex64::new(0.0, 0.0); n];
                sys.apply(&y, &mut ay);
                let mut r = Mat::<Complex64>::from_fn(n, 1, |i, _| b[i] - ay[i]);
                f.solve_in_place(r.as_mut());
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi += r[(i, 0)];
                }
                history.push(sys.residual(&y, &b));
                steps += 1;
            }
            (y, steps, history)
        }
        SolverKind::Iterative => {
            let out = gmres(
                |x, o| sys.apply(x, o),
                &b,
                None,
                GmresOptions {
                    tol: opts.tol,
                    max_iter: budget,
                },
            )?;
            (out.x, out.iterations, out.history)
        }
    };
    let residual = sys.residual(&y, &b);
    if !(residual <= opts.tol) {
        return Err(Error::NoConvergence {
            iterations,
            residual,
            history,
        });
    }
    Ok(ScatteringAmplitudes {
        q: sys.amplitudes(&y),
        residual_norm: residual,
        solver: kind,
        iterations,
        history,
    })
}

/// P and S parts of a far-field pattern on a set of directions.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldPattern {
    pub directions: Vec<Vec3>,
    pub p_part: Vec<CVec3>,
    pub s_part: Vec<CVec3>,
    pub medium: ElasticMedium,
    pub wave: Option<IncidentPlaneWave>,
}

impl FarFieldPattern {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Largest of `|x × U_p| / |U_p|` and `|x · U_s| / |U_s|` over all
    /// directions (zero parts count as exact).
    pub fn polarization_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((x, p), s) in self.directions.iter().zip(&self.p_part).zip(&self.s_part) {
            let xc = x.map(|v| Complex64::new(v, 0.0));
            let pn = p.norm();
            if pn > 0.0 {
                worst = worst.max(xc.cross(p).norm() / pn);
            }
            let sn = s.norm();
            if sn > 0.0 {
                let dot = xc[0] * s[0] + xc[1] * s[1] + xc[2] * s[2];
                worst = worst.max(dot.norm() / sn);
            }
        }
        worst
    }

    /// `max_x sqrt(|U_p|^2 + |U_s|^2)`.
    pub fn max_norm(&self) -> f64 {
        self.p_part
            .iter()
            .zip(&self.s_part)
            .map(|(p, s)| (p.norm_squared() + s.norm_squared()).sqrt())
            .fold(0.0, f64::max)
    }

    /// `max_x sqrt(|dU_p|^2 + |dU_s|^2)` against a pattern on the same
    /// directions.
    pub fn max_difference(&self, other: &FarFieldPattern) -> Result<f64> {
        if self.directions.len() != other.directions.len()
            || self.directions.iter().zip(&other.directions).any(|(a, b)| (a - b).norm() > UNIT_TOL)
        {
            return Err(Error::InvalidInput("far-field patterns use different directions".into()));
        }
        Ok(self
            .p_part
            .iter()
            .zip(&self.s_part)
            .zip(other.p_part.iter().zip(&other.s_part))
            .map(|((p1, s1), (p2, s2))| ((p1 - p2).norm_squared() + (s1 - s2).norm_squared()).sqrt())
            .fold(0.0, f64::max))
    }

    pub const CSV_HEADER: &'static str = "xhat_x,xhat_y,xhat_z,Re(Up1),Re(Up2),Re(Up3),Im(Up1),Im(Up2),Im(Up3),Re(Us1),Re(Us2),Re(Us3),Im(Us1),Im(Us2),Im(Us3)";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for ((x, p), s) in self.directions.iter().zip(&self.p_part).zip(&self.s_part) {
            let mut row: Vec<String> = x.iter().map(|v| fmt17(*v)).collect();
            row.extend(p.iter().map(|z| fmt17(z.re)));
            row.extend(p.iter().map(|z| fmt17(z.im)));
            row.extend(s.iter().map(|z| fmt17(z.re)));
            row.extend(s.iter().map(|z| fmt17(z.im)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

pub fn check_directions(directions: &[Vec3]) -> Result<()> {
    for (i, x) in directions.iter().enumerate() {
        if !((x.norm() - 1.0).abs() <= UNIT_TOL) {
            return Err(Error::InvalidInput(format!(
                "direction {i} is not a unit vector (|x| = {})",
                x.norm()
            )));
        }
    }
    Ok(())
}

/// `(1 / 4 pi c^2)` weighted P and S projections of `sum_m e^{-i kappa x.y_m} v_m`.
pub(crate) fn project_far_field(
    medium: &ElasticMedium,
    x: &Vec3,
    sources: impl Iterator<Item = (Vec3, CVec3)>,
) -> (CVec3, CVec3) {
    let (kp, ks) = (medium.kappa_p(), medium.kappa_s());
    let mut sp = CVec3::zeros();
    let mut ss = CVec3::zeros();
    for (y, v) in sources {
        let ph = x.dot(&y);
        sp += v * Complex64::from_polar(1.0, -kp * ph);
        ss += v * Complex64::from_polar(1.0, -ks * ph);
    }
    let xc = x.map(|v| Complex64::new(v, 0.0));
    let along = xc[0] * sp[0] + xc[1] * sp[1] + xc[2] * sp[2];
    let p = xc * (along / (4.0 * PI * medium.p_modulus()));
    let across = xc[0] * ss[0] + xc[1] * ss[1] + xc[2] * ss[2];
    let s = (ss - xc * across) / Complex64::new(4.0 * PI * medium.mu(), 0.0);
    (p, s)
}

/// Leading far-field terms of the point-interaction field.
pub fn foldy_farfield(
    amps: &ScatteringAmplitudes,
    config: &ScattererConfiguration,
    medium: &ElasticMedium,
    directions: &[Vec3],
) -> Result<FarFieldPattern> {
    check_directions(directions)?;
    if amps.q.len() != config.len() {
        return Err(Error::InvalidInput(format!(
            "{} amplitudes for {} bodies",
            amps.q.len(),
            config.len()
        )));
    }
    let points = config.points();
    let parts: Vec<(CVec3, CVec3)> = directions
        .par_iter()
        .map(|x| project_far_field(medium, x, points.iter().copied().zip(amps.q.iter().copied())))
        .collect();
    let (p_part, s_part) = parts.into_iter().unzip();
    Ok(FarFieldPattern {
        directions: directions.to_vec(),
        p_part,
        s_part,
        medium: *medium,
        wave: None,
    })
}

/// The 26 face, edge and corner directions of a cube.
pub fn cube_directions() -> Vec<Vec3> {
    let mut out = Vec::with_capacity(26);
    for i in -1i32..=1 {
        for j in -1i32..=1 {
            for k in -1i32..=1 {
                if (i, j, k) != (0, 0, 0) {
                    out.push(Vec3::new(i as f64, j as f64, k as f64).normalize());
                }
            }
        }
    }
    out
}

/// `n` nearly uniform directions on the sphere (Fibonacci lattice).
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
        })
        .collect()
}
