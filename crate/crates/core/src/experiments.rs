//! End-to-end harnesses: the point-interaction versus equivalent-medium
//! convergence sweep, and the negative-density, cloaking and vanishing
//! scenarios.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacitance::CapacitanceMatrix;
use crate::distribution::{
    partition_domain, partition_domain_with, place_scatterers_with, DensityFunction, DomainBox,
    ScattererConfiguration, DEFAULT_A0, DEFAULT_D_MIN,
};
use crate::effective::{
    effective_density, incident_rhs, ls_farfield, solve_lippmann_schwinger_with, LsOperator, LsOptions,
    PotentialField, VoxelGrid,
};
use crate::error::{Error, Result};
use crate::foldy::{
    cube_directions, cv, foldy_farfield, precheck_invertibility, project_far_field, real_times, solve_foldy,
    FarFieldPattern, FoldySystem, DEFAULT_C0,
};
use crate::io::fmt17;
use crate::linalg::{gmres, GmresOptions};
use crate::medium::{ElasticMedium, IncidentPlaneWave};
use crate::{CVec3, Complex64, Mat3, Vec3};

fn default_t() -> f64 {
    1.0 / 3.0
}
fn default_grid() -> usize {
    24
}
fn default_d_min() -> f64 {
    DEFAULT_D_MIN
}
fn default_c0() -> f64 {
    DEFAULT_C0
}
fn default_shape() -> String {
    "sphere".into()
}

/// Exponent `min(gamma, 1/3, 3/2 - 3t)` of the far-field convergence rate.
pub fn predicted_exponent(gamma: f64, t: f64) -> f64 {
    gamma.min(1.0 / 3.0).min(1.5 - 3.0 * t)
}

fn dirs_of(d: &[[f64; 3]]) -> Vec<Vec3> {
    if d.is_empty() {
        cube_directions()
    } else {
        d.iter().map(|x| Vec3::from(*x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Strictly decreasing body sizes, at least four.
    pub a_values: Vec<f64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub k: DensityFunction,
    /// Hölder exponent of `K`; taken from `k` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_shape")]
    pub shape: String,
    pub capacitance: CapacitanceMatrix,
    pub medium: ElasticMedium,
    pub wave: IncidentPlaneWave,
    /// Observation directions; the 26 cube directions when empty.
    #[serde(default)]
    pub directions: Vec<[f64; 3]>,
    #[serde(default)]
    pub seed: u64,
    /// Coarse grid of the reference solve; the reference is extrapolated
    /// from `n` and `2n`.
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Abort when a configuration fails the invertibility precheck.
    #[serde(default)]
    pub require_precheck: bool,
}

impl SweepSpec {
    pub fn gamma(&self) -> f64 {
        self.gamma.or_else(|| self.k.holder_gamma()).unwrap_or(0.0)
    }

    pub fn predicted_exponent(&self) -> f64 {
        predicted_exponent(self.gamma(), self.t)
    }

    /// Checks the preconditions; returns warnings for admissible edge cases.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.a_values.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "a rate fit needs at least 4 values of a, got {}",
                self.a_values.len()
            )));
        }
        if self.a_values.windows(2).any(|w| !(w[1] < w[0])) || self.a_values.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidInput("a values must be positive and strictly decreasing".into()));
        }
        if self.t < 1.0 / 3.0 - 1e-12 {
            return Err(Error::Infeasible(format!(
                "packing bound: t = {} < 1/3 cannot hold the bodies at distance a^t",
                self.t
            )));
        }
        if self.t >= 0.5 {
            return Err(Error::InvalidInput(format!(
                "t = {} >= 1/2 makes the exponent 3/2 - 3t <= 0; no rate to fit",
                self.t
            )));
        }
        if self.t > 5.0 / 12.0 {
            warnings.push(format!(
                "t = {} is close to 1/2; predicted exponent {:.4} is small",
                self.t,
                self.predicted_exponent()
            ));
        }
        if self.gamma.is_none() && self.k.holder_gamma().is_none() {
            warnings.push("K has no known Hölder exponent; gamma taken as 0".into());
        }
        if self.grid_n < 4 {
            return Err(Error::InvalidInput(format!("grid_n must be at least 4, got {}", self.grid_n)));
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub a: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub d_actual: f64,
    pub e: f64,
    pub runtime_s: f64,
    pub residual: f64,
    pub max_q: f64,
    pub precheck_passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residuals of `log e` about the fitted line.
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

/// Least squares fit of `log y = slope log x + intercept`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("fit needs matching samples, at least two".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput("log-log fit needs positive finite samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - (slope * a + intercept)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    Ok(LogFit {
        slope,
        intercept,
        residuals,
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub per_a: Vec<SweepPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub predicted_exponent: f64,
    pub fit: Option<LogFit>,
    /// Indices `i` (in decreasing `a`) with `e[i] > e[i - 1]`.
    pub monotone_violations: Vec<usize>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub reference: Option<FarFieldPattern>,
    #[serde(skip)]
    pub far_fields: Vec<FarFieldPattern>,
}

impl SweepResult {
    /// Non-increasing `e(a)` after the first point, one exception allowed.
    pub fn is_monotone(&self) -> bool {
        self.monotone_violations.len() <= 1
    }

    /// Raw far fields: the reference (`a = 0`) followed by one block per `a`.
    pub fn far_field_csv(&self) -> String {
        let mut out = format!("a,source,{}\n", FarFieldPattern::CSV_HEADER);
        let mut push = |a: f64, src: &str, ff: &FarFieldPattern| {
            for line in ff.to_csv().lines().skip(1) {
                out.push_str(&format!("{},{src},{line}\n", fmt17(a)));
            }
        };
        if let Some(r) = &self.reference {
            push(0.0, "equivalent_medium", r);
        }
        for (p, ff) in self.per_a.iter().zip(&self.far_fields) {
            push(p.a, "point_interaction", ff);
        }
        out
    }
}

/// A sweep aborted at some stage, with the points completed before it.
#[derive(Debug)]
pub struct SweepFailure {
    pub stage: String,
    pub a: Option<f64>,
    pub error: Error,
    pub partial: SweepResult,
}

impl fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.a {
            Some(a) => write!(f, "sweep failed at stage '{}' for a = {a}: {}", self.stage, self.error),
            None => write!(f, "sweep failed at stage '{}': {}", self.stage, self.error),
        }
    }
}

impl std::error::Error for SweepFailure {}

/// Equivalent-medium far field extrapolated from grids `n` and `2n`
/// (the discretization converges at second order).
pub fn reference_farfield(
    medium: &ElasticMedium,
    wave: &IncidentPlaneWave,
    k: &DensityFunction,
    c0: &Mat3,
    n: usize,
    directions: &[Vec3],
) -> Result<FarFieldPattern> {
    let solve = |n: usize| -> Result<FarFieldPattern> {
        let grid = VoxelGrid::new(DomainBox::unit_cube(), n)?;
        let p = PotentialField::from_density(grid, k, c0)?;
        let y = solve_lippmann_schwinger_with(medium, &p, wave, &LsOptions::default(), None)?;
        ls_farfield(medium, &p, &y, directions)
    };
    let coarse = solve(n)?;
    let mut fine = solve(2 * n)?;
    let third = Complex64::new(1.0 / 3.0, 0.0);
    for i in 0..fine.len() {
        let dp = (fine.p_part[i] - coarse.p_part[i]) * third;
        let ds = (fine.s_part[i] - coarse.s_part[i]) * third;
        fine.p_part[i] += dp;
        fine.s_part[i] += ds;
    }
    Ok(fine)
}

/// Configuration of bodies of size `a` over the unit cube.
pub fn sweep_configuration(
    a: f64,
    t: f64,
    k: &DensityFunction,
    seed: u64,
    d_min: f64,
    capacitance: &CapacitanceMatrix,
) -> Result<ScattererConfiguration> {
    let p = partition_domain(&DomainBox::unit_cube(), a, k)?;
    Ok(place_scatterers_with(&p, a, t, seed, d_min)?.with_capacitance(capacitance.clone()))
}

/// Far-field discrepancy between the point-interaction model and its
/// equivalent medium for each `a`, with a log-log rate fit.
pub fn convergence_sweep(spec: &SweepSpec) -> std::result::Result<SweepResult, SweepFailure> {
    let mut result = SweepResult {
        spec: spec.clone(),
        per_a: Vec::new(),
        slope: f64::NAN,
        intercept: f64::NAN,
        predicted_exponent: spec.predicted_exponent(),
        fit: None,
        monotone_violations: Vec::new(),
        warnings: Vec::new(),
        reference: None,
        far_fields: Vec::new(),
    };
    let fail = |stage: &str, a: Option<f64>, error: Error, partial: &SweepResult| SweepFailure {
        stage: stage.into(),
        a,
        error,
        partial: partial.clone(),
    };
    match spec.validate() {
        Ok(w) => result.warnings = w,
        Err(e) => return Err(fail("validation", None, e, &result)),
    }
    // placements are cheap; build them all before the reference solve so an
    // infeasible size fails fast
    let mut configs = Vec::with_capacity(spec.a_values.len());
    for &a in &spec.a_values {
        match sweep_configuration(a, spec.t, &spec.k, spec.seed, spec.d_min, &spec.capacitance) {
            Ok(c) => configs.push(c),
            Err(e) => return Err(fail("placement", Some(a), e, &result)),
        }
    }
    let dirs = dirs_of(&spec.directions);
    let c0 = spec.capacitance.matrix();
    let reference = reference_farfield(&spec.medium, &spec.wave, &spec.k, &c0, spec.grid_n, &dirs)
        .map_err(|e| fail("lippmann_schwinger", None, e, &result))?;
    result.reference = Some(reference.clone());

    let outcomes: Vec<(f64, std::result::Result<(SweepPoint, FarFieldPattern), (String, Error)>)> = spec
        .a_values
        .par_iter()
        .zip(configs.par_iter())
        .map(|(&a, cfg)| {
            let run = || -> std::result::Result<(SweepPoint, FarFieldPattern), (String, Error)> {
                let start = Instant::now();
                let pre = precheck_invertibility(cfg, &spec.medium, DomainBox::unit_cube().diameter())
                    .map_err(|e| ("precheck".to_string(), e))?;
                if spec.require_precheck && !pre.passes() {
                    return Err((
                        "precheck".into(),
                        Error::IllConditioned {
                            condition: f64::INFINITY,
                            context: pre.describe(),
                        },
                    ));
                }
                let q = solve_foldy(cfg, &spec.medium, &spec.wave).map_err(|e| ("foldy".to_string(), e))?;
                let ff = foldy_farfield(&q, cfg, &spec.medium, &dirs).map_err(|e| ("far_field".to_string(), e))?;
                let e = ff.max_difference(&reference).map_err(|e| ("far_field".to_string(), e))?;
                Ok((
                    SweepPoint {
                        a,
                        m: cfg.len(),
                        d_actual: cfg.d_actual,
                        e,
                        runtime_s: start.elapsed().as_secs_f64(),
                        residual: q.residual_norm,
                        max_q: q.max_norm(),
                        precheck_passes: pre.passes(),
                    },
                    ff,
                ))
            };
            (a, run())
        })
        .collect();
    let mut points = Vec::new();
    let mut first_failure = None;
    for (a, o) in outcomes {
        match o {
            Ok(p) => points.push(p),
            Err((stage, e)) => {
                if first_failure.is_none() {
                    first_failure = Some((stage, a, e));
                }
            }
        }
    }
    points.sort_by(|x, y| y.0.a.total_cmp(&x.0.a));
    for (p, ff) in points {
        result.per_a.push(p);
        result.far_fields.push(ff);
    }
    if let Some((stage, a, e)) = first_failure {
        return Err(fail(&stage, Some(a), e, &result));
    }
    if result.per_a.iter().any(|p| !p.precheck_passes) {
        result.warnings.push(
            "invertibility precheck fails for some configurations (the sufficient condition is far stricter than \
             solvability); the solves ran regardless"
                .into(),
        );
    }
    let xs: Vec<f64> = result.per_a.iter().map(|p| p.a).collect();
    let es: Vec<f64> = result.per_a.iter().map(|p| p.e).collect();
    let fit = fit_loglog(&xs, &es).map_err(|e| fail("fit", None, e, &result))?;
    result.slope = fit.slope;
    result.intercept = fit.intercept;
    result.fit = Some(fit);
    result.monotone_violations = (1..es.len()).filter(|&i| es[i] > es[i - 1]).collect();
    if !result.monotone_violations.is_empty() {
        result.warnings.push(format!(
            "e(a) increases at sweep indices {:?}",
            result.monotone_violations
        ));
    }
    Ok(result)
}

/// Combined solve of point bodies inside a penetrable background discretized
/// on a voxel grid. Returns the total far field of both.
pub fn solve_hybrid(
    medium: &ElasticMedium,
    background: &PotentialField,
    config: &ScattererConfiguration,
    wave: &IncidentPlaneWave,
    directions: &[Vec3],
) -> Result<FarFieldPattern> {
    let sys = FoldySystem::new(config, medium)?;
    let op = LsOperator::new(medium, background);
    let grid = background.grid;
    let nv = grid.len();
    let centers = grid.centers();
    let vol = grid.voxel_volume();
    let bodies = sys.points();
    let caps = sys.capacitances();
    let kernel = *sys.kernel();
    for z in bodies {
        for x in &centers {
            if (z - x).norm() <= kernel.cutoff() {
                return Err(Error::InvalidInput("a body center coincides with a voxel center".into()));
            }
        }
    }
    let nb = 3 * nv;
    let mut b = incident_rhs(medium, &grid, wave);
    b.extend(sys.rhs(medium, wave));
    let apply = |x: &[Complex64], out: &mut [Complex64]| {
        let (xv, xb) = x.split_at(nb);
        let (ov, ob) = out.split_at_mut(nb);
        op.apply(xv, ov);
        sys.apply(xb, ob);
        let wb: Vec<CVec3> = caps.iter().enumerate().map(|(j, c)| real_times(c, &cv(&xb[3 * j..3 * j + 3]))).collect();
        let wv: Vec<CVec3> = background
            .q
            .iter()
            .enumerate()
            .map(|(i, q)| real_times(q, &cv(&xv[3 * i..3 * i + 3])) * Complex64::new(vol, 0.0))
            .collect();
        ov.par_chunks_mut(3).enumerate().for_each(|(i, o)| {
            let mut acc = CVec3::zeros();
            for (z, w) in bodies.iter().zip(&wb) {
                acc += kernel.apply_unchecked(&(centers[i] - z), w);
            }
            for c in 0..3 {
                o[c] += acc[c];
            }
        });
        ob.par_chunks_mut(3).enumerate().for_each(|(m, o)| {
            let mut acc = CVec3::zeros();
            for (x, w) in centers.iter().zip(&wv) {
                if w.iter().any(|v| *v != Complex64::new(0.0, 0.0)) {
                    acc += kernel.apply_unchecked(&(bodies[m] - x), w);
                }
            }
            for c in 0..3 {
                o[c] += acc[c];
            }
        });
    };
    let out = gmres(apply, &b, None, GmresOptions { tol: 1e-10, max_iter: 400 })?;
    let (xv, xb) = out.x.split_at(nb);
    let mut sources: Vec<(Vec3, CVec3)> = centers
        .iter()
        .zip(&background.q)
        .enumerate()
        .filter(|(_, (_, q))| q.iter().any(|v| *v != 0.0))
        .map(|(i, (x, q))| (*x, real_times(q, &cv(&xv[3 * i..3 * i + 3])) * Complex64::new(vol, 0.0)))
        .collect();
    sources.extend(sys.amplitudes(xb).into_iter().enumerate().map(|(j, q)| (bodies[j], q)));
    let parts: Vec<(CVec3, CVec3)> = directions
        .par_iter()
        .map(|x| project_far_field(medium, x, sources.iter().copied()))
        .collect();
    let (p_part, s_part) = parts.into_iter().unzip();
    Ok(FarFieldPattern {
        directions: directions.to_vec(),
        p_part,
        s_part,
        medium: *medium,
        wave: Some(*wave),
    })
}

fn default_s() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeDensityParams {
    pub medium: ElasticMedium,
    pub wave: IncidentPlaneWave,
    #[serde(default = "one")]
    pub rho: f64,
    pub k_plus_1: f64,
    pub c0: [[f64; 3]; 3],
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub directions: Vec<[f64; 3]>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloakParams {
    pub medium: ElasticMedium,
    pub wave: IncidentPlaneWave,
    #[serde(default)]
    pub k: DensityFunction,
    /// Body capacitance; must be a multiple of the identity for an exact null.
    pub capacitance: CapacitanceMatrix,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    /// Body sizes of the discrete comparison (may be empty).
    #[serde(default)]
    pub a_values: Vec<f64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingParams {
    pub medium: ElasticMedium,
    pub wave: IncidentPlaneWave,
    pub capacitance: CapacitanceMatrix,
    pub a_values: Vec<f64>,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub k: DensityFunction,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub directions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scenario {
    NegativeDensity(NegativeDensityParams),
    Cloak(CloakParams),
    #[serde(rename = "vanishing_s_lt_1")]
    Vanishing(VanishingParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::NegativeDensity(_) => "negative_density",
            Scenario::Cloak(_) => "cloak",
            Scenario::Vanishing(_) => "vanishing_s_lt_1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCloakPoint {
    pub a: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub far_field_max: f64,
    /// Far-field max-norm relative to the uncloaked background.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingPoint {
    pub a: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub far_field_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ScenarioReport {
    NegativeDensity {
        effective_density: [[f64; 3]; 3],
        eigenvalues: [f64; 3],
        negative_definite: bool,
        far_field_max: f64,
        #[serde(skip)]
        far_field: Option<FarFieldPattern>,
    },
    Cloak {
        rho: f64,
        background_far_field_max: f64,
        cloaked_far_field_max: f64,
        reduction_ratio: f64,
        discrete: Vec<DiscreteCloakPoint>,
        #[serde(skip)]
        far_field: Option<FarFieldPattern>,
    },
    #[serde(rename = "vanishing_s_lt_1")]
    Vanishing {
        s: f64,
        per_a: Vec<VanishingPoint>,
        strictly_decreasing: bool,
    },
}

impl ScenarioReport {
    pub fn far_field(&self) -> Option<&FarFieldPattern> {
        match self {
            ScenarioReport::NegativeDensity { far_field, .. } | ScenarioReport::Cloak { far_field, .. } => {
                far_field.as_ref()
            }
            ScenarioReport::Vanishing { .. } => None,
        }
    }
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn symmetric_eigen(m: &Mat3) -> [f64; 3] {
    let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(*m).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    [e[0], e[1], e[2]]
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport> {
    match scenario {
        Scenario::NegativeDensity(p) => negative_density(p),
        Scenario::Cloak(p) => cloak(p),
        Scenario::Vanishing(p) => vanishing(p),
    }
}

fn negative_density(p: &NegativeDensityParams) -> Result<ScenarioReport> {
    let c0 = Mat3::from_fn(|i, j| p.c0[i][j]);
    let w = p.medium.omega();
    let lo = symmetric_eigen(&c0)[0];
    if !(p.k_plus_1 * lo > p.rho * w * w) {
        return Err(Error::InvalidInput(format!(
            "negative density needs (K + 1) min eig(C0) > rho omega^2, got {} <= {}",
            p.k_plus_1 * lo,
            p.rho * w * w
        )));
    }
    let rho_eff = effective_density(p.rho, p.k_plus_1, &c0, w)?;
    let eig = symmetric_eigen(&rho_eff);
    let grid = VoxelGrid::new(DomainBox::unit_cube(), p.grid_n)?;
    let rho = p.rho;
    let pot = PotentialField::from_fn(grid, |_| c0 * p.k_plus_1)?.with_background(w, |_| rho)?;
    let y = solve_lippmann_schwinger_with(&p.medium, &pot, &p.wave, &LsOptions::default(), None)?;
    let mut ff = ls_farfield(&p.medium, &pot, &y, &dirs_of(&p.directions))?;
    ff.wave = Some(p.wave);
    Ok(ScenarioReport::NegativeDensity {
        effective_density: rows(&rho_eff),
        eigenvalues: eig,
        negative_definite: eig[2] < 0.0,
        far_field_max: ff.max_norm(),
        far_field: Some(ff),
    })
}

fn cloak(p: &CloakParams) -> Result<ScenarioReport> {
    let c0 = p.capacitance.matrix();
    let c = c0[(0, 0)];
    if (c0 - Mat3::identity() * c).abs().max() > 1e-12 * c.abs() {
        return Err(Error::InvalidInput(
            "an exact cloak needs a capacitance proportional to the identity".into(),
        ));
    }
    let w = p.medium.omega();
    if !(w > 0.0) {
        return Err(Error::InvalidInput("cloaking needs omega > 0".into()));
    }
    let dirs = dirs_of(&p.directions);
    let grid = VoxelGrid::new(DomainBox::unit_cube(), p.grid_n)?;
    let k = p.k.clone();
    // rho - (K + 1) c / omega^2 = 1
    let rho_of = move |y: &Vec3| 1.0 + (k.eval(y) + 1.0) * c / (w * w);
    let background = PotentialField::zero(grid).with_background(w, &rho_of)?;
    let cloaked = PotentialField::from_density(grid, &p.k, &c0)?.with_background(w, &rho_of)?;
    let solve = |pot: &PotentialField| -> Result<FarFieldPattern> {
        let y = solve_lippmann_schwinger_with(&p.medium, pot, &p.wave, &LsOptions::default(), None)?;
        let mut ff = ls_farfield(&p.medium, pot, &y, &dirs)?;
        ff.wave = Some(p.wave);
        Ok(ff)
    };
    let bg_ff = solve(&background)?;
    let cl_ff = solve(&cloaked)?;
    let bg_max = bg_ff.max_norm();
    let mut discrete = Vec::new();
    for &a in &p.a_values {
        let cfg = sweep_configuration(a, p.t, &p.k, p.seed, DEFAULT_D_MIN, &p.capacitance)?;
        let ff = solve_hybrid(&p.medium, &background, &cfg, &p.wave, &dirs)?;
        let v = ff.max_norm();
        discrete.push(DiscreteCloakPoint {
            a,
            m: cfg.len(),
            far_field_max: v,
            ratio: v / bg_max,
        });
    }
    let rho_mean = grid.centers().iter().map(&rho_of).sum::<f64>() / grid.len() as f64;
    Ok(ScenarioReport::Cloak {
        rho: rho_mean,
        background_far_field_max: bg_max,
        cloaked_far_field_max: cl_ff.max_norm(),
        reduction_ratio: cl_ff.max_norm() / bg_max,
        discrete,
        far_field: Some(cl_ff),
    })
}

fn vanishing(p: &VanishingParams) -> Result<ScenarioReport> {
    if !(p.s > 0.0 && p.s < 1.0) {
        return Err(Error::InvalidInput(format!("vanishing regime needs 0 < s < 1, got {}", p.s)));
    }
    if p.a_values.len() < 2 || p.a_values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("a values must be strictly decreasing, at least two".into()));
    }
    let dirs = dirs_of(&p.directions);
    let mut per_a = Vec::new();
    for &a in &p.a_values {
        // cells of volume a^s carry the bodies, so M ~ a^{-s}
        let part = partition_domain_with(&DomainBox::unit_cube(), a.powf(p.s), &p.k, DEFAULT_A0.max(a.powf(p.s)))?;
        let cfg = place_scatterers_with(&part, a, p.t, p.seed, DEFAULT_D_MIN)?.with_capacitance(p.capacitance.clone());
        let q = solve_foldy(&cfg, &p.medium, &p.wave)?;
        let ff = foldy_farfield(&q, &cfg, &p.medium, &dirs)?;
        per_a.push(VanishingPoint {
            a,
            m: cfg.len(),
            far_field_max: ff.max_norm(),
        });
    }
    let strictly_decreasing = per_a.windows(2).all(|w| w[1].far_field_max < w[0].far_field_max);
    Ok(ScenarioReport::Vanishing {
        s: p.s,
        per_a,
        strictly_decreasing,
    })
}
