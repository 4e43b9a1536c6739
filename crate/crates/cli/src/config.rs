//! Run configuration: one JSON document per invocation.

use std::path::{Path, PathBuf};

use elastoscat::distribution::{DensityFunction, DomainBox, DEFAULT_A0, DEFAULT_D_MIN};
use elastoscat::foldy::{cube_directions, fibonacci_directions, SolverChoice, DEFAULT_C0, RESIDUAL_TOL};
use elastoscat::medium::any_perpendicular;
use elastoscat::{Complex64, ElasticMedium, Error, IncidentPlaneWave, Result, Vec3};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Capacitance,
    Foldy,
    Effective,
    Sweep,
    Scenario,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Capacitance => "capacitance",
            Command::Foldy => "foldy",
            Command::Effective => "effective",
            Command::Sweep => "sweep",
            Command::Scenario => "scenario",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_medium")]
    pub medium: ElasticMedium,
    #[serde(default)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub wave: WaveSpec,
    #[serde(default)]
    pub directions: DirectionSpec,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub solver: SolverChoice,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepOptions,
    /// Scenario parameters with a `name` tag; `medium`, `wave` and
    /// `capacitance` are filled from the top level when absent.
    #[serde(default)]
    pub scenario: Option<Value>,
    /// Refuse configurations failing the invertibility precheck.
    #[serde(default)]
    pub require_precheck: bool,
    /// Also write the volume field of the `effective` solve.
    #[serde(default)]
    pub write_field: bool,
    /// Output directory; `--out` and `ELASTOSCAT_OUT` take precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_medium() -> ElasticMedium {
    ElasticMedium::new(1.0, 1.0, 1.0).expect("unit medium is valid")
}

fn default_grid() -> usize {
    24
}

/// Body shape: a builtin generator or an ASCII mesh file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default)]
    pub axes: Option<[f64; 3]>,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
}

fn default_level() -> u32 {
    3
}

impl Default for ShapeSpec {
    fn default() -> Self {
        Self {
            builtin: None,
            level: default_level(),
            axes: None,
            mesh: None,
        }
    }
}

impl ShapeSpec {
    pub fn name(&self) -> String {
        match (&self.mesh, &self.builtin) {
            (Some(p), _) => format!("mesh:{}", p.display()),
            (None, Some(b)) => b.clone(),
            (None, None) => "sphere".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub k: DensityFunction,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
    #[serde(default = "default_a0")]
    pub a0: f64,
    #[serde(default)]
    pub domain: Option<DomainBox>,
}

fn default_t() -> f64 {
    1.0 / 3.0
}

fn default_d_min() -> f64 {
    DEFAULT_D_MIN
}

fn default_a0() -> f64 {
    DEFAULT_A0
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self {
            a: None,
            t: default_t(),
            k: DensityFunction::default(),
            seed: 0,
            d_min: default_d_min(),
            a0: default_a0(),
            domain: None,
        }
    }
}

/// Plane wave; `alpha` and `beta` are `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    #[serde(default = "default_theta")]
    pub theta: [f64; 3],
    #[serde(default)]
    pub theta_perp: Option<[f64; 3]>,
    #[serde(default = "default_alpha")]
    pub alpha: [f64; 2],
    #[serde(default)]
    pub beta: [f64; 2],
}

fn default_theta() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_alpha() -> [f64; 2] {
    [1.0, 0.0]
}

impl Default for WaveSpec {
    fn default() -> Self {
        Self {
            theta: default_theta(),
            theta_perp: None,
            alpha: default_alpha(),
            beta: [0.0, 0.0],
        }
    }
}

impl WaveSpec {
    pub fn build(&self) -> Result<IncidentPlaneWave> {
        let theta = Vec3::from(self.theta);
        let perp = self.theta_perp.map(Vec3::from).unwrap_or_else(|| any_perpendicular(&theta));
        IncidentPlaneWave::new(
            theta,
            perp,
            Complex64::new(self.alpha[0], self.alpha[1]),
            Complex64::new(self.beta[0], self.beta[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case", deny_unknown_fields)]
pub enum DirectionSpec {
    #[default]
    Cube,
    Fibonacci { n: usize },
    List { directions: Vec<[f64; 3]> },
}

impl DirectionSpec {
    pub fn build(&self) -> Vec<Vec3> {
        match self {
            DirectionSpec::Cube => cube_directions(),
            DirectionSpec::Fibonacci { n } => fibonacci_directions(*n),
            DirectionSpec::List { directions } => directions.iter().map(|d| Vec3::from(*d)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub foldy: f64,
    #[serde(default)]
    pub foldy_max_iter: Option<usize>,
    #[serde(default = "default_tol")]
    pub ls: f64,
    #[serde(default = "default_ls_iter")]
    pub ls_max_iter: usize,
    /// Spacing constant of the invertibility precheck.
    #[serde(default = "default_c0")]
    pub c0: f64,
}

fn default_tol() -> f64 {
    RESIDUAL_TOL
}

fn default_ls_iter() -> usize {
    400
}

fn default_c0() -> f64 {
    DEFAULT_C0
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            foldy: default_tol(),
            foldy_max_iter: None,
            ls: default_tol(),
            ls_max_iter: default_ls_iter(),
            c0: default_c0(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepOptions {
    /// Strictly decreasing sizes; `2^-6 .. 2^-12` when absent.
    #[serde(default)]
    pub a_values: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

pub fn default_sweep_sizes() -> Vec<f64> {
    (6..=12).map(|e| 0.5f64.powi(e)).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // mesh paths are relative to the config file
        if let (Some(mesh), Some(dir)) = (&cfg.shape.mesh, path.parent()) {
            if mesh.is_relative() {
                cfg.shape.mesh = Some(dir.join(mesh));
            }
        }
        Ok(cfg)
    }

    /// Schema-level checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        for (name, v) in [("foldy", self.tolerances.foldy), ("ls", self.tolerances.ls), ("c0", self.tolerances.c0)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if self.tolerances.ls_max_iter == 0 || self.tolerances.foldy_max_iter == Some(0) {
            return bad("iteration budgets must be positive".into());
        }
        if self.grid_n < 4 {
            return bad(format!("grid_n must be at least 4, got {}", self.grid_n));
        }
        match (&self.shape.mesh, &self.shape.builtin) {
            (Some(_), Some(_)) => return bad("shape takes either builtin or mesh, not both".into()),
            (Some(p), None) if !p.is_file() => return bad(format!("mesh file {} does not exist", p.display())),
            (None, Some(b)) if !["sphere", "cube", "ellipsoid"].contains(&b.as_str()) => {
                return bad(format!("unknown builtin shape {b:?} (expected sphere, cube or ellipsoid)"))
            }
            _ => {}
        }
        if self.shape.level > 5 {
            return bad(format!("mesh level {} is beyond the dense BEM range (<= 5)", self.shape.level));
        }
        self.wave.build()?;
        elastoscat::foldy::check_directions(&self.directions.build())?;
        let d = &self.distribution;
        if !(d.t > 0.0 && d.d_min > 0.0 && d.a0 > 0.0) {
            return bad("distribution t, d_min and a0 must be positive".into());
        }
        let domain = d.domain.unwrap_or_else(DomainBox::unit_cube);
        d.k.validate(&domain)?;
        match self.command {
            Command::Foldy => {
                let Some(a) = d.a else {
                    return bad("foldy needs distribution.a".into());
                };
                if !(a > 0.0 && a <= d.a0) {
                    return bad(format!("distribution.a = {a} must lie in (0, a0 = {}]", d.a0));
                }
                if d.t < 1.0 / 3.0 - 1e-12 {
                    return Err(Error::Infeasible(format!(
                        "packing bound: t = {} < 1/3 cannot keep the bodies a^t apart",
                        d.t
                    )));
                }
            }
            Command::Scenario => match &self.scenario {
                Some(Value::Object(m)) if m.get("name").is_some_and(Value::is_string) => {}
                _ => return bad("scenario command needs a scenario object with a name".into()),
            },
            _ => {}
        }
        Ok(())
    }
}
