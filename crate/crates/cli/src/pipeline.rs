//! One function per command. Each returns the summary payload; auxiliary
//! files go through the writer.

use std::path::Path;

use elastoscat::capacitance::CapacitanceMatrix;
use elastoscat::distribution::{partition_domain_with, place_scatterers_with, DomainBox};
use elastoscat::effective::{
    effective_density, ls_farfield, solve_lippmann_schwinger_with, LsOptions, PotentialField, VoxelGrid,
};
use elastoscat::experiments::{convergence_sweep, run_scenario, sweep_configuration, Scenario, SweepSpec};
use elastoscat::foldy::{
    foldy_farfield, precheck_invertibility_with, solve_foldy_with, FoldyOptions, SolverChoice, DENSE_LIMIT,
};
use elastoscat::io::fmt17;
use elastoscat::{Error, Mat3, Result, Vec3};
use serde_json::{json, Value};

use crate::config::{default_sweep_sizes, Command, RunConfig};
use crate::output::{self, CacheStatus, Writer};

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub writer: Writer,
    pub cache_dir: &'a Path,
    pub plot: bool,
    pub cache: Option<CacheStatus>,
}

impl Context<'_> {
    fn capacitance(&mut self) -> Result<CapacitanceMatrix> {
        let m = &self.config.medium;
        let (c, status) = output::capacitance(self.cache_dir, &self.config.shape, m.lambda(), m.mu())?;
        self.cache = Some(status);
        Ok(c)
    }

    fn far_field(&mut self, name: &str, csv: &str) -> Result<()> {
        self.writer.commented(name, csv)?;
        if self.plot {
            self.writer.commented(&format!("plot_{}.py", name.trim_end_matches(".csv")), &output::plot_script(name))?;
        }
        Ok(())
    }
}

fn domain(cfg: &RunConfig) -> DomainBox {
    cfg.distribution.domain.unwrap_or_else(DomainBox::unit_cube)
}

pub fn run(ctx: &mut Context) -> Result<Value> {
    match ctx.config.command {
        Command::Capacitance => capacitance(ctx),
        Command::Foldy => foldy(ctx),
        Command::Effective => effective(ctx),
        Command::Sweep => sweep(ctx),
        Command::Scenario => scenario(ctx),
    }
}

fn capacitance(ctx: &mut Context) -> Result<Value> {
    let c = ctx.capacitance()?;
    let (lo, hi) = c.bracket();
    Ok(json!({
        "capacitance": c,
        "eigenvalues": c.eigenvalues(),
        "bracket": [lo, hi],
    }))
}

fn foldy(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.config;
    let d = &cfg.distribution;
    let a = d.a.ok_or_else(|| Error::InvalidInput("foldy needs distribution.a".into()))?;
    let dom = domain(cfg);
    let cap = ctx.capacitance()?;
    let partition = partition_domain_with(&dom, a, &d.k, d.a0)?;
    let conf = place_scatterers_with(&partition, a, d.t, d.seed, d.d_min)?.with_capacitance(cap);
    let medium = cfg.medium;
    let wave = cfg.wave.build()?;
    let pre = precheck_invertibility_with(&conf, &medium, dom.diameter(), cfg.tolerances.c0)?;
    let opts = FoldyOptions {
        solver: cfg.solver,
        tol: cfg.tolerances.foldy,
        max_iter: cfg.tolerances.foldy_max_iter,
        require_precheck: cfg.require_precheck.then(|| dom.diameter()),
    };
    let q = solve_foldy_with(&conf, &medium, &wave, &opts)?;
    let ff = foldy_farfield(&q, &conf, &medium, &cfg.directions.build())?;

    let mut amps = String::from("m,z1,z2,z3,Re(Q1),Re(Q2),Re(Q3),Im(Q1),Im(Q2),Im(Q3)\n");
    for (m, (z, v)) in conf.positions.iter().zip(&q.q).enumerate() {
        let mut row = vec![m.to_string()];
        row.extend(z.iter().map(|x| fmt17(*x)));
        row.extend(v.iter().map(|c| fmt17(c.re)));
        row.extend(v.iter().map(|c| fmt17(c.im)));
        amps.push_str(&row.join(","));
        amps.push('\n');
    }
    ctx.writer.json("configuration.json", &conf)?;
    ctx.writer.commented("amplitudes.csv", &amps)?;
    ctx.far_field("farfield.csv", &ff.to_csv())?;
    let mut warnings = Vec::new();
    if !pre.passes() {
        warnings.push(pre.describe());
    }
    Ok(json!({
        "M": conf.len(),
        "a": a,
        "t": d.t,
        "d_actual": conf.d_actual,
        "solver": q.solver,
        "iterations": q.iterations,
        "residual": q.residual_norm,
        "residual_history": q.history,
        "max_q": q.max_norm(),
        "sum_q_sq": q.sum_sq(),
        "precheck": pre,
        "far_field_max": ff.max_norm(),
        "polarization_defect": ff.polarization_defect(),
        "warnings": warnings,
    }))
}

fn effective(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.config;
    let cap = ctx.capacitance()?;
    let c0 = cap.matrix();
    let dom = domain(cfg);
    let grid = VoxelGrid::new(dom, cfg.grid_n)?;
    let pot = PotentialField::from_density(grid, &cfg.distribution.k, &c0)?;
    let wave = cfg.wave.build()?;
    let opts = LsOptions {
        tol: cfg.tolerances.ls,
        max_iter: cfg.tolerances.ls_max_iter,
    };
    let y = solve_lippmann_schwinger_with(&cfg.medium, &pot, &wave, &opts, None)?;
    let ff = ls_farfield(&cfg.medium, &pot, &y, &cfg.directions.build())?;
    ctx.far_field("effective_farfield.csv", &ff.to_csv())?;
    if cfg.write_field {
        ctx.writer.commented("effective_field.csv", &y.to_csv())?;
    }
    let center = Vec3::from(dom.min).lerp(&Vec3::from(dom.max), 0.5);
    let k1 = cfg.distribution.k.eval(&center) + 1.0;
    let rho = effective_density(cfg.medium.rho_background(), k1, &c0, cfg.medium.omega())?;
    let rows: Vec<[f64; 3]> = (0..3).map(|i| [rho[(i, 0)], rho[(i, 1)], rho[(i, 2)]]).collect();
    Ok(json!({
        "grid_n": cfg.grid_n,
        "c0": cap.c_elastic,
        "effective_density_at_center": rows,
        "residual": y.residual,
        "iterations": y.iterations,
        "far_field_max": ff.max_norm(),
        "polarization_defect": ff.polarization_defect(),
    }))
}

/// Stand-in capacitance for validating a sweep before any extraction.
fn placeholder(cfg: &RunConfig) -> Result<CapacitanceMatrix> {
    CapacitanceMatrix::from_parts(Mat3::identity(), 1.0, cfg.medium.lambda(), cfg.medium.mu(), "unextracted")
}

pub fn sweep_spec(cfg: &RunConfig, cap: CapacitanceMatrix) -> Result<SweepSpec> {
    Ok(SweepSpec {
        a_values: cfg.sweep.a_values.clone().unwrap_or_else(default_sweep_sizes),
        t: cfg.distribution.t,
        k: cfg.distribution.k.clone(),
        gamma: cfg.sweep.gamma,
        shape: cfg.shape.name(),
        capacitance: cap,
        medium: cfg.medium,
        wave: cfg.wave.build()?,
        directions: cfg.directions.build().iter().map(|d| [d.x, d.y, d.z]).collect(),
        seed: cfg.distribution.seed,
        grid_n: cfg.grid_n,
        d_min: cfg.distribution.d_min,
        c0: cfg.tolerances.c0,
        require_precheck: cfg.require_precheck,
    })
}

fn sweep(ctx: &mut Context) -> Result<Value> {
    if ctx.config.distribution.domain.is_some() {
        return Err(Error::InvalidInput("sweeps run on the unit cube; drop distribution.domain".into()));
    }
    // cheap checks before the extraction
    let spec = sweep_spec(ctx.config, placeholder(ctx.config)?)?;
    spec.validate()?;
    let cap = ctx.capacitance()?;
    let spec = SweepSpec { capacitance: cap, ..spec };
    match convergence_sweep(&spec) {
        Ok(r) => {
            ctx.far_field("sweep_farfield.csv", &r.far_field_csv())?;
            Ok(serde_json::to_value(&r)?)
        }
        Err(f) => {
            ctx.writer.json(
                "sweep.partial.json",
                &json!({"stage": f.stage, "a": f.a, "error": f.error.to_string(), "partial": f.partial}),
            )?;
            Err(f.error)
        }
    }
}

fn scenario(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.config;
    let Some(Value::Object(raw)) = &cfg.scenario else {
        return Err(Error::InvalidInput("scenario command needs a scenario object".into()));
    };
    let mut obj = raw.clone();
    let name = obj.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
    obj.entry("medium").or_insert(serde_json::to_value(cfg.medium)?);
    obj.entry("wave").or_insert(serde_json::to_value(cfg.wave.build()?)?);
    let dirs: Vec<[f64; 3]> = cfg.directions.build().iter().map(|d| [d.x, d.y, d.z]).collect();
    obj.entry("directions").or_insert(serde_json::to_value(dirs)?);
    // fields a scenario does not use are ignored when it is parsed
    obj.entry("seed").or_insert(json!(cfg.distribution.seed));
    obj.entry("t").or_insert(json!(cfg.distribution.t));
    obj.entry("k").or_insert(serde_json::to_value(&cfg.distribution.k)?);
    obj.entry("grid_n").or_insert(json!(cfg.grid_n));
    if name != "negative_density" && !obj.contains_key("capacitance") {
        obj.insert("capacitance".into(), serde_json::to_value(ctx.capacitance()?)?);
    }
    let sc: Scenario = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
    let report = run_scenario(&sc)?;
    if let Some(ff) = report.far_field() {
        ctx.far_field("scenario_farfield.csv", &ff.to_csv())?;
    }
    Ok(serde_json::to_value(&report)?)
}

/// Execution plan for `--dry-run`; validates everything that is cheap.
pub fn plan(cfg: &RunConfig, cache_dir: &Path) -> Result<Vec<String>> {
    let mut steps = Vec::new();
    let shape_step = || -> Result<String> {
        let path = output::cache_path(cache_dir, &cfg.shape, cfg.medium.lambda(), cfg.medium.mu())?;
        Ok(if path.is_file() {
            format!("capacitance of {} (level {}): cache hit {}", cfg.shape.name(), cfg.shape.level, path.display())
        } else {
            let n = output::load_mesh(&cfg.shape)?.len();
            format!(
                "capacitance of {} (level {}): BEM extraction on {n} triangles ({} unknowns)",
                cfg.shape.name(),
                cfg.shape.level,
                3 * n
            )
        })
    };
    let solver = |m: usize| match cfg.solver {
        SolverChoice::Auto if 3 * m <= DENSE_LIMIT => "dense LU",
        SolverChoice::Auto | SolverChoice::Iterative => "GMRES",
        SolverChoice::Dense => "dense LU",
    };
    match cfg.command {
        Command::Capacitance => steps.push(shape_step()?),
        Command::Foldy => {
            steps.push(shape_step()?);
            let d = &cfg.distribution;
            let a = d.a.unwrap_or_default();
            let p = partition_domain_with(&domain(cfg), a, &d.k, d.a0)?;
            let m = place_scatterers_with(&p, a, d.t, d.seed, d.d_min)?.len();
            steps.push(format!("placement: {} cells, M = {m} bodies, t = {}, seed {}", p.cells.len(), d.t, d.seed));
            steps.push(format!("point-interaction solve: {} unknowns by {}", 3 * m, solver(m)));
            steps.push(format!("far field on {} directions", cfg.directions.build().len()));
        }
        Command::Effective => {
            steps.push(shape_step()?);
            let n = cfg.grid_n;
            steps.push(format!("Lippmann-Schwinger solve on {n}^3 voxels ({} unknowns, FFT products)", 3 * n * n * n));
        }
        Command::Sweep => {
            let spec = sweep_spec(cfg, placeholder(cfg)?)?;
            for w in spec.validate()? {
                steps.push(format!("warning: {w}"));
            }
            steps.push(shape_step()?);
            steps.push(format!("reference: equivalent medium on {0}^3 and {1}^3 voxels, extrapolated", spec.grid_n, 2 * spec.grid_n));
            for &a in &spec.a_values {
                let m = sweep_configuration(a, spec.t, &spec.k, spec.seed, spec.d_min, &spec.capacitance)?.len();
                steps.push(format!("a = {a:e}: M = {m}, {} unknowns by {}", 3 * m, solver(m)));
            }
            steps.push(format!("log-log fit, predicted exponent {:.4}", spec.predicted_exponent()));
        }
        Command::Scenario => {
            let name = cfg.scenario.as_ref().and_then(|s| s.get("name")).and_then(Value::as_str).unwrap_or("?");
            if name != "negative_density" {
                steps.push(shape_step()?);
            }
            steps.push(format!("scenario {name}"));
        }
    }
    Ok(steps)
}
