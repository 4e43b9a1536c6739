//! Placement of many small bodies in a box: a partition into cells of
//! prescribed volume, one or more bodies per cell, and layer statistics.

use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacitance::CapacitanceMatrix;
use crate::error::{Error, Result};
use crate::Vec3;

/// Default upper bound on the body diameter.
pub const DEFAULT_A0: f64 = 0.1;
/// Default ratio between the guaranteed minimum distance and `a^t`.
pub const DEFAULT_D_MIN: f64 = 0.45;

/// Local number of bodies per cell, `[K(z) + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityFunction {
    Constant { value: f64 },
    /// `K(z) = base + slope . z`, Lipschitz.
    Linear { base: f64, slope: [f64; 3] },
    /// `low` for `z_x < split`, `high` otherwise; not Hölder continuous.
    Step { low: f64, high: f64, split: f64 },
}

impl Default for DensityFunction {
    fn default() -> Self {
        DensityFunction::Constant { value: 0.0 }
    }
}

impl DensityFunction {
    pub fn eval(&self, z: &Vec3) -> f64 {
        match self {
            DensityFunction::Constant { value } => *value,
            DensityFunction::Linear { base, slope } => base + Vec3::from(*slope).dot(z),
            DensityFunction::Step { low, high, split } => {
                if z.x < *split {
                    *low
                } else {
                    *high
                }
            }
        }
    }

    /// Hölder exponent, `None` when unknown.
    pub fn holder_gamma(&self) -> Option<f64> {
        match self {
            DensityFunction::Constant { .. } | DensityFunction::Linear { .. } => Some(1.0),
            DensityFunction::Step { .. } => None,
        }
    }

    /// `sup (K + 1)` over the box; linear functions attain it at a corner.
    pub fn k_max(&self, domain: &DomainBox) -> f64 {
        let corners = domain.corners();
        match self {
            DensityFunction::Constant { value } => value + 1.0,
            DensityFunction::Linear { .. } => corners.iter().map(|c| self.eval(c)).fold(f64::MIN, f64::max) + 1.0,
            DensityFunction::Step { low, high, .. } => low.max(*high) + 1.0,
        }
    }

    fn k_min(&self, domain: &DomainBox) -> f64 {
        match self {
            DensityFunction::Constant { value } => *value,
            DensityFunction::Linear { .. } => domain.corners().iter().map(|c| self.eval(c)).fold(f64::MAX, f64::min),
            DensityFunction::Step { low, high, .. } => low.min(*high),
        }
    }

    pub fn validate(&self, domain: &DomainBox) -> Result<()> {
        let lo = self.k_min(domain);
        if !(lo >= 0.0) || !self.k_max(domain).is_finite() {
            return Err(Error::InvalidInput(format!(
                "K must be finite and non-negative on the domain (min K = {lo})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for DomainBox {
    fn default() -> Self {
        DomainBox::unit_cube()
    }
}

impl DomainBox {
    pub fn unit_cube() -> Self {
        DomainBox {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn edges(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.max[k] - self.min[k])
    }

    pub fn volume(&self) -> f64 {
        self.edges().iter().product()
    }

    pub fn diameter(&self) -> f64 {
        Vec3::from(self.edges()).norm()
    }

    pub fn corners(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(8);
        for i in 0..8 {
            out.push(Vec3::new(
                if i & 1 == 0 { self.min[0] } else { self.max[0] },
                if i & 2 == 0 { self.min[1] } else { self.max[1] },
                if i & 4 == 0 { self.min[2] } else { self.max[2] },
            ));
        }
        out
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Regular grid of slots, one cell per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotGrid {
    pub origin: [f64; 3],
    pub edges: [f64; 3],
    pub dims: [usize; 3],
}

impl SlotGrid {
    pub fn slot_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| {
            let i = ((p[k] - self.origin[k]) / self.edges[k]).floor() as i64;
            i.clamp(0, self.dims[k] as i64 - 1)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: [f64; 3],
    /// Cell extents (the slot, shrunk along z to the prescribed volume).
    pub edges: [f64; 3],
    pub slot: [usize; 3],
    /// `[K(z_m) + 1]`.
    pub target: usize,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        self.edges.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubePartition {
    pub domain: DomainBox,
    pub a: f64,
    pub k: DensityFunction,
    pub grid: SlotGrid,
    pub cells: Vec<Cell>,
}

impl CubePartition {
    pub fn total_targets(&self) -> usize {
        self.cells.iter().map(|c| c.target).sum()
    }

    pub fn k_max(&self) -> f64 {
        self.k.k_max(&self.domain)
    }
}

/// Factorization `n = nx ny nz` making the slots as close to cubes as
/// possible for the given box edges. Among equally good factorizations the
/// one with the most slots along x (then y) wins.
fn best_factorization(n: usize, edges: [f64; 3]) -> ([usize; 3], f64) {
    let mut best = ([n, 1, 1], f64::INFINITY);
    for nx in 1..=n {
        if !n.is_multiple_of(nx) {
            continue;
        }
        let rest = n / nx;
        for ny in 1..=rest {
            if !rest.is_multiple_of(ny) {
                continue;
            }
            let nz = rest / ny;
            let h = [edges[0] / nx as f64, edges[1] / ny as f64, edges[2] / nz as f64];
            let aspect = h.iter().cloned().fold(f64::MIN, f64::max) / h.iter().cloned().fold(f64::MAX, f64::min);
            // ties go to the later candidate, i.e. nx >= ny >= nz
            if aspect <= best.1 + 1e-12 {
                best = ([nx, ny, nz], aspect);
            }
        }
    }
    best
}

/// Splits a unit-volume box into `[1/a]` slots (or one fewer when that
/// factors into more cube-like slots) and shrinks each to the volume
/// `a [K(z_m) + 1] / (K(z_m) + 1)`.
pub fn partition_domain(domain: &DomainBox, a: f64, k: &DensityFunction) -> Result<CubePartition> {
    partition_domain_with(domain, a, k, DEFAULT_A0)
}

pub fn partition_domain_with(domain: &DomainBox, a: f64, k: &DensityFunction, a0: f64) -> Result<CubePartition> {
    if !(a > 0.0 && a <= a0) {
        return Err(Error::InvalidInput(format!(
            "body size a = {a} must satisfy 0 < a <= a0 = {a0}"
        )));
    }
    let vol = domain.volume();
    if (vol - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("domain volume must be 1, got {vol}")));
    }
    k.validate(domain)?;
    let inv = 1.0 / a;
    let n = (inv + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::InvalidInput(format!("a = {a} is too large to fit one cell")));
    }
    let edges = domain.edges();
    let mut choice = best_factorization(n, edges);
    // dropping one slot is allowed when 1/a is an integer (count stays within
    // one of ceil(1/a))
    if n > 1 && (inv - n as f64).abs() < 1e-9 {
        let alt = best_factorization(n - 1, edges);
        if alt.1 < 0.75 * choice.1 {
            choice = alt;
        }
    }
    let dims = choice.0;
    let h = [0, 1, 2].map(|i| edges[i] / dims[i] as f64);
    let grid = SlotGrid {
        origin: domain.min,
        edges: h,
        dims,
    };
    let mut cells = Vec::with_capacity(dims.iter().product());
    for ix in 0..dims[0] {
        for iy in 0..dims[1] {
            for iz in 0..dims[2] {
                let center = [
                    domain.min[0] + (ix as f64 + 0.5) * h[0],
                    domain.min[1] + (iy as f64 + 0.5) * h[1],
                    domain.min[2] + (iz as f64 + 0.5) * h[2],
                ];
                let kz = k.eval(&Vec3::from(center));
                let target = (kz + 1.0).floor() as usize;
                let volume = a * target as f64 / (kz + 1.0);
                let ez = volume / (h[0] * h[1]);
                if ez > h[2] * (1.0 + 1e-12) {
                    return Err(Error::Infeasible(format!(
                        "cell volume {volume} exceeds its slot volume {}",
                        h[0] * h[1] * h[2]
                    )));
                }
                cells.push(Cell {
                    center,
                    edges: [h[0], h[1], ez.min(h[2])],
                    slot: [ix, iy, iz],
                    target,
                });
            }
        }
    }
    Ok(CubePartition {
        domain: *domain,
        a,
        k: k.clone(),
        grid,
        cells,
    })
}

/// Bodies of common diameter `a` at centers `positions`, with their
/// capacitances and placement metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererConfiguration {
    pub a: f64,
    pub t: f64,
    pub seed: u64,
    pub positions: Vec<[f64; 3]>,
    /// Minimum surface distance, `min |z_i - z_j| - a`.
    pub d_actual: f64,
    #[serde(default)]
    pub k_spec: DensityFunction,
    /// `(t - 1/4) / t` when `t` lies in `[1/3, 7/12]`.
    #[serde(default)]
    pub alpha_dist: Option<f64>,
    /// Largest number of bodies in one cell.
    #[serde(default = "one")]
    pub m_max_const: f64,
    #[serde(default)]
    pub grid: Option<SlotGrid>,
    /// Reference capacitances and the index used by each body.
    #[serde(default)]
    pub capacitances: Vec<CapacitanceMatrix>,
    #[serde(default)]
    pub capacitance_index: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

pub fn alpha_dist(t: f64) -> Option<f64> {
    (1.0 / 3.0 - 1e-12..=7.0 / 12.0 + 1e-12).contains(&t).then(|| (t - 0.25) / t)
}

impl ScattererConfiguration {
    /// Configuration from explicit centers; every body gets `capacitance`.
    pub fn from_positions(positions: Vec<Vec3>, a: f64, capacitance: CapacitanceMatrix) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!("a must be positive, got {a}")));
        }
        if positions.is_empty() {
            return Err(Error::InvalidInput("configuration needs at least one body".into()));
        }
        let d = min_center_distance(&positions);
        if positions.len() > 1 && !(d > 0.0) {
            return Err(Error::InvalidInput("two bodies share a position".into()));
        }
        let m = positions.len();
        Ok(Self {
            a,
            t: f64::NAN,
            seed: 0,
            positions: positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
            d_actual: if m > 1 { d - a } else { f64::INFINITY },
            k_spec: DensityFunction::default(),
            alpha_dist: None,
            m_max_const: 1.0,
            grid: None,
            capacitances: vec![capacitance],
            capacitance_index: vec![0; m],
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, m: usize) -> Vec3 {
        Vec3::from(self.positions[m])
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.positions.iter().map(|p| Vec3::from(*p)).collect()
    }

    /// Attaches one capacitance to every body.
    pub fn with_capacitance(mut self, c: CapacitanceMatrix) -> Self {
        self.capacitances = vec![c];
        self.capacitance_index = vec![0; self.positions.len()];
        self
    }

    pub fn capacitance(&self, m: usize) -> Option<&CapacitanceMatrix> {
        self.capacitances.get(*self.capacitance_index.get(m)?)
    }

    /// Translated copy (same capacitances).
    pub fn translated(&self, h: &Vec3) -> Self {
        let mut out = self.clone();
        for p in &mut out.positions {
            *p = [p[0] + h.x, p[1] + h.y, p[2] + h.z];
        }
        if let Some(g) = &mut out.grid {
            g.origin = [g.origin[0] + h.x, g.origin[1] + h.y, g.origin[2] + h.z];
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Places `[K + 1]` bodies of diameter `a` in every cell so that surface
/// distances are at least `d_min a^t`.
pub fn place_scatterers(partition: &CubePartition, a: f64, t: f64, seed: u64) -> Result<ScattererConfiguration> {
    place_scatterers_with(partition, a, t, seed, DEFAULT_D_MIN)
}

pub fn place_scatterers_with(
    partition: &CubePartition,
    a: f64,
    t: f64,
    seed: u64,
    d_min: f64,
) -> Result<ScattererConfiguration> {
    if !(a > 0.0 && t > 0.0 && d_min > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need a > 0, t > 0 and d_min > 0 (a = {a}, t = {t}, d_min = {d_min})"
        )));
    }
    let required = d_min * a.powf(t);
    // minimum center spacing
    let spacing = required + a;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(partition.total_targets());
    let mut max_target = 1usize;
    for cell in &partition.cells {
        let k = cell.target;
        max_target = max_target.max(k);
        if k == 0 {
            continue;
        }
        let dims = sublattice(k, cell.edges);
        let s = [0, 1, 2].map(|i| cell.edges[i] / dims[i] as f64);
        let smin = s.iter().cloned().fold(f64::MAX, f64::min);
        if smin < spacing {
            let hint = if t < 1.0 / 3.0 {
                "cells of volume ~a hold only spacings of order a^(1/3), so t >= 1/3 is required"
            } else {
                "the cell grid is too coarse at this size; use a smaller a, a smaller d_min or a larger t"
            };
            return Err(Error::Infeasible(format!(
                "packing bound violated: {k} bodies per cell leave a center spacing of {smin:.6e}, \
                 below a + d_min a^t = {spacing:.6e} (a = {a}, t = {t}, d_min = {d_min}); {hint}"
            )));
        }
        let c = Vec3::from(cell.center);
        let lo = c - Vec3::from(cell.edges) * 0.5;
        let mut placed = 0;
        'fill: for ix in 0..dims[0] {
            for iy in 0..dims[1] {
                for iz in 0..dims[2] {
                    if placed == k {
                        break 'fill;
                    }
                    let idx = [ix, iy, iz];
                    let mut p = Vec3::zeros();
                    for d in 0..3 {
                        let center = lo[d] + (idx[d] as f64 + 0.5) * s[d];
                        // half of the admissible slack, so neighbours in
                        // adjacent sub-cells (or cells) stay `spacing` apart
                        let jitter = if k > 1 { 0.25 * (s[d] - spacing).max(0.0) } else { 0.0 };
                        let u: f64 = rng.random_range(-1.0..=1.0);
                        p[d] = center + jitter * u;
                    }
                    positions.push(p);
                    placed += 1;
                }
            }
        }
    }
    let d = min_center_distance(&positions);
    let m = positions.len();
    if m > 1 && d < spacing * (1.0 - 1e-12) {
        return Err(Error::Infeasible(format!(
            "packing bound violated: measured surface distance {:.6e} < d_min a^t = {required:.6e}",
            d - a
        )));
    }
    Ok(ScattererConfiguration {
        a,
        t,
        seed,
        positions: positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
        d_actual: if m > 1 { d - a } else { f64::INFINITY },
        k_spec: partition.k.clone(),
        alpha_dist: alpha_dist(t),
        m_max_const: max_target as f64,
        grid: Some(partition.grid.clone()),
        capacitances: Vec::new(),
        capacitance_index: Vec::new(),
    })
}

/// Sub-grid with at least `k` sub-cells maximizing the smallest spacing.
fn sublattice(k: usize, edges: [f64; 3]) -> [usize; 3] {
    let mut best = [k, 1, 1];
    let mut best_s = 0.0;
    for px in 1..=k {
        for py in 1..=k {
            let pz = k.div_ceil(px * py);
            let s = (edges[0] / px as f64).min(edges[1] / py as f64).min(edges[2] / pz as f64);
            if s > best_s + 1e-15 {
                best_s = s;
                best = [px, py, pz];
            }
            if px * py >= k {
                break;
            }
        }
    }
    best
}

/// Smallest pairwise center distance, by exhaustive scan for up to 5000
/// points and by a spatial hash beyond.
pub fn min_center_distance(points: &[Vec3]) -> f64 {
    if points.len() <= 5000 {
        min_distance_exhaustive(points)
    } else {
        min_distance_hashed(points)
    }
}

pub fn min_distance_exhaustive(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.min((p - q).norm_squared());
        }
    }
    best.sqrt()
}

pub fn min_distance_hashed(points: &[Vec3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return f64::INFINITY;
    }
    let lo = points.iter().fold(Vec3::repeat(f64::MAX), |m, p| m.inf(p));
    let hi = points.iter().fold(Vec3::repeat(f64::MIN), |m, p| m.sup(p));
    let ext = hi - lo;
    // about one point per bucket; the cell size only affects speed as long as
    // the search grows until it covers the current best distance
    let vol = ext.x.max(1e-300) * ext.y.max(1e-300) * ext.z.max(1e-300);
    let h = (vol / n as f64).cbrt().max(ext.max() / 1e6).max(1e-300);
    let key = |p: &Vec3| -> [i64; 3] { [0, 1, 2].map(|k| ((p[k] - lo[k]) / h).floor() as i64) };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let k = key(p);
        let mut r = 1i64;
        loop {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for &j in list {
                                if j > i {
                                    best = best.min((p - points[j]).norm());
                                }
                            }
                        }
                    }
                }
            }
            // any unvisited point is at least r * h away
            if best <= r as f64 * h || r as f64 * h > ext.norm() {
                break;
            }
            r *= 2;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCount {
    pub n: usize,
    pub count: usize,
    pub min_distance: f64,
}

/// Bodies `j != m` binned by the Chebyshev distance between their slot and
/// the slot of body `m`.
pub fn layer_census(config: &ScattererConfiguration, m: usize) -> Result<Vec<LayerCount>> {
    if m >= config.len() {
        return Err(Error::InvalidInput(format!(
            "body index {m} out of range ({} bodies)",
            config.len()
        )));
    }
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => {
            // spacing of the configuration itself
            let pts = config.points();
            let h = (config.d_actual + config.a).max(f64::MIN_POSITIVE);
            let lo = pts.iter().fold(Vec3::repeat(f64::MAX), |acc, p| acc.inf(p)) - Vec3::repeat(h / 2.0);
            let hi = pts.iter().fold(Vec3::repeat(f64::MIN), |acc, p| acc.sup(p));
            SlotGrid {
                origin: [lo.x, lo.y, lo.z],
                edges: [h; 3],
                dims: [0, 1, 2].map(|k| (((hi[k] - lo[k]) / h).floor() as usize + 1).max(1)),
            }
        }
    };
    let zm = config.position(m);
    let sm = grid.slot_of(&zm);
    let mut layers: Vec<LayerCount> = Vec::new();
    for j in 0..config.len() {
        if j == m {
            continue;
        }
        let zj = config.position(j);
        let sj = grid.slot_of(&zj);
        let n = (0..3).map(|k| (sj[k] - sm[k]).unsigned_abs() as usize).max().unwrap_or(0);
        if layers.len() <= n {
            let start = layers.len();
            layers.extend((start..=n).map(|n| LayerCount {
                n,
                count: 0,
                min_distance: f64::INFINITY,
            }));
        }
        let l = &mut layers[n];
        l.count += 1;
        l.min_distance = l.min_distance.min((zj - zm).norm());
    }
    Ok(layers)
}
