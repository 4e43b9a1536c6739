//! Equivalent-medium computations: effective density algebra and the
//! Lippmann–Schwinger equation
//!
//! ```text
//! Y(z) + int_Omega G(z, y) q(y) Y(y) dy = -U^i(z)
//! ```
//!
//! on a uniform voxel grid. Off-diagonal voxel pairs use the midpoint rule;
//! the singular self term integrates the Kelvin part exactly over the ball of
//! equal volume and adds the (smooth) dynamic remainder at the centre. The
//! discrete operator is block Toeplitz, so products with it go through
//! zero-padded 3D FFTs.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::capacitance::CapacitanceMatrix;
use crate::distribution::{CubePartition, DensityFunction, DomainBox};
use crate::error::{Error, Result};
use crate::foldy::{check_directions, project_far_field, real_times, FarFieldPattern};
use crate::io::{fmt17, write_atomic};
use crate::kernel::{dynamic_remainder_at_origin, kelvin_ball_integral, Kupradze};
use crate::linalg::{gmres, DenseFactor, GmresOptions};
use crate::medium::{ElasticMedium, IncidentPlaneWave};
use crate::{CMat3, CVec3, Complex64, Mat3, Vec3};

/// `rho I - (K + 1) C0 / omega^2`.
pub fn effective_density(rho: f64, k_plus_1: f64, c0: &Mat3, omega: f64) -> Result<Mat3> {
    if !(omega > 0.0) {
        return Err(Error::InvalidInput(format!(
            "effective density needs omega > 0, got {omega}"
        )));
    }
    Ok(Mat3::identity() * rho - c0 * (k_plus_1 / (omega * omega)))
}

/// Pointwise [`effective_density`] over matching samples of `rho` and `K + 1`.
pub fn effective_density_field(rho: &[f64], k_plus_1: &[f64], c0: &Mat3, omega: f64) -> Result<Vec<Mat3>> {
    if rho.len() != k_plus_1.len() {
        return Err(Error::GridMismatch(format!(
            "{} density samples for {} count samples",
            rho.len(),
            k_plus_1.len()
        )));
    }
    rho.iter().zip(k_plus_1).map(|(r, k)| effective_density(*r, *k, c0, omega)).collect()
}

/// `n^3` voxels over a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub domain: DomainBox,
    pub n: usize,
}

impl VoxelGrid {
    pub fn new(domain: DomainBox, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput(format!("grid resolution must be at least 4, got {n}")));
        }
        if domain.edges().iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidInput("domain box has an empty side".into()));
        }
        Ok(Self { domain, n })
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> Vec3 {
        Vec3::from(self.domain.edges()) / self.n as f64
    }

    pub fn voxel_volume(&self) -> f64 {
        let h = self.spacing();
        h.x * h.y * h.z
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn center(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        let h = self.spacing();
        Vec3::new(
            self.domain.min[0] + (i as f64 + 0.5) * h.x,
            self.domain.min[1] + (j as f64 + 0.5) * h.y,
            self.domain.min[2] + (k as f64 + 0.5) * h.z,
        )
    }

    pub fn centers(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }
}

/// Per-voxel real 3x3 potential `q` and background density `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    pub grid: VoxelGrid,
    pub q: Vec<Mat3>,
    pub rho: Vec<f64>,
}

impl PotentialField {
    pub fn zero(grid: VoxelGrid) -> Self {
        Self {
            q: vec![Mat3::zeros(); grid.len()],
            rho: vec![1.0; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: VoxelGrid, f: impl Fn(&Vec3) -> Mat3) -> Result<Self> {
        let q: Vec<Mat3> = grid.centers().iter().map(f).collect();
        if q.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("potential must be finite".into()));
        }
        Ok(Self {
            q,
            rho: vec![1.0; grid.len()],
            grid,
        })
    }

    /// `(K(y) + 1) C0`, the limit of the perforation.
    pub fn from_density(grid: VoxelGrid, k: &DensityFunction, c0: &Mat3) -> Result<Self> {
        Self::from_fn(grid, |y| c0 * (k.eval(y) + 1.0))
    }

    /// Staircase potential of a partition: `(K(z_m) + 1) C0` on every cell
    /// `Omega_m` (the cell of volume `a [K + 1] / (K + 1)` holding
    /// `[K(z_m) + 1]` bodies of capacitance `a C0`), zero elsewhere; sampled
    /// at voxel centres.
    pub fn from_partition(grid: VoxelGrid, partition: &CubePartition, c0: &Mat3) -> Result<Self> {
        let pg = &partition.grid;
        let cell_of: std::collections::HashMap<[usize; 3], usize> =
            partition.cells.iter().enumerate().map(|(i, c)| (c.slot, i)).collect();
        Self::from_fn(grid, |y| {
            let s = pg.slot_of(y);
            let slot = [s[0] as usize, s[1] as usize, s[2] as usize];
            match cell_of.get(&slot).map(|&i| &partition.cells[i]) {
                Some(c) if (0..3).all(|d| (y[d] - c.center[d]).abs() <= 0.5 * c.edges[d]) => {
                    c0 * (partition.k.eval(&Vec3::from(c.center)) + 1.0)
                }
                _ => Mat3::zeros(),
            }
        })
    }

    /// Folds a variable background density into the potential:
    /// `q <- q + omega^2 (1 - rho) I`.
    pub fn with_background(mut self, omega: f64, rho: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let w2 = omega * omega;
        for (i, y) in self.grid.centers().iter().enumerate() {
            let r = rho(y);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput(format!("background density must be positive, got {r}")));
            }
            self.q[i] += Mat3::identity() * (w2 * (1.0 - r));
            self.rho[i] = r;
        }
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.q.iter().all(|m| m.iter().all(|v| *v == 0.0))
    }

    pub fn max_norm(&self) -> f64 {
        self.q.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }
}

/// Capacitance per unit diameter as the `C0` of a limit potential.
pub fn limit_capacitance(c: &CapacitanceMatrix) -> Mat3 {
    c.matrix()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeField {
    pub grid: VoxelGrid,
    pub values: Vec<CVec3>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

impl VolumeField {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Relative max-norm distance to another field on the same grid.
    pub fn relative_difference(&self, other: &VolumeField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let d = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        Ok(d / self.max_norm().max(f64::MIN_POSITIVE))
    }

    pub const CSV_HEADER: &'static str = "ix,iy,iz,Re(u1),Re(u2),Re(u3),Im(u1),Im(u2),Im(u3)";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (idx, v) in self.values.iter().enumerate() {
            let [i, j, k] = self.grid.coords(idx);
            let mut row = vec![i.to_string(), j.to_string(), k.to_string()];
            row.extend(v.iter().map(|z| fmt17(z.re)));
            row.extend(v.iter().map(|z| fmt17(z.im)));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LsOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 400 }
    }
}

/// Self-voxel integral `int_voxel G(x_i - y) dy`, a multiple of the identity.
fn self_term(medium: &ElasticMedium, grid: &VoxelGrid) -> Complex64 {
    let v = grid.voxel_volume();
    let radius = (3.0 * v / (4.0 * PI)).cbrt();
    Complex64::new(kelvin_ball_integral(medium, radius), 0.0) + dynamic_remainder_at_origin(medium) * v
}

/// Discrete kernel `V G(d h)` (off the origin) and the self term, as the
/// six components `xx, yy, zz, xy, xz, yz`.
fn kernel_block(kernel: &Kupradze, d: &Vec3, v: f64, diag: Complex64) -> [Complex64; 6] {
    if d.norm_squared() == 0.0 {
        return [diag, diag, diag, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    }
    let g = kernel.matrix_unchecked(d) * Complex64::new(v, 0.0);
    [g[(0, 0)], g[(1, 1)], g[(2, 2)], g[(0, 1)], g[(0, 2)], g[(1, 2)]]
}

struct Fft3 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.m;
        let f = if inverse { &self.inv } else { &self.fwd };
        // innermost axis: contiguous lines
        data.par_chunks_mut(m * m).for_each(|plane| f.process(plane));
        // middle axis: columns within each plane
        data.par_chunks_mut(m * m).for_each(|plane| {
            let mut line = vec![Complex64::new(0.0, 0.0); m * m];
            for j in 0..m {
                for k in 0..m {
                    line[k * m + j] = plane[j * m + k];
                }
            }
            f.process(&mut line);
            for j in 0..m {
                for k in 0..m {
                    plane[j * m + k] = line[k * m + j];
                }
            }
        });
        // outer axis
        let mut line = vec![Complex64::new(0.0, 0.0); m * m * m];
        for i in 0..m {
            for jk in 0..m * m {
                line[jk * m + i] = data[i * m * m + jk];
            }
        }
        f.process(&mut line);
        for i in 0..m {
            for jk in 0..m * m {
                data[i * m * m + jk] = line[jk * m + i];
            }
        }
    }
}

/// The discrete operator `Y -> Y + K (q Y)`.
pub struct LsOperator {
    grid: VoxelGrid,
    q: Vec<Mat3>,
    fft: Fft3,
    /// Transformed kernel components on the padded grid.
    khat: [Vec<Complex64>; 6],
    diag: Complex64,
}

impl LsOperator {
    pub fn new(medium: &ElasticMedium, potential: &PotentialField) -> Self {
        let grid = potential.grid;
        let n = grid.n;
        let m = 2 * n;
        let h = grid.spacing();
        let v = grid.voxel_volume();
        let diag = self_term(medium, &grid);
        let kernel = Kupradze::new(medium);
        let fft = Fft3::new(m);
        let shift = |i: usize| -> f64 {
            if i < n {
                i as f64
            } else {
                i as f64 - m as f64
            }
        };
        let mut comps: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); m * m * m]);
        let blocks: Vec<[Complex64; 6]> = (0..m * m * m)
            .into_par_iter()
            .map(|idx| {
                let (i, j, k) = (idx / (m * m), (idx / m) % m, idx % m);
                if i == n || j == n || k == n {
                    return [Complex64::new(0.0, 0.0); 6];
                }
                let d = Vec3::new(shift(i) * h.x, shift(j) * h.y, shift(k) * h.z);
                kernel_block(&kernel, &d, v, diag)
            })
            .collect();
        for (idx, b) in blocks.iter().enumerate() {
            for c in 0..6 {
                comps[c][idx] = b[c];
            }
        }
        for c in comps.iter_mut() {
            fft.run(c, false);
        }
        Self {
            grid,
            q: potential.q.clone(),
            fft,
            khat: comps,
            diag,
        }
    }

    pub fn dim(&self) -> usize {
        3 * self.grid.len()
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Self-voxel coefficient (times the identity).
    pub fn self_coefficient(&self) -> Complex64 {
        self.diag
    }

    /// `out = K w` for per-voxel source densities `w` (already multiplied by `q`).
    fn convolve(&self, w: &[CVec3]) -> Vec<CVec3> {
        let n = self.grid.n;
        let m = 2 * n;
        let mut pads: [Vec<Complex64>; 3] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); m * m * m]);
        for (idx, wv) in w.iter().enumerate() {
            let [i, j, k] = self.grid.coords(idx);
            let p = (i * m + j) * m + k;
            for c in 0..3 {
                pads[c][p] = wv[c];
            }
        }
        for p in pads.iter_mut() {
            self.fft.run(p, false);
        }
        let [kxx, kyy, kzz, kxy, kxz, kyz] = &self.khat;
        {
            let [px, py, pz] = &mut pads;
            px.par_iter_mut()
                .zip(py.par_iter_mut())
                .zip(pz.par_iter_mut())
                .enumerate()
                .for_each(|(i, ((x, y), z))| {
                    let (a, b, c) = (*x, *y, *z);
                    *x = kxx[i] * a + kxy[i] * b + kxz[i] * c;
                    *y = kxy[i] * a + kyy[i] * b + kyz[i] * c;
                    *z = kxz[i] * a + kyz[i] * b + kzz[i] * c;
                });
        }
        for p in pads.iter_mut() {
            self.fft.run(p, true);
        }
        let scale = 1.0 / (m * m * m) as f64;
        (0..w.len())
            .map(|idx| {
                let [i, j, k] = self.grid.coords(idx);
                let p = (i * m + j) * m + k;
                CVec3::new(pads[0][p], pads[1][p], pads[2][p]) * Complex64::new(scale, 0.0)
            })
            .collect()
    }

    pub fn apply(&self, y: &[Complex64], out: &mut [Complex64]) {
        let w: Vec<CVec3> = self
            .q
            .iter()
            .enumerate()
            .map(|(i, q)| real_times(q, &CVec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2])))
            .collect();
        let kw = self.convolve(&w);
        for (i, v) in kw.iter().enumerate() {
            for c in 0..3 {
                out[3 * i + c] = y[3 * i + c] + v[c];
            }
        }
    }
}


pub(crate) fn incident_rhs(medium: &ElasticMedium, grid: &VoxelGrid, wave: &IncidentPlaneWave) -> Vec<Complex64> {
    let mut b = Vec::with_capacity(3 * grid.len());
    for x in grid.centers() {
        b.extend(wave.eval(medium, &x).iter().map(|z| -z));
    }
    b
}

fn to_field(grid: VoxelGrid, x: &[Complex64], residual: f64, iterations: usize, history: Vec<f64>) -> VolumeField {
    VolumeField {
        grid,
        values: x.chunks(3).map(|c| CVec3::new(c[0], c[1], c[2])).collect(),
        residual,
        iterations,
        history,
    }
}

/// Solves the discretized equation by GMRES with FFT products.
pub fn solve_lippmann_schwinger(
    medium: &ElasticMedium,
    potential: &PotentialField,
    wave: &IncidentPlaneWave,
) -> Result<VolumeField> {
    solve_lippmann_schwinger_with(medium, potential, wave, &LsOptions::default(), None)
}

pub fn solve_lippmann_schwinger_with(
    medium: &ElasticMedium,
    potential: &PotentialField,
    wave: &IncidentPlaneWave,
    opts: &LsOptions,
    start: Option<&VolumeField>,
) -> Result<VolumeField> {
    let grid = potential.grid;
    if potential.q.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} potential values for {} voxels",
            potential.q.len(),
            grid.len()
        )));
    }
    let b = incident_rhs(medium, &grid, wave);
    if potential.is_zero() {
        return Ok(to_field(grid, &b, 0.0, 0, vec![0.0]));
    }
    let op = LsOperator::new(medium, potential);
    let x0: Option<Vec<Complex64>> = match start {
        Some(f) if f.grid == grid => Some(f.values.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect()),
        Some(_) => return Err(Error::GridMismatch("starting field lives on another grid".into())),
        None => None,
    };
    let out = gmres(
        |x, o| op.apply(x, o),
        &b,
        x0.as_deref(),
        GmresOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
    )?;
    Ok(to_field(grid, &out.x, out.residual, out.iterations, out.history))
}

/// Dense assembly and LU solve of the same discrete system (small grids only).
pub fn solve_lippmann_schwinger_dense(
    medium: &ElasticMedium,
    potential: &PotentialField,
    wave: &IncidentPlaneWave,
) -> Result<VolumeField> {
    let grid = potential.grid;
    if grid.n > 12 {
        return Err(Error::InvalidInput(format!(
            "dense assembly is limited to n <= 12, got {}",
            grid.n
        )));
    }
    let nv = grid.len();
    let centers = grid.centers();
    let v = grid.voxel_volume();
    let diag = self_term(medium, &grid);
    let kernel = Kupradze::new(medium);
    let mut a = Mat::<Complex64>::zeros(3 * nv, 3 * nv);
    for i in 0..nv {
        for j in 0..nv {
            let g: CMat3 = if i == j {
                CMat3::identity() * diag
            } else {
                kernel.matrix_unchecked(&(centers[i] - centers[j])) * Complex64::new(v, 0.0)
            };
            let q = &potential.q[j];
            for r in 0..3 {
                for s in 0..3 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in 0..3 {
                        acc += g[(r, t)] * q[(t, s)];
                    }
                    a[(3 * i + r, 3 * j + s)] = acc + if i == j && r == s { 1.0 } else { 0.0 };
                }
            }
        }
    }
    let b = incident_rhs(medium, &grid, wave);
    let f = DenseFactor::lu(a)?;
    let mut rhs = Mat::<Complex64>::from_fn(3 * nv, 1, |i, _| b[i]);
    f.solve_in_place(rhs.as_mut());
    let x: Vec<Complex64> = (0..3 * nv).map(|i| rhs[(i, 0)]).collect();
    Ok(to_field(grid, &x, 0.0, 0, Vec::new()))
}

/// `Y_born = -U^i + K (q U^i)`, one fixed-point step from `-U^i`.
pub fn born_approximation(
    medium: &ElasticMedium,
    potential: &PotentialField,
    wave: &IncidentPlaneWave,
) -> VolumeField {
    let grid = potential.grid;
    let b = incident_rhs(medium, &grid, wave);
    let op = LsOperator::new(medium, potential);
    let w: Vec<CVec3> = potential
        .q
        .iter()
        .enumerate()
        .map(|(i, q)| real_times(q, &CVec3::new(-b[3 * i], -b[3 * i + 1], -b[3 * i + 2])))
        .collect();
    let kw = op.convolve(&w);
    let x: Vec<Complex64> = b
        .chunks(3)
        .zip(&kw)
        .flat_map(|(bi, k)| [bi[0] + k[0], bi[1] + k[1], bi[2] + k[2]])
        .collect();
    to_field(grid, &x, f64::NAN, 1, Vec::new())
}

/// Far field `(1 / 4 pi c^2) P int e^{-i kappa x.y} q(y) Y(y) dy` by the
/// midpoint rule on the voxel grid.
pub fn ls_farfield(
    medium: &ElasticMedium,
    potential: &PotentialField,
    field: &VolumeField,
    directions: &[Vec3],
) -> Result<FarFieldPattern> {
    check_directions(directions)?;
    if field.grid != potential.grid || field.values.len() != potential.q.len() {
        return Err(Error::GridMismatch(
            "field and potential live on different grids".into(),
        ));
    }
    let v = potential.grid.voxel_volume();
    let centers = potential.grid.centers();
    let sources: Vec<(Vec3, CVec3)> = centers
        .iter()
        .zip(potential.q.iter().zip(&field.values))
        .filter(|(_, (q, _))| q.iter().any(|x| *x != 0.0))
        .map(|(y, (q, u))| (*y, real_times(q, u) * Complex64::new(v, 0.0)))
        .collect();
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
        wave: None,
    })
}
