//! Acoustic and elastic capacitances of a reference body by collocation BEM
//! on the first-kind single-layer equation.
//!
//! Densities are piecewise constant and collocated at triangle centroids;
//! the unknown on each triangle is its total charge `phi_j = |T_j| sigma_j`.
//! Distant pairs use the one-point rule `G(c_i - c_j)`, nearby pairs the
//! panel average `P_ij = |T_j|^{-1} int_{T_j} G(c_i - y) dy`, computed by
//! adaptive quadrature (singular self terms exactly or by a Duffy-type
//! split). Near blocks are symmetrized, so the discrete capacitance
//! `E^T S^{-1} E` inherits the symmetry of the continuous one; the discarded
//! antisymmetric part gives a first-order estimate of the quadrature error.

use std::f64::consts::PI;
use std::sync::OnceLock;

use faer::Mat;
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdSolver;
use crate::medium::validate_lame;
use crate::mesh::{check_orthogonal, SurfaceMesh};
use crate::quadrature::{adaptive_integrate, duffy_integrate, gauss_legendre, inv_r_in_plane};
use crate::{Mat3, Vec3};

/// Pairs closer than this many panel sizes get the averaged near-field entry.
const NEAR_FACTOR: f64 = 3.0;
/// Subdivide a source panel until it is this many diameters from the target.
const ADAPT_RATIO: f64 = 4.0;
const ADAPT_DEPTH: u32 = 10;
const DUFFY_POINTS: usize = 40;
/// Condition estimates beyond this are reported as failures.
const MAX_CONDITION: f64 = 1e14;

/// Per-unit-diameter capacitances of one body together with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceMatrix {
    pub shape: String,
    pub level: u32,
    pub lambda: f64,
    pub mu: f64,
    /// `C^a / diam`.
    pub c_acoustic: f64,
    /// `C / diam`, symmetrized.
    pub c_elastic: [[f64; 3]; 3],
    /// First-order size of the near-field quadrature asymmetry, relative to `||C||`.
    pub err_estimate: f64,
    /// `||C - C^T|| / ||C||` before symmetrization.
    #[serde(default)]
    pub asymmetry: f64,
    /// 1-norm condition estimate of the elastic collocation matrix.
    #[serde(default)]
    pub condition: f64,
    #[serde(default = "one")]
    pub diameter: f64,
    #[serde(default)]
    pub n_triangles: usize,
}

fn one() -> f64 {
    1.0
}

impl CapacitanceMatrix {
    /// Capacitances given directly per unit diameter (analytic models or
    /// synthetic test data).
    pub fn from_parts(c_elastic: Mat3, c_acoustic: f64, lambda: f64, mu: f64, shape: &str) -> Result<Self> {
        validate_lame(lambda, mu)?;
        if (c_elastic - c_elastic.transpose()).abs().max() > 1e-12 * c_elastic.abs().max() {
            return Err(Error::InvalidInput("capacitance matrix must be symmetric".into()));
        }
        let out = Self {
            shape: shape.into(),
            level: 0,
            lambda,
            mu,
            c_acoustic,
            c_elastic: mat_to_rows(&c_elastic),
            err_estimate: 0.0,
            asymmetry: 0.0,
            condition: 0.0,
            diameter: 1.0,
            n_triangles: 0,
        };
        if out.eigenvalues()[0] <= 0.0 {
            return Err(Error::InvalidInput("capacitance matrix must be positive definite".into()));
        }
        Ok(out)
    }

    /// `C / diam` as a matrix.
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_fn(|i, j| self.c_elastic[i][j])
    }

    /// Capacitance of the body scaled to diameter `a`.
    pub fn scaled(&self, a: f64) -> Mat3 {
        self.matrix() * a
    }

    /// Eigenvalues of `C / diam` in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut e: Vec<f64> = SymmetricEigen::new(self.matrix()).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        [e[0], e[1], e[2]]
    }

    /// `[mu C^a, (lambda + 2 mu) C^a]` per unit diameter.
    pub fn bracket(&self) -> (f64, f64) {
        (self.mu * self.c_acoustic, (self.lambda + 2.0 * self.mu) * self.c_acoustic)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn mat_to_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

/// `R C R^T` for orthogonal `R`.
pub fn conjugate_capacitance(c: &CapacitanceMatrix, r: &Mat3) -> Result<CapacitanceMatrix> {
    check_orthogonal(r)?;
    let m = r * c.matrix() * r.transpose();
    Ok(CapacitanceMatrix {
        c_elastic: mat_to_rows(&m),
        ..c.clone()
    })
}

#[derive(Debug, Clone)]
struct NearEntry {
    j: usize,
    /// `|T_j|^{-1} int 1/r`
    j0: f64,
    /// `|T_j|^{-1} int d d^T / r^3`, entries xx, yy, zz, xy, xz, yz.
    j2: [f64; 6],
}

/// Geometric near-field integrals of a mesh, shared by every Lamé pair.
pub struct BemGeometry {
    shape: String,
    level: u32,
    diameter: f64,
    centroids: Vec<Vec3>,
    near: Vec<Vec<NearEntry>>,
    acoustic: OnceLock<f64>,
}

fn sym6(v: &[f64; 6]) -> Mat3 {
    Mat3::new(v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2])
}

fn kernel_parts(d: &Vec3) -> [f64; 7] {
    let r = d.norm();
    let r3 = r * r * r;
    [
        1.0 / r,
        d.x * d.x / r3,
        d.y * d.y / r3,
        d.z * d.z / r3,
        d.x * d.y / r3,
        d.x * d.z / r3,
        d.y * d.z / r3,
    ]
}

impl BemGeometry {
    pub fn new(mesh: &SurfaceMesh) -> Self {
        let n = mesh.len();
        let centroids: Vec<Vec3> = (0..n).map(|t| mesh.centroid(t)).collect();
        let sizes: Vec<f64> = (0..n).map(|t| mesh.max_edge(t)).collect();
        let areas: Vec<f64> = (0..n).map(|t| mesh.area(t)).collect();
        let gl = gauss_legendre(DUFFY_POINTS);
        let near: Vec<Vec<NearEntry>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = centroids[i];
                let mut row = Vec::new();
                for j in 0..n {
                    let dist = (x - centroids[j]).norm();
                    if dist >= NEAR_FACTOR * sizes[i].max(sizes[j]) {
                        continue;
                    }
                    let c = mesh.corners(j);
                    let v = if i == j {
                        let mut v = duffy_integrate(&c, &x, &kernel_parts, &gl);
                        v[0] = inv_r_in_plane(&c, &x);
                        v
                    } else {
                        adaptive_integrate(&c, &x, &kernel_parts, ADAPT_RATIO, ADAPT_DEPTH)
                    };
                    let s = 1.0 / areas[j];
                    row.push(NearEntry {
                        j,
                        j0: v[0] * s,
                        j2: [v[1] * s, v[2] * s, v[3] * s, v[4] * s, v[5] * s, v[6] * s],
                    });
                }
                row
            })
            .collect();
        BemGeometry {
            shape: mesh.meta().shape.clone(),
            level: mesh.meta().level,
            diameter: mesh.diameter(),
            centroids,
            near,
            acoustic: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    fn lookup(&self, i: usize, j: usize) -> &NearEntry {
        let row = &self.near[i];
        let k = row.binary_search_by_key(&j, |e| e.j).expect("near lists are symmetric");
        &row[k]
    }

    /// Number of near-field (averaged) entries, including self terms.
    pub fn near_count(&self) -> usize {
        self.near.iter().map(Vec::len).sum()
    }

    fn acoustic_matrix(&self) -> Mat<f64> {
        let n = self.len();
        let k = 1.0 / (4.0 * PI);
        let mut s = Mat::<f64>::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                k / (self.centroids[i] - self.centroids[j]).norm()
            }
        });
        for (i, row) in self.near.iter().enumerate() {
            for e in row {
                let back = self.lookup(e.j, i);
                s[(i, e.j)] = 0.5 * k * (e.j0 + back.j0);
            }
        }
        s
    }

    /// `C^a = int sigma` with `int sigma(s) / (4 pi |t - s|) ds = 1`.
    pub fn acoustic(&self) -> Result<f64> {
        if let Some(c) = self.acoustic.get() {
            return Ok(*c);
        }
        let n = self.len();
        let f = SpdSolver::new(self.acoustic_matrix()).map_err(|e| context(e, "acoustic collocation"))?;
        let x = f.solve(Mat::<f64>::from_fn(n, 1, |_, _| 1.0).as_ref())?;
        let c: f64 = (0..n).map(|i| x[(i, 0)]).sum();
        Ok(*self.acoustic.get_or_init(|| c))
    }

    fn elastic_matrix(&self, alpha: f64, beta: f64) -> Mat<f64> {
        let n = self.len();
        let mut s = Mat::<f64>::zeros(3 * n, 3 * n);
        for j in 0..n {
            for i in j + 1..n {
                let d = self.centroids[i] - self.centroids[j];
                let r = d.norm();
                let a = alpha / r;
                let b = beta / (r * r * r);
                for p in 0..3 {
                    for q in 0..3 {
                        let mut v = b * d[p] * d[q];
                        if p == q {
                            v += a;
                        }
                        s[(3 * i + p, 3 * j + q)] = v;
                        s[(3 * j + q, 3 * i + p)] = v;
                    }
                }
            }
        }
        for (i, row) in self.near.iter().enumerate() {
            for e in row {
                let back = self.lookup(e.j, i);
                let m = near_block(e, alpha, beta) * 0.5 + near_block(back, alpha, beta) * 0.5;
                for p in 0..3 {
                    for q in 0..3 {
                        s[(3 * i + p, 3 * e.j + q)] = m[(p, q)];
                    }
                }
            }
        }
        s
    }

    /// Elastic capacitance with the Kelvin kernel of `(lambda, mu)`.
    pub fn elastic(&self, lambda: f64, mu: f64) -> Result<CapacitanceMatrix> {
        validate_lame(lambda, mu)?;
        let n = self.len();
        let inv_cp2 = 1.0 / (lambda + 2.0 * mu);
        let alpha = (1.0 / mu + inv_cp2) / (8.0 * PI);
        let beta = (1.0 / mu - inv_cp2) / (8.0 * PI);

        let f = SpdSolver::new(self.elastic_matrix(alpha, beta)).map_err(|e| context(e, "elastic collocation"))?;
        let condition = f.condition_estimate();
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned {
                condition,
                context: format!("elastic collocation on {} ({} triangles)", self.shape, n),
            });
        }
        let w = f.solve(Mat::<f64>::from_fn(3 * n, 3, |r, c| if r % 3 == c { 1.0 } else { 0.0 }).as_ref())?;
        drop(f);

        let mut c = Mat3::zeros();
        for i in 0..n {
            for p in 0..3 {
                for q in 0..3 {
                    c[(p, q)] += w[(3 * i + p, q)];
                }
            }
        }
        let cnorm = c.norm();
        let asym = (c - c.transpose()).norm() / cnorm;

        // W^T Delta W with Delta_ij = (P_ij - P_ji) / 2 over near pairs
        let mut dw = Mat3::zeros();
        let wblock = |i: usize| Mat3::from_fn(|p, q| w[(3 * i + p, q)]);
        for (i, row) in self.near.iter().enumerate() {
            for e in row {
                if e.j == i {
                    continue;
                }
                let back = self.lookup(e.j, i);
                let delta = (near_block(e, alpha, beta) - near_block(back, alpha, beta)) * 0.5;
                dw += wblock(i).transpose() * delta * wblock(e.j);
            }
        }
        let err_estimate = dw.norm() / cnorm;
        // rounding floor: the solve itself cannot be more symmetric than this
        let floor = f64::EPSILON * condition;
        if asym > 10.0 * err_estimate.max(floor) {
            return Err(Error::Asymmetric {
                asymmetry: asym,
                estimate: err_estimate,
            });
        }
        let c_sym = (c + c.transpose()) * 0.5;
        let c_acoustic = self.acoustic()?;
        Ok(CapacitanceMatrix {
            shape: self.shape.clone(),
            level: self.level,
            lambda,
            mu,
            c_acoustic: c_acoustic / self.diameter,
            c_elastic: mat_to_rows(&(c_sym / self.diameter)),
            err_estimate,
            asymmetry: asym,
            condition,
            diameter: self.diameter,
            n_triangles: n,
        })
    }
}

fn near_block(e: &NearEntry, alpha: f64, beta: f64) -> Mat3 {
    Mat3::identity() * (alpha * e.j0) + sym6(&e.j2) * beta
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Singular(m) => Error::Singular(format!("{what}: {m}")),
        other => other,
    }
}

/// `int sigma ds` with `int sigma(s) / (4 pi |t - s|) ds = 1` on the mesh.
pub fn acoustic_capacitance(mesh: &SurfaceMesh) -> Result<f64> {
    BemGeometry::new(mesh).acoustic()
}

/// Elastic capacitance `C = int sigma ds`, `int Kelvin(t - s) sigma(s) ds = I`,
/// normalized per unit diameter, with the acoustic value of the same mesh.
pub fn elastic_capacitance(mesh: &SurfaceMesh, lambda: f64, mu: f64) -> Result<CapacitanceMatrix> {
    BemGeometry::new(mesh).elastic(lambda, mu)
}

/// Rigid-sphere translation capacitance `24 pi mu (1 - nu) R / (5 - 6 nu)`.
pub fn sphere_capacitance(lambda: f64, mu: f64, radius: f64) -> f64 {
    let nu = lambda / (2.0 * (lambda + mu));
    24.0 * PI * mu * (1.0 - nu) * radius / (5.0 - 6.0 * nu)
}
