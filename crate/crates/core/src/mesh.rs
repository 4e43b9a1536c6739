//! Closed triangulated surfaces: generators, validation and the ASCII format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshMeta {
    pub shape: String,
    pub level: u32,
    /// Largest vertex-to-vertex distance.
    pub diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    meta: MeshMeta,
}

impl SurfaceMesh {
    /// Validates connectivity, winding and orientation.
    ///
    /// Every edge must be shared by exactly two triangles traversing it in
    /// opposite directions, and the enclosed signed volume must be positive
    /// (outward normals).
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, shape: &str, level: u32) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        let nv = vertices.len();
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            if (b - a).cross(&(c - a)).norm() == 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} has zero area")));
            }
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                let key = (u.min(v), u.max(v));
                *edges.entry(key).or_insert(0) += if u < v { 1 } else { -1 };
            }
        }
        // each edge must appear once in each direction
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (u, v) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        for (e, &n) in &counts {
            if n != 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({}, {}) is shared by {n} triangles, expected 2",
                    e.0, e.1
                )));
            }
            if edges[e] != 0 {
                return Err(Error::InvalidMesh(format!(
                    "inconsistent winding across edge ({}, {})",
                    e.0, e.1
                )));
            }
        }
        let mut mesh = SurfaceMesh {
            vertices,
            triangles,
            meta: MeshMeta {
                shape: shape.to_string(),
                level,
                diameter: 0.0,
            },
        };
        if mesh.signed_volume() <= 0.0 {
            return Err(Error::InvalidMesh(
                "triangles are wound inward (negative enclosed volume)".into(),
            ));
        }
        mesh.meta.diameter = mesh.compute_diameter();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn meta(&self) -> &MeshMeta {
        &self.meta
    }
    pub fn diameter(&self) -> f64 {
        self.meta.diameter
    }
    pub fn len(&self) -> usize {
        self.triangles.len()
    }
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn centroid(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.len()).map(|t| self.area(t)).sum()
    }

    /// Longest edge of triangle `t`.
    pub fn max_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    fn compute_diameter(&self) -> f64 {
        let mut d2 = 0.0f64;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d2 = d2.max((a - b).norm_squared());
            }
        }
        d2.sqrt()
    }

    fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3, shape: String) -> Self {
        let vertices: Vec<Vec3> = self.vertices.iter().map(f).collect();
        let mut out = SurfaceMesh {
            vertices,
            triangles: self.triangles.clone(),
            meta: MeshMeta {
                shape,
                ..self.meta.clone()
            },
        };
        out.meta.diameter = out.compute_diameter();
        out
    }

    /// Applies an orthogonal matrix to every vertex (same connectivity).
    pub fn rotated(&self, r: &Mat3) -> Result<Self> {
        check_orthogonal(r)?;
        if r.determinant() < 0.0 {
            return Err(Error::InvalidInput(
                "reflections flip the mesh orientation; use a proper rotation".into(),
            ));
        }
        Ok(self.map_vertices(|v| r * v, self.meta.shape.clone()))
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {s}")));
        }
        Ok(self.map_vertices(|v| v * s, self.meta.shape.clone()))
    }

    pub fn translated(&self, h: &Vec3) -> Self {
        self.map_vertices(|v| v + h, self.meta.shape.clone())
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_ascii(text: &str, shape: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty mesh file".into()))?;
        let counts: Vec<usize> = parse_fields(header, 2, "header")?;
        let (nv, nt) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for k in 0..nv {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing vertex line {k}")))?;
            let c: Vec<f64> = parse_fields(l, 3, "vertex")?;
            vertices.push(Vec3::new(c[0], c[1], c[2]));
        }
        let mut triangles = Vec::with_capacity(nt);
        for k in 0..nt {
            let l = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing triangle line {k}")))?;
            let c: Vec<usize> = parse_fields(l, 3, "triangle")?;
            triangles.push([c[0], c[1], c[2]]);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing data after the last triangle".into()));
        }
        SurfaceMesh::new(vertices, triangles, shape, 0)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let shape = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mesh".into());
        Self::from_ascii(&text, &shape)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize, what: &str) -> Result<Vec<T>> {
    let out: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse(format!("malformed {what} line: {line:?}")))?;
    if out.len() != n {
        return Err(Error::Parse(format!(
            "{what} line needs {n} fields, got {}: {line:?}",
            out.len()
        )));
    }
    Ok(out)
}

/// Rejects matrices with `||R^T R - I||_max > 1e-12`.
pub fn check_orthogonal(r: &Mat3) -> Result<()> {
    let dev = (r.transpose() * r - Mat3::identity()).abs().max();
    if dev > 1e-12 || !dev.is_finite() {
        return Err(Error::InvalidInput(format!(
            "matrix is not orthogonal (||R^T R - I|| = {dev:e})"
        )));
    }
    Ok(())
}

/// Subdivided icosahedron projected onto the sphere of the given radius;
/// level `L` has `20 * 4^L` triangles.
pub fn icosphere(level: u32, radius: f64) -> Result<SurfaceMesh> {
    let (v, t) = unit_icosphere(level);
    let v = v.into_iter().map(|p| p * radius).collect();
    SurfaceMesh::new(v, t, "sphere", level)
}

/// Icosphere with semi-axes `axes`.
pub fn ellipsoid(level: u32, axes: [f64; 3]) -> Result<SurfaceMesh> {
    if axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidInput(format!("semi-axes must be positive, got {axes:?}")));
    }
    let (v, t) = unit_icosphere(level);
    let v = v
        .into_iter()
        .map(|p| Vec3::new(p.x * axes[0], p.y * axes[1], p.z * axes[2]))
        .collect();
    SurfaceMesh::new(v, t, "ellipsoid", level)
}

fn unit_icosphere(level: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::from(*p).normalize())
    .collect();
    let mut t: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, v: &mut Vec<Vec3>| -> usize {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                v.push(((v[a] + v[b]) * 0.5).normalize());
                v.len() - 1
            })
        };
        let mut next = Vec::with_capacity(t.len() * 4);
        for &[a, b, c] in &t {
            let ab = mid(a, b, &mut v);
            let bc = mid(b, c, &mut v);
            let ca = mid(c, a, &mut v);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        t = next;
    }
    (v, t)
}

/// Axis-aligned cube `[-edge/2, edge/2]^3`; each face is a `2^L x 2^L` grid of
/// squares split along one diagonal, `12 * 4^L` triangles in total.
pub fn cube(level: u32, edge: f64) -> Result<SurfaceMesh> {
    if !(edge > 0.0 && edge.is_finite()) {
        return Err(Error::InvalidInput(format!("edge must be positive, got {edge}")));
    }
    let n = 1usize << level;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    // integer lattice coordinates in [0, n]
    let mut vid = |p: [i64; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            let s = edge / n as f64;
            vertices.push(Vec3::new(
                p[0] as f64 * s - edge / 2.0,
                p[1] as f64 * s - edge / 2.0,
                p[2] as f64 * s - edge / 2.0,
            ));
            vertices.len() - 1
        })
    };
    let ni = n as i64;
    for axis in 0..3 {
        for side in [0, ni] {
            let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..ni {
                for j in 0..ni {
                    let corner = |di: i64, dj: i64| {
                        let mut p = [0i64; 3];
                        p[axis] = side;
                        p[u] = i + di;
                        p[w] = j + dj;
                        p
                    };
                    let q = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)].map(|p| vid(p, &mut vertices));
                    // (u, w, axis) is right-handed, so counter-clockwise in
                    // (u, w) faces +axis
                    if side == ni {
                        triangles.push([q[0], q[1], q[2]]);
                        triangles.push([q[0], q[2], q[3]]);
                    } else {
                        triangles.push([q[0], q[2], q[1]]);
                        triangles.push([q[0], q[3], q[2]]);
                    }
                }
            }
        }
    }
    SurfaceMesh::new(vertices, triangles, "cube", level)
}

/// Builtin shape by name: `sphere` (unit radius), `cube` (unit edge) or
/// `ellipsoid` with the given semi-axes.
pub fn builtin(shape: &str, level: u32, axes: Option<[f64; 3]>) -> Result<SurfaceMesh> {
    match shape {
        "sphere" => icosphere(level, 1.0),
        "cube" => cube(level, 1.0),
        "ellipsoid" => ellipsoid(level, axes.unwrap_or([2.0, 1.0, 1.0])),
        other => Err(Error::InvalidInput(format!(
            "unknown builtin shape {other:?} (expected sphere, cube or ellipsoid)"
        ))),
    }
}
