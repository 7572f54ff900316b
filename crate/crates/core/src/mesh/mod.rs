//! Triangle meshes, file I/O, point-to-surface distances and symmetry-plane
//! handling.

mod distance;
mod io;
mod symmetry;

pub use distance::{
    closest_point_on_triangle, mesh_to_surface_stats, point_to_surface_distance, ClosestPoint,
    DistanceStats, SurfaceIndex,
};
pub use io::{load_mesh, load_mesh_with_report, save_mesh, save_ply_with_scalar, MeshFormat, PlyEncoding};
pub use symmetry::{fit_symmetry_plane, split_half, HalfFrame, Plane, Side};

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Triangles with an area below this (mm²) are treated as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Triangulated surface with vertex positions in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T: Real> {
    vertices: Vec<Point3<T>>,
    triangles: Vec<[usize; 3]>,
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh, validating indices and coordinates. Degenerate triangles
    /// are dropped; their original indices are returned alongside the mesh.
    pub fn from_parts(
        vertices: Vec<Point3<T>>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<(Self, Vec<usize>)> {
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite_value() && v.y.is_finite_value() && v.z.is_finite_value()) {
                return Err(Error::Domain(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = Vec::new();
        let min_area = T::lit(MIN_TRIANGLE_AREA);
        for (t, tri) in triangles.into_iter().enumerate() {
            for &i in &tri {
                if i >= n {
                    return Err(Error::Index {
                        index: i,
                        len: n,
                        context: format!("triangle {t}"),
                    });
                }
            }
            let a = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if a < min_area || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                dropped.push(t);
            } else {
                kept.push(tri);
            }
        }
        Ok((
            TriMesh {
                vertices,
                triangles: kept,
            },
            dropped,
        ))
    }

    /// Like [`TriMesh::from_parts`] but logs dropped triangles instead of
    /// returning them.
    pub fn new(vertices: Vec<Point3<T>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let (mesh, dropped) = Self::from_parts(vertices, triangles)?;
        if !dropped.is_empty() {
            log::warn!("dropped {} degenerate triangle(s)", dropped.len());
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Corner positions of triangle `t`.
    #[inline]
    pub fn triangle(&self, t: usize) -> [Point3<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Replaces vertex positions, keeping the topology.
    pub fn with_vertices(&self, vertices: Vec<Point3<T>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::dimension(
                self.vertices.len(),
                vertices.len(),
                "vertex count of replacement positions",
            ));
        }
        Ok(TriMesh {
            vertices,
            triangles: self.triangles.clone(),
        })
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Point3<T>) -> Point3<T>) -> Self {
        TriMesh {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Reverses the orientation of every triangle.
    pub fn flipped(&self) -> Self {
        TriMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[u, v]| if u < v { [u, v] } else { [v, u] })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn mean_edge_length(&self) -> T {
        let edges = self.edges();
        if edges.is_empty() {
            return T::zero();
        }
        let sum = edges.iter().fold(T::zero(), |acc, &[u, v]| {
            acc + (self.vertices[u] - self.vertices[v]).norm()
        });
        sum / T::from_count(edges.len())
    }

    /// Vertices lying on an edge that belongs to exactly one triangle.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut count: std::collections::BTreeMap<[usize; 2], usize> = Default::default();
        for &[a, b, c] in &self.triangles {
            for [u, v] in [[a, b], [b, c], [c, a]] {
                let key = if u < v { [u, v] } else { [v, u] };
                *count.entry(key).or_default() += 1;
            }
        }
        let mut flag = vec![false; self.vertices.len()];
        for ([u, v], c) in count {
            if c == 1 {
                flag[u] = true;
                flag[v] = true;
            }
        }
        flag
    }

    /// For every vertex, the triangles using it, in increasing index order.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                adj[v].push(t);
            }
        }
        adj
    }

    pub fn surface_area(&self) -> T {
        (0..self.triangles.len()).fold(T::zero(), |acc, t| {
            let [a, b, c] = self.triangle(t);
            acc + triangle_area(&a, &b, &c)
        })
    }

    /// Area-weighted vertex normals (unit length where defined, zero otherwise).
    pub fn vertex_normals(&self) -> Vec<Vector3<T>> {
        let mut n = vec![Vector3::zeros(); self.vertices.len()];
        for &[a, b, c] in &self.triangles {
            let fnrm = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            n[a] += fnrm;
            n[b] += fnrm;
            n[c] += fnrm;
        }
        for v in &mut n {
            let len = v.norm();
            if len > T::zero() {
                *v /= len;
            }
        }
        n
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Point3<T>, Point3<T>)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| Point3::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()), U::lit(p.z.as_f64())))
                .collect(),
            triangles: self.triangles.clone(),
        }
    }
}

#[inline]
pub(crate) fn triangle_area<T: Real>(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> T {
    (b - a).cross(&(c - a)).norm() * T::lit(0.5)
}
