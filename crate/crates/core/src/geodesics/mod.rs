//! Geodesic distance fields and paths on triangle meshes, and iterative
//! midpoint densification of landmark templates.

mod densify;
mod fmm;
mod path;

pub use densify::{densify, DensifyParams, DensifyReport};
pub use fmm::{fast_marching_field, fast_marching_from_point, DistanceField};
pub use path::{geodesic_midpoint, geodesic_path, GeodesicPath, SurfacePoint};

use std::collections::HashMap;

use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Adjacency tables shared by the marching and tracing code.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    pub vertex_triangles: Vec<Vec<usize>>,
    pub edge_triangles: HashMap<(usize, usize), Vec<usize>>,
    pub neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new<T: Real>(mesh: &TriMesh<T>) -> Self {
        let vertex_triangles = mesh.vertex_triangles();
        let mut edge_triangles: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut neighbors = vec![Vec::new(); mesh.num_vertices()];
        for (t, &[a, b, c]) in mesh.triangles().iter().enumerate() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                edge_triangles.entry(edge_key(u, v)).or_default().push(t);
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        Topology {
            vertex_triangles,
            edge_triangles,
            neighbors,
        }
    }

    pub fn across(&self, u: usize, v: usize, t: usize) -> Option<usize> {
        self.edge_triangles
            .get(&edge_key(u, v))
            .and_then(|ts| ts.iter().copied().find(|&o| o != t))
    }
}

#[inline]
pub(crate) fn edge_key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}
