use std::collections::{HashMap, HashSet};

use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;

use super::fmm::{march_with, MarchGraph};
use super::path::{geodesic_midpoint, trace, GeodesicPath, SurfacePoint};
use super::{edge_key, Topology};
use crate::error::{Error, Result};
use crate::landmarks::{Landmark, LandmarkSet};
use crate::mesh::{SurfaceIndex, TriMesh};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyParams {
    pub iterations: usize,
    /// Geodesics shorter than this (mm) are treated as degenerate.
    pub min_path_length: f64,
    /// Endpoints closer than this many mean mesh edge lengths are skipped.
    pub min_separation_edges: f64,
    /// Maximum |x| (mm) of every waypoint for a geodesic between two midplane
    /// landmarks to count as midplane-contained. `None` uses the mean edge length.
    pub midplane_tolerance: Option<f64>,
}

impl Default for DensifyParams {
    fn default() -> Self {
        DensifyParams {
            iterations: 1,
            min_path_length: 0.5,
            min_separation_edges: 2.0,
            midplane_tolerance: None,
        }
    }
}

impl DensifyParams {
    pub fn with_iterations(iterations: usize) -> Self {
        DensifyParams {
            iterations,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PassReport {
    pub generation: u32,
    pub added: usize,
    pub skipped_edges: Vec<[String; 2]>,
    pub unsubdivided_triangles: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DensifyReport {
    pub passes: Vec<PassReport>,
}

/// Iterated geodesic midpoint refinement of a landmark triangulation over `mesh`.
pub fn densify<T: Real>(
    mesh: &TriMesh<T>,
    landmarks: &LandmarkSet<T>,
    params: &DensifyParams,
) -> Result<(LandmarkSet<T>, DensifyReport)> {
    let mut report = DensifyReport::default();
    if params.iterations == 0 {
        return Ok((landmarks.clone(), report));
    }
    if landmarks.connectivity().is_empty() {
        return Err(Error::Parameter(
            "densification needs a landmark triangulation".into(),
        ));
    }
    let index = SurfaceIndex::new(mesh)?;
    let topo = Topology::new(mesh);
    let graph = MarchGraph::new(mesh, &topo);
    let mean_edge = mesh.mean_edge_length().as_f64();
    let mid_tol = params.midplane_tolerance.unwrap_or(mean_edge);
    let min_sep = params.min_separation_edges * mean_edge;
    let base = landmarks.points().iter().map(|p| p.generation).max().unwrap_or(0);

    let mut current = landmarks.clone();
    for iter in 1..=params.iterations {
        let generation = base + iter as u32;
        let pass = refine_once(
            mesh, &index, &topo, &graph, &current, generation, params.min_path_length, min_sep, mid_tol,
        )?;
        log::info!(
            "densify pass {generation}: {} midpoints, {} skipped edges, {} triangles kept",
            pass.1.added,
            pass.1.skipped_edges.len(),
            pass.1.unsubdivided_triangles
        );
        current = pass.0;
        report.passes.push(pass.1);
    }
    Ok((current, report))
}

fn locate<T: Real>(index: &SurfaceIndex<'_, T>, p: &Point3<T>) -> SurfacePoint<T> {
    let c = index.closest(p);
    SurfacePoint::from_barycentric(index.mesh(), c.triangle, c.barycentric)
}

#[allow(clippy::too_many_arguments)]
fn refine_once<T: Real>(
    mesh: &TriMesh<T>,
    index: &SurfaceIndex<'_, T>,
    topo: &Topology,
    graph: &MarchGraph<T>,
    set: &LandmarkSet<T>,
    generation: u32,
    min_len: f64,
    min_sep: f64,
    mid_tol: f64,
) -> Result<(LandmarkSet<T>, PassReport)> {
    let ids = set.index_of();
    let pts = set.points();
    let tri_idx: Vec<[usize; 3]> = set
        .connectivity()
        .iter()
        .map(|t| t.clone().map(|id| ids[id.as_str()]))
        .collect();

    // unique edges in first-appearance order
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut seen = HashSet::new();
    for &[a, b, c] in &tri_idx {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if seen.insert(edge_key(u, v)) {
                edges.push((u, v));
            }
        }
    }

    // one field per source landmark, shared by all edges leaving it
    let located: Vec<SurfacePoint<T>> = pts.iter().map(|p| locate(index, &p.position)).collect();
    let mut by_source: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (k, &(u, v)) in edges.iter().enumerate() {
        let src = u.min(v);
        let s = *slot.entry(src).or_insert_with(|| {
            by_source.push((src, Vec::new()));
            by_source.len() - 1
        });
        by_source[s].1.push(k);
    }
    let traced: Vec<Vec<(usize, Result<Option<GeodesicPath>>)>> = by_source
        .par_iter()
        .map(|(src, ks)| {
            let wanted: Vec<usize> = ks
                .iter()
                .copied()
                .filter(|&k| {
                    let (u, v) = edges[k];
                    (pts[u].position - pts[v].position).norm().as_f64() >= min_sep
                })
                .collect();
            let mut out: Vec<(usize, Result<Option<GeodesicPath>>)> = ks
                .iter()
                .filter(|k| !wanted.contains(k))
                .map(|&k| (k, Ok(None)))
                .collect();
            if !wanted.is_empty() {
                let field = march_with(mesh, topo, graph, located[*src]);
                for k in wanted {
                    let (u, v) = edges[k];
                    let other = if u == *src { v } else { u };
                    let r = trace(mesh, topo, &field, located[other]).map(|mut p| {
                        p.endpoints = Some([pts[*src].id.clone(), pts[other].id.clone()]);
                        Some(p)
                    });
                    out.push((k, r));
                }
            }
            out
        })
        .collect();
    let mut paths: Vec<Option<GeodesicPath>> = vec![None; edges.len()];
    for group in traced {
        for (k, r) in group {
            let (u, v) = edges[k];
            paths[k] = r.map_err(|e| Error::Edge {
                from: pts[u].id.clone(),
                to: pts[v].id.clone(),
                source: Box::new(e),
            })?;
        }
    }

    let mut points = pts.to_vec();
    let taken: HashSet<&str> = ids.keys().copied().collect();
    let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut report = PassReport {
        generation,
        ..Default::default()
    };
    let mut serial = 0usize;
    for (k, &(u, v)) in edges.iter().enumerate() {
        let path = match &paths[k] {
            Some(p) if p.length >= min_len => p,
            _ => {
                report.skipped_edges.push([pts[u].id.clone(), pts[v].id.clone()]);
                continue;
            }
        };
        let m = geodesic_midpoint(path).map_err(|e| Error::Edge {
            from: pts[u].id.clone(),
            to: pts[v].id.clone(),
            source: Box::new(e),
        })?;
        let mut pos = Point3::new(T::lit(m[0]), T::lit(m[1]), T::lit(m[2]));
        let midplane = pts[u].midplane
            && pts[v].midplane
            && path.waypoints.iter().all(|w| w[0].abs() <= mid_tol);
        if midplane {
            if let Some(q) = closest_on_midplane_section(mesh, &pos) {
                pos = q;
            }
        }
        let mut id = format!("g{generation}_{serial}");
        while taken.contains(id.as_str()) {
            serial += 1;
            id = format!("g{generation}_{serial}");
        }
        serial += 1;
        midpoint_of.insert(edge_key(u, v), points.len());
        points.push(Landmark {
            id,
            position: pos,
            midplane,
            generation,
        });
        report.added += 1;
    }

    let mut triangles = Vec::with_capacity(tri_idx.len() * 4);
    for &[a, b, c] in &tri_idx {
        let m = (
            midpoint_of.get(&edge_key(a, b)),
            midpoint_of.get(&edge_key(b, c)),
            midpoint_of.get(&edge_key(c, a)),
        );
        if let (Some(&ab), Some(&bc), Some(&ca)) = m {
            triangles.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        } else {
            report.unsubdivided_triangles += 1;
            triangles.push([a, b, c]);
        }
    }
    let connectivity = triangles
        .into_iter()
        .map(|t| t.map(|i| points[i].id.clone()))
        .collect();
    Ok((LandmarkSet::new(points, connectivity)?, report))
}

/// Closest point to `p` on the intersection of the mesh with the plane x = 0.
fn closest_on_midplane_section<T: Real>(mesh: &TriMesh<T>, p: &Point3<T>) -> Option<Point3<T>> {
    let v = mesh.vertices();
    let mut best: Option<(T, Point3<T>)> = None;
    for &[a, b, c] in mesh.triangles() {
        let corners = [v[a], v[b], v[c]];
        let mut cut: Vec<Point3<T>> = Vec::with_capacity(3);
        for k in 0..3 {
            let (p0, p1) = (corners[k], corners[(k + 1) % 3]);
            if p0.x == T::zero() {
                cut.push(p0);
            }
            if (p0.x < T::zero() && p1.x > T::zero()) || (p0.x > T::zero() && p1.x < T::zero()) {
                let s = p0.x / (p0.x - p1.x);
                let mut q = p0 + (p1 - p0) * s;
                q.x = T::zero();
                cut.push(q);
            }
        }
        if cut.is_empty() {
            continue;
        }
        let (q0, q1) = (cut[0], *cut.last().unwrap());
        let d = q1 - q0;
        let l2 = d.norm_squared();
        let s = if l2 > T::zero() {
            ((p - q0).dot(&d) / l2).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        let q = q0 + d * s;
        let dist = (q - p).norm();
        if best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, q));
        }
    }
    best.map(|(_, q)| q)
}
