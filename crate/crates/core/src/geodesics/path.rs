use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::fmm::DistanceField;
use super::{edge_key, Topology};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// A location on a mesh surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfacePoint<T: Real> {
    Vertex(usize),
    /// `(1 - t) * a + t * b`
    Edge { a: usize, b: usize, t: T },
    Face { triangle: usize, barycentric: [T; 3] },
}

impl<T: Real> SurfacePoint<T> {
    /// Classify a barycentric location, snapping onto edges and vertices.
    pub fn from_barycentric(mesh: &TriMesh<T>, triangle: usize, bary: [T; 3]) -> Self {
        let tol = T::lit(1e-9);
        let tri = mesh.triangles()[triangle];
        for k in 0..3 {
            if bary[k] > T::one() - tol {
                return SurfacePoint::Vertex(tri[k]);
            }
        }
        for k in 0..3 {
            if bary[k] < tol {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let s = bary[i] + bary[j];
                return SurfacePoint::Edge {
                    a: tri[i],
                    b: tri[j],
                    t: bary[j] / s,
                };
            }
        }
        SurfacePoint::Face {
            triangle,
            barycentric: bary,
        }
    }

    pub fn position(&self, mesh: &TriMesh<T>) -> Point3<T> {
        let v = mesh.vertices();
        match *self {
            SurfacePoint::Vertex(i) => v[i],
            SurfacePoint::Edge { a, b, t } => Point3::from(v[a].coords * (T::one() - t) + v[b].coords * t),
            SurfacePoint::Face {
                triangle,
                barycentric: w,
            } => {
                let [a, b, c] = mesh.triangles()[triangle];
                Point3::from(v[a].coords * w[0] + v[b].coords * w[1] + v[c].coords * w[2])
            }
        }
    }

    pub(crate) fn validate(&self, mesh: &TriMesh<T>) -> Result<()> {
        let nv = mesh.num_vertices();
        let bad = |index, len, context: &str| {
            Err(Error::Index {
                index,
                len,
                context: context.into(),
            })
        };
        match *self {
            SurfacePoint::Vertex(i) if i >= nv => bad(i, nv, "surface point vertex"),
            SurfacePoint::Edge { a, b, .. } if a.max(b) >= nv => bad(a.max(b), nv, "surface point edge"),
            SurfacePoint::Face { triangle, .. } if triangle >= mesh.num_triangles() => {
                bad(triangle, mesh.num_triangles(), "surface point triangle")
            }
            _ => Ok(()),
        }
    }

    /// Triangles whose closure contains this point.
    pub(crate) fn support(&self, mesh: &TriMesh<T>, topo: &Topology) -> Vec<usize> {
        match *self {
            SurfacePoint::Vertex(i) => topo.vertex_triangles[i].clone(),
            SurfacePoint::Edge { a, b, .. } => topo
                .edge_triangles
                .get(&edge_key(a, b))
                .cloned()
                .unwrap_or_default(),
            SurfacePoint::Face { triangle, .. } => {
                let _ = mesh;
                vec![triangle]
            }
        }
    }

    pub(crate) fn seed_vertices(&self, mesh: &TriMesh<T>, topo: &Topology) -> Vec<usize> {
        if let SurfacePoint::Vertex(i) = *self {
            return vec![i];
        }
        let mut out: Vec<usize> = self
            .support(mesh, topo)
            .iter()
            .flat_map(|&t| mesh.triangles()[t])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// A piecewise-linear surface path, ordered from source to target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub waypoints: Vec<[f64; 3]>,
    pub length: f64,
    /// Landmark ids of the endpoints, when known.
    pub endpoints: Option<[String; 2]>,
}

impl GeodesicPath {
    fn from_points(points: Vec<[f64; 3]>) -> Self {
        let length = points
            .windows(2)
            .map(|w| dist3(&w[0], &w[1]))
            .sum();
        GeodesicPath {
            waypoints: points,
            length,
            endpoints: None,
        }
    }

    pub fn with_endpoints(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.endpoints = Some([a.into(), b.into()]);
        self
    }
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Interpolated field value at a surface point.
pub(crate) fn field_at<T: Real>(mesh: &TriMesh<T>, field: &DistanceField<T>, p: &SurfacePoint<T>) -> T {
    let d = &field.values;
    match *p {
        SurfacePoint::Vertex(i) => d[i],
        SurfacePoint::Edge { a, b, t } => d[a] * (T::one() - t) + d[b] * t,
        SurfacePoint::Face {
            triangle,
            barycentric: w,
        } => {
            let [a, b, c] = mesh.triangles()[triangle];
            d[a] * w[0] + d[b] * w[1] + d[c] * w[2]
        }
    }
}

/// Gradient of the linear interpolant of `d` over triangle `t`, expressed as
/// barycentric rates `(dλ0, dλ1, dλ2)` of the descent direction `-∇d`, plus its
/// 3D magnitude.
fn descent<T: Real>(mesh: &TriMesh<T>, d: &[T], t: usize) -> Option<([T; 3], T)> {
    let [i0, i1, i2] = mesh.triangles()[t];
    let v = mesh.vertices();
    let e1 = v[i1] - v[i0];
    let e2 = v[i2] - v[i0];
    let (d1, d2) = (d[i1] - d[i0], d[i2] - d[i0]);
    if !(d[i0].is_finite_value() && d[i1].is_finite_value() && d[i2].is_finite_value()) {
        return None;
    }
    let (g11, g12, g22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
    let det = g11 * g22 - g12 * g12;
    if !(det > T::zero()) {
        return None;
    }
    let a = (g22 * d1 - g12 * d2) / det;
    let b = (g11 * d2 - g12 * d1) / det;
    let grad: Vector3<T> = e1 * a + e2 * b;
    let mag = grad.norm();
    if !(mag > T::zero()) {
        return None;
    }
    // direction -grad in barycentric rates: solve -grad = r1 e1 + r2 e2
    let dir = -grad;
    let (p1, p2) = (dir.dot(&e1), dir.dot(&e2));
    let r1 = (g22 * p1 - g12 * p2) / det;
    let r2 = (g11 * p2 - g12 * p1) / det;
    Some(([-(r1 + r2), r1, r2], mag))
}

/// Walk from barycentric `start` along `rate` to the boundary of triangle `t`.
fn exit_point<T: Real>(start: [T; 3], rate: [T; 3]) -> Option<[T; 3]> {
    let mut best: Option<T> = None;
    for k in 0..3 {
        if rate[k] < T::zero() {
            let s = -start[k] / rate[k];
            if s >= T::zero() && best.is_none_or(|b| s < b) {
                best = Some(s);
            }
        }
    }
    let s = best?;
    let mut out = [T::zero(); 3];
    for k in 0..3 {
        out[k] = (start[k] + rate[k] * s).max(T::zero());
    }
    let sum = out[0] + out[1] + out[2];
    Some(out.map(|x| x / sum))
}

fn bary_in<T: Real>(mesh: &TriMesh<T>, t: usize, p: &SurfacePoint<T>) -> Option<[T; 3]> {
    let tri = mesh.triangles()[t];
    let at = |i: usize| tri.iter().position(|&x| x == i);
    let mut w = [T::zero(); 3];
    match *p {
        SurfacePoint::Vertex(i) => w[at(i)?] = T::one(),
        SurfacePoint::Edge { a, b, t: s } => {
            w[at(a)?] = T::one() - s;
            w[at(b)?] = s;
        }
        SurfacePoint::Face { triangle, barycentric } => {
            if triangle != t {
                return None;
            }
            w = barycentric;
        }
    }
    Some(w)
}

/// Steepest-descent backtrace of `field` from `target` to the field's source.
pub fn geodesic_path<T: Real>(
    mesh: &TriMesh<T>,
    field: &DistanceField<T>,
    target: SurfacePoint<T>,
) -> Result<GeodesicPath> {
    target.validate(mesh)?;
    let topo = Topology::new(mesh);
    trace(mesh, &topo, field, target)
}

pub(crate) fn trace<T: Real>(
    mesh: &TriMesh<T>,
    topo: &Topology,
    field: &DistanceField<T>,
    target: SurfacePoint<T>,
) -> Result<GeodesicPath> {
    let d = &field.values;
    let to_arr = |p: Point3<T>| [p.x.as_f64(), p.y.as_f64(), p.z.as_f64()];
    let source_pos = field.source.position(mesh);
    if !field_at(mesh, field, &target).is_finite_value() {
        return Err(Error::Connectivity(
            "target is not reachable from the distance field source".into(),
        ));
    }
    if target == field.source {
        return Ok(GeodesicPath::from_points(vec![to_arr(source_pos)]));
    }
    let source_support = field.source.support(mesh, topo);

    let mut current = target;
    let mut points = vec![to_arr(target.position(mesh))];
    let max_steps = 8 * (mesh.num_vertices() + mesh.num_triangles()) + 16;
    for _ in 0..max_steps {
        // last leg: straight line inside a triangle that also holds the source
        let supp = current.support(mesh, topo);
        if supp.iter().any(|t| source_support.contains(t)) {
            points.push(to_arr(source_pos));
            points.reverse();
            return Ok(GeodesicPath::from_points(points));
        }
        let mut best: Option<(T, usize, [T; 3])> = None;
        for &t in &supp {
            let Some(start) = bary_in(mesh, t, &current) else { continue };
            let Some((rate, mag)) = descent(mesh, d, t) else { continue };
            // direction must point into the triangle
            let tol = T::lit(1e-12) * (rate[0].abs() + rate[1].abs() + rate[2].abs());
            let enters = (0..3).all(|k| start[k] > T::lit(1e-12) || rate[k] >= -tol);
            let moves = (0..3).any(|k| rate[k] < T::zero() && start[k] > T::lit(1e-12));
            if !enters || !moves {
                continue;
            }
            if best.is_none_or(|(m, _, _)| mag > m) {
                if let Some(exit) = exit_point(start, rate) {
                    best = Some((mag, t, exit));
                }
            }
        }
        let before = field_at(mesh, field, &current);
        let next = match best {
            Some((_, t, exit)) => SurfacePoint::from_barycentric(mesh, t, exit),
            None => edge_descent(mesh, topo, d, &current).ok_or_else(|| {
                Error::DegeneratePath(format!(
                    "descent stagnated at field value {}",
                    before.as_f64()
                ))
            })?,
        };
        let after = field_at(mesh, field, &next);
        if after > before + T::lit(1e-9) * (T::one() + before) {
            // numerical uphill step; fall back to a vertex hop if that helps
            match edge_descent(mesh, topo, d, &current) {
                Some(v) if field_at(mesh, field, &v) < before => current = v,
                _ => {
                    return Err(Error::DegeneratePath(format!(
                        "descent stagnated at field value {}",
                        before.as_f64()
                    )))
                }
            }
        } else {
            current = next;
        }
        points.push(to_arr(current.position(mesh)));
    }
    Err(Error::numerical("geodesic_path", "backtrace exceeded the step limit"))
}

/// Hop to the lowest-valued neighbouring vertex that is strictly downhill.
fn edge_descent<T: Real>(
    mesh: &TriMesh<T>,
    topo: &Topology,
    d: &[T],
    p: &SurfacePoint<T>,
) -> Option<SurfacePoint<T>> {
    let cands: Vec<usize> = match *p {
        SurfacePoint::Vertex(i) => topo.neighbors[i].clone(),
        SurfacePoint::Edge { a, b, .. } => vec![a, b],
        SurfacePoint::Face { triangle, .. } => mesh.triangles()[triangle].to_vec(),
    };
    let here = match *p {
        SurfacePoint::Vertex(i) => d[i],
        _ => T::infinity(),
    };
    cands
        .into_iter()
        .filter(|&u| d[u] < here)
        .min_by(|&u, &w| d[u].partial_cmp(&d[w]).unwrap().then(u.cmp(&w)))
        .map(SurfacePoint::Vertex)
}

/// Point at half the arc length of `path`.
pub fn geodesic_midpoint(path: &GeodesicPath) -> Result<[f64; 3]> {
    if !(path.length > 0.0) || path.waypoints.len() < 2 {
        return Err(Error::DegeneratePath("path has zero length".into()));
    }
    let half = path.length / 2.0;
    let mut acc = 0.0;
    for w in path.waypoints.windows(2) {
        let seg = dist3(&w[0], &w[1]);
        if acc + seg >= half && seg > 0.0 {
            let s = (half - acc) / seg;
            return Ok([0, 1, 2].map(|k| w[0][k] + s * (w[1][k] - w[0][k])));
        }
        acc += seg;
    }
    Ok(*path.waypoints.last().unwrap())
}
