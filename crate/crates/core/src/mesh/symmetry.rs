use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Rotation3, SymmetricEigen, Vector3};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::scalar::Real;

/// Oriented plane `{p : normal·p + offset = 0}`; `offset` is the signed
/// distance of the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane<T: Real> {
    normal: Vector3<T>,
    offset: T,
}

impl<T: Real> Plane<T> {
    /// Normalizes `normal`; fails on a zero vector.
    pub fn new(normal: Vector3<T>, offset: T) -> Result<Self> {
        let len = normal.norm();
        if !(len > T::zero()) {
            return Err(Error::Domain("plane normal has zero length".into()));
        }
        Ok(Plane {
            normal: normal / len,
            offset: offset / len,
        })
    }

    pub fn normal(&self) -> Vector3<T> {
        self.normal
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    pub fn signed_distance(&self, p: &Point3<T>) -> T {
        self.normal.dot(&p.coords) + self.offset
    }

    pub fn project(&self, p: &Point3<T>) -> Point3<T> {
        p - self.normal * self.signed_distance(p)
    }
}

/// Total-least-squares plane through `midpoints`: the normal is the
/// eigenvector of the point covariance with the smallest eigenvalue. The
/// normal's largest-magnitude component is made positive.
pub fn fit_symmetry_plane<T: Real>(midpoints: &[Point3<T>]) -> Result<Plane<T>> {
    if midpoints.len() < 3 {
        return Err(Error::Rank(format!(
            "symmetry plane needs at least 3 points, got {}",
            midpoints.len()
        )));
    }
    let n = T::from_count(midpoints.len());
    let centroid = midpoints
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / n;
    let mut cov = Matrix3::zeros();
    for p in midpoints {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let (lo, mid, hi) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    if !(hi > T::zero()) || mid <= hi * T::lit(1e-12) {
        return Err(Error::Rank("midpoints are coincident or collinear".into()));
    }
    let _ = lo;
    let mut normal: Vector3<T> = eig.eigenvectors.column(order[0]).into_owned();
    let mut k = 0;
    for i in 1..3 {
        if normal[i].abs() > normal[k].abs() {
            k = i;
        }
    }
    if normal[k] < T::zero() {
        normal = -normal;
    }
    Plane::new(normal, -normal.dot(&centroid))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Rigid frame that maps a symmetry plane onto `x = 0`, with the requested
/// side on `x ≥ 0` (left halves are mirrored).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfFrame<T: Real> {
    pub rotation: Rotation3<T>,
    pub origin: Point3<T>,
    pub mirrored: bool,
}

impl<T: Real> HalfFrame<T> {
    pub fn new(plane: &Plane<T>, side: Side) -> Self {
        let ex = Vector3::x();
        let n = plane.normal();
        let rotation = Rotation3::rotation_between(&n, &ex).unwrap_or_else(|| {
            // antiparallel: half turn about z
            Rotation3::from_axis_angle(&Vector3::z_axis(), T::pi())
        });
        HalfFrame {
            rotation,
            origin: Point3::from(n * (-plane.offset())),
            mirrored: side == Side::Left,
        }
    }

    pub fn to_frame(&self, p: &Point3<T>) -> Point3<T> {
        let mut q = Point3::from(self.rotation * (p - self.origin));
        if self.mirrored {
            q.x = -q.x;
        }
        q
    }

    pub fn from_frame(&self, q: &Point3<T>) -> Point3<T> {
        let mut v = q.coords;
        if self.mirrored {
            v.x = -v.x;
        }
        self.origin + self.rotation.inverse() * v
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum VRef {
    Orig(usize),
    Cut(usize, usize),
}

/// Extracts one side of `mesh`, expressed in the half frame of `plane`.
///
/// Triangles crossing the plane are clipped at the exact edge/plane
/// intersections, so the cut boundary lies on `x = 0`. Midplane landmarks are
/// projected onto `x = 0`; lateral landmarks on the other side are dropped.
pub fn split_half<T: Real>(
    mesh: &TriMesh<T>,
    plane: &Plane<T>,
    side: Side,
    landmarks: &LandmarkSet<T>,
) -> Result<(TriMesh<T>, LandmarkSet<T>, HalfFrame<T>)> {
    let frame = HalfFrame::new(plane, side);
    let pts: Vec<Point3<T>> = mesh.vertices().iter().map(|p| frame.to_frame(p)).collect();
    let inside = |i: usize| pts[i].x >= T::zero();

    let mut polys: Vec<Vec<VRef>> = Vec::new();
    for tri in mesh.triangles() {
        let flags = tri.map(inside);
        if flags.iter().all(|&f| !f) {
            continue;
        }
        if flags.iter().all(|&f| f) {
            polys.push(tri.iter().map(|&i| VRef::Orig(i)).collect());
            continue;
        }
        let mut poly = Vec::with_capacity(4);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let (ia, ib) = (flags[k], flags[(k + 1) % 3]);
            if ia {
                poly.push(VRef::Orig(a));
            }
            if ia != ib {
                let key = if a < b { VRef::Cut(a, b) } else { VRef::Cut(b, a) };
                // a vertex exactly on the plane is inside; no cut point needed next to it
                let on_plane = (ia && pts[a].x == T::zero()) || (ib && pts[b].x == T::zero());
                if !on_plane {
                    poly.push(key);
                }
            }
        }
        poly.dedup();
        if poly.len() >= 3 {
            polys.push(poly);
        }
    }
    if polys.is_empty() {
        return Err(Error::EmptyResult(format!(
            "mesh has no triangles on the {side:?} side of the plane"
        )));
    }

    let mut used = vec![false; pts.len()];
    for r in polys.iter().flatten() {
        if let VRef::Orig(i) = r {
            used[*i] = true;
        }
    }
    let mut new_index: HashMap<VRef, usize> = HashMap::new();
    let mut verts = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if used[i] {
            new_index.insert(VRef::Orig(i), verts.len());
            verts.push(*p);
        }
    }
    let mut tris = Vec::new();
    for poly in &polys {
        let mut ids = Vec::with_capacity(poly.len());
        for r in poly {
            let idx = match new_index.get(r) {
                Some(&i) => i,
                None => {
                    let VRef::Cut(a, b) = *r else { unreachable!() };
                    let (pa, pb) = (pts[a], pts[b]);
                    let t = pa.x / (pa.x - pb.x);
                    let mut q = pa + (pb - pa) * t;
                    q.x = T::zero();
                    verts.push(q);
                    new_index.insert(*r, verts.len() - 1);
                    verts.len() - 1
                }
            };
            ids.push(idx);
        }
        for k in 1..ids.len() - 1 {
            let t = [ids[0], ids[k], ids[k + 1]];
            tris.push(if frame.mirrored { [t[0], t[2], t[1]] } else { t });
        }
    }
    let (half, _) = TriMesh::from_parts(verts, tris)?;

    let lms = landmarks
        .map_positions(|l| {
            let mut q = frame.to_frame(&l.position);
            if l.midplane {
                q.x = T::zero();
            }
            q
        })
        .filter(|l| l.midplane || l.position.x > T::zero());
    Ok((half, lms, frame))
}
