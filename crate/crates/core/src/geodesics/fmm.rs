use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Point3, Vector2};

use super::path::SurfacePoint;
use super::Topology;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Per-vertex geodesic distance (mm); unreachable vertices hold infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField<T: Real> {
    pub values: Vec<T>,
    /// The point the field was grown from.
    pub source: SurfacePoint<T>,
}

impl<T: Real> DistanceField<T> {
    pub fn at(&self, v: usize) -> T {
        self.values[v]
    }

    pub fn is_reachable(&self, v: usize) -> bool {
        self.values[v].is_finite_value()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Far,
    Trial,
    Alive,
}

struct Entry<T: Real> {
    d: T,
    v: usize,
}

impl<T: Real> PartialEq for Entry<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Entry<T> {}
impl<T: Real> PartialOrd for Entry<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Entry<T> {
    // min-heap on (distance, vertex)
    fn cmp(&self, o: &Self) -> Ordering {
        o.d.partial_cmp(&self.d)
            .unwrap_or(Ordering::Equal)
            .then(o.v.cmp(&self.v))
    }
}

const MAX_UNFOLD: usize = 12;

/// First-order fast marching distance from vertex `source`.
pub fn fast_marching_field<T: Real>(mesh: &TriMesh<T>, source: usize) -> Result<DistanceField<T>> {
    if source >= mesh.num_vertices() {
        return Err(Error::Index {
            index: source,
            len: mesh.num_vertices(),
            context: "fast marching source vertex".into(),
        });
    }
    let topo = Topology::new(mesh);
    Ok(march(mesh, &topo, SurfacePoint::Vertex(source)))
}

/// Fast marching distance from an arbitrary surface point. Corners of the
/// triangles containing the point are seeded with exact Euclidean distances.
pub fn fast_marching_from_point<T: Real>(
    mesh: &TriMesh<T>,
    source: SurfacePoint<T>,
) -> Result<DistanceField<T>> {
    source.validate(mesh)?;
    let topo = Topology::new(mesh);
    Ok(march(mesh, &topo, source))
}

/// One upwind update rule: `c` is computed from `a` and `b`, which sit at the
/// given distances from `c` and from each other. Obtuse corners are replaced by
/// two rules through an unfolded vertex.
#[derive(Debug, Clone, Copy)]
struct Stencil<T: Real> {
    c: usize,
    a: usize,
    b: usize,
    ca: T,
    cb: T,
    ab: T,
}

/// Update rules of a mesh, indexed by the vertices that trigger them.
#[derive(Debug, Clone)]
pub(crate) struct MarchGraph<T: Real> {
    stencils: Vec<Stencil<T>>,
    triggers: Vec<Vec<u32>>,
}

impl<T: Real> MarchGraph<T> {
    pub fn new(mesh: &TriMesh<T>, topo: &Topology) -> Self {
        let v = mesh.vertices();
        let mut stencils = Vec::with_capacity(mesh.num_triangles() * 3);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                let c = tri[k];
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let plain = Stencil {
                    c,
                    a,
                    b,
                    ca: (v[a] - v[c]).norm(),
                    cb: (v[b] - v[c]).norm(),
                    ab: (v[b] - v[a]).norm(),
                };
                if (v[a] - v[c]).dot(&(v[b] - v[c])) >= T::zero() {
                    stencils.push(plain);
                    continue;
                }
                match split_obtuse(mesh, topo, t, c, a, b) {
                    Some((d, pd, pa, pb)) => {
                        let cd = pd.norm();
                        stencils.push(Stencil { c, a, b: d, ca: plain.ca, cb: cd, ab: (pd - pa).norm() });
                        stencils.push(Stencil { c, a: d, b, ca: cd, cb: plain.cb, ab: (pb - pd).norm() });
                    }
                    None => stencils.push(plain),
                }
            }
        }
        let mut triggers = vec![Vec::new(); mesh.num_vertices()];
        for (i, s) in stencils.iter().enumerate() {
            triggers[s.a].push(i as u32);
            triggers[s.b].push(i as u32);
        }
        MarchGraph { stencils, triggers }
    }
}

/// Unfold triangles across the edge opposite the obtuse corner `c` until a
/// vertex lands inside the angular sector spanned by `ca` and `cb`. Returns that
/// vertex and the planar positions of it, `a` and `b` relative to `c`.
#[allow(clippy::type_complexity)]
fn split_obtuse<T: Real>(
    mesh: &TriMesh<T>,
    topo: &Topology,
    t: usize,
    c: usize,
    a: usize,
    b: usize,
) -> Option<(usize, Vector2<T>, Vector2<T>, Vector2<T>)> {
    let v = mesh.vertices();
    let (pb, pc) = unfold_triangle(&v[a], &v[b], &v[c]);
    let pa = Vector2::zeros();
    let cross = |u: &Vector2<T>, w: &Vector2<T>| u.x * w.y - u.y * w.x;
    let ca = pa - pc;
    let cb = pb - pc;
    let orient = cross(&ca, &cb);
    let mut edge = (a, pa, b, pb);
    let mut prev_third = pc;
    let mut tri = t;
    for _ in 0..MAX_UNFOLD {
        let (p, pp, q, pq) = edge;
        let next = topo.across(p, q, tri)?;
        let d = mesh.triangles()[next].iter().copied().find(|&x| x != p && x != q)?;
        if d == c {
            return None;
        }
        let pd = place_opposite(&pp, &pq, (v[d] - v[p]).norm(), (v[d] - v[q]).norm(), &prev_third)?;
        let cd = pd - pc;
        let in_a = cross(&ca, &cd) * orient;
        let in_b = cross(&cd, &cb) * orient;
        if in_a > T::zero() && in_b > T::zero() {
            return Some((d, cd, ca, cb));
        }
        if in_a <= T::zero() {
            edge = (d, pd, q, pq);
            prev_third = pp;
        } else {
            edge = (p, pp, d, pd);
            prev_third = pq;
        }
        tri = next;
    }
    None
}

pub(crate) fn march<T: Real>(
    mesh: &TriMesh<T>,
    topo: &Topology,
    source: SurfacePoint<T>,
) -> DistanceField<T> {
    let graph = MarchGraph::new(mesh, topo);
    march_with(mesh, topo, &graph, source)
}

pub(crate) fn march_with<T: Real>(
    mesh: &TriMesh<T>,
    topo: &Topology,
    graph: &MarchGraph<T>,
    source: SurfacePoint<T>,
) -> DistanceField<T> {
    let n = mesh.num_vertices();
    let verts = mesh.vertices();
    let mut dist = vec![T::infinity(); n];
    let mut state = vec![State::Far; n];
    let mut heap = BinaryHeap::new();

    let p = source.position(mesh);
    for v in source.seed_vertices(mesh, topo) {
        dist[v] = (verts[v] - p).norm();
        state[v] = State::Trial;
        heap.push(Entry { d: dist[v], v });
    }

    while let Some(Entry { d, v }) = heap.pop() {
        if state[v] == State::Alive || d > dist[v] {
            continue;
        }
        state[v] = State::Alive;
        for &si in &graph.triggers[v] {
            let s = &graph.stencils[si as usize];
            let c = s.c;
            if state[c] == State::Alive {
                continue;
            }
            let (other, lv) = if s.a == v { (s.b, s.ca) } else { (s.a, s.cb) };
            let mut cand = dist[v] + lv;
            if state[other] == State::Alive {
                if let Some(u) = stencil_update(s, dist[s.a], dist[s.b]) {
                    if u < cand {
                        cand = u;
                    }
                }
            }
            if cand < dist[c] {
                dist[c] = cand;
                state[c] = State::Trial;
                heap.push(Entry { d: cand, v: c });
            }
        }
    }
    DistanceField {
        values: dist,
        source,
    }
}

/// Local planar frame: `a` at the origin, `b` on the positive x axis and `c` above.
fn unfold_triangle<T: Real>(pa: &Point3<T>, pb: &Point3<T>, pc: &Point3<T>) -> (Vector2<T>, Vector2<T>) {
    let ab = pb - pa;
    let ac = pc - pa;
    let len = ab.norm();
    let ex = ab / len;
    let x = ac.dot(&ex);
    let y = (ac - ex * x).norm();
    (Vector2::new(len, T::zero()), Vector2::new(x, y))
}

/// Places a point at distances `da` from `a` and `db` from `b` on the side of
/// line `ab` opposite to `away`.
fn place_opposite<T: Real>(
    a: &Vector2<T>,
    b: &Vector2<T>,
    da: T,
    db: T,
    away: &Vector2<T>,
) -> Option<Vector2<T>> {
    let ab = b - a;
    let len = ab.norm();
    if !(len > T::zero()) {
        return None;
    }
    let ex = ab / len;
    let ey = Vector2::new(-ex.y, ex.x);
    let x = (da * da - db * db + len * len) / (len * (T::one() + T::one()));
    let h2 = da * da - x * x;
    if h2 < T::zero() {
        return None;
    }
    let side = (away - a).dot(&ey);
    let h = h2.sqrt();
    let y = if side > T::zero() { -h } else { h };
    Some(a + ex * x + ey * y)
}

fn stencil_update<T: Real>(s: &Stencil<T>, da: T, db: T) -> Option<T> {
    let pa = Vector2::zeros();
    let pb = Vector2::new(s.ab, T::zero());
    let pc = place_opposite(&pa, &pb, s.ca, s.cb, &Vector2::new(T::zero(), -T::one()))?;
    virtual_source(&pa, &pb, &pc, da, db)
}

/// Virtual-source update of `c` from the pair (`a`, `b`) in the plane. The
/// straight ray from the virtual source to `c` must cross segment `ab`.
fn virtual_source<T: Real>(
    a: &Vector2<T>,
    b: &Vector2<T>,
    c: &Vector2<T>,
    da: T,
    db: T,
) -> Option<T> {
    let s = place_opposite(a, b, da, db, c)?;
    let d = c - s;
    let e = b - a;
    let den = d.x * e.y - d.y * e.x;
    if den == T::zero() {
        return None;
    }
    let w = a - s;
    let mu = (w.x * d.y - w.y * d.x) / den; // along ab
    let lam = (w.x * e.y - w.y * e.x) / den; // along s→c
    let tol = T::lit(1e-12);
    if mu < -tol || mu > T::one() + tol || lam < T::zero() || lam > T::one() {
        return None;
    }
    let dc = d.norm();
    if dc < da.max(db) {
        return None;
    }
    Some(dc)
}
