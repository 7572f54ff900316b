use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TriMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Result of a closest-point query against a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint<T: Real> {
    pub point: Point3<T>,
    pub triangle: usize,
    /// Barycentric weights of `point` with respect to the triangle corners.
    pub barycentric: [T; 3],
    pub distance: T,
}

/// Closest point to `p` on triangle `abc` together with its barycentric
/// coordinates. Handles the face interior, the three edges and the three
/// corners.
pub fn closest_point_on_triangle<T: Real>(
    p: &Point3<T>,
    a: &Point3<T>,
    b: &Point3<T>,
    c: &Point3<T>,
) -> (Point3<T>, [T; 3]) {
    let zero = T::zero();
    let one = T::one();
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= zero && d2 <= zero {
        return (*a, [one, zero, zero]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= zero && d4 <= d3 {
        return (*b, [zero, one, zero]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [one - v, v, zero]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= zero && d5 <= d6 {
        return (*c, [zero, zero, one]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [one - w, zero, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && (d4 - d3) >= zero && (d5 - d6) >= zero {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [zero, one - w, w]);
    }
    let denom = one / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [one - v - w, v, w])
}

#[derive(Debug, Clone, Copy)]
struct Aabb<T: Real> {
    lo: Point3<T>,
    hi: Point3<T>,
}

impl<T: Real> Aabb<T> {
    fn of_points(pts: &[Point3<T>]) -> Self {
        let mut lo = pts[0];
        let mut hi = pts[0];
        for p in &pts[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Aabb { lo, hi }
    }

    fn merge(&self, o: &Self) -> Self {
        Aabb {
            lo: self.lo.inf(&o.lo),
            hi: self.hi.sup(&o.hi),
        }
    }

    fn distance_squared(&self, p: &Point3<T>) -> T {
        let mut d = T::zero();
        for k in 0..3 {
            let v = p[k];
            let e = if v < self.lo[k] {
                self.lo[k] - v
            } else if v > self.hi[k] {
                v - self.hi[k]
            } else {
                T::zero()
            };
            d += e * e;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node<T: Real> {
    Leaf { bounds: Aabb<T>, start: usize, end: usize },
    Inner { bounds: Aabb<T>, left: usize, right: usize },
}

impl<T: Real> Node<T> {
    fn bounds(&self) -> &Aabb<T> {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Static bounding-volume hierarchy over the triangles of a mesh, used for
/// exact closest-point queries. Ties between equally distant triangles go to
/// the lowest triangle index.
#[derive(Debug, Clone)]
pub struct SurfaceIndex<'a, T: Real> {
    mesh: &'a TriMesh<T>,
    nodes: Vec<Node<T>>,
    order: Vec<usize>,
    root: usize,
}

impl<'a, T: Real> SurfaceIndex<'a, T> {
    pub fn new(mesh: &'a TriMesh<T>) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::Domain("closest-point query on an empty mesh".into()));
        }
        let boxes: Vec<Aabb<T>> = (0..mesh.num_triangles())
            .map(|t| Aabb::of_points(&mesh.triangle(t)))
            .collect();
        let centroids: Vec<Point3<T>> = boxes
            .iter()
            .map(|b| nalgebra::center(&b.lo, &b.hi))
            .collect();
        let mut order: Vec<usize> = (0..mesh.num_triangles()).collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / LEAF_SIZE + 1);
        let root = build(&mut nodes, &mut order, 0, &boxes, &centroids);
        Ok(SurfaceIndex {
            mesh,
            nodes,
            order,
            root,
        })
    }

    pub fn mesh(&self) -> &TriMesh<T> {
        self.mesh
    }

    /// Closest surface point to `p`.
    pub fn closest(&self, p: &Point3<T>) -> ClosestPoint<T> {
        self.closest_with_hint(p, &[])
    }

    /// Closest surface point to `p`, seeding the search bound with the
    /// triangles in `hint`. The answer is identical to [`Self::closest`].
    pub fn closest_with_hint(&self, p: &Point3<T>, hint: &[usize]) -> ClosestPoint<T> {
        let mut best: Option<(T, usize, Point3<T>, [T; 3])> = None;
        let consider = |t: usize, best: &mut Option<(T, usize, Point3<T>, [T; 3])>| {
            let [a, b, c] = self.mesh.triangle(t);
            let (q, bary) = closest_point_on_triangle(p, &a, &b, &c);
            let d2 = (q - p).norm_squared();
            let better = match best {
                None => true,
                Some((bd, bt, _, _)) => d2 < *bd || (d2 == *bd && t < *bt),
            };
            if better {
                *best = Some((d2, t, q, bary));
            }
        };
        for &t in hint {
            consider(t, &mut best);
        }
        let mut stack: Vec<usize> = Vec::with_capacity(64);
        stack.push(self.root);
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if let Some((bd, _, _, _)) = best {
                if node.bounds().distance_squared(p) > bd {
                    continue;
                }
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        consider(t, &mut best);
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_squared(p);
                    let dr = self.nodes[*right].bounds().distance_squared(p);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        let (d2, triangle, point, barycentric) = best.expect("index is non-empty");
        ClosestPoint {
            point,
            triangle,
            barycentric,
            distance: d2.sqrt(),
        }
    }

    pub fn distance(&self, p: &Point3<T>) -> T {
        self.closest(p).distance
    }

    /// Distances of many points, computed in parallel; output order matches input.
    pub fn distances(&self, points: &[Point3<T>]) -> Vec<T> {
        points.par_iter().map(|p| self.distance(p)).collect()
    }
}

fn build<T: Real>(
    nodes: &mut Vec<Node<T>>,
    order: &mut [usize],
    offset: usize,
    boxes: &[Aabb<T>],
    centroids: &[Point3<T>],
) -> usize {
    let bounds = order[1..]
        .iter()
        .fold(boxes[order[0]], |acc, &t| acc.merge(&boxes[t]));
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            bounds,
            start: offset,
            end: offset + order.len(),
        });
        return nodes.len() - 1;
    }
    let cb = Aabb::of_points(&order.iter().map(|&t| centroids[t]).collect::<Vec<_>>());
    let ext = cb.hi - cb.lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    order.sort_by(|&a, &b| {
        centroids[a][axis]
            .partial_cmp(&centroids[b][axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let (lo, hi) = order.split_at_mut(mid);
    let left = build(nodes, lo, offset, boxes, centroids);
    let right = build(nodes, hi, offset + mid, boxes, centroids);
    nodes.push(Node::Inner {
        bounds,
        left,
        right,
    });
    nodes.len() - 1
}

/// Exact Euclidean distance from `p` to the surface of `mesh`.
pub fn point_to_surface_distance<T: Real>(p: &Point3<T>, mesh: &TriMesh<T>) -> Result<T> {
    Ok(SurfaceIndex::new(mesh)?.distance(p))
}

/// Summary of a set of non-negative distances (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub distances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

impl DistanceStats {
    pub fn from_distances<T: Real>(d: &[T]) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::Domain("statistics of an empty distance set".into()));
        }
        let distances: Vec<f64> = d.iter().map(|x| x.as_f64()).collect();
        let n = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / n;
        let var = distances.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut sorted = distances.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        Ok(DistanceStats {
            mean,
            median,
            std: var.sqrt(),
            max: sorted[m - 1],
            distances,
        })
    }

    /// Drops the per-point list, keeping only the summary numbers.
    pub fn summary(&self) -> Self {
        DistanceStats {
            distances: Vec::new(),
            ..self.clone()
        }
    }
}

/// Distances from every vertex of `source` to the surface of `target`.
pub fn mesh_to_surface_stats<T: Real>(
    source: &TriMesh<T>,
    target: &TriMesh<T>,
) -> Result<DistanceStats> {
    if source.num_vertices() == 0 {
        return Err(Error::Domain("source mesh has no vertices".into()));
    }
    let index = SurfaceIndex::new(target)?;
    DistanceStats::from_distances(&index.distances(source.vertices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn right_triangle() -> TriMesh<f64> {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn vertex_and_projection_cases() {
        let m = right_triangle();
        assert_eq!(point_to_surface_distance(&Point3::new(1.0, 0.0, 0.0), &m).unwrap(), 0.0);
        let d = point_to_surface_distance(&Point3::new(0.0, 0.0, 1.0), &m).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        let d = point_to_surface_distance(&Point3::new(0.25, 0.25, 1.0), &m).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_and_corner_regions() {
        let m = right_triangle();
        // beyond the hypotenuse
        let d = point_to_surface_distance(&Point3::new(1.0, 1.0, 0.0), &m).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        // beyond corner a
        let d = point_to_surface_distance(&Point3::new(-3.0, -4.0, 0.0), &m).unwrap();
        assert!((d - 5.0).abs() < 1e-15);
        // beyond edge ab
        let d = point_to_surface_distance(&Point3::new(0.5, -2.0, 0.0), &m).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_mesh_is_domain_error() {
        let m = TriMesh::<f64>::new(vec![], vec![]).unwrap();
        assert!(matches!(
            point_to_surface_distance(&Point3::origin(), &m),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn matches_dense_sampling_oracle() {
        // A small curved mesh; dense barycentric sampling bounds the true minimum from above.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let verts: Vec<Point3<f64>> = (0..6)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3)))
            .collect();
        let mesh = TriMesh::new(verts, vec![[0, 1, 2], [1, 2, 3], [2, 3, 4], [3, 4, 5]]).unwrap();
        let samples_per_edge = 160; // ~13k samples per triangle, ~5e4 total
        let mut samples = Vec::new();
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle(t);
            for i in 0..=samples_per_edge {
                for j in 0..=(samples_per_edge - i) {
                    let u = i as f64 / samples_per_edge as f64;
                    let v = j as f64 / samples_per_edge as f64;
                    samples.push(a + (b - a) * u + (c - a) * v);
                }
            }
        }
        let max_edge = mesh
            .edges()
            .iter()
            .map(|&[u, v]| (mesh.vertices()[u] - mesh.vertices()[v]).norm())
            .fold(0.0, f64::max);
        let bound = max_edge / samples_per_edge as f64;
        let index = SurfaceIndex::new(&mesh).unwrap();
        for _ in 0..50 {
            let p = Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let oracle = samples.iter().map(|s| (s - p).norm()).fold(f64::INFINITY, f64::min);
            let d = index.distance(&p);
            assert!(d <= oracle + 1e-12, "exact {d} above sampled {oracle}");
            assert!(oracle - d <= bound, "gap {} exceeds sampling bound {bound}", oracle - d);
        }
    }

    #[test]
    fn hint_does_not_change_answer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        let w = 12;
        for i in 0..w {
            for j in 0..w {
                verts.push(Point3::new(i as f64, j as f64, rng.random_range(-0.5..0.5)));
            }
        }
        for i in 0..w - 1 {
            for j in 0..w - 1 {
                let a = i * w + j;
                tris.push([a, a + w, a + 1]);
                tris.push([a + 1, a + w, a + w + 1]);
            }
        }
        let mesh = TriMesh::new(verts, tris).unwrap();
        let index = SurfaceIndex::new(&mesh).unwrap();
        for _ in 0..200 {
            let p = Point3::new(rng.random_range(-2.0..14.0), rng.random_range(-2.0..14.0), rng.random_range(-3.0..3.0));
            let a = index.closest(&p);
            let b = index.closest_with_hint(&p, &[rng.random_range(0..mesh.num_triangles())]);
            let brute = (0..mesh.num_triangles())
                .map(|t| {
                    let [x, y, z] = mesh.triangle(t);
                    (closest_point_on_triangle(&p, &x, &y, &z).0 - p).norm()
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(a.triangle, b.triangle);
            assert_eq!(a.distance, b.distance);
            assert!((a.distance - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_median_conventions() {
        let s = DistanceStats::from_distances(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.max, 3.0);
        let s = DistanceStats::from_distances(&[4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn translated_plane_offsets() {
        let m = right_triangle();
        let shifted = m.map_vertices(|p| p + nalgebra::Vector3::new(0.0, 0.0, 0.7));
        let s = mesh_to_surface_stats(&m, &shifted).unwrap();
        for d in &s.distances {
            assert!((d - 0.7).abs() < 1e-15);
        }
        assert_eq!(mesh_to_surface_stats(&m, &m).unwrap().max, 0.0);
    }
}
