//! Dense correspondence by registering a reference surface onto each target.
//!
//! Registration runs in three stages:
//!
//! 1. a similarity transform (rotation, translation, uniform scale) fitted by
//!    iterated closest points with a closed-form Umeyama update,
//! 2. an elastic displacement field solved level by level with a
//!    graph-Laplacian stiffness that relaxes from `alpha_start` to `alpha_end`,
//! 3. a final projection of every vertex within `snap` of the target surface.
//!
//! The deformed reference keeps the reference topology, so vertex `i` of any
//! two registrations refers to the same semi-landmark.

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DistanceStats, SurfaceIndex, TriMesh};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationParams {
    /// Maximum mean reference-to-target distance (mm) accepted after the
    /// initial transform.
    pub init_radius: f64,
    pub similarity_iterations: usize,
    /// Stop the similarity stage once the relative objective change drops below this.
    pub similarity_tolerance: f64,
    pub allow_scale: bool,
    pub levels: usize,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub iterations_per_level: usize,
    /// Relative objective change ending a level.
    pub level_tolerance: f64,
    /// Vertices farther than this (mm) from the target are left out of the data term.
    pub outlier: f64,
    /// Vertices within this distance (mm) are projected onto the target at the end.
    pub snap: f64,
    /// Stiffness multiplier for edges touching the reference boundary.
    pub boundary_weight: f64,
    /// A registration counts as converged only if the forward maximum stays below this.
    pub convergence_tolerance: f64,
    pub cg_tolerance: f64,
    pub cg_iterations: usize,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            init_radius: 50.0,
            similarity_iterations: 500,
            similarity_tolerance: 1e-12,
            allow_scale: true,
            levels: 4,
            alpha_start: 100.0,
            alpha_end: 1.0,
            iterations_per_level: 20,
            level_tolerance: 1e-6,
            outlier: 4.0,
            snap: 1.0,
            boundary_weight: 2.0,
            convergence_tolerance: 4.0,
            cg_tolerance: 1e-10,
            cg_iterations: 2000,
        }
    }
}

impl RegistrationParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("init_radius", self.init_radius),
            ("outlier", self.outlier),
            ("alpha_start", self.alpha_start),
            ("alpha_end", self.alpha_end),
            ("boundary_weight", self.boundary_weight),
            ("convergence_tolerance", self.convergence_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.snap >= 0.0) {
            return Err(Error::Parameter(format!("snap must be non-negative, got {}", self.snap)));
        }
        if self.alpha_end > self.alpha_start {
            return Err(Error::Parameter("alpha_end exceeds alpha_start".into()));
        }
        Ok(())
    }

    /// Stiffness of each elastic level, geometric from `alpha_start` to `alpha_end`.
    pub fn alphas(&self) -> Vec<f64> {
        match self.levels {
            0 => Vec::new(),
            1 => vec![self.alpha_end],
            l => {
                let r = (self.alpha_end / self.alpha_start).powf(1.0 / (l - 1) as f64);
                (0..l).map(|i| self.alpha_start * r.powi(i as i32)).collect()
            }
        }
    }
}

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl Default for Similarity {
    fn default() -> Self {
        Similarity {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            scale: 1.0,
        }
    }
}

impl Similarity {
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Self {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = rotation[(i, j)];
            }
        }
        Similarity {
            rotation: r,
            translation: [translation.x, translation.y, translation.z],
            scale,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn apply<T: Real>(&self, p: &Point3<T>) -> Point3<T> {
        let q = Vector3::new(p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
        let r = self.rotation_matrix() * q * self.scale + self.translation_vector();
        Point3::new(T::lit(r.x), T::lit(r.y), T::lit(r.z))
    }

    /// Least-squares similarity taking `from[i]` to `to[i]` (Umeyama).
    pub fn fit(from: &[Vector3<f64>], to: &[Vector3<f64>], allow_scale: bool) -> Result<Self> {
        if from.len() != to.len() {
            return Err(Error::dimension(from.len(), to.len(), "similarity correspondences"));
        }
        if from.len() < 3 {
            return Err(Error::Rank("a similarity needs at least 3 correspondences".into()));
        }
        let n = from.len() as f64;
        let mf = from.iter().sum::<Vector3<f64>>() / n;
        let mt = to.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        let mut var = 0.0;
        for (a, b) in from.iter().zip(to) {
            let da = a - mf;
            cov += (b - mt) * da.transpose();
            var += da.norm_squared();
        }
        cov /= n;
        var /= n;
        if var <= 0.0 {
            return Err(Error::Rank("source points coincide".into()));
        }
        let svd = cov.svd(true, true);
        let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let mut s = Matrix3::identity();
        if (u * vt).determinant() < 0.0 {
            s[(2, 2)] = -1.0;
        }
        let rot = u * s * vt;
        let scale = if allow_scale {
            (svd.singular_values.component_mul(&s.diagonal())).sum() / var
        } else {
            1.0
        };
        Ok(Similarity::from_parts(rot, mt - rot * mf * scale, scale))
    }

    /// Rotation angle (rad) of `self.rotation · other.rotationᵀ`.
    pub fn rotation_distance(&self, other: &Similarity) -> f64 {
        let d = self.rotation_matrix() * other.rotation_matrix().transpose();
        ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceResult<T: Real> {
    pub deformed_reference: TriMesh<T>,
    /// Deformed-reference vertices to target surface.
    pub forward_stats: DistanceStats,
    /// Target vertices to deformed-reference surface.
    pub backward_stats: DistanceStats,
    pub converged: bool,
    /// Vertices excluded from the data term at the last elastic level.
    pub outliers: Vec<bool>,
    pub outlier_count: usize,
    pub similarity: Similarity,
    /// Elastic objective after each iteration, one list per level.
    pub objective_history: Vec<Vec<f64>>,
}

/// Registers `reference` onto `target` starting from the identity.
pub fn register_reference<T: Real>(
    reference: &TriMesh<T>,
    target: &TriMesh<T>,
    params: &RegistrationParams,
) -> Result<CorrespondenceResult<T>> {
    register_reference_from(reference, target, params, &Similarity::default())
}

/// Registers `reference` onto `target` starting from `initial`, for example
/// a similarity fitted to corresponding landmarks.
pub fn register_reference_from<T: Real>(
    reference: &TriMesh<T>,
    target: &TriMesh<T>,
    params: &RegistrationParams,
    initial: &Similarity,
) -> Result<CorrespondenceResult<T>> {
    params.validate()?;
    if reference.is_empty() || target.is_empty() {
        return Err(Error::Domain("registration needs two non-empty meshes".into()));
    }
    let index = SurfaceIndex::new(target)?;
    let base: Vec<Vector3<f64>> = reference.vertices().iter().map(to_f64).collect();
    let hints0 = vec![Vec::new(); base.len()];

    // stage 1
    let mut sim = *initial;
    let mut pos: Vec<Vector3<f64>> = base.iter().map(|v| apply(&sim, v)).collect();
    let (mut closest, mut tri) = query(&index, &pos, &hints0);
    let mut obj = sq_dist(&pos, &closest) / pos.len() as f64;
    if obj.sqrt() > params.init_radius {
        return Err(Error::Alignment(format!(
            "reference starts {:.3} mm (rms) from the target, beyond init_radius {}",
            obj.sqrt(),
            params.init_radius
        )));
    }
    let mut sim_converged = false;
    for it in 0..params.similarity_iterations {
        if obj == 0.0 {
            sim_converged = true;
            break;
        }
        let mut candidates = vec![Similarity::fit(&base, &closest, params.allow_scale)?];
        if let Some(s) = point_to_plane_step(target, &sim, &pos, &closest, &tri, params.allow_scale) {
            candidates.push(s);
        }
        let hints = tri_hints(&tri);
        let mut best: Option<(f64, Similarity, Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<usize>)> = None;
        for cand in candidates {
            let npos: Vec<Vector3<f64>> = base.iter().map(|v| apply(&cand, v)).collect();
            let (nc, nt) = query(&index, &npos, &hints);
            let nobj = sq_dist(&npos, &nc) / npos.len() as f64;
            if best.as_ref().is_none_or(|b| nobj < b.0) {
                best = Some((nobj, cand, npos, nc, nt));
            }
        }
        let (nobj, next, npos, nc, nt) = best.expect("at least one candidate");
        if nobj >= obj {
            sim_converged = true;
            break;
        }
        let change = obj - nobj;
        sim = next;
        pos = npos;
        closest = nc;
        tri = nt;
        obj = nobj;
        if change <= params.similarity_tolerance * obj || obj == 0.0 {
            log::debug!("similarity stage converged after {} iterations", it + 1);
            sim_converged = true;
            break;
        }
    }

    // stage 2
    let stiff = edge_stiffness(reference, params.boundary_weight);
    let n = pos.len();
    let mut disp = vec![Vector3::zeros(); n];
    let mut history = Vec::new();
    let mut outliers = vec![false; n];
    let mut levels_converged = true;
    let cur = |disp: &[Vector3<f64>]| -> Vec<Vector3<f64>> { pos.iter().zip(disp).map(|(p, d)| p + d).collect() };
    for alpha in params.alphas() {
        let (c0, t0) = query(&index, &cur(&disp), &tri_hints(&tri));
        closest = c0;
        tri = t0;
        let weights: Vec<f64> = cur(&disp)
            .iter()
            .zip(&closest)
            .enumerate()
            .map(|(i, (p, c))| {
                outliers[i] = (p - c).norm() > params.outlier;
                if outliers[i] { 0.0 } else { 1.0 }
            })
            .collect();
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::Alignment(format!(
                "no reference vertex lies within {} mm of the target",
                params.outlier
            )));
        }
        let mut e = objective(&cur(&disp), &closest, &weights, &disp, &stiff, alpha);
        let mut level = vec![e];
        let mut done = false;
        for _ in 0..params.iterations_per_level {
            let rhs: Vec<Vector3<f64>> = (0..n).map(|i| (closest[i] - pos[i]) * weights[i]).collect();
            let nd = solve_cg(&weights, &stiff, alpha, &rhs, &disp, params)?;
            let (nc, nt) = query(&index, &cur(&nd), &tri_hints(&tri));
            let ne = objective(&cur(&nd), &nc, &weights, &nd, &stiff, alpha);
            if ne > e {
                // inexact solve; keep the previous iterate
                done = true;
                break;
            }
            let change = e - ne;
            disp = nd;
            closest = nc;
            tri = nt;
            e = ne;
            level.push(e);
            if change <= params.level_tolerance * e.max(1e-300) {
                done = true;
                break;
            }
        }
        levels_converged &= done;
        history.push(level);
    }

    // stage 3
    let mut fin = cur(&disp);
    let (c, _) = query(&index, &fin, &tri_hints(&tri));
    for (p, q) in fin.iter_mut().zip(&c) {
        if (*p - q).norm() <= params.snap {
            *p = *q;
        }
    }
    let deformed = reference.with_vertices(fin.iter().map(from_f64).collect())?;
    let forward: Vec<f64> = fin
        .par_iter()
        .map(|p| index.distance(&from_f64::<T>(p)).as_f64())
        .collect();
    let forward_stats = DistanceStats::from_distances(&forward)?;
    let back_index = SurfaceIndex::new(&deformed)?;
    let backward_stats = DistanceStats::from_distances(&back_index.distances(target.vertices()))?;
    let converged = sim_converged && levels_converged && forward_stats.max <= params.convergence_tolerance;
    if !converged {
        log::warn!(
            "registration did not converge (similarity {sim_converged}, elastic {levels_converged}, forward max {:.3} mm)",
            forward_stats.max
        );
    }
    Ok(CorrespondenceResult {
        deformed_reference: deformed,
        forward_stats,
        backward_stats,
        converged,
        outlier_count: outliers.iter().filter(|o| **o).count(),
        outliers,
        similarity: sim,
        objective_history: history,
    })
}

/// Registration diagnostics, serialized as `Q.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub forward: DistanceStats,
    pub backward: DistanceStats,
    pub converged: bool,
    pub outlier_count: usize,
    /// Median target-to-reference distance, the headline figure.
    pub median: f64,
    #[serde(skip)]
    pub backward_map: Vec<f64>,
}

/// Recomputes forward and backward statistics of `result` against `target`.
/// The per-vertex backward map lives on the target vertices.
pub fn correspondence_quality<T: Real>(result: &CorrespondenceResult<T>, target: &TriMesh<T>) -> Result<QualityReport> {
    let fwd = SurfaceIndex::new(target)?;
    let forward = DistanceStats::from_distances(&fwd.distances(result.deformed_reference.vertices()))?;
    let back = SurfaceIndex::new(&result.deformed_reference)?;
    let backward = DistanceStats::from_distances(&back.distances(target.vertices()))?;
    Ok(QualityReport {
        median: backward.median,
        backward_map: backward.distances.clone(),
        forward: forward.summary(),
        backward: backward.summary(),
        converged: result.converged,
        outlier_count: result.outlier_count,
    })
}

fn to_f64<T: Real>(p: &Point3<T>) -> Vector3<f64> {
    Vector3::new(p.x.as_f64(), p.y.as_f64(), p.z.as_f64())
}

fn from_f64<T: Real>(v: &Vector3<f64>) -> Point3<T> {
    Point3::new(T::lit(v.x), T::lit(v.y), T::lit(v.z))
}

fn apply(s: &Similarity, v: &Vector3<f64>) -> Vector3<f64> {
    s.rotation_matrix() * v * s.scale + s.translation_vector()
}

/// One Gauss-Newton step of the point-to-plane similarity objective around
/// the current transform `sim`.
fn point_to_plane_step<T: Real>(
    target: &TriMesh<T>,
    sim: &Similarity,
    pos: &[Vector3<f64>],
    closest: &[Vector3<f64>],
    tri: &[usize],
    allow_scale: bool,
) -> Option<Similarity> {
    let n = pos.len() as f64;
    let centre = pos.iter().sum::<Vector3<f64>>() / n;
    let dim = if allow_scale { 7 } else { 6 };
    let mut a = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    let mut b = nalgebra::DVector::<f64>::zeros(dim);
    for ((p, c), &t) in pos.iter().zip(closest).zip(tri) {
        let [x, y, z] = target.triangle(t).map(|q| to_f64(&q));
        let nrm = (y - x).cross(&(z - x));
        let len = nrm.norm();
        if len == 0.0 {
            continue;
        }
        let nrm = nrm / len;
        let q = p - centre;
        let mut row = vec![0.0; dim];
        let w = q.cross(&nrm);
        row[..3].copy_from_slice(w.as_slice());
        row[3..6].copy_from_slice(nrm.as_slice());
        if allow_scale {
            row[6] = nrm.dot(&q);
        }
        let r = nrm.dot(&(p - c));
        for i in 0..dim {
            b[i] -= row[i] * r;
            for j in 0..dim {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    let x = a.cholesky()?.solve(&b);
    let rot = *nalgebra::Rotation3::new(Vector3::new(x[0], x[1], x[2])).matrix();
    let tau = Vector3::new(x[3], x[4], x[5]);
    let sigma = if allow_scale { x[6].exp() } else { 1.0 };
    // p' = centre + sigma * rot * (p - centre) + tau, composed with `sim`
    let r = rot * sim.rotation_matrix();
    let t = centre + sigma * rot * (sim.translation_vector() - centre) + tau;
    let s = Similarity::from_parts(r, t, sim.scale * sigma);
    (s.scale.is_finite() && s.scale > 0.0).then_some(s)
}

fn tri_hints(tri: &[usize]) -> Vec<Vec<usize>> {
    tri.iter().map(|&t| vec![t]).collect()
}

fn query<T: Real>(index: &SurfaceIndex<'_, T>, pos: &[Vector3<f64>], hints: &[Vec<usize>]) -> (Vec<Vector3<f64>>, Vec<usize>) {
    pos.par_iter()
        .zip(hints)
        .map(|(p, h)| {
            let c = index.closest_with_hint(&from_f64::<T>(p), h);
            (to_f64(&c.point), c.triangle)
        })
        .unzip()
}

fn sq_dist(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm_squared()).sum()
}

/// Reference edges with their stiffness multiplier.
fn edge_stiffness<T: Real>(mesh: &TriMesh<T>, boundary_weight: f64) -> Vec<(usize, usize, f64)> {
    let boundary = mesh.boundary_vertices();
    mesh.edges()
        .into_iter()
        .map(|[u, v]| (u, v, if boundary[u] || boundary[v] { boundary_weight } else { 1.0 }))
        .collect()
}

fn objective(
    cur: &[Vector3<f64>],
    closest: &[Vector3<f64>],
    weights: &[f64],
    disp: &[Vector3<f64>],
    stiff: &[(usize, usize, f64)],
    alpha: f64,
) -> f64 {
    let data: f64 = cur.iter().zip(closest).zip(weights).map(|((p, c), w)| w * (p - c).norm_squared()).sum();
    let smooth: f64 = stiff.iter().map(|&(u, v, k)| k * (disp[u] - disp[v]).norm_squared()).sum();
    data + alpha * smooth
}

/// Solves `(W + αL) D = rhs` for the three coordinates at once with
/// Jacobi-preconditioned conjugate gradients, warm-started at `x0`.
fn solve_cg(
    weights: &[f64],
    stiff: &[(usize, usize, f64)],
    alpha: f64,
    rhs: &[Vector3<f64>],
    x0: &[Vector3<f64>],
    params: &RegistrationParams,
) -> Result<Vec<Vector3<f64>>> {
    let n = weights.len();
    let mut diag = weights.to_vec();
    for &(u, v, k) in stiff {
        diag[u] += alpha * k;
        diag[v] += alpha * k;
    }
    let apply = |x: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        let mut y: Vec<Vector3<f64>> = x.iter().zip(weights).map(|(xi, w)| xi * *w).collect();
        for &(u, v, k) in stiff {
            let d = (x[u] - x[v]) * (alpha * k);
            y[u] += d;
            y[v] -= d;
        }
        y
    };
    let dot = |a: &[Vector3<f64>], b: &[Vector3<f64>]| -> Vector3<f64> {
        a.iter().zip(b).fold(Vector3::zeros(), |acc, (x, y)| acc + x.component_mul(y))
    };
    let precond = |r: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        r.iter()
            .zip(&diag)
            .map(|(ri, d)| if *d > 0.0 { ri / *d } else { Vector3::zeros() })
            .collect()
    };
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<Vector3<f64>> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = dot(rhs, rhs).map(f64::sqrt);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for _ in 0..params.cg_iterations {
        let rn = dot(&r, &r).map(f64::sqrt);
        if (0..3).all(|c| rn[c] <= params.cg_tolerance * bnorm[c].max(1e-300) || rn[c] == 0.0) {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        let step = Vector3::from_fn(|c, _| if pap[c] > 0.0 { rz[c] / pap[c] } else { 0.0 });
        for i in 0..n {
            x[i] += p[i].component_mul(&step);
            r[i] -= ap[i].component_mul(&step);
        }
        z = precond(&r);
        let nrz = dot(&r, &z);
        let beta = Vector3::from_fn(|c, _| if rz[c] > 0.0 { nrz[c] / rz[c] } else { 0.0 });
        for i in 0..n {
            p[i] = z[i] + p[i].component_mul(&beta);
        }
        rz = nrz;
    }
    let rn = dot(&r, &r).map(f64::sqrt);
    if (0..3).all(|c| rn[c] <= 1e-6 * bnorm[c].max(1e-300)) {
        log::debug!("elastic solve stopped at the iteration limit with residual {rn:?}");
        return Ok(x);
    }
    Err(Error::numerical(
        "elastic solve",
        format!("conjugate gradients did not converge (residual {:?})", rn.as_slice()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    /// Height-field patch over `[x0, x1] × [z0, z1]` with `nx × nz` vertices.
    fn patch(nx: usize, nz: usize, x: (f64, f64), z: (f64, f64), h: impl Fn(f64, f64) -> f64) -> TriMesh<f64> {
        let mut v = Vec::new();
        for j in 0..nz {
            for i in 0..nx {
                let px = x.0 + (x.1 - x.0) * i as f64 / (nx - 1) as f64;
                let pz = z.0 + (z.1 - z.0) * j as f64 / (nz - 1) as f64;
                v.push(Point3::new(px, h(px, pz), pz));
            }
        }
        let mut t = Vec::new();
        for j in 0..nz - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                t.push([a, a + 1, a + nx + 1]);
                t.push([a, a + nx + 1, a + nx]);
            }
        }
        TriMesh::new(v, t).unwrap()
    }

    fn bump(x: f64, z: f64) -> f64 {
        10.0 * (-(x * x + z * z) / 200.0).exp() + 0.002 * x * x
    }

    #[test]
    fn self_registration_is_identity() {
        let m = patch(15, 15, (-20.0, 20.0), (-20.0, 20.0), bump);
        let r = register_reference(&m, &m, &RegistrationParams::default()).unwrap();
        assert_eq!(r.forward_stats.mean, 0.0);
        assert_eq!(r.deformed_reference.triangles(), m.triangles());
        assert!(r.backward_stats.max < 1e-9);
        assert!(r.converged);
        for (a, b) in r.deformed_reference.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn umeyama_recovers_exact_transform() {
        let pts: Vec<Vector3<f64>> = (0..10)
            .map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.3, (i as f64).sin() * 4.0))
            .collect();
        let rot = *Rotation3::from_euler_angles(0.3, -0.2, 0.9).matrix();
        let truth = Similarity::from_parts(rot, Vector3::new(1.0, -2.0, 3.0), 1.3);
        let moved: Vec<_> = pts.iter().map(|p| apply(&truth, p)).collect();
        let fit = Similarity::fit(&pts, &moved, true).unwrap();
        assert!(fit.rotation_distance(&truth) < 1e-10);
        assert!((fit.scale - 1.3).abs() < 1e-12);
        assert!((fit.translation_vector() - truth.translation_vector()).norm() < 1e-10);
    }

    #[test]
    fn recovers_known_similarity() {
        let m = patch(21, 21, (-20.0, 20.0), (-20.0, 20.0), bump);
        let rot = *Rotation3::from_euler_angles(0.05, 0.08, -0.06).matrix();
        let truth = Similarity::from_parts(rot, Vector3::new(1.5, -1.0, 0.8), 1.04);
        let target = m.map_vertices(|p| truth.apply(p));
        let r = register_reference(&m, &target, &RegistrationParams::default()).unwrap();
        assert!(r.similarity.rotation_distance(&truth) < 1e-3);
        assert!((r.similarity.translation_vector() - truth.translation_vector()).norm() < 1e-3);
        assert!((r.similarity.scale - 1.04).abs() < 1e-3);
        assert!(r.forward_stats.mean < 1e-6);
    }

    #[test]
    fn elastic_objective_is_monotone_and_topology_kept() {
        let reference = patch(15, 15, (-20.0, 20.0), (-20.0, 20.0), bump);
        let target = patch(31, 31, (-20.0, 20.0), (-20.0, 20.0), |x, z| bump(x, z) + 1.5 * (x / 12.0).sin() * (z / 15.0).cos());
        let r = register_reference(&reference, &target, &RegistrationParams::default()).unwrap();
        for level in &r.objective_history {
            for w in level.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{level:?}");
            }
        }
        assert_eq!(r.deformed_reference.triangles(), reference.triangles());
        assert!(r.forward_stats.mean < 1e-3, "{:?}", r.forward_stats.summary());
        let q = correspondence_quality(&r, &target).unwrap();
        assert_eq!(q.backward_map.len(), target.num_vertices());
        assert!(q.median < 0.5, "{}", q.median);
    }

    #[test]
    fn uncovered_region_skews_backward_stats() {
        let reference = patch(15, 15, (-20.0, 20.0), (-20.0, 20.0), bump);
        let target = patch(41, 31, (-20.0, 30.0), (-20.0, 20.0), bump);
        let r = register_reference(&reference, &target, &RegistrationParams::default()).unwrap();
        let q = correspondence_quality(&r, &target).unwrap();
        assert!(q.forward.mean < 1e-3);
        assert!(q.backward.mean > 3.0 * q.backward.median, "{:?}", q.backward);
    }

    #[test]
    fn determinism() {
        let reference = patch(12, 12, (-20.0, 20.0), (-20.0, 20.0), bump);
        let target = patch(20, 20, (-20.0, 20.0), (-20.0, 20.0), |x, z| bump(x, z) + 0.05 * x);
        let p = RegistrationParams::default();
        let a = register_reference(&reference, &target, &p).unwrap();
        let b = register_reference(&reference, &target, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn far_target_is_alignment_error() {
        let m = patch(8, 8, (-20.0, 20.0), (-20.0, 20.0), bump);
        let far = m.map_vertices(|p| p + Vector3::new(500.0, 0.0, 0.0));
        assert!(matches!(register_reference(&m, &far, &RegistrationParams::default()), Err(Error::Alignment(_))));
    }

    #[test]
    fn alpha_schedule() {
        let a = RegistrationParams::default().alphas();
        assert_eq!(a.len(), 4);
        assert!((a[0] - 100.0).abs() < 1e-12 && (a[3] - 1.0).abs() < 1e-12);
    }
}
