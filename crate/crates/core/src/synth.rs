//! Synthetic paired skull/face datasets with known linear ground truth.
//!
//! Latent scores drive both the skull landmark coordinates and the face
//! vertex coordinates through fixed loading matrices. Skull noise mixes a
//! low-rank correlated part with an independent part; face noise is
//! independent per coordinate.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{save_dataset, Entry};
use crate::error::{Error, Result};
use crate::landmarks::{Landmark, LandmarkSet};
use crate::mesh::{save_mesh, MeshFormat, TriMesh};
use crate::shape_table::{unflatten, CoordinateLayout};

/// (midplane, lateral) points added by each template stage.
pub const STAGE_INCREMENTS: [(usize, usize); 3] = [(13, 13), (10, 45), (24, 140)];

/// Cumulative (midplane, lateral) counts of template stage `stage`.
pub fn stage_counts(stage: usize) -> (usize, usize) {
    STAGE_INCREMENTS[..=stage.min(2)]
        .iter()
        .fold((0, 0), |(m, l), (dm, dl)| (m + dm, l + dl))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n: usize,
    pub latent_dim: usize,
    /// Noise standard deviation per coordinate (mm), skull and face.
    pub noise_sigma: f64,
    /// Skull template stage: 0, 1 or 2 (65, 220 or 688 coordinates).
    pub skull_stage: usize,
    pub face_vertices: usize,
    /// Standard deviation (mm) of the leading latent score.
    pub latent_scale: f64,
    /// Variance ratio between consecutive latents.
    pub latent_decay: f64,
    /// Rank of the correlated part of the skull noise.
    pub skull_noise_modes: usize,
    /// Variance ratio between consecutive skull noise modes.
    pub skull_noise_decay: f64,
    /// Share of the skull noise variance that is independent per coordinate.
    pub skull_noise_independent: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n: 50,
            latent_dim: 8,
            noise_sigma: 0.5,
            skull_stage: 2,
            face_vertices: 1741,
            latent_scale: 15.0,
            latent_decay: 0.7,
            skull_noise_modes: 60,
            skull_noise_decay: 0.9,
            skull_noise_independent: 0.1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.latent_dim == 0 || self.latent_dim + 1 >= self.n {
            return bad(format!(
                "latent dimension {} must satisfy 1 ≤ k < n − 1 with n = {}",
                self.latent_dim, self.n
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma {} must be ≥ 0", self.noise_sigma));
        }
        if self.skull_stage > 2 {
            return bad(format!("skull_stage {} must be 0, 1 or 2", self.skull_stage));
        }
        if self.face_vertices < 4 {
            return bad(format!("face_vertices {} is below 4", self.face_vertices));
        }
        if !(self.latent_scale > 0.0) || !(self.latent_decay > 0.0 && self.latent_decay <= 1.0) {
            return bad("latent_scale must be > 0 and latent_decay in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.skull_noise_independent)
            || !(self.skull_noise_decay > 0.0 && self.skull_noise_decay <= 1.0)
        {
            return bad("skull noise mixing parameters out of range".into());
        }
        if self.skull_noise_modes == 0 && self.skull_noise_independent < 1.0 {
            return bad("correlated skull noise needs at least one mode".into());
        }
        Ok(())
    }
}

/// Generating quantities, kept for test oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub latent_variances: Vec<f64>,
    /// `n × k`, one row per entry.
    pub latents: Vec<Vec<f64>>,
    /// `k × p`
    pub skull_loadings: Vec<Vec<f64>>,
    /// `k × q`
    pub face_loadings: Vec<Vec<f64>>,
    pub skull_mean: Vec<f64>,
    pub face_mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    pub entries: Vec<Entry<f64>>,
    pub truth: GroundTruth,
    pub skull_template: LandmarkSet<f64>,
    pub skull_mesh: TriMesh<f64>,
    pub face_template: TriMesh<f64>,
}

const SKULL_AXES: [f64; 3] = [70.0, 95.0, 75.0];
const CAP_THETA: f64 = 0.75 * PI;

fn cap_point(theta: f64, phi: f64) -> Point3<f64> {
    let [a, b, c] = SKULL_AXES;
    let x = if phi <= 0.0 || phi >= PI { 0.0 } else { a * theta.sin() * phi.sin() };
    Point3::new(x, b * theta.sin() * phi.cos(), c * theta.cos())
}

/// Radical-inverse low-discrepancy sequence.
fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Half skull cap (x ≥ 0) with the midplane as its boundary curve.
pub fn skull_mesh() -> TriMesh<f64> {
    let (rows, cols) = (24usize, 32usize);
    let mut v = vec![cap_point(0.0, 0.0)];
    for i in 1..=rows {
        let theta = CAP_THETA * i as f64 / rows as f64;
        for j in 0..=cols {
            v.push(cap_point(theta, PI * j as f64 / cols as f64));
        }
    }
    let at = |i: usize, j: usize| 1 + (i - 1) * (cols + 1) + j;
    let mut t = Vec::new();
    for j in 0..cols {
        t.push([0, at(1, j + 1), at(1, j)]);
    }
    for i in 1..rows {
        for j in 0..cols {
            t.push([at(i, j), at(i, j + 1), at(i + 1, j + 1)]);
            t.push([at(i, j), at(i + 1, j + 1), at(i + 1, j)]);
        }
    }
    TriMesh::new(v, t).expect("skull cap is valid")
}

/// Skull landmark template for `stage`, ordered by stage; within a stage
/// midplane points come first.
pub fn skull_template(stage: usize) -> LandmarkSet<f64> {
    let mut points = Vec::new();
    let (mut mid_i, mut lat_i) = (0usize, 0usize);
    for (g, &(dm, dl)) in STAGE_INCREMENTS[..=stage.min(2)].iter().enumerate() {
        for _ in 0..dm {
            mid_i += 1;
            // s in (-1, 1): front half for s > 0, back half for s < 0
            let s = 2.0 * radical_inverse(mid_i, 2) - 1.0;
            let theta = 0.95 * CAP_THETA * s.abs();
            let phi = if s >= 0.0 { 0.0 } else { PI };
            points.push(Landmark {
                id: format!("m{}", mid_i - 1),
                position: cap_point(theta, phi),
                midplane: true,
                generation: g as u32,
            });
        }
        for _ in 0..dl {
            lat_i += 1;
            let theta = CAP_THETA * (0.1 + 0.85 * radical_inverse(lat_i, 2));
            let phi = PI * (0.08 + 0.84 * radical_inverse(lat_i, 3));
            points.push(Landmark {
                id: format!("l{}", lat_i - 1),
                position: cap_point(theta, phi),
                midplane: false,
                generation: g as u32,
            });
        }
    }
    LandmarkSet::new(points, vec![]).expect("template ids are unique")
}

/// Coarse anatomical landmark triangulation of the skull cap: the pole plus
/// three rings of four points, the first and last of each ring on the
/// midplane. Used as the starting template for geodesic densification.
pub fn anatomical_template() -> LandmarkSet<f64> {
    let mut points = vec![Landmark {
        id: "a0".into(),
        position: cap_point(0.0, 0.0),
        midplane: true,
        generation: 0,
    }];
    for ring in 1..=3 {
        let theta = 0.95 * CAP_THETA * ring as f64 / 3.0;
        for k in 0..4 {
            points.push(Landmark {
                id: format!("a{}", points.len()),
                position: cap_point(theta, PI * k as f64 / 3.0),
                midplane: k == 0 || k == 3,
                generation: 0,
            });
        }
    }
    let id = |ring: usize, k: usize| if ring == 0 { "a0".to_string() } else { format!("a{}", 1 + 4 * (ring - 1) + k) };
    let mut tri = Vec::new();
    for k in 0..3 {
        tri.push([id(0, 0), id(1, k), id(1, k + 1)]);
    }
    for ring in 1..3 {
        for k in 0..3 {
            tri.push([id(ring, k), id(ring + 1, k), id(ring + 1, k + 1)]);
            tri.push([id(ring, k), id(ring + 1, k + 1), id(ring, k + 1)]);
        }
    }
    LandmarkSet::new(points, tri).expect("anatomical template is consistent")
}

/// Planar-parameter coordinates `(u, w)` in [0, 1]² of every face vertex.
fn face_grid(nv: usize) -> (Vec<(f64, f64)>, Vec<[usize; 3]>) {
    let cols = ((nv as f64).sqrt().floor() as usize).max(2);
    let full = nv / cols;
    let rem = nv % cols;
    let rows = full + usize::from(rem > 0);
    let mut uv = Vec::with_capacity(nv);
    for i in 0..rows {
        let count = if i < full { cols } else { rem };
        for j in 0..count {
            uv.push((j as f64 / (cols - 1) as f64, i as f64 / (rows - 1).max(1) as f64));
        }
    }
    let mut tri = Vec::new();
    for i in 0..rows - 1 {
        let upper = if i + 1 < full { cols } else { rem };
        let a0 = i * cols;
        let b0 = (i + 1) * cols;
        for j in 0..cols - 1 {
            if j + 1 < upper {
                tri.push([a0 + j, a0 + j + 1, b0 + j + 1]);
                tri.push([a0 + j, b0 + j + 1, b0 + j]);
            } else if j < upper {
                tri.push([a0 + j, a0 + j + 1, b0 + j]);
            }
        }
    }
    (uv, tri)
}

fn face_position(u: f64, w: f64) -> Point3<f64> {
    let x = 70.0 * u;
    let z = 200.0 * w - 100.0;
    let nose = 18.0 * (-(x * x + z * z) / (2.0 * 12.0 * 12.0)).exp();
    Point3::new(x, 100.0 - x * x / 160.0 - z * z / 240.0 + nose, z)
}

/// Half-face template: a height field facing +y with its midline at x = 0.
pub fn face_template(nv: usize) -> TriMesh<f64> {
    let (uv, tri) = face_grid(nv);
    let v = uv.iter().map(|&(u, w)| face_position(u, w)).collect();
    TriMesh::new(v, tri).expect("face template is valid")
}

fn normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // row-major draw order
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Smooth unit-RMS displacement fields over the face parameter domain.
fn smooth_loadings(rng: &mut ChaCha8Rng, k: usize, uv: &[(f64, f64)]) -> DMatrix<f64> {
    const BUMPS: usize = 8;
    let q = uv.len() * 3;
    let mut w = DMatrix::zeros(k, q);
    for j in 0..k {
        for c in 0..3 {
            let bumps: Vec<(f64, f64, f64, f64)> = (0..BUMPS)
                .map(|_| {
                    let cu: f64 = rng.random_range(-0.1..1.1);
                    let cw: f64 = rng.random_range(-0.1..1.1);
                    let s: f64 = rng.random_range(0.15..0.4);
                    let a: f64 = rng.sample(StandardNormal);
                    (cu, cw, s, a)
                })
                .collect();
            let field: Vec<f64> = uv
                .iter()
                .map(|&(u, v)| {
                    bumps
                        .iter()
                        .map(|&(cu, cw, s, a)| a * (-((u - cu).powi(2) + (v - cw).powi(2)) / (2.0 * s * s)).exp())
                        .sum()
                })
                .collect();
            let rms = (field.iter().map(|f| f * f).sum::<f64>() / field.len() as f64).sqrt();
            for (i, f) in field.iter().enumerate() {
                w[(j, 3 * i + c)] = f / rms;
            }
        }
    }
    w
}

fn vec_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Draws a dataset. Every random quantity is drawn at the largest template
/// stage, so datasets differing only in `skull_stage` share latents, face
/// data and the leading skull coordinates.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, k) = (spec.n, spec.latent_dim);
    let full_template = skull_template(2);
    let full_layout = CoordinateLayout::from_landmarks(&full_template);
    let p_full = full_layout.total_dim();
    let skull = skull_template(spec.skull_stage);
    let skull_layout = CoordinateLayout::from_landmarks(&skull);
    let p = skull_layout.total_dim();

    let face = face_template(spec.face_vertices);
    let (uv, _) = face_grid(spec.face_vertices);
    let face_layout = CoordinateLayout::for_mesh_vertices(face.num_vertices());
    let q = face_layout.total_dim();

    let variances: Vec<f64> = (0..k)
        .map(|j| spec.latent_scale.powi(2) * spec.latent_decay.powi(j as i32))
        .collect();
    let mut b = normals(&mut rng, n, k);
    for j in 0..k {
        b.column_mut(j).scale_mut(variances[j].sqrt());
    }
    let v = normals(&mut rng, k, p_full);
    let w = smooth_loadings(&mut rng, k, &uv);

    let m = spec.skull_noise_modes;
    let d: Vec<f64> = (0..m).map(|i| spec.skull_noise_decay.powi(i as i32)).collect();
    let dsum: f64 = d.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let mut e = normals(&mut rng, m, p_full);
    for i in 0..m {
        e.row_mut(i).scale_mut((d[i] / dsum).sqrt());
    }
    let coef = normals(&mut rng, n, m);
    let iid_skull = normals(&mut rng, n, p_full);
    let iid_face = normals(&mut rng, n, q);

    let sigma = spec.noise_sigma;
    let f = spec.skull_noise_independent;
    let skull_noise = (&coef * &e) * (sigma * (1.0 - f).sqrt()) + iid_skull * (sigma * f.sqrt());
    let x_full = &b * &v + skull_noise;
    let y = &b * &w + iid_face * sigma;

    let x_mean_full = crate::shape_table::flatten(&full_template, &full_layout)?;
    let x_mean = x_mean_full.rows(0, p).into_owned();
    let y_mean = crate::shape_table::flatten_mesh(&face, &face_layout)?;

    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let xi = DVector::from_iterator(p, x_full.row(i).iter().take(p).copied());
        let yi = y.row(i).transpose();
        let skull_pts = unflatten(&xi, &x_mean, &skull_layout)?;
        let face_pts = unflatten(&yi, &y_mean, &face_layout)?;
        let id = format!("s{i:03}");
        let mesh = face.with_vertices(face_pts)?;
        entries.push(Entry {
            group: id.clone(),
            id,
            skull: skull.with_positions(&skull_pts)?,
            deformed: mesh.clone(),
            face: mesh,
        });
    }
    Ok(SynthDataset {
        spec: spec.clone(),
        entries,
        truth: GroundTruth {
            latent_variances: variances,
            latents: vec_rows(&b),
            skull_loadings: vec_rows(&v.columns(0, p).into_owned()),
            face_loadings: vec_rows(&w),
            skull_mean: x_mean.iter().copied().collect(),
            face_mean: y_mean.iter().copied().collect(),
        },
        skull_template: skull,
        skull_mesh: skull_mesh(),
        face_template: face,
    })
}

/// Writes the dataset directory: index, per-entry files, templates (including
/// the coarse `skull_anatomical.json` triangulation),
/// `truth.json` and `spec.json`.
pub fn write_dataset(data: &SynthDataset, dir: &Path) -> Result<()> {
    save_dataset(&data.entries, dir)?;
    save_mesh(&data.face_template, &dir.join("face_template.ply"), MeshFormat::Ply)?;
    save_mesh(&data.skull_mesh, &dir.join("skull_template.ply"), MeshFormat::Ply)?;
    data.skull_template.save(&dir.join("skull_template.json"))?;
    anatomical_template().save(&dir.join("skull_anatomical.json"))?;
    for (name, text) in [
        ("truth.json", serde_json::to_string(&data.truth)?),
        ("spec.json", serde_json::to_string_pretty(&data.spec)?),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Minimum-norm least-squares coefficients of `y` on `x` via a full SVD.
pub fn oracle_regression(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * (x.nrows().max(x.ncols()) as f64);
    svd.pseudo_inverse(tol).expect("both factors were computed") * y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape_table::assemble;

    fn small(seed: u64, sigma: f64) -> SynthSpec {
        SynthSpec {
            seed,
            n: 12,
            latent_dim: 3,
            noise_sigma: sigma,
            skull_stage: 0,
            face_vertices: 60,
            skull_noise_modes: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn anatomical_template_densifies_on_the_cap() {
        use crate::geodesics::{densify, DensifyParams};
        let t = anatomical_template();
        assert_eq!(t.len(), 13);
        assert_eq!(t.connectivity().len(), 15);
        let mesh = skull_mesh();
        let (dense, report) = densify(&mesh, &t, &DensifyParams::with_iterations(1)).unwrap();
        assert_eq!(dense.len(), 13 + report.passes[0].added);
        assert!(report.passes[0].added > 20);
        for p in dense.points().iter().filter(|p| p.midplane) {
            assert!(p.position.x.abs() <= 1e-3, "{} at x = {}", p.id, p.position.x);
        }
    }

    #[test]
    fn stage_coordinate_counts() {
        for (stage, dim) in [(0, 65), (1, 220), (2, 688)] {
            let t = skull_template(stage);
            assert_eq!(CoordinateLayout::from_landmarks(&t).total_dim(), dim);
        }
        assert_eq!(stage_counts(2), (47, 198));
        assert_eq!(face_template(1741).num_vertices(), 1741);
    }

    #[test]
    fn template_midplane_points_on_plane() {
        let t = skull_template(2);
        assert!(t.points().iter().filter(|p| p.midplane).all(|p| p.position.x == 0.0));
        assert!(t.points().iter().filter(|p| !p.midplane).all(|p| p.position.x > 0.0));
    }

    #[test]
    fn noiseless_tables_have_rank_k() {
        let d = generate(&small(1, 0.0)).unwrap();
        let pairs: Vec<_> = d.entries.iter().map(|e| (e.skull.clone(), e.deformed.clone())).collect();
        let t = assemble(&pairs).unwrap();
        for m in [&t.x, &t.y] {
            let sv = m.clone().singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(s[2] > 1e-6 * s[0]);
            assert!(s[3] < 1e-9 * s[0], "{:?}", &s[..5]);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(5, 0.5)).unwrap();
        let b = generate(&small(5, 0.5)).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(a.truth, b.truth);
        let c = generate(&small(6, 0.5)).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn stages_share_draws() {
        let a = generate(&small(2, 0.5)).unwrap();
        let b = generate(&SynthSpec { skull_stage: 2, ..small(2, 0.5) }).unwrap();
        for (ea, eb) in a.entries.iter().zip(&b.entries) {
            assert_eq!(ea.face, eb.face);
            assert_eq!(ea.skull.points(), &eb.skull.points()[..26]);
        }
    }

    #[test]
    fn midplane_constraint_holds() {
        let d = generate(&small(3, 0.5)).unwrap();
        for e in &d.entries {
            assert!(e.skull.points().iter().filter(|p| p.midplane).all(|p| p.position.x == 0.0));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&SynthSpec { latent_dim: 11, ..small(0, 0.0) }).is_err());
        assert!(generate(&SynthSpec { noise_sigma: -1.0, ..small(0, 0.0) }).is_err());
        assert!(generate(&SynthSpec { skull_stage: 3, ..small(0, 0.0) }).is_err());
    }

    #[test]
    fn oracle_regression_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = normals(&mut rng, 8, 5);
        let y = normals(&mut rng, 8, 4);
        let b = oracle_regression(&x, &y);
        let res = &y - &x * &b;
        assert!((x.transpose() * &res).abs().max() < 1e-10);
        let ne = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!((&b - &ne).abs().max() < 1e-8);
        let id = oracle_regression(&x, &x);
        assert!((&x * id - &x).abs().max() < 1e-10);
    }

    #[test]
    fn latent_covariance_converges() {
        let spec = SynthSpec {
            n: 10_000,
            face_vertices: 4,
            skull_noise_modes: 1,
            ..small(4, 0.0)
        };
        let d = generate(&spec).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = d.truth.latents.iter().map(|r| r[j]).collect();
            let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            let want = d.truth.latent_variances[j];
            assert!((var - want).abs() / want < 0.05, "latent {j}: {var} vs {want}");
        }
    }
}
