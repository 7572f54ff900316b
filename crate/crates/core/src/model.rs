//! JSON model files shared by both predictors.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrr::LrrModel;
use crate::mesh::TriMesh;
use crate::pca::JointPcaModel;
use crate::scalar::Real;
use crate::shape_table::CoordinateLayout;

pub const FORMAT_VERSION: u32 = 1;

/// A fitted face predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T: Real> {
    Pca(JointPcaModel<T>),
    Lrr(LrrModel<T>),
}

impl<T: Real> Model<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Pca(_) => "pca",
            Model::Lrr(_) => "lrr",
        }
    }

    pub fn components(&self) -> usize {
        match self {
            Model::Pca(m) => m.num_components(),
            Model::Lrr(m) => m.r(),
        }
    }

    pub fn skull_layout(&self) -> &CoordinateLayout {
        match self {
            Model::Pca(m) => &m.skull_layout,
            Model::Lrr(m) => &m.skull_layout,
        }
    }

    pub fn face_layout(&self) -> &CoordinateLayout {
        match self {
            Model::Pca(m) => &m.face_layout,
            Model::Lrr(m) => &m.face_layout,
        }
    }

    /// Predicted face positions from raw skull coordinates, using every component.
    pub fn predict(&self, skull: &DVector<T>) -> Result<Vec<Point3<T>>> {
        match self {
            Model::Pca(m) => m.predict(skull, m.num_components()),
            Model::Lrr(m) => Ok(m.predict(skull)?.positions),
        }
    }
}

/// On-disk model: the predictor plus the face topology used to write meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile<T: Real> {
    pub model: Model<T>,
    pub face_triangles: Vec<[usize; 3]>,
}

impl<T: Real> ModelFile<T> {
    pub fn predict_mesh(&self, skull: &DVector<T>) -> Result<TriMesh<T>> {
        let pts = self.model.predict(skull)?;
        let (mesh, _) = TriMesh::from_parts(pts, self.face_triangles.clone())?;
        Ok(mesh)
    }
}

#[derive(Serialize, Deserialize)]
struct Raw {
    format_version: u32,
    kind: String,
    skull_layout: CoordinateLayout,
    face_layout: CoordinateLayout,
    x_mean: Vec<f64>,
    y_mean: Vec<f64>,
    face_triangles: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pca: Option<RawPca>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lrr: Option<RawLrr>,
}

#[derive(Serialize, Deserialize)]
struct RawPca {
    p: usize,
    eigenvalues: Vec<f64>,
    /// One entry per mode.
    components: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawLrr {
    latent_vectors: Vec<Vec<f64>>,
    score_norms: Vec<f64>,
    response_weights: Vec<Vec<f64>>,
    /// Rows of `B̂`; optional because it is implied by the two fields above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coefficients: Option<Vec<Vec<f64>>>,
}

fn vec_f64<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn columns<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().map(|x| x.as_f64()).collect()).collect()
}

fn rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

fn from_columns<T: Real>(cols: &[Vec<f64>], nrows: usize, what: &str) -> Result<DMatrix<T>> {
    for c in cols {
        if c.len() != nrows {
            return Err(Error::dimension(nrows, c.len(), what));
        }
    }
    Ok(DMatrix::from_fn(nrows, cols.len(), |i, j| T::lit(cols[j][i])))
}

fn from_rows<T: Real>(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<T>> {
    for r in rows {
        if r.len() != ncols {
            return Err(Error::dimension(ncols, r.len(), what));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| T::lit(rows[i][j])))
}

fn dvec<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x)))
}

/// Serializes a model. `with_coefficients` also stores the full `B̂` of an LRR model.
pub fn model_to_json<T: Real>(file: &ModelFile<T>, with_coefficients: bool) -> Result<String> {
    let (skull_layout, face_layout, x_mean, y_mean) = match &file.model {
        Model::Pca(m) => (&m.skull_layout, &m.face_layout, &m.x_mean, &m.y_mean),
        Model::Lrr(m) => (&m.skull_layout, &m.face_layout, &m.x_mean, &m.y_mean),
    };
    let mut raw = Raw {
        format_version: FORMAT_VERSION,
        kind: file.model.kind().into(),
        skull_layout: skull_layout.clone(),
        face_layout: face_layout.clone(),
        x_mean: vec_f64(x_mean),
        y_mean: vec_f64(y_mean),
        face_triangles: file.face_triangles.clone(),
        pca: None,
        lrr: None,
    };
    match &file.model {
        Model::Pca(m) => {
            raw.pca = Some(RawPca {
                p: m.p,
                eigenvalues: m.eigenvalues.iter().map(|x| x.as_f64()).collect(),
                components: columns(&m.components),
            })
        }
        Model::Lrr(m) => {
            raw.lrr = Some(RawLrr {
                latent_vectors: columns(&m.latent_vectors),
                score_norms: m.score_norms.iter().map(|x| x.as_f64()).collect(),
                response_weights: rows(&m.response_weights),
                coefficients: with_coefficients.then(|| rows(&m.coefficients)),
            })
        }
    }
    Ok(serde_json::to_string(&raw)?)
}

pub fn model_from_json<T: Real>(text: &str, origin: &str) -> Result<ModelFile<T>> {
    let raw: Raw = serde_json::from_str(text).map_err(|e| Error::format(origin, e.line(), e.to_string()))?;
    if raw.format_version != FORMAT_VERSION {
        return Err(Error::format(
            origin,
            0,
            format!("unsupported model format version {}", raw.format_version),
        ));
    }
    let p = raw.skull_layout.total_dim();
    let q = raw.face_layout.total_dim();
    if raw.x_mean.len() != p {
        return Err(Error::dimension(p, raw.x_mean.len(), "skull template"));
    }
    if raw.y_mean.len() != q {
        return Err(Error::dimension(q, raw.y_mean.len(), "face template"));
    }
    let model = match (raw.kind.as_str(), raw.pca, raw.lrr) {
        ("pca", Some(pc), None) => {
            if pc.p != p || pc.eigenvalues.len() != pc.components.len() {
                return Err(Error::format(origin, 0, "inconsistent PCA block"));
            }
            Model::Pca(JointPcaModel {
                eigenvalues: pc.eigenvalues.iter().map(|x| T::lit(*x)).collect(),
                components: from_columns(&pc.components, p + q, "PCA mode length")?,
                p,
                x_mean: dvec(&raw.x_mean),
                y_mean: dvec(&raw.y_mean),
                skull_layout: raw.skull_layout,
                face_layout: raw.face_layout,
            })
        }
        ("lrr", None, Some(l)) => {
            let r = l.score_norms.len();
            if l.latent_vectors.len() != r || l.response_weights.len() != r {
                return Err(Error::format(origin, 0, "inconsistent LRR block"));
            }
            if l.score_norms.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::format(origin, 0, "LRR score norms must be positive"));
            }
            let latent_vectors: DMatrix<T> = from_columns(&l.latent_vectors, p, "latent vector length")?;
            let response_weights: DMatrix<T> = from_rows(&l.response_weights, q, "response weight length")?;
            let implied = &latent_vectors * &response_weights;
            let coefficients = match l.coefficients {
                Some(rows) => {
                    let stored: DMatrix<T> = from_rows(&rows, q, "coefficient row length")?;
                    if stored.nrows() != p {
                        return Err(Error::dimension(p, stored.nrows(), "coefficient rows"));
                    }
                    let scale = implied.norm().as_f64().max(f64::MIN_POSITIVE);
                    let diff = (&stored - &implied).norm().as_f64();
                    if diff > 1e-8 * scale {
                        return Err(Error::numerical(
                            "model load",
                            format!("stored coefficients disagree with latent vectors (relative {:.3e})", diff / scale),
                        ));
                    }
                    stored
                }
                None => implied,
            };
            Model::Lrr(LrrModel {
                latent_vectors,
                score_norms: l.score_norms.iter().map(|x| T::lit(*x)).collect(),
                response_weights,
                coefficients,
                x_mean: dvec(&raw.x_mean),
                y_mean: dvec(&raw.y_mean),
                skull_layout: raw.skull_layout,
                face_layout: raw.face_layout,
            })
        }
        (kind, _, _) => return Err(Error::format(origin, 0, format!("model kind {kind:?} does not match its payload"))),
    };
    for t in &raw.face_triangles {
        if let Some(&bad) = t.iter().find(|&&i| i >= q / 3) {
            return Err(Error::Index {
                index: bad,
                len: q / 3,
                context: "model face triangles".into(),
            });
        }
    }
    Ok(ModelFile {
        model,
        face_triangles: raw.face_triangles,
    })
}

pub fn save_model<T: Real>(file: &ModelFile<T>, path: &Path, with_coefficients: bool) -> Result<()> {
    let text = model_to_json(file, with_coefficients)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: &Path) -> Result<ModelFile<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, &path.display().to_string())
}
