//! Multiresponse latent root regression.
//!
//! Each latent direction starts from the dominant eigenvector of the joint
//! matrix built from the deflated skull table and the response table, seen
//! through the complement of the scores extracted so far. Directions are
//! conjugated against earlier ones in the `XᵀX` metric, which keeps the
//! scores `t = X ṽ` exactly orthogonal and makes the coefficient matrix an
//! exact least-squares regression on the scores.

use nalgebra::{DMatrix, DVector, Point3};

use crate::error::{Error, Result};
use crate::pca::{fix_sign, sorted_eigen};
use crate::scalar::Real;
use crate::shape_table::{unflatten, CoordinateLayout, ShapeTablePair};

/// Relative threshold on the deflated score norm below which extraction stops.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LrrModel<T: Real> {
    /// Unit-norm latent directions `ṽᵢ` as columns (`p × r`).
    pub latent_vectors: DMatrix<T>,
    /// `tᵢᵀtᵢ = ṽᵢᵀ XᵀX ṽᵢ`, strictly positive.
    pub score_norms: Vec<T>,
    /// Response weights `tᵢᵀY / tᵢᵀtᵢ` as rows (`r × q`).
    pub response_weights: DMatrix<T>,
    /// Coefficient matrix `B̂ = Σ ṽᵢ ṽᵢᵀ XᵀY / tᵢᵀtᵢ` (`p × q`).
    pub coefficients: DMatrix<T>,
    pub x_mean: DVector<T>,
    pub y_mean: DVector<T>,
    pub skull_layout: CoordinateLayout,
    pub face_layout: CoordinateLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T: Real> {
    pub positions: Vec<Point3<T>>,
    pub centered: DVector<T>,
}

impl<T: Real> LrrModel<T> {
    pub fn r(&self) -> usize {
        self.score_norms.len()
    }

    pub fn p(&self) -> usize {
        self.latent_vectors.nrows()
    }

    pub fn q(&self) -> usize {
        self.response_weights.ncols()
    }

    /// `Σ ṽᵢ cᵢ` over the first `r` components.
    pub fn coefficients_for(&self, r: usize) -> DMatrix<T> {
        let r = r.min(self.r());
        self.latent_vectors.columns(0, r) * self.response_weights.rows(0, r)
    }

    /// Model restricted to its first `r` components.
    pub fn truncate(&self, r: usize) -> Self {
        let r = r.min(self.r());
        LrrModel {
            latent_vectors: self.latent_vectors.columns(0, r).into_owned(),
            score_norms: self.score_norms[..r].to_vec(),
            response_weights: self.response_weights.rows(0, r).into_owned(),
            coefficients: self.coefficients_for(r),
            ..self.clone()
        }
    }

    /// Centred prediction `x₀ᵀB̂` for a centred skull vector.
    pub fn predict_centered(&self, x0: &DVector<T>) -> Result<DVector<T>> {
        if x0.len() != self.p() {
            return Err(Error::Layout(format!(
                "skull vector has {} coordinates, model expects {}",
                x0.len(),
                self.p()
            )));
        }
        Ok(self.coefficients.tr_mul(x0))
    }

    /// Centred predictions for every component count `1..=r`.
    pub fn predict_curve(&self, x0: &DVector<T>, r: usize) -> Result<Vec<DVector<T>>> {
        if x0.len() != self.p() {
            return Err(Error::dimension(self.p(), x0.len(), "centred skull vector"));
        }
        let r = r.min(self.r());
        let s = self.latent_vectors.columns(0, r).tr_mul(x0);
        let mut acc = DVector::zeros(self.q());
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            acc += self.response_weights.row(i).transpose() * s[i];
            out.push(acc.clone());
        }
        Ok(out)
    }

    /// Face predicted from raw skull coordinates.
    pub fn predict(&self, skull: &DVector<T>) -> Result<Prediction<T>> {
        if skull.len() != self.p() {
            return Err(Error::Layout(format!(
                "skull vector has {} coordinates, model expects {}",
                skull.len(),
                self.p()
            )));
        }
        let centered = self.predict_centered(&(skull - &self.x_mean))?;
        let positions = unflatten(&centered, &self.y_mean, &self.face_layout)?;
        Ok(Prediction { positions, centered })
    }
}

/// Extracts up to `r` latent components. Extraction stops early, with a
/// warning, once the deflated skull table is exhausted.
pub fn fit_lrr<T: Real>(tables: &ShapeTablePair<T>, r: usize) -> Result<LrrModel<T>> {
    let n = tables.n();
    if n < 2 {
        return Err(Error::Parameter(format!("LRR needs n ≥ 2, got {n}")));
    }
    if r == 0 {
        return Err(Error::Parameter("component count must be at least 1".into()));
    }
    let x = &tables.x;
    let y = &tables.y;
    let (p, q) = (tables.p(), tables.q());
    let x_norm = x.norm();
    if !(x_norm > T::zero()) {
        return Err(Error::Fit("skull table is zero".into()));
    }
    let yyt = y * y.transpose();
    let mut xi = x.clone();
    let mut proj: DMatrix<T> = DMatrix::identity(n, n);
    let mut latents: Vec<DVector<T>> = Vec::with_capacity(r);
    let mut scores: Vec<DVector<T>> = Vec::with_capacity(r);
    let mut norms = Vec::with_capacity(r);
    let mut weights: Vec<DVector<T>> = Vec::with_capacity(r);
    let tol = T::lit(RANK_TOLERANCE);

    for i in 0..r {
        let py = &proj * &yyt;
        let g = &xi * xi.transpose() + &py * &proj;
        let g = (&g + g.transpose()) * T::lit(0.5);
        let (_, vecs) = sorted_eigen(g);
        let u = vecs.column(0);
        let v = xi.tr_mul(&u);
        let xv = &xi * &v;
        if !(xv.norm() > tol * x_norm * v.norm()) {
            log::warn!("LRR: skull table exhausted after {i} of {r} components");
            break;
        }
        // conjugate against earlier directions so that X ṽ = P X v
        let xv_full = x * &v;
        let mut vt = v.clone();
        for (j, t) in scores.iter().enumerate() {
            let c = t.dot(&xv_full) / norms[j];
            vt -= &latents[j] * c;
        }
        let len = vt.norm();
        if !(len > T::zero()) {
            log::warn!("LRR: degenerate direction after {i} of {r} components");
            break;
        }
        vt /= len;
        fix_sign(&mut vt);
        let t = x * &vt;
        let sn = t.norm_squared();
        if !(sn > tol * tol * x_norm * x_norm) {
            log::warn!("LRR: vanishing score after {i} of {r} components");
            break;
        }
        // deflation
        let txi = xi.tr_mul(&t);
        xi -= &t * txi.transpose() / sn;
        proj -= &t * t.transpose() / sn;
        weights.push(y.tr_mul(&t) / sn);
        latents.push(vt);
        scores.push(t);
        norms.push(sn);
    }
    if latents.is_empty() {
        return Err(Error::Fit("no latent component could be extracted".into()));
    }
    let k = latents.len();
    let latent_vectors = DMatrix::from_columns(&latents);
    let mut response_weights = DMatrix::zeros(k, q);
    for (i, w) in weights.iter().enumerate() {
        response_weights.row_mut(i).copy_from(&w.transpose());
    }
    let coefficients = if k > 0 { &latent_vectors * &response_weights } else { DMatrix::zeros(p, q) };
    Ok(LrrModel {
        latent_vectors,
        score_norms: norms,
        response_weights,
        coefficients,
        x_mean: tables.x_mean.clone(),
        y_mean: tables.y_mean.clone(),
        skull_layout: tables.skull_layout.clone(),
        face_layout: tables.face_layout.clone(),
    })
}
