//! Joint PCA of concatenated skull and face coordinates, and the greedy
//! sequential face predictor built on the skull parts of its modes.

use nalgebra::{DMatrix, DVector, Point3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::shape_table::{unflatten, CoordinateLayout, ShapeTablePair};
use crate::scalar::Real;

/// Relative eigenvalue floor below which modes are discarded.
pub const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct JointPcaModel<T: Real> {
    /// Non-increasing, strictly positive.
    pub eigenvalues: Vec<T>,
    /// Orthonormal modes as columns, `p + q` rows: skull part first.
    pub components: DMatrix<T>,
    pub p: usize,
    pub x_mean: DVector<T>,
    pub y_mean: DVector<T>,
    pub skull_layout: CoordinateLayout,
    pub face_layout: CoordinateLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitWeights<T: Real> {
    pub b: Vec<T>,
    pub residual_norm: T,
}

impl<T: Real> JointPcaModel<T> {
    pub fn num_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn q(&self) -> usize {
        self.components.nrows() - self.p
    }

    /// Skull part of mode `j`.
    pub fn v(&self, j: usize) -> DVector<T> {
        self.components.view((0, j), (self.p, 1)).column(0).into_owned()
    }

    /// Face part of mode `j`.
    pub fn w(&self, j: usize) -> DVector<T> {
        self.components
            .view((self.p, j), (self.q(), 1))
            .column(0)
            .into_owned()
    }

    /// Keeps the first `m` modes.
    pub fn truncate(&self, m: usize) -> Self {
        let m = m.min(self.num_components());
        JointPcaModel {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            components: self.components.columns(0, m).into_owned(),
            ..self.clone()
        }
    }

    /// Centred face predictions for every mode count `1..=m`.
    pub fn predict_curve(&self, x0: &DVector<T>, m: usize) -> Result<Vec<DVector<T>>> {
        let wts = best_fit_weights(self, x0, m)?;
        let mut acc = DVector::zeros(self.q());
        let mut out = Vec::with_capacity(m);
        for (j, b) in wts.b.iter().enumerate() {
            if *b != T::zero() {
                acc += self.w(j) * *b;
            }
            out.push(acc.clone());
        }
        Ok(out)
    }

    /// Face positions predicted from raw skull coordinates with `m` modes.
    pub fn predict(&self, skull: &DVector<T>, m: usize) -> Result<Vec<Point3<T>>> {
        if skull.len() != self.p {
            return Err(Error::Layout(format!(
                "skull vector has {} coordinates, model expects {}",
                skull.len(),
                self.p
            )));
        }
        let x0 = skull - &self.x_mean;
        let wts = best_fit_weights(self, &x0, m)?;
        reconstruct_face(self, &wts)
    }
}

/// Orders eigenpairs by decreasing eigenvalue.
pub(crate) fn sorted_eigen<T: Real>(g: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>());
    (vals, vecs)
}

/// Flips `v` so that its largest-magnitude entry is positive.
pub(crate) fn fix_sign<T: Real>(v: &mut DVector<T>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.len() > 0 && v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Eigenpairs of the joint covariance, obtained from the `n × n` Gram matrix.
pub fn fit_joint_pca<T: Real>(tables: &ShapeTablePair<T>) -> Result<JointPcaModel<T>> {
    let n = tables.n();
    if n < 2 {
        return Err(Error::Parameter(format!("joint PCA needs n ≥ 2, got {n}")));
    }
    let gram = &tables.x * tables.x.transpose() + &tables.y * tables.y.transpose();
    let (vals, vecs) = sorted_eigen(gram);
    let top = vals[0];
    if !(top > T::zero()) {
        return Err(Error::Fit("data have zero variance".into()));
    }
    let floor = top * T::lit(EIGEN_FLOOR);
    let (p, q) = (tables.p(), tables.q());
    let mut eigenvalues = Vec::new();
    let mut cols = Vec::new();
    for (j, &lam) in vals.iter().enumerate() {
        if lam < floor || !(lam > T::zero()) {
            break;
        }
        let u = vecs.column(j);
        let mut a = DVector::zeros(p + q);
        a.rows_mut(0, p).copy_from(&(tables.x.transpose() * u));
        a.rows_mut(p, q).copy_from(&(tables.y.transpose() * u));
        a /= lam.sqrt();
        a /= a.norm();
        fix_sign(&mut a);
        eigenvalues.push(lam);
        cols.push(a);
    }
    log::debug!("joint PCA: {} of {} modes kept", cols.len(), n);
    Ok(JointPcaModel {
        eigenvalues,
        components: DMatrix::from_columns(&cols),
        p,
        x_mean: tables.x_mean.clone(),
        y_mean: tables.y_mean.clone(),
        skull_layout: tables.skull_layout.clone(),
        face_layout: tables.face_layout.clone(),
    })
}

/// Greedy weights: each mode's skull part is projected out of the running
/// residual in turn. The skull parts are not orthogonal, so order matters.
pub fn best_fit_weights<T: Real>(model: &JointPcaModel<T>, x0: &DVector<T>, m: usize) -> Result<FitWeights<T>> {
    if x0.len() != model.p {
        return Err(Error::dimension(model.p, x0.len(), "centred skull vector"));
    }
    if m > model.num_components() {
        return Err(Error::Parameter(format!(
            "{m} modes requested, model has {}",
            model.num_components()
        )));
    }
    let mut r = x0.clone();
    let mut b = Vec::with_capacity(m);
    for j in 0..m {
        let v = model.components.view((0, j), (model.p, 1));
        let nn = v.norm_squared();
        if !(nn > T::zero()) {
            log::warn!("mode {j} has a zero skull part; weight set to 0");
            b.push(T::zero());
            continue;
        }
        let bj = v.dot(&r) / nn;
        r -= v * bj;
        b.push(bj);
    }
    Ok(FitWeights {
        b,
        residual_norm: r.norm(),
    })
}

/// Template face plus the weighted face parts of the first modes.
pub fn reconstruct_face<T: Real>(model: &JointPcaModel<T>, weights: &FitWeights<T>) -> Result<Vec<Point3<T>>> {
    if weights.b.len() > model.num_components() {
        return Err(Error::dimension(model.num_components(), weights.b.len(), "weight count"));
    }
    let mut y = DVector::zeros(model.q());
    for (j, &bj) in weights.b.iter().enumerate() {
        y += model.w(j) * bj;
    }
    unflatten(&y, &model.y_mean, &model.face_layout)
}
