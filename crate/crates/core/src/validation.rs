//! Leave-one-out cross-validation of both predictors, with error curves over
//! the component count, per-vertex error fields and histograms.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DVector, Point3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Entry;
use crate::error::{Error, Result};
use crate::lrr::{fit_lrr, LrrModel};
use crate::mesh::{save_mesh, save_ply_with_scalar, MeshFormat, PlyEncoding, SurfaceIndex, TriMesh};
use crate::pca::{fit_joint_pca, JointPcaModel};
use crate::scalar::Real;
use crate::shape_table::{assemble, flatten, unflatten, ShapeTablePair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Lrr,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pca => "pca",
            Method::Lrr => "lrr",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pca" => Ok(Method::Pca),
            "lrr" => Ok(Method::Lrr),
            other => Err(Error::Parameter(format!("unknown method {other:?} (expected pca or lrr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub methods: Vec<Method>,
    pub max_components: usize,
    pub histogram_bin_width: f64,
    /// Fold groups whose fitted models are kept in the report.
    pub retain_models_for: Vec<String>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            methods: vec![Method::Pca, Method::Lrr],
            max_components: 10,
            histogram_bin_width: 0.25,
            retain_models_for: Vec::new(),
        }
    }
}

/// Models fitted on the training part of one fold, at the maximum count.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModels<T: Real> {
    pub tables: ShapeTablePair<T>,
    pub pca: Option<JointPcaModel<T>>,
    pub lrr: Option<LrrModel<T>>,
}

impl<T: Real> FoldModels<T> {
    /// Centred face predictions for component counts `1..=max`. Counts past a
    /// model's rank reuse its full prediction.
    pub fn curve(&self, method: Method, x0: &DVector<T>, max: usize) -> Result<Vec<DVector<T>>> {
        let mut c = match method {
            Method::Pca => {
                let m = self.pca.as_ref().ok_or_else(|| Error::Fit("PCA model missing".into()))?;
                m.predict_curve(x0, max.min(m.num_components()))?
            }
            Method::Lrr => {
                let m = self.lrr.as_ref().ok_or_else(|| Error::Fit("LRR model missing".into()))?;
                m.predict_curve(x0, max)?
            }
        };
        let last = c.last().cloned().unwrap_or_else(|| DVector::zeros(self.tables.q()));
        c.resize(max, last);
        Ok(c)
    }
}

/// Fits every requested method on `train` at `max_components`.
pub fn fit_fold_models<T: Real>(
    train: &[&Entry<T>],
    methods: &[Method],
    max_components: usize,
) -> Result<FoldModels<T>> {
    let pairs: Vec<_> = train.iter().map(|e| (e.skull.clone(), e.deformed.clone())).collect();
    let tables = assemble(&pairs)?;
    let pca = if methods.contains(&Method::Pca) {
        Some(fit_joint_pca(&tables)?.truncate(max_components))
    } else {
        None
    };
    let lrr = if methods.contains(&Method::Lrr) {
        Some(fit_lrr(&tables, max_components)?)
    } else {
        None
    };
    Ok(FoldModels { tables, pca, lrr })
}

/// Mean distance from predicted vertices to the true surface, plus the
/// per-vertex distances. `hints[i]` seeds the search for vertex `i`.
fn vertex_errors<T: Real>(pred: &[Point3<T>], truth: &SurfaceIndex<'_, T>, hints: &[Vec<usize>]) -> Vec<f64> {
    pred.iter()
        .enumerate()
        .map(|(i, p)| {
            let h = hints.get(i).map(Vec::as_slice).unwrap_or(&[]);
            truth.closest_with_hint(p, h).distance.as_f64()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub components: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `[lo, hi)` of bin `i`.
    pub fn bin(&self, i: usize) -> (f64, f64) {
        (i as f64 * self.bin_width, (i + 1) as f64 * self.bin_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub curve: Vec<CurvePoint>,
    /// Component count minimizing the mean error; ties go to fewer components.
    pub optimum: CurvePoint,
    /// `per_entry[e][c - 1]`: error of entry `e` with `c` components; empty for failed entries.
    pub per_entry: Vec<Vec<f64>>,
    /// Per-entry errors at the optimum.
    pub optimum_errors: Vec<f64>,
    pub optimum_min: f64,
    pub optimum_max: f64,
    /// True-surface vertices to predicted surface, at the optimum (not used for selection).
    pub reverse_errors: Vec<f64>,
    pub histogram: Histogram,
    #[serde(skip)]
    pub local_mean: Vec<f64>,
    #[serde(skip)]
    pub local_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedFold {
    pub group: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport<T: Real> {
    pub entries: Vec<String>,
    pub max_components: usize,
    pub methods: Vec<MethodReport>,
    pub failed_folds: Vec<FailedFold>,
    /// Mean deformed reference; carries the local error fields when exported.
    #[serde(skip)]
    pub template_face: Option<TriMesh<T>>,
    #[serde(skip)]
    pub fold_models: Vec<(String, FoldModels<T>)>,
}

impl<T: Real> CvReport<T> {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Fold structure: groups in first-appearance order with their entry indices.
pub fn fold_groups<T: Real>(entries: &[Entry<T>]) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let mut at: HashMap<&str, usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        match at.get(e.group.as_str()) {
            Some(&k) => out[k].1.push(i),
            None => {
                at.insert(&e.group, out.len());
                out.push((e.group.clone(), vec![i]));
            }
        }
    }
    out
}

/// The models `loo_crossval` fits for the fold holding out `group`.
pub fn fold_models<T: Real>(entries: &[Entry<T>], group: &str, opts: &CvOptions) -> Result<FoldModels<T>> {
    let train: Vec<&Entry<T>> = entries.iter().filter(|e| e.group != group).collect();
    fit_fold_models(&train, &opts.methods, opts.max_components)
}

struct FoldResult<T: Real> {
    /// (entry index, method, errors per count)
    errors: Vec<(usize, Method, Vec<f64>)>,
    models: Option<FoldModels<T>>,
}

fn run_fold<T: Real>(
    entries: &[Entry<T>],
    indices: &[usize],
    group: &str,
    opts: &CvOptions,
    hints: &[Vec<Vec<usize>>],
) -> Result<FoldResult<T>> {
    let models = fold_models(entries, group, opts)?;
    let mut errors = Vec::new();
    for &i in indices {
        let e = &entries[i];
        let truth = SurfaceIndex::new(&e.face)?;
        let x0 = flatten(&e.skull, &models.tables.skull_layout)? - &models.tables.x_mean;
        for &m in &opts.methods {
            let curve = models.curve(m, &x0, opts.max_components)?;
            let errs = curve
                .iter()
                .map(|y| {
                    let pts = unflatten(y, &models.tables.y_mean, &models.tables.face_layout)?;
                    Ok(mean(&vertex_errors(&pts, &truth, &hints[i])))
                })
                .collect::<Result<Vec<f64>>>()?;
            errors.push((i, m, errs));
        }
    }
    let keep = opts.retain_models_for.iter().any(|g| g == group);
    Ok(FoldResult {
        errors,
        models: keep.then_some(models),
    })
}

/// Leave-one-group-out cross-validation. Every entry of a group (for example
/// both mirrored halves of one individual) is held out in the same fold.
pub fn loo_crossval<T: Real>(entries: &[Entry<T>], opts: &CvOptions) -> Result<CvReport<T>> {
    let n = entries.len();
    if n < 3 {
        return Err(Error::Parameter(format!("cross-validation needs at least 3 entries, got {n}")));
    }
    if opts.methods.is_empty() {
        return Err(Error::Parameter("no methods requested".into()));
    }
    let groups = fold_groups(entries);
    let largest = groups.iter().map(|g| g.1.len()).max().unwrap_or(1);
    let cap = n - largest - 1;
    if opts.max_components == 0 || opts.max_components > cap {
        return Err(Error::Parameter(format!(
            "max_components must be in 1..={cap} for {n} entries in {} folds",
            groups.len()
        )));
    }
    if !(opts.histogram_bin_width > 0.0) {
        return Err(Error::Parameter("histogram bin width must be positive".into()));
    }
    let hints: Vec<Vec<Vec<usize>>> = entries.iter().map(|e| e.face.vertex_triangles()).collect();

    // pass 1: error curves
    let results: Vec<(String, Result<FoldResult<T>>)> = groups
        .par_iter()
        .map(|(g, idx)| (g.clone(), run_fold(entries, idx, g, opts, &hints)))
        .collect();

    let mut failed = Vec::new();
    let mut per: HashMap<Method, Vec<Vec<f64>>> = opts.methods.iter().map(|&m| (m, vec![Vec::new(); n])).collect();
    let mut fold_models_kept = Vec::new();
    let mut ok_groups = Vec::new();
    for ((g, res), (_, idx)) in results.into_iter().zip(&groups) {
        match res {
            Ok(fr) => {
                for (i, m, errs) in fr.errors {
                    per.get_mut(&m).expect("method requested")[i] = errs;
                }
                if let Some(m) = fr.models {
                    fold_models_kept.push((g.clone(), m));
                }
                ok_groups.push((g, idx.clone()));
            }
            Err(e) => {
                log::warn!("fold {g} failed: {e}");
                failed.push(FailedFold {
                    group: g,
                    error: e.to_string(),
                });
            }
        }
    }
    if ok_groups.is_empty() {
        return Err(Error::Fit("every fold failed".into()));
    }

    let mut reports = Vec::new();
    for &m in &opts.methods {
        let rows = &per[&m];
        let ok: Vec<&Vec<f64>> = rows.iter().filter(|r| !r.is_empty()).collect();
        let curve: Vec<CurvePoint> = (0..opts.max_components)
            .map(|c| {
                let col: Vec<f64> = ok.iter().map(|r| r[c]).collect();
                CurvePoint {
                    components: c + 1,
                    mean: mean(&col),
                    std: pop_std(&col),
                }
            })
            .collect();
        let best = curve
            .iter()
            .fold(&curve[0], |b, p| if p.mean < b.mean { p } else { b })
            .clone();
        let opt_errors: Vec<f64> = ok.iter().map(|r| r[best.components - 1]).collect();
        reports.push(MethodReport {
            method: m,
            histogram: error_histogram(&opt_errors, opts.histogram_bin_width)?,
            optimum_min: opt_errors.iter().copied().fold(f64::INFINITY, f64::min),
            optimum_max: opt_errors.iter().copied().fold(0.0, f64::max),
            optimum_errors: opt_errors,
            per_entry: rows.clone(),
            curve,
            optimum: best,
            reverse_errors: Vec::new(),
            local_mean: Vec::new(),
            local_std: Vec::new(),
        });
    }

    // pass 2: per-vertex fields and reverse errors at each optimum
    let optima: Vec<(Method, usize)> = reports.iter().map(|r| (r.method, r.optimum.components)).collect();
    let pass2: Vec<Result<Vec<(usize, Method, Vec<f64>, f64)>>> = ok_groups
        .par_iter()
        .map(|(g, idx)| {
            let models = fold_models(entries, g, opts)?;
            let mut out = Vec::new();
            for &i in idx {
                let e = &entries[i];
                let truth = SurfaceIndex::new(&e.face)?;
                let x0 = flatten(&e.skull, &models.tables.skull_layout)? - &models.tables.x_mean;
                for &(m, c) in &optima {
                    let y = &models.curve(m, &x0, c)?[c - 1];
                    let pts = unflatten(y, &models.tables.y_mean, &models.tables.face_layout)?;
                    let field = vertex_errors(&pts, &truth, &hints[i]);
                    let pred_mesh = e.deformed.with_vertices(pts)?;
                    let pi = SurfaceIndex::new(&pred_mesh)?;
                    let rev = mean(&vertex_errors(e.face.vertices(), &pi, &hints[i]));
                    out.push((i, m, field, rev));
                }
            }
            Ok(out)
        })
        .collect();
    let mut fields: HashMap<Method, Vec<Vec<f64>>> = HashMap::new();
    let mut reverse: HashMap<Method, Vec<f64>> = HashMap::new();
    for r in pass2 {
        for (_, m, field, rev) in r? {
            fields.entry(m).or_default().push(field);
            reverse.entry(m).or_default().push(rev);
        }
    }
    for rep in &mut reports {
        let f = fields.remove(&rep.method).unwrap_or_default();
        match local_error_fields(&f) {
            Ok((mu, sd)) => {
                rep.local_mean = mu;
                rep.local_std = sd;
            }
            Err(e) => log::warn!("local error fields for {}: {e}", rep.method),
        }
        rep.reverse_errors = reverse.remove(&rep.method).unwrap_or_default();
    }

    let template_face = {
        let pairs: Vec<_> = entries.iter().map(|e| (e.skull.clone(), e.deformed.clone())).collect();
        let t = assemble(&pairs)?;
        let pts = unflatten(&DVector::zeros(t.q()), &t.y_mean, &t.face_layout)?;
        Some(entries[0].deformed.with_vertices(pts)?)
    };
    Ok(CvReport {
        entries: entries.iter().map(|e| e.id.clone()).collect(),
        max_components: opts.max_components,
        methods: reports,
        failed_folds: failed,
        template_face,
        fold_models: fold_models_kept,
    })
}

/// Per-vertex mean and population standard deviation across entries.
pub fn local_error_fields(fields: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if fields.len() < 2 {
        return Err(Error::Parameter(format!(
            "local error fields need at least 2 folds, got {}",
            fields.len()
        )));
    }
    let nv = fields[0].len();
    if let Some(f) = fields.iter().find(|f| f.len() != nv) {
        return Err(Error::dimension(nv, f.len(), "per-vertex error field"));
    }
    let k = fields.len() as f64;
    let mut mu = vec![0.0; nv];
    for f in fields {
        for (m, v) in mu.iter_mut().zip(f) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= k);
    let mut var = vec![0.0; nv];
    for f in fields {
        for ((s, v), m) in var.iter_mut().zip(f).zip(&mu) {
            *s += (v - m).powi(2);
        }
    }
    Ok((mu, var.into_iter().map(|s| (s / k).sqrt()).collect()))
}

/// Fixed-width histogram with bins starting at 0.
pub fn error_histogram(errors: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Parameter(format!("bin width {bin_width} must be positive")));
    }
    if errors.is_empty() {
        return Err(Error::Parameter("histogram of no errors".into()));
    }
    if let Some(bad) = errors.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::Domain(format!("error value {bad} is not a finite non-negative number")));
    }
    let top = errors.iter().copied().fold(0.0, f64::max);
    let bins = (top / bin_width).floor() as usize + 1;
    let mut counts = vec![0; bins];
    for e in errors {
        counts[((e / bin_width).floor() as usize).min(bins - 1)] += 1;
    }
    Ok(Histogram { bin_width, counts })
}

/// Summary record written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub entries: usize,
    pub max_components: usize,
    pub failed_folds: Vec<FailedFold>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub optimum_components: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub reverse_mean: Option<f64>,
}

impl<T: Real> CvReport<T> {
    pub fn summary(&self) -> Summary {
        Summary {
            entries: self.entries.len(),
            max_components: self.max_components,
            failed_folds: self.failed_folds.clone(),
            methods: self
                .methods
                .iter()
                .map(|m| MethodSummary {
                    method: m.method,
                    optimum_components: m.optimum.components,
                    mean: m.optimum.mean,
                    std: m.optimum.std,
                    min: m.optimum_min,
                    max: m.optimum_max,
                    reverse_mean: (!m.reverse_errors.is_empty()).then(|| mean(&m.reverse_errors)),
                })
                .collect(),
        }
    }
}

/// Mean face mesh written next to the report.
pub const TEMPLATE_FILE: &str = "template_face.ply";
/// Per-vertex local error fields of every method.
pub const FIELDS_FILE: &str = "local_fields.csv";

/// Writes `summary.json`, `curves.csv`, `hist.csv`, `report.json`, the mean
/// face with the local error fields as CSV, and those fields as PLY quality
/// properties. The unsuffixed
/// `local_mean.ply` / `local_std.ply` belong to the method with the lowest
/// optimum error.
pub fn write_report<T: Real>(report: &CvReport<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("summary.json", serde_json::to_string_pretty(&report.summary())?)?;
    write("report.json", serde_json::to_string(report)?)?;
    let mut curves = String::from("method,components,mean,std\n");
    let mut hist = String::from("method,bin_lo,bin_hi,count\n");
    for m in &report.methods {
        for c in &m.curve {
            curves.push_str(&format!("{},{},{},{}\n", m.method, c.components, c.mean, c.std));
        }
        for (i, n) in m.histogram.counts.iter().enumerate() {
            let (lo, hi) = m.histogram.bin(i);
            hist.push_str(&format!("{},{lo},{hi},{n}\n", m.method));
        }
    }
    write("curves.csv", curves)?;
    write("hist.csv", hist)?;
    if let Some(mesh) = &report.template_face {
        save_mesh(mesh, &dir.join(TEMPLATE_FILE), MeshFormat::Ply)?;
        let mut fields = String::from("method,vertex,mean,std\n");
        for m in &report.methods {
            for (i, (mu, sd)) in m.local_mean.iter().zip(&m.local_std).enumerate() {
                fields.push_str(&format!("{},{i},{mu},{sd}\n", m.method));
            }
        }
        write(FIELDS_FILE, fields)?;
        let best = report
            .methods
            .iter()
            .filter(|m| !m.local_mean.is_empty())
            .min_by(|a, b| a.optimum.mean.partial_cmp(&b.optimum.mean).unwrap_or(std::cmp::Ordering::Equal));
        for m in report.methods.iter().filter(|m| !m.local_mean.is_empty()) {
            let sfx = format!("_{}", m.method);
            let names: Vec<String> = if best.map(|b| b.method) == Some(m.method) {
                vec![sfx, String::new()]
            } else {
                vec![sfx]
            };
            for s in names {
                save_ply_with_scalar(mesh, Some(&m.local_mean), &dir.join(format!("local_mean{s}.ply")), PlyEncoding::Ascii)?;
                save_ply_with_scalar(mesh, Some(&m.local_std), &dir.join(format!("local_std{s}.ply")), PlyEncoding::Ascii)?;
            }
        }
    }
    Ok(())
}

/// Report files read back from a directory written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: Summary,
    pub curves: Vec<(Method, CurvePoint)>,
    /// Per method: local mean and std fields on the mean face.
    pub fields: Vec<(Method, Vec<f64>, Vec<f64>)>,
    pub template_face: Option<TriMesh<f64>>,
}

#[derive(Deserialize)]
struct CurveRow {
    method: Method,
    components: usize,
    mean: f64,
    std: f64,
}

#[derive(Deserialize)]
struct FieldRow {
    method: Method,
    vertex: usize,
    mean: f64,
    std: f64,
}

fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rd.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::format(path.display().to_string(), line, format!("{kind:?}")),
    }
}

/// Reads `summary.json`, `curves.csv` and, when present, the local error
/// fields and mean face.
pub fn load_report_files(dir: &Path) -> Result<ReportFiles> {
    let sp = dir.join("summary.json");
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| Error::format(sp.display().to_string(), e.line(), e.to_string()))?;
    let curves = read_csv::<CurveRow>(&dir.join("curves.csv"))?
        .into_iter()
        .map(|r| {
            (
                r.method,
                CurvePoint {
                    components: r.components,
                    mean: r.mean,
                    std: r.std,
                },
            )
        })
        .collect();
    let mut fields: Vec<(Method, Vec<f64>, Vec<f64>)> = Vec::new();
    let fp = dir.join(FIELDS_FILE);
    if fp.exists() {
        for r in read_csv::<FieldRow>(&fp)? {
            if fields.last().is_none_or(|f| f.0 != r.method) {
                fields.push((r.method, Vec::new(), Vec::new()));
            }
            let f = fields.last_mut().expect("pushed above");
            if r.vertex != f.1.len() {
                return Err(Error::format(fp.display().to_string(), 0, format!("vertex {} out of order", r.vertex)));
            }
            f.1.push(r.mean);
            f.2.push(r.std);
        }
    }
    let tp = dir.join(TEMPLATE_FILE);
    let template_face = if tp.exists() { Some(crate::mesh::load_mesh(&tp, MeshFormat::Ply)?) } else { None };
    Ok(ReportFiles {
        summary,
        curves,
        fields,
        template_face,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn spec(seed: u64, sigma: f64) -> SynthSpec {
        SynthSpec {
            seed,
            n: 10,
            latent_dim: 3,
            noise_sigma: sigma,
            skull_stage: 0,
            face_vertices: 100,
            skull_noise_modes: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn histogram_basics() {
        let h = error_histogram(&[1.2], 0.5).unwrap();
        assert_eq!(h.counts, vec![0, 0, 1]);
        assert_eq!(h.bin(2), (1.0, 1.5));
        let h = error_histogram(&[0.1, 0.2, 0.9, 0.0, 2.5], 0.5).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert!(error_histogram(&[1.0], 0.0).is_err());
        assert!(error_histogram(&[], 1.0).is_err());
    }

    #[test]
    fn two_fold_fields() {
        let f = vec![1.0, 2.0, 5.0];
        let g = vec![3.0, 2.0, 1.0];
        let (mu, sd) = local_error_fields(&[f.clone(), g.clone()]).unwrap();
        for i in 0..3 {
            assert_eq!(mu[i], (f[i] + g[i]) / 2.0);
            assert_eq!(sd[i], (f[i] - g[i]).abs() / 2.0);
        }
        let (_, sd) = local_error_fields(&[f.clone(), f.clone()]).unwrap();
        assert!(sd.iter().all(|s| *s == 0.0));
        assert!(local_error_fields(&[f]).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("LRR".parse::<Method>().unwrap(), Method::Lrr);
        assert!("pls".parse::<Method>().is_err());
    }

    #[test]
    fn noiseless_lrr_is_exact() {
        let d = generate(&spec(1, 0.0)).unwrap();
        let opts = CvOptions { max_components: 5, ..CvOptions::default() };
        let r = loo_crossval(&d.entries, &opts).unwrap();
        let lrr = r.method(Method::Lrr).unwrap();
        assert!(lrr.curve[2].mean < 1e-6, "{:?}", lrr.curve);
        assert!(lrr.curve[2].mean < lrr.curve[0].mean);
        assert!(r.failed_folds.is_empty());
    }

    #[test]
    fn aggregation_identity_and_determinism() {
        let d = generate(&spec(2, 0.5)).unwrap();
        let opts = CvOptions { max_components: 4, ..CvOptions::default() };
        let a = loo_crossval(&d.entries, &opts).unwrap();
        let b = loo_crossval(&d.entries, &opts).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for m in &a.methods {
            assert_eq!(m.local_mean, b.method(m.method).unwrap().local_mean);
            let global = mean(&m.local_mean);
            assert!((global - m.optimum.mean).abs() < 1e-9, "{global} vs {}", m.optimum.mean);
            assert_eq!(m.histogram.counts.iter().sum::<usize>(), 10);
        }
    }

    #[test]
    fn groups_are_held_out_together() {
        let mut d = generate(&spec(3, 0.5)).unwrap();
        for (i, e) in d.entries.iter_mut().enumerate() {
            e.group = format!("g{}", i / 2);
        }
        let g = fold_groups(&d.entries);
        assert_eq!(g.len(), 5);
        assert_eq!(g[1], ("g1".to_string(), vec![2, 3]));
        let m = fold_models(&d.entries, "g1", &CvOptions { max_components: 3, ..CvOptions::default() }).unwrap();
        assert_eq!(m.tables.n(), 8);
        // cap is n - largest group - 1
        let bad = CvOptions { max_components: 8, ..CvOptions::default() };
        assert!(loo_crossval(&d.entries, &bad).is_err());
    }

    #[test]
    fn identical_entries_predict_template() {
        let d = generate(&spec(4, 0.5)).unwrap();
        let mut same = vec![d.entries[0].clone(); 5];
        for (i, e) in same.iter_mut().enumerate() {
            e.id = format!("c{i}");
            e.group = e.id.clone();
        }
        let opts = CvOptions { methods: vec![Method::Pca], max_components: 2, ..CvOptions::default() };
        // zero-variance folds cannot be fitted
        assert!(loo_crossval(&same, &opts).is_err());
    }

    #[test]
    fn report_files() {
        let d = generate(&spec(5, 0.5)).unwrap();
        let r = loo_crossval(&d.entries, &CvOptions { max_components: 3, ..CvOptions::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_report(&r, dir.path()).unwrap();
        for f in [TEMPLATE_FILE, FIELDS_FILE, "summary.json", "curves.csv", "hist.csv", "local_mean.ply", "local_std.ply", "local_mean_pca.ply"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let s: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.methods.len(), 2);
        let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(curves.lines().count(), 1 + 2 * 3);
        let back = load_report_files(dir.path()).unwrap();
        assert_eq!(back.summary, s);
        assert_eq!(back.curves.len(), 6);
        assert_eq!(back.fields.len(), 2);
        assert_eq!(back.fields[0].1, r.methods[0].local_mean);
        assert_eq!(back.template_face.unwrap().num_vertices(), 100);
    }
}
