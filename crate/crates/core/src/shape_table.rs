//! Coordinate layouts and centred predictor/response tables.
//!
//! Midplane landmarks carry only their `y` and `z` coordinates; every other
//! point contributes all three. Face vertices are always treated as lateral.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Largest |x| (mm) accepted for a midplane landmark.
pub const MIDPLANE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Components {
    #[serde(rename = "xyz")]
    Xyz,
    #[serde(rename = "yz")]
    Yz,
}

impl Components {
    pub fn count(self) -> usize {
        match self {
            Components::Xyz => 3,
            Components::Yz => 2,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Components::Xyz => &["x", "y", "z"],
            Components::Yz => &["y", "z"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub id: String,
    pub components: Components,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutFile", into = "LayoutFile")]
pub struct CoordinateLayout {
    entries: Vec<LayoutEntry>,
    total_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct LayoutFile {
    entries: Vec<LayoutEntry>,
    total_dim: usize,
}

impl TryFrom<LayoutFile> for CoordinateLayout {
    type Error = Error;
    fn try_from(f: LayoutFile) -> Result<Self> {
        let layout = CoordinateLayout::new(f.entries);
        if layout.total_dim != f.total_dim {
            return Err(Error::Layout(format!(
                "layout declares {} coordinates but its entries sum to {}",
                f.total_dim, layout.total_dim
            )));
        }
        Ok(layout)
    }
}

impl From<CoordinateLayout> for LayoutFile {
    fn from(l: CoordinateLayout) -> Self {
        LayoutFile {
            total_dim: l.total_dim,
            entries: l.entries,
        }
    }
}

/// Coordinate count of a template with the given midplane and lateral counts.
pub fn coordinate_count(midplane: usize, lateral: usize) -> usize {
    2 * midplane + 3 * lateral
}

impl CoordinateLayout {
    pub fn new(entries: Vec<LayoutEntry>) -> Self {
        let total_dim = entries.iter().map(|e| e.components.count()).sum();
        CoordinateLayout { entries, total_dim }
    }

    pub fn from_landmarks<T: Real>(set: &LandmarkSet<T>) -> Self {
        Self::new(
            set.points()
                .iter()
                .map(|p| LayoutEntry {
                    id: p.id.clone(),
                    components: if p.midplane { Components::Yz } else { Components::Xyz },
                })
                .collect(),
        )
    }

    /// All-lateral layout over mesh vertices, with ids `v0`, `v1`, ...
    pub fn for_mesh_vertices(n: usize) -> Self {
        Self::new(
            (0..n)
                .map(|i| LayoutEntry {
                    id: format!("v{i}"),
                    components: Components::Xyz,
                })
                .collect(),
        )
    }

    /// Synthetic layout with `midplane` points followed by `lateral` points.
    pub fn from_counts(midplane: usize, lateral: usize) -> Self {
        let mid = (0..midplane).map(|i| LayoutEntry {
            id: format!("m{i}"),
            components: Components::Yz,
        });
        let lat = (0..lateral).map(|i| LayoutEntry {
            id: format!("l{i}"),
            components: Components::Xyz,
        });
        Self::new(mid.chain(lat).collect())
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn midplane_count(&self) -> usize {
        self.entries.iter().filter(|e| e.components == Components::Yz).count()
    }

    /// Column labels such as `n3.x`, in coordinate order.
    pub fn labels(&self) -> Vec<String> {
        self.entries
            .iter()
            .flat_map(|e| e.components.labels().iter().map(move |c| format!("{}.{c}", e.id)))
            .collect()
    }

    fn push_point<T: Real>(&self, out: &mut Vec<T>, e: &LayoutEntry, p: &Point3<T>) -> Result<()> {
        match e.components {
            Components::Xyz => out.extend([p.x, p.y, p.z]),
            Components::Yz => {
                if p.x.abs().as_f64() > MIDPLANE_TOLERANCE {
                    return Err(Error::Layout(format!(
                        "midplane point {:?} has x = {} mm",
                        e.id,
                        p.x.as_f64()
                    )));
                }
                out.extend([p.y, p.z]);
            }
        }
        Ok(())
    }

    /// Positions in layout order, building 3D points from a flat vector.
    fn points_from<T: Real>(&self, v: &[T]) -> Vec<Point3<T>> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut k = 0;
        for e in &self.entries {
            match e.components {
                Components::Xyz => {
                    out.push(Point3::new(v[k], v[k + 1], v[k + 2]));
                    k += 3;
                }
                Components::Yz => {
                    out.push(Point3::new(T::zero(), v[k], v[k + 1]));
                    k += 2;
                }
            }
        }
        out
    }
}

/// Landmark coordinates concatenated in layout order, midplane `x` omitted.
pub fn flatten<T: Real>(landmarks: &LandmarkSet<T>, layout: &CoordinateLayout) -> Result<DVector<T>> {
    if landmarks.len() != layout.len() {
        return Err(Error::Layout(format!(
            "landmark set has {} points, layout has {}",
            landmarks.len(),
            layout.len()
        )));
    }
    let mut out = Vec::with_capacity(layout.total_dim());
    for (p, e) in landmarks.points().iter().zip(layout.entries()) {
        if p.id != e.id {
            return Err(Error::Layout(format!("landmark id {:?} where layout expects {:?}", p.id, e.id)));
        }
        if p.midplane != (e.components == Components::Yz) {
            return Err(Error::Layout(format!("midplane flag of {:?} disagrees with the layout", p.id)));
        }
        layout.push_point(&mut out, e, &p.position)?;
    }
    Ok(DVector::from_vec(out))
}

/// Mesh vertex coordinates in an all-lateral layout.
pub fn flatten_mesh<T: Real>(mesh: &TriMesh<T>, layout: &CoordinateLayout) -> Result<DVector<T>> {
    if mesh.num_vertices() != layout.len() {
        return Err(Error::Layout(format!(
            "mesh has {} vertices, layout has {}",
            mesh.num_vertices(),
            layout.len()
        )));
    }
    let mut out = Vec::with_capacity(layout.total_dim());
    for (p, e) in mesh.vertices().iter().zip(layout.entries()) {
        layout.push_point(&mut out, e, p)?;
    }
    Ok(DVector::from_vec(out))
}

/// Adds the template back and rebuilds 3D positions in layout order.
pub fn unflatten<T: Real>(
    v: &DVector<T>,
    template: &DVector<T>,
    layout: &CoordinateLayout,
) -> Result<Vec<Point3<T>>> {
    if v.len() != layout.total_dim() {
        return Err(Error::dimension(layout.total_dim(), v.len(), "coordinate vector"));
    }
    if template.len() != layout.total_dim() {
        return Err(Error::dimension(layout.total_dim(), template.len(), "template vector"));
    }
    let full = v + template;
    Ok(layout.points_from(full.as_slice()))
}

/// Centred predictor (skull) and response (face) tables with their templates.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTablePair<T: Real> {
    pub x: DMatrix<T>,
    pub y: DMatrix<T>,
    pub x_mean: DVector<T>,
    pub y_mean: DVector<T>,
    pub skull_layout: CoordinateLayout,
    pub face_layout: CoordinateLayout,
    /// Row labels, one per entry.
    pub entry_ids: Vec<String>,
}

impl<T: Real> ShapeTablePair<T> {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Raw (uncentred) skull vectors and face vectors as rows.
    pub fn raw_rows(&self) -> (Vec<DVector<T>>, Vec<DVector<T>>) {
        let xs = (0..self.n())
            .map(|i| self.x.row(i).transpose() + &self.x_mean)
            .collect();
        let ys = (0..self.n())
            .map(|i| self.y.row(i).transpose() + &self.y_mean)
            .collect();
        (xs, ys)
    }

    /// Rebuilds the tables from a subset of rows, recomputing the templates.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let (xs, ys) = self.raw_rows();
        assemble_vectors(
            rows.iter().map(|&i| xs[i].clone()).collect(),
            rows.iter().map(|&i| ys[i].clone()).collect(),
            self.skull_layout.clone(),
            self.face_layout.clone(),
            rows.iter().map(|&i| self.entry_ids[i].clone()).collect(),
        )
    }
}

fn mean_and_center<T: Real>(rows: &[DVector<T>], dim: usize) -> (DMatrix<T>, DVector<T>) {
    let n = rows.len();
    let mut mean = DVector::zeros(dim);
    for r in rows {
        mean += r;
    }
    mean /= T::from_count(n);
    let mut m = DMatrix::zeros(n, dim);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&(r - &mean).transpose());
    }
    (m, mean)
}

/// Centres raw coordinate vectors into a table pair.
pub fn assemble_vectors<T: Real>(
    xs: Vec<DVector<T>>,
    ys: Vec<DVector<T>>,
    skull_layout: CoordinateLayout,
    face_layout: CoordinateLayout,
    entry_ids: Vec<String>,
) -> Result<ShapeTablePair<T>> {
    if xs.len() != ys.len() || xs.len() != entry_ids.len() {
        return Err(Error::dimension(xs.len(), ys.len(), "skull and face entry counts"));
    }
    if xs.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 entries, got {}", xs.len())));
    }
    for x in &xs {
        if x.len() != skull_layout.total_dim() {
            return Err(Error::Layout(format!(
                "skull vector has {} coordinates, layout has {}",
                x.len(),
                skull_layout.total_dim()
            )));
        }
    }
    for y in &ys {
        if y.len() != face_layout.total_dim() {
            return Err(Error::Layout(format!(
                "face vector has {} coordinates, layout has {}",
                y.len(),
                face_layout.total_dim()
            )));
        }
    }
    let (x, x_mean) = mean_and_center(&xs, skull_layout.total_dim());
    let (y, y_mean) = mean_and_center(&ys, face_layout.total_dim());
    Ok(ShapeTablePair {
        x,
        y,
        x_mean,
        y_mean,
        skull_layout,
        face_layout,
        entry_ids,
    })
}

/// Builds the centred tables from (skull landmarks, deformed reference face) pairs.
pub fn assemble<T: Real>(entries: &[(LandmarkSet<T>, TriMesh<T>)]) -> Result<ShapeTablePair<T>> {
    let Some((s0, f0)) = entries.first() else {
        return Err(Error::Parameter("no entries to assemble".into()));
    };
    let skull_layout = CoordinateLayout::from_landmarks(s0);
    let face_layout = CoordinateLayout::for_mesh_vertices(f0.num_vertices());
    let mut xs = Vec::with_capacity(entries.len());
    let mut ys = Vec::with_capacity(entries.len());
    for (i, (s, f)) in entries.iter().enumerate() {
        if f.triangles() != f0.triangles() {
            return Err(Error::Layout(format!("face mesh of entry {i} has a different topology")));
        }
        xs.push(flatten(s, &skull_layout)?);
        ys.push(flatten_mesh(f, &face_layout)?);
    }
    let ids = (0..entries.len()).map(|i| format!("e{i}")).collect();
    assemble_vectors(xs, ys, skull_layout, face_layout, ids)
}

#[derive(Serialize, Deserialize)]
struct LayoutsFile {
    skull: CoordinateLayout,
    face: CoordinateLayout,
    entries: Vec<String>,
}

fn write_matrix<T: Real>(path: &Path, labels: &[String], ids: &[String], m: &DMatrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = vec!["entry".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| v.as_f64().to_string()));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::format(path.display().to_string(), line, e.to_string())
}

fn read_matrix<T: Real>(path: &Path, labels: &[String], n: usize) -> Result<DMatrix<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != labels.len() + 1 || header.iter().skip(1).zip(labels).any(|(h, l)| h != l) {
        return Err(Error::Layout(format!("{} header does not match layout.json", path.display())));
    }
    let mut m = DMatrix::zeros(n, labels.len());
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if i >= n {
            return Err(Error::dimension(n, i + 1, "table rows"));
        }
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::format(path.display().to_string(), i + 2, format!("bad number {cell:?}")))?;
            m[(i, j)] = T::lit(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::dimension(n, rows, "table rows"));
    }
    Ok(m)
}

/// Writes `layout.json`, `X.csv`, `Y.csv` and `templates.csv` into `dir`.
pub fn save_tables<T: Real>(tables: &ShapeTablePair<T>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let layouts = LayoutsFile {
        skull: tables.skull_layout.clone(),
        face: tables.face_layout.clone(),
        entries: tables.entry_ids.clone(),
    };
    let lp = dir.join("layout.json");
    std::fs::write(&lp, serde_json::to_string_pretty(&layouts)?).map_err(|e| Error::io(&lp, e))?;
    write_matrix(&dir.join("X.csv"), &tables.skull_layout.labels(), &tables.entry_ids, &tables.x)?;
    write_matrix(&dir.join("Y.csv"), &tables.face_layout.labels(), &tables.entry_ids, &tables.y)?;
    let tp = dir.join("templates.csv");
    let mut w = csv::Writer::from_path(&tp).map_err(|e| csv_err(&tp, e))?;
    w.write_record(["side", "label", "value"]).map_err(|e| csv_err(&tp, e))?;
    for (side, layout, v) in [
        ("skull", &tables.skull_layout, &tables.x_mean),
        ("face", &tables.face_layout, &tables.y_mean),
    ] {
        for (l, x) in layout.labels().iter().zip(v.iter()) {
            w.write_record([side, l.as_str(), &x.as_f64().to_string()])
                .map_err(|e| csv_err(&tp, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&tp, e))
}

pub fn load_tables<T: Real>(dir: &Path) -> Result<ShapeTablePair<T>> {
    let lp = dir.join("layout.json");
    let text = std::fs::read_to_string(&lp).map_err(|e| Error::io(&lp, e))?;
    let layouts: LayoutsFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(lp.display().to_string(), e.line(), e.to_string()))?;
    let n = layouts.entries.len();
    let x = read_matrix(&dir.join("X.csv"), &layouts.skull.labels(), n)?;
    let y = read_matrix(&dir.join("Y.csv"), &layouts.face.labels(), n)?;
    let tp = dir.join("templates.csv");
    let mut r = csv::Reader::from_path(&tp).map_err(|e| csv_err(&tp, e))?;
    let mut x_mean = Vec::new();
    let mut y_mean = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&tp, e))?;
        let v: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(tp.display().to_string(), i + 2, "missing template value"))?;
        match rec.get(0) {
            Some("skull") => x_mean.push(T::lit(v)),
            Some("face") => y_mean.push(T::lit(v)),
            other => {
                return Err(Error::format(
                    tp.display().to_string(),
                    i + 2,
                    format!("unknown side {other:?}"),
                ))
            }
        }
    }
    if x_mean.len() != layouts.skull.total_dim() {
        return Err(Error::dimension(layouts.skull.total_dim(), x_mean.len(), "skull template"));
    }
    if y_mean.len() != layouts.face.total_dim() {
        return Err(Error::dimension(layouts.face.total_dim(), y_mean.len(), "face template"));
    }
    Ok(ShapeTablePair {
        x,
        y,
        x_mean: DVector::from_vec(x_mean),
        y_mean: DVector::from_vec(y_mean),
        skull_layout: layouts.skull,
        face_layout: layouts.face,
        entry_ids: layouts.entries,
    })
}
