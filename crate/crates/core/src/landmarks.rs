//! Landmark templates: ordered, generation-tagged surface points with midplane
//! flags and an optional geodesic triangulation between them.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Landmark<T: Real> {
    pub id: String,
    pub position: Point3<T>,
    pub midplane: bool,
    /// 0 for anatomical landmarks, g > 0 for points inserted at densification pass g.
    pub generation: u32,
}

/// Ordered landmark template. Ids are unique and the ordering is shared by
/// every individual described with the same template.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet<T: Real> {
    points: Vec<Landmark<T>>,
    connectivity: Vec<[String; 3]>,
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(points: Vec<Landmark<T>>, connectivity: Vec<[String; 3]>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &points {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Layout(format!("duplicate landmark id {:?}", p.id)));
            }
            if !(p.position.x.is_finite_value() && p.position.y.is_finite_value() && p.position.z.is_finite_value()) {
                return Err(Error::Domain(format!("landmark {:?} is not finite", p.id)));
            }
        }
        for tri in &connectivity {
            for id in tri {
                if !seen.contains(id.as_str()) {
                    return Err(Error::Layout(format!("connectivity references unknown id {id:?}")));
                }
            }
        }
        Ok(LandmarkSet {
            points,
            connectivity,
        })
    }

    pub fn points(&self) -> &[Landmark<T>] {
        &self.points
    }

    pub fn connectivity(&self) -> &[[String; 3]] {
        &self.connectivity
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.points.iter().map(|p| p.id.as_str())
    }

    pub fn index_of(&self) -> HashMap<&str, usize> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Landmark<T>> {
        self.points.iter().find(|p| p.id == id)
    }

    pub fn positions(&self) -> Vec<Point3<T>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn midplane_count(&self) -> usize {
        self.points.iter().filter(|p| p.midplane).count()
    }

    /// Same template with new point positions.
    pub fn with_positions(&self, positions: &[Point3<T>]) -> Result<Self> {
        if positions.len() != self.points.len() {
            return Err(Error::dimension(self.points.len(), positions.len(), "landmark positions"));
        }
        let mut out = self.clone();
        for (p, &q) in out.points.iter_mut().zip(positions) {
            p.position = q;
        }
        Ok(out)
    }

    /// Keeps the first `n` points and the triangles that reference only them.
    pub fn prefix(&self, n: usize) -> Self {
        let points: Vec<_> = self.points.iter().take(n).cloned().collect();
        let keep: HashSet<&str> = points.iter().map(|p| p.id.as_str()).collect();
        let connectivity = self
            .connectivity
            .iter()
            .filter(|t| t.iter().all(|id| keep.contains(id.as_str())))
            .cloned()
            .collect();
        LandmarkSet {
            points,
            connectivity,
        }
    }

    /// Keeps the points satisfying `keep` and the triangles among them.
    pub fn filter(&self, keep: impl Fn(&Landmark<T>) -> bool) -> Self {
        let points: Vec<_> = self.points.iter().filter(|p| keep(p)).cloned().collect();
        let ids: HashSet<&str> = points.iter().map(|p| p.id.as_str()).collect();
        let connectivity = self
            .connectivity
            .iter()
            .filter(|t| t.iter().all(|id| ids.contains(id.as_str())))
            .cloned()
            .collect();
        LandmarkSet {
            points,
            connectivity,
        }
    }

    pub fn map_positions(&self, f: impl Fn(&Landmark<T>) -> Point3<T>) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.position = f(p);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> LandmarkSet<U> {
        LandmarkSet {
            points: self
                .points
                .iter()
                .map(|p| Landmark {
                    id: p.id.clone(),
                    position: Point3::new(
                        U::lit(p.position.x.as_f64()),
                        U::lit(p.position.y.as_f64()),
                        U::lit(p.position.z.as_f64()),
                    ),
                    midplane: p.midplane,
                    generation: p.generation,
                })
                .collect(),
            connectivity: self.connectivity.clone(),
        }
    }

    /// Serializes as a landmark file (JSON array of points).
    pub fn to_landmark_file(&self) -> Vec<PointRecord> {
        self.points.iter().map(PointRecord::from_landmark).collect()
    }

    pub fn to_template_file(&self) -> TemplateFile {
        TemplateFile {
            points: self.to_landmark_file(),
            triangles: self.connectivity.clone(),
        }
    }

    pub fn from_records(points: Vec<PointRecord>, triangles: Vec<[String; 3]>) -> Result<Self> {
        LandmarkSet::new(points.into_iter().map(PointRecord::into_landmark).collect(), triangles)
    }

    /// Reads either a landmark file (JSON array) or a template connectivity
    /// file (`{points, triangles}`).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(path.display().to_string(), e.line(), e.to_string()))?;
        if value.is_array() {
            let pts: Vec<PointRecord> = serde_json::from_value(value)?;
            Self::from_records(pts, Vec::new())
        } else {
            let t: TemplateFile = serde_json::from_value(value)?;
            Self::from_records(t.points, t.triangles)
        }
    }

    /// Writes a landmark file, or a template file when connectivity is present.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = if self.connectivity.is_empty() {
            serde_json::to_string_pretty(&self.to_landmark_file())?
        } else {
            serde_json::to_string_pretty(&self.to_template_file())?
        };
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// One point of a landmark or template file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: String,
    pub position: [f64; 3],
    pub midplane: bool,
    #[serde(default)]
    pub generation: u32,
}

impl PointRecord {
    fn from_landmark<T: Real>(l: &Landmark<T>) -> Self {
        PointRecord {
            id: l.id.clone(),
            position: [l.position.x.as_f64(), l.position.y.as_f64(), l.position.z.as_f64()],
            midplane: l.midplane,
            generation: l.generation,
        }
    }

    fn into_landmark<T: Real>(self) -> Landmark<T> {
        let [x, y, z] = self.position;
        Landmark {
            id: self.id,
            position: Point3::new(T::lit(x), T::lit(y), T::lit(z)),
            midplane: self.midplane,
            generation: self.generation,
        }
    }
}

/// Template connectivity file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateFile {
    pub points: Vec<PointRecord>,
    pub triangles: Vec<[String; 3]>,
}
