use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::geometry::Aabb;
use crate::{Result, Vec3};

/// Where an observed point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Visual,
    Haptic,
}

/// Positions with optional unit normals and a per-point source tag.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub sources: Vec<Source>,
}

const UNIT_TOL: f64 = 1e-6;

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>, source: Source) -> Result<Self> {
        let sources = vec![source; points.len()];
        Self::with_sources(points, normals, sources)
    }

    pub fn with_sources(
        points: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        sources: Vec<Source>,
    ) -> Result<Self> {
        if sources.len() != points.len() {
            return Err(invalid("source tags and points differ in length"));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(invalid(format!(
                    "{} normals for {} points",
                    n.len(),
                    points.len()
                )));
            }
            if let Some(i) = n.iter().position(|v| (v.norm() - 1.0).abs() > UNIT_TOL) {
                return Err(invalid(format!("normal {i} is not unit length")));
            }
        }
        Ok(Self {
            points,
            normals,
            sources,
        })
    }

    /// Points only, tagged visual.
    pub fn from_points(points: Vec<Vec3>) -> Self {
        let sources = vec![Source::Visual; points.len()];
        Self {
            points,
            normals: None,
            sources,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn count(&self, source: Source) -> usize {
        self.sources.iter().filter(|&&s| s == source).count()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.points.iter())
    }

    pub fn centroid(&self) -> Vec3 {
        if self.points.is_empty() {
            return Vec3::zeros();
        }
        self.points.iter().sum::<Vec3>() / self.points.len() as f64
    }

    /// Append another cloud. Normals survive only when both sides carry them.
    pub fn extend(&mut self, other: &PointCloud) {
        match (&mut self.normals, &other.normals) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (Some(_), None) if !other.is_empty() => self.normals = None,
            (None, Some(b)) if self.points.is_empty() => self.normals = Some(b.clone()),
            _ => {}
        }
        self.points.extend_from_slice(&other.points);
        self.sources.extend_from_slice(&other.sources);
    }

    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            sources: indices.iter().map(|&i| self.sources[i]).collect(),
        }
    }

    pub fn transformed(&self, scale: f64, translation: &Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| (p + translation) * scale).collect(),
            normals: self.normals.clone(),
            sources: self.sources.clone(),
        }
    }

    pub fn rotated(&self, rotation: &nalgebra::Rotation3<f64>) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| rotation * p).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| rotation * v).collect()),
            sources: self.sources.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_normals() {
        let p = vec![Vec3::zeros(), Vec3::x()];
        assert!(PointCloud::new(p.clone(), Some(vec![Vec3::x()]), Source::Visual).is_err());
        assert!(
            PointCloud::new(p.clone(), Some(vec![Vec3::x(), Vec3::x() * 1.1]), Source::Visual)
                .is_err()
        );
        let c = PointCloud::new(p, Some(vec![Vec3::x(), Vec3::y()]), Source::Haptic).unwrap();
        assert_eq!(c.count(Source::Haptic), 2);
    }

    #[test]
    fn extend_keeps_tags() {
        let mut a = PointCloud::new(vec![Vec3::zeros()], Some(vec![Vec3::z()]), Source::Visual)
            .unwrap();
        let b = PointCloud::new(vec![Vec3::x()], Some(vec![Vec3::x()]), Source::Haptic).unwrap();
        a.extend(&b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.count(Source::Haptic), 1);
        assert_eq!(a.normals.as_ref().unwrap().len(), 2);
    }
}
