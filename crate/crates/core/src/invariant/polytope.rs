use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use qhull::Qh;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::qp::{solve_qp, Qp, QpOptions};

/// Half-space `normal . x <= offset` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Convex polytope in 2 or 3 dimensions, kept as its hull vertices. Facets
/// are present when the polytope is full-dimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
}

fn scale_of(points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300)
}

impl Polytope {
    /// Convex hull of a point cloud.
    pub fn hull(points: &[Vec<f64>]) -> Result<Polytope> {
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::InvalidParameter("hull of an empty point set".into()))?;
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!(
                "polytopes must be 2D or 3D, got {dim}D"
            )));
        }
        if points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "points must share a dimension and be finite".into(),
            ));
        }
        Ok(match dim {
            2 => hull_2d(points),
            _ => hull_3d(points),
        })
    }

    pub fn single(point: Vec<f64>) -> Result<Polytope> {
        Self::hull(&[point])
    }

    /// Axis-aligned box `[lo, hi]`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Polytope> {
        let dim = lo.len();
        let corners = (0..1usize << dim)
            .map(|mask| {
                (0..dim)
                    .map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] })
                    .collect()
            })
            .collect::<Vec<Vec<f64>>>();
        Self::hull(&corners)
    }

    pub fn is_full_dimensional(&self) -> bool {
        !self.facets.is_empty()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.vertices.len() as f64;
        (0..self.dim)
            .map(|i| self.vertices.iter().map(|v| v[i]).sum::<f64>() / n)
            .collect()
    }

    /// Largest facet violation `normal . x - offset` (negative inside).
    pub fn facet_violation(&self, x: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|f| f.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - f.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Membership with absolute tolerance `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        if self.is_full_dimensional() {
            self.facet_violation(x) <= tol
        } else {
            self.distance(x).is_ok_and(|d| d <= tol)
        }
    }

    /// Euclidean distance from `x` to the polytope, by a small QP over the
    /// convex weights of the vertices.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        let m = self.vertices.len();
        let v = DMatrix::from_fn(self.dim, m, |i, j| self.vertices[j][i]);
        let x = DVector::from_column_slice(x);
        let reg = 1e-12 * (1.0 + v.norm_squared());
        let h = v.transpose() * &v + DMatrix::identity(m, m) * reg;
        let g = -(v.transpose() * &x);
        let mut qp = Qp::new(h, g);
        qp.a_eq = DMatrix::from_element(1, m, 1.0);
        qp.b_eq = DVector::from_element(1, 1.0);
        qp.a_in = -DMatrix::identity(m, m);
        qp.b_in = DVector::zeros(m);
        let sol = solve_qp(&qp, &QpOptions::default())?;
        let weights = sol.x.map(|w| w.max(0.0));
        let weights = &weights / weights.sum();
        Ok((v * weights - x).norm())
    }

    /// Image under a linear map.
    pub fn map(&self, m: &DMatrix<f64>) -> Result<Polytope> {
        if m.ncols() != self.dim || m.nrows() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "{}x{} map on a {}D polytope",
                m.nrows(),
                m.ncols(),
                self.dim
            )));
        }
        let points: Vec<Vec<f64>> = self
            .vertices
            .iter()
            .map(|v| {
                (m * DVector::from_column_slice(v))
                    .iter()
                    .copied()
                    .collect()
            })
            .collect();
        Self::hull(&points)
    }

    /// Minkowski sum, as the hull of all pairwise vertex sums.
    pub fn minkowski_sum(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim != other.dim {
            return Err(Error::InvalidParameter(
                "Minkowski sum of mixed dimensions".into(),
            ));
        }
        let mut points = Vec::with_capacity(self.vertices.len() * other.vertices.len());
        for a in &self.vertices {
            for b in &other.vertices {
                points.push(a.iter().zip(b).map(|(x, y)| x + y).collect());
            }
        }
        Self::hull(&points)
    }
}

/// Drops points that share a grid cell of size `tol` with an earlier one.
fn dedup(points: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut seen = HashSet::with_capacity(points.len());
    points
        .iter()
        .filter(|p| {
            seen.insert(
                p.iter()
                    .map(|v| (v / tol).round() as i64)
                    .collect::<Vec<_>>(),
            )
        })
        .cloned()
        .collect()
}

/// Extreme points of a collinear set along its direction.
fn segment(points: &[Vec<f64>], dim: usize) -> Polytope {
    let (mut i_far, mut d_far) = (0, 0.0);
    for (i, p) in points.iter().enumerate() {
        let d: f64 = p.iter().zip(&points[0]).map(|(a, b)| (a - b).powi(2)).sum();
        if d > d_far {
            (i_far, d_far) = (i, d);
        }
    }
    let (mut j_far, mut d_far) = (i_far, 0.0);
    for (j, p) in points.iter().enumerate() {
        let d: f64 = p
            .iter()
            .zip(&points[i_far])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        if d > d_far {
            (j_far, d_far) = (j, d);
        }
    }
    let mut vertices = vec![points[i_far].clone()];
    if j_far != i_far {
        vertices.push(points[j_far].clone());
    }
    Polytope {
        dim,
        vertices,
        facets: Vec::new(),
    }
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a - o).perp(&(b - o))
}

/// Monotone chain; returns counter-clockwise hull indices without collinear
/// points.
fn chain_2d(points: &[Vector2<f64>], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .x
            .total_cmp(&points[j].x)
            .then(points[i].y.total_cmp(&points[j].y))
    });
    let mut hull: Vec<usize> = Vec::with_capacity(2 * points.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(order.iter())
        } else {
            Box::new(order.iter().rev())
        };
        for &i in iter {
            while hull.len() >= start + 2
                && cross2(
                    &points[hull[hull.len() - 2]],
                    &points[hull[hull.len() - 1]],
                    &points[i],
                ) <= tol
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

fn hull_2d(points: &[Vec<f64>]) -> Polytope {
    let scale = scale_of(points);
    let unique = dedup(points, 1e-12 * scale);
    let pts: Vec<Vector2<f64>> = unique.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    let idx = chain_2d(&pts, 1e-12 * scale * scale);
    if idx.len() < 3 {
        return segment(&unique, 2);
    }
    let vertices: Vec<Vec<f64>> = idx.iter().map(|&i| unique[i].clone()).collect();
    let facets = (0..idx.len())
        .map(|k| {
            let a = pts[idx[k]];
            let b = pts[idx[(k + 1) % idx.len()]];
            let edge = b - a;
            let normal = Vector2::new(edge.y, -edge.x).normalize();
            Facet {
                normal: vec![normal.x, normal.y],
                offset: normal.dot(&a),
            }
        })
        .collect();
    Polytope {
        dim: 2,
        vertices,
        facets,
    }
}

fn hull_3d(points: &[Vec<f64>]) -> Polytope {
    let scale = scale_of(points);
    let unique = dedup(points, 1e-12 * scale);
    let pts: Vec<Vector3<f64>> = unique
        .iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect();
    let eps = 1e-11 * scale;

    // Initial simplex from extreme points.
    let far = |from: &dyn Fn(&Vector3<f64>) -> f64| {
        (0..pts.len())
            .max_by(|&i, &j| from(&pts[i]).total_cmp(&from(&pts[j])))
            .unwrap()
    };
    let i0 = far(&|p| p.x);
    let i1 = far(&|p| (p - pts[i0]).norm());
    let line = pts[i1] - pts[i0];
    if line.norm() <= eps {
        return segment(&unique, 3);
    }
    let i2 = far(&|p| (p - pts[i0]).cross(&line).norm());
    let plane = line.cross(&(pts[i2] - pts[i0]));
    if plane.norm() <= eps * line.norm() {
        return segment(&unique, 3);
    }
    let i3 = far(&|p| (p - pts[i0]).dot(&plane).abs());
    if (pts[i3] - pts[i0]).dot(&plane).abs() <= eps * plane.norm() {
        return planar_3d(&unique, &pts, pts[i0], plane.normalize(), scale);
    }

    let mut coords: Vec<f64> = unique.iter().flatten().copied().collect();
    let qh = match Qh::builder().capture_stderr(true).build(3, &mut coords) {
        Ok(qh) => qh,
        Err(_) => return planar_3d(&unique, &pts, pts[i0], plane.normalize(), scale),
    };
    let mut used: Vec<usize> = qh.vertices().filter_map(|v| v.index(&qh)).collect();
    used.sort_unstable();
    let vertices = used.iter().map(|&i| unique[i].clone()).collect();
    let facets = qh
        .facets()
        .filter_map(|f| {
            let n = f.normal()?;
            Some(Facet {
                normal: n.to_vec(),
                offset: -f.offset(),
            })
        })
        .collect();
    Polytope {
        dim: 3,
        vertices,
        facets,
    }
}

/// Hull of coplanar 3D points, computed in plane coordinates.
fn planar_3d(
    unique: &[Vec<f64>],
    pts: &[Vector3<f64>],
    origin: Vector3<f64>,
    normal: Vector3<f64>,
    scale: f64,
) -> Polytope {
    let seed = if normal.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = normal.cross(&seed).normalize();
    let e2 = normal.cross(&e1);
    let flat: Vec<Vector2<f64>> = pts
        .iter()
        .map(|p| Vector2::new((p - origin).dot(&e1), (p - origin).dot(&e2)))
        .collect();
    let idx = chain_2d(&flat, 1e-12 * scale * scale);
    Polytope {
        dim: 3,
        vertices: idx.iter().map(|&i| unique[i].clone()).collect(),
        facets: Vec::new(),
    }
}
