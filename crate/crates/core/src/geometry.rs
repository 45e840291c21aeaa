//! Observation regions and quadrature over them.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::gauss_legendre;

/// A location in the observation region. One-dimensional processes use `x` only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub const fn line(t: f64) -> Self {
        Self { x: t, y: 0.0 }
    }
}

/// Relative slack used for closed-region membership tests.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Interval { lower: f64, upper: f64 },
    Polygon(Polygon),
}

/// A simple polygon, vertices in order (either orientation).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
    area: f64,
    min: Point,
    max: Point,
}

impl Region {
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidRegion(format!(
                "interval needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Region::Interval { lower, upper })
    }

    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        Polygon::new(vertices).map(Region::Polygon)
    }

    pub fn dimension(&self) -> usize {
        match self {
            Region::Interval { .. } => 1,
            Region::Polygon(_) => 2,
        }
    }

    /// Length or area.
    pub fn measure(&self) -> f64 {
        match self {
            Region::Interval { lower, upper } => upper - lower,
            Region::Polygon(p) => p.area,
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Region::Interval { lower, upper } => (Point::line(*lower), Point::line(*upper)),
            Region::Polygon(p) => (p.min, p.max),
        }
    }

    /// Closed-region membership: boundary points are inside.
    pub fn contains(&self, pt: Point) -> bool {
        match self {
            Region::Interval { lower, upper } => {
                let slack = BOUNDARY_EPS * (upper - lower);
                pt.x >= lower - slack && pt.x <= upper + slack
            }
            Region::Polygon(p) => p.contains(pt),
        }
    }

    pub fn check(&self, pt: Point) -> Result<()> {
        if self.contains(pt) {
            Ok(())
        } else {
            Err(Error::OutOfRegion { x: pt.x, y: pt.y })
        }
    }
}

impl Polygon {
    pub fn new(mut vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() >= 2 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::InvalidRegion(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::InvalidRegion("non-finite polygon vertex".into()));
        }
        let n = vertices.len();
        let mut twice_area = 0.0;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            twice_area += a.x * b.y - b.x * a.y;
        }
        let area = 0.5 * twice_area.abs();
        let mut min = vertices[0];
        let mut max = vertices[0];
        for v in &vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        let scale = (max.x - min.x).max(max.y - min.y);
        if area <= 1e-14 * scale * scale || scale == 0.0 {
            return Err(Error::InvalidRegion("polygon has zero area".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacent edges share a vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (p1, p2) = (vertices[i], vertices[(i + 1) % n]);
                let (q1, q2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(p1, p2, q1, q2) {
                    return Err(Error::InvalidRegion(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(Self { vertices, area, min, max })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn contains(&self, pt: Point) -> bool {
        let scale = (self.max.x - self.min.x).max(self.max.y - self.min.y);
        let eps = BOUNDARY_EPS * scale;
        if pt.x < self.min.x - eps
            || pt.x > self.max.x + eps
            || pt.y < self.min.y - eps
            || pt.y > self.max.y + eps
        {
            return false;
        }
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if on_segment(a, b, pt, eps) {
                return true;
            }
            if (a.y > pt.y) != (b.y > pt.y) {
                let x_cross = a.x + (pt.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if pt.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point, eps: f64) -> bool {
    let len = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
    if len == 0.0 {
        return (p.x - a.x).abs() <= eps && (p.y - a.y).abs() <= eps;
    }
    if cross(a, b, p).abs() > eps * len {
        return false;
    }
    p.x >= a.x.min(b.x) - eps
        && p.x <= a.x.max(b.x) + eps
        && p.y >= a.y.min(b.y) - eps
        && p.y <= a.y.max(b.y) + eps
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let touches = |a: Point, b: Point, p: Point, d: f64| d == 0.0 && on_segment(a, b, p, 0.0);
    touches(q1, q2, p1, d1) || touches(q1, q2, p2, d2) || touches(p1, p2, q1, d3) || touches(p1, p2, q2, d4)
}

/// Nodes and positive weights approximating integrals over a region.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: FnMut(Point) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Build a quadrature rule: 5-point Gauss–Legendre on `resolution` equal panels in 1-D,
/// or a `resolution × resolution` midpoint grid over the bounding box clipped to the
/// polygon at cell centres in 2-D.
pub fn build_quadrature(region: &Region, resolution: usize) -> Result<QuadratureRule> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature resolution must be at least 2, got {resolution}"
        )));
    }
    if region.measure() <= 0.0 {
        return Err(Error::InvalidRegion("region has zero measure".into()));
    }
    match region {
        Region::Interval { lower, upper } => {
            let (gx, gw) = gauss_legendre(5);
            let h = (upper - lower) / resolution as f64;
            let mut nodes = Vec::with_capacity(resolution * gx.len());
            let mut weights = Vec::with_capacity(resolution * gx.len());
            for panel in 0..resolution {
                let mid = lower + (panel as f64 + 0.5) * h;
                for (x, w) in gx.iter().zip(gw) {
                    nodes.push(Point::line(mid + 0.5 * h * x));
                    weights.push(0.5 * h * w);
                }
            }
            Ok(QuadratureRule { nodes, weights })
        }
        Region::Polygon(poly) => {
            let (min, max) = (poly.min, poly.max);
            let hx = (max.x - min.x) / resolution as f64;
            let hy = (max.y - min.y) / resolution as f64;
            let cell = hx * hy;
            let mut nodes = Vec::new();
            for j in 0..resolution {
                let y = min.y + (j as f64 + 0.5) * hy;
                for i in 0..resolution {
                    let p = Point::new(min.x + (i as f64 + 0.5) * hx, y);
                    if poly.contains(p) {
                        nodes.push(p);
                    }
                }
            }
            if nodes.is_empty() {
                return Err(Error::InvalidRegion(format!(
                    "no grid cell centre falls inside the polygon at resolution {resolution}"
                )));
            }
            let weights = alloc::vec![cell; nodes.len()];
            Ok(QuadratureRule { nodes, weights })
        }
    }
}
