//! Non-negative basis families, their integral vector and roughness-penalty Gram matrix.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Point, QuadratureRule, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    CubicBSpline,
    GaussianRbf,
}

/// How the basis functions are laid out over the region.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisLayout {
    /// `spans` equal-width knot spans over the interval; `q = spans + 3`.
    EquispacedKnots { spans: usize },
    /// Explicit strictly increasing interior knots; `q = knots.len() + 4`.
    InteriorKnots(Vec<f64>),
    /// `rows × cols` centres evenly spaced over the bounding box (edges included).
    /// Bandwidth defaults to 1.2 times the larger centre spacing.
    CenterGrid { rows: usize, cols: usize, bandwidth: Option<f64> },
    Centers { centers: Vec<Point>, bandwidth: f64 },
}

/// Default RBF bandwidth as a multiple of the centre spacing.
pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// Full clamped knot vector of a cubic spline.
    BSpline { knots: Vec<f64> },
    Rbf { centers: Vec<Point>, bandwidth: f64 },
}

/// A fixed basis `β_1..β_q` over a region, with `a = ∫β` and penalty Gram `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    kind: Kind,
    region: Region,
    integrals: Vec<f64>,
    penalty: DMatrix<f64>,
}

/// Non-zero entries of one basis row: `(index, value)`.
pub type SparseRow = Vec<(usize, f64)>;

impl BasisSystem {
    pub fn family(&self) -> BasisFamily {
        match self.kind {
            Kind::BSpline { .. } => BasisFamily::CubicBSpline,
            Kind::Rbf { .. } => BasisFamily::GaussianRbf,
        }
    }

    pub fn size(&self) -> usize {
        match &self.kind {
            Kind::BSpline { knots } => knots.len() - 4,
            Kind::Rbf { centers, .. } => centers.len(),
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Integral vector `a_j = ∫_B β_j`.
    pub fn integrals(&self) -> &[f64] {
        &self.integrals
    }

    /// Penalty Gram matrix `Ω` with `g(cᵀβ) = cᵀΩc`.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn knots(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::BSpline { knots } => Some(knots),
            Kind::Rbf { .. } => None,
        }
    }

    pub fn centers(&self) -> Option<(&[Point], f64)> {
        match &self.kind {
            Kind::Rbf { centers, bandwidth } => Some((centers, *bandwidth)),
            Kind::BSpline { .. } => None,
        }
    }

    /// `cᵀΩc`.
    pub fn roughness(&self, coeffs: &[f64]) -> f64 {
        let q = self.size();
        let mut s = 0.0;
        for j in 0..q {
            let mut row = 0.0;
            for l in 0..q {
                row += self.penalty[(j, l)] * coeffs[l];
            }
            s += coeffs[j] * row;
        }
        s
    }

    /// Non-zero basis values at `pt`, without a region check.
    pub fn values_at(&self, pt: Point, out: &mut SparseRow) {
        out.clear();
        match &self.kind {
            Kind::BSpline { knots } => {
                let span = find_span(knots, pt.x);
                let vals = bspline_derivs(knots, span, pt.x, 0);
                for (r, v) in vals[0].iter().enumerate() {
                    if *v != 0.0 {
                        out.push((span - 3 + r, *v));
                    }
                }
            }
            Kind::Rbf { centers, bandwidth } => {
                let inv = 1.0 / (2.0 * bandwidth * bandwidth);
                for (j, c) in centers.iter().enumerate() {
                    let d2 = (pt.x - c.x).powi(2) + (pt.y - c.y).powi(2);
                    let v = (-d2 * inv).exp();
                    if v > 0.0 {
                        out.push((j, v));
                    }
                }
            }
        }
    }

    /// Non-zero second derivatives at `pt` as `(index, [∂xx, ∂xy, ∂yy])`.
    /// In 1-D only the first slot is used.
    pub fn hessians_at(&self, pt: Point) -> Vec<(usize, [f64; 3])> {
        match &self.kind {
            Kind::BSpline { knots } => {
                let span = find_span(knots, pt.x);
                let d = bspline_derivs(knots, span, pt.x, 2);
                (0..4).map(|r| (span - 3 + r, [d[2][r], 0.0, 0.0])).collect()
            }
            Kind::Rbf { centers, bandwidth } => {
                let h2 = bandwidth * bandwidth;
                let h4 = h2 * h2;
                centers
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        let dx = pt.x - c.x;
                        let dy = pt.y - c.y;
                        let v = (-(dx * dx + dy * dy) / (2.0 * h2)).exp();
                        (j, [v * (dx * dx / h4 - 1.0 / h2), v * dx * dy / h4, v * (dy * dy / h4 - 1.0 / h2)])
                    })
                    .collect()
            }
        }
    }

    pub fn evaluate_at(&self, pt: Point) -> Result<Vec<f64>> {
        self.region.check(pt)?;
        let mut row = SparseRow::new();
        self.values_at(pt, &mut row);
        let mut dense = vec![0.0; self.size()];
        for (j, v) in row {
            dense[j] = v;
        }
        Ok(dense)
    }

    /// Dense `|points| × q` matrix of basis values.
    pub fn evaluate(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        let q = self.size();
        let mut m = DMatrix::zeros(points.len(), q);
        let mut row = SparseRow::new();
        for (i, &pt) in points.iter().enumerate() {
            self.region.check(pt)?;
            self.values_at(pt, &mut row);
            for &(j, v) in &row {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    /// Sparse design matrix of basis values at `points`.
    pub fn design(&self, points: &[Point]) -> Result<Design> {
        let mut d = Design { offsets: vec![0], cols: Vec::new(), vals: Vec::new(), ncols: self.size() };
        let mut row = SparseRow::new();
        for &pt in points {
            self.region.check(pt)?;
            self.values_at(pt, &mut row);
            for &(j, v) in &row {
                d.cols.push(j as u32);
                d.vals.push(v);
            }
            d.offsets.push(d.cols.len());
        }
        Ok(d)
    }
}

/// Compressed sparse rows of basis values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Design {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    ncols: usize,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[s..e], &self.vals[s..e])
    }

    #[inline]
    pub fn dot(&self, i: usize, coeffs: &[f64]) -> f64 {
        let (c, v) = self.row(i);
        c.iter().zip(v).map(|(&j, &x)| x * coeffs[j as usize]).sum()
    }

    /// Design from dense rows; zero entries are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Design {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut out = Design { offsets: vec![0], cols: Vec::new(), vals: Vec::new(), ncols };
        for r in rows {
            for (j, &v) in r.iter().enumerate() {
                if v != 0.0 {
                    out.cols.push(j as u32);
                    out.vals.push(v);
                }
            }
            out.offsets.push(out.cols.len());
        }
        out
    }

    /// Concatenate row blocks.
    pub fn stack(parts: &[&Design]) -> Design {
        let ncols = parts.first().map_or(0, |d| d.ncols);
        let mut out = Design { offsets: vec![0], cols: Vec::new(), vals: Vec::new(), ncols };
        for d in parts {
            for i in 0..d.rows() {
                let (c, v) = d.row(i);
                out.cols.extend_from_slice(c);
                out.vals.extend_from_slice(v);
                out.offsets.push(out.cols.len());
            }
        }
        out
    }
}

/// Build a basis over `region`, computing `a` and `Ω` with `quad`.
pub fn build_basis(
    family: BasisFamily,
    region: &Region,
    layout: &BasisLayout,
    quad: &QuadratureRule,
) -> Result<BasisSystem> {
    let kind = match (family, region, layout) {
        (BasisFamily::CubicBSpline, Region::Interval { lower, upper }, layout) => {
            let interior: Vec<f64> = match layout {
                BasisLayout::EquispacedKnots { spans } => {
                    if *spans < 2 {
                        return Err(Error::InvalidBasis(format!(
                            "need at least 2 knot spans (one interior knot), got {spans}"
                        )));
                    }
                    let h = (upper - lower) / *spans as f64;
                    (1..*spans).map(|i| lower + i as f64 * h).collect()
                }
                BasisLayout::InteriorKnots(k) => {
                    if k.is_empty() {
                        return Err(Error::InvalidBasis("need at least one interior knot".into()));
                    }
                    if k.iter().any(|&t| !(t > *lower && t < *upper)) {
                        return Err(Error::InvalidBasis("knots outside region".into()));
                    }
                    if k.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::InvalidBasis("interior knots must be strictly increasing".into()));
                    }
                    k.clone()
                }
                _ => return Err(Error::InvalidBasis("B-splines need a knot layout".into())),
            };
            let mut knots = vec![*lower; 4];
            knots.extend(interior);
            knots.extend([*upper; 4]);
            Kind::BSpline { knots }
        }
        (BasisFamily::CubicBSpline, Region::Polygon(_), _) => {
            return Err(Error::InvalidBasis("cubic B-splines are one-dimensional".into()))
        }
        (BasisFamily::GaussianRbf, Region::Polygon(_), layout) => {
            let (centers, bandwidth) = match layout {
                BasisLayout::CenterGrid { rows, cols, bandwidth } => {
                    let (min, max) = region.bounds();
                    let (rows, cols) = (*rows, *cols);
                    if rows < 2 || cols < 2 {
                        return Err(Error::InvalidBasis(format!(
                            "centre grid must be at least 2x2, got {rows}x{cols}"
                        )));
                    }
                    let dx = (max.x - min.x) / (cols - 1) as f64;
                    let dy = (max.y - min.y) / (rows - 1) as f64;
                    let mut centers = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            centers.push(Point::new(min.x + c as f64 * dx, min.y + r as f64 * dy));
                        }
                    }
                    let h = bandwidth.unwrap_or(DEFAULT_BANDWIDTH_FACTOR * dx.max(dy));
                    (centers, h)
                }
                BasisLayout::Centers { centers, bandwidth } => (centers.clone(), *bandwidth),
                _ => return Err(Error::InvalidBasis("RBFs need a centre layout".into())),
            };
            if centers.len() < 4 {
                return Err(Error::InvalidBasis(format!("need at least 4 centres, got {}", centers.len())));
            }
            if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                return Err(Error::InvalidBasis(format!("bandwidth must be positive, got {bandwidth}")));
            }
            Kind::Rbf { centers, bandwidth }
        }
        (BasisFamily::GaussianRbf, Region::Interval { .. }, _) => {
            return Err(Error::InvalidBasis("Gaussian RBFs are two-dimensional".into()))
        }
    };
    let q = match &kind {
        Kind::BSpline { knots } => knots.len() - 4,
        Kind::Rbf { centers, .. } => centers.len(),
    };
    let mut basis = BasisSystem {
        kind,
        region: region.clone(),
        integrals: vec![0.0; q],
        penalty: DMatrix::zeros(q, q),
    };
    let mut row = SparseRow::new();
    for (&pt, &w) in quad.nodes.iter().zip(&quad.weights) {
        basis.values_at(pt, &mut row);
        for &(j, v) in &row {
            basis.integrals[j] += w * v;
        }
    }
    if let Some(j) = basis.integrals.iter().position(|&a| !(a > 0.0)) {
        return Err(Error::InvalidBasis(format!(
            "basis function {j} has zero integral over the region"
        )));
    }
    basis.penalty = penalty_gram(&basis, quad);
    Ok(basis)
}

/// `Ω_jl = ∫ ⟨Hβ_j, Hβ_l⟩_F` by quadrature, with the mixed partial counted twice.
pub fn penalty_gram(basis: &BasisSystem, quad: &QuadratureRule) -> DMatrix<f64> {
    let q = basis.size();
    let mut omega = DMatrix::zeros(q, q);
    for (&pt, &w) in quad.nodes.iter().zip(&quad.weights) {
        let h = basis.hessians_at(pt);
        for &(j, hj) in &h {
            for &(l, hl) in &h {
                if l < j {
                    continue;
                }
                let f = hj[0] * hl[0] + 2.0 * hj[1] * hl[1] + hj[2] * hl[2];
                omega[(j, l)] += w * f;
            }
        }
    }
    for j in 0..q {
        for l in 0..j {
            omega[(j, l)] = omega[(l, j)];
        }
    }
    omega
}

/// Knot span index `i` with `knots[i] <= x < knots[i+1]`, clamped to the valid range.
fn find_span(knots: &[f64], x: f64) -> usize {
    let n = knots.len() - 4; // number of basis functions
    if x >= knots[n] {
        return n - 1;
    }
    if x <= knots[3] {
        return 3;
    }
    // binary search on [3, n)
    let (mut lo, mut hi) = (3, n);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Values and derivatives up to `nd` of the four cubic B-splines non-zero on `span`
/// (triangular de Boor recursion with derivative extraction).
fn bspline_derivs(knots: &[f64], span: usize, x: f64, nd: usize) -> [[f64; 4]; 3] {
    const P: usize = 3;
    let mut ndu = [[0.0f64; 4]; 4];
    let mut left = [0.0f64; 4];
    let mut right = [0.0f64; 4];
    ndu[0][0] = 1.0;
    for j in 1..=P {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let mut ders = [[0.0f64; 4]; 3];
    for j in 0..=P {
        ders[0][j] = ndu[j][P];
    }
    if nd == 0 {
        return ders;
    }
    let mut a = [[0.0f64; 4]; 2];
    for r in 0..=P {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = P - k;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { P - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            core::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = P as f64;
    for k in 1..=nd {
        for j in 0..=P {
            ders[k][j] *= factor;
        }
        factor *= (P - k) as f64;
    }
    ders
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_quadrature;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    /// Textbook Cox–de Boor recursion; independent of the triangular evaluator.
    fn cox_de_boor(knots: &[f64], i: usize, order: usize, x: f64, last: bool) -> f64 {
        if order == 1 {
            let inside = knots[i] <= x && x < knots[i + 1];
            // right end belongs to the last non-degenerate span
            let at_end = last && x == knots[i + 1] && knots[i] < knots[i + 1];
            return if inside || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + order - 1] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, x, last);
        }
        let d2 = knots[i + order] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + order] - x) / d2 * cox_de_boor(knots, i + 1, order - 1, x, last);
        }
        v
    }

    fn unit_bspline(spans: usize) -> BasisSystem {
        let r = Region::interval(0.0, 1.0).unwrap();
        let q = build_quadrature(&r, 20 * spans).unwrap();
        build_basis(BasisFamily::CubicBSpline, &r, &BasisLayout::EquispacedKnots { spans }, &q).unwrap()
    }

    fn rect_rbf() -> BasisSystem {
        let r = Region::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let q = build_quadrature(&r, 120).unwrap();
        build_basis(
            BasisFamily::GaussianRbf,
            &r,
            &BasisLayout::CenterGrid { rows: 7, cols: 7, bandwidth: None },
            &q,
        )
        .unwrap()
    }

    #[test]
    fn ten_spans_give_thirteen_functions() {
        let b = unit_bspline(10);
        assert_eq!(b.size(), 13);
        let knots = b.knots().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x: f64 = rng.random();
            let row = b.evaluate_at(Point::line(x)).unwrap();
            for (j, v) in row.iter().enumerate() {
                let oracle = cox_de_boor(knots, j, 4, x, true);
                assert_relative_eq!(*v, oracle, epsilon = 1e-13);
            }
        }
        let end = b.evaluate_at(Point::line(1.0)).unwrap();
        assert_relative_eq!(end[12], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn seven_by_seven_grid_has_49_centres() {
        assert_eq!(rect_rbf().size(), 49);
    }

    #[test]
    fn partition_of_unity() {
        let b = unit_bspline(7);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.random();
            let s: f64 = b.evaluate_at(Point::line(x)).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn values_non_negative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = unit_bspline(5);
        for _ in 0..100 {
            let row = b.evaluate_at(Point::line(rng.random())).unwrap();
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        let r = rect_rbf();
        for _ in 0..100 {
            let p = Point::new(2.0 * rng.random::<f64>(), rng.random());
            assert!(r.evaluate_at(p).unwrap().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rbf_closed_forms() {
        let b = rect_rbf();
        let (centers, h) = b.centers().unwrap();
        let c = centers[24];
        let at_center = b.evaluate_at(c).unwrap();
        assert_relative_eq!(at_center[24], 1.0, epsilon = 1e-15);
        let off = b.evaluate_at(Point::new(c.x + h, c.y)).unwrap();
        assert_relative_eq!(off[24], (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn out_of_region_rejected() {
        let b = unit_bspline(5);
        assert!(matches!(b.evaluate(&[Point::line(1.2)]), Err(Error::OutOfRegion { .. })));
    }

    #[test]
    fn constant_function_has_zero_roughness() {
        let b = unit_bspline(5);
        let ones = vec![1.0; b.size()];
        assert!(b.roughness(&ones).abs() < 1e-8);
        // a linear function is also annihilated (Greville abscissae)
        let knots = b.knots().unwrap();
        let lin: Vec<f64> = (0..b.size()).map(|j| (knots[j + 1] + knots[j + 2] + knots[j + 3]) / 3.0).collect();
        assert!(b.roughness(&lin).abs() < 1e-8);
    }

    #[test]
    fn penalty_matches_finite_difference_oracle() {
        let b = unit_bspline(5);
        let q = b.size();
        let knots = b.knots().unwrap().to_vec();
        let eps = 1e-5;
        // second differences of the recursive definition, trapezoid rule within each knot span
        let second = |j: usize, x: f64| {
            let v = |t: f64| cox_de_boor(&knots, j, 4, t, true);
            (v(x + eps) - 2.0 * v(x) + v(x - eps)) / (eps * eps)
        };
        let mut oracle: DMatrix<f64> = DMatrix::zeros(q, q);
        let per_span = 4000;
        for s in 3..knots.len() - 4 {
            let (lo, hi) = (knots[s], knots[s + 1]);
            let h = (hi - lo) / per_span as f64;
            let grid: Vec<f64> = (0..=per_span)
                .map(|i| (lo + i as f64 * h).clamp(lo + 2.0 * eps, hi - 2.0 * eps))
                .collect();
            let d2: Vec<Vec<f64>> = (0..q).map(|j| grid.iter().map(|&x| second(j, x)).collect()).collect();
            for j in 0..q {
                for l in 0..q {
                    let mut acc = 0.0;
                    for i in 0..=per_span {
                        let w = if i == 0 || i == per_span { 0.5 * h } else { h };
                        acc += w * d2[j][i] * d2[l][i];
                    }
                    oracle[(j, l)] += acc;
                }
            }
        }
        let scale = oracle.amax();
        for j in 0..q {
            for l in 0..q {
                let diff = (b.penalty()[(j, l)] - oracle[(j, l)]).abs();
                assert!(
                    diff <= 1e-4 * scale,
                    "({j},{l}): {} vs {}",
                    b.penalty()[(j, l)],
                    oracle[(j, l)]
                );
            }
        }
    }

    #[test]
    fn penalty_is_symmetric_psd() {
        for b in [unit_bspline(10), rect_rbf()] {
            let om = b.penalty();
            assert_relative_eq!(om.clone(), om.transpose(), epsilon = 1e-12);
            let eig = om.clone().symmetric_eigenvalues();
            let norm = om.norm();
            assert!(eig.iter().all(|&e| e >= -1e-9 * norm));
        }
    }

    #[test]
    fn integral_vector_consistent_with_quadrature() {
        let r = Region::interval(0.0, 1.0).unwrap();
        let quad = build_quadrature(&r, 100).unwrap();
        let b = build_basis(BasisFamily::CubicBSpline, &r, &BasisLayout::EquispacedKnots { spans: 10 }, &quad)
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let c: Vec<f64> = (0..b.size()).map(|_| rng.random::<f64>()).collect();
            let lhs: f64 = c.iter().zip(b.integrals()).map(|(c, a)| c * a).sum();
            let rhs = quad.integrate(|p| {
                b.evaluate_at(p).unwrap().iter().zip(&c).map(|(v, c)| v * c).sum::<f64>()
            });
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs());
        }
        // B-spline integrals have the closed form (t_{j+4} - t_j) / 4
        let knots = b.knots().unwrap();
        for (j, a) in b.integrals().iter().enumerate() {
            assert_relative_eq!(*a, (knots[j + 4] - knots[j]) / 4.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn quadratic_form_matches_direct_hessian_quadrature() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for (b, res) in [(unit_bspline(6), 60usize), (rect_rbf(), 120)] {
            let quad = build_quadrature(b.region(), res).unwrap();
            for _ in 0..10 {
                let c: Vec<f64> = (0..b.size()).map(|_| rng.random::<f64>() - 0.3).collect();
                let direct = quad.integrate(|p| {
                    let mut hs = [0.0; 3];
                    for (j, h) in b.hessians_at(p) {
                        for k in 0..3 {
                            hs[k] += c[j] * h[k];
                        }
                    }
                    hs[0] * hs[0] + 2.0 * hs[1] * hs[1] + hs[2] * hs[2]
                });
                let form = b.roughness(&c);
                assert!((form - direct).abs() <= 1e-6 * direct.abs(), "{form} vs {direct}");
            }
        }
    }

    #[test]
    fn rbf_hessian_matches_finite_differences() {
        let b = rect_rbf();
        let p = Point::new(0.83, 0.41);
        let e = 1e-4;
        let val = |p: Point| b.evaluate_at(p).unwrap();
        let h = b.hessians_at(p);
        for (j, hj) in h.iter().take(10) {
            let fxx = (val(Point::new(p.x + e, p.y))[*j] - 2.0 * val(p)[*j] + val(Point::new(p.x - e, p.y))[*j]) / (e * e);
            let fxy = (val(Point::new(p.x + e, p.y + e))[*j] - val(Point::new(p.x + e, p.y - e))[*j]
                - val(Point::new(p.x - e, p.y + e))[*j]
                + val(Point::new(p.x - e, p.y - e))[*j])
                / (4.0 * e * e);
            assert!((hj[0] - fxx).abs() < 1e-5 * (1.0 + fxx.abs()));
            assert!((hj[1] - fxy).abs() < 1e-5 * (1.0 + fxy.abs()));
        }
    }

    #[test]
    fn invalid_layouts() {
        let r = Region::interval(0.0, 1.0).unwrap();
        let q = build_quadrature(&r, 10).unwrap();
        assert!(build_basis(BasisFamily::CubicBSpline, &r, &BasisLayout::EquispacedKnots { spans: 1 }, &q).is_err());
        assert!(build_basis(BasisFamily::CubicBSpline, &r, &BasisLayout::InteriorKnots(vec![0.5, 1.5]), &q).is_err());
        let sq = Region::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let q2 = build_quadrature(&sq, 20).unwrap();
        let bad = BasisLayout::CenterGrid { rows: 3, cols: 3, bandwidth: Some(0.0) };
        assert!(build_basis(BasisFamily::GaussianRbf, &sq, &bad, &q2).is_err());
    }
}
