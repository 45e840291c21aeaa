//! Maximisation steps: constrained component coefficients and Gamma score parameters.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSystem, Design};
use crate::error::{Error, Result};
use crate::estep::{designs, EStepStats};
use crate::math::{digamma, ln_gamma, trigamma};
use crate::model::{dot, PointPattern, ScoreParams};
use crate::par;

/// Responsibility mass below which a component counts as starved.
pub const STARVATION_MASS: f64 = 1e-3;

/// Euclidean projection onto `{c : aᵀc = 1, c ≥ 0}` (`a > 0`).
pub fn project_feasible(v: &[f64], a: &[f64]) -> Vec<f64> {
    // c_j = max(0, v_j − τ a_j) with τ chosen so that aᵀc = 1
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| (v[j] / a[j]).total_cmp(&(v[i] / a[i])));
    let (mut av, mut aa) = (0.0, 0.0);
    let mut tau = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        av += a[i] * v[i];
        aa += a[i] * a[i];
        tau = (av - 1.0) / aa;
        let next = idx.get(r + 1).map_or(f64::NEG_INFINITY, |&j| v[j] / a[j]);
        if tau >= next {
            break;
        }
    }
    v.iter().zip(a).map(|(&x, &y)| (x - tau * y).max(0.0)).collect()
}

/// One component's concave subproblem
/// `Σ_j w_j log(cᵀβ(t_j)) − scale · cᵀΩc` over the constraint set.
pub(crate) struct ComponentProblem<'a> {
    pub design: &'a Design,
    pub weights: &'a [f64],
    pub integrals: &'a [f64],
    pub penalty: &'a DMatrix<f64>,
    pub scale: f64,
}

impl ComponentProblem<'_> {
    pub fn objective(&self, c: &[f64]) -> f64 {
        let mut f = 0.0;
        for (j, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                let phi = self.design.dot(j, c);
                if !(phi > 0.0) {
                    return f64::NEG_INFINITY;
                }
                f += w * phi.ln();
            }
        }
        if self.scale > 0.0 {
            f -= self.scale * quad_form(self.penalty, c);
        }
        f
    }

    pub fn gradient(&self, c: &[f64]) -> Vec<f64> {
        let q = c.len();
        let mut g = vec![0.0; q];
        for (j, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                let phi = self.design.dot(j, c);
                let (cols, vals) = self.design.row(j);
                for (&i, &b) in cols.iter().zip(vals) {
                    g[i as usize] += w * b / phi;
                }
            }
        }
        if self.scale > 0.0 {
            let oc = self.penalty * DVector::from_column_slice(c);
            for (gi, o) in g.iter_mut().zip(oc.iter()) {
                *gi -= 2.0 * self.scale * o;
            }
        }
        g
    }

    fn hessian(&self, c: &[f64]) -> DMatrix<f64> {
        let q = c.len();
        let mut h = DMatrix::zeros(q, q);
        for (j, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                let phi = self.design.dot(j, c);
                let f = w / (phi * phi);
                let (cols, vals) = self.design.row(j);
                for (&r, &x) in cols.iter().zip(vals) {
                    for (&s, &y) in cols.iter().zip(vals) {
                        h[(r as usize, s as usize)] -= f * x * y;
                    }
                }
            }
        }
        if self.scale > 0.0 {
            h -= self.penalty * (2.0 * self.scale);
        }
        h
    }

    /// Equality-constrained Newton direction on the face of currently positive coordinates.
    fn face_direction(&self, c: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let free: Vec<usize> = (0..c.len()).filter(|&j| c[j] > 0.0).collect();
        let nf = free.len();
        if nf < 2 {
            return None;
        }
        let h = self.hessian(c);
        let mut kkt = DMatrix::zeros(nf + 1, nf + 1);
        let mut rhs = DVector::zeros(nf + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                kkt[(r, s)] = -h[(i, j)];
            }
            kkt[(r, nf)] = self.integrals[i];
            kkt[(nf, r)] = self.integrals[i];
            rhs[r] = g[i];
        }
        let sol = kkt.lu().solve(&rhs)?;
        let mut d = vec![0.0; c.len()];
        for (r, &i) in free.iter().enumerate() {
            d[i] = sol[r];
        }
        d.iter().all(|x| x.is_finite()).then_some(d)
    }

    /// Scaled KKT residual: free coordinates need zero reduced gradient, active ones a
    /// non-positive one, after removing the `aᵀc = 1` multiplier.
    pub fn kkt_residual(&self, c: &[f64], g: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&cj, &gj), &aj) in c.iter().zip(g).zip(self.integrals) {
            if cj > 0.0 {
                num += aj * gj;
                den += aj * aj;
            }
        }
        let lambda = if den > 0.0 { num / den } else { 0.0 };
        let mut res: f64 = 0.0;
        for ((&cj, &gj), &aj) in c.iter().zip(g).zip(self.integrals) {
            let r = gj - lambda * aj;
            res = res.max(if cj > 0.0 { r.abs() } else { r.max(0.0) });
        }
        // gradient magnitudes scale with the multiplier (the responsibility mass at ζ = 0)
        res / lambda.abs().max(1.0)
    }

    /// Spectral projected-gradient ascent (Barzilai–Borwein steps, non-monotone Armijo
    /// search over the last few objective values). Returns the best iterate visited.
    pub fn solve(&self, start: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
        const MEMORY: usize = 10;
        let mut c = start.to_vec();
        let mut f = self.objective(&c);
        let mut g = self.gradient(&c);
        let mut res = self.kkt_residual(&c, &g);
        let mut best = (c.clone(), f, res);
        if !f.is_finite() {
            return (c, res);
        }
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cnorm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut step = if gnorm > 0.0 { (0.1 * cnorm / gnorm).max(1e-30) } else { 1.0 };
        let mut recent = vec![f];
        for _ in 0..max_iter {
            if res <= tol {
                break;
            }
            let trial: Vec<f64> = c.iter().zip(&g).map(|(x, d)| x + step * d).collect();
            let d: Vec<f64> = project_feasible(&trial, self.integrals).iter().zip(&c).map(|(n, o)| n - o).collect();
            let slope: f64 = d.iter().zip(&g).map(|(x, y)| x * y).sum();
            if slope <= 0.0 {
                break;
            }
            let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cn: Vec<f64> = c.iter().zip(&d).map(|(x, y)| (x + lambda * y).max(0.0)).collect();
                let fn_ = self.objective(&cn);
                if fn_.is_finite() && fn_ >= reference + 1e-4 * lambda * slope - 1e-13 * reference.abs() {
                    accepted = Some((cn, fn_));
                    break;
                }
                lambda *= 0.5;
            }
            let Some((mut cn, mut fn_)) = accepted else { break };
            let mut gn = self.gradient(&cn);
            if self.kkt_residual(&cn, &gn) > tol {
                if let Some(nd) = self.face_direction(&cn, &gn) {
                    // longest step keeping c ≥ 0, then monotone backtracking
                    let mut t: f64 = 1.0;
                    for (x, y) in cn.iter().zip(&nd) {
                        if *y < 0.0 {
                            t = t.min(-x / y);
                        }
                    }
                    let slope: f64 = nd.iter().zip(&gn).map(|(x, y)| x * y).sum();
                    for _ in 0..40 {
                        if slope <= 0.0 || t <= 0.0 {
                            break;
                        }
                        let cand: Vec<f64> = cn.iter().zip(&nd).map(|(x, y)| (x + t * y).max(0.0)).collect();
                        let fc = self.objective(&cand);
                        if fc.is_finite() && fc >= fn_ + 1e-4 * t * slope - 1e-13 * fn_.abs() {
                            let shift = 1.0 - dot(self.integrals, &cand);
                            let asum: f64 = self.integrals.iter().zip(&cand).filter(|(_, c)| **c > 0.0).map(|(a, _)| a * a).sum();
                            cn = cand
                                .iter()
                                .zip(self.integrals)
                                .map(|(&c, &a)| if c > 0.0 { (c + shift * a / asum).max(0.0) } else { 0.0 })
                                .collect();
                            fn_ = self.objective(&cn);
                            gn = self.gradient(&cn);
                            break;
                        }
                        t *= 0.5;
                    }
                }
            }
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..c.len() {
                let dc = cn[i] - c[i];
                ss += dc * dc;
                sy += dc * (gn[i] - g[i]);
            }
            if ss == 0.0 {
                break;
            }
            step = if sy < 0.0 { (ss / -sy).clamp(1e-30, 1e30) } else { (step * 2.0).min(1e30) };
            c = cn;
            f = fn_;
            g = gn;
            res = self.kkt_residual(&c, &g);
            if recent.len() == MEMORY {
                recent.remove(0);
            }
            recent.push(f);
            if f > best.1 || (f == best.1 && res < best.2) {
                best = (c.clone(), f, res);
            }
        }
        if res <= tol && f >= best.1 - 1e-13 * best.1.abs() {
            return (c, res);
        }
        (best.0, best.2)
    }
}

fn quad_form(m: &DMatrix<f64>, c: &[f64]) -> f64 {
    let v = DVector::from_column_slice(c);
    v.dot(&(m * &v))
}

/// Outcome of the component M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentStep {
    pub coeffs: Vec<Vec<f64>>,
    /// Final scaled KKT residual per component.
    pub kkt_residuals: Vec<f64>,
    /// Components whose responsibility mass fell below the starvation threshold.
    pub starved: Vec<bool>,
}

pub(crate) fn components_on_design(
    basis: &BasisSystem,
    design: &Design,
    stats: &EStepStats,
    zeta: f64,
    start: &[Vec<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<ComponentStep> {
    let p = stats.components;
    let a = basis.integrals();
    for (k, c) in start.iter().enumerate() {
        if c.iter().any(|&v| v < 0.0) || (dot(a, c) - 1.0).abs() > 1e-8 {
            return Err(Error::Infeasible(format!("start coefficients of component {k} are infeasible")));
        }
    }
    let n = stats.len() as f64;
    let columns: Vec<Vec<f64>> = (0..p)
        .map(|k| stats.replications.iter().flat_map(|r| r.gamma.chunks(p).map(move |row| row[k])).collect())
        .collect();
    let solved = par::map(&columns, |k, w| {
        let mass: f64 = w.iter().sum();
        let prob = ComponentProblem { design, weights: w, integrals: a, penalty: basis.penalty(), scale: n * zeta };
        let (c, res) = prob.solve(&start[k], tol, max_iter);
        (c, res, mass < STARVATION_MASS)
    });
    let mut out = ComponentStep { coeffs: Vec::new(), kkt_residuals: Vec::new(), starved: Vec::new() };
    for (c, r, s) in solved {
        out.coeffs.push(c);
        out.kkt_residuals.push(r);
        out.starved.push(s);
    }
    Ok(out)
}

/// Maximise the coefficient part of the penalised expected complete-data log-likelihood.
pub fn m_step_components(
    basis: &BasisSystem,
    patterns: &[PointPattern],
    stats: &EStepStats,
    zeta: f64,
    start: &[Vec<f64>],
    tol: f64,
) -> Result<ComponentStep> {
    if stats.len() != patterns.len() || start.len() != stats.components {
        return Err(Error::InvalidArgument("statistics, patterns and start do not match".into()));
    }
    let ds = designs(basis, patterns)?;
    let refs: Vec<&Design> = ds.iter().collect();
    components_on_design(basis, &Design::stack(&refs), stats, zeta, start, tol, 5000)
}

/// Profiled Gamma objective and its gradient in `α` (with `β = S/(nΣα)`).
struct GammaProfile {
    n: f64,
    log_sums: Vec<f64>,
    total: f64,
}

impl GammaProfile {
    fn beta(&self, alphas: &[f64]) -> f64 {
        self.total / (self.n * alphas.iter().sum::<f64>())
    }

    fn value(&self, alphas: &[f64]) -> f64 {
        let a: f64 = alphas.iter().sum();
        let lb = self.beta(alphas).ln();
        alphas
            .iter()
            .zip(&self.log_sums)
            .map(|(&ak, &lk)| (ak - 1.0) * lk - self.n * ak * lb - self.n * ln_gamma(ak))
            .sum::<f64>()
            - self.n * a
    }

    fn gradient(&self, alphas: &[f64]) -> Vec<f64> {
        let lb = self.beta(alphas).ln();
        alphas.iter().zip(&self.log_sums).map(|(&ak, &lk)| lk - self.n * lb - self.n * digamma(ak)).collect()
    }
}

const ALPHA_BOUNDS: (f64, f64) = (1e-8, 1e8);

/// Gamma M-step from a given starting point; Newton in `α` with `β` profiled out.
pub(crate) fn gamma_from(stats: &EStepStats, start: Option<&[f64]>, tol: f64) -> Result<ScoreParams> {
    if stats.is_empty() {
        return Err(Error::InvalidArgument("no replications".into()));
    }
    let p = stats.components;
    for r in &stats.replications {
        for (&eu, &elu) in r.euk.iter().zip(&r.elogu) {
            if !(eu > 0.0) || !elu.is_finite() {
                return Err(Error::DegenerateStatistics(format!("non-positive expected score {eu}")));
            }
            let gap = eu.ln() - elu;
            if gap < -1e-12 * eu.ln().abs().max(1.0) {
                return Err(Error::DegenerateStatistics(format!(
                    "E[log U] = {elu} exceeds log E[U] = {}",
                    eu.ln()
                )));
            }
        }
    }
    let n = stats.len() as f64;
    let mut log_sums = vec![0.0; p];
    let mut sums = vec![0.0; p];
    for r in &stats.replications {
        for k in 0..p {
            log_sums[k] += r.elogu[k];
            sums[k] += r.euk[k];
        }
    }
    // the shapes are identified only through the gap between log-mean and mean-log
    if (0..p).all(|k| (sums[k] / n).ln() - log_sums[k] / n <= 1e-12) {
        return Err(Error::DegenerateStatistics("expected log-scores carry no spread information".into()));
    }
    let prof = GammaProfile { n, log_sums, total: sums.iter().sum() };
    let mut alphas: Vec<f64> = match start {
        Some(s) => s.to_vec(),
        None => (0..p)
            .map(|k| {
                // Minka's closed-form approximation per component
                let gap = (sums[k] / n).ln() - prof.log_sums[k] / n;
                if gap > 1e-12 {
                    (3.0 - gap + ((gap - 3.0).powi(2) + 24.0 * gap).sqrt()) / (12.0 * gap)
                } else {
                    1.0
                }
            })
            .collect(),
    };
    for a in &mut alphas {
        *a = a.clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1);
    }
    let mut f = prof.value(&alphas);
    for _ in 0..200 {
        let g = prof.gradient(&alphas);
        let a_sum: f64 = alphas.iter().sum();
        let gmax = g.iter().zip(&alphas).map(|(gk, ak)| (gk * ak).abs()).fold(0.0, f64::max) / n;
        if gmax <= tol {
            break;
        }
        // Newton direction for H = (n/A)·11ᵀ − n·diag(ψ'(α))
        let mut h = DMatrix::from_element(p, p, n / a_sum);
        for k in 0..p {
            h[(k, k)] -= n * trigamma(alphas[k]);
        }
        let dir = match h.clone().lu().solve(&DVector::from_column_slice(&g)) {
            Some(d) => d.iter().map(|x| -x).collect::<Vec<f64>>(),
            None => g.clone(),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = alphas
                .iter()
                .zip(&dir)
                .map(|(&a, &d)| (a + t * d).clamp(a * 0.1, a * 10.0).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1))
                .collect();
            let ft = prof.value(&trial);
            if ft.is_finite() && ft >= f - 1e-14 * f.abs() {
                moved = trial != alphas;
                alphas = trial;
                f = ft;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let beta = prof.beta(&alphas);
    ScoreParams::new(alphas, beta).map_err(|e| Error::DegenerateStatistics(format!("{e}")))
}

/// Maximum-likelihood Gamma parameters (common scale) from expected scores and log-scores.
pub fn m_step_gamma(stats: &EStepStats) -> Result<ScoreParams> {
    gamma_from(stats, None, 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estep::ReplicationStats;
    use crate::model::random_feasible_coeffs;
    use crate::test_support::unit_bspline;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Gamma};

    fn stats_from_scores(scores: &[Vec<f64>]) -> EStepStats {
        EStepStats {
            components: scores[0].len(),
            replications: scores
                .iter()
                .map(|u| ReplicationStats {
                    gamma: Vec::new(),
                    euk: u.clone(),
                    elogu: u.iter().map(|x| x.ln()).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let q = rng.random_range(1..12);
            let a: Vec<f64> = (0..q).map(|_| 0.05 + rng.random::<f64>()).collect();
            let v: Vec<f64> = (0..q).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let c = project_feasible(&v, &a);
            assert!(c.iter().all(|&x| x >= 0.0));
            assert!((dot(&a, &c) - 1.0).abs() <= 1e-12);
            let again = project_feasible(&c, &a);
            for (x, y) in c.iter().zip(&again) {
                assert!((x - y).abs() <= 1e-12);
            }
            // optimality: no random feasible point is closer
            for _ in 0..20 {
                let z = random_feasible_coeffs(&a, &mut rng);
                let d1: f64 = v.iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum();
                let d2: f64 = v.iter().zip(&z).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(d1 <= d2 + 1e-12);
            }
        }
    }

    #[test]
    fn constant_basis_is_determined_by_constraint() {
        let d = Design::from_dense(&[vec![1.0], vec![1.0], vec![1.0]]);
        let a = [2.5];
        let pen = DMatrix::zeros(1, 1);
        let prob = ComponentProblem { design: &d, weights: &[0.3, 1.0, 0.2], integrals: &a, penalty: &pen, scale: 0.0 };
        let (c, _) = prob.solve(&[0.4], 1e-10, 100);
        assert_eq!(c, vec![1.0 / 2.5]);
    }

    #[test]
    fn disjoint_supports_match_grid_search() {
        let d = Design::from_dense(&[vec![1.3, 0.0], vec![0.7, 0.0], vec![0.0, 2.0], vec![0.0, 0.4]]);
        let a = [0.6, 1.4];
        let w = [0.9, 0.5, 0.3, 0.8];
        let pen = DMatrix::zeros(2, 2);
        let prob = ComponentProblem { design: &d, weights: &w, integrals: &a, penalty: &pen, scale: 0.0 };
        let (c, res) = prob.solve(&[0.5 / 0.6, 0.5 / 1.4], 1e-10, 1000);
        assert!(res <= 1e-10);
        let (w1, w2) = (1.4, 1.1);
        assert_relative_eq!(c[0], w1 / (a[0] * (w1 + w2)), epsilon = 1e-8);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 1..100_000 {
            let c0 = i as f64 / 100_000.0 / a[0];
            let f = prob.objective(&[c0, (1.0 - a[0] * c0) / a[1]]);
            if f > best.0 {
                best = (f, c0);
            }
        }
        assert!((best.1 - c[0]).abs() <= 2e-5 / a[0]);
    }

    fn random_problem_data(rng: &mut impl Rng) -> (BasisSystem, Design, Vec<f64>) {
        let b = unit_bspline(8);
        let pts: Vec<crate::geometry::Point> = (0..60).map(|_| crate::geometry::Point::line(rng.random())).collect();
        let d = b.design(&pts).unwrap();
        let w: Vec<f64> = (0..60).map(|_| rng.random::<f64>()).collect();
        (b, d, w)
    }

    #[test]
    fn solution_beats_random_feasible_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &scale in &[0.0, 1e-3, 1.0] {
            let (b, d, w) = random_problem_data(&mut rng);
            let prob = ComponentProblem { design: &d, weights: &w, integrals: b.integrals(), penalty: b.penalty(), scale };
            let start = random_feasible_coeffs(b.integrals(), &mut rng);
            let f0 = prob.objective(&start);
            let (c, res) = prob.solve(&start, 1e-8, 20_000);
            assert!(res <= 1e-6, "residual {res} at scale {scale}: {c:?}");
            let f = prob.objective(&c);
            assert!(f >= f0);
            assert!(c.iter().all(|&x| x >= 0.0) && (dot(b.integrals(), &c) - 1.0).abs() <= 1e-10);
            for _ in 0..1000 {
                let z = random_feasible_coeffs(b.integrals(), &mut rng);
                assert!(prob.objective(&z) <= f + 1e-9 * f.abs());
            }
        }
    }

    #[test]
    fn heavy_penalty_dominates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (b, d, w) = random_problem_data(&mut rng);
        let prob = ComponentProblem { design: &d, weights: &w, integrals: b.integrals(), penalty: b.penalty(), scale: 1e6 };
        let (c, _) = prob.solve(&random_feasible_coeffs(b.integrals(), &mut rng), 1e-10, 20_000);
        let rough = b.roughness(&c);
        for _ in 0..200 {
            let z = random_feasible_coeffs(b.integrals(), &mut rng);
            assert!(rough <= b.roughness(&z) + 1e-12);
        }
    }

    #[test]
    fn gamma_recovers_sampled_parameters() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = Gamma::new(2.0, 3.0).unwrap();
        let scores: Vec<Vec<f64>> = (0..100_000).map(|_| vec![g.sample(&mut rng)]).collect();
        let sp = m_step_gamma(&stats_from_scores(&scores)).unwrap();
        assert!((sp.alphas()[0] - 2.0).abs() <= 0.04, "{sp:?}");
        assert!((sp.beta() - 3.0).abs() <= 0.06, "{sp:?}");
    }

    #[test]
    fn gamma_common_scale_two_components() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let (g1, g2) = (Gamma::new(1.5, 2.0).unwrap(), Gamma::new(4.0, 2.0).unwrap());
        let scores: Vec<Vec<f64>> = (0..50_000).map(|_| vec![g1.sample(&mut rng), g2.sample(&mut rng)]).collect();
        let sp = m_step_gamma(&stats_from_scores(&scores)).unwrap();
        assert!((sp.alphas()[0] - 1.5).abs() <= 0.05 && (sp.alphas()[1] - 4.0).abs() <= 0.12, "{sp:?}");
        // profile stationarity: β = S / (n Σα)
        let total: f64 = scores.iter().flatten().sum();
        assert_relative_eq!(sp.beta(), total / (50_000.0 * (sp.alphas()[0] + sp.alphas()[1])), max_relative = 1e-12);
    }

    #[test]
    fn gamma_symmetric_stats_give_equal_shapes() {
        let scores: Vec<Vec<f64>> = (1..40).map(|i| vec![i as f64 * 0.3, i as f64 * 0.3]).collect();
        let sp = m_step_gamma(&stats_from_scores(&scores)).unwrap();
        assert_relative_eq!(sp.alphas()[0], sp.alphas()[1], max_relative = 1e-12);
    }

    #[test]
    fn gamma_degenerate_inputs() {
        let same: Vec<Vec<f64>> = (0..10).map(|_| vec![2.0]).collect();
        // every replication identical: E[log U] = log E[U] everywhere
        assert!(matches!(m_step_gamma(&stats_from_scores(&same)), Err(Error::DegenerateStatistics(_))));
        let mut st = stats_from_scores(&[vec![1.0], vec![2.0]]);
        st.replications[0].elogu[0] = 0.5;
        assert!(matches!(m_step_gamma(&st), Err(Error::DegenerateStatistics(_))));
    }
}
