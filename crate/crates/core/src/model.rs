//! Model parameters and likelihood quantities.
//!
//! Scores follow the shape–scale convention: `U_k ~ Gamma(α_k, β)` with `E[U_k] = α_k β`.
//! Pattern densities are densities of the point *set* (no `m!` factor).

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand_distr::{Distribution, Gamma};

use crate::basis::{BasisSystem, Design};
use crate::error::{Error, Result};
use crate::estep::EStepStats;
use crate::geometry::Point;
use crate::math::{digamma, ln_gamma, LogSumExp};
use crate::rng;

/// One replication's events.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    pub id: String,
    pub points: Vec<Point>,
}

impl PointPattern {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Self {
        Self { id: id.into(), points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gamma score parameters: shapes `α_k` and a common scale `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParams {
    alphas: Vec<f64>,
    beta: f64,
}

impl ScoreParams {
    pub fn new(alphas: Vec<f64>, beta: f64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::InvalidArgument("need at least one score shape".into()));
        }
        if alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidArgument(format!("score shapes must be positive, got {alphas:?}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("score scale must be positive, got {beta}")));
        }
        Ok(Self { alphas, beta })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// `E[U_k] = α_k β`.
    pub fn mean(&self, k: usize) -> f64 {
        self.alphas[k] * self.beta
    }

    /// Log Gamma density of a score vector.
    pub fn log_prior(&self, u: &[f64]) -> f64 {
        let lb = self.beta.ln();
        self.alphas
            .iter()
            .zip(u)
            .map(|(&a, &x)| (a - 1.0) * x.ln() - x / self.beta - a * lb - ln_gamma(a))
            .sum()
    }
}

/// Component coefficients (row `k` is `c_k`) and score parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    coeffs: Vec<Vec<f64>>,
    scores: ScoreParams,
}

/// Tolerance on `aᵀc_k = 1` for feasibility checks.
pub const NORMALIZATION_TOL: f64 = 1e-8;

impl ModelParams {
    /// Validates shapes, non-negativity and `aᵀc_k = 1` against `basis`.
    pub fn new(coeffs: Vec<Vec<f64>>, scores: ScoreParams, basis: &BasisSystem) -> Result<Self> {
        let m = Self::new_unchecked(coeffs, scores)?;
        m.check_feasible(basis)?;
        Ok(m)
    }

    /// Only checks dimensions; used for perturbed parameters off the constraint set.
    pub fn new_unchecked(coeffs: Vec<Vec<f64>>, scores: ScoreParams) -> Result<Self> {
        if coeffs.len() != scores.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficient rows but {} score shapes",
                coeffs.len(),
                scores.len()
            )));
        }
        let q = coeffs[0].len();
        if coeffs.iter().any(|c| c.len() != q) {
            return Err(Error::InvalidArgument("coefficient rows differ in length".into()));
        }
        Ok(Self { coeffs, scores })
    }

    pub fn check_feasible(&self, basis: &BasisSystem) -> Result<()> {
        if self.basis_size() != basis.size() {
            return Err(Error::InvalidArgument(format!(
                "coefficients have length {}, basis has {} functions",
                self.basis_size(),
                basis.size()
            )));
        }
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(Error::Infeasible(format!("component {k} has negative coefficients")));
            }
            let s = dot(basis.integrals(), c);
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Infeasible(format!("component {k} integrates to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn basis_size(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn scores(&self) -> &ScoreParams {
        &self.scores
    }

    pub fn set_coeffs(&mut self, coeffs: Vec<Vec<f64>>) {
        assert_eq!(coeffs.len(), self.coeffs.len());
        self.coeffs = coeffs;
    }

    pub fn set_scores(&mut self, scores: ScoreParams) {
        assert_eq!(scores.len(), self.coeffs.len());
        self.scores = scores;
    }

    /// Component order sorted by `α_k β` descending, ties broken by lexicographic
    /// comparison of coefficient rows.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.components()).collect();
        idx.sort_by(|&a, &b| {
            self.scores.alphas[b]
                .partial_cmp(&self.scores.alphas[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| lex_cmp(&self.coeffs[a], &self.coeffs[b]))
        });
        idx
    }

    /// Reorder components so that new component `i` is old component `order[i]`.
    pub fn permute(&mut self, order: &[usize]) {
        self.coeffs = order.iter().map(|&k| self.coeffs[k].clone()).collect();
        self.scores.alphas = order.iter().map(|&k| self.scores.alphas[k]).collect();
    }

    /// Per-component mass `s_k = aᵀc_k` (1 on the constraint set).
    pub fn masses(&self, basis: &BasisSystem) -> Vec<f64> {
        self.coeffs.iter().map(|c| dot(basis.integrals(), c)).collect()
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogLikMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikResult {
    pub value: f64,
    pub mc_std_err: f64,
    pub method: LogLikMethod,
}

/// Label enumeration budget `p^m`.
pub const ENUMERATION_BUDGET: f64 = 1e6;

pub fn within_enumeration_budget(m: usize, p: usize) -> bool {
    m as f64 * (p as f64).ln() <= ENUMERATION_BUDGET.ln() + 1e-9
}

/// Component densities at each point of a pattern, row-major `m × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub values: Vec<f64>,
    pub m: usize,
    pub p: usize,
}

impl DensityTable {
    pub fn new(model: &ModelParams, design: &Design) -> Self {
        let p = model.components();
        let m = design.rows();
        let mut values = vec![0.0; m * p];
        for j in 0..m {
            for k in 0..p {
                values[j * p + k] = design.dot(j, model.coeff(k));
            }
        }
        Self { values, m, p }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.p..(j + 1) * self.p]
    }

    /// First point where every component density vanishes.
    pub fn unsupported_point(&self) -> Option<usize> {
        (0..self.m).find(|&j| self.row(j).iter().all(|&v| !(v > 0.0)))
    }
}

/// `φ_k(t) = c_kᵀβ(t)` at each point.
pub fn component_density(basis: &BasisSystem, model: &ModelParams, k: usize, points: &[Point]) -> Result<Vec<f64>> {
    if k >= model.components() {
        return Err(Error::ComponentOutOfRange { index: k, count: model.components() });
    }
    let d = basis.design(points)?;
    Ok((0..d.rows()).map(|j| d.dot(j, model.coeff(k))).collect())
}

/// `Λ(t) = Σ_k u_k φ_k(t)` at each point.
pub fn intensity(basis: &BasisSystem, model: &ModelParams, u: &[f64], points: &[Point]) -> Result<Vec<f64>> {
    if u.len() != model.components() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} components",
            u.len(),
            model.components()
        )));
    }
    if u.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument(format!("scores must be non-negative, got {u:?}")));
    }
    let combined = combine(model, u);
    let d = basis.design(points)?;
    Ok((0..d.rows()).map(|j| d.dot(j, &combined)).collect())
}

/// Coefficients of `Σ_k w_k φ_k`.
pub(crate) fn combine(model: &ModelParams, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.basis_size()];
    for (k, &wk) in w.iter().enumerate() {
        for (o, c) in out.iter_mut().zip(model.coeff(k)) {
            *o += wk * c;
        }
    }
    out
}

/// Complete-data log density `log f(t, y, u)`:
/// `−Σ_k u_k s_k + Σ_j log(u_{y_j} φ_{y_j}(t_j)) + log prior(u)`, where `s_k = aᵀc_k`.
///
/// Returns `-inf` (not an error) when some `φ_{y_j}(t_j) = 0`.
pub fn complete_loglik(
    basis: &BasisSystem,
    model: &ModelParams,
    pattern: &PointPattern,
    u: &[f64],
    labels: &[usize],
) -> Result<f64> {
    let p = model.components();
    if u.len() != p || u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("scores must be positive, one per component".into()));
    }
    if labels.len() != pattern.len() || labels.iter().any(|&k| k >= p) {
        return Err(Error::InvalidArgument("one label in 0..p per point required".into()));
    }
    let d = basis.design(&pattern.points)?;
    let masses = model.masses(basis);
    let mut ll: f64 = -u.iter().zip(&masses).map(|(u, s)| u * s).sum::<f64>();
    for (j, &k) in labels.iter().enumerate() {
        let phi = d.dot(j, model.coeff(k));
        if !(phi > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        ll += u[k].ln() + phi.ln();
    }
    Ok(ll + model.scores().log_prior(u))
}

/// Parameters of the tilted Gamma obtained by absorbing `exp(−u s)` into the prior:
/// scale `β / (1 + β s)` and log normalising factor `−α log(1 + β s)`.
pub(crate) struct Tilted {
    pub scales: Vec<f64>,
    pub log_const: f64,
}

impl Tilted {
    pub fn new(model: &ModelParams, basis: &BasisSystem) -> Self {
        let beta = model.scores().beta();
        let masses = model.masses(basis);
        let scales = masses.iter().map(|&s| beta / (1.0 + beta * s)).collect();
        let log_const = model
            .scores()
            .alphas()
            .iter()
            .zip(&masses)
            .map(|(&a, &s)| -a * (1.0 + beta * s).ln())
            .sum();
        Self { scales, log_const }
    }
}

/// Visit every label vector `y ∈ {0..p}^m` with its unnormalised log weight
/// `Σ_k [lnΓ(α_k+m_k) − lnΓ(α_k) + m_k ln β̃_k] + Σ_j ln φ_{y_j}(t_j)`.
pub(crate) fn enumerate_labels<F>(table: &DensityTable, alphas: &[f64], scales: &[f64], mut visit: F)
where
    F: FnMut(&[usize], &[usize], f64),
{
    let (m, p) = (table.m, table.p);
    // count weights g[k][n] = lnΓ(α_k+n) − lnΓ(α_k) + n ln β̃_k
    let g: Vec<Vec<f64>> = (0..p)
        .map(|k| {
            let base = ln_gamma(alphas[k]);
            let ls = scales[k].ln();
            (0..=m).map(|n| ln_gamma(alphas[k] + n as f64) - base + n as f64 * ls).collect()
        })
        .collect();
    let log_phi: Vec<f64> = table.values.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let mut labels = vec![0usize; m];
    let mut counts = vec![0usize; p];
    counts[0] = m;
    let mut partial = vec![0.0f64; m + 1];
    for j in 0..m {
        partial[j + 1] = partial[j] + log_phi[j * p];
    }
    loop {
        let mut lw = partial[m];
        if lw > f64::NEG_INFINITY {
            for k in 0..p {
                lw += g[k][counts[k]];
            }
        }
        visit(&labels, &counts, lw);
        // odometer increment from the last point
        let mut j = m;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            counts[labels[j]] -= 1;
            if labels[j] + 1 < p {
                labels[j] += 1;
                counts[labels[j]] += 1;
                break;
            }
            labels[j] = 0;
            counts[0] += 1;
        }
        for i in j..m {
            partial[i + 1] = partial[i] + log_phi[i * p + labels[i]];
        }
    }
}

fn pattern_table(basis: &BasisSystem, model: &ModelParams, pattern: &PointPattern) -> Result<DensityTable> {
    let d = basis.design(&pattern.points)?;
    let table = DensityTable::new(model, &d);
    if let Some(point) = table.unsupported_point() {
        return Err(Error::PatternUnsupported { point });
    }
    Ok(table)
}

/// Exact `log f(x)` by enumeration over label vectors. Valid for any non-negative
/// coefficients (the constraint `aᵀc_k = 1` is not assumed).
pub fn marginal_loglik_exact(basis: &BasisSystem, model: &ModelParams, pattern: &PointPattern) -> Result<LogLikResult> {
    let p = model.components();
    if !within_enumeration_budget(pattern.len(), p) {
        return Err(Error::EnumerationBudget {
            needed: (p as f64).powi(pattern.len() as i32),
            budget: ENUMERATION_BUDGET,
        });
    }
    let table = pattern_table(basis, model, pattern)?;
    Ok(LogLikResult {
        value: exact_from_table(&table, model, basis),
        mc_std_err: 0.0,
        method: LogLikMethod::Exact,
    })
}

pub(crate) fn exact_from_table(table: &DensityTable, model: &ModelParams, basis: &BasisSystem) -> f64 {
    let tilted = Tilted::new(model, basis);
    let mut acc = LogSumExp::default();
    enumerate_labels(table, model.scores().alphas(), &tilted.scales, |_, _, lw| acc.push(lw));
    tilted.log_const + acc.value()
}

/// Monte-Carlo `log f(x) = log E_v[∏_j Σ_k v_k φ_k(t_j)] + Σ_k −α_k log(1+β s_k)`
/// with `v_k ~ Gamma(α_k, β/(1+β s_k))`, accumulated in log space.
pub fn marginal_loglik_mc(
    basis: &BasisSystem,
    model: &ModelParams,
    pattern: &PointPattern,
    draws: usize,
    seed: u64,
) -> Result<LogLikResult> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte-Carlo draw".into()));
    }
    let table = pattern_table(basis, model, pattern)?;
    Ok(mc_from_table(&table, model, basis, draws, seed))
}

pub(crate) fn mc_from_table(
    table: &DensityTable,
    model: &ModelParams,
    basis: &BasisSystem,
    draws: usize,
    seed: u64,
) -> LogLikResult {
    let tilted = Tilted::new(model, basis);
    let p = table.p;
    let gammas: Vec<Gamma<f64>> = model
        .scores()
        .alphas()
        .iter()
        .zip(&tilted.scales)
        .map(|(&a, &s)| Gamma::new(a, s).expect("validated gamma parameters"))
        .collect();
    let mut r = rng::rng(seed);
    let mut v = vec![0.0; p];
    let mut logs = Vec::with_capacity(draws);
    for _ in 0..draws {
        for (vk, g) in v.iter_mut().zip(&gammas) {
            *vk = g.sample(&mut r);
        }
        // multiply in blocks and take logs only when the running product leaves a safe range
        let (mut l, mut prod) = (0.0, 1.0f64);
        for j in 0..table.m {
            let row = table.row(j);
            let mut s = 0.0;
            for k in 0..p {
                s += v[k] * row[k];
            }
            prod *= s;
            if !(1e-150..=1e150).contains(&prod) {
                l += prod.ln();
                prod = 1.0;
            }
        }
        logs.push(l + prod.ln());
    }
    let (log_mean, rel_se) = log_mean_with_se(&logs);
    LogLikResult { value: tilted.log_const + log_mean, mc_std_err: rel_se, method: LogLikMethod::MonteCarlo }
}

/// Log of the mean of `exp(logs)` and the delta-method standard error of that log.
pub(crate) fn log_mean_with_se(logs: &[f64]) -> (f64, f64) {
    let n = logs.len() as f64;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let se = if logs.len() > 1 {
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt() / mean
    } else {
        0.0
    };
    (max + mean.ln(), se)
}

/// `log f(x; θ)`: exact when `p^m ≤ 10⁶`, otherwise Monte-Carlo with `draws` draws.
pub fn marginal_loglik(
    basis: &BasisSystem,
    model: &ModelParams,
    pattern: &PointPattern,
    draws: usize,
    seed: u64,
) -> Result<LogLikResult> {
    if draws == 0 {
        return Err(Error::InvalidArgument("need at least one Monte-Carlo draw".into()));
    }
    if within_enumeration_budget(pattern.len(), model.components()) {
        marginal_loglik_exact(basis, model, pattern)
    } else {
        marginal_loglik_mc(basis, model, pattern, draws, seed)
    }
}

/// Per-component posterior conditionals for a given label count vector: `E[U_k | y]`,
/// `E[log U_k | y]` under `Gamma(α_k + m_k, β̃_k)`.
#[inline]
pub(crate) fn conditional_moments(alpha: f64, count: usize, scale: f64) -> (f64, f64) {
    let shape = alpha + count as f64;
    (shape * scale, digamma(shape) + scale.ln())
}

/// `λ̂_i(t) = Σ_k E[U_k | x_i] φ_k(t)` at `points` for replication `index` of `stats`.
pub fn posterior_intensity(
    basis: &BasisSystem,
    model: &ModelParams,
    pattern: &PointPattern,
    stats: &EStepStats,
    index: usize,
    points: &[Point],
) -> Result<Vec<f64>> {
    let rep = stats
        .replications
        .get(index)
        .ok_or_else(|| Error::InvalidArgument(format!("no E-step statistics for replication {index}")))?;
    if rep.gamma.len() != pattern.len() * model.components() || rep.euk.len() != model.components() {
        return Err(Error::InvalidArgument("E-step statistics do not match the pattern".into()));
    }
    intensity(basis, model, &rep.euk, points)
}

/// Evaluate `φ_k` at `points` for every component (row `k`).
pub fn component_grid(basis: &BasisSystem, model: &ModelParams, points: &[Point]) -> Result<Vec<Vec<f64>>> {
    let d = basis.design(points)?;
    Ok((0..model.components())
        .map(|k| (0..d.rows()).map(|j| d.dot(j, model.coeff(k))).collect())
        .collect())
}

/// A random point of the constraint set: positive coefficients with `aᵀc = 1`.
pub fn random_feasible_coeffs<R: rand::Rng + ?Sized>(integrals: &[f64], rng: &mut R) -> Vec<f64> {
    let mut c: Vec<f64> = integrals.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s = dot(integrals, &c);
    for v in &mut c {
        *v /= s;
    }
    c
}
