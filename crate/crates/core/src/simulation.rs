//! Data-generating models, point-pattern sampling, error functionals and the
//! simulation-study harness.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, LogNormal, Poisson};

use crate::basis::{build_basis, BasisFamily, BasisLayout, BasisSystem};
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, FitResult};
use crate::geometry::{build_quadrature, Point, Region};
use crate::model::{component_grid, ModelParams, PointPattern};
use crate::selection::{fit_path, kfold_cv, CvPlan};
use crate::{par, rng};

/// Gaussian-bump components `exp{−rate (t − centre)²}` on `[0, 1]`, renormalised to unit
/// integral, with independent lognormal scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GenModel {
    rates: Vec<f64>,
    centers: Vec<f64>,
    norms: Vec<f64>,
    score_means: Vec<f64>,
    score_vars: Vec<f64>,
}

impl GenModel {
    pub fn new(rates: Vec<f64>, centers: Vec<f64>, score_means: Vec<f64>, score_vars: Vec<f64>) -> Result<Self> {
        let p = rates.len();
        if p == 0 || centers.len() != p || score_means.len() != p || score_vars.len() != p {
            return Err(Error::InvalidArgument("generator parameter lists must be nonempty and equal length".into()));
        }
        if rates.iter().any(|&r| !(r > 0.0)) || centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidArgument("bump rates must be positive and centres in [0, 1]".into()));
        }
        if score_means.iter().any(|&m| !(m > 0.0)) || score_vars.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("lognormal scores need positive mean and variance".into()));
        }
        let norms = rates
            .iter()
            .zip(&centers)
            .map(|(&r, &c)| {
                let s = r.sqrt();
                0.5 * (core::f64::consts::PI / r).sqrt() * (libm::erf(s * (1.0 - c)) + libm::erf(s * c))
            })
            .collect();
        Ok(Self { rates, centers, norms, score_means, score_vars })
    }

    /// Two narrow, nearly disjoint bumps.
    pub fn model1() -> Self {
        Self::new(vec![100.0, 100.0], vec![0.3, 0.7], vec![30.0, 20.0], vec![10.0, 1.0]).expect("valid constants")
    }

    /// Two wider, overlapping bumps.
    pub fn model2() -> Self {
        Self::new(vec![20.0, 20.0], vec![0.3, 0.7], vec![30.0, 20.0], vec![10.0, 1.0]).expect("valid constants")
    }

    pub fn components(&self) -> usize {
        self.rates.len()
    }

    pub fn region(&self) -> Region {
        Region::Interval { lower: 0.0, upper: 1.0 }
    }

    /// Normalising constant of component `k` (about .177 / .385 for the two models).
    pub fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    pub fn density(&self, k: usize, t: f64) -> f64 {
        libm::exp(-self.rates[k] * (t - self.centers[k]).powi(2)) / self.norms[k]
    }

    /// `(μ, σ)` of the lognormal law of score `k`, by moment inversion.
    pub fn lognormal_params(&self, k: usize) -> (f64, f64) {
        let (e, v) = (self.score_means[k], self.score_vars[k]);
        let s2 = (1.0 + v / (e * e)).ln();
        (e.ln() - s2 / 2.0, s2.sqrt())
    }

    pub fn score_mean(&self, k: usize) -> f64 {
        self.score_means[k]
    }
}

/// `n × p` lognormal score draws.
pub fn sample_scores(gen: &GenModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let laws: Vec<LogNormal<f64>> = (0..gen.components())
        .map(|k| {
            let (mu, sigma) = gen.lognormal_params(k);
            LogNormal::new(mu, sigma).map_err(|e| Error::InvalidArgument(format!("{e}")))
        })
        .collect::<Result<_>>()?;
    let mut r = rng::rng(seed);
    Ok((0..n).map(|_| laws.iter().map(|l| l.sample(&mut r)).collect()).collect())
}

/// A source of component densities over a region.
pub trait ComponentSource {
    fn components(&self) -> usize;
    fn region(&self) -> Region;
    fn density(&self, k: usize, t: Point) -> f64;
}

impl ComponentSource for GenModel {
    fn components(&self) -> usize {
        GenModel::components(self)
    }

    fn region(&self) -> Region {
        GenModel::region(self)
    }

    fn density(&self, k: usize, t: Point) -> f64 {
        GenModel::density(self, k, t.x)
    }
}

/// Fitted components `φ̂_k = ĉ_kᵀβ`.
pub struct FittedComponents<'a> {
    pub basis: &'a BasisSystem,
    pub model: &'a ModelParams,
}

impl ComponentSource for FittedComponents<'_> {
    fn components(&self) -> usize {
        self.model.components()
    }

    fn region(&self) -> Region {
        self.basis.region().clone()
    }

    fn density(&self, k: usize, t: Point) -> f64 {
        let mut row = Vec::new();
        self.basis.values_at(t, &mut row);
        row.iter().map(|&(j, v)| v * self.model.coeff(k)[j]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    lo: Point,
    hi: Point,
    bound: f64,
}

/// Rejection sampler with a piecewise-constant envelope per component: 1.1 × the largest
/// density value at the corners and centre of each grid cell.
pub struct PatternSampler<'a, S: ComponentSource> {
    source: &'a S,
    region: Region,
    cells: Vec<Vec<Cell>>,
    cumulative: Vec<Vec<f64>>,
}

impl<'a, S: ComponentSource> PatternSampler<'a, S> {
    pub fn new(source: &'a S, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidArgument("sampler resolution must be >= 2".into()));
        }
        let region = source.region();
        let (lo, hi) = region.bounds();
        let two_d = region.dimension() == 2;
        let (nx, ny) = if two_d { (resolution, resolution) } else { (resolution, 1) };
        let (dx, dy) = ((hi.x - lo.x) / nx as f64, if two_d { (hi.y - lo.y) / ny as f64 } else { 0.0 });
        let mut cells = Vec::with_capacity(source.components());
        let mut cumulative = Vec::with_capacity(source.components());
        for k in 0..source.components() {
            let mut cs = Vec::with_capacity(nx * ny);
            let mut cum = Vec::with_capacity(nx * ny);
            let mut total = 0.0;
            for iy in 0..ny {
                for ix in 0..nx {
                    let a = Point::new(lo.x + ix as f64 * dx, lo.y + iy as f64 * dy);
                    let b = Point::new(a.x + dx, a.y + dy);
                    let probes = [a, b, Point::new(a.x, b.y), Point::new(b.x, a.y), Point::new(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))];
                    let m = probes
                        .iter()
                        .filter(|t| region.contains(**t))
                        .map(|&t| source.density(k, t))
                        .fold(0.0, f64::max);
                    let bound = 1.1 * m;
                    let area = if two_d { dx * dy } else { dx };
                    total += bound * area;
                    cs.push(Cell { lo: a, hi: b, bound });
                    cum.push(total);
                }
            }
            if !(total > 0.0) {
                return Err(Error::InvalidArgument(format!("component {k} has no mass on the sampling grid")));
            }
            cells.push(cs);
            cumulative.push(cum);
        }
        Ok(Self { source, region, cells, cumulative })
    }

    /// One point from component `k`.
    pub fn draw<R: rand::Rng>(&self, k: usize, rng: &mut R) -> Point {
        let cum = &self.cumulative[k];
        let total = *cum.last().expect("nonempty grid");
        loop {
            let target = rng.random::<f64>() * total;
            let i = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
            let cell = self.cells[k][i];
            let t = if self.region.dimension() == 2 {
                Point::new(
                    cell.lo.x + rng.random::<f64>() * (cell.hi.x - cell.lo.x),
                    cell.lo.y + rng.random::<f64>() * (cell.hi.y - cell.lo.y),
                )
            } else {
                Point::line(cell.lo.x + rng.random::<f64>() * (cell.hi.x - cell.lo.x))
            };
            if !self.region.contains(t) {
                continue;
            }
            if rng.random::<f64>() * cell.bound < self.source.density(k, t) {
                return t;
            }
        }
    }

    /// Poisson pattern with intensity `Σ_k u_k φ_k`: `m ~ Poisson(Σu)`, then each point picks
    /// a component with probability `u_k/Σu` and is drawn from it.
    pub fn pattern<R: rand::Rng>(&self, id: impl Into<String>, u: &[f64], rng: &mut R) -> Result<PointPattern> {
        if u.len() != self.cells.len() || u.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument("scores must be non-negative, one per component".into()));
        }
        let total: f64 = u.iter().sum();
        if total == 0.0 {
            return Ok(PointPattern::new(id, Vec::new()));
        }
        let m = Poisson::new(total).map_err(|e| Error::InvalidArgument(format!("{e}")))?.sample(rng) as usize;
        let mut pts = Vec::with_capacity(m);
        for _ in 0..m {
            let mut target = rng.random::<f64>() * total;
            let mut k = u.len() - 1;
            for (i, &w) in u.iter().enumerate() {
                if target < w {
                    k = i;
                    break;
                }
                target -= w;
            }
            pts.push(self.draw(k, rng));
        }
        Ok(PointPattern::new(id, pts))
    }
}

/// Sample one pattern with intensity `Σ_k u_k φ_k`.
pub fn sample_pattern<S: ComponentSource>(source: &S, u: &[f64], id: impl Into<String>, seed: u64) -> Result<PointPattern> {
    PatternSampler::new(source, 512)?.pattern(id, u, &mut rng::rng(seed))
}

/// Scores and patterns of one simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub scores: Vec<Vec<f64>>,
    pub patterns: Vec<PointPattern>,
}

pub fn simulate_data(gen: &GenModel, n: usize, seed: u64) -> Result<SimulatedData> {
    let scores = sample_scores(gen, n, rng::derive(seed, &[rng::name_tag("scores")]))?;
    let sampler = PatternSampler::new(gen, 512)?;
    let mut r = rng::rng(rng::derive(seed, &[rng::name_tag("points")]));
    let patterns = scores
        .iter()
        .enumerate()
        .map(|(i, u)| sampler.pattern(format!("{i:05}"), u, &mut r))
        .collect::<Result<_>>()?;
    Ok(SimulatedData { scores, patterns })
}

/// L² error decomposition of a function estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTriple {
    pub bias: f64,
    pub std: f64,
    pub rmse: f64,
}

/// Midpoint grid of `size` points on `[0, 1]` with equal weights.
pub fn unit_grid(size: usize) -> (Vec<Point>, Vec<f64>) {
    let h = 1.0 / size as f64;
    ((0..size).map(|i| Point::line((i as f64 + 0.5) * h)).collect(), vec![h; size])
}

/// Bias, standard deviation (population, so `rmse² = bias² + std²` exactly) and rmse of
/// replicated grid estimates of one function.
pub fn error_triple(estimates: &[Vec<f64>], truth: &[f64], weights: &[f64]) -> Result<ErrorTriple> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("need at least two estimates".into()));
    }
    if truth.len() != weights.len() || estimates.iter().any(|e| e.len() != truth.len()) {
        return Err(Error::InvalidArgument("estimates, truth and weights must share the grid".into()));
    }
    let r = estimates.len() as f64;
    let (mut b2, mut s2) = (0.0, 0.0);
    for (g, (&t, &w)) in truth.iter().zip(weights).enumerate() {
        let mean = estimates.iter().map(|e| e[g]).sum::<f64>() / r;
        let var = estimates.iter().map(|e| (e[g] - mean).powi(2)).sum::<f64>() / r;
        b2 += w * (mean - t).powi(2);
        s2 += w * var;
    }
    Ok(ErrorTriple { bias: b2.sqrt(), std: s2.sqrt(), rmse: (b2 + s2).sqrt() })
}

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for perm in permutations(p - 1) {
        for pos in 0..=perm.len() {
            let mut v = perm.clone();
            v.insert(pos, p - 1);
            out.push(v);
        }
    }
    out
}

/// Permutation `π` minimising `Σ_k ‖est[π(k)] − truth[k]‖²`.
pub fn match_components(estimates: &[Vec<f64>], truth: &[Vec<f64>], weights: &[f64]) -> Vec<usize> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(weights).map(|((x, y), w)| w * (x - y).powi(2)).sum::<f64>();
    let mut best = (f64::INFINITY, (0..truth.len()).collect::<Vec<_>>());
    for perm in permutations(truth.len()) {
        let d: f64 = perm.iter().enumerate().map(|(k, &e)| dist(&estimates[e], &truth[k])).sum();
        if d < best.0 {
            best = (d, perm);
        }
    }
    best.1
}

/// How the smoothing parameter is chosen in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZetaPolicy {
    CrossValidated,
    /// The grid value with the smallest realised error against the truth.
    GridOptimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub gen: GenModel,
    pub n: usize,
    /// Number of cubic B-spline functions on equispaced knots (at least 4).
    pub basis_size: usize,
    pub reps: usize,
    pub zeta_grid: Vec<f64>,
    pub folds: usize,
    pub heldout_draws: usize,
    pub fit: FitConfig,
    pub grid_size: usize,
    /// Warm-start fits along the ζ grid (full-data and per-fold paths alike).
    pub warm_path: bool,
    pub seed: u64,
}

impl StudyConfig {
    pub fn new(gen: GenModel, n: usize, basis_size: usize, reps: usize, seed: u64) -> Self {
        Self {
            gen,
            n,
            basis_size,
            reps,
            zeta_grid: crate::selection::default_zeta_grid(),
            folds: 5,
            heldout_draws: 4000,
            fit: FitConfig {
                gibbs_sweeps: 10,
                objective_draws: 100,
                outer_tol: 3e-3,
                max_outer_iters: 50,
                ..FitConfig::default()
            },
            grid_size: 512,
            warm_path: true,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps < 10 {
            return Err(Error::InvalidArgument(format!("need at least 10 replications, got {}", self.reps)));
        }
        if self.zeta_grid.is_empty() {
            return Err(Error::InvalidArgument("empty zeta grid".into()));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<BasisSystem> {
        let region = self.gen.region();
        let quad = build_quadrature(&region, 64)?;
        if self.basis_size < 4 {
            return Err(Error::InvalidArgument(format!("need at least 4 cubic B-splines, got {}", self.basis_size)));
        }
        let layout = BasisLayout::EquispacedKnots { spans: self.basis_size - 3 };
        build_basis(BasisFamily::CubicBSpline, &region, &layout, &quad)
    }
}

/// Per-replication outcome of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    /// Matched component grids per ζ (`None` where the fit failed).
    pub estimates: Vec<Option<Vec<Vec<f64>>>>,
    /// Index of the cross-validated ζ, if cross-validation ran and succeeded.
    pub cv_choice: Option<usize>,
    /// Mean over replications of `‖λ̂_i − λ_i‖²` and of the density analogue at the CV choice.
    pub intensity_sq: Option<f64>,
    pub density_sq: Option<f64>,
    pub converged: Vec<bool>,
    /// Largest `|∫φ̂_k − 1|` and smallest coefficient over every successful fit of the rep.
    pub max_mass_error: f64,
    pub min_coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub policy: ZetaPolicy,
    pub component: usize,
    /// ζ used (the grid-optimal value; `None` under cross-validation, which varies by rep).
    pub zeta: Option<f64>,
    pub error: ErrorTriple,
    /// Monte-Carlo standard error of the rmse (delta method on the mean squared error).
    pub rmse_se: f64,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table2Row {
    pub intensity_rmse: f64,
    pub intensity_se: f64,
    pub density_rmse: f64,
    pub density_se: f64,
    pub failures: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub table1: Vec<Table1Row>,
    pub table2: Option<Table2Row>,
    pub reps: Vec<RepOutcome>,
}

fn squared_error(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| w * (x - y).powi(2)).sum()
}

/// Intensity and density errors of posterior intensities against the true ones.
fn intensity_errors(
    gen: &GenModel,
    basis: &BasisSystem,
    res: &FitResult,
    scores: &[Vec<f64>],
    grid: &[Point],
    weights: &[f64],
) -> Result<(f64, f64)> {
    let est = component_grid(basis, &res.params, grid)?;
    let truth: Vec<Vec<f64>> = (0..gen.components()).map(|k| grid.iter().map(|t| gen.density(k, t.x)).collect()).collect();
    let (mut isq, mut dsq) = (0.0, 0.0);
    for (rep, u) in res.stats.replications.iter().zip(scores) {
        let lam_hat: Vec<f64> = (0..grid.len()).map(|g| (0..est.len()).map(|k| rep.euk[k] * est[k][g]).sum()).collect();
        let lam: Vec<f64> = (0..grid.len()).map(|g| (0..truth.len()).map(|k| u[k] * truth[k][g]).sum()).collect();
        isq += squared_error(&lam_hat, &lam, weights);
        let mh: f64 = lam_hat.iter().zip(weights).map(|(x, w)| x * w).sum();
        let m: f64 = lam.iter().zip(weights).map(|(x, w)| x * w).sum();
        let dh: Vec<f64> = lam_hat.iter().map(|x| x / mh).collect();
        let d: Vec<f64> = lam.iter().map(|x| x / m).collect();
        dsq += squared_error(&dh, &d, weights);
    }
    let n = scores.len() as f64;
    Ok((isq / n, dsq / n))
}

fn run_rep(cfg: &StudyConfig, basis: &BasisSystem, r: usize, with_cv: bool) -> Result<RepOutcome> {
    let p = cfg.gen.components();
    let rep_seed = rng::derive(cfg.seed, &[r as u64]);
    let data = simulate_data(&cfg.gen, cfg.n, rng::derive(rep_seed, &[rng::name_tag("data")]))?;
    let (grid, weights) = unit_grid(cfg.grid_size);
    let truth: Vec<Vec<f64>> = (0..p).map(|k| grid.iter().map(|t| cfg.gen.density(k, t.x)).collect()).collect();
    let fit_seed = rng::derive(rep_seed, &[rng::name_tag("fit")]);
    let template = FitConfig { seed: fit_seed, ..cfg.fit.clone() };
    let fits: Vec<Option<FitResult>> = if cfg.warm_path {
        fit_path(&data.patterns, basis, p, &cfg.zeta_grid, &template, true).into_iter().map(Result::ok).collect()
    } else {
        par::map(&cfg.zeta_grid, |_, &zeta| fit(&data.patterns, basis, p, &FitConfig { zeta, ..template.clone() }).ok())
    };
    let estimates = fits
        .iter()
        .map(|f| {
            f.as_ref().and_then(|f| {
                let est = component_grid(basis, &f.params, &grid).ok()?;
                let perm = match_components(&est, &truth, &weights);
                Some(perm.iter().map(|&e| est[e].clone()).collect())
            })
        })
        .collect();
    let converged = fits.iter().map(|f| f.as_ref().is_some_and(|f| f.converged)).collect();
    let (mut max_mass_error, mut min_coeff) = (0.0f64, f64::INFINITY);
    for f in fits.iter().flatten() {
        for m in f.params.masses(basis) {
            max_mass_error = max_mass_error.max((m - 1.0).abs());
        }
        min_coeff = f.params.coeffs().iter().flatten().fold(min_coeff, |a, &b| a.min(b));
    }
    let mut out = RepOutcome {
        estimates,
        cv_choice: None,
        intensity_sq: None,
        density_sq: None,
        converged,
        max_mass_error,
        min_coeff,
    };
    if with_cv {
        // the refit at the selected ζ is the grid fit with the same seed
        let plan = CvPlan {
            folds: cfg.folds,
            zeta_grid: cfg.zeta_grid.clone(),
            p_grid: vec![p],
            seed: rng::derive(rep_seed, &[rng::name_tag("cv")]),
            fit: template.clone(),
            heldout_draws: cfg.heldout_draws,
            warm_path: cfg.warm_path,
        };
        if let Ok(report) = kfold_cv(&data.patterns, basis, &plan) {
            if let Some((_, zeta)) = report.selected {
                let idx = cfg.zeta_grid.iter().position(|&z| z == zeta);
                out.cv_choice = idx.filter(|&i| fits[i].is_some());
                if let Some(i) = out.cv_choice {
                    let f = fits[i].as_ref().expect("checked");
                    let (isq, dsq) = intensity_errors(&cfg.gen, basis, f, &data.scores, &grid, &weights)?;
                    out.intensity_sq = Some(isq);
                    out.density_sq = Some(dsq);
                }
            }
        }
    }
    Ok(out)
}

/// Mean and standard error of per-rep squared errors, mapped to an rmse and its delta-method se.
fn root_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let rmse = mean.sqrt();
    (rmse, if rmse > 0.0 { (var / n).sqrt() / (2.0 * rmse) } else { 0.0 })
}

fn table1_rows(cfg: &StudyConfig, reps: &[RepOutcome], policy: ZetaPolicy) -> Result<Vec<Table1Row>> {
    let p = cfg.gen.components();
    let (grid, weights) = unit_grid(cfg.grid_size);
    let truth: Vec<Vec<f64>> = (0..p).map(|k| grid.iter().map(|t| cfg.gen.density(k, t.x)).collect()).collect();
    // per rep, the ζ index whose estimate is used
    let choice: Vec<Option<usize>> = match policy {
        ZetaPolicy::CrossValidated => reps.iter().map(|r| r.cv_choice).collect(),
        ZetaPolicy::GridOptimal => {
            let best = (0..cfg.zeta_grid.len())
                .filter(|&z| reps.iter().filter(|r| r.estimates[z].is_some()).count() * 5 >= reps.len() * 4)
                .min_by(|&a, &b| {
                    let mse = |z: usize| {
                        let ok: Vec<&Vec<Vec<f64>>> = reps.iter().filter_map(|r| r.estimates[z].as_ref()).collect();
                        ok.iter()
                            .map(|e| (0..p).map(|k| squared_error(&e[k], &truth[k], &weights)).sum::<f64>())
                            .sum::<f64>()
                            / ok.len() as f64
                    };
                    mse(a).total_cmp(&mse(b))
                });
            reps.iter().map(|r| best.filter(|&z| r.estimates[z].is_some())).collect()
        }
    };
    let failures = choice.iter().filter(|c| c.is_none()).count();
    let valid = failures * 5 <= reps.len();
    let zeta = match policy {
        ZetaPolicy::GridOptimal => choice.iter().flatten().next().map(|&z| cfg.zeta_grid[z]),
        ZetaPolicy::CrossValidated => None,
    };
    let mut rows = Vec::with_capacity(p);
    for k in 0..p {
        let ests: Vec<Vec<f64>> = reps
            .iter()
            .zip(&choice)
            .filter_map(|(r, c)| c.and_then(|z| r.estimates[z].as_ref()).map(|e| e[k].clone()))
            .collect();
        let (error, rmse_se) = if ests.len() >= 2 {
            let sq: Vec<f64> = ests.iter().map(|e| squared_error(e, &truth[k], &weights)).collect();
            (error_triple(&ests, &truth[k], &weights)?, root_mean(&sq).1)
        } else {
            (ErrorTriple { bias: f64::NAN, std: f64::NAN, rmse: f64::NAN }, f64::NAN)
        };
        rows.push(Table1Row { policy, component: k, zeta, error, rmse_se, failures, valid: valid && ests.len() >= 2 });
    }
    Ok(rows)
}

fn table2_row(reps: &[RepOutcome]) -> Table2Row {
    let isq: Vec<f64> = reps.iter().filter_map(|r| r.intensity_sq).collect();
    let dsq: Vec<f64> = reps.iter().filter_map(|r| r.density_sq).collect();
    let failures = reps.len() - isq.len();
    let (ir, ise) = if isq.is_empty() { (f64::NAN, f64::NAN) } else { root_mean(&isq) };
    let (dr, dse) = if dsq.is_empty() { (f64::NAN, f64::NAN) } else { root_mean(&dsq) };
    Table2Row {
        intensity_rmse: ir,
        intensity_se: ise,
        density_rmse: dr,
        density_se: dse,
        failures,
        valid: failures * 5 <= reps.len() && !isq.is_empty(),
    }
}

/// Run the study once and report both policies' component errors and, when
/// cross-validation is requested, the intensity/density errors at the CV choice.
pub fn run_study(cfg: &StudyConfig, with_cv: bool) -> Result<StudyReport> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let reps = par::map_range(cfg.reps, |r| run_rep(cfg, &basis, r, with_cv)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut table1 = table1_rows(cfg, &reps, ZetaPolicy::GridOptimal)?;
    let mut table2 = None;
    if with_cv {
        table1.extend(table1_rows(cfg, &reps, ZetaPolicy::CrossValidated)?);
        table2 = Some(table2_row(&reps));
    }
    Ok(StudyReport { table1, table2, reps })
}

/// Component error rows under one ζ policy.
pub fn run_table1(cfg: &StudyConfig, policy: ZetaPolicy) -> Result<Vec<Table1Row>> {
    let report = run_study(cfg, policy == ZetaPolicy::CrossValidated)?;
    Ok(report.table1.into_iter().filter(|r| r.policy == policy).collect())
}

/// Intensity and density errors of the cross-validated fit.
pub fn run_table2(cfg: &StudyConfig) -> Result<Table2Row> {
    Ok(run_study(cfg, true)?.table2.expect("cross-validation ran"))
}
