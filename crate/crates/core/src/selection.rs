//! K-fold cross-validation over the smoothing parameter and the number of components.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::fit::{fit, fit_from, FitConfig, FitResult};
use crate::model::{marginal_loglik, PointPattern};
use crate::{par, rng};

/// Fits at each `ζ` of `zetas` in order, with the template's other settings. With `warm`,
/// each fit starts where the previous successful one ended.
pub fn fit_path(
    patterns: &[PointPattern],
    basis: &BasisSystem,
    p: usize,
    zetas: &[f64],
    template: &FitConfig,
    warm: bool,
) -> Vec<Result<FitResult>> {
    let mut out: Vec<Result<FitResult>> = Vec::with_capacity(zetas.len());
    for &zeta in zetas {
        let cfg = FitConfig { zeta, ..template.clone() };
        let start = out.iter().rev().find_map(|r| r.as_ref().ok()).filter(|_| warm).map(|r| r.params.clone());
        out.push(match start {
            Some(start) => fit_from(patterns, basis, start, &cfg),
            None => fit(patterns, basis, p, &cfg),
        });
    }
    out
}

/// Default smoothing grid: 10⁻⁸ … 10⁻¹, one point per decade.
pub fn default_zeta_grid() -> Vec<f64> {
    (0..8).map(|i| libm::pow(10.0, -8.0 + i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub folds: usize,
    pub zeta_grid: Vec<f64>,
    pub p_grid: Vec<usize>,
    /// Seeds the fold shuffle and the held-out Monte-Carlo draws.
    pub seed: u64,
    /// Template for every fit; its `zeta` is replaced by the grid value.
    pub fit: FitConfig,
    /// Monte-Carlo draws for each held-out log-likelihood.
    pub heldout_draws: usize,
    /// Start each fit from the fit at the previous grid value of ζ (same `p`, same fold).
    pub warm_path: bool,
}

impl CvPlan {
    pub fn new(zeta_grid: Vec<f64>, p_grid: Vec<usize>, fit: FitConfig) -> Self {
        Self { folds: 5, zeta_grid, p_grid, seed: fit.seed, fit, heldout_draws: 4000, warm_path: false }
    }

    pub fn validate(&self, replications: usize) -> Result<()> {
        if self.zeta_grid.is_empty() || self.p_grid.is_empty() {
            return Err(Error::InvalidArgument("the zeta and p grids must be nonempty".into()));
        }
        if self.zeta_grid.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
            return Err(Error::InvalidArgument("zeta values must be finite and >= 0".into()));
        }
        if self.p_grid.contains(&0) {
            return Err(Error::InvalidArgument("component counts must be >= 1".into()));
        }
        if self.folds < 2 || self.folds > replications {
            return Err(Error::InvalidArgument(format!(
                "need 2 <= folds <= replications ({replications}), got {}",
                self.folds
            )));
        }
        if self.heldout_draws == 0 {
            return Err(Error::InvalidArgument("need at least one held-out draw".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldDiagnostics {
    pub fold: usize,
    /// Held-out log-likelihood sum, or the failure message.
    pub outcome: core::result::Result<f64, String>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub p: usize,
    pub zeta: f64,
    /// Sum of held-out log-likelihoods; `None` when any fold failed.
    pub score: Option<f64>,
    pub std_err: f64,
    pub invalid_folds: usize,
    pub folds: Vec<FoldDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    /// Cells sorted by score, best first; invalid cells last.
    pub cells: Vec<CvCell>,
    pub selected: Option<(usize, f64)>,
    /// Fold index of each replication, in input order.
    pub fold_of: Vec<usize>,
}

/// Canonical replication order (by id) and fold labels in that order.
fn assign_folds(patterns: &[PointPattern], folds: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..patterns.len()).collect();
    order.sort_by(|&a, &b| patterns[a].id.cmp(&patterns[b].id));
    if let Some(w) = order.windows(2).find(|w| patterns[w[0]].id == patterns[w[1]].id) {
        return Err(Error::InvalidArgument(format!("duplicate replication id {:?}", patterns[w[0]].id)));
    }
    let mut shuffled: Vec<usize> = (0..order.len()).collect();
    shuffled.shuffle(&mut rng::rng(rng::derive(seed, &[rng::name_tag("folds")])));
    let mut fold_of_rank = vec![0; order.len()];
    for (pos, &rank) in shuffled.iter().enumerate() {
        fold_of_rank[rank] = pos % folds;
    }
    Ok((order, fold_of_rank))
}

pub fn kfold_cv(patterns: &[PointPattern], basis: &BasisSystem, plan: &CvPlan) -> Result<CvReport> {
    plan.validate(patterns.len())?;
    let (order, fold_of_rank) = assign_folds(patterns, plan.folds, plan.seed)?;
    let sorted: Vec<&PointPattern> = order.iter().map(|&i| &patterns[i]).collect();

    let cells: Vec<(usize, f64)> =
        plan.p_grid.iter().flat_map(|&p| plan.zeta_grid.iter().map(move |&z| (p, z))).collect();
    let g = plan.zeta_grid.len();
    // one task per (p, fold) runs the whole ζ path
    let tasks: Vec<(usize, usize)> =
        (0..plan.p_grid.len()).flat_map(|pi| (0..plan.folds).map(move |f| (pi, f))).collect();
    let heldout_seed = rng::derive(plan.seed, &[rng::name_tag("heldout")]);
    let per_task = par::map(&tasks, |_, &(pi, f)| {
        let train: Vec<PointPattern> =
            sorted.iter().zip(&fold_of_rank).filter(|(_, &g)| g != f).map(|(x, _)| (*x).clone()).collect();
        let template = FitConfig { seed: rng::derive(plan.fit.seed, &[f as u64]), ..plan.fit.clone() };
        let fits = if plan.warm_path {
            fit_path(&train, basis, plan.p_grid[pi], &plan.zeta_grid, &template, true)
        } else {
            par::map(&plan.zeta_grid, |_, &z| fit(&train, basis, plan.p_grid[pi], &FitConfig { zeta: z, ..template.clone() }))
        };
        fits.into_iter()
            .map(|fitted| {
                let outcome = fitted.and_then(|r| {
                    let mut total = 0.0;
                    let mut var = 0.0;
                    for (rank, (x, &g)) in sorted.iter().zip(&fold_of_rank).enumerate() {
                        if g == f {
                            let seed = rng::derive(heldout_seed, &[rank as u64]);
                            let ll = marginal_loglik(basis, &r.params, x, plan.heldout_draws, seed)?;
                            total += ll.value;
                            var += ll.mc_std_err * ll.mc_std_err;
                        }
                    }
                    Ok((total, var, r.converged, r.iterations))
                });
                match outcome {
                    Ok((s, v, conv, it)) => {
                        (FoldDiagnostics { fold: f, outcome: Ok(s), converged: conv, iterations: it }, v)
                    }
                    Err(e) => (
                        FoldDiagnostics { fold: f, outcome: Err(format!("{e}")), converged: false, iterations: 0 },
                        0.0,
                    ),
                }
            })
            .collect::<Vec<_>>()
    });
    let mut results: Vec<(usize, (FoldDiagnostics, f64))> = Vec::with_capacity(cells.len() * plan.folds);
    for (&(pi, _), row) in tasks.iter().zip(per_task) {
        for (zi, r) in row.into_iter().enumerate() {
            results.push((pi * g + zi, r));
        }
    }
    results.sort_by_key(|(c, (d, _))| (*c, d.fold));

    let mut report_cells: Vec<CvCell> = cells
        .iter()
        .map(|&(p, zeta)| CvCell { p, zeta, score: Some(0.0), std_err: 0.0, invalid_folds: 0, folds: Vec::new() })
        .collect();
    for (c, (diag, var)) in results {
        let cell = &mut report_cells[c];
        match diag.outcome {
            Ok(s) => cell.score = cell.score.map(|t| t + s),
            Err(_) => {
                cell.invalid_folds += 1;
                cell.score = None;
            }
        }
        cell.std_err += var;
        cell.folds.push(diag);
    }
    for cell in &mut report_cells {
        cell.std_err = cell.std_err.sqrt();
        if cell.score.is_some_and(|s| !s.is_finite()) {
            cell.score = None;
        }
    }
    // stable sort keeps grid order among ties, so the first best cell is selected
    report_cells.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    let selected = report_cells.first().filter(|c| c.score.is_some()).map(|c| (c.p, c.zeta));
    let mut fold_of = vec![0; patterns.len()];
    for (rank, &i) in order.iter().enumerate() {
        fold_of[i] = fold_of_rank[rank];
    }
    Ok(CvReport { cells: report_cells, selected, fold_of })
}

/// Cross-validate, then refit on all replications at the selected `(p, ζ)` with the
/// template's seed (so a one-cell grid reproduces a plain fit).
pub fn select_model(patterns: &[PointPattern], basis: &BasisSystem, plan: &CvPlan) -> Result<(FitResult, CvReport)> {
    let report = kfold_cv(patterns, basis, plan)?;
    let (p, zeta) = report.selected.ok_or(Error::SelectionFailed)?;
    let cfg = FitConfig { zeta, ..plan.fit.clone() };
    Ok((fit(patterns, basis, p, &cfg)?, report))
}
