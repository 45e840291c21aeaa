//! Posterior expectations of the latent labels and scores.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma};

use crate::basis::{BasisSystem, Design};
use crate::error::{Error, Result};
use crate::math::{digamma, trigamma, LogSumExp};
use crate::model::{
    conditional_moments, enumerate_labels, within_enumeration_budget, DensityTable, ModelParams, PointPattern,
    Tilted, ENUMERATION_BUDGET,
};
use crate::{par, rng};

/// Posterior summaries for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    /// Responsibilities `E[y_jk | x]`, row-major `m × p`.
    pub gamma: Vec<f64>,
    /// `E[U_k | x]`.
    pub euk: Vec<f64>,
    /// `E[log U_k | x]`.
    pub elogu: Vec<f64>,
}

impl ReplicationStats {
    pub fn points(&self) -> usize {
        if self.euk.is_empty() {
            0
        } else {
            self.gamma.len() / self.euk.len()
        }
    }

    pub fn gamma_row(&self, j: usize) -> &[f64] {
        let p = self.euk.len();
        &self.gamma[j * p..(j + 1) * p]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStepStats {
    pub components: usize,
    pub replications: Vec<ReplicationStats>,
}

impl EStepStats {
    pub fn len(&self) -> usize {
        self.replications.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replications.is_empty()
    }

    /// `Σ_i Σ_j γ_ijk` per component.
    pub fn responsibility_totals(&self) -> Vec<f64> {
        let p = self.components;
        let mut tot = vec![0.0; p];
        for r in &self.replications {
            for row in r.gamma.chunks(p) {
                for (t, g) in tot.iter_mut().zip(row) {
                    *t += g;
                }
            }
        }
        tot
    }

    /// Reorder components so that new component `i` is old component `order[i]`.
    pub fn permute(&mut self, order: &[usize]) {
        let p = self.components;
        for r in &mut self.replications {
            let old = r.gamma.clone();
            for (j, row) in r.gamma.chunks_mut(p).enumerate() {
                for (i, &k) in order.iter().enumerate() {
                    row[i] = old[j * p + k];
                }
            }
            r.euk = order.iter().map(|&k| r.euk[k]).collect();
            r.elogu = order.iter().map(|&k| r.elogu[k]).collect();
        }
    }
}

pub(crate) fn designs(basis: &BasisSystem, patterns: &[PointPattern]) -> Result<Vec<Design>> {
    patterns.iter().map(|p| basis.design(&p.points)).collect()
}

pub(crate) fn table_for(model: &ModelParams, design: &Design) -> Result<DensityTable> {
    let table = DensityTable::new(model, design);
    if let Some(point) = table.unsupported_point() {
        return Err(Error::PatternUnsupported { point });
    }
    Ok(table)
}

/// Exact posterior summaries by label enumeration; also returns `log f(x)`.
pub(crate) fn exact_replication(table: &DensityTable, model: &ModelParams, basis: &BasisSystem) -> (ReplicationStats, f64) {
    let (m, p) = (table.m, table.p);
    let alphas = model.scores().alphas();
    let tilted = Tilted::new(model, basis);
    let mut acc = LogSumExp::default();
    enumerate_labels(table, alphas, &tilted.scales, |_, _, lw| acc.push(lw));
    let log_z = acc.value();

    let psi: Vec<Vec<f64>> = (0..p)
        .map(|k| (0..=m).map(|n| digamma(alphas[k] + n as f64) + tilted.scales[k].ln()).collect())
        .collect();
    let mut gamma = vec![0.0; m * p];
    let mut euk = vec![0.0; p];
    let mut elogu = vec![0.0; p];
    enumerate_labels(table, alphas, &tilted.scales, |labels, counts, lw| {
        let w = (lw - log_z).exp();
        if w == 0.0 {
            return;
        }
        for (j, &k) in labels.iter().enumerate() {
            gamma[j * p + k] += w;
        }
        for k in 0..p {
            euk[k] += w * (alphas[k] + counts[k] as f64) * tilted.scales[k];
            elogu[k] += w * psi[k][counts[k]];
        }
    });
    normalize_rows(&mut gamma, p);
    (ReplicationStats { gamma, euk, elogu }, tilted.log_const + log_z)
}

fn normalize_rows(gamma: &mut [f64], p: usize) {
    for row in gamma.chunks_mut(p) {
        let s: f64 = row.iter().sum();
        for g in row {
            *g /= s;
        }
    }
}

/// Rao–Blackwellised Gibbs sampler over labels and scores.
pub(crate) fn gibbs_replication(
    table: &DensityTable,
    model: &ModelParams,
    basis: &BasisSystem,
    sweeps: usize,
    seed: u64,
) -> ReplicationStats {
    let (m, p) = (table.m, table.p);
    let alphas = model.scores().alphas();
    let scales = Tilted::new(model, basis).scales;
    let mut r = rng::rng(seed);
    let burn = sweeps / 5;
    let kept = (sweeps - burn) as f64;

    let mut gamma = vec![0.0; m * p];
    let mut euk = vec![0.0; p];
    let mut elogu = vec![0.0; p];
    let mut u: Vec<f64> = (0..p).map(|k| (alphas[k] + m as f64 / p as f64) * scales[k]).collect();
    let mut counts = vec![0usize; p];
    let mut expected = vec![0.0; p];
    let mut w = vec![0.0; p];
    for sweep in 0..sweeps {
        let keep = sweep >= burn;
        counts.iter_mut().for_each(|c| *c = 0);
        expected.iter_mut().for_each(|c| *c = 0.0);
        for j in 0..m {
            let row = table.row(j);
            let mut total = 0.0;
            for k in 0..p {
                w[k] = u[k] * row[k];
                total += w[k];
            }
            let target = r.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = p - 1;
            for k in 0..p {
                cum += w[k];
                if target < cum {
                    pick = k;
                    break;
                }
            }
            counts[pick] += 1;
            for k in 0..p {
                expected[k] += w[k] / total;
            }
            if keep {
                let g = &mut gamma[j * p..(j + 1) * p];
                for k in 0..p {
                    g[k] += w[k] / total;
                }
            }
        }
        for k in 0..p {
            let shape = alphas[k] + counts[k] as f64;
            u[k] = Gamma::new(shape, scales[k]).expect("positive shape").sample(&mut r).max(f64::MIN_POSITIVE);
            if keep {
                // the count enters through its mean given u; the log moment gets the matching
                // control variate, which by concavity of ψ keeps E[log U] below log E[U]
                let mean_shape = alphas[k] + expected[k];
                euk[k] += mean_shape * scales[k];
                let elu = conditional_moments(alphas[k], counts[k], scales[k]).1;
                elogu[k] += elu + trigamma(mean_shape) * (expected[k] - counts[k] as f64);
            }
        }
    }
    for v in gamma.iter_mut().chain(euk.iter_mut()).chain(elogu.iter_mut()) {
        *v /= kept;
    }
    normalize_rows(&mut gamma, p);
    ReplicationStats { gamma, euk, elogu }
}

/// Exact E-step; refuses patterns with more than 10⁶ label vectors.
pub fn e_step_exact(basis: &BasisSystem, model: &ModelParams, patterns: &[PointPattern]) -> Result<EStepStats> {
    let p = model.components();
    if let Some(big) = patterns.iter().find(|x| !within_enumeration_budget(x.len(), p)) {
        return Err(Error::EnumerationBudget { needed: (p as f64).powi(big.len() as i32), budget: ENUMERATION_BUDGET });
    }
    let ds = designs(basis, patterns)?;
    let reps = par::map(&ds, |_, d| table_for(model, d).map(|t| exact_replication(&t, model, basis).0));
    Ok(EStepStats { components: p, replications: reps.into_iter().collect::<Result<_>>()? })
}

/// Gibbs E-step with `sweeps` sweeps (20% burn-in); replication `i` uses the stream
/// derived from `(seed, i)`.
pub fn e_step_gibbs(
    basis: &BasisSystem,
    model: &ModelParams,
    patterns: &[PointPattern],
    sweeps: usize,
    seed: u64,
) -> Result<EStepStats> {
    check_sweeps(sweeps)?;
    let ds = designs(basis, patterns)?;
    let reps = par::map(&ds, |i, d| {
        table_for(model, d).map(|t| gibbs_replication(&t, model, basis, sweeps, rng::derive(seed, &[i as u64])))
    });
    Ok(EStepStats { components: model.components(), replications: reps.into_iter().collect::<Result<_>>()? })
}

pub(crate) fn check_sweeps(sweeps: usize) -> Result<()> {
    if sweeps < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 Gibbs sweeps, got {sweeps}")));
    }
    Ok(())
}
