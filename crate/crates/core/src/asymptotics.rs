//! Fisher information, tangent cones at the estimate, the limiting law of the
//! normalised estimator and coefficient confidence intervals.
//!
//! Parameters are laid out as `θ = (c_1, …, c_p, α_1, …, α_p, β)`, so `d = p·q + p + 1`.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::estep::{exact_replication, gibbs_replication, table_for};
use crate::math::{digamma, normal_quantile};
use crate::model::{within_enumeration_budget, ModelParams, PointPattern};
use crate::simulation::{FittedComponents, PatternSampler};
use crate::{par, rng};

/// Number of free parameters `p·q + p + 1`.
pub fn parameter_count(model: &ModelParams) -> usize {
    let (p, q) = (model.components(), model.basis_size());
    p * q + p + 1
}

/// `θ` flattened in the standard layout.
pub fn theta_vector(model: &ModelParams) -> DVector<f64> {
    let mut v: Vec<f64> = model.coeffs().iter().flatten().copied().collect();
    v.extend_from_slice(model.scores().alphas());
    v.push(model.scores().beta());
    DVector::from_vec(v)
}

/// Gradient of the roughness penalty `Σ_k c_kᵀΩc_k` (zero on the score block).
pub fn penalty_gradient(basis: &BasisSystem, model: &ModelParams) -> DVector<f64> {
    let (p, q) = (model.components(), model.basis_size());
    let mut g = DVector::zeros(parameter_count(model));
    for k in 0..p {
        let c = DVector::from_column_slice(model.coeff(k));
        let gc = basis.penalty() * c * 2.0;
        g.rows_mut(k * q, q).copy_from(&gc);
    }
    g
}

/// Per-pattern scores `∇ log f(x_i; θ)` from Fisher's identity: posterior expectations of the
/// complete-data gradient. Patterns within the enumeration budget use exact expectations,
/// larger ones a Gibbs sampler with `sweeps` sweeps.
pub fn pattern_scores(
    basis: &BasisSystem,
    model: &ModelParams,
    patterns: &[PointPattern],
    sweeps: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    crate::estep::check_sweeps(sweeps)?;
    let (p, q) = (model.components(), model.basis_size());
    let d = parameter_count(model);
    let a = basis.integrals();
    let alphas = model.scores().alphas();
    let beta = model.scores().beta();
    let out = par::map(patterns, |i, pattern| -> Result<DVector<f64>> {
        let design = basis.design(&pattern.points)?;
        let table = table_for(model, &design)?;
        let stats = if within_enumeration_budget(table.m, p) {
            exact_replication(&table, model, basis).0
        } else {
            gibbs_replication(&table, model, basis, sweeps, rng::derive(seed, &[i as u64]))
        };
        let mut s = DVector::zeros(d);
        for j in 0..table.m {
            let dens = table.row(j);
            let gam = stats.gamma_row(j);
            let (cols, vals) = design.row(j);
            for k in 0..p {
                if gam[k] > 0.0 {
                    let w = gam[k] / dens[k];
                    for (&c, &v) in cols.iter().zip(vals) {
                        s[k * q + c as usize] += w * v;
                    }
                }
            }
        }
        for k in 0..p {
            for (j, &aj) in a.iter().enumerate() {
                s[k * q + j] -= stats.euk[k] * aj;
            }
            s[p * q + k] = stats.elogu[k] - beta.ln() - digamma(alphas[k]);
            s[d - 1] += stats.euk[k] / (beta * beta) - alphas[k] / beta;
        }
        Ok(s)
    });
    out.into_iter().collect()
}

/// Which patterns the information is averaged over.
#[derive(Debug, Clone, Copy)]
pub enum FisherSource<'a> {
    /// The observed replications.
    Empirical(&'a [PointPattern]),
    /// Fresh replications simulated from the fitted model.
    Generative { patterns: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    /// Gibbs sweeps per over-budget pattern.
    pub mc_draws: usize,
    pub patterns: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Fewer patterns than parameters: the estimate cannot have full rank.
    pub singular_warning: bool,
}

impl FisherInfo {
    /// Wrap a symmetric positive semi-definite matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, patterns: usize) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument("information matrix must be square and nonempty".into()));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let scale = sym.amax().max(f64::MIN_POSITIVE);
        if (&matrix - &sym).amax() > 1e-10 * scale {
            return Err(Error::InvalidArgument("information matrix is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
        let (min, max) = (eig.min(), eig.max());
        if min < -1e-8 * max.abs().max(scale) {
            return Err(Error::InvalidArgument(format!("information matrix has eigenvalue {min}")));
        }
        let d = sym.nrows();
        Ok(Self { matrix: sym, mc_draws: 0, patterns, min_eigenvalue: min, max_eigenvalue: max, singular_warning: patterns < d })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn condition(&self) -> f64 {
        if self.min_eigenvalue > 0.0 {
            self.max_eigenvalue / self.min_eigenvalue
        } else {
            f64::INFINITY
        }
    }
}

/// `F̂₀ = n⁻¹ Σ_i s_i s_iᵀ` over observed or simulated replications.
pub fn estimate_fisher(
    basis: &BasisSystem,
    model: &ModelParams,
    source: FisherSource<'_>,
    mc_draws: usize,
    seed: u64,
) -> Result<FisherInfo> {
    if mc_draws < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 Monte-Carlo draws, got {mc_draws}")));
    }
    let simulated;
    let patterns = match source {
        FisherSource::Empirical(x) => x,
        FisherSource::Generative { patterns } => {
            if patterns == 0 {
                return Err(Error::InvalidArgument("need at least one simulated pattern".into()));
            }
            simulated = simulate_from(basis, model, patterns, rng::derive(seed, &[rng::name_tag("patterns")]))?;
            &simulated[..]
        }
    };
    if patterns.is_empty() {
        return Err(Error::InvalidArgument("no patterns to average over".into()));
    }
    let scores = pattern_scores(basis, model, patterns, mc_draws, rng::derive(seed, &[rng::name_tag("scores")]))?;
    let d = parameter_count(model);
    let mut f = DMatrix::zeros(d, d);
    for s in &scores {
        f.ger(1.0, s, s, 1.0);
    }
    f /= scores.len() as f64;
    let mut info = FisherInfo::from_matrix(f, patterns.len())?;
    info.mc_draws = mc_draws;
    Ok(info)
}

/// Replications drawn from a fitted model: Gamma scores, then Poisson patterns.
pub fn simulate_from(basis: &BasisSystem, model: &ModelParams, n: usize, seed: u64) -> Result<Vec<PointPattern>> {
    let source = FittedComponents { basis, model };
    let resolution = if basis.region().dimension() == 1 { 512 } else { 64 };
    let sampler = PatternSampler::new(&source, resolution)?;
    let beta = model.scores().beta();
    let laws: Vec<Gamma<f64>> = model
        .scores()
        .alphas()
        .iter()
        .map(|&a| Gamma::new(a, beta).map_err(|e| Error::InvalidArgument(format!("{e}"))))
        .collect::<Result<_>>()?;
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let u: Vec<f64> = laws.iter().map(|g| g.sample(&mut r)).collect();
            sampler.pattern(format!("sim{i:05}"), &u, &mut r)
        })
        .collect()
}

/// Linearised feasible set at the estimate: equality rows `Eδ = 0`, sign constraints
/// `δ_i ≥ 0` on active coordinates, everything else free.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentCone {
    pub dim: usize,
    pub equality: DMatrix<f64>,
    /// Coordinates constrained to be non-negative, ascending.
    pub inequalities: Vec<usize>,
    /// Per-component active sets (empty for cones not built from a model).
    pub active_sets: Vec<Vec<usize>>,
    /// Size of the trailing unconstrained score block.
    pub free_dim: usize,
    /// Orthonormal basis `L` (`d × (d − rank E)`) of the null space of `E`.
    pub null_basis: DMatrix<f64>,
}

/// Orthonormal basis of `{v : aᵀv = 0}` from the Householder reflection taking `a` to `‖a‖e₁`.
pub fn orthogonal_complement(a: &[f64]) -> Result<DMatrix<f64>> {
    let q = a.len();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("cannot complement a zero vector".into()));
    }
    let mut v: Vec<f64> = a.iter().map(|x| x / norm).collect();
    // reflect onto -sign(a₀)e₁ to avoid cancellation
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let mut h = DMatrix::identity(q, q);
    for i in 0..q {
        for j in 0..q {
            h[(i, j)] -= 2.0 * v[i] * v[j] / vv;
        }
    }
    Ok(h.columns(1, q - 1).into_owned())
}

impl TangentCone {
    /// Cone from explicit constraints; the null-space basis comes from the eigenvectors of `EᵀE`.
    pub fn new(dim: usize, equality: DMatrix<f64>, inequalities: Vec<usize>) -> Result<Self> {
        if equality.ncols() != dim && equality.nrows() > 0 {
            return Err(Error::InvalidArgument("equality rows must have one entry per coordinate".into()));
        }
        if inequalities.iter().any(|&i| i >= dim) {
            return Err(Error::InvalidArgument("inequality coordinate out of range".into()));
        }
        let mut inequalities = inequalities;
        inequalities.sort_unstable();
        inequalities.dedup();
        let null_basis = if equality.nrows() == 0 {
            DMatrix::identity(dim, dim)
        } else {
            let gram = equality.transpose() * &equality;
            let eig = SymmetricEigen::new(gram);
            let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
            let keep: Vec<usize> = (0..dim).filter(|&i| eig.eigenvalues[i].abs() <= 1e-12 * top).collect();
            DMatrix::from_fn(dim, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])])
        };
        Ok(Self { dim, equality, inequalities, active_sets: Vec::new(), free_dim: 0, null_basis })
    }

    pub fn is_interior(&self) -> bool {
        self.inequalities.is_empty()
    }

    /// Dimension of the reduced (null-space) coordinates.
    pub fn reduced_dim(&self) -> usize {
        self.null_basis.ncols()
    }
}

/// Default activation tolerance: `10⁻⁶ · max ĉ`.
pub fn default_activation_tol(model: &ModelParams) -> f64 {
    1e-6 * model.coeffs().iter().flatten().fold(0.0f64, |m, &x| m.max(x))
}

/// Cone at a fitted model: `aᵀv_k = 0` for every component, `v_kj ≥ 0` where `ĉ_kj ≤ tol`,
/// scores unconstrained.
pub fn tangent_cone(basis: &BasisSystem, model: &ModelParams, activation_tol: f64) -> Result<TangentCone> {
    model.check_feasible(basis)?;
    if !(activation_tol >= 0.0) {
        return Err(Error::InvalidArgument("activation tolerance must be >= 0".into()));
    }
    let (p, q) = (model.components(), model.basis_size());
    let d = parameter_count(model);
    let a = basis.integrals();
    let mut equality = DMatrix::zeros(p, d);
    for k in 0..p {
        for j in 0..q {
            equality[(k, k * q + j)] = a[j];
        }
    }
    let active_sets: Vec<Vec<usize>> =
        (0..p).map(|k| (0..q).filter(|&j| model.coeff(k)[j] <= activation_tol).collect()).collect();
    let inequalities = active_sets.iter().enumerate().flat_map(|(k, s)| s.iter().map(move |&j| k * q + j)).collect();
    let gamma = orthogonal_complement(a)?;
    let r = p + 1;
    let mut null_basis = DMatrix::zeros(d, p * (q - 1) + r);
    for k in 0..p {
        null_basis.view_mut((k * q, k * (q - 1)), (q, q - 1)).copy_from(&gamma);
    }
    for i in 0..r {
        null_basis[(p * q + i, p * (q - 1) + i)] = 1.0;
    }
    Ok(TangentCone { dim: d, equality, inequalities, active_sets, free_dim: r, null_basis })
}

/// Maximiser of `gᵀδ − ½δᵀFδ` over a cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    pub delta: DVector<f64>,
    /// Stationarity and sign-feasibility residual, relative to `max(1, ‖g‖∞)`.
    pub kkt_residual: f64,
}

/// Reduced quadratic `½xᵀHx − hᵀx` with constraint rows `Gx ≥ 0`.
struct ReducedQp {
    hess: DMatrix<f64>,
    rows: DMatrix<f64>,
    ridged: bool,
}

impl ReducedQp {
    fn new(fisher: &DMatrix<f64>, cone: &TangentCone) -> Self {
        let l = &cone.null_basis;
        let mut hess = l.transpose() * fisher * l;
        hess = (&hess + hess.transpose()) * 0.5;
        let n = hess.nrows();
        let eig = SymmetricEigen::new(hess.clone()).eigenvalues;
        let top = eig.amax().max(1.0);
        let ridged = n > 0 && eig.min() <= 1e-10 * top;
        if ridged {
            for i in 0..n {
                hess[(i, i)] += 1e-10 * top;
            }
        }
        let rows = DMatrix::from_fn(cone.inequalities.len(), n, |r, c| l[(cone.inequalities[r], c)]);
        Self { hess, rows, ridged }
    }

    /// Primal active-set method started at the feasible point `x = 0`, moving towards the
    /// minimiser of each working face; ties are broken by lowest index.
    fn solve(&self, lin: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let n = self.hess.nrows();
        let m = self.rows.nrows();
        let mut x = DVector::zeros(n);
        let mut working: Vec<usize> = Vec::new();
        let hnorm = self.hess.amax().max(f64::MIN_POSITIVE);
        for _ in 0..(20 * (n + m) + 20) {
            let w = working.len();
            let mut kkt = DMatrix::zeros(n + w, n + w);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.hess);
            for (r, &i) in working.iter().enumerate() {
                for c in 0..n {
                    kkt[(n + r, c)] = self.rows[(i, c)];
                    kkt[(c, n + r)] = -self.rows[(i, c)];
                }
            }
            let mut rhs = DVector::zeros(n + w);
            rhs.rows_mut(0, n).copy_from(lin);
            let sol = kkt.lu().solve(&rhs).ok_or_else(|| Error::Internal("singular cone KKT system".into()))?;
            let target = sol.rows(0, n).into_owned();
            let size = 1.0 + target.amax().max(x.amax());
            let feas_tol = 1e-12 * size;
            let step = &target - &x;
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if working.contains(&i) {
                    continue;
                }
                let gt = self.rows.row(i).dot(&target.transpose());
                if gt >= -feas_tol {
                    continue;
                }
                let gp = self.rows.row(i).dot(&step.transpose());
                if gp < 0.0 {
                    let gx = self.rows.row(i).dot(&x.transpose()).max(0.0);
                    let t = gx / -gp;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            if let Some(i) = blocking {
                x += &step * alpha;
                working.push(i);
                continue;
            }
            x = target;
            // multipliers λ with Hx − h = Gᵀ_W λ
            let lambda = sol.rows(n, w).into_owned();
            let mult_tol = 1e-10 * lin.amax().max(hnorm * x.amax()).max(1.0);
            match (0..w).filter(|&r| lambda[r] < -mult_tol).min_by_key(|&r| working[r]) {
                Some(r) => {
                    working.remove(r);
                }
                None => {
                    let mut stat = &self.hess * &x - lin;
                    for (r, &i) in working.iter().enumerate() {
                        stat -= self.rows.row(i).transpose() * lambda[r].max(0.0);
                    }
                    let infeas = (&self.rows * &x).iter().fold(0.0f64, |acc, &v| acc.max(-v));
                    let scale = lin.amax().max(hnorm * x.amax()).max(1.0);
                    return Ok((x, stat.amax().max(infeas) / scale));
                }
            }
        }
        Err(Error::Internal("cone quadratic program did not terminate".into()))
    }
}

/// Maximise `gᵀδ − ½δᵀFδ` over `δ` in the cone.
pub fn cone_maximizer(fisher: &DMatrix<f64>, cone: &TangentCone, g: &DVector<f64>) -> Result<ConeSolution> {
    if fisher.nrows() != cone.dim || g.len() != cone.dim {
        return Err(Error::InvalidArgument("information, cone and linear term dimensions differ".into()));
    }
    let qp = ReducedQp::new(fisher, cone);
    let lin = cone.null_basis.transpose() * g;
    let (x, res) = qp.solve(&lin)?;
    Ok(ConeSolution { delta: &cone.null_basis * x, kkt_residual: res })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticMethod {
    InteriorClosedForm,
    QpMonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticResult {
    /// `M × d` draws of the limiting `δ(Z)` (empty for the closed form).
    pub draws: Vec<DVector<f64>>,
    pub variances: DVector<f64>,
    /// Mean of the limiting law (closed form) or of the draws.
    pub mean: DVector<f64>,
    /// Full covariance of the limiting law.
    pub covariance: DMatrix<f64>,
    pub method: AsymptoticMethod,
    pub kappa: f64,
    /// Coordinates under a sign constraint.
    pub active: Vec<usize>,
    /// A ridge was added to a near-singular reduced information matrix.
    pub ridged: bool,
    pub max_kkt_residual: f64,
}

/// Draw `Z_i ~ N(0, F₀)` and maximise `W(δ) = (Z − κ∇P)ᵀδ − ½δᵀF₀δ` over the cone for each.
pub fn simulate_delta(
    fisher: &FisherInfo,
    cone: &TangentCone,
    kappa: f64,
    grad_penalty: &DVector<f64>,
    draws: usize,
    seed: u64,
) -> Result<AsymptoticResult> {
    if draws < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 draws, got {draws}")));
    }
    let d = cone.dim;
    if fisher.dim() != d || grad_penalty.len() != d {
        return Err(Error::InvalidArgument("information, cone and penalty gradient dimensions differ".into()));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument("kappa must be finite and >= 0".into()));
    }
    let eig = SymmetricEigen::new(fisher.matrix.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let sqrt_f = &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose();
    let qp = ReducedQp::new(&fisher.matrix, cone);
    let shift = grad_penalty * kappa;
    let solved = par::map_range(draws, |i| -> Result<(DVector<f64>, f64)> {
        let mut r = rng::rng(rng::derive(seed, &[i as u64]));
        let e = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut r));
        let z = &sqrt_f * e - &shift;
        let (x, res) = qp.solve(&(cone.null_basis.transpose() * z))?;
        Ok((&cone.null_basis * x, res))
    });
    let mut out = Vec::with_capacity(draws);
    let mut max_res = 0.0f64;
    for s in solved {
        let (delta, res) = s?;
        max_res = max_res.max(res);
        out.push(delta);
    }
    let m = draws as f64;
    let mean = out.iter().fold(DVector::zeros(d), |acc, x| acc + x) / m;
    let mut cov = DMatrix::zeros(d, d);
    for x in &out {
        let c = x - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= m - 1.0;
    Ok(AsymptoticResult {
        variances: cov.diagonal(),
        draws: out,
        mean,
        covariance: cov,
        method: AsymptoticMethod::QpMonteCarlo,
        kappa,
        active: cone.inequalities.clone(),
        ridged: qp.ridged,
        max_kkt_residual: max_res,
    })
}

/// Closed-form limiting law when no coefficient is active: with `L` the orthonormal
/// null-space basis, `F̃₀ = LᵀF₀L`, covariance `L F̃₀⁻¹ Lᵀ` and mean `L F̃₀⁻¹ μ`,
/// `μ = −κ Lᵀ∇P`.
pub fn variance_interior(
    fisher: &FisherInfo,
    cone: &TangentCone,
    kappa: f64,
    grad_penalty: &DVector<f64>,
) -> Result<AsymptoticResult> {
    if !cone.is_interior() {
        return Err(Error::InvalidArgument("closed form needs every coefficient interior".into()));
    }
    if fisher.dim() != cone.dim || grad_penalty.len() != cone.dim {
        return Err(Error::InvalidArgument("information, cone and penalty gradient dimensions differ".into()));
    }
    let l = &cone.null_basis;
    let mut reduced = l.transpose() * &fisher.matrix * l;
    reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);
    let top = eig.eigenvalues.amax();
    let (imin, &vmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidArgument("empty reduced information".into()))?;
    if !(vmin > 1e-12 * top) {
        let direction = (l * eig.eigenvectors.column(imin)).iter().copied().collect();
        return Err(Error::RankDeficient { eigenvalue: vmin, direction });
    }
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    let mut covariance = l * &inv * l.transpose();
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let mean = if kappa == 0.0 { DVector::zeros(cone.dim) } else { l * (&inv * (l.transpose() * grad_penalty * -kappa)) };
    Ok(AsymptoticResult {
        draws: Vec::new(),
        variances: covariance.diagonal(),
        mean,
        covariance,
        method: AsymptoticMethod::InteriorClosedForm,
        kappa,
        active: Vec::new(),
        ridged: false,
        max_kkt_residual: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    /// The interval covers zero.
    pub fn covers_zero(&self) -> bool {
        self.lower <= 0.0 && self.upper >= 0.0
    }
}

fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-coordinate intervals at `level` for `θ̂` from `n` replications. Active
/// coordinates have their lower end clipped at zero.
pub fn confidence_intervals(result: &AsymptoticResult, theta: &DVector<f64>, n: usize, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    if n == 0 || theta.len() != result.variances.len() {
        return Err(Error::InvalidArgument("estimate and result dimensions differ or n = 0".into()));
    }
    let root_n = (n as f64).sqrt();
    let mut out: Vec<Interval> = match result.method {
        AsymptoticMethod::InteriorClosedForm => {
            let z = normal_quantile((1.0 + level) / 2.0);
            (0..theta.len())
                .map(|j| {
                    let half = z * (result.variances[j].max(0.0) / n as f64).sqrt();
                    Interval { estimate: theta[j], lower: theta[j] - half, upper: theta[j] + half }
                })
                .collect()
        }
        AsymptoticMethod::QpMonteCarlo => {
            if result.draws.is_empty() {
                return Err(Error::InvalidArgument("no draws to take quantiles of".into()));
            }
            (0..theta.len())
                .map(|j| {
                    let mut v: Vec<f64> = result.draws.iter().map(|x| theta[j] + x[j] / root_n).collect();
                    v.sort_by(f64::total_cmp);
                    Interval {
                        estimate: theta[j],
                        lower: quantile(&v, (1.0 - level) / 2.0),
                        upper: quantile(&v, (1.0 + level) / 2.0),
                    }
                })
                .collect()
        }
    };
    for &j in &result.active {
        out[j].lower = out[j].lower.max(0.0);
    }
    Ok(out)
}

/// Settings for the full uncertainty pipeline at a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticConfig {
    /// Gibbs sweeps for scores of large patterns (≥ 100).
    pub mc_draws: usize,
    /// Simulated patterns for the generative information estimate; `None` uses the data.
    pub generative_patterns: Option<usize>,
    /// Activation tolerance; `None` uses `10⁻⁶ · max ĉ`.
    pub activation_tol: Option<f64>,
    /// Limiting-law draws when some coefficient is active (or `force_draws`).
    pub delta_draws: usize,
    /// Simulate draws even when the closed form applies.
    pub force_draws: bool,
    pub level: f64,
    pub seed: u64,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        Self {
            mc_draws: 200,
            generative_patterns: None,
            activation_tol: None,
            delta_draws: 2000,
            force_draws: false,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticReport {
    pub fisher: FisherInfo,
    pub cone: TangentCone,
    pub result: AsymptoticResult,
    pub intervals: Vec<Interval>,
}

/// Information, cone, limiting law and intervals at a fit with smoothing `zeta` on `patterns`;
/// `κ = √n ζ`.
pub fn analyze(
    basis: &BasisSystem,
    model: &ModelParams,
    patterns: &[PointPattern],
    zeta: f64,
    config: &AsymptoticConfig,
) -> Result<AsymptoticReport> {
    let n = patterns.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no replications".into()));
    }
    let source = match config.generative_patterns {
        Some(k) => FisherSource::Generative { patterns: k },
        None => FisherSource::Empirical(patterns),
    };
    let fisher = estimate_fisher(basis, model, source, config.mc_draws, rng::derive(config.seed, &[rng::name_tag("fisher")]))?;
    let tol = config.activation_tol.unwrap_or_else(|| default_activation_tol(model));
    let cone = tangent_cone(basis, model, tol)?;
    let kappa = (n as f64).sqrt() * zeta;
    let grad = penalty_gradient(basis, model);
    let result = if cone.is_interior() && !config.force_draws {
        variance_interior(&fisher, &cone, kappa, &grad)?
    } else {
        simulate_delta(&fisher, &cone, kappa, &grad, config.delta_draws, rng::derive(config.seed, &[rng::name_tag("delta")]))?
    };
    let intervals = confidence_intervals(&result, &theta_vector(model), n, config.level)?;
    Ok(AsymptoticReport { fisher, cone, result, intervals })
}
