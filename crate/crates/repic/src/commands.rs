//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use repic_core::asymptotics::{analyze, AsymptoticConfig, AsymptoticMethod, AsymptoticReport};
use repic_core::model::component_grid;
use repic_core::rng;
use repic_core::simulation::{run_study, simulate_data, GenModel, StudyConfig, StudyReport, ZetaPolicy};
use repic_core::{
    default_zeta_grid, fit, posterior_intensity, select_model, BasisSystem, CvPlan, FitConfig, FitResult, ModelParams,
    Point, Region, ScoreParams,
};

use crate::config::{BasisKind, Command, Opts, PolicyArg, RegionArg, SimulateWhat};
use crate::error::{CliError, Result};
use crate::io::{
    event_rows, hash_file, num, read_events, read_region_file, sha256_hex, BasisSpec, Events, OutDir, RegionSpec,
    FORMAT_VERSION,
};

/// Run one subcommand; flags are merged over the config file first.
pub fn run(command: Command) -> Result<()> {
    let name = command.name();
    let opts = command.opts().clone().resolve_file()?;
    if let Some(t) = opts.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match command {
        Command::Fit(_) => cmd_fit(&opts),
        Command::Cv(_) => cmd_cv(&opts),
        Command::Simulate(_) => cmd_simulate(&opts),
        Command::Variance(_) => cmd_variance(&opts),
    }
    .map_err(|e| {
        if let CliError::Config(m) = e {
            CliError::Config(format!("{name}: {m}"))
        } else {
            e
        }
    })
}

fn out_dir(opts: &Opts) -> Result<PathBuf> {
    opts.out.clone().ok_or_else(|| CliError::Config("--out is required".into()))
}

/// Hash of the resolved settings; paths are replaced by file contents and the output
/// directory and thread count are left out, so reruns elsewhere hash identically.
fn config_hash(command: &str, opts: &Opts) -> Result<String> {
    let mut o = opts.clone();
    let mut files = BTreeMap::new();
    if let Some(p) = o.input.take() {
        files.insert("input", hash_file(&p)?);
    }
    if let Some(p) = o.model.take() {
        files.insert("model", hash_file(&p)?);
    }
    if let Some(RegionArg::File(p)) = &o.region {
        files.insert("region", hash_file(p)?);
        o.region = None;
    }
    o.out = None;
    o.threads = None;
    o.config = None;
    #[derive(Serialize)]
    struct View<'a> {
        command: &'a str,
        settings: &'a Opts,
        files: BTreeMap<&'static str, String>,
    }
    Ok(sha256_hex(&serde_json::to_vec(&View { command, settings: &o, files })?))
}

fn root_seed(opts: &Opts) -> u64 {
    opts.seed.unwrap_or(0)
}

fn region_spec(opts: &Opts) -> Result<RegionSpec> {
    let spec = match &opts.region {
        Some(RegionArg::Interval(iv)) => RegionSpec::Interval(*iv),
        Some(RegionArg::File(p)) => read_region_file(p)?,
        None => return Err(CliError::Config("--region is required".into())),
    };
    if let Some(d) = opts.dim {
        if d != spec.dim() {
            return Err(CliError::Config(format!("--dim {d} does not match a {}-D region", spec.dim())));
        }
    }
    Ok(spec)
}

fn basis_spec(opts: &Opts, dim: u8) -> Result<BasisSpec> {
    let kind = opts.basis.unwrap_or(if dim == 1 { BasisKind::Bspline } else { BasisKind::Rbf });
    match (kind, dim) {
        (BasisKind::Bspline, 1) => Ok(BasisSpec::Bspline { spans: opts.knots.unwrap_or(10), quadrature: opts.quadrature.unwrap_or(64) }),
        (BasisKind::Rbf, 2) => {
            let g = opts.centers.unwrap_or(crate::config::CenterGrid { rows: 7, cols: 7 });
            Ok(BasisSpec::Rbf { rows: g.rows, cols: g.cols, bandwidth: opts.bandwidth, quadrature: opts.quadrature.unwrap_or(100) })
        }
        (BasisKind::Bspline, _) => Err(CliError::Config("B-splines need a 1-D region".into())),
        (BasisKind::Rbf, _) => Err(CliError::Config("radial basis functions need a 2-D region".into())),
    }
}

/// Region, basis and events shared by fit and cv.
struct Data {
    region_spec: RegionSpec,
    region: Region,
    basis_spec: BasisSpec,
    basis: BasisSystem,
    events: Events,
}

fn load_data(opts: &Opts) -> Result<Data> {
    let region_spec = region_spec(opts)?;
    let region = region_spec.build()?;
    let basis_spec = basis_spec(opts, region_spec.dim())?;
    let basis = basis_spec.build(&region)?;
    let input = opts.input.as_ref().ok_or_else(|| CliError::Config("--input is required".into()))?;
    let events = read_events(input, &region)?;
    Ok(Data { region_spec, region, basis_spec, basis, events })
}

fn fit_config(opts: &Opts, zeta: f64) -> FitConfig {
    let d = FitConfig::default();
    FitConfig {
        zeta,
        max_outer_iters: opts.max_iters.unwrap_or(d.max_outer_iters),
        gibbs_sweeps: opts.mc_draws.unwrap_or(d.gibbs_sweeps),
        outer_tol: opts.tol.unwrap_or(d.outer_tol),
        objective_draws: opts.objective_draws.unwrap_or(d.objective_draws),
        seed: rng::stream(root_seed(opts), "fit"),
        ..d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub replication_id: String,
    /// Responsibilities, one row per point.
    pub gamma: Vec<Vec<f64>>,
}

/// Fitted model as written to model.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub region: RegionSpec,
    pub basis: BasisSpec,
    pub basis_size: usize,
    pub p: usize,
    pub zeta: f64,
    pub replications: usize,
    /// Row `k` holds the coefficients of component `k`.
    pub coefficients: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub beta: f64,
    pub objective_trace: Vec<Option<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub starved: Vec<bool>,
    pub assignments: Vec<AssignmentDoc>,
}

impl ModelDoc {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let doc: ModelDoc =
            serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.into(), message: e.to_string() })?;
        if doc.format_version != FORMAT_VERSION {
            return Err(CliError::Parse {
                path: path.into(),
                message: format!("unsupported format_version {}", doc.format_version),
            });
        }
        Ok(doc)
    }

    pub fn params(&self, basis: &BasisSystem) -> Result<ModelParams> {
        Ok(ModelParams::new(self.coefficients.clone(), ScoreParams::new(self.alphas.clone(), self.beta)?, basis)?)
    }
}

/// Points at which components and intensities are tabulated.
fn eval_grid(region: &Region, size: Option<usize>) -> Vec<Point> {
    let (lo, hi) = region.bounds();
    if region.dimension() == 1 {
        let n = size.unwrap_or(201).max(2);
        (0..n).map(|i| Point::line(lo.x + (hi.x - lo.x) * i as f64 / (n - 1) as f64)).collect()
    } else {
        let n = size.unwrap_or(60).max(2);
        let mut pts = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                let pt = Point::new(
                    lo.x + (hi.x - lo.x) * ix as f64 / (n - 1) as f64,
                    lo.y + (hi.y - lo.y) * iy as f64 / (n - 1) as f64,
                );
                if region.contains(pt) {
                    pts.push(pt);
                }
            }
        }
        pts
    }
}

fn coord_header(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["t".into()]
    } else {
        vec!["x".into(), "y".into()]
    }
}

fn coords(pt: Point, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![num(pt.x)]
    } else {
        vec![num(pt.x), num(pt.y)]
    }
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}_{k}"))
}

/// model.json, components.csv, scores.csv, assignments.csv and (when requested) intensities.csv.
fn write_fit(out: &OutDir, data: &Data, opts: &Opts, result: &FitResult, p: usize, zeta: f64) -> Result<()> {
    let dim = data.region.dimension();
    let model = &result.params;
    let pats = &data.events.patterns;
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        region: data.region_spec.clone(),
        basis: data.basis_spec.clone(),
        basis_size: data.basis.size(),
        p,
        zeta,
        replications: pats.len(),
        coefficients: model.coeffs().to_vec(),
        alphas: model.scores().alphas().to_vec(),
        beta: model.scores().beta(),
        objective_trace: result.objective_trace.iter().map(|&v| v.is_finite().then_some(v)).collect(),
        converged: result.converged,
        iterations: result.iterations,
        starved: result.starved.clone(),
        assignments: pats
            .iter()
            .zip(&result.stats.replications)
            .map(|(x, r)| AssignmentDoc { replication_id: x.id.clone(), gamma: r.gamma.chunks(p).map(<[f64]>::to_vec).collect() })
            .collect(),
    };
    out.json("model.json", &doc)?;

    let grid = eval_grid(&data.region, opts.grid);
    let phi = component_grid(&data.basis, model, &grid)?;
    let header: Vec<String> = coord_header(dim).into_iter().chain(indexed("phi", p)).collect();
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(j, &pt)| coords(pt, dim).into_iter().chain(phi.iter().map(|c| num(c[j]))).collect())
        .collect();
    out.csv("components.csv", &header, &rows)?;

    let header: Vec<String> = ["replication_id".to_string(), "points".into()].into_iter().chain(indexed("u", p)).collect();
    let rows: Vec<Vec<String>> = pats
        .iter()
        .zip(&result.stats.replications)
        .map(|(x, r)| [x.id.clone(), x.len().to_string()].into_iter().chain(r.euk.iter().map(|&u| num(u))).collect())
        .collect();
    out.csv("scores.csv", &header, &rows)?;

    let header: Vec<String> = ["replication_id".to_string()]
        .into_iter()
        .chain(coord_header(dim))
        .chain(["component".to_string()])
        .chain(indexed("gamma", p))
        .collect();
    let mut rows = Vec::new();
    for ((x, r), raw) in pats.iter().zip(&result.stats.replications).zip(&data.events.raw) {
        #[allow(clippy::needless_range_loop)]
        for j in 0..x.len() {
            let g = r.gamma_row(j);
            let best = (0..p).fold(0, |b, k| if g[k] > g[b] { k } else { b });
            rows.push(
                [x.id.clone()]
                    .into_iter()
                    .chain(raw[j].iter().cloned())
                    .chain([(best + 1).to_string()])
                    .chain(g.iter().map(|&v| num(v)))
                    .collect(),
            );
        }
    }
    out.csv("assignments.csv", &header, &rows)?;

    if let Some(ids) = &opts.intensity_ids {
        let mut rows = Vec::new();
        for id in ids {
            let i = data.events.id_index(id).ok_or_else(|| CliError::Config(format!("unknown replication id {id:?}")))?;
            let lam = posterior_intensity(&data.basis, model, &pats[i], &result.stats, i, &grid)?;
            for (pt, v) in grid.iter().zip(lam) {
                rows.push([id.clone()].into_iter().chain(coords(*pt, dim)).chain([num(v)]).collect());
            }
        }
        let header: Vec<String> =
            ["replication_id".to_string()].into_iter().chain(coord_header(dim)).chain(["intensity".to_string()]).collect();
        out.csv("intensities.csv", &header, &rows)?;
    }
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged { iterations: result.iterations })
    }
}

fn cmd_fit(opts: &Opts) -> Result<()> {
    let data = load_data(opts)?;
    let p = opts.p.unwrap_or(2);
    let zeta = opts.zeta.unwrap_or(FitConfig::default().zeta);
    let cfg = fit_config(opts, zeta);
    cfg.validate()?;
    let out = OutDir::create(out_dir(opts)?, "fit", root_seed(opts), config_hash("fit", opts)?)?;
    let result = fit(&data.events.patterns, &data.basis, p, &cfg)?;
    write_fit(&out, &data, opts, &result, p, zeta)
}

fn cmd_cv(opts: &Opts) -> Result<()> {
    let data = load_data(opts)?;
    let p_grid = opts.p_grid.clone().or(opts.p.map(|p| vec![p])).unwrap_or_else(|| vec![2]);
    let zeta_grid = opts.zeta_grid.clone().or(opts.zeta.map(|z| vec![z])).unwrap_or_else(default_zeta_grid);
    let mut plan = CvPlan::new(zeta_grid, p_grid, fit_config(opts, 0.0));
    plan.folds = opts.folds.unwrap_or(5);
    plan.seed = rng::stream(root_seed(opts), "cv");
    plan.heldout_draws = opts.heldout_draws.unwrap_or(plan.heldout_draws);
    plan.validate(data.events.patterns.len()).map_err(|e| CliError::Config(e.to_string()))?;
    let out = OutDir::create(out_dir(opts)?, "cv", root_seed(opts), config_hash("cv", opts)?)?;
    let (best, report) = select_model(&data.events.patterns, &data.basis, &plan)?;
    let mut cells = report.cells.clone();
    cells.sort_by(|a, b| a.p.cmp(&b.p).then(a.zeta.total_cmp(&b.zeta)));
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.p.to_string(),
                num(c.zeta),
                c.score.map(num).unwrap_or_default(),
                num(c.std_err),
                c.invalid_folds.to_string(),
            ]
        })
        .collect();
    for r in &rows {
        eprintln!("cv p={} zeta={} score={} se={} invalid={}", r[0], r[1], r[2], r[3], r[4]);
    }
    out.csv("cv.csv", &["p", "zeta", "cv_score", "cv_se", "n_invalid_folds"], &rows)?;
    let (p, zeta) = report.selected.ok_or(repic_core::Error::SelectionFailed)?;
    eprintln!("selected p={p} zeta={zeta}");
    write_fit(&out, &data, opts, &best, p, zeta)
}

fn study_config(opts: &Opts, gen: GenModel) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::new(
        gen,
        opts.n.unwrap_or(150),
        opts.knots.unwrap_or(10),
        opts.reps.unwrap_or(50),
        rng::stream(root_seed(opts), "sim"),
    );
    if let Some(g) = &opts.zeta_grid {
        cfg.zeta_grid = g.clone();
    }
    cfg.folds = opts.folds.unwrap_or(cfg.folds);
    cfg.heldout_draws = opts.heldout_draws.unwrap_or(cfg.heldout_draws);
    cfg.grid_size = opts.grid.unwrap_or(cfg.grid_size);
    cfg.fit.gibbs_sweeps = opts.mc_draws.unwrap_or(cfg.fit.gibbs_sweeps);
    cfg.fit.max_outer_iters = opts.max_iters.unwrap_or(cfg.fit.max_outer_iters);
    cfg.fit.outer_tol = opts.tol.unwrap_or(cfg.fit.outer_tol);
    cfg.fit.objective_draws = opts.objective_draws.unwrap_or(cfg.fit.objective_draws);
    if cfg.reps < 10 {
        return Err(CliError::Config(format!("the study needs --reps >= 10, got {}", cfg.reps)));
    }
    if cfg.folds < 2 || cfg.folds > cfg.n {
        return Err(CliError::Config(format!("need 2 <= folds <= n ({}), got {}", cfg.n, cfg.folds)));
    }
    Ok(cfg)
}

fn policy_name(p: ZetaPolicy) -> &'static str {
    match p {
        ZetaPolicy::GridOptimal => "optimal",
        ZetaPolicy::CrossValidated => "cv",
    }
}

fn write_reps(out: &OutDir, cfg: &StudyConfig, report: &StudyReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .reps
        .iter()
        .enumerate()
        .map(|(r, o)| {
            vec![
                r.to_string(),
                o.cv_choice.map(|i| num(cfg.zeta_grid[i])).unwrap_or_default(),
                o.intensity_sq.map(num).unwrap_or_default(),
                o.density_sq.map(num).unwrap_or_default(),
                o.converged.iter().filter(|&&c| c).count().to_string(),
                o.estimates.iter().filter(|e| e.is_none()).count().to_string(),
                num(o.max_mass_error),
                num(o.min_coeff),
            ]
        })
        .collect();
    out.csv(
        "reps.csv",
        &["rep", "cv_zeta", "intensity_sq", "density_sq", "converged_fits", "failed_fits", "max_mass_error", "min_coeff"],
        &rows,
    )
}

fn cmd_simulate(opts: &Opts) -> Result<()> {
    let gen = match opts.gen_model.unwrap_or(2) {
        1 => GenModel::model1(),
        _ => GenModel::model2(),
    };
    let what = opts.what.unwrap_or(SimulateWhat::Data);
    let seed = root_seed(opts);
    match what {
        SimulateWhat::Data => {
            let n = opts.n.unwrap_or(150);
            let out = OutDir::create(out_dir(opts)?, "simulate", seed, config_hash("simulate", opts)?)?;
            let data = simulate_data(&gen, n, rng::stream(seed, "sim"))?;
            let (header, rows) = event_rows(&data.patterns, 1);
            out.csv("events.csv", &header, &rows)?;
            let header: Vec<String> =
                ["replication_id".to_string()].into_iter().chain(indexed("u", gen.components())).collect();
            let rows: Vec<Vec<String>> = data
                .patterns
                .iter()
                .zip(&data.scores)
                .map(|(x, u)| [x.id.clone()].into_iter().chain(u.iter().map(|&v| num(v))).collect())
                .collect();
            out.csv("true_scores.csv", &header, &rows)
        }
        SimulateWhat::Table1 => {
            let cfg = study_config(opts, gen)?;
            let policy = opts.policy.unwrap_or(PolicyArg::Both);
            let out = OutDir::create(out_dir(opts)?, "simulate", seed, config_hash("simulate", opts)?)?;
            let report = run_study(&cfg, policy != PolicyArg::Optimal)?;
            let keep = |p: ZetaPolicy| match policy {
                PolicyArg::Both => true,
                PolicyArg::Optimal => p == ZetaPolicy::GridOptimal,
                PolicyArg::Cv => p == ZetaPolicy::CrossValidated,
            };
            let rows: Vec<Vec<String>> = report
                .table1
                .iter()
                .filter(|r| keep(r.policy))
                .map(|r| {
                    vec![
                        policy_name(r.policy).into(),
                        (r.component + 1).to_string(),
                        r.zeta.map(num).unwrap_or_default(),
                        num(r.error.bias),
                        num(r.error.std),
                        num(r.error.rmse),
                        num(r.rmse_se),
                        r.failures.to_string(),
                        r.valid.to_string(),
                    ]
                })
                .collect();
            out.csv("table1.csv", &["policy", "component", "zeta", "bias", "std", "rmse", "rmse_se", "failures", "valid"], &rows)?;
            write_reps(&out, &cfg, &report)
        }
        SimulateWhat::Table2 => {
            let cfg = study_config(opts, gen)?;
            let out = OutDir::create(out_dir(opts)?, "simulate", seed, config_hash("simulate", opts)?)?;
            let report = run_study(&cfg, true)?;
            let r = report.table2.as_ref().ok_or_else(|| CliError::Config("cross-validation did not run".into()))?;
            let rows = vec![vec![
                num(r.intensity_rmse),
                num(r.intensity_se),
                num(r.density_rmse),
                num(r.density_se),
                r.failures.to_string(),
                r.valid.to_string(),
            ]];
            out.csv("table2.csv", &["intensity_rmse", "intensity_se", "density_rmse", "density_se", "failures", "valid"], &rows)?;
            write_reps(&out, &cfg, &report)
        }
    }
}

/// Parameter names in the layout `c_k_j, alpha_k, beta` (1-based).
pub fn parameter_names(p: usize, q: usize) -> Vec<(String, Option<usize>, Option<usize>)> {
    let mut v = Vec::with_capacity(p * q + p + 1);
    for k in 1..=p {
        for j in 1..=q {
            v.push((format!("c_{k}_{j}"), Some(k), Some(j)));
        }
    }
    for k in 1..=p {
        v.push((format!("alpha_{k}"), Some(k), None));
    }
    v.push(("beta".into(), None, None));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDoc {
    pub parameter: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub insignificant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherDoc {
    pub patterns: usize,
    pub mc_draws: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub singular_warning: bool,
}

/// Limiting-law summary as written to variance.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDoc {
    pub format_version: u32,
    pub method: String,
    pub kappa: f64,
    pub zeta: f64,
    pub replications: usize,
    pub level: f64,
    /// Draws of the limiting law (0 for the closed form).
    pub draws: usize,
    pub fisher: FisherDoc,
    pub ridged: bool,
    pub max_kkt_residual: f64,
    /// Names of coefficients held on the boundary.
    pub active: Vec<String>,
    pub variances: Vec<f64>,
    pub mean: Vec<f64>,
    pub intervals: Vec<IntervalDoc>,
}

fn method_name(m: AsymptoticMethod) -> &'static str {
    match m {
        AsymptoticMethod::InteriorClosedForm => "interior-closed-form",
        AsymptoticMethod::QpMonteCarlo => "qp-monte-carlo",
    }
}

fn cmd_variance(opts: &Opts) -> Result<()> {
    let model_path = opts.model.as_ref().ok_or_else(|| CliError::Config("--model is required".into()))?;
    let doc = ModelDoc::load(model_path)?;
    let region = doc.region.build()?;
    let basis = doc.basis.build(&region)?;
    let model = doc.params(&basis)?;
    let input = opts.input.as_ref().ok_or_else(|| CliError::Config("--input is required".into()))?;
    let events = read_events(input, &region)?;
    let defaults = AsymptoticConfig::default();
    let cfg = AsymptoticConfig {
        mc_draws: opts.mc_draws.unwrap_or(defaults.mc_draws),
        generative_patterns: opts.generative,
        activation_tol: opts.activation_tol,
        delta_draws: opts.delta_draws.unwrap_or(defaults.delta_draws),
        force_draws: opts.force_draws,
        level: opts.level.unwrap_or(defaults.level),
        seed: rng::stream(root_seed(opts), "asymptotics"),
    };
    let mut out = OutDir::create(out_dir(opts)?, "variance", root_seed(opts), config_hash("variance", opts)?)?;
    let report: AsymptoticReport = analyze(&basis, &model, &events.patterns, doc.zeta, &cfg)?;
    let names = parameter_names(model.components(), model.basis_size());
    if report.fisher.singular_warning {
        out.warnings.push(format!(
            "information estimated from {} patterns for {} parameters is singular",
            report.fisher.patterns,
            names.len()
        ));
    }
    if report.result.ridged {
        out.warnings.push("a ridge was added to a near-singular reduced information matrix".into());
    }
    let res = &report.result;
    let intervals: Vec<IntervalDoc> = names
        .iter()
        .zip(&report.intervals)
        .map(|((n, _, _), iv)| IntervalDoc {
            parameter: n.clone(),
            estimate: iv.estimate,
            lower: iv.lower,
            upper: iv.upper,
            insignificant: iv.covers_zero(),
        })
        .collect();
    let vdoc = VarianceDoc {
        format_version: FORMAT_VERSION,
        method: method_name(res.method).into(),
        kappa: res.kappa,
        zeta: doc.zeta,
        replications: events.patterns.len(),
        level: cfg.level,
        draws: res.draws.len(),
        fisher: FisherDoc {
            patterns: report.fisher.patterns,
            mc_draws: report.fisher.mc_draws,
            min_eigenvalue: report.fisher.min_eigenvalue,
            max_eigenvalue: report.fisher.max_eigenvalue,
            singular_warning: report.fisher.singular_warning,
        },
        ridged: res.ridged,
        max_kkt_residual: res.max_kkt_residual,
        active: res.active.iter().map(|&i| names[i].0.clone()).collect(),
        variances: res.variances.iter().copied().collect(),
        mean: res.mean.iter().copied().collect(),
        intervals: intervals.clone(),
    };
    out.json("variance.json", &vdoc)?;
    let rows: Vec<Vec<String>> = names
        .iter()
        .zip(&intervals)
        .enumerate()
        .map(|(i, ((n, k, j), iv))| {
            vec![
                n.clone(),
                k.map(|v| v.to_string()).unwrap_or_default(),
                j.map(|v| v.to_string()).unwrap_or_default(),
                num(iv.estimate),
                num(iv.lower),
                num(iv.upper),
                num(res.variances[i]),
                res.active.contains(&i).to_string(),
                iv.insignificant.to_string(),
            ]
        })
        .collect();
    out.csv(
        "intervals.csv",
        &["parameter", "component", "index", "estimate", "lower", "upper", "variance", "active", "insignificant"],
        &rows,
    )?;
    if opts.draws_csv {
        let header: Vec<String> = ["draw".to_string()].into_iter().chain(names.iter().map(|n| n.0.clone())).collect();
        let rows: Vec<Vec<String>> = res
            .draws
            .iter()
            .enumerate()
            .map(|(i, d)| [i.to_string()].into_iter().chain(d.iter().map(|&v| num(v))).collect())
            .collect();
        out.csv("draws.csv", &header, &rows)?;
    }
    Ok(())
}
