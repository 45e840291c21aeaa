//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test fails if any does.
//!
//! `ACCEPTANCE_ONLY=1,4,9 cargo test --release --test acceptance` runs a subset.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repic_core::asymptotics::{
    cone_maximizer, estimate_fisher, pattern_scores, simulate_delta, tangent_cone, variance_interior, FisherInfo,
    FisherSource, TangentCone,
};
use repic_core::model::{marginal_loglik_exact, marginal_loglik_mc, random_feasible_coeffs, ScoreParams};
use repic_core::simulation::{
    match_components, run_study, simulate_data, unit_grid, GenModel, StudyConfig, StudyReport, ZetaPolicy,
};
use repic_core::{
    build_basis, build_quadrature, e_step_exact, e_step_gibbs, fit, BasisFamily, BasisLayout, BasisSystem, EStepMode,
    FitConfig, FitResult, ModelParams, Point, PointPattern, Region,
};

const DESK_ZETAS: [f64; 4] = [1e-7, 1e-6, 1e-5, 1e-4];

struct Outcome {
    pass: bool,
    detail: String,
}

/// Structural checks gathered from every fit made by criteria 3 to 7.
#[derive(Default)]
struct Invariants {
    fits: usize,
    max_mass_error: f64,
    min_coeff: f64,
    max_gamma_error: f64,
    max_decomposition_error: f64,
    rows: usize,
}

impl Invariants {
    fn new() -> Self {
        Self { min_coeff: f64::INFINITY, ..Default::default() }
    }

    fn record_fit(&mut self, basis: &BasisSystem, res: &FitResult) {
        self.fits += 1;
        for m in res.params.masses(basis) {
            self.max_mass_error = self.max_mass_error.max((m - 1.0).abs());
        }
        for c in res.params.coeffs().iter().flatten() {
            self.min_coeff = self.min_coeff.min(*c);
        }
        for rep in &res.stats.replications {
            for j in 0..rep.points() {
                let s: f64 = rep.gamma_row(j).iter().sum();
                self.max_gamma_error = self.max_gamma_error.max((s - 1.0).abs());
            }
        }
    }

    fn record_study(&mut self, report: &StudyReport) {
        for r in &report.reps {
            self.fits += r.estimates.iter().flatten().count();
            self.max_mass_error = self.max_mass_error.max(r.max_mass_error);
            self.min_coeff = self.min_coeff.min(r.min_coeff);
        }
        for row in &report.table1 {
            let e = row.error;
            if e.rmse.is_finite() {
                let gap = (e.rmse * e.rmse - e.bias * e.bias - e.std * e.std).abs() / e.rmse.powi(2).max(1e-300);
                self.max_decomposition_error = self.max_decomposition_error.max(gap);
                self.rows += 1;
            }
        }
    }
}

fn report(n: usize, title: &str, out: &Outcome, secs: f64) {
    let line = format!(
        "criterion {n:>2} {:<44} {} ({secs:.1}s) {}\n",
        title,
        if out.pass { "PASS" } else { "FAIL" },
        out.detail
    );
    // written to the raw handle so the line shows even when the harness captures output
    let mut err = std::io::stderr();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

fn unit_spline(spans: usize) -> BasisSystem {
    let region = Region::interval(0.0, 1.0).unwrap();
    let quad = build_quadrature(&region, 64).unwrap();
    build_basis(BasisFamily::CubicBSpline, &region, &BasisLayout::EquispacedKnots { spans }, &quad).unwrap()
}

fn random_model(basis: &BasisSystem, p: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let coeffs = (0..p).map(|_| random_feasible_coeffs(basis.integrals(), rng)).collect();
    let alphas = (0..p).map(|_| rng.random_range(0.5..5.0)).collect();
    let scores = ScoreParams::new(alphas, rng.random_range(0.2..3.0)).unwrap();
    ModelParams::new(coeffs, scores, basis).unwrap()
}

fn uniform_pattern(id: &str, m: usize, rng: &mut ChaCha8Rng) -> PointPattern {
    PointPattern::new(id, (0..m).map(|_| Point::line(rng.random::<f64>())).collect())
}

fn study_fit_config(zeta: f64, seed: u64) -> FitConfig {
    FitConfig { zeta, gibbs_sweeps: 10, objective_draws: 100, outer_tol: 3e-3, max_outer_iters: 50, seed, ..FitConfig::default() }
}

fn criterion_1() -> Outcome {
    let basis = unit_spline(5);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut inside = 0;
    for i in 0..50 {
        let p = 2 + i % 2;
        let model = random_model(&basis, p, &mut rng);
        let m = rng.random_range(0..=5);
        let pat = uniform_pattern("x", m, &mut rng);
        let exact = marginal_loglik_exact(&basis, &model, &pat).unwrap().value;
        let mc = marginal_loglik_mc(&basis, &model, &pat, 4000, 1000 + i as u64).unwrap();
        if (mc.value - exact).abs() <= 3.0 * mc.mc_std_err + 1e-12 {
            inside += 1;
        }
    }
    Outcome { pass: inside * 100 >= 95 * 50, detail: format!("{inside}/50 within 3 standard errors") }
}

fn criterion_2() -> Outcome {
    let basis = unit_spline(5);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut dg, mut du) = (0.0f64, 0.0f64);
    for i in 0..20 {
        let model = random_model(&basis, 2, &mut rng);
        let m = 1 + i % 3;
        let pats = vec![uniform_pattern("x", m, &mut rng)];
        let exact = e_step_exact(&basis, &model, &pats).unwrap();
        let gibbs = e_step_gibbs(&basis, &model, &pats, 5000, 7 + i as u64).unwrap();
        let (e, g) = (&exact.replications[0], &gibbs.replications[0]);
        for (a, b) in e.gamma.iter().zip(&g.gamma) {
            dg = dg.max((a - b).abs());
        }
        for (a, b) in e.euk.iter().zip(&g.euk) {
            du = du.max((a - b).abs() / a);
        }
    }
    Outcome { pass: dg <= 0.02 && du <= 0.02, detail: format!("max |dgamma| {dg:.4}, max rel dE[U] {du:.4}") }
}

/// Patterns with at most three points, redrawn until the cap holds.
fn low_intensity_data(basis: &BasisSystem, model: &ModelParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<PointPattern> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let seed = rng.random::<u64>();
        let pat = repic_core::asymptotics::simulate_from(basis, model, 1, seed).unwrap().remove(0);
        if pat.len() <= 3 {
            out.push(PointPattern::new(format!("{:03}", out.len()), pat.points));
        }
    }
    out
}

fn criterion_3(inv: &mut Invariants) -> Outcome {
    let basis = unit_spline(4);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::INFINITY;
    let mut iterations = 0;
    for d in 0..20 {
        let coeffs = vec![random_feasible_coeffs(basis.integrals(), &mut rng), random_feasible_coeffs(basis.integrals(), &mut rng)];
        let scores = ScoreParams::new(vec![rng.random_range(1.0..3.0), rng.random_range(1.0..3.0)], 0.4).unwrap();
        let truth = ModelParams::new(coeffs, scores, &basis).unwrap();
        let data = low_intensity_data(&basis, &truth, 30, &mut rng);
        if data.iter().all(|p| p.is_empty()) {
            continue;
        }
        let cfg = FitConfig { zeta: 1e-4, e_step: EStepMode::Exact, max_outer_iters: 40, seed: d, ..FitConfig::default() };
        let res = fit(&data, &basis, 2, &cfg).unwrap();
        inv.record_fit(&basis, &res);
        iterations += res.objective_trace.len() - 1;
        for w in res.objective_trace.windows(2) {
            worst = worst.min(w[1] - w[0]);
        }
    }
    Outcome {
        pass: worst >= -1e-8,
        detail: format!("smallest objective change {worst:.3e} over {iterations} iterations"),
    }
}

fn criterion_4() -> Outcome {
    let basis = unit_spline(6);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut closed_err = 0.0f64;
    for _ in 0..20 {
        let model = random_model(&basis, 1, &mut rng);
        let (alpha, beta) = (model.scores().alphas()[0], model.scores().beta());
        let m = rng.random_range(0..8);
        let pat = uniform_pattern("x", m, &mut rng);
        let got = marginal_loglik_exact(&basis, &model, &pat).unwrap().value;
        let c = model.coeff(0);
        let log_phi: f64 = pat
            .points
            .iter()
            .map(|&t| basis.evaluate_at(t).unwrap().iter().zip(c).map(|(b, c)| b * c).sum::<f64>().ln())
            .sum();
        let closed = statrs_free::ln_gamma(alpha + m as f64) - statrs_free::ln_gamma(alpha) - alpha * (1.0 + beta).ln()
            + m as f64 * (beta / (1.0 + beta)).ln()
            + log_phi;
        closed_err = closed_err.max((got - closed).abs());
    }
    let mut empty_err = 0.0f64;
    for p in 1..=3 {
        let model = random_model(&basis, p, &mut rng);
        let got = marginal_loglik_exact(&basis, &model, &PointPattern::new("e", Vec::new())).unwrap().value;
        let beta = model.scores().beta();
        let want: f64 = -model.scores().alphas().iter().map(|a| a * (1.0 + beta).ln()).sum::<f64>();
        empty_err = empty_err.max((got - want).abs());
    }
    Outcome {
        pass: closed_err <= 1e-10 && empty_err <= 1e-12,
        detail: format!("single component {closed_err:.2e}, empty pattern {empty_err:.2e}"),
    }
}

/// Log-gamma by the Lanczos approximation (g = 7, nine terms), accurate to ~1e-15.
mod statrs_free {
    pub fn ln_gamma(x: f64) -> f64 {
        const G: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut a = G[0];
        let t = x + 7.5;
        for (i, g) in G.iter().enumerate().skip(1) {
            a += g / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }
}

fn desk_study(basis_size: usize, seed: u64) -> StudyConfig {
    let mut cfg = StudyConfig::new(GenModel::model2(), 150, basis_size, 50, seed);
    cfg.zeta_grid = DESK_ZETAS.to_vec();
    cfg
}

fn rmse(report: &StudyReport, policy: ZetaPolicy) -> Vec<f64> {
    report.table1.iter().filter(|r| r.policy == policy).map(|r| r.error.rmse).collect()
}

fn criteria_5_and_6(inv: &mut Invariants) -> (Outcome, Outcome) {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut first = None;
    for (run, seed) in [11u64, 22, 33].into_iter().enumerate() {
        let ten = run_study(&desk_study(10, seed), true).unwrap();
        let five = run_study(&desk_study(5, seed), false).unwrap();
        inv.record_study(&ten);
        inv.record_study(&five);
        let (opt, cv, opt5) = (rmse(&ten, ZetaPolicy::GridOptimal), rmse(&ten, ZetaPolicy::CrossValidated), rmse(&five, ZetaPolicy::GridOptimal));
        let valid = ten.table1.iter().chain(&five.table1).all(|r| r.valid);
        let ok = valid
            && opt.iter().all(|&r| r <= 0.20)
            && cv.iter().all(|&r| r <= 0.35)
            && opt.iter().zip(&opt5).all(|(a, b)| a < b)
            && opt.iter().zip(&cv).all(|(a, b)| a <= b);
        pass &= ok;
        detail.push(format!(
            "run {}: opt {:.3}/{:.3} cv {:.3}/{:.3} K=5 {:.3}/{:.3}",
            run + 1,
            opt[0],
            opt[1],
            cv[0],
            cv[1],
            opt5[0],
            opt5[1]
        ));
        if first.is_none() {
            first = Some(ten);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    detail.push(format!("runtime {:.1} min (target < 30)", secs / 60.0));
    let t2 = first.expect("three runs").table2.expect("cross-validation ran");
    let six = Outcome {
        pass: t2.valid && t2.intensity_rmse <= 9.0 && t2.density_rmse <= 0.14,
        detail: format!(
            "intensity {:.2} (se {:.2}), density {:.3} (se {:.3}), {} failures",
            t2.intensity_rmse, t2.intensity_se, t2.density_rmse, t2.density_se, t2.failures
        ),
    };
    (Outcome { pass, detail: detail.join("; ") }, six)
}

fn component_error(basis: &BasisSystem, res: &FitResult) -> f64 {
    let gen = GenModel::model2();
    let (grid, w) = unit_grid(512);
    let est = repic_core::model::component_grid(basis, &res.params, &grid).unwrap();
    let truth: Vec<Vec<f64>> = (0..2).map(|k| grid.iter().map(|t| gen.density(k, t.x)).collect()).collect();
    let perm = match_components(&est, &truth, &w);
    let sq: f64 = (0..2)
        .map(|k| est[perm[k]].iter().zip(&truth[k]).zip(&w).map(|((a, b), w)| w * (a - b).powi(2)).sum::<f64>())
        .sum();
    sq.sqrt()
}

fn criterion_7(inv: &mut Invariants) -> Outcome {
    let basis = desk_study(10, 0).basis().unwrap();
    let gen = GenModel::model2();
    let mut better = 0;
    let mut failed = 0;
    for pair in 0..20u64 {
        let mut errs = [0.0; 2];
        let mut ok = true;
        for (slot, n) in [50usize, 200].into_iter().enumerate() {
            let data = simulate_data(&gen, n, 7000 + pair).unwrap();
            match fit(&data.patterns, &basis, 2, &study_fit_config(1e-5, 9000 + pair)) {
                Ok(res) => {
                    inv.record_fit(&basis, &res);
                    errs[slot] = component_error(&basis, &res);
                }
                Err(e) => {
                    eprintln!("criterion 7 fit failed: {e}");
                    ok = false
                }
            }
        }
        if !ok {
            failed += 1;
        } else if errs[1] < errs[0] {
            better += 1;
        }
    }
    Outcome {
        pass: better * 100 >= 80 * 20,
        detail: format!("n=200 better in {better}/20 pairs ({failed} failed fits)"),
    }
}

fn interior_model(basis: &BasisSystem) -> ModelParams {
    let q = basis.size();
    let raw = [
        (0..q).map(|j| 1.0 + (j as f64 * 0.9).sin().abs()).collect::<Vec<_>>(),
        (0..q).map(|j| 0.5 + (j as f64) / q as f64).collect::<Vec<_>>(),
    ];
    let coeffs = raw
        .iter()
        .map(|c| {
            let mass: f64 = c.iter().zip(basis.integrals()).map(|(x, a)| x * a).sum();
            c.iter().map(|x| x / mass).collect()
        })
        .collect();
    ModelParams::new(coeffs, ScoreParams::new(vec![4.0, 6.0], 3.0).unwrap(), basis).unwrap()
}

fn criterion_8() -> Outcome {
    let basis = unit_spline(4);
    let model = interior_model(&basis);
    let (p, q) = (2, basis.size());
    let d = p * q + p + 1;
    let fisher = estimate_fisher(&basis, &model, FisherSource::Generative { patterns: 600 }, 200, 81).unwrap();
    let cone = tangent_cone(&basis, &model, 1e-9).unwrap();
    let zero = DVector::zeros(d);
    let closed = variance_interior(&fisher, &cone, 0.0, &zero).unwrap();
    let sim = simulate_delta(&fisher, &cone, 0.0, &zero, 2000, 82).unwrap();
    let m = sim.draws.len() as f64;
    let mean = sim.draws.iter().fold(DVector::zeros(d), |acc, x| acc + x) / m;
    let mut cov = DMatrix::zeros(d, d);
    for x in &sim.draws {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    cov /= m - 1.0;
    let gamma = &closed.covariance;
    let rel = (&cov - gamma).norm() / gamma.norm();

    // rows of (I_p ⊗ aᵀ) applied to the covariance
    let a = basis.integrals();
    let mut contract = 0.0f64;
    for k in 0..p {
        for col in 0..d {
            let v: f64 = (0..q).map(|j| a[j] * gamma[(k * q + j, col)]).sum();
            contract = contract.max(v.abs());
        }
    }
    let scale = gamma.amax();
    let eig = nalgebra::SymmetricEigen::new(gamma.clone()).eigenvalues;
    let top = eig.amax();
    let rank = eig.iter().filter(|&&e| e > 1e-9 * top).count();
    Outcome {
        pass: rel <= 0.15 && contract <= 1e-12 * scale.max(1.0) && rank == d - p,
        detail: format!(
            "Frobenius gap {:.1}%, constraint residual {contract:.1e} (max entry {scale:.1e}), rank {rank} of {d}",
            100.0 * rel
        ),
    }
}

fn criterion_9() -> Outcome {
    let f = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.5, 0.4, 0.0, 0.4, 1.0]);
    let cone = TangentCone::new(3, DMatrix::zeros(0, 3), vec![0]).unwrap();
    let fisher = FisherInfo::from_matrix(f, 1000).unwrap();
    let sim = simulate_delta(&fisher, &cone, 0.0, &DVector::zeros(3), 5000, 91).unwrap();
    let at_zero = sim.draws.iter().filter(|x| x[0] == 0.0).count() as f64 / 5000.0;

    let line = TangentCone::new(1, DMatrix::zeros(0, 1), vec![0]).unwrap();
    let one = DMatrix::from_element(1, 1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let mut mismatches = 0;
    for _ in 0..5000 {
        let z: f64 = rng.sample(rand_distr_free::StandardNormal);
        let sol = cone_maximizer(&one, &line, &DVector::from_element(1, z)).unwrap();
        if sol.delta[0] != z.max(0.0) {
            mismatches += 1;
        }
    }
    Outcome {
        pass: (at_zero - 0.5).abs() <= 0.02 && mismatches == 0,
        detail: format!("P(active = 0) = {at_zero:.4}; 1-D toy mismatches {mismatches}/5000"),
    }
}

mod rand_distr_free {
    use rand::distr::Distribution;
    use rand::Rng;

    /// Box–Muller.
    pub struct StandardNormal;

    impl Distribution<f64> for StandardNormal {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
}

fn criterion_10() -> Outcome {
    let basis = unit_spline(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let p = 1 + i % 2;
        let model = random_model(&basis, p, &mut rng);
        let m = rng.random_range(1..=5);
        let pat = uniform_pattern("x", m, &mut rng);
        let score = pattern_scores(&basis, &model, std::slice::from_ref(&pat), 100, 0).unwrap().remove(0);
        let q = basis.size();
        let ll = |coeffs: Vec<Vec<f64>>, alphas: Vec<f64>, beta: f64| {
            let mdl = ModelParams::new_unchecked(coeffs, ScoreParams::new(alphas, beta).unwrap()).unwrap();
            marginal_loglik_exact(&basis, &mdl, &pat).unwrap().value
        };
        let base_c: Vec<Vec<f64>> = model.coeffs().to_vec();
        let base_a = model.scores().alphas().to_vec();
        let base_b = model.scores().beta();
        let mut fd = Vec::with_capacity(score.len());
        for k in 0..p {
            for j in 0..q {
                // coefficients that are zero are differenced one-sidedly to stay non-negative
                let h = 1e-6 * base_c[k][j].max(1e-3);
                let (mut up, mut dn) = (base_c.clone(), base_c.clone());
                up[k][j] += h;
                if base_c[k][j] > h {
                    dn[k][j] -= h;
                    fd.push((ll(up, base_a.clone(), base_b) - ll(dn, base_a.clone(), base_b)) / (2.0 * h));
                } else {
                    fd.push((ll(up, base_a.clone(), base_b) - ll(base_c.clone(), base_a.clone(), base_b)) / h);
                }
            }
        }
        for k in 0..p {
            let h = 1e-6 * base_a[k];
            let (mut up, mut dn) = (base_a.clone(), base_a.clone());
            up[k] += h;
            dn[k] -= h;
            fd.push((ll(base_c.clone(), up, base_b) - ll(base_c.clone(), dn, base_b)) / (2.0 * h));
        }
        let h = 1e-6 * base_b;
        fd.push((ll(base_c.clone(), base_a.clone(), base_b + h) - ll(base_c.clone(), base_a.clone(), base_b - h)) / (2.0 * h));
        for (an, num) in score.iter().zip(&fd) {
            worst = worst.max((an - num).abs() / num.abs().max(1e-3));
        }
    }
    Outcome { pass: worst <= 1e-3, detail: format!("max relative error {worst:.2e}") }
}

fn criterion_11(inv: &Invariants) -> Outcome {
    let pass = inv.fits > 0
        && inv.max_mass_error <= 1e-6
        && inv.min_coeff >= 0.0
        && inv.max_gamma_error <= 1e-8
        && inv.max_decomposition_error <= 1e-10;
    Outcome {
        pass,
        detail: format!(
            "{} fits: mass error {:.1e}, min coefficient {:.1e}, responsibility error {:.1e}; {} rows: decomposition gap {:.1e}",
            inv.fits, inv.max_mass_error, inv.min_coeff, inv.max_gamma_error, inv.rows, inv.max_decomposition_error
        ),
    }
}

fn criterion_12() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_repic");
    let run = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    let sim = dir.path().join("sim");
    let sim_s = sim.to_str().unwrap();
    if run(&["simulate", "--what", "data", "--gen-model", "2", "--n", "40", "--seed", "5", "--out", sim_s]) != Some(0) {
        return Outcome { pass: false, detail: "simulate failed".into() };
    }
    let events = sim.join("events.csv");
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let code = run(&[
            "fit", "--input", events.to_str().unwrap(), "--region", "0,1", "--knots", "7", "--p", "2", "--zeta", "1e-5",
            "--seed", "3", "--threads", "1", "--out", out.to_str().unwrap(),
        ]);
        if !matches!(code, Some(0) | Some(2)) {
            return Outcome { pass: false, detail: format!("fit exited with {code:?}") };
        }
        dirs.push(out);
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].join(n)).ok() != std::fs::read(dirs[1].join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    Outcome {
        pass: !names.is_empty() && differing.is_empty(),
        detail: format!("{} files compared, {} differ {:?}", names.len(), differing.len(), differing),
    }
}

#[test]
fn acceptance_criteria() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut inv = Invariants::new();
    let mut failed = Vec::new();
    let mut check = |n: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let t = Instant::now();
        let out = f();
        report(n, title, &out, t.elapsed().as_secs_f64());
        if !out.pass {
            failed.push(n);
        }
    };

    check(1, "Monte-Carlo vs exact marginal log-likelihood", &mut criterion_1);
    check(2, "Gibbs vs exact E-step", &mut criterion_2);
    check(3, "EM ascent with the exact E-step", &mut || criterion_3(&mut inv));
    check(4, "closed-form likelihoods", &mut criterion_4);
    let mut table2 = None;
    check(5, "component recovery study", &mut || {
        let (five, six) = criteria_5_and_6(&mut inv);
        table2 = Some(six);
        five
    });
    check(6, "intensity and density recovery study", &mut || {
        table2.take().unwrap_or_else(|| {
            let (_, six) = criteria_5_and_6(&mut Invariants::new());
            six
        })
    });
    check(7, "consistency trend", &mut || criterion_7(&mut inv));
    check(8, "interior limiting law", &mut criterion_8);
    check(9, "boundary limiting law", &mut criterion_9);
    check(10, "score vs numerical gradient", &mut criterion_10);
    check(11, "structural invariants", &mut || criterion_11(&inv));
    check(12, "byte-identical reruns", &mut criterion_12);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
