//! Relative-entropy diagnostics between a 3D solver state and the ansatz:
//! the error functional `∫ρ|δu|² + ε⁻²∫E(ρ, ρ_app)`, the essential/residual
//! split of the density and the ε-scaling study.
//!
//! All integrals use the midpoint rule of the MAC cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{default_sigma, loglog_slope, AnsatzEval, VerticalProfiles, N_FINE};
use crate::error::{config, Error, Result};
use crate::ns3d::{face_density, stable_dt, well_prepared_init, Flow3DState, MacGrid, Ns3dParams, Ns3dSolver};
use crate::pressure::PressureLaw;
use crate::qg::{QGSolver, QGState};
use crate::spectral_ops::{ScalarField2D, ScalarField3D, ViscosityParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssResSplit {
    /// `true` on the essential set `|ρ − ρ̄| < σ`.
    pub essential: Vec<bool>,
    pub ess_measure: f64,
    pub res_measure: f64,
    pub total_measure: f64,
}

fn check_sigma(sigma: f64, rho_bar: &[f64]) -> Result<()> {
    let inf = rho_bar.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma > 0.0 && sigma < inf && sigma < 2.0 / 3.0) {
        return config(format!("sigma must lie in (0, min(inf rho_bar, 2/3)), got {sigma} with inf rho_bar = {inf}"));
    }
    Ok(())
}

/// Cell-wise split of a cell-centred density; `rho_bar[k]` is the profile
/// on level `k`.
pub fn decompose_ess_res(rho: &ScalarField3D, rho_bar: &[f64], sigma: f64) -> Result<EssResSplit> {
    let [nx, ny, nz] = rho.dims;
    if rho_bar.len() != nz {
        return Err(Error::Grid(format!("{} profile values for {nz} levels", rho_bar.len())));
    }
    check_sigma(sigma, rho_bar)?;
    let per = nx * ny;
    let vol = rho.spacing.iter().product::<f64>();
    let essential: Vec<bool> = rho.data.iter().enumerate().map(|(c, r)| (r - rho_bar[c / per]).abs() < sigma).collect();
    let n_ess = essential.iter().filter(|e| **e).count();
    let n_res = essential.len() - n_ess;
    Ok(EssResSplit {
        ess_measure: n_ess as f64 * vol,
        res_measure: n_res as f64 * vol,
        total_measure: essential.len() as f64 * vol,
        essential,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub t: f64,
    pub eps: f64,
    /// `∫E(ρ, ρ_app)`.
    pub rel_entropy: f64,
    /// `∫ρ|δu|²`.
    pub kinetic_error: f64,
    /// Running `∫∫(μ|∇ₕδu|² + ε|∂₃δu|² + λ|∇·δu|²)`.
    pub dissipation_error: f64,
    pub theorem_functional: f64,
    pub residual_measure: f64,
    pub residual_mass_l1: f64,
    pub residual_mass_lgamma: f64,
}

/// Functional of `state` against the ansatz snapshot `app` (same grid and
/// time). The dissipation entry is left at zero; see [`EntropyMonitor`].
pub fn theorem_functional(state: &Flow3DState, app: &Flow3DState, solver: &Ns3dSolver, sigma: f64) -> Result<EntropyReport> {
    let g = &state.grid;
    if app.grid != *g || solver.grid != *g {
        return Err(Error::Grid("state, ansatz and solver grids differ".into()));
    }
    if (app.t - state.t).abs() > 1e-9 * (1.0 + state.t.abs()) {
        return Err(Error::Grid(format!("state at t={} but ansatz at t={}", state.t, app.t)));
    }
    let law = &solver.params.law;
    let eps = solver.params.eps;
    let vol = g.vol();
    let n2 = g.n * g.n;
    let rd = face_density(g, &state.rho);
    let mut kin = 0.0;
    for d in 0..3 {
        let start = if d == 2 { n2 } else { 0 };
        for c in start..g.cells() {
            let du = state.u[d][c] - app.u[d][c];
            kin += rd[d][c] * du * du;
        }
    }
    let kinetic_error = kin * vol;
    let rel_entropy = state.rho.iter().zip(&app.rho).map(|(r, a)| law.rel_energy(*r, *a)).sum::<f64>() * vol;
    let split = decompose_ess_res(&state.rho_field(), &solver.rho_bar, sigma)?;
    let (mut l1, mut lg) = (0.0, 0.0);
    for (c, ess) in split.essential.iter().enumerate() {
        if !ess {
            let d = (state.rho[c] - app.rho[c]).abs();
            l1 += d;
            lg += d.powf(law.gamma);
        }
    }
    Ok(EntropyReport {
        t: state.t,
        eps,
        rel_entropy,
        kinetic_error,
        dissipation_error: 0.0,
        theorem_functional: kinetic_error + rel_entropy / (eps * eps),
        residual_measure: split.res_measure,
        residual_mass_l1: l1 * vol,
        residual_mass_lgamma: (lg * vol).powf(1.0 / law.gamma),
    })
}

/// Trapezoid-in-time accumulation of the `δu` dissipation rate.
#[derive(Clone, Copy, Debug, Default)]
pub struct EntropyMonitor {
    last: Option<(f64, f64)>,
    pub accumulated: f64,
}

impl EntropyMonitor {
    pub fn observe(&mut self, state: &Flow3DState, app: &Flow3DState, solver: &Ns3dSolver) -> f64 {
        let du: [Vec<f64>; 3] = [0, 1, 2].map(|d| state.u[d].iter().zip(&app.u[d]).map(|(a, b)| a - b).collect());
        let rate = solver.dissipation_rate(&du);
        if let Some((t0, r0)) = self.last {
            self.accumulated += 0.5 * (state.t - t0) * (r0 + rate);
        }
        self.last = Some((state.t, rate));
        self.accumulated
    }
}

/// Lower bound `E(ρ, ρ_app) ≥ c([δρ]²_ess + 1_res)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub law: PressureLaw,
    pub sigma: f64,
    pub c: f64,
}

impl LowerBound {
    fn ratio(&self, rho: f64, app: f64, rho_bar: f64) -> Option<f64> {
        let d = rho - app;
        let rhs = if (rho - rho_bar).abs() < self.sigma { d * d } else { 1.0 };
        (rhs > 0.0).then(|| self.law.rel_energy(rho, app) / rhs)
    }

    /// Fitted on random `ρ̄ ∈ [r_min, r_max]`, `ρ_app ∈ ρ̄ ± σ/2`,
    /// `ρ ∈ (0, ρ_max]`; `c` is 95% of the smallest observed ratio.
    pub fn fit(law: PressureLaw, sigma: f64, r_min: f64, r_max: f64, rho_max: f64, n: usize, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < r_min && sigma < 2.0 / 3.0 && r_min <= r_max && rho_max > r_max) {
            return config(format!("bad lower-bound fit ranges: sigma={sigma} r=[{r_min},{r_max}] rho_max={rho_max}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lb = Self { law, sigma, c: f64::INFINITY };
        for _ in 0..n {
            let rb = rng.gen_range(r_min..=r_max);
            let app = rb + rng.gen_range(-0.5 * sigma..=0.5 * sigma);
            // Half the samples near the profile to probe the essential set.
            let rho = if rng.gen_bool(0.5) {
                rb + rng.gen_range(-sigma..sigma)
            } else {
                rng.gen_range(1e-6 * rho_max..=rho_max)
            };
            if let Some(r) = lb.ratio(rho, app, rb) {
                lb.c = lb.c.min(r);
            }
        }
        if !(lb.c.is_finite() && lb.c > 0.0) {
            return Err(Error::Fit(format!("no positive lower-bound constant, got {}", lb.c)));
        }
        lb.c *= 0.95;
        Ok(lb)
    }

    /// Cells where the bound fails.
    pub fn violations(&self, rho: &[f64], app: &[f64], rho_bar: &[f64], per_level: usize) -> usize {
        rho.iter()
            .zip(app)
            .enumerate()
            .filter(|(c, (r, a))| {
                let rb = rho_bar[c / per_level];
                let d = *r - *a;
                let rhs = if (*r - rb).abs() < self.sigma { d * d } else { 1.0 };
                self.law.rel_energy(**r, **a) < self.c * rhs
            })
            .count()
    }
}

pub fn lower_bound_check(rho: &ScalarField3D, rho_app: &ScalarField3D, rho_bar: &[f64], bound: &LowerBound) -> Result<usize> {
    if !rho.same_grid(rho_app) || rho_bar.len() != rho.dims[2] {
        return Err(Error::Grid("density fields or profile disagree".into()));
    }
    check_sigma(bound.sigma, rho_bar)?;
    Ok(bound.violations(&rho.data, &rho_app.data, rho_bar, rho.dims[0] * rho.dims[1]))
}

/// Initial stream function: a finite sum of `amp · cos(kx x + ky y + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QMode {
    pub kx: i32,
    pub ky: i32,
    pub amp: f64,
    pub phase: f64,
}

pub fn default_modes() -> Vec<QMode> {
    use std::f64::consts::FRAC_PI_2;
    // 0.5 cos x sin y = 0.25 (sin(x+y) − sin(x−y)).
    vec![
        QMode { kx: 1, ky: 1, amp: 0.25, phase: -FRAC_PI_2 },
        QMode { kx: 1, ky: -1, amp: -0.25, phase: -FRAC_PI_2 },
        QMode { kx: 0, ky: 2, amp: 0.2, phase: 0.0 },
    ]
}

pub fn q_from_modes(modes: &[QMode], n: usize, l: f64) -> Result<QGState> {
    let s = 2.0 * std::f64::consts::PI / l;
    let q = ScalarField2D::from_fn(n, l, |x, y| {
        modes.iter().map(|m| m.amp * (s * (m.kx as f64 * x + m.ky as f64 * y) + m.phase).cos()).sum()
    })?;
    Ok(QGState::new(q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub gamma: f64,
    pub a: f64,
    pub rho0: f64,
    pub n_h: usize,
    pub n3: usize,
    pub l_h: f64,
    pub mu: f64,
    pub lambda: f64,
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    pub cfl: f64,
    /// Monitor points per run, `t = 0` excluded.
    pub monitors: usize,
    pub sigma: Option<f64>,
    pub modes: Vec<QMode>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            a: 1.0,
            rho0: 2.0,
            n_h: 32,
            n3: 32,
            l_h: 2.0 * std::f64::consts::PI,
            mu: 0.2,
            lambda: 0.5,
            eps_list: vec![0.2, 0.1, 0.05],
            t_end: 0.5,
            cfl: 0.25,
            monitors: 10,
            sigma: None,
            modes: default_modes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub eps: f64,
    pub eps0: f64,
    pub sigma: f64,
    pub dt: f64,
    pub steps: usize,
    pub initial: EntropyReport,
    pub monitors: Vec<EntropyReport>,
    /// Largest one-sample increase of the energy ledger total, relative.
    pub ledger_max_increase: f64,
    pub mass_drift: f64,
}

impl EpsRun {
    pub fn last(&self) -> &EntropyReport {
        self.monitors.last().unwrap_or(&self.initial)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedBound {
    /// Per-ε `max_t value/ε^p`.
    pub per_eps: Vec<f64>,
    pub c: f64,
    /// `max/min` of the positive per-ε constants, 1 when all vanish.
    pub spread: f64,
}

fn fit_bound(runs: &[EpsRun], power: impl Fn(f64) -> f64, value: impl Fn(&EntropyReport) -> f64) -> FittedBound {
    let per_eps: Vec<f64> =
        runs.iter().map(|r| r.monitors.iter().fold(0.0f64, |m, rep| m.max(value(rep) / power(r.eps)))).collect();
    let c = per_eps.iter().copied().fold(0.0, f64::max);
    let pos: Vec<f64> = per_eps.iter().copied().filter(|v| *v > 0.0).collect();
    let spread = if pos.is_empty() {
        1.0
    } else if pos.len() < per_eps.len() {
        f64::INFINITY
    } else {
        pos.iter().copied().fold(0.0, f64::max) / pos.iter().copied().fold(f64::INFINITY, f64::min)
    };
    FittedBound { per_eps, c, spread }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub runs: Vec<EpsRun>,
    pub slope: f64,
    pub monotone: bool,
    pub residual_measure: FittedBound,
    pub residual_l1: FittedBound,
    pub residual_lgamma: FittedBound,
}

/// One ε run of the study.
pub fn run_eps(cfg: &StudyConfig, eps: f64) -> Result<EpsRun> {
    let law = PressureLaw::new(cfg.gamma, cfg.a)?;
    let vert = VerticalProfiles::new(&law, cfg.rho0, N_FINE)?;
    let grid = MacGrid::new(cfg.n_h, cfg.n3, cfg.l_h)?;
    let visc = ViscosityParams::new(cfg.mu, eps, cfg.lambda)?;
    let q0 = q_from_modes(&cfg.modes, cfg.n_h, cfg.l_h)?;
    // Placeholder dt; replaced below once the stable step is known.
    let params0 = vert.qg_params(cfg.mu, cfg.l_h, cfg.n_h, 1e-3)?;
    let eval0 = AnsatzEval::new(vert.clone(), &q0, params0, visc, eps)?;
    let kappa = vert.rho_top().min(vert.rho0);
    let sigma = cfg.sigma.unwrap_or_else(|| default_sigma(kappa));
    let eps0 = eval0.eps0(sigma);
    if eps > eps0 {
        return Err(Error::Domain(format!("eps = {eps} exceeds the validity bound eps0 = {eps0}")));
    }
    let s0 = well_prepared_init(&eval0, &grid)?;
    let dt0 = stable_dt(&s0, &law, cfg.cfl);
    let steps = (cfg.t_end / dt0).ceil().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let solver = Ns3dSolver::from_profiles(grid, Ns3dParams::new(law, visc, eps, dt)?, &vert)?;
    let params = vert.qg_params(cfg.mu, cfg.l_h, cfg.n_h, dt)?;
    let qsolver = QGSolver::new(params);

    let mut monitor = EntropyMonitor::default();
    let snapshot = |q: &QGState| -> Result<Flow3DState> { well_prepared_init(&AnsatzEval::new(vert.clone(), q, params, visc, eps)?, &grid) };
    let app0 = snapshot(&q0)?;
    let mut initial = theorem_functional(&s0, &app0, &solver, sigma)?;
    initial.dissipation_error = monitor.observe(&s0, &app0, &solver);

    let every = (steps / cfg.monitors.max(1)).max(1);
    let mass0 = s0.total_mass();
    let mut state = s0;
    let mut q = q0;
    let mut total = solver.ledger(&state).total;
    let mut ledger_max_increase = 0.0f64;
    let mut monitors = Vec::new();
    for i in 1..=steps {
        state = solver.step(&state)?;
        q = qsolver.step(&q)?;
        if i % every == 0 || i == steps {
            let app = snapshot(&q)?;
            let mut rep = theorem_functional(&state, &app, &solver, sigma)?;
            rep.dissipation_error = monitor.observe(&state, &app, &solver);
            monitors.push(rep);
            let t = solver.ledger(&state).total;
            ledger_max_increase = ledger_max_increase.max((t - total) / total.abs());
            total = t;
        }
    }
    Ok(EpsRun {
        eps,
        eps0,
        sigma,
        dt,
        steps,
        initial,
        monitors,
        ledger_max_increase,
        mass_drift: ((state.total_mass() - mass0) / mass0).abs(),
    })
}

/// Runs every ε in turn. `on_run` sees each finished run, so partial results
/// survive an abort.
pub fn eps_scaling_study(cfg: &StudyConfig, mut on_run: impl FnMut(&EpsRun)) -> Result<StudyReport> {
    if cfg.eps_list.len() < 2 {
        return config("the study needs at least two eps values");
    }
    if !(cfg.t_end > 0.0 && cfg.cfl > 0.0) {
        return config(format!("t_end and cfl must be positive, got {} and {}", cfg.t_end, cfg.cfl));
    }
    let mut runs = Vec::with_capacity(cfg.eps_list.len());
    for &eps in &cfg.eps_list {
        match run_eps(cfg, eps) {
            Ok(r) => {
                on_run(&r);
                runs.push(r);
            }
            Err(e) => return Err(Error::Study { completed: runs.len(), message: format!("eps = {eps}: {e}") }),
        }
    }
    let eps: Vec<f64> = runs.iter().map(|r| r.eps).collect();
    let f: Vec<f64> = runs.iter().map(|r| r.last().theorem_functional).collect();
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|a, b| eps[*b].total_cmp(&eps[*a]));
    let monotone = order.windows(2).all(|w| f[w[1]] < f[w[0]]);
    let gamma = cfg.gamma;
    Ok(StudyReport {
        slope: loglog_slope(&eps, &f),
        monotone,
        residual_measure: fit_bound(&runs, |e| e * e, |r| r.residual_measure),
        residual_l1: fit_bound(&runs, |e| e * e, |r| r.residual_mass_l1),
        residual_lgamma: fit_bound(&runs, |e| e.powf(2.0 / gamma), |r| r.residual_mass_lgamma),
        config: cfg.clone(),
        runs,
    })
}

pub fn write_study_csv<W: std::io::Write>(report: &StudyReport, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "eps",
        "t",
        "theorem_functional",
        "kinetic_error",
        "rel_entropy",
        "dissipation_error",
        "residual_measure",
        "residual_mass_l1",
        "residual_mass_lgamma",
    ])?;
    for run in &report.runs {
        for r in std::iter::once(&run.initial).chain(&run.monitors) {
            wr.write_record(
                &[
                    r.eps,
                    r.t,
                    r.theorem_functional,
                    r.kinetic_error,
                    r.rel_entropy,
                    r.dissipation_error,
                    r.residual_measure,
                    r.residual_mass_l1,
                    r.residual_mass_lgamma,
                ]
                .map(|x| format!("{x:.17e}")),
            )?;
        }
    }
    wr.flush()?;
    Ok(())
}
