use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use strata::ansatz::{loglog_slope, min_levels, residual, write_residual_csv, AnsatzBundle, AnsatzEval, VerticalProfiles, N_FINE};
use strata::config::ExperimentConfig;
use strata::entropy_diag::{eps_scaling_study, q_from_modes, write_study_csv, EpsRun, QMode};
use strata::hydrostatic::{balance_residual, solve_profile, vertical_averages};
use strata::io::save_snapshot;
use strata::qg::{run, write_series_csv, QGParams, QGSolver, QGState};
use strata::spectral_ops::{ScalarField2D, ViscosityParams};
use strata::Error;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

pub fn profile(cfg: &ExperimentConfig) -> Result<bool> {
    let law = cfg.law()?;
    let p = solve_profile(&law, cfg.profile.rho0, cfg.profile.n3)?;
    p.to_csv(create(&cfg.output_dir, "profile.csv")?)?;
    let cf = p.closed_form_error();
    let bal = balance_residual(&p);
    let ok = cf.map_or(true, |e| e <= 1e-10) && bal <= 1e-8;
    write_json(
        &cfg.output_dir,
        "profile.json",
        &json!({
            "gamma": law.gamma,
            "rho0": cfg.profile.rho0,
            "n3": cfg.profile.n3,
            "rho_top": p.rho_bar_wall.1,
            "kappa": p.kappa,
            "closed_form_error": cf,
            "balance_residual": bal,
            "ode_residual": p.ode_residual(),
            "averages": vertical_averages(&p),
            "pass": ok,
        }),
    )?;
    println!("profile: closed-form error {cf:?}, balance residual {bal:.3e}");
    Ok(ok)
}

fn qg_params(cfg: &ExperimentConfig) -> Result<QGParams> {
    let p = solve_profile(&cfg.law()?, cfg.profile.rho0, cfg.profile.n3)?;
    Ok(QGParams::from_profile(&p, cfg.viscosity.mu, cfg.grid.l_h, cfg.qg.n_h, cfg.qg.dt)?)
}

/// `A cos(2π(kx x + ky y)/L)` amplitude by projection.
fn mode_amplitude(q: &ScalarField2D, kx: f64, ky: f64) -> f64 {
    let s = 2.0 * std::f64::consts::PI / q.l;
    let dx = q.dx();
    let n = q.n;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += q.data[i + n * j] * (s * (kx * i as f64 * dx + ky * j as f64 * dx)).cos();
        }
    }
    2.0 * acc / (n * n) as f64
}

pub fn qg(cfg: &ExperimentConfig, modes: Option<usize>) -> Result<bool> {
    let params = qg_params(cfg)?;
    let steps = (cfg.qg.t_end / cfg.qg.dt).round() as usize;
    if modes == Some(1) {
        let (kx, ky) = (1.0, 2.0);
        let s = 2.0 * std::f64::consts::PI / params.l_h;
        let q0 = QGState::new(ScalarField2D::from_fn(params.n_h, params.l_h, |x, y| (s * (kx * x + ky * y)).cos())?);
        let rate = params.mode_rate(s * s * (kx * kx + ky * ky));
        let solver = QGSolver::new(params);
        let mut wr = csv::Writer::from_writer(create(&cfg.output_dir, "qg_mode.csv")?);
        wr.write_record(["t", "amplitude", "exact", "rel_error"])?;
        let mut q = q0;
        let mut worst = 0.0f64;
        for i in 0..=steps {
            if i > 0 {
                q = solver.step(&q)?;
            }
            if i % cfg.qg.sample_every == 0 || i == steps {
                let a = mode_amplitude(&q.q, kx, ky);
                let e = (-rate * q.t).exp();
                let rel = ((a - e) / e).abs();
                worst = worst.max(rel);
                wr.write_record(&[q.t, a, e, rel].map(|x| format!("{x:.17e}")))?;
            }
        }
        wr.flush()?;
        let ok = worst <= 1e-6;
        write_json(
            &cfg.output_dir,
            "qg_mode.json",
            &json!({ "k": [kx, ky], "rate": rate, "t_end": q.t, "max_rel_error": worst, "pass": ok }),
        )?;
        println!("qg single mode: max relative error {worst:.3e}");
        return Ok(ok);
    }
    let n_modes = modes.unwrap_or(6).max(1);
    let mut summary = Vec::new();
    let mut ok = true;
    for traj in 0..cfg.qg.trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(traj as u64));
        let m: Vec<QMode> = (0..n_modes)
            .map(|_| {
                let (kx, ky) = loop {
                    let k = (rng.gen_range(-4..=4), rng.gen_range(-4..=4));
                    if k != (0, 0) {
                        break k;
                    }
                };
                QMode { kx, ky, amp: rng.gen_range(-0.3..0.3) / n_modes as f64, phase: rng.gen_range(0.0..std::f64::consts::TAU) }
            })
            .collect();
        let q0 = q_from_modes(&m, params.n_h, params.l_h)?;
        let (_, rec) = run(&q0, &params, steps, cfg.qg.sample_every, 1)?;
        write_series_csv(&rec, create(&cfg.output_dir, &format!("qg_traj{traj}.csv"))?)?;
        let worst = rec
            .windows(2)
            .map(|w| (w[1].hierarchy.weighted_total() - w[0].hierarchy.weighted_total()) / (w[1].t - w[0].t))
            .fold(f64::NEG_INFINITY, f64::max);
        let pass = worst <= 1e-10;
        ok &= pass;
        summary.push(json!({ "trajectory": traj, "modes": m, "max_increase_rate": worst, "pass": pass }));
    }
    write_json(&cfg.output_dir, "qg_hierarchy.json", &json!({ "trajectories": summary, "pass": ok }))?;
    println!("qg hierarchy: {} trajectories, all monotone: {ok}", cfg.qg.trajectories);
    Ok(ok)
}

pub fn ansatz_residual(cfg: &ExperimentConfig) -> Result<bool> {
    let law = cfg.law()?;
    let vert = VerticalProfiles::new(&law, cfg.profile.rho0, N_FINE)?;
    let qg0 = q_from_modes(&cfg.modes, cfg.grid.n_h, cfg.grid.l_h)?;
    let params = vert.qg_params(cfg.viscosity.mu, cfg.grid.l_h, cfg.grid.n_h, cfg.qg.dt)?;
    let mut rows = Vec::new();
    let mut per_eps = Vec::new();
    for &eps in &cfg.residual_eps {
        let visc = ViscosityParams::new(cfg.viscosity.mu, cfg.viscosity.eps_visc.unwrap_or(eps), cfg.viscosity.lambda)?;
        let eval = AnsatzEval::new(vert.clone(), &qg0, params, visc, eps)?;
        let k_min = eval.layers.0.k.min(eval.layers.1.k);
        let n3 = cfg.residual_levels(eps, k_min)?.max(min_levels(&eval.layers, eps));
        let b = AnsatzBundle::new(eval, &qg0, n3, cfg.sigma)?;
        save_snapshot(&cfg.output_dir.join(format!("ansatz_rho_eps{eps}.snap")), "rho_app", &b.rho_app, 0.0)?;
        let r = residual(&b)?;
        println!("ansatz residual eps {eps}: N3 {n3}, S_bl L2 {:.4e}, mass leftover Linf {:.4e}", r.norms.s_bl.l2, r.norms.mass_leftover.linf);
        per_eps.push(json!({ "eps": eps, "n3": n3, "eps0": b.eps0, "norms": r.norms }));
        rows.push((eps, r.norms));
    }
    write_residual_csv(&rows, create(&cfg.output_dir, "ansatz_residual.csv")?)?;
    let eps: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let consts: Vec<f64> = rows.iter().map(|(e, n)| n.s_bl.l2 / e.sqrt()).collect();
    let (lo, hi) = consts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
    let spread = hi / lo - 1.0;
    let slope = loglog_slope(&eps, &rows.iter().map(|r| r.1.mass_leftover.linf).collect::<Vec<_>>());
    let ok = eps.len() < 2 || (spread <= 0.2 && slope >= 1.7);
    write_json(
        &cfg.output_dir,
        "ansatz_residual.json",
        &json!({
            "runs": per_eps,
            "s_bl_over_sqrt_eps": consts,
            "s_bl_constant_spread": spread,
            "mass_leftover_slope": slope,
            "pass": ok,
        }),
    )?;
    Ok(ok)
}

pub fn converge(cfg: &ExperimentConfig) -> Result<bool> {
    let study = cfg.study()?;
    let mut done: Vec<EpsRun> = Vec::new();
    let res = eps_scaling_study(&study, |r| {
        println!(
            "converge eps {}: {} steps, functional {:.4e} -> {:.4e}",
            r.eps,
            r.steps,
            r.initial.theorem_functional,
            r.last().theorem_functional
        );
        done.push(r.clone());
    });
    match res {
        Ok(rep) => {
            write_json(&cfg.output_dir, "converge.json", &serde_json::to_value(&rep)?)?;
            write_study_csv(&rep, create(&cfg.output_dir, "converge.csv")?)?;
            let ok = rep.monotone && (0.7..=1.3).contains(&rep.slope);
            println!("converge: slope {:.3}, monotone {}", rep.slope, rep.monotone);
            Ok(ok)
        }
        Err(e @ Error::Study { .. }) => {
            write_json(
                &cfg.output_dir,
                "converge_partial.json",
                &json!({ "partial": true, "error": e.to_string(), "config": study, "runs": done }),
            )?;
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}
