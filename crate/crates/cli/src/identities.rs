use std::f64::consts::{PI, SQRT_2, TAU};

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use strata::config::ExperimentConfig;
use strata::ekman::{divergence_relation, pumping_coefficient, pumping_flux, spiral_ode_residual, EkmanLayer};
use strata::spectral_ops::{
    aniso_norms, commutator_c, divergence, leray_p, leray_q, optimal_kappa, ratio_from_norms, sobolev_ceiling, ScalarField3D,
    VectorField3D, ViscosityParams,
};

fn random_field(rng: &mut ChaCha8Rng, dims: [usize; 3], lens: [f64; 3]) -> Result<ScalarField3D> {
    let m: Vec<([f64; 3], f64, f64)> = (0..8)
        .map(|_| ([0, 1, 2].map(|_| rng.gen_range(-2..=2) as f64), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)))
        .collect();
    Ok(ScalarField3D::periodic_from_fn(dims, lens, |x, y, z| {
        let p = [x, y, z];
        m.iter().map(|(k, a, ph)| a * ((0..3).map(|d| TAU * k[d] * p[d] / lens[d]).sum::<f64>() + ph).cos()).sum()
    })?)
}

fn random_vector(rng: &mut ChaCha8Rng, dims: [usize; 3], lens: [f64; 3]) -> Result<VectorField3D> {
    let a = random_field(rng, dims, lens)?;
    let b = random_field(rng, dims, lens)?;
    let c = random_field(rng, dims, lens)?;
    Ok(VectorField3D::from_components(a, b, c)?)
}

fn check(name: &str, value: f64, tol: f64, out: &mut Vec<Value>) -> bool {
    let pass = value <= tol;
    println!("{} {name}: {value:.3e} (tol {tol:.0e})", if pass { "PASS" } else { "FAIL" });
    out.push(json!({ "check": name, "value": value, "tol": tol, "pass": pass }));
    pass
}

fn spectral_suite(seed: u64, out: &mut Vec<Value>) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lens = [TAU, TAU, 1.0];
    let mut comm = 0.0f64;
    let mut split = 0.0f64;
    for _ in 0..20 {
        let h = random_vector(&mut rng, [32, 32, 32], lens)?;
        let (a, b) = (rng.gen_range(-0.1..0.1), rng.gen_range(1.5..3.0));
        let rb: Vec<f64> = (0..32).map(|k| b + a * (TAU * k as f64 / 32.0).cos()).collect();
        let p = ViscosityParams::new(rng.gen_range(0.2..3.0), rng.gen_range(0.05..1.0), 1.0)?;
        let c = commutator_c(&h, &rb, &p)?;
        comm = comm.max(c.closed_form.sub(&c.defining).max_abs());
        let q = leray_q(&h)?;
        split = split.max(leray_p(&q)?.max_abs()).max(divergence(&leray_p(&h)?)?.max_abs());
    }
    let mut ok = check("commutator closed form vs defining form", comm, 1e-8, out);
    ok &= check("Leray projector split", split, 1e-10, out);

    let ceiling = sobolev_ceiling();
    let mut worst = 0.0f64;
    let mut at_opt = Vec::new();
    for s in [1.0, 2.0, 4.0] {
        let (n, nz, l) = (128, 64, 10.0);
        let sp = [l / n as f64, l / n as f64, 1.0 / nz as f64];
        let c = l / 2.0;
        let f = ScalarField3D::sample([n, n, nz + 1], sp, |x, y, z| {
            (-((x - c).powi(2) + (y - c).powi(2)) * s * s / 2.0).exp() * z * (1.0 - z)
        });
        let zero = ScalarField3D::zeros(f.dims, f.spacing);
        let norms = aniso_norms(&VectorField3D::from_components(f, zero.clone(), zero)?)?;
        for k in [0.1, 1.0, 10.0] {
            worst = worst.max(ratio_from_norms(&norms, k)? / ceiling);
        }
        at_opt.push(ratio_from_norms(&norms, optimal_kappa(&norms))?);
    }
    let (lo, hi) = at_opt.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    ok &= check("Sobolev ratio over ceiling", worst, 1.0, out);
    ok &= check("optimal-kappa ratio spread under rescaling", hi / lo - 1.0, 0.05, out);
    Ok(ok)
}

fn ekman_suite(out: &mut Vec<Value>) -> Result<bool> {
    let mut ok = check("pumping coefficient (1,1) vs sqrt 2", (pumping_coefficient(1.0, 1.0)? - SQRT_2).abs(), 1e-12, out);
    let (b, t) = (EkmanLayer::bottom(2.0)?, EkmanLayer::top(1.5)?);
    let flux = pumping_flux(&b, &t)?;
    ok &= check("pumping flux vs corrector traces (2,1.5)", (flux + pumping_coefficient(2.0, 1.5)?).abs(), 1e-12, out);
    let grid: Vec<f64> = (0..=2000).map(|i| 10.0 * i as f64 / 2000.0).collect();
    let mut ode = 0.0f64;
    let mut div = 0.0f64;
    for layer in [b, t] {
        for th in [0.0, 0.7, 2.1, PI] {
            ode = ode.max(spiral_ode_residual(&layer, [th.cos(), th.sin()], &grid));
            for &z in &grid {
                div = div.max(divergence_relation(&layer, 0.0, th.cos(), z).abs());
            }
        }
    }
    ok &= check("spiral layer ODE residual", ode, 1e-12, out);
    ok &= check("layer divergence relation", div, 1e-10, out);
    Ok(ok)
}

pub fn run(cfg: &ExperimentConfig) -> Result<bool> {
    let mut out = Vec::new();
    let a = spectral_suite(cfg.seed, &mut out)?;
    let b = ekman_suite(&mut out)?;
    let ok = a && b;
    let mut w = std::io::BufWriter::new(std::fs::File::create(cfg.output_dir.join("identities.json"))?);
    serde_json::to_writer_pretty(&mut w, &json!({ "checks": out, "pass": ok }))?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(ok)
}
