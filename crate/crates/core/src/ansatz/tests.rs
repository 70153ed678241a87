use super::*;
use crate::hydrostatic::ClosedForm;
use crate::spectral_ops::ScalarField2D;
use std::f64::consts::PI;

const L: f64 = 2.0 * PI;

fn law(g: f64) -> PressureLaw {
    PressureLaw::new(g, 1.0).unwrap()
}

fn qg_state(n: usize, amp: f64) -> QGState {
    QGState::new(
        ScalarField2D::from_fn(n, L, |x, y| amp * (0.3 * x.cos() + 0.2 * (2.0 * y).sin() + 0.1 * (x + y).cos()))
            .unwrap(),
    )
}

fn eval(g: f64, eps: f64, qg: &QGState) -> AnsatzEval {
    let vert = VerticalProfiles::new(&law(g), 2.0, N_FINE).unwrap();
    let params = vert.qg_params(0.2, L, qg.q.n, 1e-3).unwrap();
    let visc = ViscosityParams::new(0.2, eps, 0.5).unwrap();
    AnsatzEval::new(vert, qg, params, visc, eps).unwrap()
}

fn bundle(g: f64, eps: f64, n: usize, n3: usize, amp: f64) -> AnsatzBundle {
    let qg = qg_state(n, amp);
    AnsatzBundle::new(eval(g, eps, &qg), &qg, n3, None).unwrap()
}

#[test]
fn hydrostatic_state_is_exact() {
    for g in [1.5, 2.0, 3.0] {
        let eps = 0.1;
        let b = bundle(g, eps, 8, min_levels(&bundle(g, eps, 8, 8, 0.0).layers, eps), 0.0);
        assert!(b.rho1.max_abs() == 0.0 && b.rho2.max_abs() == 0.0 && b.u_app.max_abs() == 0.0);
        let r = residual(&b).unwrap();
        assert!(r.norms.mass.linf <= 1e-10, "{:?}", r.norms);
        assert!(r.norms.momentum.linf <= 1e-10, "gamma {g}: {:?}", r.norms);
    }
}

#[test]
fn gamma2_correctors() {
    let b = bundle(2.0, 0.1, 16, 32, 1.0);
    let n2 = 256;
    for k in 0..=32 {
        for p in 0..n2 {
            assert!((b.rho1.data[p + n2 * k] - 0.5 * b.qg.q.data[p]).abs() < 1e-15);
        }
    }
    assert!(b.rho2.max_abs() < 1e-15);
}

#[test]
fn geostrophic_balance_gamma15() {
    let l = law(1.5);
    let profile = crate::hydrostatic::solve_profile(&l, 2.0, 128).unwrap();
    let qg = qg_state(16, 1.0);
    let rho1 = build_rho1(&qg, &profile, &l);
    assert!(geostrophic_residual(&qg, &rho1, &profile, &l) <= 1e-8);
    assert!(qindep_residual(&rho1, &profile, &l) <= 1e-10);
}

/// Independent `r₂` by RK4 on the closed-form profile, coefficients by
/// central differences.
fn r2_oracle(g: f64, z_end: f64, steps: usize) -> f64 {
    let l = law(g);
    let cf = ClosedForm { gamma: g, a: 1.0, rho0: 2.0 };
    let e = 1e-4;
    let x = |z: f64| {
        let r = cf.eval(z);
        l.d2p(r) * (r / l.dp(r)).powi(2)
    };
    let pp = |z: f64| l.dp(cf.eval(z));
    let f = |z: f64, y: f64| {
        let d = |h: &dyn Fn(f64) -> f64| (h(z + e) - h(z - e)) / (2.0 * e);
        let a = (d(&pp) + 1.0) / pp(z);
        let s = -d(&x) / (2.0 * pp(z));
        s - a * y
    };
    let h = z_end / steps as f64;
    let mut y = 0.0;
    for i in 0..steps {
        let z = i as f64 * h;
        let k1 = f(z, y);
        let k2 = f(z + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(z + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(z + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    y
}

#[test]
fn rho2_gamma3_against_refined_integration() {
    let l = law(3.0);
    let profile = crate::hydrostatic::solve_profile(&l, 2.0, 16).unwrap();
    let qg = qg_state(8, 1.0);
    let rho1 = build_rho1(&qg, &profile, &l);
    let rho2 = build_rho2(&rho1, &profile, &l).unwrap();
    let p = 5;
    let q = qg.q.data[p];
    for k in [4, 9, 16] {
        let z = k as f64 / 16.0;
        let (c, f) = (r2_oracle(3.0, z, 200), r2_oracle(3.0, z, 400));
        assert!((c - f).abs() < 1e-9, "oracle not converged");
        assert!(f.abs() > 1e-4);
        assert!((rho2.data[p + 64 * k] - q * q * f).abs() < 1e-6 * (q * q * f).abs(), "{k}");
    }
}

#[test]
fn wall_traces_vanish_exactly() {
    for (g, eps) in [(2.0, 0.1), (1.5, 0.05), (3.0, 0.2)] {
        let b = bundle(g, eps, 16, 40, 1.0);
        let n2 = 256;
        let top = n2 * 40;
        for d in 0..3 {
            for p in 0..n2 {
                assert_eq!(b.u_app.c[d][p], 0.0, "bottom d={d}");
                assert_eq!(b.u_app.c[d][top + p], 0.0, "top d={d}");
            }
        }
    }
}

#[test]
fn vertical_corrector_wall_value() {
    let qg = QGState::new(ScalarField2D::from_fn(16, L, |x, _| 0.4 * x.cos()).unwrap());
    let e = eval(1.5, 0.1, &qg);
    let tab = e.table([0.0, 0.0]);
    for p in [0, 3, 77] {
        let c = e.column(&tab, p);
        let f = e.point(&c, 0.0);
        assert_eq!(f.rho_bar.v * f.u13.v, -(e.vert.rho0 * f.u13b.v));
    }
}

/// Plugs the sampled correctors into `∂ₜρ₁ + ∇·(ρ̄u₁) + ∇ₕ·(ρ₁u₀) = 0` with
/// spectral horizontal and sixth-order vertical differences.
#[test]
fn first_order_mass_identity() {
    let l = law(1.5);
    let n3 = 64;
    let profile = crate::hydrostatic::solve_profile(&l, 2.0, n3).unwrap();
    let qg = qg_state(16, 1.0);
    let vert = VerticalProfiles::new(&l, 2.0, N_FINE).unwrap();
    let params = vert.qg_params(0.2, L, 16, 1e-3).unwrap();
    let visc = ViscosityParams::new(0.2, 0.1, 0.5).unwrap();
    let (u1h, u13) = build_u1(&qg, &params, &profile, &l, &visc).unwrap();
    let rho1 = build_rho1(&qg, &profile, &l);
    let sp = Spectral2::new(16, L);
    let qh = sp.fwd(&qg.q.data);
    let qt = sp.inv(&QGSolver::new(params).time_derivative(&qh));
    let u0 = [sp.inv(&sp.deriv(&qh, 0, 1)).iter().map(|v| -v).collect::<Vec<_>>(), sp.inv(&sp.deriv(&qh, 1, 0))];
    let n2 = 256;
    let h = profile.dz();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut col = vec![0.0; n3 + 1];
    for k in 3..n3 - 2 {
        let r = profile.rho_bar[k];
        let b = r / l.dp(r);
        let sl = |f: &[f64]| f[n2 * k..n2 * (k + 1)].to_vec();
        let dx = |f: Vec<f64>| sp.inv(&sp.deriv(&sp.fwd(&f), 1, 0));
        let dy = |f: Vec<f64>| sp.inv(&sp.deriv(&sp.fwd(&f), 0, 1));
        let divu = {
            let (a, c) = (dx(sl(&u1h.c[0])), dy(sl(&u1h.c[1])));
            a.iter().zip(&c).map(|(x, y)| r * (x + y)).collect::<Vec<_>>()
        };
        let r1 = sl(&rho1.data);
        let flux = {
            let a = dx(r1.iter().zip(&u0[0]).map(|(x, y)| x * y).collect());
            let c = dy(r1.iter().zip(&u0[1]).map(|(x, y)| x * y).collect());
            a.iter().zip(&c).map(|(x, y)| x + y).collect::<Vec<_>>()
        };
        for p in 0..n2 {
            for (kk, cv) in col.iter_mut().enumerate() {
                *cv = profile.rho_bar[kk] * u13.data[p + n2 * kk];
            }
            let d3 = central_d6(&col, k, h);
            let res = qt[p] * b + divu[p] + d3 + flux[p];
            worst = worst.max(res.abs());
            scale = scale.max(d3.abs());
        }
    }
    assert!(scale > 1e-2);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn interior_velocity_approaches_geostrophic() {
    let mut errs = Vec::new();
    for eps in [0.1, 0.05] {
        let b = bundle(1.5, eps, 16, 32, 1.0);
        let e = &b.eval;
        let tab = e.table([0.0, 0.0]);
        let mut worst = 0.0f64;
        for p in 0..256 {
            let f = e.point(&e.column(&tab, p), 0.5);
            worst = worst.max((f.u[0].v - f.u0[0].v).hypot(f.u[1].v - f.u0[1].v).hypot(f.u[2].v));
        }
        errs.push(worst);
    }
    // O(ε) plus a layer tail e^{−k/(2ε)} that is still visible at ε = 0.1.
    let ratio = errs[0] / errs[1];
    assert!(ratio > 1.7 && ratio < 3.0, "{errs:?}");
}

#[test]
fn positivity_and_validity_bound() {
    let b = bundle(2.0, 0.1, 16, 32, 1.0);
    assert!(b.rho_app.data.iter().all(|&r| r > 0.0));
    assert!(b.eps0 >= 0.1);
    let qg = qg_state(16, 40.0);
    let err = AnsatzBundle::new(eval(2.0, 0.1, &qg), &qg, 32, None);
    assert!(matches!(err, Err(Error::Domain(_))));
}

#[test]
fn residual_requires_layer_resolution() {
    let b = bundle(2.0, 0.05, 8, 32, 1.0);
    assert!(matches!(residual(&b), Err(Error::Config(_))));
}

/// Space and time derivatives carried by the jets against differences of
/// the evaluator itself (shifted grids, neighbouring heights, QG steps).
#[test]
fn jets_match_differences() {
    let qg = qg_state(16, 1.0);
    let e = eval(3.0, 0.1, &qg);
    let z = 0.037;
    let p = 21;
    let d = 1e-3;
    let at = |sx: f64, sy: f64, z: f64| {
        let tab = e.table([sx, sy]);
        e.point(&e.column(&tab, p), z)
    };
    let f0 = at(0.0, 0.0, z);
    let dx = e.dx();
    let fx = [at(d, 0.0, z), at(-d, 0.0, z)];
    let fy = [at(0.0, d, z), at(0.0, -d, z)];
    let fz = [at(0.0, 0.0, z + d * 0.01), at(0.0, 0.0, z - d * 0.01)];
    let hz = d * 0.01;
    for c in 0..3 {
        let (u, x, y, zz) = (f0.u[c], [fx[0].u[c], fx[1].u[c]], [fy[0].u[c], fy[1].u[c]], [fz[0].u[c], fz[1].u[c]]);
        let sc = 1.0 + u.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(((x[0].v - x[1].v) / (2.0 * d * dx) - u.g[0]).abs() < 1e-5 * sc, "x c={c}");
        assert!(((y[0].v - y[1].v) / (2.0 * d * dx) - u.g[1]).abs() < 1e-5 * sc, "y c={c}");
        assert!(((zz[0].v - zz[1].v) / (2.0 * hz) - u.g[2]).abs() < 1e-4 * sc, "z c={c}");
        assert!(((zz[0].g[2] - zz[1].g[2]) / (2.0 * hz) - u.h[5]).abs() < 1e-3 * (1.0 + u.h[5].abs()), "zz c={c}");
        assert!(((x[0].g[2] - x[1].g[2]) / (2.0 * d * dx) - u.h[2]).abs() < 1e-4 * (1.0 + u.h[2].abs()), "xz c={c}");
    }
    // Time: a short QG step moves the ansatz along its t-component.
    let mut params = e.params;
    params.dt = 1e-4;
    let fwd = crate::qg::qg_step(&qg, &params).unwrap();
    params.dt = 1e-4;
    let e1 = AnsatzEval::new(e.vert.clone(), &fwd, params, e.visc, e.eps).unwrap();
    let f1 = e1.point(&e1.column(&e1.table([0.0, 0.0]), p), z);
    for c in 0..3 {
        let fd = (f1.u[c].v - f0.u[c].v) / 1e-4;
        assert!((fd - f0.u[c].t).abs() < 1e-3 * (1.0 + f0.u[c].t.abs()), "t c={c}: {fd} vs {}", f0.u[c].t);
    }
    assert!(((f1.rho.v - f0.rho.v) / 1e-4 - f0.rho.t).abs() < 1e-4);
}

#[test]
fn residual_split_small_sweep() {
    let mut mass = Vec::new();
    let mut sbl = Vec::new();
    let epss = [0.1, 0.05];
    for eps in epss {
        let qg = qg_state(16, 1.0);
        let e = eval(1.5, eps, &qg);
        let n3 = min_levels(&e.layers, eps);
        let b = AnsatzBundle::new(e, &qg, n3, None).unwrap();
        let r = residual(&b).unwrap();
        mass.push(r.norms.mass_leftover.linf);
        sbl.push(r.norms.s_bl.l2);
    }
    assert!(loglog_slope(&epss, &mass) > 1.7, "{mass:?}");
    let s = loglog_slope(&epss, &sbl);
    assert!((s - 0.5).abs() < 0.15, "{sbl:?}");
}
