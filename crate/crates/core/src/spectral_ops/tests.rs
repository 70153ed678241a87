use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn vp(mu: f64, eps: f64, lambda: f64) -> ViscosityParams {
    ViscosityParams::new(mu, eps, lambda).unwrap()
}

/// Sum of random Fourier modes with `|j_d| ≤ kmax[d]` on a periodic box.
fn random_modes(dims: [usize; 3], lens: [f64; 3], kmax: [i64; 3], rng: &mut ChaCha8Rng) -> ScalarField3D {
    let mut modes = Vec::new();
    for a in -kmax[0]..=kmax[0] {
        for b in -kmax[1]..=kmax[1] {
            for c in -kmax[2]..=kmax[2] {
                modes.push((a as f64, b as f64, c as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)));
            }
        }
    }
    ScalarField3D::periodic_from_fn(dims, lens, |x, y, z| {
        modes
            .iter()
            .map(|&(a, b, c, amp, ph)| {
                amp * (2.0 * PI * (a * x / lens[0] + b * y / lens[1] + c * z / lens[2]) + ph).cos()
            })
            .sum()
    })
    .unwrap()
}

fn random_vector(dims: [usize; 3], lens: [f64; 3], kmax: [i64; 3], rng: &mut ChaCha8Rng) -> VectorField3D {
    let a = random_modes(dims, lens, kmax, rng);
    let b = random_modes(dims, lens, kmax, rng);
    let c = random_modes(dims, lens, kmax, rng);
    VectorField3D::from_components(a, b, c).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

const BOX: [f64; 3] = [2.0 * PI, 2.0 * PI, 1.0];

#[test]
fn laplacian_single_mode_and_constant() {
    let p = vp(2.0, 0.3, 1.0);
    let f = ScalarField3D::periodic_from_fn([16, 8, 8], BOX, |x, _, _| (3.0 * x).sin()).unwrap();
    let lf = aniso_laplacian(&f, &p, VerticalBc::Periodic).unwrap();
    let expect: Vec<f64> = f.data.iter().map(|v| -18.0 * v).collect();
    assert!(max_diff(&lf.data, &expect) < 1e-11);

    let c = ScalarField3D::periodic_from_fn([8, 8, 8], BOX, |_, _, _| 4.2).unwrap();
    assert!(aniso_laplacian(&c, &p, VerticalBc::Periodic).unwrap().max_abs() < 1e-12);
}

#[test]
fn laplacian_mixed_mode_on_slab() {
    let p = vp(1.0, 0.1, 1.0);
    let nz = 16;
    let spacing = [2.0 * PI / 16.0, 2.0 * PI / 16.0, 1.0 / nz as f64];
    let f = ScalarField3D::sample([16, 16, nz + 1], spacing, |x, _, z| x.sin() * (2.0 * PI * z).sin());
    let lf = aniso_laplacian(&f, &p, VerticalBc::Odd).unwrap();
    let lam = -(1.0 + 0.1 * 4.0 * PI * PI);
    let expect: Vec<f64> = f.data.iter().map(|v| lam * v).collect();
    assert!(max_diff(&lf.data, &expect) < 1e-11);

    let g = ScalarField3D::sample([16, 16, nz + 1], spacing, |_, y, z| (2.0 * y).cos() * (3.0 * PI * z).cos());
    let lg = aniso_laplacian(&g, &p, VerticalBc::Even).unwrap();
    let lam = -(4.0 + 0.1 * 9.0 * PI * PI);
    let expect: Vec<f64> = g.data.iter().map(|v| lam * v).collect();
    assert!(max_diff(&lg.data, &expect) < 1e-10);
}

#[test]
fn lame_on_single_modes() {
    let p = vp(1.5, 0.2, 0.7);
    let dims = [8, 8, 8];
    let zero = ScalarField3D::periodic_from_fn(dims, BOX, |_, _, _| 0.0).unwrap();
    // Divergence-free: u = (sin(2πz), 0, 0).
    let ux = ScalarField3D::periodic_from_fn(dims, BOX, |_, _, z| (2.0 * PI * z).sin()).unwrap();
    let u = VectorField3D::from_components(ux.clone(), zero.clone(), zero.clone()).unwrap();
    let lu = lame(&u, &p).unwrap();
    let expect: Vec<f64> = ux.data.iter().map(|v| 0.2 * 4.0 * PI * PI * v).collect();
    assert!(max_diff(&lu.c[0], &expect) < 1e-10);
    assert!(lu.c[1].iter().chain(&lu.c[2]).all(|v| v.abs() < 1e-12));

    // Gradient of φ = cos(2x): u = (−2 sin 2x, 0, 0), Lu = (−Δ_{μ,ε} − λ∇∇·)u.
    let gx = ScalarField3D::periodic_from_fn(dims, BOX, |x, _, _| -2.0 * (2.0 * x).sin()).unwrap();
    let g = VectorField3D::from_components(gx.clone(), zero.clone(), zero.clone()).unwrap();
    let lg = lame(&g, &p).unwrap();
    let expect: Vec<f64> = gx.data.iter().map(|v| (1.5 * 4.0 + 0.7 * 4.0) * v).collect();
    assert!(max_diff(&lg.c[0], &expect) < 1e-10);

    let z = VectorField3D::zeros(dims, [BOX[0] / 8.0, BOX[1] / 8.0, BOX[2] / 8.0]);
    assert_eq!(lame(&z, &p).unwrap().max_abs(), 0.0);
}

#[test]
fn leray_gradient_and_curl_fields() {
    let dims = [8, 8, 8];
    let f = |g: &dyn Fn(f64, f64, f64) -> f64| ScalarField3D::periodic_from_fn(dims, BOX, g).unwrap();
    // ∇(sin x cos(2πz)).
    let grad = VectorField3D::from_components(
        f(&|x, _, z| x.cos() * (2.0 * PI * z).cos()),
        f(&|_, _, _| 0.0),
        f(&|x, _, z| -2.0 * PI * x.sin() * (2.0 * PI * z).sin()),
    )
    .unwrap();
    assert!(leray_p(&grad).unwrap().max_abs() < 1e-12);
    // ∇×(0, 0, sin x sin y) = (sin x cos y, −cos x sin y, 0).
    let curl = VectorField3D::from_components(
        f(&|x, y, _| x.sin() * y.cos()),
        f(&|x, y, _| -x.cos() * y.sin()),
        f(&|_, _, _| 0.0),
    )
    .unwrap();
    assert!(leray_q(&curl).unwrap().max_abs() < 1e-12);
}

#[test]
fn projector_algebra_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_vector([8, 8, 8], BOX, [2, 2, 2], &mut rng);
    let p = leray_p(&u).unwrap();
    let q = leray_q(&u).unwrap();
    assert!(p.add(&q).sub(&u).max_abs() < 1e-12);
    assert!(leray_p(&p).unwrap().sub(&p).max_abs() < 1e-12);
    assert!(leray_q(&q).unwrap().sub(&q).max_abs() < 1e-12);
    assert!(leray_q(&p).unwrap().max_abs() < 1e-12);
    assert!(divergence(&p).unwrap().max_abs() < 1e-12);
}

fn rho_profile(nz: usize, coeffs: &[(f64, f64)], base: f64) -> Vec<f64> {
    (0..nz)
        .map(|k| {
            let z = k as f64 / nz as f64;
            base + coeffs
                .iter()
                .enumerate()
                .map(|(j, (a, b))| {
                    let w = 2.0 * PI * (j + 1) as f64 * z;
                    a * w.cos() + b * w.sin()
                })
                .sum::<f64>()
        })
        .collect()
}

#[test]
fn commutator_constant_density_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = random_vector([8, 8, 8], BOX, [2, 2, 2], &mut rng);
    let c = commutator_c(&h, &[2.0; 8], &vp(1.0, 0.1, 1.0)).unwrap();
    assert!(c.closed_form.max_abs() < 1e-12);
    assert!(c.defining.max_abs() < 1e-11);
    assert!(c.literal.max_abs() < 1e-11);
}

#[test]
fn commutator_isotropic_collapses() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = random_vector([8, 8, 32], BOX, [2, 2, 2], &mut rng);
    let rb = rho_profile(32, &[(0.1, 0.0)], 2.0);
    let c = commutator_c(&h, &rb, &vp(0.4, 0.4, 1.0)).unwrap();
    assert!(c.closed_form.max_abs() < 1e-12);
    assert!(c.defining.max_abs() < 1e-9);
    assert!(c.literal.max_abs() < 1e-9);
}

#[test]
fn commutator_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = random_vector([8, 8, 32], BOX, [2, 2, 3], &mut rng);
    let rb = rho_profile(32, &[(0.1, 0.0)], 2.0);
    let c = commutator_c(&h, &rb, &vp(1.0, 0.1, 1.0)).unwrap();
    let scale = c.closed_form.max_abs();
    assert!(scale > 1e-3);
    assert!(c.closed_form.sub(&c.defining).max_abs() < 1e-8);
    // The literal P-form differs at leading order once μ ≠ ε.
    assert!(c.closed_form.sub(&c.literal).max_abs() > 1e-2 * scale);
}

#[test]
fn commutator_rejects_nonpositive_density() {
    let h = VectorField3D::zeros([8, 8, 8], [0.1; 3]);
    let mut rb = vec![1.0; 8];
    rb[3] = 0.0;
    assert!(matches!(commutator_c(&h, &rb, &vp(1.0, 0.1, 1.0)), Err(Error::Domain(_))));
}

#[test]
fn helmholtz_cases() {
    let n = 32;
    let l = 2.0 * PI;
    let z = ScalarField2D::zeros(n, l).unwrap();
    assert_eq!(helmholtz_2d(&z, &z).unwrap().max_abs(), 0.0);

    let a = ScalarField2D::from_fn(n, l, |x, y| x.sin() * y.sin()).unwrap();
    let f = helmholtz_2d(&a, &z).unwrap();
    // −∇⊥(sin x sin y)/2 with ∇⊥ = (−∂₂, ∂₁).
    let ex = ScalarField2D::from_fn(n, l, |x, y| x.sin() * y.cos() / 2.0).unwrap();
    let ey = ScalarField2D::from_fn(n, l, |x, y| -x.cos() * y.sin() / 2.0).unwrap();
    assert!(max_diff(&f.x, &ex.data) < 1e-13);
    assert!(max_diff(&f.y, &ey.data) < 1e-13);

    let c = ScalarField2D::from_fn(n, l, |x, _| 1.0 + x.cos()).unwrap();
    assert!(matches!(helmholtz_2d(&c, &z), Err(Error::Domain(_))));
}

#[test]
fn helmholtz_round_trip() {
    let n = 32;
    let l = 3.0;
    let sp = Spectral2::new(n, l);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rnd = || {
        let m: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| (rng.gen_range(-4..=4) as f64, rng.gen_range(-4..=4) as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.0)))
            .map(|(a, b, c, d): (f64, f64, f64, f64)| if a == 0.0 && b == 0.0 { (1.0, b, c, d) } else { (a, b, c, d) })
            .collect();
        ScalarField2D::from_fn(n, l, |x, y| {
            m.iter().map(|&(a, b, c, d)| c * (2.0 * PI * (a * x + b * y) / l + d).cos()).sum()
        })
        .unwrap()
    };
    let a = rnd();
    let b = rnd();
    let f = helmholtz_2d(&a, &b).unwrap();
    let (fx, fy) = (sp.fwd(&f.x), sp.fwd(&f.y));
    let curl: Vec<f64> = sp.inv(&sp.deriv(&fy, 1, 0)).iter().zip(sp.inv(&sp.deriv(&fx, 0, 1))).map(|(p, q)| p - q).collect();
    let div: Vec<f64> = sp.inv(&sp.deriv(&fx, 1, 0)).iter().zip(sp.inv(&sp.deriv(&fy, 0, 1))).map(|(p, q)| p + q).collect();
    assert!(max_diff(&curl, &a.data) < 1e-12);
    assert!(max_diff(&div, &b.data) < 1e-12);
}

fn bump(n: usize, nz: usize, l: f64, s: f64) -> VectorField3D {
    let spacing = [l / n as f64, l / n as f64, 1.0 / nz as f64];
    let c = l / 2.0;
    let f = ScalarField3D::sample([n, n, nz + 1], spacing, |x, y, z| {
        let r2 = ((x - c) * (x - c) + (y - c) * (y - c)) * s * s;
        (-r2 / 2.0).exp() * z * (1.0 - z)
    });
    let zero = ScalarField3D::zeros(f.dims, f.spacing);
    VectorField3D::from_components(f, zero.clone(), zero).unwrap()
}

#[test]
fn sobolev_ratio_zero_field_errors() {
    let u = VectorField3D::zeros([8, 8, 9], [0.1, 0.1, 0.125]);
    assert!(matches!(aniso_sobolev_ratio(&u, 1.0), Err(Error::Domain(_))));
    assert!(aniso_sobolev_ratio(&bump(16, 8, 10.0, 1.0), 0.0).is_err());
}

#[test]
fn sobolev_norms_quadrature() {
    // φ Gaussian of unit width: ‖∂₃u‖² = ‖φ‖²·∫(1−2z)² = π/3, and the
    // trapezoid rule overshoots a quadratic integrand by exactly 2h²/3.
    let u = bump(64, 32, 10.0, 1.0);
    let n = aniso_norms(&u).unwrap();
    let h = 1.0 / 32.0;
    assert!((n.d3 * n.d3 - PI * (1.0 / 3.0 + 2.0 * h * h / 3.0)).abs() < 1e-8);
    // ‖∇_h u‖² = ∫|∇φ|² · ∫(z−z²)² = π · (1/30).
    let tz = 1.0 / 30.0;
    assert!((n.grad_h * n.grad_h - PI * tz).abs() < 1e-4 * PI * tz);
}

#[test]
fn sobolev_ratio_bounded_and_rescaling_invariant() {
    let ceiling = sobolev_ceiling();
    let mut at_opt = Vec::new();
    for &s in &[1.0, 2.0, 4.0] {
        let u = bump(128, 64, 10.0, s);
        let n = aniso_norms(&u).unwrap();
        for &k in &[0.1, 1.0, 10.0] {
            assert!(ratio_from_norms(&n, k).unwrap() <= ceiling);
        }
        at_opt.push(ratio_from_norms(&n, optimal_kappa(&n)).unwrap());
    }
    let (lo, hi) = at_opt.iter().fold((f64::INFINITY, 0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo - 1.0 < 0.05, "{at_opt:?}");
}

#[test]
fn dealias_mask() {
    let sp = Spectral2::new(16, 1.0);
    let kept = (0..256).filter(|&i| sp.kept(i)).count();
    assert_eq!(kept, 11 * 11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projectors_split_any_field(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_vector([8, 8, 4], BOX, [2, 2, 1], &mut rng);
        let p = leray_p(&u).unwrap();
        let q = leray_q(&u).unwrap();
        prop_assert!(leray_p(&q).unwrap().max_abs() < 1e-12);
        prop_assert!(divergence(&p).unwrap().max_abs() < 1e-11);
    }

    #[test]
    fn commutator_identity_random_draws(seed in any::<u64>(), mu in 0.2f64..3.0, eps in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_vector([8, 8, 32], BOX, [2, 2, 2], &mut rng);
        let coeffs = [(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)), (rng.gen_range(-0.05..0.05), 0.0)];
        let rb = rho_profile(32, &coeffs, rng.gen_range(1.5..3.0));
        let c = commutator_c(&h, &rb, &vp(mu, eps, 1.0)).unwrap();
        prop_assert!(c.closed_form.sub(&c.defining).max_abs() < 1e-8);
    }

    #[test]
    fn laplacian_is_linear(a in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_modes([8, 8, 8], BOX, [2, 2, 2], &mut rng);
        let p = vp(1.0, 0.5, 1.0);
        let mut g = f.clone();
        g.data.iter_mut().for_each(|v| *v *= a);
        let lf = aniso_laplacian(&f, &p, VerticalBc::Periodic).unwrap();
        let lg = aniso_laplacian(&g, &p, VerticalBc::Periodic).unwrap();
        let scaled: Vec<f64> = lf.data.iter().map(|v| a * v).collect();
        prop_assert!(max_diff(&scaled, &lg.data) < 1e-10);
    }
}
