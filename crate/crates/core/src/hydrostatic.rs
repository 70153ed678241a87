//! Static stratified state: `P′(ρ̄) ρ̄′ = −ρ̄` on `[0, 1]`, the potential
//! `G = H′(ρ̄)` and the vertical averages used by the limit equation.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::pressure::PressureLaw;

/// Densities at or below this value are treated as vacuum.
pub const KAPPA_MIN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub gamma: f64,
    pub a: f64,
    pub rho0: f64,
}

impl ClosedForm {
    /// `aγρ̄^{γ-1}/(γ-1)` (or `a ln ρ̄`) decreases with unit slope.
    pub fn eval(&self, z: f64) -> f64 {
        if self.gamma == 1.0 {
            self.rho0 * (-z / self.a).exp()
        } else {
            let g1 = self.gamma - 1.0;
            (self.rho0.powf(g1) - g1 * z / (self.a * self.gamma)).powf(1.0 / g1)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HydrostaticProfile {
    /// Samples on `N₃ + 1` uniform nodes over `[0, 1]`.
    pub rho_bar: Vec<f64>,
    pub rho_bar_wall: (f64, f64),
    pub kappa: f64,
    pub closed_form_params: Option<ClosedForm>,
    pub law: PressureLaw,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalAverages {
    pub avg_rho: f64,
    pub avg_rho_over_pprime: f64,
}

/// Right-hand side of the profile ODE, `ρ̄′ = −ρ̄ / P′(ρ̄)`.
#[inline]
pub fn slope(law: &PressureLaw, rho: f64) -> f64 {
    -rho / law.dp(rho)
}

/// One classical RK4 step of the profile ODE.
#[inline]
pub fn rk4_step(law: &PressureLaw, rho: f64, h: f64) -> f64 {
    let k1 = slope(law, rho);
    let k2 = slope(law, rho + 0.5 * h * k1);
    let k3 = slope(law, rho + 0.5 * h * k2);
    let k4 = slope(law, rho + h * k3);
    rho + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

pub fn solve_profile(law: &PressureLaw, rho0: f64, n3: usize) -> Result<HydrostaticProfile> {
    if n3 < 2 {
        return config("N3 must be at least 2");
    }
    if !(rho0 > KAPPA_MIN) {
        return config(format!("bottom density must be positive, got {rho0}"));
    }
    let h = 1.0 / n3 as f64;
    let mut rho_bar = Vec::with_capacity(n3 + 1);
    let mut r = rho0;
    rho_bar.push(r);
    for i in 0..n3 {
        r = rk4_step(law, r, h);
        if !(r > KAPPA_MIN) {
            return Err(Error::Vacuum(format!("profile reached {r} at x3 = {}", (i + 1) as f64 * h)));
        }
        rho_bar.push(r);
    }
    let kappa = rho_bar.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(HydrostaticProfile {
        rho_bar_wall: (rho0, r),
        rho_bar,
        kappa,
        closed_form_params: Some(ClosedForm { gamma: law.gamma, a: law.a, rho0 }),
        law: *law,
    })
}

impl HydrostaticProfile {
    pub fn n3(&self) -> usize {
        self.rho_bar.len() - 1
    }

    pub fn dz(&self) -> f64 {
        1.0 / self.n3() as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz()
    }

    /// Maximum deviation from the closed form at the nodes.
    pub fn closed_form_error(&self) -> Option<f64> {
        let cf = self.closed_form_params?;
        Some(
            self.rho_bar
                .iter()
                .enumerate()
                .map(|(i, r)| (r - cf.eval(self.z(i))).abs())
                .fold(0.0, f64::max),
        )
    }

    /// `max |P′(ρ̄) Dρ̄ + ρ̄|` over interior nodes, `D` the centered difference.
    pub fn ode_residual(&self) -> f64 {
        let h = self.dz();
        (1..self.n3())
            .map(|i| {
                let d = (self.rho_bar[i + 1] - self.rho_bar[i - 1]) / (2.0 * h);
                (self.law.dp(self.rho_bar[i]) * d + self.rho_bar[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let g = potential(self);
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x3", "rho_bar", "G"])?;
        for (i, (r, gi)) in self.rho_bar.iter().zip(&g).enumerate() {
            wr.write_record(&[format!("{:.17e}", self.z(i)), format!("{r:.17e}"), format!("{gi:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `G = H′(ρ̄)` at the nodes.
pub fn potential(profile: &HydrostaticProfile) -> Vec<f64> {
    profile.rho_bar.iter().map(|&r| profile.law.h1(r)).collect()
}

const D6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Sixth-order centered first difference at node `i`; needs `3 ≤ i ≤ len − 4`.
#[inline]
pub fn central_d6(f: &[f64], i: usize, h: f64) -> f64 {
    D6.iter().enumerate().map(|(j, c)| c * (f[i + j + 1] - f[i - j - 1])).sum::<f64>() / h
}

/// `max |D P(ρ̄) − ρ̄ D G|` with `D` the sixth-order centered difference, over
/// nodes where the stencil fits.
pub fn balance_residual(profile: &HydrostaticProfile) -> f64 {
    let h = profile.dz();
    let p: Vec<f64> = profile.rho_bar.iter().map(|&r| profile.law.p(r)).collect();
    let g = potential(profile);
    let d = |f: &[f64], i: usize| central_d6(f, i, h);
    (3..profile.n3().saturating_sub(2))
        .map(|i| (d(&p, i) - profile.rho_bar[i] * d(&g, i)).abs())
        .fold(0.0, f64::max)
}

fn trapezoid(f: &[f64]) -> f64 {
    let n = f.len() - 1;
    let inner: f64 = f[1..n].iter().sum();
    (inner + 0.5 * (f[0] + f[n])) / n as f64
}

pub fn vertical_averages(profile: &HydrostaticProfile) -> VerticalAverages {
    let law = profile.law;
    let b: Vec<f64> = profile.rho_bar.iter().map(|&r| r / law.dp(r)).collect();
    VerticalAverages { avg_rho: trapezoid(&profile.rho_bar), avg_rho_over_pprime: trapezoid(&b) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(g: f64, a: f64) -> PressureLaw {
        PressureLaw::new(g, a).unwrap()
    }

    #[test]
    fn linear_profile_gamma2() {
        let p = solve_profile(&law(2.0, 1.0), 2.0, 64).unwrap();
        for (i, r) in p.rho_bar.iter().enumerate() {
            assert!((r - (2.0 - p.z(i) / 2.0)).abs() < 1e-14);
        }
        assert!((p.rho_bar_wall.1 - 1.5).abs() < 1e-14);
        assert!((vertical_averages(&p).avg_rho - 1.75).abs() < 1e-14);
        let g = potential(&p);
        for (i, gi) in g.iter().enumerate() {
            assert!((gi - g[0] + p.z(i)).abs() < 1e-13);
        }
    }

    #[test]
    fn gamma15_closed_form() {
        let p = solve_profile(&law(1.5, 1.0), 2.0, 128).unwrap();
        for (i, r) in p.rho_bar.iter().enumerate() {
            let exact = (2f64.sqrt() - p.z(i) / 3.0).powi(2);
            assert!((r - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let l = law(1.5, 1.0);
        let e: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| solve_profile(&l, 2.0, n).unwrap().closed_form_error().unwrap())
            .collect();
        assert!((e[0] / e[1]).log2() >= 3.5);
        assert!((e[1] / e[2]).log2() >= 3.5);
    }

    #[test]
    fn constant_profile_and_averages() {
        let p = HydrostaticProfile {
            rho_bar: vec![1.0; 9],
            rho_bar_wall: (1.0, 1.0),
            kappa: 1.0,
            closed_form_params: None,
            law: law(2.0, 1.0),
        };
        let avg = vertical_averages(&p);
        assert_eq!(avg.avg_rho, 1.0);
        assert_eq!(avg.avg_rho_over_pprime, 0.5);
        assert!(potential(&p).iter().all(|&g| g == 1.0));
    }

    #[test]
    fn gamma15_averages_refined_oracle() {
        let l = law(1.5, 1.0);
        let coarse = vertical_averages(&solve_profile(&l, 2.0, 4096).unwrap());
        // Closed form: ρ̄ = (√2 − z/3)², ρ̄/P′ = ρ̄^{1/2}/1.5 = (√2 − z/3)/1.5.
        let s = 2f64.sqrt();
        let avg_rho = -((s - 1.0 / 3.0).powi(3) - s.powi(3));
        let avg_b = (s - 1.0 / 6.0) / 1.5;
        assert!((coarse.avg_rho - avg_rho).abs() < 1e-8);
        assert!((coarse.avg_rho_over_pprime - avg_b).abs() < 1e-8);
    }

    #[test]
    fn gamma3_potential_quadrature() {
        // H′(b) − H′(a) = ∫_a^b P′(s)/s ds, evaluated by Gauss–Legendre panels.
        let l = law(3.0, 0.5);
        let p = solve_profile(&l, 2.0, 256).unwrap();
        let g = potential(&p);
        let x = [-0.774596669241483, 0.0, 0.774596669241483];
        let w = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        for i in (0..=p.n3()).step_by(16) {
            let (a, b) = (p.rho_bar[0], p.rho_bar[i]);
            let panels = 200;
            let hp = (b - a) / panels as f64;
            let mut q = 0.0;
            for k in 0..panels {
                let c = a + (k as f64 + 0.5) * hp;
                for j in 0..3 {
                    let s = c + 0.5 * hp * x[j];
                    q += 0.5 * hp * w[j] * l.dp(s) / s;
                }
            }
            assert!((g[i] - g[0] - q).abs() < 1e-12);
            assert!((g[i] - g[0] + p.z(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn discrete_balance() {
        for &g in &[1.5, 2.0, 3.0] {
            let p = solve_profile(&law(g, 1.0), 2.0, 128).unwrap();
            assert!(balance_residual(&p) < 1e-8, "gamma {g}");
            assert!(p.ode_residual() < 1e-3);
        }
    }

    #[test]
    fn vacuum_detected() {
        let r = solve_profile(&law(2.0, 0.1), 1.0, 64);
        assert!(matches!(r, Err(Error::Vacuum(_))));
    }

    #[test]
    fn csv_export() {
        let p = solve_profile(&law(2.0, 1.0), 2.0, 4).unwrap();
        let mut buf = Vec::new();
        p.to_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 6);
        assert!(s.starts_with("x3,rho_bar,G"));
    }
}
