//! Vertical profiles of the ansatz, integrated together on a fine grid:
//! `ρ̄`, the second-order density shape `r₂` (`ρ₂ = Q² r₂`), and the
//! primitives `B = ∫₀^z ρ̄/P′(ρ̄)`, `M = ∫₀^z ρ̄`.

use crate::ekman::pumping_coefficient;
use crate::error::{config, Error, Result};
use crate::hydrostatic::{ClosedForm, HydrostaticProfile, KAPPA_MIN};
use crate::pressure::PressureLaw;
use crate::qg::QGParams;

use super::jet::Jet;

/// Default number of fine RK4 steps over `[0, 1]`.
pub const N_FINE: usize = 4096;

/// State `(ρ̄, r₂, B, M)`.
type Y = [f64; 4];

#[derive(Clone, Copy, Debug)]
pub struct VerticalJets {
    pub rho: Jet,
    pub inv_rho: Jet,
    pub pp: Jet,
    pub inv_pp: Jet,
    /// `b = ρ̄/P′(ρ̄)`.
    pub b: Jet,
    pub r2: Jet,
    pub big_b: Jet,
    pub big_m: Jet,
    /// `φ = P″b²/2 + P′r₂`, so that `P″ρ₁²/2 + P′ρ₂ = Q²φ`.
    pub phi: Jet,
    pub z: Jet,
}

/// Jets of the `ρ`-only coefficients at a density value.
struct Coeffs {
    rho: Jet,
    pp: Jet,
    ppp: Jet,
    b: Jet,
    /// `(a, a′)` of `r₂′ + a r₂ = s`.
    a: (f64, f64),
    /// `(s, s′)`.
    s: (f64, f64),
}

fn coeffs(law: &PressureLaw, r: f64) -> Coeffs {
    let (p1, p2, p3, p4) = (law.dp(r), law.d2p(r), law.d3p(r), law.dp_n(r, 4));
    let f = -r / p1;
    let f_rho = -1.0 / p1 + r * p2 / (p1 * p1);
    let rho = Jet::vertical(r, f, f_rho * f);
    let pp = rho.compose(p1, p2, p3);
    let ppp = rho.compose(p2, p3, p4);
    let inv_pp = pp.recip();
    let b = rho * inv_pp;
    let a = (Jet::constant(1.0) - ppp * b) * inv_pp;
    let x = ppp * b * b;
    let (x1, x2) = (x.g[2], x.h[5]);
    let s = -0.5 * x1 / p1;
    let s1 = -0.5 * x2 / p1 + 0.5 * x1 * p2 * f / (p1 * p1);
    Coeffs { rho, pp, ppp, b, a: (a.v, a.g[2]), s: (s, s1) }
}

fn rhs(law: &PressureLaw, y: &Y) -> Y {
    let c = coeffs(law, y[0]);
    [c.rho.g[2], c.s.0 - c.a.0 * y[1], c.b.v, y[0]]
}

fn rk4(law: &PressureLaw, y: &Y, h: f64) -> Y {
    let add = |y: &Y, k: &Y, c: f64| [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2], y[3] + c * k[3]];
    let k1 = rhs(law, y);
    let k2 = rhs(law, &add(y, &k1, 0.5 * h));
    let k3 = rhs(law, &add(y, &k2, 0.5 * h));
    let k4 = rhs(law, &add(y, &k3, h));
    let mut out = *y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[derive(Clone, Debug)]
pub struct VerticalProfiles {
    pub law: PressureLaw,
    pub rho0: f64,
    h: f64,
    nodes: Vec<Y>,
}

impl VerticalProfiles {
    pub fn new(law: &PressureLaw, rho0: f64, n_fine: usize) -> Result<Self> {
        if n_fine < 2 {
            return config("vertical table needs at least 2 steps");
        }
        if !(rho0 > KAPPA_MIN) {
            return config(format!("bottom density must be positive, got {rho0}"));
        }
        let h = 1.0 / n_fine as f64;
        let mut nodes = Vec::with_capacity(n_fine + 1);
        let mut y = [rho0, 0.0, 0.0, 0.0];
        nodes.push(y);
        for i in 0..n_fine {
            y = rk4(law, &y, h);
            if !(y[0] > KAPPA_MIN) {
                return Err(Error::Vacuum(format!("profile reached {} at x3 = {}", y[0], (i + 1) as f64 * h)));
            }
            nodes.push(y);
        }
        Ok(Self { law: *law, rho0, h, nodes })
    }

    pub fn n_fine(&self) -> usize {
        self.nodes.len() - 1
    }

    /// `(ρ̄, r₂, B, M)` at `z ∈ [0, 1]`: the nearest lower node plus one
    /// partial RK4 step.
    pub fn at(&self, z: f64) -> [f64; 4] {
        let n = self.n_fine();
        let z = z.clamp(0.0, 1.0);
        let j = ((z / self.h).floor() as usize).min(n - 1);
        let d = z - j as f64 * self.h;
        if d.abs() < 1e-15 {
            self.nodes[j]
        } else if (d - self.h).abs() < 1e-15 {
            self.nodes[j + 1]
        } else {
            rk4(&self.law, &self.nodes[j], d)
        }
    }

    pub fn rho_bar(&self, z: f64) -> f64 {
        self.at(z)[0]
    }

    pub fn rho_top(&self) -> f64 {
        self.nodes[self.n_fine()][0]
    }

    /// `β = ⟨ρ̄/P′(ρ̄)⟩ = B(1)`.
    pub fn beta(&self) -> f64 {
        self.nodes[self.n_fine()][2]
    }

    /// `m = ⟨ρ̄⟩ = M(1)`.
    pub fn m(&self) -> f64 {
        self.nodes[self.n_fine()][3]
    }

    pub fn jets(&self, z: f64) -> VerticalJets {
        let y = self.at(z);
        let c = coeffs(&self.law, y[0]);
        let inv_pp = c.pp.recip();
        let r2p = c.s.0 - c.a.0 * y[1];
        let r2pp = c.s.1 - c.a.1 * y[1] - c.a.0 * r2p;
        let r2 = Jet::vertical(y[1], r2p, r2pp);
        VerticalJets {
            rho: c.rho,
            inv_rho: c.rho.recip(),
            pp: c.pp,
            inv_pp,
            b: c.b,
            r2,
            big_b: Jet::vertical(y[2], c.b.v, c.b.g[2]),
            big_m: Jet::vertical(y[3], y[0], c.rho.g[2]),
            phi: 0.5 * (c.ppp * c.b * c.b) + c.pp * r2,
            z: Jet::vertical(z, 1.0, 0.0),
        }
    }

    /// The profile sampled at `N₃ + 1` nodes.
    pub fn profile(&self, n3: usize) -> Result<HydrostaticProfile> {
        if n3 < 2 {
            return config("N3 must be at least 2");
        }
        let rho_bar: Vec<f64> = (0..=n3).map(|i| self.rho_bar(i as f64 / n3 as f64)).collect();
        Ok(HydrostaticProfile {
            rho_bar_wall: (self.rho0, rho_bar[n3]),
            kappa: rho_bar.iter().copied().fold(f64::INFINITY, f64::min),
            rho_bar,
            closed_form_params: Some(ClosedForm { gamma: self.law.gamma, a: self.law.a, rho0: self.rho0 }),
            law: self.law,
        })
    }

    /// QG coefficients from the exact vertical integrals.
    pub fn qg_params(&self, mu: f64, l_h: f64, n_h: usize, dt: f64) -> Result<QGParams> {
        let damp = pumping_coefficient(self.rho0, self.rho_top())?;
        QGParams::new(self.beta(), self.m(), mu, damp, l_h, n_h, dt)
    }

    /// `max |b|` and `max |r₂|` over the fine nodes.
    pub fn sup_b_r2(&self) -> (f64, f64) {
        self.nodes.iter().fold((0.0, 0.0), |(mb, mr), y| {
            let b = y[0] / self.law.dp(y[0]);
            (f64::max(mb, b.abs()), f64::max(mr, y[1].abs()))
        })
    }
}
