//! Two-scale approximate solution: hydrostatic background, geostrophic
//! interior with first and second order correctors, bottom and top Ekman
//! layers and the linear lifts that restore no-slip. Every field is evaluated
//! pointwise from closed forms as a [`Jet`], so the residual of the full
//! compressible system can be computed without numerical differencing.

pub mod jet;
pub mod vertical;

use num_complex::Complex64;
use serde::Serialize;

use crate::ekman::EkmanLayer;
use crate::error::{config, domain, Error, Result};
use crate::hydrostatic::{central_d6, HydrostaticProfile};
use crate::pressure::PressureLaw;
use crate::qg::{QGParams, QGSolver, QGState};
use crate::spectral_ops::{ScalarField3D, Spectral2, VectorField3D, ViscosityParams};

pub use jet::Jet;
pub use vertical::{VerticalJets, VerticalProfiles, N_FINE};

/// Default `σ = min(2/3, inf ρ̄)/2`.
pub fn default_sigma(kappa: f64) -> f64 {
    0.5 * kappa.min(2.0 / 3.0)
}

/// Physical values of `∂₁^a∂₂^b` of `Q`, `∂ₜQ`, `∂ₜ²Q` on one (possibly
/// shifted) copy of the horizontal grid. Orders up to 6, 4 and 2.
pub struct HTable {
    d: Vec<Vec<f64>>,
    dt: Vec<Vec<f64>>,
    dtt: Vec<Vec<f64>>,
}

#[inline]
fn tri(a: usize, b: usize) -> usize {
    let o = a + b;
    o * (o + 1) / 2 + b
}

impl HTable {
    fn new(sp: &Spectral2, s: [&[Complex64]; 3], shift: [f64; 2]) -> Self {
        let build = |s: &[Complex64], order: usize| {
            let mut v = Vec::new();
            for o in 0..=order {
                for b in 0..=o {
                    v.push(sp.deriv_shifted(s, (o - b) as u32, b as u32, shift[0], shift[1]));
                }
            }
            v
        };
        Self { d: build(s[0], 6), dt: build(s[1], 4), dtt: build(s[2], 2) }
    }

    /// Jet of `∂^{(a,b)}Q`, `a + b ≤ 4`.
    fn q(&self, p: usize, a: usize, b: usize) -> Jet {
        let d = &self.d;
        Jet {
            v: d[tri(a, b)][p],
            t: self.dt[tri(a, b)][p],
            g: [d[tri(a + 1, b)][p], d[tri(a, b + 1)][p], 0.0],
            h: [d[tri(a + 2, b)][p], d[tri(a + 1, b + 1)][p], 0.0, d[tri(a, b + 2)][p], 0.0, 0.0],
        }
    }

    /// Jet of `∂^{(a,b)}∂ₜQ`, `a + b ≤ 2`.
    fn qt(&self, p: usize, a: usize, b: usize) -> Jet {
        let d = &self.dt;
        Jet {
            v: d[tri(a, b)][p],
            t: self.dtt[tri(a, b)][p],
            g: [d[tri(a + 1, b)][p], d[tri(a, b + 1)][p], 0.0],
            h: [d[tri(a + 2, b)][p], d[tri(a + 1, b + 1)][p], 0.0, d[tri(a, b + 2)][p], 0.0, 0.0],
        }
    }
}

/// Layer profile values at the far edge `ζ = 1/ε`, used by the lifts.
#[derive(Clone, Copy, Debug)]
struct Far {
    u0: [Jet; 2],
    u1: [Jet; 3],
}

/// Horizontal ingredients at one column.
#[derive(Clone, Copy, Debug)]
pub struct Column {
    q: Jet,
    u0: [Jet; 2],
    omega: Jet,
    grad_lap: [Jet; 2],
    bilap: Jet,
    qt: Jet,
    grad_qt: [Jet; 2],
    lap_qt: Jet,
    jac: Jet,
    adv: [Jet; 2],
    u1h_wall: [[Jet; 2]; 2],
    /// `u₁,₃(·,1) + u^{bl}_{1,3,t}(·,0)` before correction.
    defect: Jet,
    c0: Jet,
    far_b: Far,
    far_t: Far,
}

/// All ansatz pieces at one point.
#[derive(Clone, Copy, Debug)]
pub struct PointFields {
    pub rho_bar: Jet,
    pub rho1: Jet,
    pub rho2: Jet,
    pub rho: Jet,
    pub u0: [Jet; 2],
    pub u0b: [Jet; 2],
    pub u0t: [Jet; 2],
    pub u1h: [Jet; 2],
    pub u13: Jet,
    pub u1hb: [Jet; 2],
    pub u1ht: [Jet; 2],
    pub u13b: Jet,
    pub u13t: Jet,
    pub lift0: [Jet; 2],
    pub lift1: [Jet; 3],
    pub u: [Jet; 3],
}

fn spiral(ec: Jet, es: Jet, u0: [Jet; 2]) -> [Jet; 2] {
    [-(ec * u0[0] + es * u0[1]), -(-(es * u0[0]) + ec * u0[1])]
}

/// `(e cos kζ, e sin kζ, e)`, `e = e^{−kζ}`, as `x₃` jets with `dζ/dx₃ = dir`.
fn layer_jets(layer: &EkmanLayer, s: f64, dir: f64) -> [Jet; 3] {
    let (ec, es) = layer.envelope(s);
    let e = (-layer.k * s).exp();
    let k = layer.k;
    let d2 = dir * dir;
    [
        Jet::vertical(ec, dir * k * (-ec - es), d2 * 2.0 * k * k * es),
        Jet::vertical(es, dir * k * (ec - es), d2 * (-2.0) * k * k * ec),
        Jet::vertical(e, dir * (-k * e), d2 * k * k * e),
    ]
}

fn cross(v: [f64; 2]) -> [f64; 3] {
    [-v[1], v[0], 0.0]
}

/// Pointwise evaluator of the ansatz at a fixed time.
pub struct AnsatzEval {
    pub eps: f64,
    pub law: PressureLaw,
    pub vert: VerticalProfiles,
    pub params: QGParams,
    pub visc: ViscosityParams,
    pub layers: (EkmanLayer, EkmanLayer),
    pub t: f64,
    sp: Spectral2,
    spectra: [Vec<Complex64>; 3],
}

impl AnsatzEval {
    pub fn new(
        vert: VerticalProfiles,
        qg: &QGState,
        params: QGParams,
        visc: ViscosityParams,
        eps: f64,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return domain(format!("eps must be positive, got {eps}"));
        }
        if (visc.mu - params.mu).abs() > 1e-12 * params.mu {
            return config(format!("horizontal viscosity {} differs from the QG value {}", visc.mu, params.mu));
        }
        if (visc.eps_visc - eps).abs() > 1e-12 * eps {
            return config(format!("vertical viscosity {} must equal eps = {eps}", visc.eps_visc));
        }
        if qg.q.n != params.n_h || (qg.q.l - params.l_h).abs() > 1e-12 * params.l_h {
            return Err(Error::Grid("QG state and parameters disagree on the grid".into()));
        }
        let layers = (EkmanLayer::bottom(vert.rho0)?, EkmanLayer::top(vert.rho_top())?);
        let solver = QGSolver::new(params);
        let sp = Spectral2::new(params.n_h, params.l_h);
        let qh = sp.fwd(&qg.q.data);
        let (qth, qtth) = solver.time_derivatives(&qh);
        Ok(Self { eps, law: vert.law, vert, params, visc, layers, t: qg.t, sp, spectra: [qh, qth, qtth] })
    }

    pub fn n_h(&self) -> usize {
        self.params.n_h
    }

    pub fn dx(&self) -> f64 {
        self.params.l_h / self.params.n_h as f64
    }

    /// Derivative tables on the grid shifted by `shift` cells.
    pub fn table(&self, shift: [f64; 2]) -> HTable {
        HTable::new(&self.sp, [&self.spectra[0], &self.spectra[1], &self.spectra[2]], shift)
    }

    pub fn sup_q(&self) -> f64 {
        self.sp.inv(&self.spectra[0]).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn inv2k(&self) -> (f64, f64) {
        (1.0 / (2.0 * self.layers.0.k), 1.0 / (2.0 * self.layers.1.k))
    }

    fn u1h_at(&self, c: &Column, v: &VerticalJets) -> [Jet; 2] {
        let mu = self.params.mu;
        let coef = 2.0 * (v.phi * v.inv_rho) - v.inv_pp;
        let qc = coef * c.q;
        [0, 1].map(|i| mu * (v.inv_rho * c.grad_lap[i]) - c.grad_qt[i] - c.adv[i] + qc * c.u0[i])
    }

    /// `u₁,₃` without the top correction.
    fn u13_raw(&self, c: &Column, v: &VerticalJets) -> Jet {
        let mu = self.params.mu;
        let drho = Jet::constant(self.vert.rho0) - v.rho;
        let inner = c.c0 * drho - c.qt * v.big_b - mu * (c.bilap * v.z) + (c.lap_qt + c.jac) * v.big_m;
        c.c0 + v.inv_rho * inner
    }

    pub fn column(&self, tab: &HTable, p: usize) -> Column {
        let q = tab.q(p, 0, 0);
        let (q1, q2) = (tab.q(p, 1, 0), tab.q(p, 0, 1));
        let (q11, q12, q22) = (tab.q(p, 2, 0), tab.q(p, 1, 1), tab.q(p, 0, 2));
        let u0 = [-q2, q1];
        let omega = q11 + q22;
        let grad_lap = [tab.q(p, 3, 0) + tab.q(p, 1, 2), tab.q(p, 2, 1) + tab.q(p, 0, 3)];
        let bilap = tab.q(p, 4, 0) + 2.0 * tab.q(p, 2, 2) + tab.q(p, 0, 4);
        let qt = tab.qt(p, 0, 0);
        let grad_qt = [tab.qt(p, 1, 0), tab.qt(p, 0, 1)];
        let lap_qt = tab.qt(p, 2, 0) + tab.qt(p, 0, 2);
        let jac = u0[0] * grad_lap[0] + u0[1] * grad_lap[1];
        let adv = [u0[0] * q11 + u0[1] * q12, u0[0] * q12 + u0[1] * q22];
        let (ib, it) = self.inv2k();
        let c0 = omega * ib;
        let mut c = Column {
            q,
            u0,
            omega,
            grad_lap,
            bilap,
            qt,
            grad_qt,
            lap_qt,
            jac,
            adv,
            u1h_wall: [[Jet::ZERO; 2]; 2],
            defect: Jet::ZERO,
            c0,
            far_b: Far { u0: [Jet::ZERO; 2], u1: [Jet::ZERO; 3] },
            far_t: Far { u0: [Jet::ZERO; 2], u1: [Jet::ZERO; 3] },
        };
        let (v0, v1) = (self.vert.jets(0.0), self.vert.jets(1.0));
        c.u1h_wall = [self.u1h_at(&c, &v0).map(|j| j.horizontal()), self.u1h_at(&c, &v1).map(|j| j.horizontal())];
        let c1 = omega * it;
        c.defect = self.u13_raw(&c, &v1).horizontal() + c1;
        let far = |layer: &EkmanLayer, wall: [Jet; 2], sign: f64, inv2k: f64| {
            let (ec, es) = layer.envelope(1.0 / self.eps);
            let e = (-layer.k * (1.0 / self.eps)).exp();
            let u0f = spiral(Jet::constant(ec), Jet::constant(es), u0);
            let w = sign * ((Jet::constant(ec + es) * omega) * inv2k);
            Far { u0: u0f, u1: [-(wall[0] * e), -(wall[1] * e), w] }
        };
        c.far_b = far(&self.layers.0, c.u1h_wall[0], -1.0, ib);
        c.far_t = far(&self.layers.1, c.u1h_wall[1], 1.0, it);
        c
    }

    pub fn point(&self, c: &Column, z: f64) -> PointFields {
        let eps = self.eps;
        let v = self.vert.jets(z);
        let (ib, it) = self.inv2k();
        let bj = layer_jets(&self.layers.0, z / eps, 1.0 / eps);
        let tj = layer_jets(&self.layers.1, (1.0 - z) / eps, -1.0 / eps);
        let u1h = self.u1h_at(c, &v);
        let u13_raw = self.u13_raw(c, &v);
        let u13 = u13_raw - v.z * c.defect;
        let u0b = spiral(bj[0], bj[1], c.u0);
        let u0t = spiral(tj[0], tj[1], c.u0);
        let u13b = -(((bj[0] + bj[1]) * c.omega) * ib);
        let u13t = ((tj[0] + tj[1]) * c.omega) * it;
        let u1hb = [-(c.u1h_wall[0][0] * bj[2]), -(c.u1h_wall[0][1] * bj[2])];
        let u1ht = [-(c.u1h_wall[1][0] * tj[2]), -(c.u1h_wall[1][1] * tj[2])];
        let zj = v.z;
        let zc = Jet::constant(1.0) - zj;
        let lift0 = [0, 1].map(|i| zj * c.far_b.u0[i] + zc * c.far_t.u0[i]);
        let lift1 = [0, 1, 2].map(|i| zj * c.far_b.u1[i] + zc * c.far_t.u1[i]);
        let rho1 = c.q * v.b;
        let rho2 = (c.q * c.q) * v.r2;
        let rho = v.rho + eps * rho1 + (eps * eps) * rho2;

        // Two associations of the same sum: one cancels exactly at x₃ = 0,
        // the other at x₃ = 1; blending by (1 − x₃, x₃) keeps both traces zero.
        let mut u = [Jet::ZERO; 3];
        for i in 0..2 {
            let (bf, tf) = (c.far_b.u0[i], c.far_t.u0[i]);
            let (bf1, tf1) = (c.far_b.u1[i], c.far_t.u1[i]);
            let lo = (c.u0[i] + u0b[i]) + (u0t[i] - zc * tf) - zj * bf
                + eps * ((u1h[i] + u1hb[i]) + (u1ht[i] - zc * tf1) - zj * bf1);
            let hi = (c.u0[i] + u0t[i]) + (u0b[i] - zj * bf) - zc * tf
                + eps * ((u1h[i] + u1ht[i]) + (u1hb[i] - zj * bf1) - zc * tf1);
            u[i] = zc * lo + zj * hi;
        }
        let (bf, tf) = (c.far_b.u1[2], c.far_t.u1[2]);
        let lo = (u13 + u13b) + (u13t - zc * tf) - zj * bf;
        let hi = ((u13_raw + u13t) - zj * c.defect) + (u13b - zj * bf) - zc * tf;
        u[2] = eps * (zc * lo + zj * hi);

        PointFields {
            rho_bar: v.rho,
            rho1,
            rho2,
            rho,
            u0: c.u0,
            u0b,
            u0t,
            u1h,
            u13,
            u1hb,
            u1ht,
            u13b,
            u13t,
            lift0,
            lift1,
            u,
        }
    }

    /// Visits every point of the `n × n` grid shifted by `shift` cells at the
    /// heights `zs`, `x₁` fastest, then `x₂`, then `x₃`.
    pub fn for_each(&self, shift: [f64; 2], zs: &[f64], mut f: impl FnMut(usize, &PointFields)) {
        let n2 = self.n_h() * self.n_h();
        let tab = self.table(shift);
        let cols: Vec<Column> = (0..n2).map(|p| self.column(&tab, p)).collect();
        for (k, &z) in zs.iter().enumerate() {
            for (p, c) in cols.iter().enumerate() {
                f(p + n2 * k, &self.point(c, z));
            }
        }
    }

    /// Largest `ε` with `ε‖ρ₁‖∞ + ε²‖ρ₂‖∞ ≤ σ/2`.
    pub fn eps0(&self, sigma: f64) -> f64 {
        let (sb, sr) = self.vert.sup_b_r2();
        let q = self.sup_q();
        let (a, b) = (q * sb, q * q * sr);
        // Positive root of bε² + aε = σ/2, in cancellation-free form.
        let den = a + (a * a + 2.0 * b * sigma).sqrt();
        if den > 0.0 {
            sigma / den
        } else {
            f64::INFINITY
        }
    }
}

impl PointFields {
    /// `∂ₜρ + ∇·(ρu)`.
    pub fn mass(&self) -> f64 {
        let (r, u) = (&self.rho, &self.u);
        r.t + (0..3).map(|i| r.g[i] * u[i].v + r.v * u[i].g[i]).sum::<f64>()
    }

    /// `ρ̄∇ₕ·(u₁ₕ,b + u₁ₕ,t) + ∇ₕρ₁·(u₀b + u₀t) + ∂₃ρ̄(u₁₃b + u₁₃t)`.
    pub fn r_bl(&self) -> f64 {
        let div = (self.u1hb[0] + self.u1ht[0]).g[0] + (self.u1hb[1] + self.u1ht[1]).g[1];
        self.rho_bar.v * div
            + self.rho1.g[0] * (self.u0b[0] + self.u0t[0]).v
            + self.rho1.g[1] * (self.u0b[1] + self.u0t[1]).v
            + self.rho_bar.g[2] * (self.u13b + self.u13t).v
    }

    /// Momentum equation applied to the ansatz, gravity and viscosity moved
    /// to the left.
    pub fn momentum(&self, law: &PressureLaw, visc: &ViscosityParams, eps: f64) -> [f64; 3] {
        let (r, u) = (&self.rho, &self.u);
        let w = visc.weights();
        let cor = cross([u[0].v, u[1].v]);
        let pp = law.dp(r.v);
        [0, 1, 2].map(|i| {
            let adv: f64 = (0..3).map(|j| u[j].v * u[i].g[j]).sum();
            let grad_div: f64 = (0..3).map(|j| u[j].hess(i, j)).sum();
            let visc_term = w[0] * u[i].h[0] + w[1] * u[i].h[3] + w[2] * u[i].h[5];
            let grav = if i == 2 { r.v } else { 0.0 };
            r.v * (u[i].t + adv) + r.v * cor[i] / eps + (pp * r.g[i] + grav) / (eps * eps)
                - visc_term
                - visc.lambda * grad_div
        })
    }

    /// Taylor-remainder Coriolis forcing `ε⁻¹(ρ̄ − ρ̄(0))e₃×u₀b + ε⁻¹(ρ̄ − ρ̄(1))e₃×u₀t`.
    pub fn taylor_coriolis(&self, rho_walls: (f64, f64), eps: f64) -> [f64; 3] {
        let cb = cross([self.u0b[0].v, self.u0b[1].v]);
        let ct = cross([self.u0t[0].v, self.u0t[1].v]);
        let (db, dt) = (self.rho_bar.v - rho_walls.0, self.rho_bar.v - rho_walls.1);
        [0, 1, 2].map(|i| (db * cb[i] + dt * ct[i]) / eps)
    }

    /// Order-one boundary-layer forcing of the momentum equation.
    pub fn s_bl(&self, visc: &ViscosityParams, eps: f64) -> [f64; 3] {
        let rb = self.rho_bar.v;
        let u0 = [self.u0[0], self.u0[1], Jet::ZERO];
        let ub = [self.u0b[0] + self.u0t[0], self.u0b[1] + self.u0t[1], Jet::ZERO];
        let u1 = [self.u1hb[0] + self.u1ht[0], self.u1hb[1] + self.u1ht[1], self.u13b + self.u13t];
        let w3 = (self.u13 + self.u13b + self.u13t).v;
        let cor = cross([self.rho1.v * ub[0].v + rb * u1[0].v, self.rho1.v * ub[1].v + rb * u1[1].v]);
        [0, 1, 2].map(|i| {
            let mut conv = ub[i].t + w3 * eps * ub[i].g[2];
            for j in 0..2 {
                conv += u0[j].v * ub[i].g[j] + ub[j].v * u0[i].g[j] + ub[j].v * ub[i].g[j];
            }
            let lam = if i == 2 { visc.lambda * eps * (u1[0].hess(0, 2) + u1[1].hess(1, 2)) } else { 0.0 };
            rb * conv - visc.mu * ub[i].lap_h() - eps * eps * u1[i].h[5] - lam + cor[i]
        })
    }
}

/// Linear lift fields removed from the layers.
#[derive(Clone, Debug)]
pub struct Lifts {
    pub u0: VectorField3D,
    pub u1: VectorField3D,
}

/// The assembled approximate solution on the node grid `N_h² × (N₃ + 1)`.
pub struct AnsatzBundle {
    pub eps: f64,
    pub eps0: f64,
    pub sigma: f64,
    pub profile: HydrostaticProfile,
    pub qg: QGState,
    pub rho1: ScalarField3D,
    pub rho2: ScalarField3D,
    pub u1h: VectorField3D,
    pub u13: ScalarField3D,
    pub layers: (EkmanLayer, EkmanLayer),
    pub lifts: Lifts,
    pub rho_app: ScalarField3D,
    pub u_app: VectorField3D,
    pub eval: AnsatzEval,
}

fn node_grid(eval: &AnsatzEval, n3: usize) -> ([usize; 3], [f64; 3], Vec<f64>) {
    let n = eval.n_h();
    let zs = (0..=n3).map(|k| k as f64 / n3 as f64).collect();
    ([n, n, n3 + 1], [eval.dx(), eval.dx(), 1.0 / n3 as f64], zs)
}

impl AnsatzBundle {
    /// Samples every ingredient at the nodes. `σ = None` selects [`default_sigma`].
    pub fn new(eval: AnsatzEval, qg: &QGState, n3: usize, sigma: Option<f64>) -> Result<Self> {
        let profile = eval.vert.profile(n3)?;
        let sigma = sigma.unwrap_or_else(|| default_sigma(profile.kappa));
        if !(sigma > 0.0 && sigma < profile.kappa) {
            return config(format!("sigma = {sigma} must lie in (0, inf rho_bar = {})", profile.kappa));
        }
        let eps0 = eval.eps0(sigma);
        if eval.eps > eps0 {
            return domain(format!("eps = {} exceeds the validity bound eps0 = {eps0}", eval.eps));
        }
        let (dims, spacing, zs) = node_grid(&eval, n3);
        let s = || ScalarField3D::zeros(dims, spacing);
        let v = || VectorField3D::zeros(dims, spacing);
        let (mut rho1, mut rho2, mut u13, mut rho_app) = (s(), s(), s(), s());
        let (mut u1h, mut l0, mut l1, mut u_app) = (v(), v(), v(), v());
        eval.for_each([0.0, 0.0], &zs, |i, f| {
            rho1.data[i] = f.rho1.v;
            rho2.data[i] = f.rho2.v;
            u13.data[i] = f.u13.v;
            rho_app.data[i] = f.rho.v;
            for d in 0..2 {
                u1h.c[d][i] = f.u1h[d].v;
                l0.c[d][i] = f.lift0[d].v;
            }
            for d in 0..3 {
                l1.c[d][i] = f.lift1[d].v;
                u_app.c[d][i] = f.u[d].v;
            }
        });
        if let Some(m) = rho_app.data.iter().copied().reduce(f64::min) {
            if !(m > 0.0) {
                return Err(Error::Vacuum(format!("approximate density reaches {m}")));
            }
        }
        Ok(Self {
            eps: eval.eps,
            eps0,
            sigma,
            profile,
            qg: qg.clone(),
            rho1,
            rho2,
            u1h,
            u13,
            layers: eval.layers,
            lifts: Lifts { u0: l0, u1: l1 },
            rho_app,
            u_app,
            eval,
        })
    }

    pub fn n3(&self) -> usize {
        self.profile.n3()
    }
}

/// Samples `Q·ρ̄/P′(ρ̄)` on the profile nodes.
pub fn build_rho1(qg: &QGState, profile: &HydrostaticProfile, law: &PressureLaw) -> ScalarField3D {
    let n = qg.q.n;
    let b: Vec<f64> = profile.rho_bar.iter().map(|&r| r / law.dp(r)).collect();
    let dims = [n, n, b.len()];
    let mut out = ScalarField3D::zeros(dims, [qg.q.dx(), qg.q.dx(), profile.dz()]);
    for (k, bk) in b.iter().enumerate() {
        for p in 0..n * n {
            out.data[p + n * n * k] = qg.q.data[p] * bk;
        }
    }
    out
}

/// Integrates the second-order density ODE upward from `ρ₂(·,0) = 0`.
/// Since `ρ₁ = Q b(x₃)`, the solution is `Q² r₂(x₃)`, with `r₂` from a fine
/// RK4 table sharing the profile's bottom density.
pub fn build_rho2(rho1: &ScalarField3D, profile: &HydrostaticProfile, law: &PressureLaw) -> Result<ScalarField3D> {
    let n3 = profile.n3();
    if rho1.dims[2] != n3 + 1 {
        return Err(Error::Grid(format!("rho1 has {} levels, profile has {}", rho1.dims[2], n3 + 1)));
    }
    let vert = VerticalProfiles::new(law, profile.rho_bar[0], n3 * N_FINE.div_ceil(n3))?;
    let n2 = rho1.dims[0] * rho1.dims[1];
    let b0 = profile.rho_bar[0] / law.dp(profile.rho_bar[0]);
    let mut out = ScalarField3D::zeros(rho1.dims, rho1.spacing);
    for k in 0..=n3 {
        let r2 = vert.at(k as f64 / n3 as f64)[1];
        for p in 0..n2 {
            let q = rho1.data[p] / b0;
            out.data[p + n2 * k] = q * q * r2;
        }
    }
    Ok(out)
}

/// First-order velocity correctors `(u₁ₕ, u₁,₃)` on the profile nodes.
pub fn build_u1(
    qg: &QGState,
    params: &QGParams,
    profile: &HydrostaticProfile,
    law: &PressureLaw,
    visc: &ViscosityParams,
) -> Result<(VectorField3D, ScalarField3D)> {
    let n3 = profile.n3();
    let vert = VerticalProfiles::new(law, profile.rho_bar[0], n3 * N_FINE.div_ceil(n3))?;
    let eval = AnsatzEval::new(vert, qg, *params, *visc, visc.eps_visc)?;
    let (dims, spacing, zs) = node_grid(&eval, n3);
    let mut u1h = VectorField3D::zeros(dims, spacing);
    let mut u13 = ScalarField3D::zeros(dims, spacing);
    eval.for_each([0.0, 0.0], &zs, |i, f| {
        u1h.c[0][i] = f.u1h[0].v;
        u1h.c[1][i] = f.u1h[1].v;
        u13.data[i] = f.u13.v;
    });
    Ok((u1h, u13))
}

/// `(ρ_app, u_app)` on the node grid.
pub fn assemble(bundle: &AnsatzBundle) -> (ScalarField3D, VectorField3D) {
    (bundle.rho_app.clone(), bundle.u_app.clone())
}

/// Discrete geostrophic balance: `max` over `ρ̄u₀⊥ + P′(ρ̄)∇ₕρ₁` (spectral)
/// and `∂₃(P′(ρ̄)ρ₁) + ρ₁` (sixth-order differences).
pub fn geostrophic_residual(qg: &QGState, rho1: &ScalarField3D, profile: &HydrostaticProfile, law: &PressureLaw) -> f64 {
    let n = qg.q.n;
    let n2 = n * n;
    let n3 = profile.n3();
    let sp = Spectral2::new(n, qg.q.l);
    let qh = sp.fwd(&qg.q.data);
    let u0 = [sp.inv(&sp.deriv(&qh, 0, 1)).iter().map(|v| -v).collect::<Vec<_>>(), sp.inv(&sp.deriv(&qh, 1, 0))];
    let mut worst = 0.0f64;
    for k in 0..=n3 {
        let (r, pp) = (profile.rho_bar[k], law.dp(profile.rho_bar[k]));
        let level = &rho1.data[n2 * k..n2 * (k + 1)];
        let lh = sp.fwd(level);
        let g = [sp.inv(&sp.deriv(&lh, 1, 0)), sp.inv(&sp.deriv(&lh, 0, 1))];
        for p in 0..n2 {
            // u⁰⊥ = (−u₀,₂, u₀,₁)
            let perp = [-u0[1][p], u0[0][p]];
            for d in 0..2 {
                worst = worst.max((r * perp[d] + pp * g[d][p]).abs());
            }
        }
    }
    let h = profile.dz();
    let mut col = vec![0.0; n3 + 1];
    for p in 0..n2 {
        for (k, c) in col.iter_mut().enumerate() {
            *c = law.dp(profile.rho_bar[k]) * rho1.data[p + n2 * k];
        }
        for k in 3..n3.saturating_sub(2) {
            worst = worst.max((central_d6(&col, k, h) + rho1.data[p + n2 * k]).abs());
        }
    }
    worst
}

/// `max |∂₃[(P′(ρ̄)/ρ̄)ρ₁]|` by sixth-order differences.
pub fn qindep_residual(rho1: &ScalarField3D, profile: &HydrostaticProfile, law: &PressureLaw) -> f64 {
    let n2 = rho1.dims[0] * rho1.dims[1];
    let n3 = profile.n3();
    let h = profile.dz();
    let mut col = vec![0.0; n3 + 1];
    let mut worst = 0.0f64;
    for p in 0..n2 {
        for (k, c) in col.iter_mut().enumerate() {
            let r = profile.rho_bar[k];
            *c = law.dp(r) / r * rho1.data[p + n2 * k];
        }
        for k in 3..n3.saturating_sub(2) {
            worst = worst.max(central_d6(&col, k, h).abs());
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Norm {
    pub l2: f64,
    pub linf: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualNorms {
    pub mass: Norm,
    pub r_bl: Norm,
    pub mass_leftover: Norm,
    pub momentum: Norm,
    pub taylor: Norm,
    pub s_bl: Norm,
    pub momentum_leftover: Norm,
}

impl ResidualNorms {
    fn rows(&self) -> [(&'static str, Norm); 7] {
        [
            ("mass", self.mass),
            ("r_bl", self.r_bl),
            ("mass_leftover", self.mass_leftover),
            ("momentum", self.momentum),
            ("taylor_coriolis", self.taylor),
            ("s_bl", self.s_bl),
            ("momentum_leftover", self.momentum_leftover),
        ]
    }
}

pub struct AnsatzResidual {
    pub eps: f64,
    pub mass_res: ScalarField3D,
    pub mom_res: VectorField3D,
    pub mass_leftover: ScalarField3D,
    pub mom_leftover: VectorField3D,
    pub s_bl: VectorField3D,
    pub norms: ResidualNorms,
}

/// Rectangle rule in `x_h`, trapezoid in `x₃`, on pointwise magnitudes.
fn norm_of(mag: &[f64], dims: [usize; 3], spacing: [f64; 3]) -> Norm {
    let n2 = dims[0] * dims[1];
    let mut sq = 0.0;
    let mut linf = 0.0f64;
    for (i, m) in mag.iter().enumerate() {
        let k = i / n2;
        let w = if k == 0 || k + 1 == dims[2] { 0.5 } else { 1.0 };
        sq += w * m * m;
        linf = linf.max(m.abs());
    }
    Norm { l2: (sq * spacing[0] * spacing[1] * spacing[2]).sqrt(), linf }
}

/// Vertical resolution needed to resolve both layers at this `ε`.
pub fn min_levels(layers: &(EkmanLayer, EkmanLayer), eps: f64) -> usize {
    (8.0 / (layers.0.k.min(layers.1.k) * eps)).ceil() as usize
}

/// Residual of the compressible system on the node grid, with the known
/// boundary-layer forcings split off.
pub fn residual(bundle: &AnsatzBundle) -> Result<AnsatzResidual> {
    let eval = &bundle.eval;
    let eps = eval.eps;
    let n3 = bundle.n3();
    let need = min_levels(&eval.layers, eps);
    if n3 < need {
        return config(format!("N3 = {n3} does not resolve the Ekman layers at eps = {eps}; need N3 >= {need}"));
    }
    let (dims, spacing, zs) = node_grid(eval, n3);
    let total: usize = dims.iter().product();
    let walls = (eval.vert.rho0, eval.vert.rho_top());
    let mut mass = ScalarField3D::zeros(dims, spacing);
    let mut mass_left = ScalarField3D::zeros(dims, spacing);
    let mut mom = VectorField3D::zeros(dims, spacing);
    let mut mom_left = VectorField3D::zeros(dims, spacing);
    let mut sbl = VectorField3D::zeros(dims, spacing);
    let mut mags = vec![vec![0.0; total]; 4];
    eval.for_each([0.0, 0.0], &zs, |i, f| {
        let m = f.mass();
        let r = f.r_bl();
        mass.data[i] = m;
        mass_left.data[i] = m - eps * r;
        mags[0][i] = r;
        let mo = f.momentum(&eval.law, &eval.visc, eps);
        let t = f.taylor_coriolis(walls, eps);
        let s = f.s_bl(&eval.visc, eps);
        for d in 0..3 {
            mom.c[d][i] = mo[d];
            sbl.c[d][i] = s[d];
            mom_left.c[d][i] = mo[d] - t[d] - s[d];
        }
        mags[1][i] = mo.iter().map(|x| x * x).sum::<f64>().sqrt();
        mags[2][i] = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        mags[3][i] = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    });
    let vmag = |v: &VectorField3D| -> Vec<f64> {
        (0..total).map(|i| (v.c[0][i].powi(2) + v.c[1][i].powi(2) + v.c[2][i].powi(2)).sqrt()).collect()
    };
    let norms = ResidualNorms {
        mass: norm_of(&mass.data, dims, spacing),
        r_bl: norm_of(&mags[0], dims, spacing),
        mass_leftover: norm_of(&mass_left.data, dims, spacing),
        momentum: norm_of(&mags[1], dims, spacing),
        taylor: norm_of(&mags[2], dims, spacing),
        s_bl: norm_of(&mags[3], dims, spacing),
        momentum_leftover: norm_of(&vmag(&mom_left), dims, spacing),
    };
    Ok(AnsatzResidual { eps, mass_res: mass, mom_res: mom, mass_leftover: mass_left, mom_leftover: mom_left, s_bl: sbl, norms })
}

/// Rows `eps, component, norm, value`.
pub fn write_residual_csv<W: std::io::Write>(rows: &[(f64, ResidualNorms)], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["eps", "component", "norm", "value"])?;
    for (eps, n) in rows {
        for (name, v) in n.rows() {
            for (kind, x) in [("l2", v.l2), ("linf", v.linf)] {
                wr.write_record(&[format!("{eps:.17e}"), name.to_string(), kind.to_string(), format!("{x:.17e}")])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests;
