//! Periodic spectral operators: anisotropic Laplacian and Lamé operator,
//! Leray projectors, the density commutator, the 2D div-curl inversion and
//! the anisotropic Sobolev ratio.

pub mod fft;
pub mod fields;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use fft::{mode_index, wavenumbers, FftPlan};
pub use fields::{ScalarField2D, ScalarField3D, VectorField2D, VectorField3D};

use crate::error::{config, domain, Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityParams {
    pub mu: f64,
    pub eps_visc: f64,
    pub lambda: f64,
}

impl ViscosityParams {
    pub fn new(mu: f64, eps_visc: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0 && eps_visc > 0.0 && lambda > 0.0) {
            return config(format!("viscosities must be positive: mu={mu} eps={eps_visc} lambda={lambda}"));
        }
        Ok(Self { mu, eps_visc, lambda })
    }

    /// Per-axis weights of `Δ_{μ,ε}`.
    pub fn weights(&self) -> [f64; 3] {
        [self.mu, self.mu, self.eps_visc]
    }
}

/// Transform helper for a periodic square with 2/3-rule dealiasing.
pub struct Spectral2 {
    pub n: usize,
    pub l: f64,
    pub k: Vec<f64>,
    plan: FftPlan,
    cutoff: i64,
}

impl Spectral2 {
    pub fn new(n: usize, l: f64) -> Self {
        Self { n, l, k: wavenumbers(n, l), plan: FftPlan::new(&[n, n]), cutoff: ((n - 1) / 3) as i64 }
    }

    pub fn fwd(&self, f: &[f64]) -> Vec<Complex64> {
        self.plan.forward_real(f)
    }

    pub fn inv(&self, s: &[Complex64]) -> Vec<f64> {
        self.plan.inverse_real(s)
    }

    #[inline]
    pub fn kx(&self, idx: usize) -> f64 {
        self.k[idx % self.n]
    }

    #[inline]
    pub fn ky(&self, idx: usize) -> f64 {
        self.k[idx / self.n]
    }

    pub fn ksq(&self, idx: usize) -> f64 {
        let (a, b) = (self.kx(idx), self.ky(idx));
        a * a + b * b
    }

    /// True if the mode survives 2/3-rule truncation.
    pub fn kept(&self, idx: usize) -> bool {
        let (i, j) = (idx % self.n, idx / self.n);
        mode_index(i, self.n).abs() <= self.cutoff && mode_index(j, self.n).abs() <= self.cutoff
    }

    pub fn dealias(&self, s: &mut [Complex64]) {
        for (idx, v) in s.iter_mut().enumerate() {
            if !self.kept(idx) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `∂₁^a ∂₂^b` applied to a spectrum.
    pub fn deriv(&self, s: &[Complex64], a: u32, b: u32) -> Vec<Complex64> {
        s.iter()
            .enumerate()
            .map(|(idx, &v)| v * (I * self.kx(idx)).powu(a) * (I * self.ky(idx)).powu(b))
            .collect()
    }

    /// Physical values of `∂₁^a ∂₂^b f` at the grid shifted by `(sx, sy)` cells.
    pub fn deriv_shifted(&self, s: &[Complex64], a: u32, b: u32, sx: f64, sy: f64) -> Vec<f64> {
        let h = self.l / self.n as f64;
        let d: Vec<Complex64> = s
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let (kx, ky) = (self.kx(idx), self.ky(idx));
                v * (I * kx).powu(a) * (I * ky).powu(b) * Complex64::from_polar(1.0, (kx * sx + ky * sy) * h)
            })
            .collect();
        self.inv(&d)
    }

    pub fn lap(&self, s: &[Complex64]) -> Vec<Complex64> {
        s.iter().enumerate().map(|(idx, &v)| -self.ksq(idx) * v).collect()
    }

    /// Zero-mean inverse Laplacian.
    pub fn inv_lap(&self, s: &[Complex64]) -> Vec<Complex64> {
        s.iter()
            .enumerate()
            .map(|(idx, &v)| {
                let q = self.ksq(idx);
                if q == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    -v / q
                }
            })
            .collect()
    }

    /// `⟨f, g⟩ = ∫ f g` from spectra (Parseval, rectangle rule).
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        let n2 = (self.n * self.n) as f64;
        let h = self.l / self.n as f64;
        a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum::<f64>() / n2 * h * h
    }
}

/// Transform helper for a fully periodic box.
pub struct Spectral3 {
    pub dims: [usize; 3],
    pub k: [Vec<f64>; 3],
    plan: FftPlan,
}

impl Spectral3 {
    pub fn new(dims: [usize; 3], lens: [f64; 3]) -> Self {
        Self {
            dims,
            k: [wavenumbers(dims[0], lens[0]), wavenumbers(dims[1], lens[1]), wavenumbers(dims[2], lens[2])],
            plan: FftPlan::new(&dims),
        }
    }

    fn for_field(f: &ScalarField3D) -> Result<Self> {
        for &n in &f.dims {
            if !(n >= 2 && n.is_power_of_two()) {
                return config(format!("periodic grid size {n} is not a power of two"));
            }
        }
        let lens = [0, 1, 2].map(|d| f.spacing[d] * f.dims[d] as f64);
        Ok(Self::new(f.dims, lens))
    }

    #[inline]
    pub fn wave(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [self.k[0][i], self.k[1][j], self.k[2][k]]
    }

    pub fn fwd(&self, f: &[f64]) -> Vec<Complex64> {
        self.plan.forward_real(f)
    }

    pub fn inv(&self, s: &[Complex64]) -> Vec<f64> {
        self.plan.inverse_real(s)
    }

    /// Applies a Fourier multiplier `m(k)`.
    pub fn apply(&self, s: &[Complex64], m: impl Fn([f64; 3]) -> Complex64) -> Vec<Complex64> {
        s.iter().enumerate().map(|(idx, &v)| v * m(self.wave(idx))).collect()
    }

    fn filter(&self, f: &[f64], m: impl Fn([f64; 3]) -> Complex64) -> Vec<f64> {
        self.inv(&self.apply(&self.fwd(f), m))
    }
}

fn ksq(k: [f64; 3]) -> f64 {
    k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
}

fn inv_ksq(k: [f64; 3]) -> f64 {
    let q = ksq(k);
    if q == 0.0 {
        0.0
    } else {
        1.0 / q
    }
}

/// Vertical boundary treatment for `aniso_laplacian`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerticalBc {
    /// Field covers one vertical period.
    Periodic,
    /// Slab nodes `0..=N₃`, odd (sine) extension across both walls.
    Odd,
    /// Slab nodes `0..=N₃`, even (cosine) extension across both walls.
    Even,
}

/// `μΔ_h f + ε∂₃² f`, spectrally exact for band-limited `f`.
pub fn aniso_laplacian(f: &ScalarField3D, p: &ViscosityParams, bc: VerticalBc) -> Result<ScalarField3D> {
    let symbol = |k: [f64; 3]| Complex64::new(-(p.mu * (k[0] * k[0] + k[1] * k[1]) + p.eps_visc * k[2] * k[2]), 0.0);
    match bc {
        VerticalBc::Periodic => {
            let sp = Spectral3::for_field(f)?;
            Ok(ScalarField3D { dims: f.dims, spacing: f.spacing, data: sp.filter(&f.data, symbol) })
        }
        VerticalBc::Odd | VerticalBc::Even => {
            let [nx, ny, nodes] = f.dims;
            let nz = nodes - 1;
            let sign = if bc == VerticalBc::Odd { -1.0 } else { 1.0 };
            let ext_dims = [nx, ny, 2 * nz];
            let mut ext = ScalarField3D::zeros(ext_dims, f.spacing);
            for k in 0..2 * nz {
                let (src, s) = if k <= nz { (k, 1.0) } else { (2 * nz - k, sign) };
                for j in 0..ny {
                    for i in 0..nx {
                        ext.data[i + nx * (j + ny * k)] = s * f.data[f.idx(i, j, src)];
                    }
                }
            }
            let sp = Spectral3::for_field(&ext)?;
            let out = sp.filter(&ext.data, symbol);
            let mut r = ScalarField3D::zeros(f.dims, f.spacing);
            r.data.copy_from_slice(&out[..nx * ny * nodes]);
            Ok(r)
        }
    }
}

fn spectra(u: &VectorField3D, sp: &Spectral3) -> [Vec<Complex64>; 3] {
    [sp.fwd(&u.c[0]), sp.fwd(&u.c[1]), sp.fwd(&u.c[2])]
}

fn back(sp: &Spectral3, s: &[Vec<Complex64>; 3], like: &VectorField3D) -> VectorField3D {
    VectorField3D { dims: like.dims, spacing: like.spacing, c: [sp.inv(&s[0]), sp.inv(&s[1]), sp.inv(&s[2])] }
}

fn periodic_plan(u: &VectorField3D) -> Result<Spectral3> {
    Spectral3::for_field(&ScalarField3D { dims: u.dims, spacing: u.spacing, data: Vec::new() })
}

/// `Lu = −Δ_{μ,ε}u − λ∇(∇·u)` on a periodic box.
pub fn lame(u: &VectorField3D, p: &ViscosityParams) -> Result<VectorField3D> {
    let sp = periodic_plan(u)?;
    let s = spectra(u, &sp);
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (d, o) in out.iter_mut().enumerate() {
        *o = (0..s[0].len())
            .map(|idx| {
                let k = sp.wave(idx);
                let div = I * (k[0] * s[0][idx] + k[1] * s[1][idx] + k[2] * s[2][idx]);
                let lap = p.mu * (k[0] * k[0] + k[1] * k[1]) + p.eps_visc * k[2] * k[2];
                lap * s[d][idx] - p.lambda * I * k[d] * div
            })
            .collect();
    }
    Ok(back(&sp, &out, u))
}

/// Gradient part `Q = −∇(−Δ)⁻¹∇·`; the mean stays with `P`.
pub fn leray_q(u: &VectorField3D) -> Result<VectorField3D> {
    let sp = periodic_plan(u)?;
    let s = spectra(u, &sp);
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (d, o) in out.iter_mut().enumerate() {
        *o = (0..s[0].len())
            .map(|idx| {
                let k = sp.wave(idx);
                let kdotu = k[0] * s[0][idx] + k[1] * s[1][idx] + k[2] * s[2][idx];
                k[d] * kdotu * inv_ksq(k)
            })
            .collect();
    }
    Ok(back(&sp, &out, u))
}

pub fn leray_p(u: &VectorField3D) -> Result<VectorField3D> {
    Ok(u.sub(&leray_q(u)?))
}

/// Spectral divergence on a periodic box.
pub fn divergence(u: &VectorField3D) -> Result<ScalarField3D> {
    let sp = periodic_plan(u)?;
    let s = spectra(u, &sp);
    let d: Vec<Complex64> = (0..s[0].len())
        .map(|idx| {
            let k = sp.wave(idx);
            I * (k[0] * s[0][idx] + k[1] * s[1][idx] + k[2] * s[2][idx])
        })
        .collect();
    Ok(ScalarField3D { dims: u.dims, spacing: u.spacing, data: sp.inv(&d) })
}

/// The two evaluations of the density commutator, per component of `h`.
#[derive(Clone, Debug)]
pub struct CommutatorPair {
    /// `(ρ̄′/ρ̄²)(∂₃(−Δ)⁻¹Δ_{μ,ε}h + ε∂₃h)`.
    pub closed_form: VectorField3D,
    /// `∇·([1/ρ̄, Q]∇_{μ²,ε²}h)`, the projector acting on the derivative index.
    pub defining: VectorField3D,
    /// `−∇_{μ,ε}·([1/ρ̄, P]∇_{μ,ε}h)` taken literally; equals the others only
    /// when `μ = ε`.
    pub literal: VectorField3D,
}

/// `rho_bar` holds `ρ̄(x₃)` at the `dims[2]` vertical points of the periodic box.
pub fn commutator_c(h: &VectorField3D, rho_bar: &[f64], p: &ViscosityParams) -> Result<CommutatorPair> {
    let sp = periodic_plan(h)?;
    let [nx, ny, nz] = h.dims;
    if rho_bar.len() != nz {
        return Err(Error::Grid(format!("rho_bar has {} samples, expected {nz}", rho_bar.len())));
    }
    let kappa = rho_bar.iter().copied().fold(f64::INFINITY, f64::min);
    if !(kappa > 0.0) {
        return domain(format!("rho_bar lower bound {kappa} is not positive"));
    }
    // ρ̄′ spectrally from the periodic samples.
    let lz = h.spacing[2] * nz as f64;
    let col = FftPlan::new(&[nz]);
    let kz = wavenumbers(nz, lz);
    let rs = col.forward_real(rho_bar);
    let drs: Vec<Complex64> = rs.iter().zip(&kz).map(|(v, k)| v * I * k).collect();
    let drho = col.inverse_real(&drs);
    let w: Vec<f64> = rho_bar.iter().map(|r| 1.0 / r).collect();
    let coef: Vec<f64> = rho_bar.iter().zip(&drho).map(|(r, d)| d / (r * r)).collect();
    let plane = nx * ny;
    let wz = |v: &mut [f64], f: &[f64]| {
        for (idx, x) in v.iter_mut().enumerate() {
            *x *= f[idx / plane];
        }
    };
    let wt = p.weights();
    let sq = wt.map(f64::sqrt);

    let mut closed = VectorField3D::zeros(h.dims, h.spacing);
    let mut defining = VectorField3D::zeros(h.dims, h.spacing);
    let mut literal = VectorField3D::zeros(h.dims, h.spacing);
    for c in 0..3 {
        let hs = sp.fwd(&h.c[c]);

        // ∂₃(−Δ)⁻¹Δ_{μ,ε} has symbol ik₃·(−Σ w_d k_d²)/|k|².
        let mut a = sp.inv(&sp.apply(&hs, |k| {
            let lme = -(wt[0] * k[0] * k[0] + wt[1] * k[1] * k[1] + wt[2] * k[2] * k[2]);
            I * k[2] * lme * inv_ksq(k)
        }));
        let b = sp.inv(&sp.apply(&hs, |k| I * k[2] * p.eps_visc));
        for (x, y) in a.iter_mut().zip(&b) {
            *x += y;
        }
        wz(&mut a, &coef);
        closed.c[c] = a;

        defining.c[c] = commutator_q_form(&sp, &hs, &w, &wt, plane);
        literal.c[c] = commutator_p_form(&sp, &hs, &w, &sq, plane);
    }
    Ok(CommutatorPair { closed_form: closed, defining, literal })
}

/// `∇·(w Q g − Q(w g))` with `g = (w₁∂₁, w₂∂₂, w₃∂₃)h`.
fn commutator_q_form(sp: &Spectral3, hs: &[Complex64], w: &[f64], wt: &[f64; 3], plane: usize) -> Vec<f64> {
    let g: [Vec<Complex64>; 3] = [0, 1, 2].map(|d| sp.apply(hs, |k| I * k[d] * wt[d]));
    let qg = project_q(sp, &g);
    let mut diff = [Vec::new(), Vec::new(), Vec::new()];
    let mut wg = [Vec::new(), Vec::new(), Vec::new()];
    for d in 0..3 {
        let mut x = sp.inv(&qg[d]);
        scale_z(&mut x, w, plane);
        diff[d] = x;
        let mut y = sp.inv(&g[d]);
        scale_z(&mut y, w, plane);
        wg[d] = y;
    }
    let wgs = [sp.fwd(&wg[0]), sp.fwd(&wg[1]), sp.fwd(&wg[2])];
    let qwg = project_q(sp, &wgs);
    let mut div = vec![Complex64::new(0.0, 0.0); hs.len()];
    for d in 0..3 {
        let a = sp.fwd(&diff[d]);
        for (idx, v) in div.iter_mut().enumerate() {
            let k = sp.wave(idx);
            *v += I * k[d] * (a[idx] - qwg[d][idx]);
        }
    }
    sp.inv(&div)
}

/// `−∇_{μ,ε}·(w P g − P(w g))` with `g = ∇_{μ,ε}h`.
fn commutator_p_form(sp: &Spectral3, hs: &[Complex64], w: &[f64], sq: &[f64; 3], plane: usize) -> Vec<f64> {
    let g: [Vec<Complex64>; 3] = [0, 1, 2].map(|d| sp.apply(hs, |k| I * k[d] * sq[d]));
    let qg = project_q(sp, &g);
    let pg: [Vec<Complex64>; 3] =
        [0, 1, 2].map(|d| g[d].iter().zip(&qg[d]).map(|(a, b)| a - b).collect::<Vec<_>>());
    let mut wpg = [Vec::new(), Vec::new(), Vec::new()];
    let mut wg = [Vec::new(), Vec::new(), Vec::new()];
    for d in 0..3 {
        let mut x = sp.inv(&pg[d]);
        scale_z(&mut x, w, plane);
        wpg[d] = x;
        let mut y = sp.inv(&g[d]);
        scale_z(&mut y, w, plane);
        wg[d] = y;
    }
    let wgs = [sp.fwd(&wg[0]), sp.fwd(&wg[1]), sp.fwd(&wg[2])];
    let qwg = project_q(sp, &wgs);
    let mut div = vec![Complex64::new(0.0, 0.0); hs.len()];
    for d in 0..3 {
        let a = sp.fwd(&wpg[d]);
        for (idx, v) in div.iter_mut().enumerate() {
            let k = sp.wave(idx);
            let pwg = wgs[d][idx] - qwg[d][idx];
            *v -= I * k[d] * sq[d] * (a[idx] - pwg);
        }
    }
    sp.inv(&div)
}

fn scale_z(v: &mut [f64], w: &[f64], plane: usize) {
    for (idx, x) in v.iter_mut().enumerate() {
        *x *= w[idx / plane];
    }
}

fn project_q(sp: &Spectral3, g: &[Vec<Complex64>; 3]) -> [Vec<Complex64>; 3] {
    let n = g[0].len();
    let mut out = [vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n]];
    for idx in 0..n {
        let k = sp.wave(idx);
        let kd = k[0] * g[0][idx] + k[1] * g[1][idx] + k[2] * g[2][idx];
        let s = inv_ksq(k);
        for d in 0..3 {
            out[d][idx] = k[d] * kd * s;
        }
    }
    out
}

/// Solves `∇⊥·F = a`, `∇·F = b` on the periodic square:
/// `F = −∇⊥(−Δ)⁻¹a − ∇(−Δ)⁻¹b`.
pub fn helmholtz_2d(a: &ScalarField2D, b: &ScalarField2D) -> Result<VectorField2D> {
    if a.n != b.n || a.l != b.l {
        return Err(Error::Grid("helmholtz inputs on different grids".into()));
    }
    for (name, f) in [("curl", a), ("divergence", b)] {
        if f.mean().abs() > 1e-12 * f.max_abs().max(1.0) {
            return domain(format!("{name} data has nonzero mean {}", f.mean()));
        }
    }
    let sp = Spectral2::new(a.n, a.l);
    let sa = sp.fwd(&a.data);
    let sb = sp.fwd(&b.data);
    // (−Δ)⁻¹ has symbol 1/|k|².
    let psi: Vec<Complex64> = sp.inv_lap(&sa).into_iter().map(|v| -v).collect();
    let phi: Vec<Complex64> = sp.inv_lap(&sb).into_iter().map(|v| -v).collect();
    let fx: Vec<Complex64> = (0..sa.len())
        .map(|idx| I * sp.ky(idx) * psi[idx] - I * sp.kx(idx) * phi[idx])
        .collect();
    let fy: Vec<Complex64> = (0..sa.len())
        .map(|idx| -I * sp.kx(idx) * psi[idx] - I * sp.ky(idx) * phi[idx])
        .collect();
    Ok(VectorField2D { n: a.n, l: a.l, x: sp.inv(&fx), y: sp.inv(&fy) })
}

/// Norms entering the anisotropic Sobolev inequality on the slab.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnisoNorms {
    pub l6: f64,
    pub grad_h: f64,
    pub d3: f64,
}

fn trapezoid_weights(nodes: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; nodes];
    w[0] = 0.5 * h;
    w[nodes - 1] = 0.5 * h;
    w
}

/// Fourth-order vertical derivative on slab nodes.
fn d3_fourth(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5);
    let mut d = vec![0.0; n];
    for k in 2..n - 2 {
        d[k] = (-f[k + 2] + 8.0 * f[k + 1] - 8.0 * f[k - 1] + f[k - 2]) / (12.0 * h);
    }
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
    let m = n - 1;
    d[m] = (25.0 * f[m] - 48.0 * f[m - 1] + 36.0 * f[m - 2] - 16.0 * f[m - 3] + 3.0 * f[m - 4]) / (12.0 * h);
    d[m - 1] = (3.0 * f[m] + 10.0 * f[m - 1] - 18.0 * f[m - 2] + 6.0 * f[m - 3] - f[m - 4]) / (12.0 * h);
    d
}

/// `u` sampled on slab nodes `dims = [n, n, N₃+1]`, periodic horizontally.
pub fn aniso_norms(u: &VectorField3D) -> Result<AnisoNorms> {
    let [nx, ny, nodes] = u.dims;
    if nx != ny || !nx.is_power_of_two() || nodes < 5 {
        return config("slab field needs a square power-of-two horizontal grid and at least 5 levels");
    }
    let [dx, _, dz] = u.spacing;
    let sp = Spectral2::new(nx, dx * nx as f64);
    let plane = nx * ny;
    let wz = trapezoid_weights(nodes, dz);
    let area = dx * dx;
    let (mut s6, mut sg, mut s3) = (0.0, 0.0, 0.0);
    for c in 0..3 {
        let f = &u.c[c];
        for k in 0..nodes {
            let lvl = &f[k * plane..(k + 1) * plane];
            let s = sp.fwd(lvl);
            let gx = sp.inv(&sp.deriv(&s, 1, 0));
            let gy = sp.inv(&sp.deriv(&s, 0, 1));
            sg += wz[k] * area * gx.iter().zip(&gy).map(|(a, b)| a * a + b * b).sum::<f64>();
        }
        let mut col = vec![0.0; nodes];
        for p in 0..plane {
            for (k, c) in col.iter_mut().enumerate() {
                *c = f[p + k * plane];
            }
            let d = d3_fourth(&col, dz);
            s3 += area * d.iter().zip(&wz).map(|(v, w)| w * v * v).sum::<f64>();
        }
    }
    for k in 0..nodes {
        for p in 0..plane {
            let idx = p + k * plane;
            let m2 = u.c[0][idx].powi(2) + u.c[1][idx].powi(2) + u.c[2][idx].powi(2);
            s6 += wz[k] * area * m2 * m2 * m2;
        }
    }
    Ok(AnisoNorms { l6: s6.powf(1.0 / 6.0), grad_h: sg.sqrt(), d3: s3.sqrt() })
}

/// `‖u‖_{L⁶} / (κ^{-1/2}‖∇_h u‖_{L²} + κ‖∂₃u‖_{L²})`.
pub fn aniso_sobolev_ratio(u: &VectorField3D, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return domain(format!("kappa must be positive, got {kappa}"));
    }
    let n = aniso_norms(u)?;
    ratio_from_norms(&n, kappa)
}

pub fn ratio_from_norms(n: &AnisoNorms, kappa: f64) -> Result<f64> {
    let den = n.grad_h / kappa.sqrt() + kappa * n.d3;
    if n.l6 == 0.0 || den == 0.0 {
        return domain("ratio undefined for the zero field");
    }
    Ok(n.l6 / den)
}

/// Minimizer of the denominator, `κ* = (‖∇_h u‖ / (2‖∂₃u‖))^{2/3}`.
pub fn optimal_kappa(n: &AnisoNorms) -> f64 {
    (n.grad_h / (2.0 * n.d3)).powf(2.0 / 3.0)
}

/// Upper bound on every ratio: the sharp isotropic Sobolev constant applied
/// to all horizontal dilations of `u`, optimized over the dilation.
pub fn sobolev_ceiling() -> f64 {
    let pi = std::f64::consts::PI;
    // Γ(3)/Γ(3/2) = 4/√π.
    let k3 = 1.0 / (3.0 * pi).sqrt() * (4.0 / pi.sqrt()).powf(1.0 / 3.0);
    k3 / (1.5f64.sqrt() * 2f64.powf(1.0 / 6.0))
}

#[cfg(test)]
mod tests;
