//! Staggered (MAC) finite-volume solver for the scaled compressible rotating
//! system on the slab `[0,L)² × [0,1]`, periodic in `x_h`, no-slip at
//! `x₃ ∈ {0, 1}`.
//!
//! Layout: `ρ` at cell centres `(i, j, k+½)`, `u₁` at `(i+½, j, k+½)`, `u₂` at
//! `(i, j+½, k+½)`, `u₃` at `(i, j, k)` for `k = 0..=N₃` (wall entries stay
//! zero). All arrays are `x₁` fastest, then `x₂`, then `x₃`.
//!
//! One step is backward Euler in every term, solved by Gauss–Seidel
//! iteration between the mass and momentum updates. Pressure and gravity
//! enter as `ε⁻² ρ_σ ∇ψ` with `ψ = H′(ρ) − H′(ρ̄)` and the same face density
//! `ρ_σ` as the mass flux, so the rest state is exact and the discrete energy
//! `½Σρ_D|u|² + ε⁻²ΣE(ρ, ρ̄)` plus viscous dissipation cannot increase.

use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzEval, VerticalProfiles};
use crate::error::{config, Error, Result};
use crate::pressure::PressureLaw;
use crate::spectral_ops::{ScalarField3D, ViscosityParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacGrid {
    pub n: usize,
    pub nz: usize,
    pub l_h: f64,
}

impl MacGrid {
    pub fn new(n: usize, nz: usize, l_h: f64) -> Result<Self> {
        if !(n >= 4 && n.is_power_of_two() && nz >= 4 && nz.is_power_of_two()) {
            return config(format!("grid sizes must be powers of two >= 4, got {n}x{n}x{nz}"));
        }
        if !(l_h > 0.0) {
            return config(format!("horizontal period must be positive, got {l_h}"));
        }
        Ok(Self { n, nz, l_h })
    }

    pub fn dx(&self) -> f64 {
        self.l_h / self.n as f64
    }

    pub fn dz(&self) -> f64 {
        1.0 / self.nz as f64
    }

    pub fn cells(&self) -> usize {
        self.n * self.n * self.nz
    }

    pub fn vol(&self) -> f64 {
        self.dx() * self.dx() * self.dz()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Cell-centre heights.
    pub fn z_cells(&self) -> Vec<f64> {
        (0..self.nz).map(|k| (k as f64 + 0.5) * self.dz()).collect()
    }

    /// Heights of the horizontal faces, walls included.
    pub fn z_nodes(&self) -> Vec<f64> {
        (0..=self.nz).map(|k| k as f64 * self.dz()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow3DState {
    pub grid: MacGrid,
    pub rho: Vec<f64>,
    pub u: [Vec<f64>; 3],
    pub t: f64,
    pub eps: f64,
    /// Running `∫∫(μ|∇ₕu|² + ε|∂₃u|² + λ|∇·u|²)`.
    pub dissipation: f64,
}

impl Flow3DState {
    pub fn rest(grid: MacGrid, rho_bar: &[f64], eps: f64) -> Result<Self> {
        if rho_bar.len() != grid.nz {
            return Err(Error::Grid(format!("{} profile values for {} layers", rho_bar.len(), grid.nz)));
        }
        let n2 = grid.n * grid.n;
        let rho = (0..grid.cells()).map(|c| rho_bar[c / n2]).collect();
        let nc = grid.cells();
        Ok(Self { grid, rho, u: [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc + n2]], t: 0.0, eps, dissipation: 0.0 })
    }

    pub fn total_mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.grid.vol()
    }

    pub fn rho_field(&self) -> ScalarField3D {
        let g = &self.grid;
        ScalarField3D { dims: [g.n, g.n, g.nz], spacing: [g.dx(), g.dx(), g.dz()], data: self.rho.clone() }
    }

    /// Component `d` as a field on its own staggered grid.
    pub fn u_field(&self, d: usize) -> ScalarField3D {
        let g = &self.grid;
        let nz = if d == 2 { g.nz + 1 } else { g.nz };
        ScalarField3D { dims: [g.n, g.n, nz], spacing: [g.dx(), g.dx(), g.dz()], data: self.u[d].clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coriolis {
    Off,
    /// Inside the implicit step.
    Implicit,
    /// Strang-split Cayley rotation around the implicit step.
    Rotation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub pressure: bool,
    pub viscosity: bool,
    pub advection: bool,
    pub coriolis: Coriolis,
    pub frozen_density: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Self { pressure: true, viscosity: true, advection: true, coriolis: Coriolis::Implicit, frozen_density: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ns3dParams {
    pub law: PressureLaw,
    pub visc: ViscosityParams,
    pub eps: f64,
    pub dt: f64,
    /// Upwind weight of the face density: 1 upwind, 0 centred.
    pub upwind: f64,
    pub physics: Physics,
    pub tol: f64,
    pub max_iter: usize,
}

impl Ns3dParams {
    pub fn new(law: PressureLaw, visc: ViscosityParams, eps: f64, dt: f64) -> Result<Self> {
        if !(eps > 0.0 && dt > 0.0) {
            return config(format!("eps and dt must be positive, got eps={eps} dt={dt}"));
        }
        Ok(Self { law, visc, eps, dt, upwind: 1.0, physics: Physics::default(), tol: 1e-13, max_iter: 200 })
    }
}

/// `dt = cfl · min(ε·h/c_max, h/|u|_max)` with `c = √P′(ρ)`.
pub fn stable_dt(state: &Flow3DState, law: &PressureLaw, cfl: f64) -> f64 {
    let g = &state.grid;
    let h = g.dx().min(g.dz());
    let c = state.rho.iter().fold(0.0f64, |m, &r| m.max(law.dp(r).sqrt()));
    let umax = state.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut dt = state.eps * h / c;
    if umax > 0.0 {
        dt = dt.min(h / umax);
    }
    cfl * dt
}

pub struct Ns3dSolver {
    pub grid: MacGrid,
    pub params: Ns3dParams,
    pub rho_bar: Vec<f64>,
    h1_bar: Vec<f64>,
}

/// Face densities and mass fluxes on the three face families.
struct Fluxes {
    rs: [Vec<f64>; 3],
    f: [Vec<f64>; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub t: f64,
    pub kinetic: f64,
    pub potential_entropy: f64,
    pub dissipation: f64,
    pub total: f64,
}

impl Ns3dSolver {
    pub fn new(grid: MacGrid, params: Ns3dParams, rho_bar: Vec<f64>) -> Result<Self> {
        if rho_bar.len() != grid.nz {
            return Err(Error::Grid(format!("{} profile values for {} layers", rho_bar.len(), grid.nz)));
        }
        let h1_bar = rho_bar.iter().map(|&r| params.law.h1(r)).collect();
        Ok(Self { grid, params, rho_bar, h1_bar })
    }

    /// Cell-centre profile from a vertical table.
    pub fn from_profiles(grid: MacGrid, params: Ns3dParams, vert: &VerticalProfiles) -> Result<Self> {
        let rb = grid.z_cells().iter().map(|&z| vert.rho_bar(z)).collect();
        Self::new(grid, params, rb)
    }

    fn dual_rho(&self, rho: &[f64]) -> [Vec<f64>; 3] {
        face_density(&self.grid, rho)
    }

    fn fluxes(&self, rho: &[f64], u: &[Vec<f64>; 3], dir: &[Vec<f64>; 3]) -> Fluxes {
        let g = &self.grid;
        let (n, nz) = (g.n, g.nz);
        let th = 0.5 * self.params.upwind;
        let face = |a: f64, b: f64, s: f64| {
            // `a` upstream when s ≥ 0.
            let w = if s >= 0.0 { 0.5 + th } else { 0.5 - th };
            w * a + (1.0 - w) * b
        };
        let mut rs = [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n * n]];
        for k in 0..nz {
            for j in 0..n {
                for i in 0..n {
                    let c = g.idx(i, j, k);
                    rs[0][c] = face(rho[c], rho[g.idx((i + 1) % n, j, k)], dir[0][c]);
                    rs[1][c] = face(rho[c], rho[g.idx(i, (j + 1) % n, k)], dir[1][c]);
                    if k > 0 {
                        rs[2][c] = face(rho[g.idx(i, j, k - 1)], rho[c], dir[2][c]);
                    }
                }
            }
        }
        let f = [0, 1, 2].map(|d| rs[d].iter().zip(&u[d]).map(|(r, v)| r * v).collect());
        Fluxes { rs, f }
    }

    fn div(&self, f: &[Vec<f64>; 3]) -> Vec<f64> {
        let g = &self.grid;
        let (n, nz) = (g.n, g.nz);
        let (dx, dz) = (g.dx(), g.dz());
        let mut out = vec![0.0; g.cells()];
        for k in 0..nz {
            for j in 0..n {
                for i in 0..n {
                    let c = g.idx(i, j, k);
                    out[c] = (f[0][c] - f[0][g.idx((i + n - 1) % n, j, k)]) / dx
                        + (f[1][c] - f[1][g.idx(i, (j + n - 1) % n, k)]) / dx
                        + (f[2][g.idx(i, j, k + 1)] - f[2][c]) / dz;
                }
            }
        }
        out
    }

    /// `A u = −Δ_{μ,ε}u − λ∇∇·u` with ghost values `−u` across the walls.
    fn viscous(&self, u: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let g = &self.grid;
        let (n, nz) = (g.n, g.nz);
        let (dx, dz) = (g.dx(), g.dz());
        let [mu, _, ev] = self.params.visc.weights();
        let lam = self.params.visc.lambda;
        let dv = self.div(u);
        let mut out = [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n * n]];
        let (ix2, iz2) = (1.0 / (dx * dx), 1.0 / (dz * dz));
        for d in 0..2 {
            let f = &u[d];
            for k in 0..nz {
                for j in 0..n {
                    for i in 0..n {
                        let c = g.idx(i, j, k);
                        let v = f[c];
                        let lh = (f[g.idx((i + 1) % n, j, k)] + f[g.idx((i + n - 1) % n, j, k)]
                            + f[g.idx(i, (j + 1) % n, k)]
                            + f[g.idx(i, (j + n - 1) % n, k)]
                            - 4.0 * v)
                            * ix2;
                        let up = if k + 1 < nz { f[g.idx(i, j, k + 1)] } else { -v };
                        let dn = if k > 0 { f[g.idx(i, j, k - 1)] } else { -v };
                        let lz = (up + dn - 2.0 * v) * iz2;
                        let nb = if d == 0 { g.idx((i + 1) % n, j, k) } else { g.idx(i, (j + 1) % n, k) };
                        out[d][c] = -mu * lh - ev * lz - lam * (dv[nb] - dv[c]) / dx;
                    }
                }
            }
        }
        let f = &u[2];
        for k in 1..nz {
            for j in 0..n {
                for i in 0..n {
                    let c = g.idx(i, j, k);
                    let v = f[c];
                    let lh = (f[g.idx((i + 1) % n, j, k)] + f[g.idx((i + n - 1) % n, j, k)]
                        + f[g.idx(i, (j + 1) % n, k)]
                        + f[g.idx(i, (j + n - 1) % n, k)]
                        - 4.0 * v)
                        * ix2;
                    let lz = (f[g.idx(i, j, k + 1)] + f[g.idx(i, j, k - 1)] - 2.0 * v) * iz2;
                    out[2][c] = -mu * lh - ev * lz - lam * (dv[c] - dv[g.idx(i, j, k - 1)]) / dz;
                }
            }
        }
        out
    }

    fn vertical_coeffs(&self) -> [f64; 3] {
        let v = &self.params.visc;
        let iz2 = 1.0 / (self.grid.dz() * self.grid.dz());
        [v.eps_visc * iz2, v.eps_visc * iz2, (v.eps_visc + v.lambda) * iz2]
    }

    /// `V u`, the vertical second-difference part of `−A u`.
    fn vertical_part(&self, u: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let g = &self.grid;
        let (n2, nz) = (g.n * g.n, g.nz);
        let e = self.vertical_coeffs();
        let mut out = [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n2]];
        for d in 0..2 {
            for c in 0..g.cells() {
                let k = c / n2;
                let v = u[d][c];
                let up = if k + 1 < nz { u[d][c + n2] } else { -v };
                let dn = if k > 0 { u[d][c - n2] } else { -v };
                out[d][c] = e[d] * (up + dn - 2.0 * v);
            }
        }
        for c in n2..g.cells() {
            out[2][c] = e[2] * (u[2][c + n2] + u[2][c - n2] - 2.0 * u[2][c]);
        }
        out
    }

    /// Solves `(ρ_D/dt − V) x = r` column by column, in place.
    fn solve_columns(&self, rd: &[Vec<f64>; 3], r: &mut [Vec<f64>; 3]) {
        let g = &self.grid;
        let (n2, nz) = (g.n * g.n, g.nz);
        let dt = self.params.dt;
        let e = self.vertical_coeffs();
        let mut cp = vec![0.0; nz];
        let mut dp = vec![0.0; nz];
        for d in 0..3 {
            let (k0, k1) = if d == 2 { (1, nz) } else { (0, nz) };
            for p in 0..n2 {
                // Thomas sweep over k0..k1 with off-diagonals −e.
                for k in k0..k1 {
                    let c = p + n2 * k;
                    let mut diag = rd[d][c] / dt + 2.0 * e[d];
                    if d < 2 && (k == 0 || k + 1 == nz) {
                        diag += e[d];
                    }
                    let lower = if k > k0 { -e[d] } else { 0.0 };
                    let upper = if k + 1 < k1 { -e[d] } else { 0.0 };
                    let (cprev, dprev) = if k > k0 { (cp[k - 1], dp[k - 1]) } else { (0.0, 0.0) };
                    let m = diag - lower * cprev;
                    cp[k] = upper / m;
                    dp[k] = (r[d][c] - lower * dprev) / m;
                }
                for k in (k0..k1).rev() {
                    let c = p + n2 * k;
                    let x = if k + 1 < k1 { dp[k] - cp[k] * r[d][c + n2] } else { dp[k] };
                    r[d][c] = x;
                }
            }
        }
    }

    /// `Σ u·Au` times the cell volume.
    pub fn dissipation_rate(&self, u: &[Vec<f64>; 3]) -> f64 {
        let a = self.viscous(u);
        let s: f64 = (0..3).map(|d| u[d].iter().zip(&a[d]).map(|(x, y)| x * y).sum::<f64>()).sum();
        s * self.grid.vol()
    }

    /// Skew Coriolis force `ε⁻¹ρ e₃×u` on the horizontal faces.
    fn coriolis(&self, rho: &[f64], u: &[Vec<f64>; 3]) -> [Vec<f64>; 2] {
        let g = &self.grid;
        let n = g.n;
        let c4 = 0.25 / self.params.eps;
        let mut out = [vec![0.0; g.cells()], vec![0.0; g.cells()]];
        for k in 0..g.nz {
            for j in 0..n {
                let jm = (j + n - 1) % n;
                let jp = (j + 1) % n;
                for i in 0..n {
                    let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
                    let c = g.idx(i, j, k);
                    let (v, uu) = (&u[1], &u[0]);
                    out[0][c] = -c4
                        * (rho[c] * (v[c] + v[g.idx(i, jm, k)])
                            + rho[g.idx(ip, j, k)] * (v[g.idx(ip, j, k)] + v[g.idx(ip, jm, k)]));
                    out[1][c] = c4
                        * (rho[c] * (uu[c] + uu[g.idx(im, j, k)])
                            + rho[g.idx(i, jp, k)] * (uu[g.idx(i, jp, k)] + uu[g.idx(im, jp, k)]));
                }
            }
        }
        out
    }

    /// Momentum convection with dual fluxes built from the primal ones.
    fn convection(&self, f: &[Vec<f64>; 3], u: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let g = &self.grid;
        let (n, nz) = (g.n, g.nz);
        let (dx, dz) = (g.dx(), g.dz());
        let w = |i: usize, j: usize, k: usize| g.idx(i % n, j % n, k);
        let mut out = [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n * n]];
        // Horizontal faces; `d` is the face normal.
        for d in 0..2 {
            let uu = &u[d];
            for k in 0..nz {
                for j in 0..n {
                    for i in 0..n {
                        let c = g.idx(i, j, k);
                        // Neighbour face along axis `a` in direction ±.
                        let shift = |a: usize, s: isize| -> usize {
                            let (mut ii, mut jj) = (i as isize, j as isize);
                            if a == 0 {
                                ii += s;
                            } else {
                                jj += s;
                            }
                            w((ii + n as isize) as usize, (jj + n as isize) as usize, k)
                        };
                        // The other cell of the dual volume.
                        let other = shift(d, 1);
                        let mut acc = 0.0;
                        for a in 0..2 {
                            if a == d {
                                // Dual faces at the two cell centres.
                                let ge = 0.5 * (f[a][c] + f[a][other]);
                                let gw = 0.5 * (f[a][shift(a, -1)] + f[a][c]);
                                acc += (ge * 0.5 * (uu[c] + uu[other]) - gw * 0.5 * (uu[shift(a, -1)] + uu[c])) / dx;
                            } else {
                                let gn = 0.5 * (f[a][c] + f[a][other]);
                                let back = shift(a, -1);
                                let back_other = {
                                    let (mut ii, mut jj) = (i as isize, j as isize);
                                    if a == 0 {
                                        ii -= 1;
                                        jj += 1;
                                    } else {
                                        jj -= 1;
                                        ii += 1;
                                    }
                                    w((ii + n as isize) as usize, (jj + n as isize) as usize, k)
                                };
                                let gs = 0.5 * (f[a][back] + f[a][back_other]);
                                acc += (gn * 0.5 * (uu[c] + uu[shift(a, 1)]) - gs * 0.5 * (uu[back] + uu[c])) / dx;
                            }
                        }
                        let top = if k + 1 < nz {
                            let gt = 0.5 * (f[2][g.idx(i, j, k + 1)] + f[2][other + n * n]);
                            gt * 0.5 * (uu[c] + uu[g.idx(i, j, k + 1)])
                        } else {
                            0.0
                        };
                        let bot = if k > 0 {
                            let gb = 0.5 * (f[2][c] + f[2][other]);
                            gb * 0.5 * (uu[g.idx(i, j, k - 1)] + uu[c])
                        } else {
                            0.0
                        };
                        out[d][c] = acc + (top - bot) / dz;
                    }
                }
            }
        }
        let uw = &u[2];
        for k in 1..nz {
            for j in 0..n {
                for i in 0..n {
                    let c = g.idx(i, j, k);
                    let cb = g.idx(i, j, k - 1);
                    let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
                    let (jp, jm) = ((j + 1) % n, (j + n - 1) % n);
                    let ge = 0.5 * (f[0][cb] + f[0][c]);
                    let gw = 0.5 * (f[0][g.idx(im, j, k - 1)] + f[0][g.idx(im, j, k)]);
                    let gn = 0.5 * (f[1][cb] + f[1][c]);
                    let gs = 0.5 * (f[1][g.idx(i, jm, k - 1)] + f[1][g.idx(i, jm, k)]);
                    let gt = 0.5 * (f[2][c] + f[2][g.idx(i, j, k + 1)]);
                    let gb = 0.5 * (f[2][cb] + f[2][c]);
                    out[2][c] = (ge * 0.5 * (uw[c] + uw[g.idx(ip, j, k)]) - gw * 0.5 * (uw[g.idx(im, j, k)] + uw[c])) / dx
                        + (gn * 0.5 * (uw[c] + uw[g.idx(i, jp, k)]) - gs * 0.5 * (uw[g.idx(i, jm, k)] + uw[c])) / dx
                        + (gt * 0.5 * (uw[c] + uw[g.idx(i, j, k + 1)]) - gb * 0.5 * (uw[cb] + uw[c])) / dz;
                }
            }
        }
        out
    }

    /// `ε⁻² ρ_σ ∇ψ` on every face.
    fn pressure(&self, rho: &[f64], rs: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let g = &self.grid;
        let (n, nz) = (g.n, g.nz);
        let n2 = n * n;
        let (dx, dz) = (g.dx(), g.dz());
        let ie2 = 1.0 / (self.params.eps * self.params.eps);
        let psi: Vec<f64> = rho.iter().enumerate().map(|(c, &r)| self.params.law.h1(r) - self.h1_bar[c / n2]).collect();
        let mut out = [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n2]];
        for k in 0..nz {
            for j in 0..n {
                for i in 0..n {
                    let c = g.idx(i, j, k);
                    out[0][c] = ie2 * rs[0][c] * (psi[g.idx((i + 1) % n, j, k)] - psi[c]) / dx;
                    out[1][c] = ie2 * rs[1][c] * (psi[g.idx(i, (j + 1) % n, k)] - psi[c]) / dx;
                    if k > 0 {
                        out[2][c] = ie2 * rs[2][c] * (psi[c] - psi[c - n2]) / dz;
                    }
                }
            }
        }
        out
    }

    /// Cayley rotation `ρ_D(u′ − u)/τ = −C((u′ + u)/2)` with frozen density.
    pub fn rotate(&self, rho: &[f64], u: &[Vec<f64>; 3], tau: f64) -> Result<[Vec<f64>; 3]> {
        let rd = self.dual_rho(rho);
        let mut next = u.clone();
        let scale = u[0].iter().chain(&u[1]).fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(next);
        }
        for _ in 0..self.params.max_iter {
            let mid: [Vec<f64>; 3] = [0, 1, 2].map(|d| u[d].iter().zip(&next[d]).map(|(a, b)| 0.5 * (a + b)).collect());
            let c = self.coriolis(rho, &mid);
            let mut change = 0.0f64;
            for d in 0..2 {
                for (idx, v) in next[d].iter_mut().enumerate() {
                    let nv = u[d][idx] - tau * c[d][idx] / rd[d][idx];
                    change = change.max((nv - *v).abs());
                    *v = nv;
                }
            }
            if change <= 1e-16 * scale {
                return Ok(next);
            }
        }
        Err(Error::Step("Coriolis rotation did not converge; reduce dt".into()))
    }

    pub fn step(&self, s: &Flow3DState) -> Result<Flow3DState> {
        let p = &self.params;
        let ph = p.physics;
        let g = &self.grid;
        let dt = p.dt;
        let n2 = g.n * g.n;
        let mut u0 = s.u.clone();
        if ph.coriolis == Coriolis::Rotation {
            u0 = self.rotate(&s.rho, &u0, 0.5 * dt)?;
        }
        let rd0 = self.dual_rho(&s.rho);
        let rho_scale = s.rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dir = u0.clone();
        let mut rho = s.rho.clone();
        let mut u = u0.clone();
        let mut converged = false;
        for _ in 0..p.max_iter {
            let fl = self.fluxes(&rho, &u, &dir);
            let rho_new: Vec<f64> = if ph.frozen_density {
                s.rho.clone()
            } else {
                let dv = self.div(&fl.f);
                s.rho.iter().zip(&dv).map(|(r, d)| r - dt * d).collect()
            };
            if let Some((c, r)) = rho_new.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
                return Err(if r.is_nan() {
                    Error::Divergence(format!("NaN density at t={}", s.t + dt))
                } else {
                    Error::Vacuum(format!("density {r} in cell {c} at t={}", s.t + dt))
                });
            }
            let rd = self.dual_rho(&rho_new);
            let zero = || [vec![0.0; g.cells()], vec![0.0; g.cells()], vec![0.0; g.cells() + n2]];
            let conv = if ph.advection { self.convection(&fl.f, &u) } else { zero() };
            let pres = if ph.pressure { self.pressure(&rho_new, &fl.rs) } else { zero() };
            let (visc, vz) = if ph.viscosity { (self.viscous(&u), self.vertical_part(&u)) } else { (zero(), zero()) };
            let cor = if ph.coriolis == Coriolis::Implicit {
                let c = self.coriolis(&rho_new, &u);
                [c[0].clone(), c[1].clone(), vec![0.0; g.cells() + n2]]
            } else {
                zero()
            };
            let mut next = u.clone();
            for d in 0..3 {
                let range = if d == 2 { n2..g.cells() } else { 0..g.cells() };
                for c in range {
                    let mut r = rd0[d][c] * u0[d][c] / dt - (conv[d][c] + pres[d][c] + cor[d][c]);
                    if ph.viscosity {
                        r -= visc[d][c] + vz[d][c];
                    }
                    next[d][c] = r;
                }
            }
            if ph.viscosity {
                self.solve_columns(&rd, &mut next);
            } else {
                for d in 0..3 {
                    for (c, v) in next[d].iter_mut().enumerate() {
                        if d < 2 || (c >= n2 && c < g.cells()) {
                            *v *= dt / rd[d][c];
                        }
                    }
                }
            }
            let mut change = 0.0f64;
            let mut uscale = 0.0f64;
            for d in 0..3 {
                for (a, b) in next[d].iter().zip(&u[d]) {
                    change = change.max((a - b).abs());
                    uscale = uscale.max(a.abs());
                }
            }
            let rchange = rho_new.iter().zip(&rho).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            u = next;
            rho = rho_new;
            if !change.is_finite() {
                return Err(Error::Divergence(format!("non-finite velocity at t={}", s.t + dt)));
            }
            if change <= p.tol * uscale.max(1e-300) && rchange <= p.tol * rho_scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Step(format!("implicit iteration did not converge at t={}; reduce dt", s.t + dt)));
        }
        if ph.coriolis == Coriolis::Rotation {
            u = self.rotate(&rho, &u, 0.5 * dt)?;
        }
        let dissipation = if ph.viscosity { s.dissipation + dt * self.dissipation_rate(&u) } else { s.dissipation };
        Ok(Flow3DState { grid: *g, rho, u, t: s.t + dt, eps: s.eps, dissipation })
    }

    pub fn kinetic(&self, s: &Flow3DState) -> f64 {
        let rd = self.dual_rho(&s.rho);
        let n2 = self.grid.n * self.grid.n;
        let mut k = 0.0;
        for d in 0..3 {
            let start = if d == 2 { n2 } else { 0 };
            for c in start..self.grid.cells() {
                k += 0.5 * rd[d][c] * s.u[d][c] * s.u[d][c];
            }
        }
        k * self.grid.vol()
    }

    pub fn potential_entropy(&self, s: &Flow3DState) -> f64 {
        let n2 = self.grid.n * self.grid.n;
        let e: f64 = s.rho.iter().enumerate().map(|(c, &r)| self.params.law.rel_energy(r, self.rho_bar[c / n2])).sum();
        e * self.grid.vol() / (self.params.eps * self.params.eps)
    }

    pub fn ledger(&self, s: &Flow3DState) -> EnergyLedger {
        let (kinetic, potential_entropy) = (self.kinetic(s), self.potential_entropy(s));
        EnergyLedger {
            t: s.t,
            kinetic,
            potential_entropy,
            dissipation: s.dissipation,
            total: kinetic + potential_entropy + s.dissipation,
        }
    }

    /// `steps` fixed steps, a ledger row at the start and every `sample_every` steps.
    pub fn run_steps(&self, s: &Flow3DState, steps: usize, sample_every: usize) -> Result<(Flow3DState, Vec<EnergyLedger>)> {
        let every = sample_every.max(1);
        let mut state = s.clone();
        let mut rows = vec![self.ledger(&state)];
        for i in 1..=steps {
            state = self.step(&state)?;
            if i % every == 0 {
                rows.push(self.ledger(&state));
            }
        }
        Ok((state, rows))
    }

    pub fn steps_to(&self, s: &Flow3DState, t_end: f64) -> usize {
        ((t_end - s.t) / self.params.dt).round().max(0.0) as usize
    }
}

/// Face averages `½(ρ_K + ρ_L)`; wall entries of the vertical family are zero.
pub fn face_density(g: &MacGrid, rho: &[f64]) -> [Vec<f64>; 3] {
    let (n, nz) = (g.n, g.nz);
    let mut rx = vec![0.0; g.cells()];
    let mut ry = vec![0.0; g.cells()];
    let mut rz = vec![0.0; g.cells() + n * n];
    for k in 0..nz {
        for j in 0..n {
            for i in 0..n {
                let c = g.idx(i, j, k);
                rx[c] = 0.5 * (rho[c] + rho[g.idx((i + 1) % n, j, k)]);
                ry[c] = 0.5 * (rho[c] + rho[g.idx(i, (j + 1) % n, k)]);
                if k > 0 {
                    rz[c] = 0.5 * (rho[c] + rho[g.idx(i, j, k - 1)]);
                }
            }
        }
    }
    [rx, ry, rz]
}

pub fn ns3d_step(state: &Flow3DState, solver: &Ns3dSolver) -> Result<Flow3DState> {
    solver.step(state)
}

pub fn run_to(state: &Flow3DState, solver: &Ns3dSolver, t_end: f64, sample_every: usize) -> Result<(Flow3DState, Vec<EnergyLedger>)> {
    solver.run_steps(state, solver.steps_to(state, t_end), sample_every)
}

/// `(ρ, u)` of the ansatz at the MAC positions.
pub fn ansatz_on_mac(eval: &AnsatzEval, grid: &MacGrid) -> Result<(Vec<f64>, [Vec<f64>; 3])> {
    if eval.n_h() != grid.n || (eval.params.l_h - grid.l_h).abs() > 1e-12 * grid.l_h {
        return Err(Error::Grid("ansatz and solver grids differ".into()));
    }
    let (zc, zn) = (grid.z_cells(), grid.z_nodes());
    let nc = grid.cells();
    let n2 = grid.n * grid.n;
    let mut rho = vec![0.0; nc];
    let mut u = [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc + n2]];
    eval.for_each([0.0, 0.0], &zc, |i, f| rho[i] = f.rho.v);
    eval.for_each([0.5, 0.0], &zc, |i, f| u[0][i] = f.u[0].v);
    eval.for_each([0.0, 0.5], &zc, |i, f| u[1][i] = f.u[1].v);
    eval.for_each([0.0, 0.0], &zn, |i, f| u[2][i] = f.u[2].v);
    for p in 0..n2 {
        u[2][p] = 0.0;
        u[2][nc + p] = 0.0;
    }
    Ok((rho, u))
}

/// Initial data placed on the ansatz at its current time.
pub fn well_prepared_init(eval: &AnsatzEval, grid: &MacGrid) -> Result<Flow3DState> {
    let (rho, u) = ansatz_on_mac(eval, grid)?;
    if let Some(r) = rho.iter().copied().find(|r| !(*r > 0.0)) {
        return Err(Error::Vacuum(format!("initial density {r}")));
    }
    Ok(Flow3DState { grid: *grid, rho, u, t: eval.t, eps: eval.eps, dissipation: 0.0 })
}

pub fn write_ledger_csv<W: std::io::Write>(rows: &[EnergyLedger], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "kinetic", "potential_entropy", "dissipation", "total"])?;
    for r in rows {
        wr.write_record(&[r.t, r.kinetic, r.potential_entropy, r.dissipation, r.total].map(|x| format!("{x:.17e}")))?;
    }
    wr.flush()?;
    Ok(())
}
