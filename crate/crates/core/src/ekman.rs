//! Ekman boundary layers at the bottom and top walls: the decaying spiral,
//! the vertical corrector it induces, and the pumping coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Top,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EkmanLayer {
    pub rho_wall: f64,
    pub side: Side,
    pub k: f64,
}

impl EkmanLayer {
    pub fn new(rho_wall: f64, side: Side) -> Result<Self> {
        if !(rho_wall > 0.0) {
            return domain(format!("wall density must be positive, got {rho_wall}"));
        }
        Ok(Self { rho_wall, side, k: (rho_wall / 2.0).sqrt() })
    }

    pub fn bottom(rho0: f64) -> Result<Self> {
        Self::new(rho0, Side::Bottom)
    }

    pub fn top(rho1: f64) -> Result<Self> {
        Self::new(rho1, Side::Top)
    }

    /// `(e^{−kζ} cos kζ, e^{−kζ} sin kζ)`.
    #[inline]
    pub fn envelope(&self, zeta: f64) -> (f64, f64) {
        let e = (-self.k * zeta).exp();
        let (s, c) = (self.k * zeta).sin_cos();
        (e * c, e * s)
    }

    /// Spiral velocity and its first two `ζ`-derivatives, no domain check.
    pub fn spiral_jet(&self, u0h: [f64; 2], zeta: f64) -> [[f64; 2]; 3] {
        let (ec, es) = self.envelope(zeta);
        let k = self.k;
        let rot = |c: f64, s: f64| [-(c * u0h[0] + s * u0h[1]), -(-s * u0h[0] + c * u0h[1])];
        // d/dζ (ec, es) = k(−ec − es, ec − es); d² = 2k²(es, −ec).
        [rot(ec, es), rot(k * (-ec - es), k * (ec - es)), rot(2.0 * k * k * es, -2.0 * k * k * ec)]
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta >= 0.0 {
        Ok(())
    } else {
        domain(format!("stretched coordinate must be nonnegative, got {zeta}"))
    }
}

/// `−e^{−kζ} R(−kζ) u0h`.
pub fn spiral_profile(layer: &EkmanLayer, u0h: [f64; 2], zeta: f64) -> Result<[f64; 2]> {
    check_zeta(zeta)?;
    Ok(layer.spiral_jet(u0h, zeta)[0])
}

#[inline]
fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Max over the grid of `|ρ_wall v⊥ − ∂²_ζ v|` together with the wall
/// mismatch `|v(0) + u0h|`, for a candidate profile given as value and second
/// derivative.
pub fn profile_residual(
    layer: &EkmanLayer,
    u0h: [f64; 2],
    zeta_grid: &[f64],
    candidate: impl Fn(f64) -> ([f64; 2], [f64; 2]),
) -> f64 {
    let (v0, _) = candidate(0.0);
    let wall = (v0[0] + u0h[0]).abs().max((v0[1] + u0h[1]).abs());
    zeta_grid.iter().fold(wall, |m, &z| {
        let (v, d2) = candidate(z);
        let p = perp(v);
        m.max((layer.rho_wall * p[0] - d2[0]).abs()).max((layer.rho_wall * p[1] - d2[1]).abs())
    })
}

pub fn spiral_ode_residual(layer: &EkmanLayer, u0h: [f64; 2], zeta_grid: &[f64]) -> f64 {
    profile_residual(layer, u0h, zeta_grid, |z| {
        let j = layer.spiral_jet(u0h, z);
        (j[0], j[2])
    })
}

/// `u_{1,3}^{bl}`: `∓ e^{−kζ}(cos kζ + sin kζ) ω₀ / √(2ρ_wall)`, minus at the
/// bottom and plus at the top.
pub fn vertical_corrector(layer: &EkmanLayer, omega0: f64, zeta: f64) -> Result<f64> {
    check_zeta(zeta)?;
    Ok(vertical_corrector_jet(layer, omega0, zeta)[0])
}

/// Value and first two `ζ`-derivatives of the vertical corrector.
pub fn vertical_corrector_jet(layer: &EkmanLayer, omega0: f64, zeta: f64) -> [f64; 3] {
    let (ec, es) = layer.envelope(zeta);
    let k = layer.k;
    let sign = match layer.side {
        Side::Bottom => -1.0,
        Side::Top => 1.0,
    };
    let a = sign * omega0 / (2.0 * layer.rho_wall).sqrt();
    // d/dζ (ec + es) = −2k es, d² = −2k²(ec − es).
    [a * (ec + es), a * (-2.0 * k * es), a * (-2.0 * k * k * (ec - es))]
}

/// `∇_h·u^{bl}_{0,h}` from the footprint divergence and vorticity of `u0h`.
pub fn spiral_divergence(layer: &EkmanLayer, div0: f64, omega0: f64, zeta: f64) -> f64 {
    let (ec, es) = layer.envelope(zeta);
    -(ec * div0 + es * omega0)
}

/// `∇_h·u^{bl}_{0,h} ± ∂ u^{bl}_{1,3}` along the stretched coordinate (`+` at
/// the bottom in `ζ`, `−` at the top in `η`).
pub fn divergence_relation(layer: &EkmanLayer, div0: f64, omega0: f64, zeta: f64) -> f64 {
    let d = vertical_corrector_jet(layer, omega0, zeta)[1];
    let s = match layer.side {
        Side::Bottom => 1.0,
        Side::Top => -1.0,
    };
    spiral_divergence(layer, div0, omega0, zeta) + s * d
}

/// `(√ρ̄(0) + √ρ̄(1))/√2`.
pub fn pumping_coefficient(rho0: f64, rho1: f64) -> Result<f64> {
    if !(rho0 > 0.0 && rho1 > 0.0) {
        return domain(format!("wall densities must be positive, got ({rho0}, {rho1})"));
    }
    Ok((rho0.sqrt() + rho1.sqrt()) / 2f64.sqrt())
}

/// `−ρ̄(1)u_{1,3,t}(0) + ρ̄(0)u_{1,3,b}(0)` per unit `ω₀`, i.e. minus the pumping
/// coefficient computed from the corrector traces.
pub fn pumping_flux(bottom: &EkmanLayer, top: &EkmanLayer) -> Result<f64> {
    let b = vertical_corrector(bottom, 1.0, 0.0)?;
    let t = vertical_corrector(top, 1.0, 0.0)?;
    Ok(-top.rho_wall * t + bottom.rho_wall * b)
}

/// `−u1_wall e^{−kζ}`.
pub fn corrector_layer_u1(layer: &EkmanLayer, u1_wall: [f64; 2], zeta: f64) -> Result<[f64; 2]> {
    check_zeta(zeta)?;
    let e = (-layer.k * zeta).exp();
    Ok([-u1_wall[0] * e, -u1_wall[1] * e])
}

/// `sup_ζ ζ²|u^{bl}_{0,h}(ζ)|` over the grid.
pub fn hardy_weighted_sup(layer: &EkmanLayer, u0h: [f64; 2], zeta_grid: &[f64]) -> f64 {
    zeta_grid.iter().fold(0.0, |m, &z| {
        let v = layer.spiral_jet(u0h, z)[0];
        m.max(z * z * v[0].hypot(v[1]))
    })
}
