//! Barotropic pressure laws `P(ρ) = aρ^γ`, the internal energy `H` with
//! `ρH″ = P′`, and the relative energy `E(ρ, r)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Monomial pressure law `P(ρ) = a ρ^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    pub gamma: f64,
    pub a: f64,
}

impl PressureLaw {
    pub fn new(gamma: f64, a: f64) -> Result<Self> {
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return config(format!("gamma must be >= 1, got {gamma}"));
        }
        if !(a > 0.0) || !a.is_finite() {
            return config(format!("a must be positive, got {a}"));
        }
        Ok(Self { gamma, a })
    }

    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        self.a * rho.powf(self.gamma)
    }

    /// n-th derivative of `P`, `a γ(γ-1)…(γ-n+1) ρ^{γ-n}`.
    #[inline]
    pub fn dp_n(&self, rho: f64, n: u32) -> f64 {
        let mut c = self.a;
        for j in 0..n {
            c *= self.gamma - j as f64;
        }
        if c == 0.0 {
            return 0.0;
        }
        c * rho.powf(self.gamma - n as f64)
    }

    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        self.dp_n(rho, 1)
    }

    #[inline]
    pub fn d2p(&self, rho: f64) -> f64 {
        self.dp_n(rho, 2)
    }

    #[inline]
    pub fn d3p(&self, rho: f64) -> f64 {
        self.dp_n(rho, 3)
    }

    fn is_log(&self) -> bool {
        self.gamma == 1.0
    }

    /// Internal energy `H(ρ) = ρ ∫₁^ρ P(z)/z² dz`.
    #[inline]
    pub fn h(&self, rho: f64) -> f64 {
        if rho == 0.0 {
            return 0.0;
        }
        if self.is_log() {
            self.a * rho * rho.ln()
        } else {
            self.a * rho * (rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)
        }
    }

    #[inline]
    pub fn h1(&self, rho: f64) -> f64 {
        if self.is_log() {
            self.a * (rho.ln() + 1.0)
        } else {
            self.a * (self.gamma * rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)
        }
    }

    #[inline]
    pub fn h2(&self, rho: f64) -> f64 {
        self.a * self.gamma * rho.powf(self.gamma - 2.0)
    }

    /// Inverse of `H′` on `(0, ∞)`.
    pub fn h1_inv(&self, y: f64) -> f64 {
        if self.is_log() {
            (y / self.a - 1.0).exp()
        } else {
            ((y * (self.gamma - 1.0) / self.a + 1.0) / self.gamma).powf(1.0 / (self.gamma - 1.0))
        }
    }

    /// `E(ρ, r) = H(ρ) − H(r) − H′(r)(ρ − r)`, evaluated without cancellation
    /// near `ρ = r`.
    pub fn rel_energy(&self, rho: f64, r: f64) -> f64 {
        if rho == r {
            return 0.0;
        }
        let g = self.gamma;
        if g == 2.0 {
            let d = rho - r;
            return self.a * d * d;
        }
        let t = (rho - r) / r;
        if self.is_log() {
            self.a * r * log_bregman(t)
        } else {
            self.a * r.powf(g) / (g - 1.0) * pow_bregman(g, t)
        }
    }
}

/// `(1+t)^γ − 1 − γt` for `t ≥ -1`.
fn pow_bregman(g: f64, t: f64) -> f64 {
    if t.abs() <= 0.5 {
        let mut c = g * (g - 1.0) / 2.0;
        let mut tk = t * t;
        let mut sum = 0.0;
        for k in 2..200 {
            let term = c * tk;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || term == 0.0 {
                break;
            }
            c *= (g - k as f64) / (k as f64 + 1.0);
            tk *= t;
        }
        sum
    } else {
        (1.0 + t).powf(g) - 1.0 - g * t
    }
}

/// `(1+t) ln(1+t) − t` for `t ≥ -1`.
fn log_bregman(t: f64) -> f64 {
    if t == -1.0 {
        return 1.0;
    }
    if t.abs() <= 0.5 {
        let mut tk = t * t;
        let mut sum = 0.0;
        for k in 2..200 {
            let kf = k as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let term = sign * tk / (kf * (kf - 1.0));
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            tk *= t;
        }
        sum
    } else {
        (1.0 + t) * t.ln_1p() - t
    }
}

pub fn eval_p(law: &PressureLaw, rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return domain(format!("negative density {rho}"));
    }
    Ok(law.p(rho))
}

pub fn eval_h(law: &PressureLaw, rho: f64) -> Result<f64> {
    positive(rho)?;
    Ok(law.h(rho))
}

pub fn eval_h1(law: &PressureLaw, rho: f64) -> Result<f64> {
    positive(rho)?;
    Ok(law.h1(rho))
}

pub fn eval_h2(law: &PressureLaw, rho: f64) -> Result<f64> {
    positive(rho)?;
    Ok(law.h2(rho))
}

fn positive(rho: f64) -> Result<()> {
    if rho > 0.0 {
        Ok(())
    } else {
        domain(format!("density must be positive, got {rho}"))
    }
}

pub fn relative_energy(law: &PressureLaw, rho: f64, r: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return domain(format!("negative density {rho}"));
    }
    positive(r)?;
    Ok(law.rel_energy(rho, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeEnergySample {
    pub rho: f64,
    pub r: f64,
    pub value: f64,
}

impl RelativeEnergySample {
    pub fn new(law: &PressureLaw, rho: f64, r: f64) -> Result<Self> {
        Ok(Self { rho, r, value: relative_energy(law, rho, r)? })
    }
}

/// Two-sided bound `c₁Φ ≤ E ≤ c₂Φ` with
/// `Φ(d) = d² 1_{|d|<M} + |d|^γ 1_{|d|≥M}`, fitted for `r` in a bracket.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EntropyBounds {
    pub law: PressureLaw,
    pub r_min: f64,
    pub r_max: f64,
    pub m: f64,
    pub rho_max: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSample {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub violated: bool,
}

impl EntropyBounds {
    /// Fits `c₁, c₂` on a dense deterministic grid of `(ρ, r)` in
    /// `(0, rho_max] × [r_min, r_max]`.
    pub fn fit(law: PressureLaw, r_min: f64, r_max: f64, m: f64, rho_max: f64) -> Result<Self> {
        if !(r_min > 0.0) || !(r_max >= r_min) {
            return config(format!("empty or nonpositive bracket [{r_min}, {r_max}]"));
        }
        if !(m > 0.0) || !(rho_max > r_max) {
            return config("threshold M must be positive and rho_max must exceed the bracket");
        }
        let mut b = Self { law, r_min, r_max, m, rho_max, c1: 0.0, c2: 0.0 };
        let nr = 65;
        let nrho = 4000;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut visit = |rho: f64, r: f64| {
            let q = b.ratio(rho, r);
            lo = lo.min(q);
            hi = hi.max(q);
        };
        for i in 0..nr {
            let r = r_min + (r_max - r_min) * i as f64 / (nr - 1) as f64;
            for j in 1..=nrho {
                visit(rho_max * j as f64 / nrho as f64, r);
            }
            for e in 1..=24 {
                visit(10f64.powi(-e / 2), r);
            }
            for &rho in &[r - m, r + m, r] {
                if rho > 0.0 && rho <= rho_max {
                    visit(rho, r);
                }
            }
        }
        let spread = hi - lo;
        b.c1 = lo - 0.05 * spread;
        b.c2 = hi + 0.05 * spread;
        if !(b.c1 > 0.0) {
            return Err(Error::Fit(format!("lower constant not positive: {}", b.c1)));
        }
        Ok(b)
    }

    pub fn phi(&self, d: f64) -> f64 {
        let d = d.abs();
        if d < self.m || self.law.gamma == 2.0 {
            d * d
        } else {
            d.powf(self.law.gamma)
        }
    }

    fn ratio(&self, rho: f64, r: f64) -> f64 {
        let d = rho - r;
        if d.abs() <= 1e-9 * r {
            return 0.5 * self.law.h2(r);
        }
        self.law.rel_energy(rho, r) / self.phi(d)
    }

    pub fn check(&self, rho: f64, r: f64) -> Result<BoundSample> {
        let value = relative_energy(&self.law, rho, r)?;
        let phi = self.phi(rho - r);
        let lower = self.c1 * phi;
        let upper = self.c2 * phi;
        let slack = 1e-12 * value.abs();
        let violated = value < lower - slack || value > upper + slack;
        Ok(BoundSample { lower, value, upper, violated })
    }

    /// Counts violations on `n` fresh uniform samples.
    pub fn validate(&self, n: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bad = 0;
        for _ in 0..n {
            let rho = rng.gen_range(0.0..self.rho_max);
            let r = rng.gen_range(self.r_min..=self.r_max);
            if self.check(rho, r).map(|s| s.violated).unwrap_or(true) {
                bad += 1;
            }
        }
        bad
    }

    /// Fit followed by validation; a fit violated by any fresh sample is rejected.
    pub fn fit_validated(
        law: PressureLaw,
        r_min: f64,
        r_max: f64,
        m: f64,
        rho_max: f64,
        n_fresh: usize,
        seed: u64,
    ) -> Result<Self> {
        let b = Self::fit(law, r_min, r_max, m, rho_max)?;
        let bad = b.validate(n_fresh, seed);
        if bad > 0 {
            return Err(Error::Fit(format!("{bad} of {n_fresh} fresh samples violate the fit")));
        }
        Ok(b)
    }
}

pub fn entropy_bounds_check(bounds: &EntropyBounds, rho: f64, r: f64) -> Result<BoundSample> {
    if r < bounds.r_min || r > bounds.r_max {
        return domain(format!("r = {r} outside the fitted bracket"));
    }
    bounds.check(rho, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid-free oracle: composite Gauss–Legendre for `∫₁^ρ P(z)/z² dz`.
    fn h_quadrature(law: &PressureLaw, rho: f64) -> f64 {
        let nodes = [-0.906179845938664, -0.538469310105683, 0.0, 0.538469310105683, 0.906179845938664];
        let weights = [0.236926885056189, 0.478628670499366, 0.568888888888889, 0.478628670499366, 0.236926885056189];
        let panels = 400;
        let (lo, hi) = (1.0, rho);
        let w = (hi - lo) / panels as f64;
        let mut s = 0.0;
        for p in 0..panels {
            let c = lo + (p as f64 + 0.5) * w;
            for (x, wt) in nodes.iter().zip(weights) {
                let z = c + 0.5 * w * x;
                s += 0.5 * w * wt * law.p(z) / (z * z);
            }
        }
        rho * s
    }

    #[test]
    fn p_examples() {
        let l = PressureLaw::new(2.0, 1.0).unwrap();
        assert_eq!(eval_p(&l, 2.0).unwrap(), 4.0);
        assert_eq!(eval_p(&PressureLaw::new(1.5, 1.0).unwrap(), 0.0).unwrap(), 0.0);
        assert_eq!(eval_p(&PressureLaw::new(3.0, 0.5).unwrap(), 2.0).unwrap(), 4.0);
        assert!(eval_p(&l, -1.0).is_err());
    }

    #[test]
    fn h_examples() {
        let l2 = PressureLaw::new(2.0, 1.0).unwrap();
        assert_eq!(eval_h(&l2, 3.0).unwrap(), 6.0);
        assert_eq!(eval_h(&l2, 1.0).unwrap(), 0.0);
        let l15 = PressureLaw::new(1.5, 1.0).unwrap();
        assert!((eval_h(&l15, 4.0).unwrap() - 8.0).abs() < 1e-13);
        assert!((h_quadrature(&l15, 4.0) - 8.0).abs() < 1e-10);
        assert!(eval_h(&l2, 0.0).is_err());
    }

    #[test]
    fn relative_energy_examples() {
        let l2 = PressureLaw::new(2.0, 1.0).unwrap();
        assert_eq!(relative_energy(&l2, 3.0, 1.0).unwrap(), 4.0);
        assert_eq!(relative_energy(&l2, 2.0, 2.0).unwrap(), 0.0);
        let l15 = PressureLaw::new(1.5, 1.0).unwrap();
        let oracle = h_quadrature(&l15, 2.0) - 0.0 - l15.h1(1.0) * (2.0 - 1.0);
        assert!((relative_energy(&l15, 2.0, 1.0).unwrap() - oracle).abs() < 1e-10);
        assert!(relative_energy(&l15, 1.0, 0.0).is_err());
    }

    #[test]
    fn series_and_direct_branches_agree() {
        for &g in &[1.0, 1.5, 3.0] {
            let l = PressureLaw::new(g, 1.3).unwrap();
            for &t in &[0.49, 0.5, 0.51, -0.49, -0.51] {
                let r = 1.7;
                let rho = r * (1.0 + t);
                let direct = l.h(rho) - l.h(r) - l.h1(r) * (rho - r);
                let e = l.rel_energy(rho, r);
                assert!((e - direct).abs() < 1e-12 * direct.abs().max(1.0), "g={g} t={t}");
            }
        }
    }

    #[test]
    fn log_law_at_vacuum() {
        let l = PressureLaw::new(1.0, 2.0).unwrap();
        assert!((l.rel_energy(0.0, 1.5) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn h1_inverse_roundtrip() {
        for &g in &[1.0, 1.5, 2.0, 3.0] {
            let l = PressureLaw::new(g, 0.7).unwrap();
            for &rho in &[0.3, 1.0, 2.5] {
                assert!((l.h1_inv(l.h1(rho)) - rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bounds_gamma2_exact() {
        let l = PressureLaw::new(2.0, 1.0).unwrap();
        let b = EntropyBounds::fit(l, 0.5, 2.0, 1.0, 10.0).unwrap();
        assert_eq!((b.c1, b.c2), (1.0, 1.0));
        let s = entropy_bounds_check(&b, 1.3, 1.3).unwrap();
        assert_eq!((s.lower, s.value, s.upper), (0.0, 0.0, 0.0));
    }

    #[test]
    fn bounds_reject_empty_bracket() {
        let l = PressureLaw::new(1.5, 1.0).unwrap();
        assert!(matches!(EntropyBounds::fit(l, 2.0, 1.0, 1.0, 10.0), Err(Error::Config(_))));
    }
}
