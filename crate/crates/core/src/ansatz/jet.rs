//! Second-order space jets carrying a first time derivative.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Hessian slots: xx, xy, xz, yy, yz, zz.
pub const HESS: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub t: f64,
    pub g: [f64; 3],
    pub h: [f64; 6],
}

impl Jet {
    pub const ZERO: Jet = Jet { v: 0.0, t: 0.0, g: [0.0; 3], h: [0.0; 6] };

    pub fn constant(v: f64) -> Self {
        Jet { v, ..Self::ZERO }
    }

    /// Function of `x₃` alone.
    pub fn vertical(v: f64, d1: f64, d2: f64) -> Self {
        Jet { v, t: 0.0, g: [0.0, 0.0, d1], h: [0.0, 0.0, 0.0, 0.0, 0.0, d2] }
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.h[HESS[i][j]]
    }

    pub fn lap_h(&self) -> f64 {
        self.h[0] + self.h[3]
    }

    /// `φ∘self` given `φ, φ′, φ″` at `self.v`.
    pub fn compose(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let g = self.g;
        let mut h = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                h[HESS[i][j]] = f1 * self.hess(i, j) + f2 * g[i] * g[j];
            }
        }
        Jet { v: f0, t: f1 * self.t, g: g.map(|x| f1 * x), h }
    }

    pub fn recip(&self) -> Self {
        let r = 1.0 / self.v;
        self.compose(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(&self, c: f64) -> Self {
        Jet { v: c * self.v, t: c * self.t, g: self.g.map(|x| c * x), h: self.h.map(|x| c * x) }
    }

    /// Drops every `x₃` derivative: the jet of `x_h ↦ f(x_h, z₀)`.
    pub fn horizontal(&self) -> Self {
        Jet { v: self.v, t: self.t, g: [self.g[0], self.g[1], 0.0], h: [self.h[0], self.h[1], 0.0, self.h[3], 0.0, 0.0] }
    }

    /// Zeroth and time components only.
    pub fn frozen(&self) -> Self {
        Jet { v: self.v, t: self.t, ..Self::ZERO }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        self.v += o.v;
        self.t += o.t;
        for i in 0..3 {
            self.g[i] += o.g[i];
        }
        for i in 0..6 {
            self.h[i] += o.h[i];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self, o);
        let mut h = [0.0; 6];
        for i in 0..3 {
            for j in i..3 {
                h[HESS[i][j]] = a.hess(i, j) * b.v + a.g[i] * b.g[j] + a.g[j] * b.g[i] + a.v * b.hess(i, j);
            }
        }
        Jet {
            v: a.v * b.v,
            t: a.t * b.v + a.v * b.t,
            g: [0, 1, 2].map(|i| a.g[i] * b.v + a.v * b.g[i]),
            h,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}
