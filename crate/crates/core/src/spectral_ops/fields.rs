//! Grid-sampled scalar and vector fields. Data is row-major with `x₁`
//! fastest, then `x₂`, then `x₃`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pow2(n: usize) -> Result<()> {
    if n >= 2 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::Config(format!("grid size {n} is not a power of two")))
    }
}

/// Periodic square of side `l` with `n × n` points at `x = i·l/n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2D {
    pub n: usize,
    pub l: f64,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField2D {
    pub n: usize,
    pub l: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ScalarField2D {
    pub fn zeros(n: usize, l: f64) -> Result<Self> {
        check_pow2(n)?;
        Ok(Self { n, l, data: vec![0.0; n * n] })
    }

    pub fn from_fn(n: usize, l: f64, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut s = Self::zeros(n, l)?;
        let h = l / n as f64;
        for j in 0..n {
            for i in 0..n {
                s.data[i + n * j] = f(i as f64 * h, j as f64 * h);
            }
        }
        Ok(s)
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f²` by the rectangle rule.
    pub fn norm2_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() * self.dx() * self.dx()
    }
}

impl VectorField2D {
    pub fn zeros(n: usize, l: f64) -> Result<Self> {
        check_pow2(n)?;
        Ok(Self { n, l, x: vec![0.0; n * n], y: vec![0.0; n * n] })
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// 3D samples. For periodic boxes `dims[2]` points cover one period; for the
/// slab `dims[2] = N₃ + 1` nodes include both walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField3D {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField3D {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub c: [Vec<f64>; 3],
}

impl ScalarField3D {
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        Self { dims, spacing, data: vec![0.0; dims.iter().product()] }
    }

    /// Periodic box `[0,l₁)×[0,l₂)×[0,l₃)`; every size a power of two.
    pub fn periodic_from_fn(dims: [usize; 3], lens: [f64; 3], f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        for &n in &dims {
            check_pow2(n)?;
        }
        let spacing = [lens[0] / dims[0] as f64, lens[1] / dims[1] as f64, lens[2] / dims[2] as f64];
        Ok(Self::sample(dims, spacing, f))
    }

    pub fn sample(dims: [usize; 3], spacing: [f64; 3], f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut s = Self::zeros(dims, spacing);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    s.data[i + dims[0] * (j + dims[1] * k)] =
                        f(i as f64 * spacing[0], j as f64 * spacing[1], k as f64 * spacing[2]);
                }
            }
        }
        s
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }
}

impl VectorField3D {
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let n = dims.iter().product();
        Self { dims, spacing, c: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn from_components(a: ScalarField3D, b: ScalarField3D, c: ScalarField3D) -> Result<Self> {
        if !a.same_grid(&b) || !a.same_grid(&c) {
            return Err(Error::Grid("vector components on different grids".into()));
        }
        Ok(Self { dims: a.dims, spacing: a.spacing, c: [a.data, b.data, c.data] })
    }

    pub fn component(&self, d: usize) -> ScalarField3D {
        ScalarField3D { dims: self.dims, spacing: self.spacing, data: self.c[d].clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for d in 0..3 {
            for (a, b) in r.c[d].iter_mut().zip(&o.c[d]) {
                *a -= b;
            }
        }
        r
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut r = self.clone();
        for d in 0..3 {
            for (a, b) in r.c[d].iter_mut().zip(&o.c[d]) {
                *a += b;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_power_of_two_rejected() {
        assert!(ScalarField2D::zeros(12, 1.0).is_err());
        assert!(ScalarField3D::periodic_from_fn([8, 8, 6], [1.0; 3], |_, _, _| 0.0).is_err());
    }

    #[test]
    fn layout_is_x_fastest() {
        let f = ScalarField3D::sample([2, 3, 4], [1.0; 3], |x, y, z| x + 10.0 * y + 100.0 * z);
        assert_eq!(f.data[1], 1.0);
        assert_eq!(f.data[2], 10.0);
        assert_eq!(f.data[6], 100.0);
        assert_eq!(f.data[f.idx(1, 2, 3)], 321.0);
    }
}
