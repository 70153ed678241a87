//! Multi-dimensional complex FFTs over row-major data with the first axis
//! fastest.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftPlan {
    dims: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftPlan {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dims: dims.to_vec(),
            fwd: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inv: dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len());
        let mut stride = 1;
        for (ax, &n) in self.dims.iter().enumerate() {
            let plan = &plans[ax];
            if stride == 1 {
                plan.process(data);
            } else {
                let block = stride * n;
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                for outer in 0..data.len() / block {
                    let base = outer * block;
                    for inner in 0..stride {
                        for j in 0..n {
                            line[j] = data[base + inner + j * stride];
                        }
                        plan.process(&mut line);
                        for j in 0..n {
                            data[base + inner + j * stride] = line[j];
                        }
                    }
                }
            }
            stride *= n;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward_real(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward(&mut c);
        c
    }

    pub fn inverse_real(&self, s: &[Complex64]) -> Vec<f64> {
        let mut c = s.to_vec();
        self.inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }
}

/// Angular wavenumbers for `n` points on a period `l`, Nyquist mode zeroed.
pub fn wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let f = 2.0 * std::f64::consts::PI / l;
    (0..n)
        .map(|j| {
            if 2 * j == n {
                0.0
            } else if 2 * j < n {
                f * j as f64
            } else {
                f * (j as f64 - n as f64)
            }
        })
        .collect()
}

/// Signed integer wavenumber of index `j`.
pub fn mode_index(j: usize, n: usize) -> i64 {
    if 2 * j <= n {
        j as i64
    } else {
        j as i64 - n as i64
    }
}
