//! JSON experiment configuration shared by the command-line drivers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::entropy_diag::{default_modes, QMode, StudyConfig};
use crate::error::{config, Result};
use crate::pressure::PressureLaw;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub gamma: f64,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub rho0: f64,
    pub n3: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_h: usize,
    pub l_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityConfig {
    pub mu: f64,
    /// Vertical viscosity; `null` ties it to each `ε` of the sweep.
    pub eps_visc: Option<f64>,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QgConfig {
    pub n_h: usize,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    /// Number of random trajectories for the energy hierarchy.
    pub trajectories: usize,
}

/// Missing top-level keys take their default values; sections given in
/// the file must be complete.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub law: LawConfig,
    pub profile: ProfileConfig,
    pub grid: GridConfig,
    pub viscosity: ViscosityConfig,
    pub eps: Vec<f64>,
    /// 3D time step; `null` picks `cfl`-scaled stable steps.
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_end: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `ε` values of the ansatz residual sweep.
    pub residual_eps: Vec<f64>,
    /// Vertical levels of the residual sweep; `null` picks the smallest
    /// admissible count per `ε`.
    pub residual_n3: Option<usize>,
    pub monitors: usize,
    pub sigma: Option<f64>,
    pub modes: Vec<QMode>,
    pub qg: QgConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            law: LawConfig { gamma: 2.0, a: 1.0 },
            profile: ProfileConfig { rho0: 2.0, n3: 32 },
            grid: GridConfig { n_h: 32, l_h: 2.0 * std::f64::consts::PI },
            viscosity: ViscosityConfig { mu: 0.2, eps_visc: None, lambda: 0.5 },
            eps: vec![0.2, 0.1, 0.05],
            dt: None,
            cfl: 0.25,
            t_end: 0.5,
            seed: 42,
            output_dir: PathBuf::from("out"),
            residual_eps: vec![0.1, 0.05, 0.025],
            residual_n3: None,
            monitors: 10,
            sigma: None,
            modes: default_modes(),
            qg: QgConfig { n_h: 64, dt: 1e-3, t_end: 1.0, sample_every: 100, trajectories: 10 },
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        config(format!("{name} must be positive, got {v}"))
    }
}

fn pow2(name: &str, n: usize) -> Result<()> {
    if n >= 4 && n.is_power_of_two() {
        Ok(())
    } else {
        config(format!("{name} must be a power of two >= 4, got {n}"))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        PressureLaw::new(self.law.gamma, self.law.a)?;
        positive("profile.rho0", self.profile.rho0)?;
        pow2("profile.n3", self.profile.n3)?;
        pow2("grid.n_h", self.grid.n_h)?;
        positive("grid.l_h", self.grid.l_h)?;
        positive("viscosity.mu", self.viscosity.mu)?;
        positive("viscosity.lambda", self.viscosity.lambda)?;
        if let Some(e) = self.viscosity.eps_visc {
            positive("viscosity.eps_visc", e)?;
        }
        if self.eps.is_empty() || self.residual_eps.is_empty() {
            return config("eps lists must not be empty");
        }
        for &e in self.eps.iter().chain(&self.residual_eps) {
            positive("eps", e)?;
        }
        if let Some(dt) = self.dt {
            positive("dt", dt)?;
        }
        positive("cfl", self.cfl)?;
        positive("t_end", self.t_end)?;
        if let Some(n) = self.residual_n3 {
            if n < 2 {
                return config(format!("residual_n3 must be at least 2, got {n}"));
            }
        }
        if self.monitors == 0 {
            return config("monitors must be at least 1");
        }
        if let Some(s) = self.sigma {
            positive("sigma", s)?;
        }
        pow2("qg.n_h", self.qg.n_h)?;
        positive("qg.dt", self.qg.dt)?;
        positive("qg.t_end", self.qg.t_end)?;
        if self.qg.sample_every == 0 || self.qg.trajectories == 0 {
            return config("qg.sample_every and qg.trajectories must be at least 1");
        }
        Ok(())
    }

    pub fn law(&self) -> Result<PressureLaw> {
        PressureLaw::new(self.law.gamma, self.law.a)
    }

    /// Vertical levels for the residual sweep at `eps`, given the slowest
    /// layer decay rate `k_min`. A fixed count must resolve the layers.
    pub fn residual_levels(&self, eps: f64, k_min: f64) -> Result<usize> {
        let need = (8.0 / (k_min * eps)).ceil() as usize;
        match self.residual_n3 {
            Some(n) if n < need => {
                config(format!("residual_n3 = {n} under-resolves the layers at eps = {eps}; need at least {need}"))
            }
            Some(n) => Ok(n),
            None => Ok(need),
        }
    }

    pub fn study(&self) -> Result<StudyConfig> {
        if let Some(e) = self.viscosity.eps_visc {
            if self.eps.iter().any(|x| (x - e).abs() > 1e-12 * x) {
                return config("the convergence study requires eps_visc = eps; set viscosity.eps_visc to null");
            }
        }
        if self.dt.is_some() {
            return config("the convergence study picks its own stable steps; set dt to null");
        }
        Ok(StudyConfig {
            gamma: self.law.gamma,
            a: self.law.a,
            rho0: self.profile.rho0,
            n_h: self.grid.n_h,
            n3: self.profile.n3,
            l_h: self.grid.l_h,
            mu: self.viscosity.mu,
            lambda: self.viscosity.lambda,
            eps_list: self.eps.clone(),
            t_end: self.t_end,
            cfl: self.cfl,
            monitors: self.monitors,
            sigma: self.sigma,
            modes: self.modes.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_and_validates() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string_pretty(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"eps":[0.1],"law":{"gamma":1.5,"a":1.0}}"#).unwrap();
        assert_eq!(c.eps, vec![0.1]);
        assert_eq!(c.law.gamma, 1.5);
        assert_eq!(c.qg, ExperimentConfig::default().qg);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"epsilon":[0.1]}"#).is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = ExperimentConfig::default();
        c.grid.n_h = 48;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.viscosity.mu = -1.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.law.gamma = 0.5;
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"law":{"gamma":2,"a":1,"x":0}}"#).is_err());
    }

    #[test]
    fn residual_levels_enforced() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.residual_levels(0.1, 0.5).unwrap(), 160);
        c.residual_n3 = Some(64);
        assert!(c.residual_levels(0.1, 0.5).is_err());
        assert_eq!(c.residual_levels(0.5, 0.5).unwrap(), 64);
    }

    #[test]
    fn study_requires_tied_viscosity() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.study().unwrap().eps_list, c.eps);
        c.viscosity.eps_visc = Some(0.1);
        assert!(c.study().is_err());
    }
}
