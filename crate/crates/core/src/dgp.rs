//! Simulation design: uniform covariates on [0,1]^p, control mean
//! `x1^2 + x2 + x3^2`, propensity `(1 + Beta(2,4) density at x3) / 4`,
//! constant treatment effect and additive Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{OutcomeModel, PropensityModel};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 50,
            tau: 1.0,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("dgp.n must be at least 1"));
        }
        if self.p < 3 {
            return Err(Error::invalid("dgp.p must be at least 3"));
        }
        if !self.tau.is_finite() {
            return Err(Error::invalid("dgp.tau must be finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid("dgp.noise_sd must be nonnegative"));
        }
        Ok(())
    }
}

/// Control-arm mean `x1^2 + x2 + x3^2`.
pub fn m0(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::invalid("m0 needs at least three covariates"));
    }
    Ok(x[0] * x[0] + x[1] + x[2] * x[2])
}

/// Beta(2, 4) density, `20 u (1 - u)^3`.
pub fn beta24_pdf(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("beta density argument {u} outside [0, 1]")));
    }
    Ok(20.0 * u * (1.0 - u).powi(3))
}

/// `(1 + beta24_pdf(x3)) / 4`, which lies in [0.25, 0.77734375].
pub fn true_propensity(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::invalid("propensity needs at least three covariates"));
    }
    Ok(0.25 * (1.0 + beta24_pdf(x[2])?))
}

pub fn true_m(x: &[f64], treated: bool, tau: f64) -> Result<f64> {
    Ok(m0(x)? + if treated { tau } else { 0.0 })
}

pub fn true_ate(cfg: &DgpConfig) -> f64 {
    cfg.tau
}

/// Draws a sample. Per row: p uniforms, one uniform for the treatment
/// draw, then one Gaussian for the noise.
pub fn generate(cfg: &DgpConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = Stream::new(cfg.seed);
    let mut x = Vec::with_capacity(cfg.n * cfg.p);
    let mut t = Vec::with_capacity(cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let start = x.len();
        x.extend((0..cfg.p).map(|_| rng.uniform()));
        let row = &x[start..];
        let treated = rng.uniform() < true_propensity(row)?;
        let noise = cfg.noise_sd * rng.normal();
        y.push(true_m(row, treated, cfg.tau)? + noise);
        t.push(treated);
    }
    Dataset::new(x, cfg.p, t, y)
}

/// The true regression function as an outcome model.
#[derive(Debug, Clone, Copy)]
pub struct TrueOutcome {
    pub tau: f64,
}

impl OutcomeModel for TrueOutcome {
    fn predict(&self, x: &[f64], treated: bool) -> Result<f64> {
        true_m(x, treated, self.tau)
    }

    fn covariate_dim(&self) -> Option<usize> {
        None
    }
}

/// The true propensity score as a propensity model.
#[derive(Debug, Clone, Copy)]
pub struct TruePropensity;

impl PropensityModel for TruePropensity {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        true_propensity(x)
    }

    fn covariate_dim(&self) -> Option<usize> {
        None
    }
}

/// Monte Carlo value of `Var(m1 - m0) + noise_sd^2 * E[1 / (e (1 - e))]`,
/// the asymptotic variance of the doubly robust estimator with oracle
/// nuisances. The first term is zero here because the effect is constant.
pub fn dr_variance_monte_carlo(cfg: &DgpConfig, draws: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    let mut rng = Stream::new(seed);
    let mut acc = 0.0;
    for _ in 0..draws {
        let x3 = rng.uniform();
        let e = 0.25 * (1.0 + beta24_pdf(x3)?);
        acc += 1.0 / (e * (1.0 - e));
    }
    Ok(cfg.noise_sd * cfg.noise_sd * acc / draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_x(first: [f64; 3]) -> Vec<f64> {
        let mut v = first.to_vec();
        v.extend([0.9; 5]);
        v
    }

    #[test]
    fn m0_values() {
        assert_eq!(m0(&with_x([0.0, 0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(m0(&with_x([1.0, 1.0, 1.0])).unwrap(), 3.0);
        assert_eq!(m0(&with_x([0.5, 0.5, 0.5])).unwrap(), 1.0);
        assert!(m0(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn beta_density_values() {
        assert_eq!(beta24_pdf(0.0).unwrap(), 0.0);
        assert_eq!(beta24_pdf(1.0).unwrap(), 0.0);
        assert_eq!(beta24_pdf(0.25).unwrap(), 2.109375);
        assert!(beta24_pdf(1.5).is_err());
        assert!(beta24_pdf(-0.1).is_err());
    }

    #[test]
    fn propensity_values() {
        assert_eq!(true_propensity(&with_x([0.3, 0.3, 0.0])).unwrap(), 0.25);
        assert_eq!(true_propensity(&with_x([0.3, 0.3, 0.25])).unwrap(), 0.77734375);
        assert_eq!(true_propensity(&with_x([0.3, 0.3, 1.0])).unwrap(), 0.25);
        for i in 0..=1000 {
            let e = true_propensity(&[0.0, 0.0, i as f64 / 1000.0]).unwrap();
            assert!((0.25..=0.77734375).contains(&e));
        }
    }

    #[test]
    fn regression_and_effect() {
        let x = with_x([0.5, 0.5, 0.5]);
        assert_eq!(true_m(&x, true, 1.0).unwrap(), 2.0);
        assert_eq!(true_m(&x, true, 1.0).unwrap() - true_m(&x, false, 1.0).unwrap(), 1.0);
        assert_eq!(true_ate(&DgpConfig::default()), 1.0);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let cfg = DgpConfig {
            n: 500,
            p: 5,
            seed: 12,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert!(a.covariates().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(a, generate(&DgpConfig { seed: 13, ..cfg }).unwrap());
    }

    #[test]
    fn treated_fraction_and_outcome_mean() {
        let cfg = DgpConfig {
            n: 100_000,
            p: 3,
            seed: 5,
            ..Default::default()
        };
        let d = generate(&cfg).unwrap();
        let frac = d.arm_sizes().0 as f64 / d.n() as f64;
        // E[e(X)] = (1 + integral of the density) / 4 = 1/2
        assert!((frac - 0.5).abs() < 0.005, "treated fraction {frac}");
        // E[y - tau t] = E[m0] = 1/3 + 1/2 + 1/3
        let adj = (0..d.n())
            .map(|i| d.outcome(i) - if d.treated(i) { 1.0 } else { 0.0 })
            .sum::<f64>()
            / d.n() as f64;
        assert!((adj - 7.0 / 6.0).abs() < 0.02, "mean {adj}");
    }

    #[test]
    fn covariate_moments() {
        let cfg = DgpConfig {
            n: 1_000_000,
            p: 3,
            seed: 6,
            ..Default::default()
        };
        let d = generate(&cfg).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..d.n()).map(|i| d.row(i)[j]).collect();
            let m = crate::stats::mean(&col);
            let v = crate::stats::split_variance(&col);
            assert!((m - 0.5).abs() < 0.002, "mean {m}");
            assert!((v - 1.0 / 12.0).abs() < 0.001, "var {v}");
        }
    }

    #[test]
    fn dr_variance_against_quadrature() {
        // Midpoint rule on 1/(e(1-e)) over x3 in [0,1].
        let k = 200_000;
        let quad = (0..k)
            .map(|i| {
                let e = 0.25 * (1.0 + beta24_pdf((i as f64 + 0.5) / k as f64).unwrap());
                1.0 / (e * (1.0 - e))
            })
            .sum::<f64>()
            / k as f64;
        let mc = dr_variance_monte_carlo(&DgpConfig::default(), 1_000_000, 1).unwrap();
        assert!((mc - quad).abs() / quad < 0.005, "{mc} vs {quad}");
    }
}
