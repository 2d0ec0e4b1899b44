//! Property and oracle suites run by `dnnate check`.

use std::fmt;

use dnnate::dgp::{self, DgpConfig};
use dnnate::estimators::{confidence_interval, phi, psi, ClipSpec, Method, OutcomeSpec, PropensitySpec};
use dnnate::gradcheck::check_random_dense_nets;
use dnnate::harness::{run_experiment, ExperimentConfig, Nuisance};
use dnnate::net::{trunc, Activation, Adam, Architecture, TrainConfig};
use dnnate::rng::derive_seed;
use dnnate::stats;

use crate::CliError;

pub const SUITES: &[&str] = &[
    "gradient",
    "adam-golden",
    "formulas",
    "oracle-normality",
    "dr-variance",
    "variance-ordering",
];

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    pub adam_beta1: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            adam_beta1: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Validates `--only` names; an empty list selects every suite.
pub fn select(only: &[String]) -> Result<Vec<&'static str>, CliError> {
    if only.is_empty() {
        return Ok(SUITES.to_vec());
    }
    only.iter()
        .map(|name| {
            SUITES
                .iter()
                .find(|s| **s == name.as_str())
                .copied()
                .ok_or_else(|| {
                    CliError::Input(format!("unknown suite {name:?}; available: {}", SUITES.join(", ")))
                })
        })
        .collect()
}

pub fn run(suites: &[&'static str], opts: &CheckOptions) -> Vec<CheckOutcome> {
    suites.iter().map(|&name| run_one(name, opts)).collect()
}

pub fn run_one(name: &'static str, opts: &CheckOptions) -> CheckOutcome {
    let result = match name {
        "gradient" => gradient(opts),
        "adam-golden" => adam_golden(opts),
        "formulas" => formulas(),
        "oracle-normality" => oracle_normality(opts),
        "dr-variance" => dr_variance(opts),
        "variance-ordering" => variance_ordering(opts),
        _ => Err(format!("no suite named {name}")),
    };
    match result {
        Ok((passed, detail)) => CheckOutcome { name, passed, detail },
        Err(detail) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {detail}"),
        },
    }
}

type SuiteResult = Result<(bool, String), String>;

fn gradient(opts: &CheckOptions) -> SuiteResult {
    let report = check_random_dense_nets(50, derive_seed(opts.seed, 1)).map_err(|e| e.to_string())?;
    Ok((
        report.max_relative_error < 1e-5,
        format!(
            "max relative error {:.3e} over {} nets ({} coefficients, sigmoid and relu)",
            report.max_relative_error, report.nets, report.coefficients
        ),
    ))
}

/// Parameter after each of three Adam steps from 0 with gradients 1, 0.5
/// and -2 (lr 0.001, beta1 0.9, beta2 0.999, eps 1e-8), worked by hand.
pub const ADAM_GOLDEN: [f64; 3] = [
    -0.000_999_999_99,
    -0.001_932_179_617_018_395_9,
    -0.001_725_822_591_379_438_4,
];

fn adam_golden(opts: &CheckOptions) -> SuiteResult {
    let mut adam = Adam::new(1, 0.001, opts.adam_beta1, 0.999, 1e-8);
    let mut params = [0.0];
    let mut worst: f64 = 0.0;
    for (g, want) in [1.0, 0.5, -2.0].into_iter().zip(ADAM_GOLDEN) {
        adam.step(&mut params, &[g]);
        worst = worst.max((params[0] - want).abs());
    }
    Ok((worst < 1e-15, format!("max deviation {worst:.3e} from the hand-computed trajectory")))
}

fn formulas() -> SuiteResult {
    let err = |e: dnnate::Error| e.to_string();
    let mut x = vec![0.9; 5];
    x[2] = 0.25;
    let exact: Vec<(&str, f64, f64)> = vec![
        ("trunc(5, 2)", trunc(5.0, 2.0), 2.0),
        ("trunc(-5, 2)", trunc(-5.0, 2.0), -2.0),
        ("trunc(1.5, 2)", trunc(1.5, 2.0), 1.5),
        ("phi(T=1, Y=2, e=0.5, m1=1)", phi(true, 2.0, 0.5, 1.0).map_err(err)?, 3.0),
        ("phi(T=0, m1=1)", phi(false, 2.0, 0.5, 1.0).map_err(err)?, 1.0),
        ("psi(T=0, Y=2, e=0.5, m0=0)", psi(false, 2.0, 0.5, 0.0).map_err(err)?, 4.0),
        ("beta24_pdf(0)", dgp::beta24_pdf(0.0).map_err(err)?, 0.0),
        ("beta24_pdf(1)", dgp::beta24_pdf(1.0).map_err(err)?, 0.0),
        ("beta24_pdf(0.25)", dgp::beta24_pdf(0.25).map_err(err)?, 2.109375),
        ("true_propensity(x3=0.25)", dgp::true_propensity(&x).map_err(err)?, 0.77734375),
        ("robust_sd(constant)", stats::robust_sd(&[4.0; 9]).map_err(err)?, 0.0),
        ("median(1..5)", stats::median(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(err)?, 3.0),
        ("mean of contrasts {1,2,3}", stats::mean(&[1.0, 2.0, 3.0]), 2.0),
    ];
    let (lo95, hi95) = confidence_interval(0.0, 1.0, 100, 0.95).map_err(err)?;
    let (lo99, hi99) = confidence_interval(0.0, 1.0, 100, 0.99).map_err(err)?;
    let (lo0, hi0) = confidence_interval(5.0, 0.0, 10, 0.95).map_err(err)?;
    let close: Vec<(&str, f64, f64)> = vec![
        ("split/DR variance of {1,2,3}", stats::split_variance(&[1.0, 2.0, 3.0]), 1.0),
        ("CI(0, 1, 100, 0.95) upper", hi95, 0.195_996_398_454_005_42),
        ("CI(0, 1, 100, 0.95) lower", lo95, -0.195_996_398_454_005_42),
        ("CI(0, 1, 100, 0.99) upper", hi99, 0.257_582_930_354_890_1),
        ("CI(0, 1, 100, 0.99) lower", lo99, -0.257_582_930_354_890_1),
        ("CI(5, 0, 10) lower", lo0, 5.0),
        ("CI(5, 0, 10) upper", hi0, 5.0),
        ("robust_sd(1..5)", stats::robust_sd(&[1.0, 2.0, 3.0, 4.0, 5.0]).map_err(err)?, 2.0 / 1.349),
    ];
    let mut failures = Vec::new();
    for (label, got, want) in &exact {
        if got != want {
            failures.push(format!("{label} = {got}, expected {want}"));
        }
    }
    for (label, got, want) in &close {
        if (got - want).abs() > 1e-10 {
            failures.push(format!("{label} = {got}, expected {want}"));
        }
    }
    let total = exact.len() + close.len();
    if failures.is_empty() {
        Ok((true, format!("{total} values match ({} exactly, {} within 1e-10)", exact.len(), close.len())))
    } else {
        Ok((false, failures.join("; ")))
    }
}

fn oracle_config(inference_n: usize, replications: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dgp: DgpConfig::default(),
        inference_n,
        train_ratio: 1,
        estimators: vec![Method::DrSplit],
        nuisance: Nuisance::Oracle,
        replications,
        master_seed: seed,
        ci_level: 0.95,
        ..ExperimentConfig::default()
    }
}

fn oracle_normality(opts: &CheckOptions) -> SuiteResult {
    let report = run_experiment(&oracle_config(2000, 500, derive_seed(opts.seed, 2))).map_err(|e| e.to_string())?;
    let s = report.summary(Method::DrSplit).ok_or("missing summary")?;
    let ks = s.normality.ok_or("normality test unavailable")?;
    let passed = ks.p_value > 0.01 && (0.92..=0.98).contains(&s.coverage);
    Ok((
        passed,
        format!(
            "oracle doubly robust, n=2000, R=500: KS p-value {:.4}, 95% coverage {:.3}",
            ks.p_value, s.coverage
        ),
    ))
}

fn dr_variance(opts: &CheckOptions) -> SuiteResult {
    let n = 1000;
    let cfg = oracle_config(n, 2000, derive_seed(opts.seed, 3));
    let theory = dgp::dr_variance_monte_carlo(&cfg.dgp, 1_000_000, derive_seed(opts.seed, 4))
        .map_err(|e| e.to_string())?;
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let scaled: Vec<f64> = report
        .estimates(Method::DrSplit)
        .iter()
        .map(|e| (n as f64).sqrt() * (e - report.tau))
        .collect();
    let empirical = stats::sample_sd(&scaled).powi(2);
    let rel = (empirical - theory).abs() / theory;
    Ok((
        rel < 0.10,
        format!(
            "Monte Carlo sigma^2_DR {theory:.4} vs empirical {empirical:.4} over 2000 oracle replications (relative error {rel:.3})"
        ),
    ))
}

/// Small fitted experiment for the SD comparison; both estimators share
/// every replication's data, split and outcome fit.
pub fn ordering_config(seed: u64) -> ExperimentConfig {
    let train = TrainConfig {
        learning_rate: 0.01,
        batch_size: 32,
        epochs: 40,
        ..TrainConfig::default()
    };
    ExperimentConfig {
        dgp: DgpConfig {
            p: 5,
            ..DgpConfig::default()
        },
        inference_n: 100,
        train_ratio: 5,
        estimators: vec![Method::Split, Method::DrSplit],
        nuisance: Nuisance::Fitted,
        outcome: OutcomeSpec {
            arch: Architecture::Dense {
                hidden: vec![16],
                activation: Activation::Sigmoid,
            },
            train: train.clone(),
            trunc_const: 2.0,
        },
        propensity: PropensitySpec {
            arch: Architecture::Dense {
                hidden: vec![8],
                activation: Activation::Sigmoid,
            },
            train: TrainConfig { epochs: 20, ..train },
            clip: ClipSpec::default(),
        },
        replications: 200,
        master_seed: seed,
        ci_level: 0.95,
    }
}

fn variance_ordering(opts: &CheckOptions) -> SuiteResult {
    let report = run_experiment(&ordering_config(derive_seed(opts.seed, 5))).map_err(|e| e.to_string())?;
    let sd = |m| report.summary(m).map(|s| s.aggregate.sd).ok_or("missing summary");
    let (split, dr) = (sd(Method::Split)?, sd(Method::DrSplit)?);
    Ok((
        dr >= split,
        format!("replication SD: dr_split {dr:.5} vs split {split:.5} (R=200)"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection() {
        assert_eq!(select(&[]).unwrap().len(), SUITES.len());
        assert_eq!(select(&["formulas".into()]).unwrap(), vec!["formulas"]);
        assert!(matches!(select(&["nope".into()]), Err(CliError::Input(_))));
    }

    #[test]
    fn cheap_suites_pass() {
        let opts = CheckOptions::default();
        for name in ["gradient", "adam-golden", "formulas"] {
            let o = run_one(name, &opts);
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn wrong_beta1_breaks_only_the_adam_golden() {
        let opts = CheckOptions {
            adam_beta1: 0.5,
            ..CheckOptions::default()
        };
        assert!(!run_one("adam-golden", &opts).passed);
        assert!(run_one("gradient", &opts).passed);
    }
}
