//! Seeded replication experiments over the simulation design: draw a
//! dataset, split it, fit nuisances, estimate, and summarize the
//! distribution of the estimates.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SplitPlan;
use crate::dgp::{self, DgpConfig, TrueOutcome, TruePropensity};
use crate::error::{Error, Result};
use crate::estimators::{
    ate_dr_split_with, ate_split_with, fit_outcome_regression, fit_propensity, AteResult,
    ClipSpec, Method, OutcomeModel, OutcomeSpec, PropensityModel, PropensitySpec,
};
use crate::net::{Activation, Architecture, TrainConfig};
use crate::rng::{derive_seed, RNG_IDENTITY};
use crate::stats::{self, normal_cdf};

/// Where the nuisance functions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nuisance {
    /// Networks fitted on the learning part of each replication.
    Fitted,
    /// The true regression and propensity functions of the design.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Design parameters. `n` and `seed` are replaced in every replication
    /// by `(train_ratio + 1) * inference_n` and the replication's data seed.
    pub dgp: DgpConfig,
    pub inference_n: usize,
    /// c in `|D1| = c * inference_n`.
    pub train_ratio: usize,
    pub estimators: Vec<Method>,
    pub nuisance: Nuisance,
    /// The `train.seed` fields are replaced per replication.
    pub outcome: OutcomeSpec,
    pub propensity: PropensitySpec,
    pub replications: usize,
    pub master_seed: u64,
    pub ci_level: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let hidden = vec![51, 51, 51];
        Self {
            dgp: DgpConfig::default(),
            inference_n: 1000,
            train_ratio: 5,
            estimators: vec![Method::Split, Method::DrSplit],
            nuisance: Nuisance::Fitted,
            outcome: OutcomeSpec {
                arch: Architecture::Dense {
                    hidden: hidden.clone(),
                    activation: Activation::Sigmoid,
                },
                train: TrainConfig::default(),
                trunc_const: 2.0,
            },
            propensity: PropensitySpec {
                arch: Architecture::Dense {
                    hidden,
                    activation: Activation::Sigmoid,
                },
                train: TrainConfig {
                    epochs: 100,
                    ..TrainConfig::default()
                },
                clip: ClipSpec::default(),
            },
            replications: 200,
            master_seed: 0,
            ci_level: 0.95,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if self.train_ratio < 1 {
            return Err(Error::invalid("train_ratio must be at least 1"));
        }
        if self.inference_n < 2 {
            return Err(Error::invalid("inference_n must be at least 2"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("estimator set is empty"));
        }
        for (i, m) in self.estimators.iter().enumerate() {
            if !matches!(m, Method::Split | Method::DrSplit) {
                return Err(Error::invalid(format!(
                    "estimator {m} is not available in experiments (use split or dr_split)"
                )));
            }
            if self.estimators[..i].contains(m) {
                return Err(Error::invalid(format!("estimator {m} listed twice")));
            }
        }
        stats::two_sided_z(self.ci_level)?;
        self.dataset_config(0).validate()?;
        if self.nuisance == Nuisance::Fitted {
            self.outcome.train.validate()?;
            let p = self.dgp.p;
            self.outcome.arch.build(p + 1, self.outcome.train.init, 0)?;
            if !(self.outcome.trunc_const > 0.0 && self.outcome.trunc_const.is_finite()) {
                return Err(Error::invalid("outcome.trunc_const must be positive"));
            }
            if self.estimators.contains(&Method::DrSplit) {
                self.propensity.train.validate()?;
                self.propensity.arch.build(p, self.propensity.train.init, 0)?;
                self.propensity.clip.level(self.n_train())?;
            }
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        self.train_ratio * self.inference_n
    }

    /// Label used for the `activation` column of the aggregate table.
    pub fn activation_label(&self) -> &'static str {
        match self.nuisance {
            Nuisance::Fitted => self.outcome.arch.activation().as_str(),
            Nuisance::Oracle => "oracle",
        }
    }

    fn dataset_config(&self, seed: u64) -> DgpConfig {
        DgpConfig {
            n: self.n_train() + self.inference_n,
            seed,
            ..self.dgp.clone()
        }
    }
}

/// Seed of replication `r` and its sub-streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationSeeds {
    pub replication: u64,
    pub data: u64,
    pub split: u64,
    pub outcome: u64,
    pub propensity: u64,
}

impl ReplicationSeeds {
    pub fn new(master_seed: u64, r: usize) -> Self {
        let replication = derive_seed(master_seed, r as u64);
        Self {
            replication,
            data: derive_seed(replication, 0),
            split: derive_seed(replication, 1),
            outcome: derive_seed(replication, 2),
            propensity: derive_seed(replication, 3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// One result per configured estimator, in configuration order.
    pub results: Vec<AteResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub method: Method,
    pub aggregate: Aggregate,
    pub coverage: f64,
    /// KS test of the estimates standardized by their own mean and SD.
    /// Absent with fewer than 20 replications or a degenerate sample.
    pub normality: Option<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub config: ExperimentConfig,
    pub tau: f64,
    pub replications: Vec<Replication>,
    pub summaries: Vec<EstimatorSummary>,
}

impl ReplicationReport {
    fn position(&self, method: Method) -> Option<usize> {
        self.config.estimators.iter().position(|m| *m == method)
    }

    /// Per-replication results of one estimator, in replication order.
    pub fn results(&self, method: Method) -> Vec<&AteResult> {
        match self.position(method) {
            Some(k) => self.replications.iter().map(|r| &r.results[k]).collect(),
            None => Vec::new(),
        }
    }

    pub fn estimates(&self, method: Method) -> Vec<f64> {
        self.results(method).iter().map(|r| r.estimate).collect()
    }

    pub fn summary(&self, method: Method) -> Option<&EstimatorSummary> {
        self.position(method).map(|k| &self.summaries[k])
    }
}

fn run_replication(cfg: &ExperimentConfig, r: usize) -> Result<Replication> {
    let seeds = ReplicationSeeds::new(cfg.master_seed, r);
    let d = dgp::generate(&cfg.dataset_config(seeds.data))?;
    let plan = SplitPlan::random(d.n(), cfg.n_train(), cfg.inference_n, seeds.split)?;
    let wants_dr = cfg.estimators.contains(&Method::DrSplit);

    let (m, e, flags): (Box<dyn OutcomeModel>, Option<Box<dyn PropensityModel>>, Vec<String>) =
        match cfg.nuisance {
            Nuisance::Oracle => (
                Box::new(TrueOutcome { tau: cfg.dgp.tau }),
                Some(Box::new(TruePropensity)),
                Vec::new(),
            ),
            Nuisance::Fitted => {
                let d1 = d.subset(plan.train());
                let train = TrainConfig {
                    seed: seeds.outcome,
                    ..cfg.outcome.train.clone()
                };
                let m = fit_outcome_regression(&d1, &cfg.outcome.arch, &train, cfg.outcome.trunc_const)?;
                let e: Option<Box<dyn PropensityModel>> = if wants_dr {
                    let train = TrainConfig {
                        seed: seeds.propensity,
                        ..cfg.propensity.train.clone()
                    };
                    Some(Box::new(fit_propensity(
                        &d1,
                        &cfg.propensity.arch,
                        &train,
                        cfg.propensity.clip,
                    )?))
                } else {
                    None
                };
                let flags = m.flags();
                (Box::new(m), e, flags)
            }
        };

    let mut results = Vec::with_capacity(cfg.estimators.len());
    for method in &cfg.estimators {
        let res = match method {
            Method::Split => ate_split_with(&d, plan.inference(), m.as_ref(), cfg.ci_level, flags.clone())?,
            Method::DrSplit => {
                let e = e.as_deref().ok_or_else(|| Error::Internal("missing propensity fit".into()))?;
                ate_dr_split_with(&d, plan.inference(), e, m.as_ref(), cfg.ci_level, flags.clone())?
            }
            other => return Err(Error::invalid(format!("estimator {other} is not available"))),
        };
        results.push(res);
    }
    Ok(Replication {
        index: r,
        seed: seeds.replication,
        results,
    })
}

/// Runs all replications on the current rayon pool and summarizes them.
/// The report does not depend on the number of threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReplicationReport> {
    cfg.validate()?;
    let outcomes: Vec<Result<Replication>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect();
    let mut replications = Vec::with_capacity(outcomes.len());
    for (index, rep) in outcomes.into_iter().enumerate() {
        replications.push(rep.map_err(|e| Error::Replication {
            index,
            source: Box::new(e),
        })?);
    }
    let tau = dgp::true_ate(&cfg.dgp);
    let mut summaries = Vec::with_capacity(cfg.estimators.len());
    for (k, &method) in cfg.estimators.iter().enumerate() {
        let results: Vec<AteResult> = replications.iter().map(|r| r.results[k].clone()).collect();
        let estimates: Vec<f64> = results.iter().map(|r| r.estimate).collect();
        let agg = aggregate(&estimates, tau)?;
        let normality = if estimates.len() >= 20 && agg.sd > 0.0 {
            Some(ks_normality(&estimates, agg.mean, agg.sd)?)
        } else {
            None
        };
        summaries.push(EstimatorSummary {
            method,
            aggregate: agg,
            coverage: coverage(&results, tau),
            normality,
        });
    }
    Ok(ReplicationReport {
        config: cfg.clone(),
        tau,
        replications,
        summaries,
    })
}

/// Mean, median, SD (denominator n - 1, zero for a single value) and MSE
/// against `tau`.
pub fn aggregate(estimates: &[f64], tau: f64) -> Result<Aggregate> {
    if estimates.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty list"));
    }
    let sd = if estimates.len() > 1 {
        stats::sample_sd(estimates)
    } else {
        0.0
    };
    Ok(Aggregate {
        mean: stats::mean(estimates),
        median: stats::median(estimates)?,
        sd,
        mse: estimates.iter().map(|e| (e - tau).powi(2)).sum::<f64>() / estimates.len() as f64,
    })
}

/// Fraction of intervals containing `tau`. Zero for an empty list.
pub fn coverage(results: &[AteResult], tau: f64) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.covers(tau)).count() as f64 / results.len() as f64
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > x) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Dual series, which converges quickly for small x.
        let mut cdf = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            cdf += (-j * j * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `(estimates - center) / scale` against N(0, 1),
/// with the asymptotic p-value `kolmogorov_sf(sqrt(n) D)`.
pub fn ks_normality(estimates: &[f64], center: f64, scale: f64) -> Result<KsResult> {
    if estimates.len() < 20 {
        return Err(Error::invalid(format!(
            "normality test needs at least 20 values, got {}",
            estimates.len()
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("normality test scale {scale} must be positive")));
    }
    let z = stats::sorted(&estimates.iter().map(|e| (e - center) / scale).collect::<Vec<_>>());
    let n = z.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in z.iter().enumerate() {
        let f = normal_cdf(v);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    })
}

/// Gaussian kernel density on `grid_points` evenly spaced points over
/// `[min - 3h, max + 3h]` with Silverman's bandwidth `h = 1.06 sd R^(-1/5)`.
pub fn kde(estimates: &[f64], grid_points: usize) -> Result<Vec<(f64, f64)>> {
    if estimates.len() < 2 {
        return Err(Error::invalid("density estimate needs at least 2 values"));
    }
    if grid_points < 2 {
        return Err(Error::invalid("density grid needs at least 2 points"));
    }
    let sd = stats::sample_sd(estimates);
    if !(sd > 0.0) {
        return Err(Error::invalid("density estimate of a sample with zero spread"));
    }
    let r = estimates.len() as f64;
    let h = 1.06 * sd * r.powf(-0.2);
    let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let norm = 1.0 / (r * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok((0..grid_points)
        .map(|i| {
            let x = lo + step * i as f64;
            let density = estimates
                .iter()
                .map(|e| {
                    let u = (x - e) / h;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm;
            (x, density)
        })
        .collect())
}

/// Identification stamped into every exported file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub rng: String,
    pub master_seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(master_seed: u64, config_hash: impl Into<String>) -> Self {
        Self {
            tool_version: format!("dnnate {}", env!("CARGO_PKG_VERSION")),
            rng: RNG_IDENTITY.to_string(),
            master_seed,
            config_hash: config_hash.into(),
        }
    }

    /// `#`-prefixed comment lines for CSV output.
    pub fn comment_lines(&self) -> String {
        format!(
            "# tool_version: {}\n# rng: {}\n# master_seed: {}\n# config_hash: {}\n",
            self.tool_version, self.rng, self.master_seed, self.config_hash
        )
    }
}

pub const AGGREGATE_HEADER: &str = "n1,estimator,activation,mean,median,sd,mse,coverage,ks_p";

/// Aggregate table, one row per estimator, preceded by provenance comments.
pub fn write_aggregate_csv<W: Write>(report: &ReplicationReport, prov: &Provenance, mut w: W) -> Result<()> {
    w.write_all(prov.comment_lines().as_bytes())?;
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for s in &report.summaries {
        let a = &s.aggregate;
        let ks = s.normality.map(|k| k.p_value.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            report.config.n_train(),
            s.method,
            report.config.activation_label(),
            a.mean,
            a.median,
            a.sd,
            a.mse,
            s.coverage,
            ks
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ReplicationLine<'a> {
    replication: usize,
    seed: u64,
    results: &'a [AteResult],
    provenance: &'a Provenance,
}

/// One JSON object per replication.
pub fn write_replications_jsonl<W: Write>(
    report: &ReplicationReport,
    prov: &Provenance,
    mut w: W,
) -> Result<()> {
    for rep in &report.replications {
        let line = ReplicationLine {
            replication: rep.index,
            seed: rep.seed,
            results: &rep.results,
            provenance: prov,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Two-column `x,density` table preceded by provenance comments.
pub fn write_kde_csv<W: Write>(grid: &[(f64, f64)], prov: &Provenance, mut w: W) -> Result<()> {
    w.write_all(prov.comment_lines().as_bytes())?;
    writeln!(w, "x,density")?;
    for (x, d) in grid {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}
