//! Average treatment effect estimators built on neural-network nuisance
//! fits: the plug-in mean difference, its sample-split version, and the
//! doubly robust (augmented inverse propensity weighted) estimator with and
//! without sample splitting.
//!
//! Both split estimators report the variance estimator
//! `n/(n-1) * (mean(z^2) - mean(z)^2)` of their per-row terms `z` over the
//! inference set and a normal confidence interval
//! `estimate ± z_{α/2} sqrt(variance / n)`.

use serde::{Deserialize, Serialize};

pub use crate::data::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::net::{train_mse, trunc, Architecture, NeuralNet, TrainConfig};
use crate::rng::derive_seed;
use crate::stats::{mean, split_variance, two_sided_z};

/// Flag: the plug-in estimator has no asymptotic-normality guarantee.
pub const FLAG_NO_NORMALITY: &str = "no_asymptotic_normality";
/// Flag: a treatment arm was empty when the outcome regression was fitted.
pub const FLAG_SINGLE_ARM: &str = "single_arm_training";
/// Flag: fewer than two inference rows, so the variance is reported as 0.
pub const FLAG_VARIANCE_UNDEFINED: &str = "variance_undefined";

/// Outcome regression `m(x, t)`.
pub trait OutcomeModel: Sync {
    fn predict(&self, x: &[f64], treated: bool) -> Result<f64>;

    /// Covariate dimension the model expects, if fixed.
    fn covariate_dim(&self) -> Option<usize>;
}

/// Propensity score `e(x) = P(T = 1 | X = x)`.
pub trait PropensityModel: Sync {
    fn predict(&self, x: &[f64]) -> Result<f64>;

    fn covariate_dim(&self) -> Option<usize>;
}

fn check_dim(expected: Option<usize>, d: &Dataset, what: &str) -> Result<()> {
    match expected {
        Some(p) if p != d.p() => Err(Error::invalid(format!(
            "{what} expects {p} covariates, dataset has {}",
            d.p()
        ))),
        _ => Ok(()),
    }
}

/// Network fitted on `(x, t) -> y`, truncated to `[-bound, bound]` with
/// `bound = trunc_const * ln(n_train)`.
#[derive(Debug, Clone)]
pub struct FittedRegressor {
    net: NeuralNet,
    bound: f64,
    n_train: usize,
    single_arm: bool,
}

impl FittedRegressor {
    pub fn from_parts(net: NeuralNet, trunc_const: f64, n_train: usize) -> Result<Self> {
        if !(trunc_const > 0.0 && trunc_const.is_finite()) {
            return Err(Error::invalid("trunc_const must be positive"));
        }
        if n_train < 2 {
            return Err(Error::invalid("truncation bound C ln(n) needs at least 2 training rows"));
        }
        if net.input_dim() < 2 {
            return Err(Error::invalid("outcome network needs covariates plus the treatment input"));
        }
        Ok(Self {
            net,
            bound: trunc_const * (n_train as f64).ln(),
            n_train,
            single_arm: false,
        })
    }

    pub fn net(&self) -> &NeuralNet {
        &self.net
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    /// True when one treatment arm was absent from the training data; the
    /// missing arm is then pure extrapolation.
    pub fn single_arm(&self) -> bool {
        self.single_arm
    }

    /// Flags to attach to estimates that use this fit.
    pub fn flags(&self) -> Vec<String> {
        if self.single_arm {
            vec![FLAG_SINGLE_ARM.to_string()]
        } else {
            Vec::new()
        }
    }
}

impl OutcomeModel for FittedRegressor {
    fn predict(&self, x: &[f64], treated: bool) -> Result<f64> {
        let p = self.net.input_dim() - 1;
        if x.len() != p {
            return Err(Error::invalid(format!("regressor expects {p} covariates, got {}", x.len())));
        }
        let mut input = Vec::with_capacity(p + 1);
        input.extend_from_slice(x);
        input.push(if treated { 1.0 } else { 0.0 });
        Ok(trunc(self.net.forward_unchecked(&input), self.bound))
    }

    fn covariate_dim(&self) -> Option<usize> {
        Some(self.net.input_dim() - 1)
    }
}

/// Settings for an outcome-regression fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub trunc_const: f64,
}

/// Fits the outcome regression on all rows of `d`. The net is initialized
/// from `derive_seed(cfg.seed, 0)` and shuffled from `derive_seed(cfg.seed, 1)`.
pub fn fit_outcome_regression(
    d: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    trunc_const: f64,
) -> Result<FittedRegressor> {
    let p = d.p();
    let mut inputs = Vec::with_capacity(d.n() * (p + 1));
    for i in 0..d.n() {
        inputs.extend_from_slice(d.row(i));
        inputs.push(if d.treated(i) { 1.0 } else { 0.0 });
    }
    let net = arch.build(p + 1, cfg.init, derive_seed(cfg.seed, 0))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, 1),
        ..cfg.clone()
    };
    // Validate the bound before spending time on training.
    FittedRegressor::from_parts(net.clone(), trunc_const, d.n())?;
    let net = train_mse(&net, &inputs, d.outcomes(), &train_cfg)?;
    let mut fitted = FittedRegressor::from_parts(net, trunc_const, d.n())?;
    let (treated, control) = d.arm_sizes();
    fitted.single_arm = treated == 0 || control == 0;
    Ok(fitted)
}

/// Lower clipping level for the fitted propensity score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClipSpec {
    /// Band `[lo, 1 - lo]`.
    Fixed { lo: f64 },
    /// Band `[l, 1 - l]` with `l = 1 / (c2 ln n)`.
    Log { c2: f64 },
}

impl Default for ClipSpec {
    fn default() -> Self {
        ClipSpec::Fixed { lo: 0.01 }
    }
}

impl ClipSpec {
    pub fn level(&self, n: usize) -> Result<f64> {
        let l = match *self {
            ClipSpec::Fixed { lo } => lo,
            ClipSpec::Log { c2 } => {
                if !(c2 > 0.0) || n < 2 {
                    return Err(Error::invalid("log clipping needs c2 > 0 and n >= 2"));
                }
                1.0 / (c2 * (n as f64).ln())
            }
        };
        if !(l > 0.0 && l < 0.5) {
            return Err(Error::invalid(format!("propensity clip level {l} is not in (0, 0.5)")));
        }
        Ok(l)
    }
}

/// Network fitted by least squares on `x -> t`, recentred and truncated so
/// that predictions lie in `[clip_lo, clip_hi]`.
#[derive(Debug, Clone)]
pub struct FittedPropensity {
    net: NeuralNet,
    lo: f64,
    hi: f64,
}

impl FittedPropensity {
    /// `level` is the lower band edge, in (0, 0.5).
    pub fn from_parts(net: NeuralNet, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 0.5) {
            return Err(Error::invalid(format!("propensity clip level {level} is not in (0, 0.5)")));
        }
        Ok(Self {
            net,
            lo: level,
            hi: 1.0 - level,
        })
    }

    pub fn net(&self) -> &NeuralNet {
        &self.net
    }

    pub fn clip_lo(&self) -> f64 {
        self.lo
    }

    pub fn clip_hi(&self) -> f64 {
        self.hi
    }

    /// `0.5 + trunc(raw - 0.5, 0.5 - clip_lo)`, computed as a clamp so the
    /// band edges are hit exactly.
    pub fn from_raw(&self, raw: f64) -> f64 {
        raw.clamp(self.lo, self.hi)
    }
}

impl PropensityModel for FittedPropensity {
    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.from_raw(self.net.forward(x)?))
    }

    fn covariate_dim(&self) -> Option<usize> {
        Some(self.net.input_dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySpec {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub clip: ClipSpec,
}

/// Fits the propensity score by squared loss of `t` on `x`.
pub fn fit_propensity(
    d: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
    clip: ClipSpec,
) -> Result<FittedPropensity> {
    let (treated, control) = d.arm_sizes();
    if treated == 0 || control == 0 {
        return Err(Error::invalid(
            "propensity score is unidentifiable: training data has a single treatment arm",
        ));
    }
    let level = clip.level(d.n())?;
    let targets: Vec<f64> = d.treatments().iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let net = arch.build(d.p(), cfg.init, derive_seed(cfg.seed, 0))?;
    let train_cfg = TrainConfig {
        seed: derive_seed(cfg.seed, 1),
        ..cfg.clone()
    };
    let net = train_mse(&net, d.covariates(), &targets, &train_cfg)?;
    FittedPropensity::from_parts(net, level)
}

fn check_propensity(e: f64) -> Result<()> {
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::Internal(format!("propensity estimate {e} is not in (0, 1)")));
    }
    Ok(())
}

/// Treated-arm term `T / e (Y - m1) + m1`.
pub fn phi(treated: bool, y: f64, e_hat: f64, m1_hat: f64) -> Result<f64> {
    check_propensity(e_hat)?;
    Ok(if treated {
        (y - m1_hat) / e_hat + m1_hat
    } else {
        m1_hat
    })
}

/// Control-arm term `(1 - T) / (1 - e) (Y - m0) + m0`.
pub fn psi(treated: bool, y: f64, e_hat: f64, m0_hat: f64) -> Result<f64> {
    check_propensity(e_hat)?;
    Ok(if treated {
        m0_hat
    } else {
        (y - m0_hat) / (1.0 - e_hat) + m0_hat
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    Split,
    Dr,
    DrSplit,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::Split => "split",
            Method::Dr => "dr",
            Method::DrSplit => "dr_split",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub method: Method,
    pub estimate: f64,
    pub variance: f64,
    pub n_inference: usize,
    pub ci_level: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub flags: Vec<String>,
}

impl AteResult {
    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }

    /// `sqrt(n) (estimate - center) / sqrt(variance)`.
    pub fn standardized(&self, center: f64) -> f64 {
        (self.n_inference as f64).sqrt() * (self.estimate - center) / self.variance.sqrt()
    }
}

/// `estimate ± z_{α/2} sqrt(variance / n)` with `α = 1 - level`.
pub fn confidence_interval(estimate: f64, variance: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) || n == 0 {
        return Err(Error::invalid("confidence interval needs variance >= 0 and n >= 1"));
    }
    let half = two_sided_z(level)? * (variance / n as f64).sqrt();
    Ok((estimate - half, estimate + half))
}

/// Mean, variance and interval of per-row terms.
fn summarize(terms: &[f64], method: Method, ci_level: f64, mut flags: Vec<String>) -> Result<AteResult> {
    if terms.is_empty() {
        return Err(Error::invalid("no rows to average"));
    }
    let estimate = mean(terms);
    let variance = if terms.len() >= 2 {
        split_variance(terms)
    } else {
        flags.push(FLAG_VARIANCE_UNDEFINED.to_string());
        0.0
    };
    let (ci_lo, ci_hi) = confidence_interval(estimate, variance, terms.len(), ci_level)?;
    Ok(AteResult {
        method,
        estimate,
        variance,
        n_inference: terms.len(),
        ci_level,
        ci_lo,
        ci_hi,
        flags,
    })
}

/// `m(x_i, 1) - m(x_i, 0)` for the given rows.
pub fn contrasts(d: &Dataset, rows: &[usize], m: &dyn OutcomeModel) -> Result<Vec<f64>> {
    check_dim(m.covariate_dim(), d, "outcome model")?;
    rows.iter()
        .map(|&i| Ok(m.predict(d.row(i), true)? - m.predict(d.row(i), false)?))
        .collect()
}

/// `phi_i - psi_i` for the given rows.
pub fn dr_terms(
    d: &Dataset,
    rows: &[usize],
    e: &dyn PropensityModel,
    m: &dyn OutcomeModel,
) -> Result<Vec<f64>> {
    check_dim(m.covariate_dim(), d, "outcome model")?;
    check_dim(e.covariate_dim(), d, "propensity model")?;
    rows.iter()
        .map(|&i| {
            let x = d.row(i);
            let (t, y) = (d.treated(i), d.outcome(i));
            let e_hat = e.predict(x)?;
            Ok(phi(t, y, e_hat, m.predict(x, true)?)? - psi(t, y, e_hat, m.predict(x, false)?)?)
        })
        .collect()
}

/// Mean contrast over the same rows the regressor was fitted on. The
/// reported variance is the split formula applied to those contrasts; it
/// carries [`FLAG_NO_NORMALITY`] because the estimate is not asymptotically
/// normal.
pub fn ate_plugin(d: &Dataset, m: &dyn OutcomeModel, ci_level: f64) -> Result<AteResult> {
    let rows: Vec<usize> = (0..d.n()).collect();
    let terms = contrasts(d, &rows, m)?;
    summarize(&terms, Method::Plugin, ci_level, vec![FLAG_NO_NORMALITY.to_string()])
}

/// Split estimator from an already fitted regressor, averaged over `rows`.
pub fn ate_split_with(
    d: &Dataset,
    rows: &[usize],
    m: &dyn OutcomeModel,
    ci_level: f64,
    flags: Vec<String>,
) -> Result<AteResult> {
    if rows.len() < 2 {
        return Err(Error::invalid("inference set needs at least 2 rows"));
    }
    summarize(&contrasts(d, rows, m)?, Method::Split, ci_level, flags)
}

/// Fits the regressor on the plan's learning rows and averages contrasts
/// over its inference rows.
pub fn ate_split(
    d: &Dataset,
    plan: &SplitPlan,
    outcome: &OutcomeSpec,
    ci_level: f64,
) -> Result<AteResult> {
    plan.check_fits(d.n())?;
    if plan.inference().len() < 2 {
        return Err(Error::invalid("inference set needs at least 2 rows"));
    }
    two_sided_z(ci_level)?;
    let m = fit_outcome_regression(
        &d.subset(plan.train()),
        &outcome.arch,
        &outcome.train,
        outcome.trunc_const,
    )?;
    ate_split_with(d, plan.inference(), &m, ci_level, m.flags())
}

/// Doubly robust estimate over all rows of `d` with given nuisances.
pub fn ate_doubly_robust(
    d: &Dataset,
    e: &dyn PropensityModel,
    m: &dyn OutcomeModel,
    ci_level: f64,
) -> Result<AteResult> {
    let rows: Vec<usize> = (0..d.n()).collect();
    summarize(&dr_terms(d, &rows, e, m)?, Method::Dr, ci_level, Vec::new())
}

/// Doubly robust estimate over `rows` with nuisances fitted elsewhere.
pub fn ate_dr_split_with(
    d: &Dataset,
    rows: &[usize],
    e: &dyn PropensityModel,
    m: &dyn OutcomeModel,
    ci_level: f64,
    flags: Vec<String>,
) -> Result<AteResult> {
    if rows.len() < 2 {
        return Err(Error::invalid("inference set needs at least 2 rows"));
    }
    summarize(&dr_terms(d, rows, e, m)?, Method::DrSplit, ci_level, flags)
}

/// Fits both nuisances on the learning rows and evaluates the doubly
/// robust average on the (disjoint) inference rows.
pub fn ate_dr_split(
    d: &Dataset,
    plan: &SplitPlan,
    outcome: &OutcomeSpec,
    propensity: &PropensitySpec,
    ci_level: f64,
) -> Result<AteResult> {
    plan.check_fits(d.n())?;
    if !plan.is_disjoint() {
        return Err(Error::invalid("doubly robust split needs disjoint learning and inference sets"));
    }
    if plan.inference().len() < 2 {
        return Err(Error::invalid("inference set needs at least 2 rows"));
    }
    two_sided_z(ci_level)?;
    let d1 = d.subset(plan.train());
    let e = fit_propensity(&d1, &propensity.arch, &propensity.train, propensity.clip)?;
    let m = fit_outcome_regression(&d1, &outcome.arch, &outcome.train, outcome.trunc_const)?;
    ate_dr_split_with(d, plan.inference(), &e, &m, ci_level, m.flags())
}
