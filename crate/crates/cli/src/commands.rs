use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use dnnate::data::Dataset;
use dnnate::estimators::{
    ate_dr_split_with, ate_split_with, fit_outcome_regression, fit_propensity, AteResult, Method,
};
use dnnate::harness::{
    kde, run_experiment, write_aggregate_csv, write_kde_csv, write_replications_jsonl, Provenance,
    AGGREGATE_HEADER,
};
use dnnate::ingest::{self, CsvSchema};
use dnnate::net::TrainConfig;
use dnnate::rng::derive_seed;

use crate::{CliError, RunConfig};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn finish(mut w: BufWriter<File>) -> Result<(), CliError> {
    w.flush()?;
    Ok(())
}

/// Runs the replication experiment and writes `aggregate.csv`,
/// `replications.jsonl`, `kde_<estimator>.csv` and `config.toml` to the
/// output directory. Returns the text to print.
pub fn simulate(cfg: &RunConfig) -> Result<String, CliError> {
    let report = run_experiment(&cfg.experiment())?;
    let prov = Provenance::new(cfg.run.seed, cfg.hash());
    let dir = PathBuf::from(&cfg.run.out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;

    let mut aggregate = Vec::new();
    write_aggregate_csv(&report, &prov, &mut aggregate)?;
    let mut w = create(&dir, "aggregate.csv")?;
    w.write_all(&aggregate)?;
    finish(w)?;

    let mut w = create(&dir, "replications.jsonl")?;
    write_replications_jsonl(&report, &prov, &mut w)?;
    finish(w)?;

    let mut notes = String::new();
    for s in &report.summaries {
        let name = format!("kde_{}.csv", s.method);
        match kde(&report.estimates(s.method), cfg.experiment.kde_points) {
            Ok(grid) => {
                let mut w = create(&dir, &name)?;
                write_kde_csv(&grid, &prov, &mut w)?;
                finish(w)?;
            }
            Err(e) => notes.push_str(&format!("skipped {name}: {e}\n")),
        }
    }

    let mut normalized = cfg.clone();
    normalized.run.threads = 0;
    normalized.run.out = String::new();
    let mut w = create(&dir, "config.toml")?;
    w.write_all(prov.comment_lines().as_bytes())?;
    w.write_all(b"# run.threads and run.out are reset; they do not affect results.\n")?;
    w.write_all(normalized.dump().as_bytes())?;
    finish(w)?;

    let table = String::from_utf8_lossy(&aggregate);
    let mut out: String = table
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    debug_assert!(out.starts_with(AGGREGATE_HEADER));
    out.push_str(&notes);
    out.push_str(&format!("wrote results to {}\n", dir.display()));
    Ok(out)
}

#[derive(Debug, Serialize)]
struct DataInfo {
    path: String,
    n: usize,
    p: usize,
    covariates: Vec<String>,
    standardize: &'static str,
}

#[derive(Debug, Serialize)]
struct EstimatorRuns {
    method: Method,
    median: f64,
    robust_sd: f64,
    /// One result per repeat; left out of the printed summary when there
    /// are several.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    results: Vec<AteResult>,
}

#[derive(Debug, Serialize)]
struct FractionRuns {
    inference_fraction: f64,
    n_inference: usize,
    n_train: usize,
    estimators: Vec<EstimatorRuns>,
}

#[derive(Debug, Serialize)]
struct EstimateDocument {
    provenance: Provenance,
    data: DataInfo,
    repeats: usize,
    fractions: Vec<FractionRuns>,
}

fn schema(cfg: &RunConfig) -> Result<CsvSchema, CliError> {
    let path = Path::new(&cfg.data.path);
    if !path.is_file() {
        return Err(CliError::Input(format!("data file {} does not exist", path.display())));
    }
    let covariates = if cfg.data.covariates.is_empty() {
        ingest::read_header(path)?
            .into_iter()
            .filter(|c| *c != cfg.data.outcome_column && *c != cfg.data.treatment_column)
            .collect()
    } else {
        cfg.data.covariates.clone()
    };
    Ok(CsvSchema {
        outcome_column: cfg.data.outcome_column.clone(),
        treatment_column: cfg.data.treatment_column.clone(),
        covariate_columns: covariates,
        standardize: cfg.data.standardize,
    })
}

/// One random split: fit the nuisances on the training rows and evaluate
/// each estimator on the inference rows.
fn estimate_once(
    cfg: &RunConfig,
    d: &Dataset,
    fraction: f64,
    seed: u64,
) -> dnnate::Result<Vec<AteResult>> {
    let plan = ingest::proportion_split(d, fraction, derive_seed(seed, 0))?;
    let d1 = d.subset(plan.train());
    let outcome = cfg.outcome_spec();
    let train = TrainConfig {
        seed: derive_seed(seed, 1),
        ..outcome.train.clone()
    };
    let m = fit_outcome_regression(&d1, &outcome.arch, &train, outcome.trunc_const)?;
    let mut results = Vec::new();
    for method in &cfg.estimate.estimators {
        let r = match method {
            Method::DrSplit => {
                let spec = cfg.propensity_spec();
                let train = TrainConfig {
                    seed: derive_seed(seed, 2),
                    ..spec.train.clone()
                };
                let e = fit_propensity(&d1, &spec.arch, &train, spec.clip)?;
                ate_dr_split_with(d, plan.inference(), &e, &m, cfg.run.ci_level, m.flags())?
            }
            _ => ate_split_with(d, plan.inference(), &m, cfg.run.ci_level, m.flags())?,
        };
        results.push(r);
    }
    Ok(results)
}

/// Loads the data, runs `repeats` random splits for every inference
/// fraction and writes `estimate.json`. Returns the text to print.
pub fn estimate(cfg: &RunConfig) -> Result<String, CliError> {
    let schema = schema(cfg)?;
    let d = ingest::load_csv(&cfg.data.path, &schema)?;
    let repeats = cfg.estimate.repeats;

    let mut fractions = Vec::new();
    for (fi, &fraction) in cfg.estimate.fractions.iter().enumerate() {
        let base = derive_seed(cfg.run.seed, fi as u64);
        let runs: Vec<dnnate::Result<Vec<AteResult>>> = (0..repeats)
            .into_par_iter()
            .map(|r| estimate_once(cfg, &d, fraction, derive_seed(base, r as u64)))
            .collect();
        let runs = runs.into_iter().collect::<dnnate::Result<Vec<_>>>()?;
        let n_inference = runs[0][0].n_inference;
        let mut estimators = Vec::new();
        for (k, &method) in cfg.estimate.estimators.iter().enumerate() {
            let results: Vec<AteResult> = runs.iter().map(|r| r[k].clone()).collect();
            let estimates: Vec<f64> = results.iter().map(|r| r.estimate).collect();
            estimators.push(EstimatorRuns {
                method,
                median: ingest::median(&estimates)?,
                robust_sd: ingest::robust_sd(&estimates)?,
                results,
            });
        }
        fractions.push(FractionRuns {
            inference_fraction: fraction,
            n_inference,
            n_train: d.n() - n_inference,
            estimators,
        });
    }

    let mut doc = EstimateDocument {
        provenance: Provenance::new(cfg.run.seed, cfg.hash()),
        data: DataInfo {
            path: cfg.data.path.clone(),
            n: d.n(),
            p: d.p(),
            covariates: schema.covariate_columns.clone(),
            standardize: schema.standardize.as_str(),
        },
        repeats,
        fractions,
    };

    let dir = PathBuf::from(&cfg.run.out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut w = create(&dir, "estimate.json")?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_all(b"\n")?;
    finish(w)?;

    if repeats > 1 {
        for f in &mut doc.fractions {
            for e in &mut f.estimators {
                e.results.clear();
            }
        }
    }
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    Ok(text)
}
