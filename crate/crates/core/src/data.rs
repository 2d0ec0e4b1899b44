use crate::error::{Error, Result};
use crate::rng::Stream;

/// Observational sample: covariates (row-major n x p), binary treatment and
/// outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    p: usize,
    x: Vec<f64>,
    t: Vec<bool>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, p: usize, t: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one covariate"));
        }
        if t.len() != n || x.len() != n * p {
            return Err(Error::invalid(format!(
                "inconsistent dataset shapes: {} covariate values for p={p}, {} treatments, {n} outcomes",
                x.len(),
                t.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("outcome in row {i} is not finite")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("covariate in row {} is not finite", i / p)));
        }
        Ok(Self { p, x, t, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn treated(&self, i: usize) -> bool {
        self.t[i]
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn treatments(&self) -> &[bool] {
        &self.t
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    /// (treated, control) counts.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let treated = self.t.iter().filter(|t| **t).count();
        (treated, self.n() - treated)
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            p: self.p,
            x,
            t: rows.iter().map(|&i| self.t[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Partition of a dataset into a learning part (nuisance fits) and an
/// inference part (averaging).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    train: Vec<usize>,
    inference: Vec<usize>,
    disjoint: bool,
}

impl SplitPlan {
    /// Validated plan over a dataset of `n` rows. Index lists must be
    /// nonempty, in range, duplicate-free and mutually disjoint.
    pub fn new(train: Vec<usize>, inference: Vec<usize>, n: usize) -> Result<Self> {
        if train.is_empty() || inference.is_empty() {
            return Err(Error::invalid("split plan needs nonempty train and inference sets"));
        }
        let mut seen = vec![0u8; n];
        for (tag, list) in [(1u8, &train), (2u8, &inference)] {
            for &i in list {
                if i >= n {
                    return Err(Error::invalid(format!("split index {i} out of range for n={n}")));
                }
                if seen[i] & tag != 0 {
                    return Err(Error::invalid(format!("split index {i} appears twice")));
                }
                if seen[i] != 0 {
                    return Err(Error::invalid(format!(
                        "split index {i} is in both the train and inference sets"
                    )));
                }
                seen[i] |= tag;
            }
        }
        Ok(Self {
            train,
            inference,
            disjoint: true,
        })
    }

    /// Both parts are the full sample. Only the non-split plug-in comparison
    /// accepts this plan; estimators that require independence reject it.
    pub fn full_sample(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("split plan over an empty dataset"));
        }
        Ok(Self {
            train: (0..n).collect(),
            inference: (0..n).collect(),
            disjoint: false,
        })
    }

    /// Random plan: a seeded permutation whose first `n_train` entries form
    /// the learning set and next `n_inference` the inference set.
    pub fn random(n: usize, n_train: usize, n_inference: usize, seed: u64) -> Result<Self> {
        if n_train + n_inference > n {
            return Err(Error::invalid(format!(
                "cannot draw {n_train} + {n_inference} rows from {n}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        Stream::new(seed).shuffle(&mut order);
        let mut train = order[..n_train].to_vec();
        let mut inference = order[n_train..n_train + n_inference].to_vec();
        train.sort_unstable();
        inference.sort_unstable();
        Self::new(train, inference, n)
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn inference(&self) -> &[usize] {
        &self.inference
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    /// |train| / |inference|.
    pub fn ratio(&self) -> f64 {
        self.train.len() as f64 / self.inference.len() as f64
    }

    pub(crate) fn check_fits(&self, n: usize) -> Result<()> {
        let max = self.train.iter().chain(&self.inference).copied().max().unwrap_or(0);
        if max >= n {
            return Err(Error::invalid(format!("split plan refers to row {max}, dataset has {n}")));
        }
        Ok(())
    }
}
