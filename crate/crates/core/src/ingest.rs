//! Observational data from CSV files, plus the split and summary helpers
//! used for repeated estimation on a fixed dataset.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stats;

pub use crate::stats::{median, robust_sd};

/// Per-column covariate preprocessing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Standardize {
    None,
    /// `(v - mean) / sd`, sample SD.
    Zscore,
    /// `(v - min) / (max - min)`, onto [0, 1].
    #[default]
    Minmax,
}

impl Standardize {
    pub fn as_str(self) -> &'static str {
        match self {
            Standardize::None => "none",
            Standardize::Zscore => "zscore",
            Standardize::Minmax => "minmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub outcome_column: String,
    pub treatment_column: String,
    pub covariate_columns: Vec<String>,
    pub standardize: Standardize,
}

impl CsvSchema {
    /// Schema of files written by [`write_csv`]: `y`, `t`, `x1..xp`, no
    /// preprocessing.
    pub fn exported(p: usize) -> Self {
        Self {
            outcome_column: "y".into(),
            treatment_column: "t".into(),
            covariate_columns: (1..=p).map(|j| format!("x{j}")).collect(),
            standardize: Standardize::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_columns.is_empty() {
            return Err(Error::Schema("schema lists no covariate columns".into()));
        }
        let names = self.names();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Schema("empty column name in schema".into()));
            }
            if names[..i].contains(name) {
                return Err(Error::Schema(format!("column {name} appears twice in the schema")));
            }
        }
        Ok(())
    }

    /// Outcome, treatment, then covariates.
    fn names(&self) -> Vec<&str> {
        let mut v = vec![self.outcome_column.as_str(), self.treatment_column.as_str()];
        v.extend(self.covariate_columns.iter().map(String::as_str));
        v
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    read_csv(file, schema)
}

/// Column names from the header row of a CSV file.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

/// Parses a header-first, comma-separated table. Lines starting with `#`
/// are comments. Data rows are numbered from 1 in error messages.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut index = Vec::new();
    for name in schema.names() {
        match header.iter().position(|h| h == name) {
            Some(i) => index.push(i),
            None => return Err(Error::Schema(format!("column {name} not found in header"))),
        }
    }

    let p = schema.covariate_columns.len();
    let (mut x, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
    let mut bad_rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record?;
        let values: Option<Vec<f64>> = index
            .iter()
            .map(|&i| {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
            })
            .collect();
        let Some(values) = values else {
            bad_rows.push(row);
            continue;
        };
        let treated = match values[1] {
            v if v == 1.0 => true,
            v if v == 0.0 => false,
            v => {
                return Err(Error::Validation {
                    row,
                    message: format!(
                        "treatment column {} has value {v}, expected 0 or 1",
                        schema.treatment_column
                    ),
                })
            }
        };
        y.push(values[0]);
        t.push(treated);
        x.extend_from_slice(&values[2..]);
    }
    if let Some(&first) = bad_rows.first() {
        let listed: Vec<String> = bad_rows.iter().take(20).map(|r| r.to_string()).collect();
        let more = if bad_rows.len() > 20 { ", ..." } else { "" };
        return Err(Error::Validation {
            row: first,
            message: format!(
                "missing or non-numeric values in {} row(s): {}{more}",
                bad_rows.len(),
                listed.join(", ")
            ),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("CSV has no data rows"));
    }
    standardize(&mut x, p, schema)?;
    Dataset::new(x, p, t, y)
}

fn standardize(x: &mut [f64], p: usize, schema: &CsvSchema) -> Result<()> {
    if schema.standardize == Standardize::None {
        return Ok(());
    }
    let n = x.len() / p;
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
        let column_error = |message: &str| Error::ColumnValidation {
            column: schema.covariate_columns[j].clone(),
            message: message.to_string(),
        };
        let (shift, scale) = match schema.standardize {
            Standardize::Zscore => {
                let sd = if n > 1 { stats::sample_sd(&col) } else { 0.0 };
                if !(sd > 0.0) {
                    return Err(column_error("zero variance, cannot z-score"));
                }
                (stats::mean(&col), sd)
            }
            Standardize::Minmax => {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(hi > lo) {
                    return Err(column_error("constant column, cannot min-max scale"));
                }
                (lo, hi - lo)
            }
            Standardize::None => unreachable!(),
        };
        for i in 0..n {
            x[i * p + j] = (x[i * p + j] - shift) / scale;
        }
    }
    Ok(())
}

/// Writes `y,t,x1..xp` with 17 significant digits per value.
pub fn write_csv<W: Write>(d: &Dataset, mut w: W) -> Result<()> {
    let mut header = String::from("y,t");
    for j in 1..=d.p() {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for i in 0..d.n() {
        line.clear();
        line.push_str(&format!("{:.16e},{}", d.outcome(i), u8::from(d.treated(i))));
        for v in d.row(i) {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(d, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Inference set of `floor(fraction * n)` rows drawn without replacement
/// by a seeded permutation; the remaining rows form the training set.
pub fn proportion_split(d: &Dataset, inference_fraction: f64, seed: u64) -> Result<SplitPlan> {
    split_by_fraction(d.n(), inference_fraction, seed)
}

pub fn split_by_fraction(n: usize, inference_fraction: f64, seed: u64) -> Result<SplitPlan> {
    if !(inference_fraction > 0.0 && inference_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "inference fraction {inference_fraction} is not in (0, 1)"
        )));
    }
    let k = (inference_fraction * n as f64).floor() as usize;
    if k < 2 || k >= n {
        return Err(Error::invalid(format!(
            "fraction {inference_fraction} of {n} rows leaves {k} inference and {} training rows",
            n.saturating_sub(k)
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed).shuffle(&mut order);
    let mut inference = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    inference.sort_unstable();
    train.sort_unstable();
    SplitPlan::new(train, inference, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate, DgpConfig};
    use proptest::prelude::*;

    fn schema(standardize: Standardize) -> CsvSchema {
        CsvSchema {
            outcome_column: "assets".into(),
            treatment_column: "eligible".into(),
            covariate_columns: vec!["age".into(), "income".into()],
            standardize,
        }
    }

    const FIXTURE: &str = "\
# household extract
id,age,eligible,income,assets
1,30,1,2.5,100
2,40,0,3.5,-20.25
3, 50 ,1,4.5,0
";

    #[test]
    fn fixture_round_trip() {
        let d = read_csv(FIXTURE.as_bytes(), &schema(Standardize::None)).unwrap();
        let want = Dataset::new(
            vec![30.0, 2.5, 40.0, 3.5, 50.0, 4.5],
            2,
            vec![true, false, true],
            vec![100.0, -20.25, 0.0],
        )
        .unwrap();
        assert_eq!(d, want);
    }

    #[test]
    fn minmax_and_zscore() {
        let d = read_csv(FIXTURE.as_bytes(), &schema(Standardize::Minmax)).unwrap();
        let age: Vec<f64> = (0..3).map(|i| d.row(i)[0]).collect();
        assert_eq!(age, vec![0.0, 0.5, 1.0]);
        let csv = "y,t,a\n1,0,2\n1,1,4\n1,0,6\n";
        let s = CsvSchema {
            covariate_columns: vec!["a".into()],
            standardize: Standardize::Minmax,
            ..CsvSchema::exported(0)
        };
        let d = read_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.covariates(), &[0.0, 0.5, 1.0]);
        let d = read_csv(csv.as_bytes(), &CsvSchema { standardize: Standardize::Zscore, ..s }).unwrap();
        // mean 4, sample sd 2
        assert_eq!(d.covariates(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_variance_column_is_rejected() {
        let csv = "y,t,a,b\n1,0,2,7\n1,1,4,7\n";
        let s = CsvSchema {
            covariate_columns: vec!["a".into(), "b".into()],
            standardize: Standardize::Zscore,
            ..CsvSchema::exported(0)
        };
        match read_csv(csv.as_bytes(), &s) {
            Err(Error::ColumnValidation { column, .. }) => assert_eq!(column, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_binary_treatment_names_the_row() {
        let csv = "id,age,eligible,income,assets\n1,30,1,2.5,1\n2,31,2,2.5,1\n";
        match read_csv(csv.as_bytes(), &schema(Standardize::None)) {
            Err(e @ Error::Validation { row: 2, .. }) => assert!(e.to_string().contains("row 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let csv = "id,age,income,assets\n1,30,2.5,1\n";
        match read_csv(csv.as_bytes(), &schema(Standardize::None)) {
            Err(e @ Error::Schema(_)) => assert!(e.to_string().contains("eligible")),
            other => panic!("unexpected {other:?}"),
        }
        let dup = CsvSchema {
            covariate_columns: vec!["age".into(), "age".into()],
            ..schema(Standardize::None)
        };
        assert!(matches!(read_csv(FIXTURE.as_bytes(), &dup), Err(Error::Schema(_))));
    }

    #[test]
    fn bad_rows_are_listed() {
        let csv = "id,age,eligible,income,assets\n1,30,1,2.5,1\n2,x,0,2.5,1\n3,30,1,2.5,1\n4,30,1,,1\n";
        match read_csv(csv.as_bytes(), &schema(Standardize::None)) {
            Err(Error::Validation { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("2, 4"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generated_data_round_trips() {
        let d = generate(&DgpConfig { n: 200, p: 4, seed: 2, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::exported(4)).unwrap();
        assert_eq!(back.treatments(), d.treatments());
        for (a, b) in back.covariates().iter().zip(d.covariates()).chain(back.outcomes().iter().zip(d.outcomes())) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&d, &path).unwrap();
        assert_eq!(load_csv(&path, &CsvSchema::exported(4)).unwrap(), back);
        assert_eq!(read_header(&path).unwrap(), vec!["y", "t", "x1", "x2", "x3", "x4"]);
        assert!(matches!(load_csv(dir.path().join("none.csv"), &CsvSchema::exported(4)), Err(Error::Io(_))));
    }

    #[test]
    fn proportion_split_examples() {
        let plan = split_by_fraction(10, 0.2, 1).unwrap();
        assert_eq!((plan.inference().len(), plan.train().len()), (2, 8));
        assert!(plan.is_disjoint());
        assert_eq!(plan, split_by_fraction(10, 0.2, 1).unwrap());
        assert!(split_by_fraction(10, 0.0, 1).is_err());
        assert!(split_by_fraction(10, 1.0, 1).is_err());
        assert!(split_by_fraction(10, 0.1, 1).is_err());
        let d = generate(&DgpConfig { n: 10, p: 3, ..Default::default() }).unwrap();
        assert_eq!(proportion_split(&d, 0.2, 1).unwrap(), plan);
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        let mut counts = [0usize; 100];
        for seed in 0..1000 {
            for &i in split_by_fraction(100, 0.3, seed).unwrap().inference() {
                counts[i] += 1;
            }
        }
        for (i, c) in counts.iter().enumerate() {
            let f = *c as f64 / 1000.0;
            assert!((f - 0.3).abs() <= 0.05, "index {i}: {f}");
        }
    }

    #[test]
    fn robust_summaries() {
        assert_eq!(robust_sd(&[4.0; 10]).unwrap(), 0.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 3.0);
        let mut rng = Stream::new(8);
        let z: Vec<f64> = (0..100_000).map(|_| rng.normal()).collect();
        assert!((robust_sd(&z).unwrap() - 1.0).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn splits_are_exhaustive(n in 4usize..300, f in 0.05f64..0.95, seed in any::<u64>()) {
            if let Ok(plan) = split_by_fraction(n, f, seed) {
                prop_assert_eq!(plan.train().len() + plan.inference().len(), n);
                prop_assert_eq!(plan.inference().len(), (f * n as f64).floor() as usize);
            }
        }
    }
}
