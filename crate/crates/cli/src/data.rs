//! Loading and synthesizing logistic-regression data.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use ranvar::models::{standardize, Matrix};
use ranvar::special::sigmoid;

use crate::error::CliError;

/// Maps a raw outcome to {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelRule {
    /// 1 when the value equals the constant.
    Eq(f64),
    /// 1 when the value exceeds the constant.
    Gt(f64),
    /// Values must already be 0 or 1.
    Binary,
}

impl LabelRule {
    pub fn apply(&self, v: f64) -> Option<f64> {
        match *self {
            LabelRule::Eq(c) => Some(f64::from(u8::from(v == c))),
            LabelRule::Gt(c) => Some(f64::from(u8::from(v > c))),
            LabelRule::Binary => (v == 0.0 || v == 1.0).then_some(v),
        }
    }
}

impl FromStr for LabelRule {
    type Err = String;

    /// `eq:2`, `gt:0.5`, or `binary`.
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "binary" {
            return Ok(LabelRule::Binary);
        }
        let (op, val) = s
            .split_once(':')
            .ok_or_else(|| format!("label rule {s:?}: expected eq:V, gt:V or binary"))?;
        let v: f64 = val
            .parse()
            .map_err(|_| format!("label rule {s:?}: {val:?} is not a number"))?;
        match op {
            "eq" => Ok(LabelRule::Eq(v)),
            "gt" => Ok(LabelRule::Gt(v)),
            _ => Err(format!("label rule {s:?}: unknown operator {op:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    /// Zero-based; the last column when absent.
    pub label_column: Option<usize>,
    pub rule: LabelRule,
    pub has_header: bool,
    pub standardize: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: None,
            rule: LabelRule::Binary,
            has_header: false,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
    /// Columns left unscaled because they were constant.
    pub constant_columns: Vec<usize>,
    pub true_weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }
    pub fn d(&self) -> usize {
        self.features.cols()
    }
}

/// Read comma-separated numeric rows: one label column, the rest features.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut label_col = None;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let lc = *label_col.get_or_insert_with(|| {
            opts.label_column
                .unwrap_or_else(|| record.len().saturating_sub(1))
        });
        if lc >= record.len() {
            return Err(CliError::Data(format!(
                "line {line}: label column {lc} but only {} columns",
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(record.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!("line {line}, column {col}: cannot parse {cell:?} as a number"))
            })?;
            if col == lc {
                let y = opts.rule.apply(v).ok_or_else(|| {
                    CliError::Data(format!("line {line}, column {col}: label {v} is not 0 or 1"))
                })?;
                labels.push(y);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let mut features = Matrix::from_rows(&rows).map_err(|e| CliError::Data(e.to_string()))?;
    if features.cols() == 0 {
        return Err(CliError::Data("no feature columns".into()));
    }
    let constant_columns = if opts.standardize {
        let c = standardize(&mut features);
        if !c.is_empty() {
            log::warn!("constant feature columns {c:?} were centered but not scaled");
        }
        c
    } else {
        Vec::new()
    };
    log::info!(
        "loaded {} rows, {} features from {}",
        features.rows(),
        features.cols(),
        path.display()
    );
    Ok(Dataset {
        features,
        labels,
        constant_columns,
        true_weights: None,
    })
}

/// x ~ N(0, 1), w* ~ N(0, 1/d), b* = 0, y ~ Bernoulli(σ(x·w* + b*)).
pub fn synth_data(n: usize, d: usize, seed: u64) -> Result<Dataset, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Normal::new(0.0, (1.0 / d.max(1) as f64).sqrt())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let w: Vec<f64> = (0..d).map(|_| scale.sample(&mut rng)).collect();
    synth_with(n, &w, 0.0, &mut rng)
}

/// Like [`synth_data`] with given weights and bias.
pub fn synth_data_with(n: usize, weights: &[f64], bias: f64, seed: u64) -> Result<Dataset, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_with(n, weights, bias, &mut rng)
}

fn synth_with(n: usize, w: &[f64], bias: f64, rng: &mut ChaCha8Rng) -> Result<Dataset, CliError> {
    let d = w.len();
    if n == 0 || d == 0 {
        return Err(CliError::Data(format!("synthetic data needs n, d >= 1, got {n}, {d}")));
    }
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let features = Matrix::new(n, d, data).map_err(|e| CliError::Data(e.to_string()))?;
    let labels = (0..n)
        .map(|i| {
            let eta: f64 = features.row(i).iter().zip(w).map(|(x, w)| x * w).sum::<f64>() + bias;
            let p = Bernoulli::new(sigmoid(eta)).expect("sigmoid lies in [0, 1]");
            f64::from(u8::from(p.sample(rng)))
        })
        .collect();
    Ok(Dataset {
        features,
        labels,
        constant_columns: Vec::new(),
        true_weights: Some(w.to_vec()),
    })
}
