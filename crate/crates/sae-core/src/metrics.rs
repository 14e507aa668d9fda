//! Ensemble predictive densities and posterior-comparison metrics.
//!
//! An ensemble's predictive density is the uniform mixture of its members'
//! predictives. Closeness to a reference predictive is measured with the
//! agreement (fraction of matching argmax classes) and mean total variation
//! for classification, and a point-wise empirical Wasserstein-2 distance for
//! regression.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::nn::{self, Matrix, Task};

/// Per-input predictive density: class probabilities for classification,
/// predictive samples for regression.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictiveDensity {
    /// `n x K` matrix of class probabilities, rows summing to one.
    Classification(Matrix),
    /// `n x S` matrix of predictive samples.
    Regression(Matrix),
}

impl PredictiveDensity {
    pub fn classification(probs: Matrix) -> Result<Self> {
        for i in 0..probs.rows() {
            let row = probs.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "predictive row {i} sums to {sum}, not 1"
                )));
            }
            if row.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
                return Err(Error::InvalidConfig(format!(
                    "predictive row {i} has entries outside [0, 1]"
                )));
            }
        }
        Ok(PredictiveDensity::Classification(probs))
    }

    pub fn regression(samples: Matrix) -> Result<Self> {
        if samples.cols() == 0 {
            return Err(Error::InvalidConfig(
                "regression predictive needs at least one sample per input".into(),
            ));
        }
        if !samples.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("regression predictive samples".into()));
        }
        Ok(PredictiveDensity::Regression(samples))
    }

    pub fn n(&self) -> usize {
        match self {
            PredictiveDensity::Classification(m) | PredictiveDensity::Regression(m) => m.rows(),
        }
    }

    pub fn classification_probs(&self) -> Result<&Matrix> {
        match self {
            PredictiveDensity::Classification(m) => Ok(m),
            PredictiveDensity::Regression(_) => Err(Error::TaskMismatch(
                "expected a classification predictive".into(),
            )),
        }
    }

    pub fn regression_samples(&self) -> Result<&Matrix> {
        match self {
            PredictiveDensity::Regression(m) => Ok(m),
            PredictiveDensity::Classification(_) => Err(Error::TaskMismatch(
                "expected a regression predictive".into(),
            )),
        }
    }

    /// Comma-separated export with a one-line header naming the columns.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let (matrix, prefix) = match self {
            PredictiveDensity::Classification(m) => (m, "class"),
            PredictiveDensity::Regression(m) => (m, "sample"),
        };
        let header: Vec<String> = (0..matrix.cols()).map(|j| format!("{prefix}_{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..matrix.rows() {
            let row: Vec<String> = matrix.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the format written by [`Self::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty predictive file".into()))?
            .map_err(Error::Io)?;
        let is_classification = header.starts_with("class_");
        let is_regression = header.starts_with("sample_");
        if !is_classification && !is_regression {
            return Err(Error::Format(format!(
                "unrecognized predictive header: {header}"
            )));
        }
        let cols = header.split(',').count();
        let mut data = Vec::new();
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for (colno, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    row: lineno + 1,
                    col: colno + 1,
                    message: format!("bad number: {cell:?}"),
                })?;
                data.push(v);
                count += 1;
            }
            if count != cols {
                return Err(Error::Parse {
                    row: lineno + 1,
                    col: count,
                    message: format!("expected {cols} columns, got {count}"),
                });
            }
            rows += 1;
        }
        let matrix = Matrix::new(data, rows, cols)?;
        if is_classification {
            PredictiveDensity::classification(matrix)
        } else {
            PredictiveDensity::regression(matrix)
        }
    }
}

/// Predictive density of an ensemble on a set of inputs.
///
/// Classification: row `i` is the uniform average of member class
/// probabilities at input `i`. Regression: each member contributes
/// `samples_per_member` draws from its predictive Gaussian, pooled into
/// `N * samples_per_member` samples per input.
pub fn ensemble_predictive<R: Rng + ?Sized>(
    ensemble: &Ensemble,
    inputs: &Matrix,
    samples_per_member: usize,
    rng: &mut R,
) -> Result<PredictiveDensity> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let arch = ensemble.arch();
    if inputs.cols() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "predictive inputs",
            expected: arch.input_dim(),
            actual: inputs.cols(),
        });
    }
    let n = inputs.rows();
    let n_members = ensemble.len();

    match arch.task() {
        Task::Classification => {
            let k = arch.output_dim();
            let mut probs = Matrix::zeros(n, k);
            for member in ensemble.members() {
                for i in 0..n {
                    let q = nn::predict_proba(arch, member, inputs.row(i))?;
                    for (acc, qv) in probs.row_mut(i).iter_mut().zip(q.iter()) {
                        *acc += qv / n_members as f64;
                    }
                }
            }
            PredictiveDensity::classification(probs)
        }
        Task::Regression => {
            if samples_per_member == 0 {
                return Err(Error::InvalidConfig(
                    "samples_per_member must be >= 1 for regression".into(),
                ));
            }
            let sigma = arch.noise_sigma();
            let mut draws = Matrix::zeros(n, n_members * samples_per_member);
            for (m, member) in ensemble.members().iter().enumerate() {
                for i in 0..n {
                    let mu = nn::forward(arch, member, inputs.row(i))?[0];
                    let row = draws.row_mut(i);
                    for s in 0..samples_per_member {
                        let z: f64 = StandardNormal.sample(rng);
                        row[m * samples_per_member + s] = mu + sigma * z;
                    }
                }
            }
            PredictiveDensity::regression(draws)
        }
    }
}

fn check_same_shape(p: &Matrix, q: &Matrix, what: &'static str) -> Result<()> {
    if p.rows() != q.rows() || p.cols() != q.cols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: p.rows() * p.cols(),
            actual: q.rows() * q.cols(),
        });
    }
    Ok(())
}

/// Index of the row maximum, ties broken toward the lowest index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of inputs whose argmax class matches between the reference and
/// the approximation.
pub fn agreement(reference: &Matrix, approx: &Matrix) -> Result<f64> {
    check_same_shape(reference, approx, "agreement operands")?;
    let n = reference.rows();
    let matches = (0..n)
        .filter(|&i| argmax(reference.row(i)) == argmax(approx.row(i)))
        .count();
    Ok(matches as f64 / n as f64)
}

/// Mean over inputs of the per-row total variation
/// `0.5 * sum_j |p_ij - q_ij|`.
pub fn total_variation(reference: &Matrix, approx: &Matrix) -> Result<f64> {
    check_same_shape(reference, approx, "total variation operands")?;
    let n = reference.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let tv: f64 = reference
            .row(i)
            .iter()
            .zip(approx.row(i).iter())
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            * 0.5;
        acc += tv;
    }
    Ok(acc / n as f64)
}

/// Right-continuous empirical quantile of a sorted sample.
fn empirical_quantile(sorted: &[f64], t: f64) -> f64 {
    let s = sorted.len() as f64;
    let idx = (t * s).ceil() as usize;
    sorted[idx.saturating_sub(1).min(sorted.len() - 1)]
}

/// One-dimensional empirical Wasserstein-2 distance between two sample sets.
///
/// Sorting both sets gives the optimal coupling in one dimension, so for
/// equal sizes this is the root-mean-square gap of order statistics. Unequal
/// sizes compare the inverse empirical CDFs at the midpoints of a uniform
/// grid of `max(len)` quantile levels.
pub fn wasserstein2(samples_p: &[f64], samples_q: &[f64]) -> Result<f64> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::InvalidConfig(
            "wasserstein2 requires nonempty sample sets".into(),
        ));
    }
    let mut p = samples_p.to_vec();
    let mut q = samples_q.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    q.sort_by(|a, b| a.partial_cmp(b).unwrap());

    if p.len() == q.len() {
        let sum: f64 = p
            .iter()
            .zip(q.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        return Ok((sum / p.len() as f64).sqrt());
    }

    let levels = p.len().max(q.len());
    let mut sum = 0.0;
    for k in 0..levels {
        let t = (k as f64 + 0.5) / levels as f64;
        let d = empirical_quantile(&p, t) - empirical_quantile(&q, t);
        sum += d * d;
    }
    Ok((sum / levels as f64).sqrt())
}

/// Mean over inputs of the point-wise Wasserstein-2 distance between two
/// regression predictives.
pub fn regression_report(
    reference: &PredictiveDensity,
    approx: &PredictiveDensity,
) -> Result<f64> {
    let r = reference.regression_samples()?;
    let a = approx.regression_samples()?;
    if r.rows() != a.rows() {
        return Err(Error::DimensionMismatch {
            what: "regression report inputs",
            expected: r.rows(),
            actual: a.rows(),
        });
    }
    let n = r.rows();
    let mut acc = 0.0;
    for i in 0..n {
        acc += wasserstein2(r.row(i), a.row(i))?;
    }
    Ok(acc / n as f64)
}

/// Flat ordered key-value report with fixed 6-decimal float formatting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_metric(&mut self, key: &str, value: f64) {
        self.entries.push((key.to_string(), format!("{value:.6}")));
    }

    pub fn push_int(&mut self, key: &str, value: u64) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_text(&mut self, key: &str, value: &str) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k}: {v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for line in r.lines() {
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(": ")
                .ok_or_else(|| Error::Format(format!("bad report line: {line}")))?;
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(Self { entries })
    }
}
