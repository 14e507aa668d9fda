//! Synthetic dataset generators and CSV loading.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Dataset, Matrix, Targets, Task};
use crate::rng::{stream, substream};

/// Built-in synthetic task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticName {
    /// `y = slope * x + intercept + noise * z`, x uniform on [-2, 2).
    Line1d,
    /// `y = sin(2 pi x) + noise * z`, x uniform on [0, 1).
    Sine1d,
    /// Two Gaussian blobs in the plane, labels 0/1.
    Twoclass2d,
}

impl std::str::FromStr for SyntheticName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line1d" => Ok(SyntheticName::Line1d),
            "sine1d" => Ok(SyntheticName::Sine1d),
            "twoclass2d" => Ok(SyntheticName::Twoclass2d),
            other => Err(Error::InvalidConfig(format!(
                "unknown synthetic dataset {other:?}; valid names: line1d, sine1d, twoclass2d"
            ))),
        }
    }
}

impl SyntheticName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticName::Line1d => "line1d",
            SyntheticName::Sine1d => "sine1d",
            SyntheticName::Twoclass2d => "twoclass2d",
        }
    }
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub name: SyntheticName,
    pub n: usize,
    pub noise: f64,
    /// line1d only.
    pub slope: f64,
    /// line1d only.
    pub intercept: f64,
    /// twoclass2d only: distance between blob centers.
    pub separation: f64,
}

impl SyntheticSpec {
    pub fn new(name: SyntheticName, n: usize, noise: f64) -> Self {
        Self {
            name,
            n,
            noise,
            slope: 1.0,
            intercept: 0.0,
            separation: 2.0,
        }
    }
}

/// Generates a synthetic dataset, deterministic in the seed.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidConfig("dataset n must be >= 1".into()));
    }
    if spec.noise < 0.0 {
        return Err(Error::InvalidConfig("noise must be >= 0".into()));
    }
    let mut rng = substream(seed, &[stream::DATA]);
    match spec.name {
        SyntheticName::Line1d => {
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x = rng.gen_range(-2.0..2.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![x]);
                ys.push(spec.slope * x + spec.intercept + spec.noise * z);
            }
            Dataset::new(Matrix::from_rows(&rows)?, Targets::Values(ys), "line1d")
        }
        SyntheticName::Sine1d => {
            let mut rows = Vec::with_capacity(spec.n);
            let mut ys = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x = rng.gen_range(0.0..1.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![x]);
                ys.push((2.0 * std::f64::consts::PI * x).sin() + spec.noise * z);
            }
            Dataset::new(Matrix::from_rows(&rows)?, Targets::Values(ys), "sine1d")
        }
        SyntheticName::Twoclass2d => {
            let half = spec.separation / 2.0;
            let mut rows = Vec::with_capacity(spec.n);
            let mut labels = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let label = usize::from(rng.gen::<f64>() >= 0.5);
                let cx = if label == 0 { -half } else { half };
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![cx + spec.noise * z1, spec.noise * z2]);
                labels.push(label);
            }
            Dataset::new(
                Matrix::from_rows(&rows)?,
                Targets::Classes(labels),
                "twoclass2d",
            )
        }
    }
}

/// Loads a dataset from a headered CSV file; the last column is the target.
///
/// The task is inferred as classification when the target column is
/// integer-valued, nonnegative and takes at most 64 distinct values
/// (`K = max + 1`); `task_override` forces either reading.
pub fn load_csv(path: &Path, task_override: Option<Task>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))?;
    let cols = header.split(',').count();
    if cols < 2 {
        return Err(Error::Format(format!(
            "{}: need at least one feature column and one target column",
            path.display()
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row_no = i + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols {
            return Err(Error::Parse {
                row: row_no,
                col: cells.len(),
                message: format!("expected {cols} columns, got {}", cells.len()),
            });
        }
        let mut row = Vec::with_capacity(cols);
        for (j, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                col: j + 1,
                message: format!("cannot parse {:?} as a number", cell.trim()),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format(format!(
            "{}: no data rows after the header",
            path.display()
        )));
    }

    let d = cols - 1;
    let inputs: Vec<Vec<f64>> = rows.iter().map(|r| r[..d].to_vec()).collect();
    let raw_targets: Vec<f64> = rows.iter().map(|r| r[d]).collect();

    let integer_classes = raw_targets
        .iter()
        .all(|&y| y.fract() == 0.0 && (0.0..1e9).contains(&y))
        && raw_targets
            .iter()
            .map(|&y| y as u64)
            .collect::<BTreeSet<_>>()
            .len()
            <= 64;
    let task = task_override.unwrap_or(if integer_classes {
        Task::Classification
    } else {
        Task::Regression
    });

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let targets = match task {
        Task::Classification => {
            if !integer_classes {
                return Err(Error::InvalidConfig(format!(
                    "{}: targets are not nonnegative integers, cannot read as classification",
                    path.display()
                )));
            }
            Targets::Classes(raw_targets.iter().map(|&y| y as usize).collect())
        }
        Task::Regression => Targets::Values(raw_targets),
    };
    Dataset::new(Matrix::from_rows(&inputs)?, targets, name)
}
