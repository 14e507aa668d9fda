//! Desk-scale reference posteriors.
//!
//! Two exact stand-ins for an expensive reference sampler: the conjugate
//! closed form for Bayesian linear regression, and a tensor-product grid
//! quadrature for models with at most four parameters. Both expose the same
//! predictive interface so the metrics module can compare an ensemble's
//! predictive density against exact ground truth.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::PredictiveDensity;
use crate::nn::{self, Dataset, Matrix, MlpArchitecture, ParamVector, Task};
use crate::objectives::{self, GaussianPrior};

/// Maximum parameter count the grid oracle accepts.
pub const GRID_MAX_PARAMS: usize = 4;

/// Grid extent in prior standard deviations on each side of the prior mean.
pub const GRID_EXTENT_STDS: f64 = 5.0;

/// Default number of quadrature nodes per axis.
pub const GRID_DEFAULT_POINTS: usize = 401;

/// Exact Gaussian posterior `N(mean, covariance)`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: ParamVector,
    covariance: Matrix,
    /// Lower-triangular Cholesky factor of the covariance.
    chol: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: ParamVector, covariance: Matrix) -> Result<Self> {
        let p = mean.len();
        if covariance.rows() != p || covariance.cols() != p {
            return Err(Error::DimensionMismatch {
                what: "posterior covariance",
                expected: p * p,
                actual: covariance.rows() * covariance.cols(),
            });
        }
        for i in 0..p {
            for j in 0..i {
                let d = (covariance.row(i)[j] - covariance.row(j)[i]).abs();
                if d > 1e-10 {
                    return Err(Error::NonFinite(format!(
                        "posterior covariance asymmetric at ({i},{j}): delta {d}"
                    )));
                }
            }
        }
        let chol = cholesky(covariance.data(), p)?;
        Ok(Self {
            mean,
            covariance,
            chol,
        })
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.covariance.row(j)[j]
    }

    /// One exact posterior draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let p = self.dim();
        let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = self.mean.clone();
        for i in 0..p {
            let row = &self.chol[i * p..i * p + i + 1];
            let acc: f64 = row.iter().zip(z.iter()).map(|(l, zj)| l * zj).sum();
            out[i] += acc;
        }
        out
    }

    /// Exact posterior-predictive mean and variance of `x' theta + noise` for
    /// the linear-Gaussian model.
    pub fn linear_predictive(&self, x: &[f64], noise_sigma: f64) -> Result<(f64, f64)> {
        let p = self.dim();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                what: "predictive input",
                expected: p,
                actual: x.len(),
            });
        }
        let mean: f64 = x.iter().zip(self.mean.iter()).map(|(a, b)| a * b).sum();
        let mut var = noise_sigma * noise_sigma;
        for (i, xi) in x.iter().enumerate() {
            let row: f64 = self
                .covariance
                .row(i)
                .iter()
                .zip(x.iter())
                .map(|(c, xj)| c * xj)
                .sum();
            var += xi * row;
        }
        Ok((mean, var))
    }
}

/// Lower-triangular Cholesky factor of a dense symmetric matrix.
fn cholesky(a: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i * p + j];
            for k in 0..j {
                sum -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "covariance not positive definite (pivot {i}: {sum})"
                    )));
                }
                l[i * p + j] = sum.sqrt();
            } else {
                l[i * p + j] = sum / l[j * p + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L L' x = b` in place given the lower factor.
fn chol_solve(l: &[f64], p: usize, b: &mut [f64]) {
    // Forward then backward substitution.
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * p + k] * b[k];
        }
        b[i] = sum / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut sum = b[i];
        for k in i + 1..p {
            sum -= l[k * p + i] * b[k];
        }
        b[i] = sum / l[i * p + i];
    }
}

/// Closed-form Bayesian linear regression posterior with a diagonal Gaussian
/// prior: precision `A = X'X / sigma^2 + Sp^-1`, covariance `A^-1`, mean
/// `A^-1 (X'y / sigma^2 + Sp^-1 mu_prior)`.
///
/// `design` is the raw design matrix; append a ones column (last) to model a
/// bias so the parameter order matches the network packing `[weights, bias]`.
/// Zero rows are allowed and reproduce the prior.
pub fn linear_posterior(
    design: &Matrix,
    targets: &[f64],
    noise_sigma: f64,
    prior: &GaussianPrior,
) -> Result<GaussianPosterior> {
    let p = design.cols();
    if targets.len() != design.rows() {
        return Err(Error::DimensionMismatch {
            what: "linear posterior targets",
            expected: design.rows(),
            actual: targets.len(),
        });
    }
    prior.check_len(p, "linear posterior prior")?;
    if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise_sigma must be a positive real, got {noise_sigma}"
        )));
    }

    let s2 = noise_sigma * noise_sigma;
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (r, &y) in targets.iter().enumerate() {
        let row = design.row(r);
        for i in 0..p {
            for j in 0..p {
                a[i * p + j] += row[i] * row[j] / s2;
            }
            b[i] += row[i] * y / s2;
        }
    }
    for j in 0..p {
        let prec = 1.0 / (prior.std()[j] * prior.std()[j]);
        a[j * p + j] += prec;
        b[j] += prec * prior.mean()[j];
    }

    let l = cholesky(&a, p)?;
    let mut mean = b;
    chol_solve(&l, p, &mut mean);

    // Covariance = A^-1 column by column.
    let mut cov = vec![0.0; p * p];
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        chol_solve(&l, p, &mut e);
        for i in 0..p {
            cov[i * p + j] = e[i];
        }
    }
    // Symmetrize away the last-ulp asymmetry from the two solves.
    for i in 0..p {
        for j in 0..i {
            let avg = 0.5 * (cov[i * p + j] + cov[j * p + i]);
            cov[i * p + j] = avg;
            cov[j * p + i] = avg;
        }
    }

    GaussianPosterior::new(ParamVector::new(mean), Matrix::new(cov, p, p)?)
}

/// Tensor-product grid posterior for tiny networks.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    /// Per-parameter sorted quadrature nodes.
    axes: Vec<Vec<f64>>,
    /// Normalized log density at every node, row-major over the tensor grid
    /// (last axis fastest).
    log_density: Vec<f64>,
    /// Probability mass of every node under trapezoid quadrature; sums to 1.
    masses: Vec<f64>,
    /// Log of the raw quadrature normalizer.
    log_normalizer: f64,
}

impl GridPosterior {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn num_nodes(&self) -> usize {
        self.masses.len()
    }

    /// Parameter vector at flat node index `g`.
    pub fn node(&self, g: usize) -> ParamVector {
        let mut rem = g;
        let mut idx = vec![0usize; self.dim()];
        for d in (0..self.dim()).rev() {
            let len = self.axes[d].len();
            idx[d] = rem % len;
            rem /= len;
        }
        ParamVector::new((0..self.dim()).map(|d| self.axes[d][idx[d]]).collect())
    }

    /// Node probability masses in flat order.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Posterior mean per parameter by quadrature.
    pub fn mean(&self) -> ParamVector {
        let mut mean = vec![0.0; self.dim()];
        for (g, &w) in self.masses.iter().enumerate() {
            let node = self.node(g);
            for (m, v) in mean.iter_mut().zip(node.iter()) {
                *m += w * v;
            }
        }
        ParamVector::new(mean)
    }

    /// Posterior marginal variance per parameter by quadrature.
    pub fn variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut var = vec![0.0; self.dim()];
        for (g, &w) in self.masses.iter().enumerate() {
            let node = self.node(g);
            for j in 0..self.dim() {
                let d = node[j] - mean[j];
                var[j] += w * d * d;
            }
        }
        var
    }

    /// Total mass (should be 1 within quadrature tolerance; kept as a check).
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn sample_node<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (g, &w) in self.masses.iter().enumerate() {
            acc += w;
            if u < acc {
                return g;
            }
        }
        self.masses.len() - 1
    }
}

/// Evaluates the normalized posterior of a tiny network on a tensor-product
/// grid spanning five prior standard deviations per axis, using trapezoid
/// quadrature for the normalizer.
pub fn grid_posterior(
    arch: &MlpArchitecture,
    data: &Dataset,
    prior: &GaussianPrior,
    points_per_axis: usize,
) -> Result<GridPosterior> {
    let p = arch.parameter_count();
    if p > GRID_MAX_PARAMS {
        return Err(Error::GridTooLarge {
            count: p,
            max: GRID_MAX_PARAMS,
        });
    }
    if points_per_axis < 3 {
        return Err(Error::InvalidConfig(
            "grid needs at least 3 points per axis".into(),
        ));
    }
    prior.check_len(p, "grid prior")?;
    data.check_compatible(arch)?;

    let mut axes = Vec::with_capacity(p);
    let mut steps = Vec::with_capacity(p);
    for j in 0..p {
        let lo = prior.mean()[j] - GRID_EXTENT_STDS * prior.std()[j];
        let hi = prior.mean()[j] + GRID_EXTENT_STDS * prior.std()[j];
        let h = (hi - lo) / (points_per_axis - 1) as f64;
        axes.push(
            (0..points_per_axis)
                .map(|k| lo + h * k as f64)
                .collect::<Vec<f64>>(),
        );
        steps.push(h);
    }

    let total: usize = axes.iter().map(Vec::len).product();
    let mut log_joint = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; p];
    let mut theta = ParamVector::zeros(p);
    for _ in 0..total {
        let mut w = 1.0;
        for d in 0..p {
            theta[d] = axes[d][idx[d]];
            let edge = idx[d] == 0 || idx[d] == axes[d].len() - 1;
            w *= if edge { 0.5 * steps[d] } else { steps[d] };
        }
        let lj = nn::log_likelihood(arch, &theta, data)?
            + objectives::log_prior_density(prior, &theta)?;
        log_joint.push(lj);
        weights.push(w);
        // Advance the multi-index, last axis fastest.
        for d in (0..p).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }

    let max = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("grid log joint".into()));
    }
    let z: f64 = log_joint
        .iter()
        .zip(weights.iter())
        .map(|(&lj, &w)| (lj - max).exp() * w)
        .sum();
    let log_normalizer = max + z.ln();
    let masses: Vec<f64> = log_joint
        .iter()
        .zip(weights.iter())
        .map(|(&lj, &w)| (lj - max).exp() * w / z)
        .collect();
    let log_density: Vec<f64> = log_joint.iter().map(|&lj| lj - log_normalizer).collect();

    Ok(GridPosterior {
        axes,
        log_density,
        masses,
        log_normalizer,
    })
}

/// A reference posterior from either oracle.
#[derive(Debug, Clone)]
pub enum ReferencePosterior {
    Gaussian(GaussianPosterior),
    Grid(GridPosterior),
}

/// Nodes with normalized mass below this fraction of the largest node mass
/// are skipped when averaging predictives over a grid posterior; the retained
/// mass is renormalized, so the truncation error is below `num_nodes * 1e-14`.
const GRID_PREDICTIVE_MASS_CUTOFF: f64 = 1e-14;

/// Posterior predictive density on a set of inputs.
///
/// Classification averages `predict_proba` over the posterior: exactly (by
/// quadrature) for grid posteriors, by `samples` Monte-Carlo parameter draws
/// for Gaussian posteriors. Regression draws `samples` posterior-predictive
/// values per input (fresh parameter draw plus observation noise each).
pub fn reference_predictive<R: Rng + ?Sized>(
    posterior: &ReferencePosterior,
    inputs: &Matrix,
    arch: &MlpArchitecture,
    samples: usize,
    rng: &mut R,
) -> Result<PredictiveDensity> {
    let p = arch.parameter_count();
    let dim_ok = match posterior {
        ReferencePosterior::Gaussian(g) => g.dim() == p,
        ReferencePosterior::Grid(g) => g.dim() == p,
    };
    if !dim_ok {
        return Err(Error::DimensionMismatch {
            what: "reference posterior dimension",
            expected: p,
            actual: match posterior {
                ReferencePosterior::Gaussian(g) => g.dim(),
                ReferencePosterior::Grid(g) => g.dim(),
            },
        });
    }
    if inputs.cols() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "predictive inputs",
            expected: arch.input_dim(),
            actual: inputs.cols(),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be >= 1".into()));
    }

    let n = inputs.rows();
    match (arch.task(), posterior) {
        (Task::Classification, ReferencePosterior::Grid(grid)) => {
            let k = arch.output_dim();
            let max_mass = grid.masses().iter().cloned().fold(0.0, f64::max);
            let cutoff = max_mass * GRID_PREDICTIVE_MASS_CUTOFF;
            let mut probs = Matrix::zeros(n, k);
            let mut kept = 0.0;
            for (g, &w) in grid.masses().iter().enumerate() {
                if w <= cutoff {
                    continue;
                }
                kept += w;
                let theta = grid.node(g);
                for i in 0..n {
                    let q = nn::predict_proba(arch, &theta, inputs.row(i))?;
                    let row = probs.row_mut(i);
                    for (r, qv) in row.iter_mut().zip(q.iter()) {
                        *r += w * qv;
                    }
                }
            }
            for i in 0..n {
                for v in probs.row_mut(i) {
                    *v /= kept;
                }
            }
            PredictiveDensity::classification(probs)
        }
        (Task::Classification, ReferencePosterior::Gaussian(gauss)) => {
            let k = arch.output_dim();
            let mut probs = Matrix::zeros(n, k);
            for _ in 0..samples {
                let theta = gauss.sample(rng);
                for i in 0..n {
                    let q = nn::predict_proba(arch, &theta, inputs.row(i))?;
                    let row = probs.row_mut(i);
                    for (r, qv) in row.iter_mut().zip(q.iter()) {
                        *r += qv / samples as f64;
                    }
                }
            }
            PredictiveDensity::classification(probs)
        }
        (Task::Regression, posterior) => {
            let sigma = arch.noise_sigma();
            let mut draws = Matrix::zeros(n, samples);
            for i in 0..n {
                for s in 0..samples {
                    let theta = match posterior {
                        ReferencePosterior::Gaussian(g) => g.sample(rng),
                        ReferencePosterior::Grid(g) => g.node(g.sample_node(rng)),
                    };
                    let mu = nn::forward(arch, &theta, inputs.row(i))?[0];
                    let z: f64 = StandardNormal.sample(rng);
                    draws.row_mut(i)[s] = mu + sigma * z;
                }
            }
            PredictiveDensity::regression(draws)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Targets};
    use crate::rng::substream;
    use crate::stats;

    fn prior_std(p: usize) -> GaussianPrior {
        GaussianPrior::standard(p)
    }

    #[test]
    fn single_observation_hand_posterior() {
        // X = [[1]], y = [1], sigma = 1, prior N(0,1): A = 2, mean 0.5, var 0.5.
        let x = Matrix::new(vec![1.0], 1, 1).unwrap();
        let post = linear_posterior(&x, &[1.0], 1.0, &prior_std(1)).unwrap();
        assert!((post.mean()[0] - 0.5).abs() < 1e-12);
        assert!((post.variance(0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn no_data_reproduces_prior() {
        let x = Matrix::new(vec![], 0, 2).unwrap();
        let prior = GaussianPrior::new(
            ParamVector::new(vec![0.7, -0.2]),
            ParamVector::new(vec![1.5, 0.4]),
        )
        .unwrap();
        let post = linear_posterior(&x, &[], 1.0, &prior).unwrap();
        assert!((post.mean()[0] - 0.7).abs() < 1e-12);
        assert!((post.mean()[1] + 0.2).abs() < 1e-12);
        assert!((post.variance(0) - 2.25).abs() < 1e-12);
        assert!((post.variance(1) - 0.16).abs() < 1e-12);
        assert!(post.covariance().row(0)[1].abs() < 1e-12);
    }

    #[test]
    fn infinite_noise_recovers_prior() {
        let x = Matrix::new(vec![1.0, 2.0, -0.5], 3, 1).unwrap();
        let prior = prior_std(1);
        let post = linear_posterior(&x, &[0.3, -1.0, 0.9], 1e9, &prior).unwrap();
        assert!(post.mean()[0].abs() < 1e-9);
        assert!((post.variance(0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn covariance_validation() {
        let asym = Matrix::new(vec![1.0, 0.5, 0.2, 1.0], 2, 2).unwrap();
        assert!(GaussianPosterior::new(ParamVector::zeros(2), asym).is_err());
        let not_pd = Matrix::new(vec![1.0, 2.0, 2.0, 1.0], 2, 2).unwrap();
        assert!(GaussianPosterior::new(ParamVector::zeros(2), not_pd).is_err());
    }

    fn linear_arch(bias: bool) -> MlpArchitecture {
        MlpArchitecture::with_bias(vec![1, 1], Activation::Tanh, Task::Regression, 0.8, bias)
            .unwrap()
    }

    #[test]
    fn grid_matches_closed_form_one_param() {
        let arch = linear_arch(false);
        let xs = [0.4, -1.1, 2.0, 0.9];
        let ys = [0.5, -0.6, 1.7, 1.0];
        let data = Dataset::new(
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap(),
            Targets::Values(ys.to_vec()),
            "lin",
        )
        .unwrap();
        let prior = prior_std(1);
        let grid = grid_posterior(&arch, &data, &prior, GRID_DEFAULT_POINTS).unwrap();
        let design = Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        let exact = linear_posterior(&design, &ys, 0.8, &prior).unwrap();

        assert!((grid.mean()[0] - exact.mean()[0]).abs() < 1e-3);
        let rel = (grid.variance()[0] - exact.variance(0)).abs() / exact.variance(0);
        assert!(rel < 1e-2, "variance relative error {rel}");
        assert!((grid.total_mass() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn grid_matches_closed_form_two_params() {
        let arch = linear_arch(true);
        let xs = [0.4, -1.1, 2.0];
        let ys = [0.9, -0.1, 2.2];
        let data = Dataset::new(
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap(),
            Targets::Values(ys.to_vec()),
            "lin2",
        )
        .unwrap();
        let prior = prior_std(2);
        let grid = grid_posterior(&arch, &data, &prior, 201).unwrap();
        // Augmented design [x, 1] matches the [weight, bias] packing.
        let design = Matrix::from_rows(&xs.iter().map(|&x| vec![x, 1.0]).collect::<Vec<_>>())
            .unwrap();
        let exact = linear_posterior(&design, &ys, 0.8, &prior).unwrap();
        for j in 0..2 {
            assert!((grid.mean()[j] - exact.mean()[j]).abs() < 1e-3);
            let rel = (grid.variance()[j] - exact.variance(j)).abs() / exact.variance(j);
            assert!(rel < 1e-2, "param {j} variance relative error {rel}");
        }
    }

    #[test]
    fn flat_likelihood_recovers_prior() {
        // x = 0 makes the logits independent of the weights, so the
        // likelihood is constant over the grid.
        let arch =
            MlpArchitecture::with_bias(vec![1, 2], Activation::Tanh, Task::Classification, 1.0, false)
                .unwrap();
        let data = Dataset::new(
            Matrix::from_rows(&[vec![0.0]]).unwrap(),
            Targets::Classes(vec![0]),
            "flat",
        )
        .unwrap();
        let prior = prior_std(2);
        let grid = grid_posterior(&arch, &data, &prior, 201).unwrap();
        for j in 0..2 {
            assert!(grid.mean()[j].abs() < 1e-6);
            assert!((grid.variance()[j] - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn grid_self_convergence() {
        let arch = linear_arch(false);
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0], vec![0.5]]).unwrap(),
            Targets::Values(vec![0.7, 0.2]),
            "conv",
        )
        .unwrap();
        let prior = prior_std(1);
        let coarse = grid_posterior(&arch, &data, &prior, GRID_DEFAULT_POINTS).unwrap();
        let fine = grid_posterior(&arch, &data, &prior, 2 * GRID_DEFAULT_POINTS).unwrap();
        assert!((coarse.mean()[0] - fine.mean()[0]).abs() < 1e-4);
    }

    #[test]
    fn grid_rejects_large_models() {
        let arch = MlpArchitecture::new(vec![2, 2], Activation::Tanh, Task::Classification, 1.0)
            .unwrap();
        assert_eq!(arch.parameter_count(), 6);
        let data = Dataset::new(
            Matrix::from_rows(&[vec![0.1, 0.2]]).unwrap(),
            Targets::Classes(vec![0]),
            "big",
        )
        .unwrap();
        let err = grid_posterior(&arch, &data, &prior_std(6), 11).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { count: 6, max: 4 }));
    }

    #[test]
    fn point_mass_posterior_predictive_equals_single_parameter() {
        let arch =
            MlpArchitecture::with_bias(vec![1, 2], Activation::Tanh, Task::Classification, 1.0, false)
                .unwrap();
        let mean = ParamVector::new(vec![0.8, -0.3]);
        let cov = Matrix::new(vec![1e-18, 0.0, 0.0, 1e-18], 2, 2).unwrap();
        let post = GaussianPosterior::new(mean.clone(), cov).unwrap();
        let inputs = Matrix::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        let mut rng = substream(1, &[0]);
        let pred = reference_predictive(
            &ReferencePosterior::Gaussian(post),
            &inputs,
            &arch,
            64,
            &mut rng,
        )
        .unwrap();
        let probs = pred.classification_probs().unwrap();
        for i in 0..2 {
            let want = nn::predict_proba(&arch, &mean, inputs.row(i)).unwrap();
            for (got, w) in probs.row(i).iter().zip(want.iter()) {
                assert!((got - w).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn linear_gaussian_sampled_predictive_mean() {
        let xs = [0.3, 1.4, -0.8, 0.1, 2.2];
        let ys = [0.5, 1.9, -0.9, 0.2, 2.8];
        let design = Matrix::from_rows(&xs.iter().map(|&x| vec![x, 1.0]).collect::<Vec<_>>())
            .unwrap();
        let prior = prior_std(2);
        let post = linear_posterior(&design, &ys, 0.8, &prior).unwrap();
        let arch = linear_arch(true);
        let inputs = Matrix::from_rows(&[vec![0.9]]).unwrap();
        let s = 4000;
        let mut rng = substream(33, &[1]);
        let pred = reference_predictive(
            &ReferencePosterior::Gaussian(post.clone()),
            &inputs,
            &arch,
            s,
            &mut rng,
        )
        .unwrap();
        let samples = pred.regression_samples().unwrap().row(0).to_vec();
        let (got_mean, got_var) = stats::mean_and_variance(&samples);
        let (want_mean, want_var) = post.linear_predictive(&[0.9, 1.0], 0.8).unwrap();
        let se = (want_var / s as f64).sqrt();
        assert!(
            (got_mean - want_mean).abs() < 3.0 * se,
            "sampled mean {got_mean} vs analytic {want_mean} (3se {})",
            3.0 * se
        );
        assert!((got_var - want_var).abs() / want_var < 0.2);
    }

    #[test]
    fn symmetric_posterior_gives_uniform_predictive() {
        // Balanced one-input dataset makes the likelihood invariant under
        // swapping the two logit weights, so the predictive is (0.5, 0.5).
        let arch =
            MlpArchitecture::with_bias(vec![1, 2], Activation::Tanh, Task::Classification, 1.0, false)
                .unwrap();
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
            Targets::Classes(vec![0, 1]),
            "sym",
        )
        .unwrap();
        let grid = grid_posterior(&arch, &data, &prior_std(2), 201).unwrap();
        let inputs = Matrix::from_rows(&[vec![0.0], vec![1.3], vec![-0.7]]).unwrap();
        let mut rng = substream(2, &[0]);
        let pred = reference_predictive(
            &ReferencePosterior::Grid(grid),
            &inputs,
            &arch,
            1,
            &mut rng,
        )
        .unwrap();
        let probs = pred.classification_probs().unwrap();
        for i in 0..3 {
            assert!((probs.row(i)[0] - 0.5).abs() < 1e-9, "row {i}: {:?}", probs.row(i));
            assert!((probs.row(i)[1] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn classification_reference_rows_are_distributions() {
        let arch =
            MlpArchitecture::with_bias(vec![1, 2], Activation::Tanh, Task::Classification, 1.0, false)
                .unwrap();
        let data = Dataset::new(
            Matrix::from_rows(&[vec![0.6], vec![-0.2]]).unwrap(),
            Targets::Classes(vec![0, 1]),
            "rows",
        )
        .unwrap();
        let grid = grid_posterior(&arch, &data, &prior_std(2), 101).unwrap();
        let inputs = Matrix::from_rows(&[vec![0.1], vec![0.9], vec![2.0]]).unwrap();
        let mut rng = substream(4, &[0]);
        let pred =
            reference_predictive(&ReferencePosterior::Grid(grid), &inputs, &arch, 1, &mut rng)
                .unwrap();
        let probs = pred.classification_probs().unwrap();
        for i in 0..probs.rows() {
            let sum: f64 = probs.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
