//! Factorized Gaussian prior, anchor density, and the anchored loss.
//!
//! The per-member training objective is the anchored loss
//! `-(log p(D | theta) + log p_anc(theta))` where `p_anc` is a Gaussian
//! centered at the member's anchor and sharing the prior's (diagonal)
//! covariance. With the anchor fixed at the prior mean this is exactly the
//! MAP objective; with anchors drawn from the prior, the minimizers
//! approximately follow the Bayesian posterior.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Dataset, MlpArchitecture, ParamVector};

const LN_2PI: f64 = 1.8378770664093453;

/// Diagonal Gaussian prior over the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    mean: ParamVector,
    std: ParamVector,
}

/// Per-layer prior scale override used when building a prior from config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerPriorStd {
    pub weight_std: f64,
    pub bias_std: f64,
}

impl GaussianPrior {
    pub fn new(mean: ParamVector, std: ParamVector) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                what: "prior std",
                expected: mean.len(),
                actual: std.len(),
            });
        }
        if !std.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidConfig(
                "prior std entries must be positive reals".into(),
            ));
        }
        if !mean.all_finite() {
            return Err(Error::NonFinite("prior mean".into()));
        }
        Ok(Self { mean, std })
    }

    /// Standard normal prior `N(0, 1)` on every parameter.
    pub fn standard(param_count: usize) -> Self {
        Self {
            mean: ParamVector::zeros(param_count),
            std: ParamVector::new(vec![1.0; param_count]),
        }
    }

    /// Same mean and std for every parameter.
    pub fn isotropic(param_count: usize, mean: f64, std: f64) -> Result<Self> {
        Self::new(
            ParamVector::new(vec![mean; param_count]),
            ParamVector::new(vec![std; param_count]),
        )
    }

    /// Zero-mean prior with per-layer weight/bias scales.
    pub fn from_layer_stds(arch: &MlpArchitecture, layers: &[LayerPriorStd]) -> Result<Self> {
        if layers.len() != arch.num_layers() {
            return Err(Error::DimensionMismatch {
                what: "per-layer prior stds",
                expected: arch.num_layers(),
                actual: layers.len(),
            });
        }
        let sizes = arch.layer_sizes();
        let mut std = Vec::with_capacity(arch.parameter_count());
        for (l, spec) in layers.iter().enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            std.extend(std::iter::repeat_n(spec.weight_std, n_in * n_out));
            if arch.use_bias() {
                std.extend(std::iter::repeat_n(spec.bias_std, n_out));
            }
        }
        Self::new(ParamVector::zeros(std.len()), ParamVector::new(std))
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn std(&self) -> &ParamVector {
        &self.std
    }

    pub(crate) fn check_len(&self, expected: usize, what: &'static str) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                what,
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }
}

/// Gaussian anchor density: centered at an anchor point, prior covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDensity<'a> {
    center: &'a ParamVector,
    std: &'a ParamVector,
}

impl<'a> AnchorDensity<'a> {
    pub fn new(center: &'a ParamVector, prior: &'a GaussianPrior) -> Result<Self> {
        if center.len() != prior.len() {
            return Err(Error::DimensionMismatch {
                what: "anchor center",
                expected: prior.len(),
                actual: center.len(),
            });
        }
        Ok(Self {
            center,
            std: prior.std(),
        })
    }

    pub fn log_density(&self, theta: &ParamVector) -> Result<f64> {
        if theta.len() != self.center.len() {
            return Err(Error::DimensionMismatch {
                what: "anchor density argument",
                expected: self.center.len(),
                actual: theta.len(),
            });
        }
        let mut total = 0.0;
        for ((&t, &c), &s) in theta.iter().zip(self.center.iter()).zip(self.std.iter()) {
            let z = (t - c) / s;
            total += -0.5 * LN_2PI - s.ln() - 0.5 * z * z;
        }
        Ok(total)
    }
}

/// Log density of the factorized Gaussian prior at `theta`.
pub fn log_prior_density(prior: &GaussianPrior, theta: &ParamVector) -> Result<f64> {
    AnchorDensity {
        center: prior.mean(),
        std: prior.std(),
    }
    .log_density(theta)
}

/// The anchored loss `-(log p(D | theta) + log p_anc(theta))`.
pub fn anchored_loss(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    anchor: &ParamVector,
    theta: &ParamVector,
    data: &Dataset,
) -> Result<f64> {
    prior.check_len(arch.parameter_count(), "prior length")?;
    let anchor_term = AnchorDensity::new(anchor, prior)?.log_density(theta)?;
    let ll = nn::log_likelihood(arch, theta, data)?;
    Ok(-(ll + anchor_term))
}

/// Exact gradient of the anchored loss:
/// `-grad log p(D | theta) + (theta - anchor) / std^2` elementwise.
pub fn grad_anchored_loss(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    anchor: &ParamVector,
    theta: &ParamVector,
    data: &Dataset,
) -> Result<ParamVector> {
    prior.check_len(arch.parameter_count(), "prior length")?;
    if anchor.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            what: "anchor",
            expected: theta.len(),
            actual: anchor.len(),
        });
    }
    let ll_grad = nn::grad_log_likelihood(arch, theta, data)?;
    let mut grad = ll_grad.into_vec();
    for (j, g) in grad.iter_mut().enumerate() {
        let s = prior.std()[j];
        *g = -*g + (theta[j] - anchor[j]) / (s * s);
    }
    Ok(ParamVector::new(grad))
}
