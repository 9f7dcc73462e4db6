//! Gaussian-kernel estimation of the one-step predictive observation density
//! `f(x_k | x_{k-1}, ..., x_{k-m})` and its derivative in `x_k`.
//!
//! The estimator is a Nadaraya-Watson conditional density: kernels on the
//! conditioning window weight the training pairs, a density kernel on the
//! target carries the mass. With lag `m = 0` it reduces to a plain KDE.
//! The derivative is analytic — Gaussian kernels differentiate in closed
//! form — which is what the logarithmic-derivative term of the optimal
//! filtering equation consumes.

use crate::error::{Error, Result};

/// Density floor below which the logarithmic derivative saturates.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Bandwidth selection for the Gaussian kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `h = 1.06 sigma n^(-1/5)`; the derivative reuses the same h.
    Silverman,
    Fixed(f64),
}

/// Kernel estimator configuration. Kernels are Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub bandwidth: BandwidthRule,
    /// Number of past observations conditioned on.
    pub lag: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidth: BandwidthRule::Silverman,
            lag: 1,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let BandwidthRule::Fixed(h) = self.bandwidth {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidState(format!(
                    "fixed bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Predictive density value, its x-derivative, and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveEstimate {
    pub value: f64,
    pub derivative: f64,
    /// `derivative / max(value, DENSITY_FLOOR)`.
    pub log_derivative: f64,
    /// True when the value hit the density floor.
    pub saturated: bool,
}

impl PredictiveEstimate {
    /// Builds the estimate from a raw (value, derivative) pair, applying the
    /// density floor.
    pub fn from_value_and_derivative(value: f64, derivative: f64) -> Self {
        let saturated = value < DENSITY_FLOOR;
        let floored = value.max(DENSITY_FLOOR);
        PredictiveEstimate {
            value,
            derivative,
            log_derivative: derivative / floored,
            saturated,
        }
    }
}

/// Fitted estimator; immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct PredictiveKde {
    /// Target observations x_i, i = lag..n.
    targets: Vec<f64>,
    /// Flattened windows, row i holds [x_{i-1}, ..., x_{i-lag}].
    windows: Vec<f64>,
    lag: usize,
    /// Bandwidth of the target (density) kernel.
    h: f64,
    /// Bandwidth of the conditioning kernels.
    g: f64,
}

/// Builds the estimator over an observed sequence.
///
/// Requires `history.len() >= lag + 2` under the Silverman rule (a spread
/// estimate needs at least two points); a fixed bandwidth works from
/// `lag + 1` observations up.
pub fn fit_predictive(history: &[f64], spec: &KernelSpec) -> Result<PredictiveKde> {
    spec.validate()?;
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("history entry".into()));
    }
    let m = spec.lag;
    let needed = match spec.bandwidth {
        BandwidthRule::Silverman => m + 2,
        BandwidthRule::Fixed(_) => m + 1,
    };
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            got: history.len(),
        });
    }

    let rows = history.len() - m;
    let mut targets = Vec::with_capacity(rows);
    let mut windows = Vec::with_capacity(rows * m);
    for i in m..history.len() {
        targets.push(history[i]);
        for j in 1..=m {
            windows.push(history[i - j]);
        }
    }

    let (h, g) = match spec.bandwidth {
        BandwidthRule::Fixed(h) => (h, h),
        BandwidthRule::Silverman => {
            let n = history.len() as f64;
            let mean = history.iter().sum::<f64>() / n;
            let var = history.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if sd < 1e-12 {
                return Err(Error::Degenerate(
                    "history has zero spread; Silverman bandwidth vanishes".into(),
                ));
            }
            let h = 1.06 * sd * (rows as f64).powf(-0.2);
            // Conditioning kernels smooth a (1 + m)-dimensional joint, so
            // they take the slower rate n^(-1/(m + 5)).
            let g = 1.06 * sd * (rows as f64).powf(-1.0 / (m as f64 + 5.0));
            (h, g)
        }
    };

    Ok(PredictiveKde {
        targets,
        windows,
        lag: m,
        h,
        g,
    })
}

impl PredictiveKde {
    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Evaluates density and derivative at `x` given a conditioning window
    /// `[x_{k-1}, ..., x_{k-lag}]`.
    pub fn evaluate(&self, x: f64, window: &[f64]) -> Result<PredictiveEstimate> {
        if window.len() != self.lag {
            return Err(Error::LengthMismatch(format!(
                "window has {} entries, lag is {}",
                window.len(),
                self.lag
            )));
        }
        if !x.is_finite() || window.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query point".into()));
        }

        let norm = 1.0 / (self.h * (2.0 * std::f64::consts::PI).sqrt());
        let inv_h2 = 1.0 / (self.h * self.h);
        let inv_g2 = 1.0 / (self.g * self.g);

        let mut num_value = 0.0;
        let mut num_deriv = 0.0;
        let mut denom = 0.0;
        for (i, &t) in self.targets.iter().enumerate() {
            let mut log_w = 0.0;
            for (j, &w) in window.iter().enumerate() {
                let d = w - self.windows[i * self.lag + j];
                log_w -= 0.5 * d * d * inv_g2;
            }
            let weight = log_w.exp();
            let u = x - t;
            let kernel = norm * (-0.5 * u * u * inv_h2).exp();
            denom += weight;
            num_value += weight * kernel;
            num_deriv += weight * (-u * inv_h2) * kernel;
        }

        if denom < 1e-300 {
            return Err(Error::NoNeighbors);
        }
        Ok(PredictiveEstimate::from_value_and_derivative(
            num_value / denom,
            num_deriv / denom,
        ))
    }
}
