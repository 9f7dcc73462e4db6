//! The three estimators of the hidden sequence and the risk functional.
//!
//! * [`kalman_filter`] — scalar predict/update recursion for the
//!   linear-Gaussian model (optimal there, and the baseline elsewhere via
//!   [`extended_kalman_qubit`]).
//! * [`grid_posterior_init`] / [`grid_posterior_step`] — exact posterior
//!   recursion evaluated on a quadrature grid: propagate through the
//!   transition kernel, multiply by the likelihood, renormalize. The step
//!   normalizer is the one-step predictive density of the observation.
//! * [`optimal_filter_estimate`] — the model-free filtering identity: for an
//!   exponential-family observation density, the conditional mean of Q(s)
//!   equals the logarithmic derivative of the predictive density corrected
//!   by h, divided by T'. No prior or transition knowledge enters.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kde::{fit_predictive, KernelSpec, PredictiveEstimate};
use crate::models::{
    normal_cdf, normal_pdf, ExpFamilyDecomposition, LinearGaussianModel, QubitChainModel,
    Trajectory,
};

/// Posterior mean and variance of a scalar Gaussian filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: f64,
    pub variance: f64,
}

/// Filtered and one-step-predicted state sequences.
#[derive(Debug, Clone)]
pub struct KalmanRun {
    /// Posterior (mean, variance) after absorbing x_k.
    pub posterior: Vec<KalmanState>,
    /// Predicted (mean, variance) before absorbing x_k.
    pub predicted: Vec<KalmanState>,
}

impl KalmanRun {
    pub fn estimates(&self) -> Vec<f64> {
        self.posterior.iter().map(|s| s.mean).collect()
    }

    /// Predictive density parameters of x_k given the past: N(A m, A^2 P + B^2).
    pub fn predictive_params(&self, k: usize, obs_gain: f64, obs_noise: f64) -> (f64, f64) {
        let p = &self.predicted[k];
        (
            obs_gain * p.mean,
            obs_gain * obs_gain * p.variance + obs_noise * obs_noise,
        )
    }
}

/// Scalar Kalman recursion started from the stationary prior N(0, b^2/(1-a^2)).
pub fn kalman_filter(model: &LinearGaussianModel, observed: &[f64]) -> Result<KalmanRun> {
    model.validate()?;
    let (a, b) = (model.a, model.b);
    let (ga, no) = (model.obs_gain, model.obs_noise);
    let r = no * no;
    let mut m_pred = 0.0;
    let mut p_pred = model.prior_variance();
    let mut posterior = Vec::with_capacity(observed.len());
    let mut predicted = Vec::with_capacity(observed.len());
    for &x in observed {
        if !x.is_finite() {
            return Err(Error::NonFinite("observation".into()));
        }
        predicted.push(KalmanState {
            mean: m_pred,
            variance: p_pred,
        });
        let s = ga * ga * p_pred + r;
        let gain = p_pred * ga / s;
        let mean = m_pred + gain * (x - ga * m_pred);
        let variance = p_pred * r / s;
        posterior.push(KalmanState { mean, variance });
        m_pred = a * mean;
        p_pred = a * a * variance + b * b;
    }
    Ok(KalmanRun {
        posterior,
        predicted,
    })
}

/// Initial knowledge about the qubit chain's hidden coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QubitInit {
    /// s0 known exactly; filtering starts from the transition out of it.
    Known(f64),
    /// s0 drawn uniformly on (-1, 1); mean 0, variance 1/3.
    UniformPrior,
}

/// Kalman-style baseline on the qubit chain: the observation is taken as the
/// linear `x_k = N c s_k + omega` and the cubic drift is linearized at the
/// running mean. The recursion carries no knowledge of the physical state
/// bounds, exactly as a generic linearized filter would.
pub fn extended_kalman_qubit(
    model: &QubitChainModel,
    observed: &[f64],
    init: QubitInit,
) -> Result<KalmanRun> {
    model.validate()?;
    let ga = model.obs_gain();
    let r = model.obs_noise() * model.obs_noise();
    let (mut m_prev, mut p_prev) = match init {
        QubitInit::Known(s0) => (s0, 0.0),
        QubitInit::UniformPrior => (0.0, 1.0 / 3.0),
    };
    let mut posterior = Vec::with_capacity(observed.len());
    let mut predicted = Vec::with_capacity(observed.len());
    for &x in observed {
        if !x.is_finite() {
            return Err(Error::NonFinite("observation".into()));
        }
        let jac = model.drift_derivative(m_prev);
        let q = model.noise_std(m_prev).powi(2);
        let m_pred = model.drift(m_prev);
        let p_pred = jac * jac * p_prev + q;
        predicted.push(KalmanState {
            mean: m_pred,
            variance: p_pred,
        });
        let s = ga * ga * p_pred + r;
        let gain = p_pred * ga / s;
        let mean = m_pred + gain * (x - ga * m_pred);
        let variance = p_pred * r / s;
        posterior.push(KalmanState { mean, variance });
        m_prev = mean;
        p_prev = variance;
    }
    Ok(KalmanRun {
        posterior,
        predicted,
    })
}

/// Evenly spaced quadrature nodes.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo, "grid needs at least two ordered nodes");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

pub(crate) fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let half = 0.5 * (nodes[i + 1] - nodes[i]);
        w[i] += half;
        w[i + 1] += half;
    }
    w
}

/// Posterior density sampled on a grid; trapezoid integral is 1.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    nodes: Arc<Vec<f64>>,
    trap: Arc<Vec<f64>>,
    weights: Vec<f64>,
}

impl GridPosterior {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integral(&self) -> f64 {
        self.trap
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| t * w)
            .sum()
    }
}

/// Discretized Chapman-Kolmogorov operator, stored source-major so that
/// propagation can skip sources carrying no posterior mass.
#[derive(Debug, Clone)]
pub struct TransitionOperator {
    nodes: Arc<Vec<f64>>,
    trap: Arc<Vec<f64>>,
    /// Column-major [source i][target j]: outgoing density of source i.
    columns: Vec<f64>,
}

impl TransitionOperator {
    /// Builds the operator from an arbitrary kernel. Each source column is
    /// renormalized to unit outgoing mass (grid-truncation fix); columns
    /// whose kernel is too narrow for the grid collapse to a point mass at
    /// `mean(s_prev)`. `density` should return 0 where the kernel
    /// degenerates.
    pub fn from_density(
        nodes: Arc<Vec<f64>>,
        density: impl Fn(f64, f64) -> f64,
        mean: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = nodes.len();
        let trap = Arc::new(trapezoid_weights(&nodes));
        let mut columns = vec![0.0f64; n * n];
        for i in 0..n {
            let src = nodes[i];
            let col = &mut columns[i * n..(i + 1) * n];
            let mut mass = 0.0;
            for (j, slot) in col.iter_mut().enumerate() {
                let p = density(nodes[j], src);
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::NonFinite(format!(
                        "transition density at ({}, {src})",
                        nodes[j]
                    )));
                }
                *slot = p;
                mass += trap[j] * p;
            }
            if mass < 1e-12 {
                col.fill(0.0);
                let best = nearest_node(&nodes, mean(src));
                col[best] = 1.0 / trap[best];
            } else {
                let scale = 1.0 / mass;
                for slot in col.iter_mut() {
                    *slot *= scale;
                }
            }
        }
        Ok(TransitionOperator {
            nodes,
            trap,
            columns,
        })
    }

    /// Builds the operator of a Gaussian step clamped to the grid interval:
    /// interior mass keeps the Gaussian shape, mass beyond either end piles
    /// up at the boundary node, matching a simulator that clamps.
    pub fn from_clamped_gaussian(
        nodes: Arc<Vec<f64>>,
        mean: impl Fn(f64) -> f64,
        sd: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = nodes.len();
        let trap = Arc::new(trapezoid_weights(&nodes));
        let mut columns = vec![0.0f64; n * n];
        for i in 0..n {
            let src = nodes[i];
            let mu = mean(src);
            let sigma = sd(src);
            if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 {
                return Err(Error::NonFinite(format!("transition parameters at {src}")));
            }
            clamped_gaussian_weights(&nodes, &trap, mu, sigma, &mut columns[i * n..(i + 1) * n]);
        }
        Ok(TransitionOperator {
            nodes,
            trap,
            columns,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Predicted state density: integral of kernel times posterior.
    /// Sources carrying a negligible share of the posterior mass are
    /// skipped; they contribute below 1e-16 relative.
    pub fn propagate(&self, posterior: &GridPosterior) -> Vec<f64> {
        let n = self.nodes.len();
        assert_eq!(posterior.weights.len(), n, "grid mismatch");
        let v: Vec<f64> = posterior
            .weights
            .iter()
            .zip(self.trap.iter())
            .map(|(w, t)| w * t)
            .collect();
        let v_max = v.iter().cloned().fold(0.0f64, f64::max);
        let cutoff = v_max * 1e-16;
        let mut out = vec![0.0f64; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi <= cutoff {
                continue;
            }
            let col = &self.columns[i * n..(i + 1) * n];
            for (o, m) in out.iter_mut().zip(col) {
                *o += m * vi;
            }
        }
        out
    }
}

fn nearest_node(nodes: &[f64], target: f64) -> usize {
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (j, &node) in nodes.iter().enumerate() {
        let d = (node - target).abs();
        if d < best_dist {
            best_dist = d;
            best = j;
        }
    }
    best
}

/// Density weights of a Gaussian clamped to the node interval, written into
/// `out`: Gaussian shape inside, out-of-range tail mass as atoms on the end
/// nodes, degenerate sigma as a point mass at the nearest node.
fn clamped_gaussian_weights(nodes: &[f64], trap: &[f64], mu: f64, sigma: f64, out: &mut [f64]) {
    let n = nodes.len();
    let (lo, hi) = (nodes[0], nodes[n - 1]);
    out.fill(0.0);
    if sigma < 1e-300 {
        let best = nearest_node(nodes, mu.clamp(lo, hi));
        out[best] = 1.0 / trap[best];
        return;
    }
    let tail_lo = normal_cdf((lo - mu) / sigma);
    let tail_hi = 1.0 - normal_cdf((hi - mu) / sigma);
    let interior = (1.0 - tail_lo - tail_hi).max(0.0);
    if interior > 0.0 {
        let mut mass = 0.0;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = normal_pdf(nodes[j], mu, sigma);
            mass += trap[j] * *slot;
        }
        if mass < 1e-12 {
            out.fill(0.0);
            let best = nearest_node(nodes, mu.clamp(lo, hi));
            out[best] = interior / trap[best];
        } else {
            let scale = interior / mass;
            for slot in out.iter_mut() {
                *slot *= scale;
            }
        }
    }
    out[0] += tail_lo / trap[0];
    out[n - 1] += tail_hi / trap[n - 1];
}

/// Normalized pointwise product of prior and first-observation likelihood.
/// Returns the posterior and the normalizer, the marginal density of x_1.
pub fn grid_posterior_init(
    prior: impl Fn(f64) -> f64,
    likelihood: impl Fn(f64) -> f64,
    nodes: &[f64],
) -> Result<(GridPosterior, f64)> {
    let nodes = Arc::new(nodes.to_vec());
    let trap = Arc::new(trapezoid_weights(&nodes));
    // Renormalize the prior on the grid so the normalizer is an honest
    // density value rather than prior-tail-dependent.
    let prior_vals: Vec<f64> = nodes.iter().map(|&s| prior(s)).collect();
    let prior_mass: f64 = prior_vals
        .iter()
        .zip(trap.iter())
        .map(|(p, t)| p * t)
        .sum();
    if !(prior_mass > 0.0) || !prior_mass.is_finite() {
        return Err(Error::ZeroNormalizer);
    }
    let predicted: Vec<f64> = prior_vals.iter().map(|p| p / prior_mass).collect();
    likelihood_update(nodes, trap, &predicted, likelihood)
}

/// Multiplies a predicted state density by the likelihood and renormalizes.
fn likelihood_update(
    nodes: Arc<Vec<f64>>,
    trap: Arc<Vec<f64>>,
    predicted: &[f64],
    likelihood: impl Fn(f64) -> f64,
) -> Result<(GridPosterior, f64)> {
    let mut weights: Vec<f64> = nodes
        .iter()
        .zip(predicted)
        .map(|(&s, &m)| likelihood(s) * m)
        .collect();
    let z: f64 = weights.iter().zip(trap.iter()).map(|(w, t)| w * t).sum();
    if !(z > 1e-300) || !z.is_finite() {
        return Err(Error::ZeroNormalizer);
    }
    for w in weights.iter_mut() {
        *w /= z;
    }
    Ok((
        GridPosterior {
            nodes,
            trap,
            weights,
        },
        z,
    ))
}

/// Predictive density value of an observation given predicted state mass.
fn grid_normalizer(
    nodes: &[f64],
    trap: &[f64],
    predicted: &[f64],
    likelihood: impl Fn(f64) -> f64,
) -> f64 {
    nodes
        .iter()
        .zip(trap)
        .zip(predicted)
        .map(|((&s, t), m)| likelihood(s) * m * t)
        .sum()
}

/// One recursion step: Chapman-Kolmogorov propagation through the transition
/// operator, then likelihood reweighting. The returned scalar is the
/// normalizer, i.e. the predictive density f(x_k | x_1..x_{k-1}).
pub fn grid_posterior_step(
    prev: &GridPosterior,
    transition: &TransitionOperator,
    likelihood: impl Fn(f64) -> f64,
) -> Result<(GridPosterior, f64)> {
    let predicted = transition.propagate(prev);
    likelihood_update(
        Arc::clone(&prev.nodes),
        Arc::clone(&prev.trap),
        &predicted,
        likelihood,
    )
}

/// Conditional mean of `transform(s)` (identity when None) under the posterior.
pub fn posterior_mean(post: &GridPosterior, transform: Option<&dyn Fn(f64) -> f64>) -> f64 {
    post.nodes
        .iter()
        .zip(post.trap.iter())
        .zip(&post.weights)
        .map(|((&s, t), w)| {
            let q = transform.map_or(s, |f| f(s));
            q * w * t
        })
        .sum()
}

/// Solves the optimal filtering identity pointwise:
/// `E(Q(s_k)|x_1..x_k) = (logderiv(f_pred)(x_k) - (ln h)'(x_k)) / T'(x_k)`.
///
/// The caller supplies the predictive density estimate; nothing about the
/// hidden chain's prior or transition law is used.
pub fn optimal_filter_estimate(
    family: &ExpFamilyDecomposition,
    x: f64,
    predictive: &PredictiveEstimate,
) -> Result<f64> {
    let t_prime = (family.t_prime)(x);
    if !t_prime.is_finite() {
        return Err(Error::NonFinite("T'(x)".into()));
    }
    if t_prime.abs() <= 1e-12 {
        return Err(Error::NoninformativePoint);
    }
    Ok((predictive.log_derivative - (family.log_h_prime)(x)) / t_prime)
}

/// Mean squared error between estimates and the hidden truth.
pub fn empirical_risk(estimates: &[f64], hidden: &[f64]) -> Result<f64> {
    if estimates.len() != hidden.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimates vs {} hidden values",
            estimates.len(),
            hidden.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidState("no steps to score".into()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(hidden)
        .map(|(e, s)| (e - s) * (e - s))
        .sum();
    Ok(sum / estimates.len() as f64)
}

/// Which filter a pipeline run applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Kalman,
    Grid,
    OptimalEq(PredictiveMode),
}

/// Source of the predictive density for the optimal filtering equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictiveMode {
    /// Kernel estimator over the observed sequence (fully model-free).
    Kernel,
    /// Grid-filter normalizer with a central-difference derivative
    /// (model-known validation mode).
    GridNormalizer,
}

impl FilterKind {
    pub fn id(&self) -> &'static str {
        match self {
            FilterKind::Kalman => "kalman",
            FilterKind::Grid => "grid",
            FilterKind::OptimalEq(PredictiveMode::Kernel) => "optimal-eq-kernel",
            FilterKind::OptimalEq(PredictiveMode::GridNormalizer) => "optimal-eq-grid",
        }
    }
}

/// Grid geometry. Linear models span `mean +- span_sigmas` stationary
/// deviations; the qubit chain always spans [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nodes: usize,
    pub span_sigmas: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            nodes: 2001,
            span_sigmas: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
}

/// Model binding for a pipeline run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PipelineModel {
    Linear(LinearGaussianModel),
    Qubit {
        model: QubitChainModel,
        init: QubitInit,
    },
}

/// Per-trajectory filter output: per-step estimates, squared errors against
/// the hidden truth, and the aggregate empirical risk.
#[derive(Debug, Clone)]
pub struct FilterReport {
    pub filter_id: String,
    /// 1-indexed steps that produced estimates (skipped steps excluded).
    pub steps: Vec<usize>,
    pub estimates: Vec<f64>,
    pub hidden: Vec<f64>,
    pub squared_errors: Vec<f64>,
    pub empirical_risk: f64,
    /// Steps where the predictive density hit its floor.
    pub saturation_count: usize,
    /// Steps excluded from the risk (insufficient window, estimator errors).
    pub skipped: usize,
}

impl FilterReport {
    fn assemble(
        filter_id: &str,
        steps: Vec<usize>,
        estimates: Vec<f64>,
        hidden: Vec<f64>,
        saturation_count: usize,
        skipped: usize,
    ) -> Result<Self> {
        let squared_errors: Vec<f64> = estimates
            .iter()
            .zip(&hidden)
            .map(|(e, s)| (e - s) * (e - s))
            .collect();
        let empirical_risk = empirical_risk(&estimates, &hidden)?;
        Ok(FilterReport {
            filter_id: filter_id.to_string(),
            steps,
            estimates,
            hidden,
            squared_errors,
            empirical_risk,
            saturation_count,
            skipped,
        })
    }

    /// CSV body with header `step,estimate,hidden,squared_error`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,estimate,hidden,squared_error\n");
        for i in 0..self.steps.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.steps[i],
                crate::bench::fmt_f64(self.estimates[i]),
                crate::bench::fmt_f64(self.hidden[i]),
                crate::bench::fmt_f64(self.squared_errors[i]),
            ));
        }
        out
    }
}

/// Runs one filter over a trajectory and scores it against the hidden truth.
pub fn run_filter_pipeline(
    model: &PipelineModel,
    trajectory: &Trajectory,
    config: &FilterConfig,
) -> Result<FilterReport> {
    let xs = &trajectory.observed;
    let hidden = &trajectory.hidden;
    if xs.is_empty() {
        return Err(Error::InvalidState("empty trajectory".into()));
    }
    let all_steps: Vec<usize> = (1..=xs.len()).collect();

    match (config.kind, model) {
        (FilterKind::Kalman, PipelineModel::Linear(m)) => {
            let run = kalman_filter(m, xs)?;
            FilterReport::assemble(
                config.kind.id(),
                all_steps,
                run.estimates(),
                hidden.clone(),
                0,
                0,
            )
        }
        (FilterKind::Kalman, PipelineModel::Qubit { model: m, init }) => {
            let run = extended_kalman_qubit(m, xs, *init)?;
            FilterReport::assemble(
                config.kind.id(),
                all_steps,
                run.estimates(),
                hidden.clone(),
                0,
                0,
            )
        }
        (FilterKind::Grid, _) => {
            let mut means = Vec::with_capacity(xs.len());
            run_grid(model, xs, &config.grid, |post, _z, _predicted, _trap| {
                means.push(posterior_mean(post, None));
                Ok(())
            })?;
            FilterReport::assemble(config.kind.id(), all_steps, means, hidden.clone(), 0, 0)
        }
        (FilterKind::OptimalEq(PredictiveMode::GridNormalizer), _) => {
            let family = model_family(model);
            let x_sd = sample_sd(xs);
            let delta = 1e-4 * x_sd.max(1e-8);
            let mut estimates = Vec::with_capacity(xs.len());
            let mut saturation = 0usize;
            let obs_density = model_observation(model);
            let mut k = 0usize;
            run_grid(model, xs, &config.grid, |_post, z, predicted, grid| {
                let x = xs[k];
                let z_plus = grid_normalizer(grid.0, grid.1, predicted, |s| obs_density(x + delta, s));
                let z_minus =
                    grid_normalizer(grid.0, grid.1, predicted, |s| obs_density(x - delta, s));
                let derivative = (z_plus - z_minus) / (2.0 * delta);
                let est = PredictiveEstimate::from_value_and_derivative(z, derivative);
                if est.saturated {
                    saturation += 1;
                }
                estimates.push(optimal_filter_estimate(&family, x, &est)?);
                k += 1;
                Ok(())
            })?;
            FilterReport::assemble(
                config.kind.id(),
                all_steps,
                estimates,
                hidden.clone(),
                saturation,
                0,
            )
        }
        (FilterKind::OptimalEq(PredictiveMode::Kernel), _) => {
            let family = model_family(model);
            let estimator = fit_predictive(xs, &config.kernel)?;
            let lag = config.kernel.lag;
            let mut steps = Vec::new();
            let mut estimates = Vec::new();
            let mut kept_hidden = Vec::new();
            let mut saturation = 0usize;
            let mut skipped = lag.min(xs.len());
            for k in lag..xs.len() {
                let mut window = Vec::with_capacity(lag);
                for j in 1..=lag {
                    window.push(xs[k - j]);
                }
                let est = match estimator.evaluate(xs[k], &window) {
                    Ok(e) => e,
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
                if est.saturated {
                    saturation += 1;
                }
                match optimal_filter_estimate(&family, xs[k], &est) {
                    Ok(v) => {
                        steps.push(k + 1);
                        estimates.push(v);
                        kept_hidden.push(hidden[k]);
                    }
                    Err(_) => skipped += 1,
                }
            }
            FilterReport::assemble(
                config.kind.id(),
                steps,
                estimates,
                kept_hidden,
                saturation,
                skipped,
            )
        }
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

fn model_family(model: &PipelineModel) -> ExpFamilyDecomposition {
    match model {
        PipelineModel::Linear(m) => m.exp_family(),
        PipelineModel::Qubit { model: m, .. } => m.exp_family(),
    }
}

fn model_observation(model: &PipelineModel) -> impl Fn(f64, f64) -> f64 + '_ {
    move |x, s| match model {
        PipelineModel::Linear(m) => normal_pdf(x, m.obs_gain * s, m.obs_noise),
        PipelineModel::Qubit { model: m, .. } => normal_pdf(x, m.obs_gain() * s, m.obs_noise()),
    }
}

/// Shared grid recursion: builds the grid and transition operator for the
/// model, then walks the observations calling `visit` with the posterior,
/// the step normalizer, and the pre-likelihood predicted mass.
fn run_grid(
    model: &PipelineModel,
    xs: &[f64],
    grid: &GridSpec,
    mut visit: impl FnMut(&GridPosterior, f64, &[f64], (&[f64], &[f64])) -> Result<()>,
) -> Result<()> {
    if grid.nodes < 2 {
        return Err(Error::config("grid.nodes", "need at least 2 nodes"));
    }
    let (nodes, transition): (Arc<Vec<f64>>, TransitionOperator) = match model {
        PipelineModel::Linear(m) => {
            if m.b == 0.0 {
                return Err(Error::Degenerate(
                    "grid filter needs b > 0 on the linear model".into(),
                ));
            }
            let sd = m.prior_variance().sqrt();
            let nodes = Arc::new(uniform_grid(
                -grid.span_sigmas * sd,
                grid.span_sigmas * sd,
                grid.nodes,
            ));
            let (a, b) = (m.a, m.b);
            let transition = TransitionOperator::from_density(
                Arc::clone(&nodes),
                move |s_next, s_prev| normal_pdf(s_next, a * s_prev, b),
                move |s_prev| a * s_prev,
            )?;
            (nodes, transition)
        }
        PipelineModel::Qubit { model: m, .. } => {
            let nodes = Arc::new(uniform_grid(-1.0, 1.0, grid.nodes));
            let m = *m;
            // The simulator clamps to the physical interval, so the exact
            // transition law has Gaussian interior plus boundary atoms.
            let transition = TransitionOperator::from_clamped_gaussian(
                Arc::clone(&nodes),
                move |s_prev| m.drift(s_prev),
                move |s_prev| m.noise_std(s_prev),
            )?;
            (nodes, transition)
        }
    };
    let trap = Arc::new(trapezoid_weights(&nodes));

    let mut prior_weights: Vec<f64> = match model {
        PipelineModel::Linear(m) => {
            let prior_sd = m.prior_variance().sqrt();
            nodes.iter().map(|&s| normal_pdf(s, 0.0, prior_sd)).collect()
        }
        PipelineModel::Qubit { model: m, init } => match init {
            QubitInit::UniformPrior => vec![0.5; nodes.len()],
            QubitInit::Known(s0) => {
                let mut out = vec![0.0; nodes.len()];
                clamped_gaussian_weights(&nodes, &trap, m.drift(*s0), m.noise_std(*s0), &mut out);
                out
            }
        },
    };
    let prior_mass: f64 = prior_weights
        .iter()
        .zip(trap.iter())
        .map(|(p, t)| p * t)
        .sum();
    if !(prior_mass > 0.0) || !prior_mass.is_finite() {
        return Err(Error::ZeroNormalizer);
    }
    for w in prior_weights.iter_mut() {
        *w /= prior_mass;
    }

    let obs_density = model_observation(model);

    let x1 = xs[0];
    let (mut post, z1) = likelihood_update(
        Arc::clone(&nodes),
        Arc::clone(&trap),
        &prior_weights,
        |s| obs_density(x1, s),
    )?;
    visit(&post, z1, &prior_weights, (&nodes, &trap))?;

    for &x in &xs[1..] {
        let predicted = transition.propagate(&post);
        let (next, z) = likelihood_update(Arc::clone(&nodes), Arc::clone(&trap), &predicted, |s| {
            obs_density(x, s)
        })?;
        visit(&next, z, &predicted, (&nodes, &trap))?;
        post = next;
    }
    Ok(())
}

/// Grid recursion over a full observation sequence, returning per-step
/// posterior means and normalizers. Convenience wrapper over the
/// init/step primitives for model-known validation work.
pub fn grid_filter_run(
    model: &PipelineModel,
    xs: &[f64],
    grid: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut means = Vec::with_capacity(xs.len());
    let mut normalizers = Vec::with_capacity(xs.len());
    run_grid(model, xs, grid, |post, z, _predicted, _| {
        means.push(posterior_mean(post, None));
        normalizers.push(z);
        Ok(())
    })?;
    Ok((means, normalizers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::simulate_linear;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn near_noiseless_observations_dominate() {
        let m = LinearGaussianModel::new(0.8, 0.6, 1.0, 1e-9).unwrap();
        let xs: Vec<f64> = vec![0.3, -0.1, 0.7, 0.2];
        let run = kalman_filter(&m, &xs).unwrap();
        for (est, x) in run.estimates().iter().zip(&xs) {
            assert_abs_diff_eq!(est, x, epsilon = 1e-6);
        }
    }

    #[test]
    fn uninformative_observations_leave_prior_mean() {
        let m = LinearGaussianModel::new(0.8, 0.6, 0.0, 1.0).unwrap();
        let xs: Vec<f64> = vec![5.0, -3.0, 2.0];
        let run = kalman_filter(&m, &xs).unwrap();
        for est in run.estimates() {
            assert_abs_diff_eq!(est, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn predicted_variance_converges_to_riccati_fixed_point() {
        let m = LinearGaussianModel::new(0.8, 0.6, 1.0, 1.0).unwrap();
        // A^2 P^2 + (B^2(1 - a^2) - A^2 b^2) P - b^2 B^2 = 0, positive root.
        let (a2, b2) = (m.a * m.a, m.b * m.b);
        let (ga2, r) = (m.obs_gain * m.obs_gain, m.obs_noise * m.obs_noise);
        let qa = ga2;
        let qb = r * (1.0 - a2) - ga2 * b2;
        let qc = -b2 * r;
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);

        let xs = vec![0.1; 120];
        let run = kalman_filter(&m, &xs).unwrap();
        let p100 = run.predicted[100].variance;
        assert!(
            (p100 - root).abs() < 1e-8,
            "predicted variance {p100} vs fixed point {root}"
        );
        // Posterior variance stays within its coarse a priori bound.
        let bound = m.prior_variance() + b2;
        assert!(run.posterior.iter().all(|s| s.variance >= 0.0 && s.variance <= bound));
    }

    #[test]
    fn grid_init_matches_conjugate_gaussian_product() {
        let prior_sd = 1.3f64;
        let obs_sd = 0.8f64;
        let x = 0.9;
        let nodes = uniform_grid(-8.0 * prior_sd, 8.0 * prior_sd, 2001);
        let (post, _z) = grid_posterior_init(
            |s| normal_pdf(s, 0.0, prior_sd),
            |s| normal_pdf(x, s, obs_sd),
            &nodes,
        )
        .unwrap();
        let post_var = 1.0 / (1.0 / (prior_sd * prior_sd) + 1.0 / (obs_sd * obs_sd));
        let post_mean = post_var * x / (obs_sd * obs_sd);
        let mut sup = 0.0f64;
        for (i, &s) in nodes.iter().enumerate() {
            sup = sup.max((post.weights()[i] - normal_pdf(s, post_mean, post_var.sqrt())).abs());
        }
        assert!(sup < 1e-6, "sup-norm deviation {sup}");
        assert_abs_diff_eq!(post.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_prior_and_likelihood_stay_uniform() {
        let nodes = uniform_grid(-1.0, 1.0, 101);
        let (post, _) = grid_posterior_init(|_| 1.0, |_| 1.0, &nodes).unwrap();
        let w0 = post.weights()[0];
        assert!(post.weights().iter().all(|w| (w - w0).abs() < 1e-14));
    }

    #[test]
    fn vanishing_likelihood_is_a_zero_normalizer() {
        let nodes = uniform_grid(-1.0, 1.0, 51);
        let res = grid_posterior_init(|s| normal_pdf(s, 0.0, 0.3), |_| 0.0, &nodes);
        assert!(matches!(res, Err(Error::ZeroNormalizer)));
    }

    #[test]
    fn near_identity_transition_with_flat_likelihood_preserves_posterior() {
        let nodes = uniform_grid(-2.0, 2.0, 4001);
        let arc = Arc::new(nodes.clone());
        let (post, _) = grid_posterior_init(
            |s| normal_pdf(s, 0.0, 0.5),
            |s| normal_pdf(0.2, s, 1.0),
            &nodes,
        )
        .unwrap();
        let op = TransitionOperator::from_density(
            arc,
            |s_next, s_prev| normal_pdf(s_next, s_prev, 1e-3),
            |s_prev| s_prev,
        )
        .unwrap();
        let (next, _z) = grid_posterior_step(&post, &op, |_| 1.0).unwrap();
        let trap = trapezoid_weights(&nodes);
        let tv: f64 = post
            .weights()
            .iter()
            .zip(next.weights())
            .zip(&trap)
            .map(|((a, b), t)| 0.5 * (a - b).abs() * t)
            .sum();
        assert!(tv < 1e-3, "total variation {tv}");
    }

    #[test]
    fn grid_posterior_tracks_kalman_on_linear_model() {
        let m = LinearGaussianModel::new(0.8, 0.6, 1.0, 1.0).unwrap();
        let traj = simulate_linear(&m, 200, 0, &mut rng(21)).unwrap();
        let run = kalman_filter(&m, &traj.observed).unwrap();
        let (means, _) =
            grid_filter_run(&PipelineModel::Linear(m), &traj.observed, &GridSpec::default())
                .unwrap();
        let mut worst = 0.0f64;
        for (g, k) in means.iter().zip(run.estimates()) {
            worst = worst.max((g - k).abs());
        }
        assert!(worst < 1e-4, "max grid-Kalman deviation {worst}");
    }

    #[test]
    fn qubit_grid_posterior_stays_normalized_on_unit_interval() {
        let m = QubitChainModel::new(0.1, 100).unwrap();
        let xs: Vec<f64> = vec![3.0, -2.0, 8.0, 1.0, -4.0, 0.5, 12.0, -9.0];
        let model = PipelineModel::Qubit {
            model: m,
            init: QubitInit::Known(0.4),
        };
        run_grid(&model, &xs, &GridSpec::default(), |post, _z, _p, _| {
            assert!((post.integral() - 1.0).abs() < 1e-9);
            assert!(post.nodes().iter().all(|&s| (-1.0..=1.0).contains(&s)));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn posterior_mean_of_symmetric_grid_is_zero() {
        let nodes = uniform_grid(-3.0, 3.0, 601);
        let (post, _) =
            grid_posterior_init(|s| normal_pdf(s, 0.0, 0.7), |_| 1.0, &nodes).unwrap();
        assert_abs_diff_eq!(posterior_mean(&post, None), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_mean_recovers_gaussian_center() {
        let nodes = uniform_grid(-10.0, 14.0, 4001);
        let (post, _) = grid_posterior_init(
            |s| normal_pdf(s, 1.7, 0.9),
            |_| 1.0,
            &nodes,
        )
        .unwrap();
        assert_abs_diff_eq!(posterior_mean(&post, None), 1.7, epsilon = 1e-8);
    }

    #[test]
    fn posterior_mean_applies_transform_to_point_mass() {
        let s0 = 2.5;
        let nodes = uniform_grid(0.5, 4.5, 8001);
        let (post, _) = grid_posterior_init(
            |s| normal_pdf(s, s0, 1e-3),
            |_| 1.0,
            &nodes,
        )
        .unwrap();
        let inv = |s: f64| 1.0 / s;
        let est = posterior_mean(&post, Some(&inv));
        assert!(
            (est - 1.0 / s0).abs() < 1e-6,
            "E[1/s] = {est} vs {}",
            1.0 / s0
        );
    }

    #[test]
    fn gaussian_case_reduces_to_explicit_kalman_form() {
        let m = LinearGaussianModel::new(0.9, 0.5, 1.3, 0.7).unwrap();
        let fam = m.exp_family();
        let (a, b2) = (m.obs_gain, m.obs_noise * m.obs_noise);
        for (x, logd) in [(0.4, -0.9), (-1.2, 0.3), (2.0, -2.5)] {
            let est = PredictiveEstimate {
                value: 0.1,
                derivative: 0.1 * logd,
                log_derivative: logd,
                saturated: false,
            };
            let got = optimal_filter_estimate(&fam, x, &est).unwrap();
            let explicit = (b2 / a) * logd + x / a;
            assert_abs_diff_eq!(got, explicit, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_predictive_reproduces_kalman_posterior_mean() {
        let m = LinearGaussianModel::new(0.85, 0.7, 1.1, 0.9).unwrap();
        let traj = simulate_linear(&m, 100, 0, &mut rng(22)).unwrap();
        let run = kalman_filter(&m, &traj.observed).unwrap();
        let fam = m.exp_family();
        for (k, &x) in traj.observed.iter().enumerate() {
            let (mean, var) = run.predictive_params(k, m.obs_gain, m.obs_noise);
            let value = normal_pdf(x, mean, var.sqrt());
            let log_derivative = -(x - mean) / var;
            let est = PredictiveEstimate {
                value,
                derivative: value * log_derivative,
                log_derivative,
                saturated: false,
            };
            let eq_d = optimal_filter_estimate(&fam, x, &est).unwrap();
            assert!(
                (eq_d - run.posterior[k].mean).abs() < 1e-10,
                "step {k}: {eq_d} vs {}",
                run.posterior[k].mean
            );
        }
    }

    #[test]
    fn estimate_is_invariant_to_rescaling_h() {
        let m = LinearGaussianModel::new(0.9, 0.5, 1.0, 1.0).unwrap();
        let fam = m.exp_family();
        // Fold a constant into h and pull it out of C; log h' is unchanged.
        let scaled = ExpFamilyDecomposition {
            h: {
                let h = Arc::clone(&fam.h);
                Arc::new(move |x| 7.3 * h(x))
            },
            c_tilde: {
                let c = Arc::clone(&fam.c_tilde);
                Arc::new(move |s| c(s) / 7.3)
            },
            ..fam.clone()
        };
        let est = PredictiveEstimate {
            value: 0.2,
            derivative: -0.1,
            log_derivative: -0.5,
            saturated: false,
        };
        let a = optimal_filter_estimate(&fam, 0.8, &est).unwrap();
        let b = optimal_filter_estimate(&scaled, 0.8, &est).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled.reconstruct(0.8, 0.4), fam.reconstruct(0.8, 0.4), epsilon = 1e-15);
    }

    #[test]
    fn zero_t_prime_is_noninformative() {
        let m = LinearGaussianModel::new(0.9, 0.5, 0.0, 1.0).unwrap();
        let fam = m.exp_family();
        let est = PredictiveEstimate {
            value: 0.2,
            derivative: 0.0,
            log_derivative: 0.0,
            saturated: false,
        };
        assert!(matches!(
            optimal_filter_estimate(&fam, 0.1, &est),
            Err(Error::NoninformativePoint)
        ));
    }

    #[test]
    fn static_chi_squared_state_is_recovered_exactly() {
        use crate::models::{BFn, ChiSquaredModel};
        let model = ChiSquaredModel::new(3.0, BFn::Identity).unwrap();
        let fam = model.exp_family();
        let s0 = 1.7;
        // With the hidden state frozen, the predictive density equals the
        // observation density, whose log-derivative is known in closed form.
        for x in [0.4, 1.1, 2.8, 5.0] {
            let value = model.observation_density(x, s0).unwrap();
            let log_derivative = (fam.log_h_prime)(x) + (fam.t_prime)(x) * (fam.q)(s0);
            let est = PredictiveEstimate {
                value,
                derivative: value * log_derivative,
                log_derivative,
                saturated: false,
            };
            let q_hat = optimal_filter_estimate(&fam, x, &est).unwrap();
            assert_abs_diff_eq!(q_hat, (fam.q)(s0), epsilon = 1e-12);
            assert_abs_diff_eq!((fam.q_inverse)(q_hat), s0, epsilon = 1e-12);
        }
    }

    #[test]
    fn empirical_risk_basics() {
        let hidden = vec![0.4, -0.2, 1.0];
        assert_abs_diff_eq!(empirical_risk(&hidden, &hidden).unwrap(), 0.0);
        let shifted: Vec<f64> = hidden.iter().map(|s| s + 1.0).collect();
        assert_abs_diff_eq!(empirical_risk(&shifted, &hidden).unwrap(), 1.0, epsilon = 1e-15);
        assert!(empirical_risk(&hidden[..2], &hidden).is_err());
    }

    #[test]
    fn empirical_risk_matches_independent_two_pass_sum() {
        let mut r = rng(23);
        let estimates: Vec<f64> = (0..500).map(|_| r.random_range(-2.0..2.0)).collect();
        let hidden: Vec<f64> = (0..500).map(|_| r.random_range(-2.0..2.0)).collect();
        let risk = empirical_risk(&estimates, &hidden).unwrap();
        // Two-pass: collect residuals first, then sum in reverse order.
        let mut residuals: Vec<f64> = estimates
            .iter()
            .zip(&hidden)
            .map(|(e, s)| (e - s) * (e - s))
            .collect();
        residuals.reverse();
        let alt = residuals.iter().sum::<f64>() / residuals.len() as f64;
        assert!((risk - alt).abs() < 1e-12);
    }

    #[test]
    fn pipeline_zero_observation_noise_has_negligible_risk() {
        let m = LinearGaussianModel::new(0.9, 0.5, 1.0, 1e-9).unwrap();
        let traj = simulate_linear(&m, 200, 0, &mut rng(24)).unwrap();
        let report = run_filter_pipeline(
            &PipelineModel::Linear(m),
            &traj,
            &FilterConfig {
                kind: FilterKind::Kalman,
                grid: GridSpec::default(),
                kernel: KernelSpec::default(),
            },
        )
        .unwrap();
        assert!(report.empirical_risk < 1e-10, "risk {}", report.empirical_risk);
        let recomputed = report.squared_errors.iter().sum::<f64>() / report.squared_errors.len() as f64;
        assert!((report.empirical_risk - recomputed).abs() < 1e-12);
    }

    #[test]
    fn kalman_and_grid_risks_agree_on_linear_model() {
        let m = LinearGaussianModel::new(0.9, 0.6, 1.0, 1.0).unwrap();
        let traj = simulate_linear(&m, 300, 0, &mut rng(25)).unwrap();
        let model = PipelineModel::Linear(m);
        let base = FilterConfig {
            kind: FilterKind::Kalman,
            grid: GridSpec::default(),
            kernel: KernelSpec::default(),
        };
        let kalman = run_filter_pipeline(&model, &traj, &base).unwrap();
        let grid = run_filter_pipeline(
            &model,
            &traj,
            &FilterConfig {
                kind: FilterKind::Grid,
                ..base
            },
        )
        .unwrap();
        let rel = (kalman.empirical_risk - grid.empirical_risk).abs() / kalman.empirical_risk;
        assert!(rel < 0.01, "relative risk gap {rel}");
    }

    #[test]
    fn grid_normalizer_mode_matches_grid_posterior_mean() {
        let m = LinearGaussianModel::new(0.9, 0.6, 1.0, 1.0).unwrap();
        let traj = simulate_linear(&m, 150, 0, &mut rng(26)).unwrap();
        let model = PipelineModel::Linear(m);
        let grid = run_filter_pipeline(
            &model,
            &traj,
            &FilterConfig {
                kind: FilterKind::Grid,
                grid: GridSpec::default(),
                kernel: KernelSpec::default(),
            },
        )
        .unwrap();
        let eq_d = run_filter_pipeline(
            &model,
            &traj,
            &FilterConfig {
                kind: FilterKind::OptimalEq(PredictiveMode::GridNormalizer),
                grid: GridSpec::default(),
                kernel: KernelSpec::default(),
            },
        )
        .unwrap();
        let mut worst = 0.0f64;
        for (a, b) in grid.estimates.iter().zip(&eq_d.estimates) {
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-3, "max deviation {worst}");
    }

    #[test]
    fn extended_kalman_handles_zero_coupling() {
        let m = QubitChainModel::new(0.0, 100).unwrap();
        let xs = vec![1.0, -2.0, 0.5];
        let run = extended_kalman_qubit(&m, &xs, QubitInit::UniformPrior).unwrap();
        for s in run.posterior {
            assert_abs_diff_eq!(s.mean, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.variance, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn filter_report_csv_shape() {
        let report = FilterReport::assemble(
            "kalman",
            vec![1, 2],
            vec![0.1, 0.2],
            vec![0.15, 0.1],
            0,
            0,
        )
        .unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("step,estimate,hidden,squared_error\n"));
        assert_eq!(csv.lines().count(), 3);
    }
}
