//! Partially observed Markov models: transition and observation densities,
//! exponential-family decompositions, and trajectory simulators.
//!
//! Three model families are provided:
//!
//! * [`LinearGaussianModel`] — the scalar AR(1) pair
//!   `s_k = a s_{k-1} + b xi_k`, `x_k = A s_k + B eta_k`.
//! * [`QubitChainModel`] — the weak-measurement qubit chain, both as the
//!   Gaussianized block recursion and as the exact per-measurement chain
//!   driven by the quantum simulator.
//! * [`ChiSquaredModel`] — a multiplicative-noise model whose observation
//!   density factorizes over the exponential family with non-identity Q.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{coupling_unitary, BlochVector, Observable, WeakMeasurementChain};
use crate::quantum::bloch_to_density;

/// N(x; mean, sd^2) density.
pub(crate) fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 polynomial
/// (|err| < 1.5e-7; used for transition tail masses, not for tight oracles).
pub(crate) fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = sign * (1.0 - poly * (-x * x).exp());
    0.5 * (1.0 + erf)
}

/// ln Gamma via the Lanczos approximation (g = 7, 9 terms), |rel err| < 1e-13.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Exponential-family factorization of an observation density
/// `f(x|s) = C(s) h(x) exp(T(x) Q(s))`, with the derivatives the optimal
/// filtering equation needs.
#[derive(Clone)]
pub struct ExpFamilyDecomposition {
    pub c_tilde: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub t: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub t_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub q: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub q_inverse: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// d/dx ln h(x).
    pub log_h_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ExpFamilyDecomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExpFamilyDecomposition { .. }")
    }
}

impl ExpFamilyDecomposition {
    /// Re-multiplies the factors; must reproduce the observation density.
    pub fn reconstruct(&self, x: f64, s: f64) -> f64 {
        (self.c_tilde)(s) * (self.h)(x) * ((self.t)(x) * (self.q)(s)).exp()
    }

    /// Gaussian observation x = A s + B eta with identity Q.
    pub fn gaussian(obs_gain: f64, obs_noise: f64) -> Self {
        let a = obs_gain;
        let b2 = obs_noise * obs_noise;
        ExpFamilyDecomposition {
            c_tilde: Arc::new(move |s| {
                (-a * a * s * s / (2.0 * b2)).exp() / ((2.0 * PI).sqrt() * obs_noise)
            }),
            h: Arc::new(move |x| (-x * x / (2.0 * b2)).exp()),
            t: Arc::new(move |x| a * x / b2),
            t_prime: Arc::new(move |_| a / b2),
            q: Arc::new(|s| s),
            q_inverse: Arc::new(|v| v),
            log_h_prime: Arc::new(move |x| -x / b2),
        }
    }
}

/// Scalar AR(1) hidden state with linear-Gaussian observations:
/// `s_k = a s_{k-1} + b xi_k`, `x_k = A s_k + B eta_k`,
/// `xi, eta` iid standard normal, stationary prior `N(0, b^2/(1-a^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianModel {
    /// State coefficient `a`, |a| < 1.
    pub a: f64,
    /// State noise gain `b` >= 0.
    pub b: f64,
    /// Observation gain `A`.
    pub obs_gain: f64,
    /// Observation noise scale `B` > 0.
    pub obs_noise: f64,
}

impl LinearGaussianModel {
    pub fn new(a: f64, b: f64, obs_gain: f64, obs_noise: f64) -> Result<Self> {
        let m = LinearGaussianModel { a, b, obs_gain, obs_noise };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a", self.a),
            ("b", self.b),
            ("A", self.obs_gain),
            ("B", self.obs_noise),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("linear model coefficient {name}")));
            }
        }
        if self.a.abs() >= 1.0 {
            return Err(Error::InvalidState(format!("|a| must be < 1, got {}", self.a)));
        }
        if self.b < 0.0 {
            return Err(Error::InvalidState(format!("b must be >= 0, got {}", self.b)));
        }
        if self.obs_noise <= 0.0 {
            return Err(Error::InvalidState(format!(
                "B must be > 0, got {}",
                self.obs_noise
            )));
        }
        Ok(())
    }

    /// Stationary variance `b^2 / (1 - a^2)` of the hidden chain.
    pub fn prior_variance(&self) -> f64 {
        self.b * self.b / (1.0 - self.a * self.a)
    }

    /// `f(x|s) = N(x; A s, B^2)`.
    pub fn observation_density(&self, x: f64, s: f64) -> Result<f64> {
        if !x.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("observation density argument".into()));
        }
        Ok(normal_pdf(x, self.obs_gain * s, self.obs_noise))
    }

    /// `p(s'|s) = N(s'; a s, b^2)`; errors when b = 0 (point mass).
    pub fn transition_density(&self, s_next: f64, s_prev: f64) -> Result<f64> {
        if !s_next.is_finite() || !s_prev.is_finite() {
            return Err(Error::NonFinite("transition density argument".into()));
        }
        if self.b == 0.0 {
            return Err(Error::Degenerate(
                "b = 0 gives a point-mass transition".into(),
            ));
        }
        Ok(normal_pdf(s_next, self.a * s_prev, self.b))
    }

    pub fn exp_family(&self) -> ExpFamilyDecomposition {
        ExpFamilyDecomposition::gaussian(self.obs_gain, self.obs_noise)
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("a".into(), self.a),
            ("b".into(), self.b),
            ("A".into(), self.obs_gain),
            ("B".into(), self.obs_noise),
        ])
    }
}

/// Simulates the linear-Gaussian pair with the hidden chain started from
/// its stationary prior.
pub fn simulate_linear<R: Rng + ?Sized>(
    model: &LinearGaussianModel,
    steps: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let s0 = model.prior_variance().sqrt() * std_normal.sample(rng);
    simulate_linear_from(model, s0, steps, seed, rng)
}

/// Same recursion from a fixed initial hidden value (diagnostics and tests).
pub fn simulate_linear_from<R: Rng + ?Sized>(
    model: &LinearGaussianModel,
    s0: f64,
    steps: usize,
    seed: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidState("trajectory length must be >= 1".into()));
    }
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut hidden = Vec::with_capacity(steps);
    let mut observed = Vec::with_capacity(steps);
    let mut s = s0;
    for _ in 0..steps {
        s = model.a * s + model.b * std_normal.sample(rng);
        let x = model.obs_gain * s + model.obs_noise * std_normal.sample(rng);
        hidden.push(s);
        observed.push(x);
    }
    Trajectory::new(hidden, observed, seed, "linear", model.params(), 0)
}

/// Exact one-measurement update of the hidden Bloch coordinate:
/// `s -> (s + c) / (1 + c s)` with the outcome sign folded into `c`.
pub fn mobius_step(s: f64, signed_c: f64) -> f64 {
    (s + signed_c) / (1.0 + signed_c * s)
}

/// Weak-measurement qubit chain. The probe is prepared in Bloch state
/// `[0, 0, c]` and measured N times per block; the block observation is the
/// difference of +1 and -1 counts. The Gaussianized form treats
/// `x_k ~ N(N c s_k, N)` with the matching cubic drift on `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitChainModel {
    /// Probe coupling c = third Bloch component of the ancilla, |c| < 1.
    pub coupling: f64,
    /// Measurements aggregated per block (N >= 1).
    pub block_size: u32,
    /// Half-width of the clamp guard keeping Euler trajectories inside (-1, 1).
    pub clamp_eps: f64,
}

impl QubitChainModel {
    pub fn new(coupling: f64, block_size: u32) -> Result<Self> {
        let m = QubitChainModel {
            coupling,
            block_size,
            clamp_eps: 1e-6,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_clamp_eps(mut self, eps: f64) -> Self {
        self.clamp_eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.coupling.is_finite() {
            return Err(Error::NonFinite("coupling".into()));
        }
        if self.coupling.abs() >= 1.0 {
            return Err(Error::InvalidState(format!(
                "|c| must be < 1, got {}",
                self.coupling
            )));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidState("block size must be >= 1".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 1.0) {
            return Err(Error::InvalidState("clamp_eps must be in (0, 1)".into()));
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.block_size as f64
    }

    /// Deterministic part of the block update `s + N c^2 s (1 - s^2)`.
    pub fn drift(&self, s: f64) -> f64 {
        s + self.n() * self.coupling * self.coupling * s * (1.0 - s * s)
    }

    /// d(drift)/ds, used by the linearized filter baseline.
    pub fn drift_derivative(&self, s: f64) -> f64 {
        1.0 + self.n() * self.coupling * self.coupling * (1.0 - 3.0 * s * s)
    }

    /// Standard deviation `|c| (1 - s^2) sqrt(N)` of the block state noise.
    pub fn noise_std(&self, s: f64) -> f64 {
        self.coupling.abs() * (1.0 - s * s).abs() * self.n().sqrt()
    }

    /// Effective observation gain N c.
    pub fn obs_gain(&self) -> f64 {
        self.n() * self.coupling
    }

    /// Effective observation noise sd sqrt(N).
    pub fn obs_noise(&self) -> f64 {
        self.n().sqrt()
    }

    /// `f(x|s) = N(x; N c s, N)`.
    pub fn observation_density(&self, x: f64, s: f64) -> Result<f64> {
        if !x.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("observation density argument".into()));
        }
        Ok(normal_pdf(x, self.obs_gain() * s, self.obs_noise()))
    }

    /// Gaussian transition implied by the block recursion; errors at the
    /// fixed points s = +-1 or c = 0 where the noise degenerates.
    pub fn transition_density(&self, s_next: f64, s_prev: f64) -> Result<f64> {
        if !s_next.is_finite() || !s_prev.is_finite() {
            return Err(Error::NonFinite("transition density argument".into()));
        }
        let sd = self.noise_std(s_prev);
        if sd < 1e-300 {
            return Err(Error::Degenerate(format!(
                "transition noise vanishes at s = {s_prev}"
            )));
        }
        Ok(normal_pdf(s_next, self.drift(s_prev), sd))
    }

    pub fn exp_family(&self) -> ExpFamilyDecomposition {
        ExpFamilyDecomposition::gaussian(self.obs_gain(), self.obs_noise())
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("c".into(), self.coupling),
            ("N".into(), self.n()),
            ("clamp_eps".into(), self.clamp_eps),
        ])
    }

    /// The exact chain behind the block model: system prepared with hidden
    /// coordinate `s0` in the second Bloch slot, probe `[0, 0, c]`, coupling
    /// angle pi/4 (where one measurement transfers the full `c`-weight of
    /// information), sigma_x measured on the probe.
    pub fn microstep_chain(&self, s0: f64) -> Result<WeakMeasurementChain> {
        let system = bloch_to_density(&BlochVector::new(0.0, s0, 0.0))?;
        let coupling = coupling_unitary(1.0, PI / 4.0)?;
        WeakMeasurementChain::new(
            system,
            BlochVector::new(0.0, 0.0, self.coupling),
            coupling,
            Observable::X,
        )
    }
}

/// Simulates the Gaussianized block recursion. Hidden values are clamped to
/// `[-1 + eps, 1 - eps]` (the Euler form can overshoot the physical range);
/// clamp events are counted in the trajectory metadata.
pub fn simulate_qubit_chain<R: Rng + ?Sized>(
    model: &QubitChainModel,
    blocks: usize,
    s0: f64,
    seed: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    if blocks == 0 {
        return Err(Error::InvalidState("trajectory length must be >= 1".into()));
    }
    if !(s0 > -1.0 && s0 < 1.0) {
        return Err(Error::InvalidState(format!("s0 must be in (-1, 1), got {s0}")));
    }
    let omega = Normal::new(0.0, model.obs_noise()).expect("block noise");
    let c = model.coupling;
    let lo = -1.0 + model.clamp_eps;
    let hi = 1.0 - model.clamp_eps;

    let mut hidden = Vec::with_capacity(blocks);
    let mut observed = Vec::with_capacity(blocks);
    let mut clamp_count = 0usize;
    let mut s = s0;
    // The state step reuses the noise that produced the previous observation.
    let mut omega_prev = omega.sample(rng);
    for _ in 0..blocks {
        let mut s_next = model.drift(s) + omega_prev * c * (1.0 - s * s);
        if s_next < lo {
            s_next = lo;
            clamp_count += 1;
        } else if s_next > hi {
            s_next = hi;
            clamp_count += 1;
        }
        s = s_next;
        let omega_k = omega.sample(rng);
        observed.push(model.obs_gain() * s + omega_k);
        hidden.push(s);
        omega_prev = omega_k;
    }
    let mut params = model.params();
    params.insert("s0".into(), s0);
    Trajectory::new(hidden, observed, seed, "qubit-block", params, clamp_count)
}

/// Runs the exact measurement chain: N probe measurements per block, hidden
/// state updated by the Born rule (the Mobius map on the Bloch coordinate,
/// which never leaves (-1, 1)), observation = count difference per block.
pub fn simulate_microstep_chain<R: Rng + ?Sized>(
    model: &QubitChainModel,
    blocks: usize,
    s0: f64,
    seed: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    if blocks == 0 {
        return Err(Error::InvalidState("trajectory length must be >= 1".into()));
    }
    if !(s0 > -1.0 && s0 < 1.0) {
        return Err(Error::InvalidState(format!("s0 must be in (-1, 1), got {s0}")));
    }
    let mut chain = model.microstep_chain(s0)?;
    let mut hidden = Vec::with_capacity(blocks);
    let mut observed = Vec::with_capacity(blocks);
    for _ in 0..blocks {
        let mut diff = 0i64;
        for _ in 0..model.block_size {
            let outcome = chain.step(rng)?;
            diff += outcome.label as i64;
        }
        observed.push(diff as f64);
        hidden.push(chain.hidden_coordinate());
    }
    let mut params = model.params();
    params.insert("s0".into(), s0);
    Trajectory::new(hidden, observed, seed, "qubit-micro", params, 0)
}

/// Invertible differentiable maps available to the multiplicative model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BFn {
    /// b(x) = x on x > 0.
    Identity,
    /// b(x) = e^x on the whole line.
    Exp,
}

impl BFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BFn::Identity => x,
            BFn::Exp => x.exp(),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            BFn::Identity => 1.0,
            BFn::Exp => x.exp(),
        }
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        match self {
            BFn::Identity => 0.0,
            BFn::Exp => x.exp(),
        }
    }

    pub fn inverse(&self, y: f64) -> f64 {
        match self {
            BFn::Identity => y,
            BFn::Exp => y.ln(),
        }
    }

    /// Points with b(x) > 0, where the observation density is supported.
    pub fn in_domain(&self, x: f64) -> bool {
        match self {
            BFn::Identity => x > 0.0,
            BFn::Exp => true,
        }
    }
}

/// Multiplicative observation model `b(x_k) = s_k eta_k` with chi-squared
/// noise `eta ~ chi2(t)`, `s > 0`. Its density factorizes over the
/// exponential family with `T(x) = b(x)/2` and `Q(s) = -1/s` (the sign of
/// the exponent lives in Q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredModel {
    /// Degrees of freedom t > 0.
    pub dof: f64,
    pub b_fn: BFn,
}

impl ChiSquaredModel {
    pub fn new(dof: f64, b_fn: BFn) -> Result<Self> {
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::InvalidState(format!(
                "degrees of freedom must be > 0, got {dof}"
            )));
        }
        Ok(ChiSquaredModel { dof, b_fn })
    }

    fn log_norm(&self) -> f64 {
        // ln(2^{t/2} Gamma(t/2)).
        0.5 * self.dof * 2f64.ln() + ln_gamma(0.5 * self.dof)
    }

    /// Change-of-variables density of x given s:
    /// `p_eta(b(x)/s) |b'(x)| / s`; zero outside the support of b.
    pub fn observation_density(&self, x: f64, s: f64) -> Result<f64> {
        if !x.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("observation density argument".into()));
        }
        if s <= 0.0 {
            return Err(Error::InvalidState(format!(
                "hidden state must be positive, got {s}"
            )));
        }
        if !self.b_fn.in_domain(x) {
            return Ok(0.0);
        }
        let y = self.b_fn.eval(x);
        let t = self.dof;
        let log_density = (0.5 * t - 1.0) * y.ln() - 0.5 * t * s.ln() - y / (2.0 * s)
            + self.b_fn.deriv(x).abs().ln()
            - self.log_norm();
        Ok(log_density.exp())
    }

    pub fn exp_family(&self) -> ExpFamilyDecomposition {
        let t = self.dof;
        let b_fn = self.b_fn;
        let log_norm = self.log_norm();
        ExpFamilyDecomposition {
            c_tilde: Arc::new(move |s| (-0.5 * t * s.ln() - log_norm).exp()),
            h: Arc::new(move |x| {
                if !b_fn.in_domain(x) {
                    return 0.0;
                }
                ((0.5 * t - 1.0) * b_fn.eval(x).ln()).exp() * b_fn.deriv(x).abs()
            }),
            t: Arc::new(move |x| 0.5 * b_fn.eval(x)),
            t_prime: Arc::new(move |x| 0.5 * b_fn.deriv(x)),
            q: Arc::new(|s| -1.0 / s),
            q_inverse: Arc::new(|v| -1.0 / v),
            log_h_prime: Arc::new(move |x| {
                let b = b_fn.eval(x);
                let bp = b_fn.deriv(x);
                (0.5 * t - 1.0) * bp / b + b_fn.deriv2(x) / bp
            }),
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([(
            "t".into(),
            self.dof,
        )])
    }
}

/// Paired hidden/observed sequences plus reproducibility metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub hidden: Vec<f64>,
    pub observed: Vec<f64>,
    pub seed: u64,
    pub model_id: String,
    pub params: BTreeMap<String, f64>,
    pub clamp_count: usize,
}

/// JSON sidecar written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub schema: u32,
    pub model_id: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub length: usize,
    pub clamp_count: usize,
}

impl Trajectory {
    pub fn new(
        hidden: Vec<f64>,
        observed: Vec<f64>,
        seed: u64,
        model_id: &str,
        params: BTreeMap<String, f64>,
        clamp_count: usize,
    ) -> Result<Self> {
        if hidden.len() != observed.len() {
            return Err(Error::LengthMismatch(format!(
                "hidden has {} entries, observed has {}",
                hidden.len(),
                observed.len()
            )));
        }
        if hidden.iter().chain(&observed).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory entry".into()));
        }
        Ok(Trajectory {
            hidden,
            observed,
            seed,
            model_id: model_id.to_string(),
            params,
            clamp_count,
        })
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    pub fn meta(&self) -> TrajectoryMeta {
        TrajectoryMeta {
            schema: 1,
            model_id: self.model_id.clone(),
            params: self.params.clone(),
            seed: self.seed,
            length: self.len(),
            clamp_count: self.clamp_count,
        }
    }

    /// CSV body with header `step,hidden,observed`; floats carry 17
    /// significant digits so parsing back is exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,hidden,observed\n");
        for (i, (s, x)) in self.hidden.iter().zip(&self.observed).enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                i + 1,
                crate::bench::fmt_f64(*s),
                crate::bench::fmt_f64(*x)
            ));
        }
        out
    }
}
