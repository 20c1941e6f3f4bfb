//! Data-generating processes: AR(1) covariates, the general TVTP recursion,
//! and the structural latent-factor construction.
//!
//! All generators are deterministic functions of (seed, inputs). The TVTP and
//! latent-factor generators discard a 500 + p period warmup so that the
//! retained sample approximates the stationary law, which has no closed form
//! here.

use crate::model::{conditional_mean, Dataset, KernelParams, ModelSpec, ParamVector};
use crate::transition::base_transition;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Warmup periods discarded before the retained sample (plus p).
pub const WARMUP: usize = 500;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Stationary AR(1) covariate path x_t = a x_{t-1} + xi_t with standard
/// normal innovations, initialized from the stationary draw and burned in.
pub fn simulate_covariates(a: f64, n: usize, burnin: usize, seed: u64) -> Result<Vec<f64>> {
    if !(a.abs() < 1.0) {
        return Err(Error::InvalidParam(format!(
            "covariate AR coefficient must satisfy |a| < 1, got {a}"
        )));
    }
    let mut rng = rng_for(seed);
    let mut x = draw_normal(&mut rng) / (1.0 - a * a).sqrt();
    for _ in 0..burnin {
        x = a * x + draw_normal(&mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        x = a * x + draw_normal(&mut rng);
        out.push(x);
    }
    Ok(out)
}

/// Initial-regime policy for the warmup of the TVTP generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeInit {
    /// Start the warmup with all regime components equal to the given regime.
    Fixed(usize),
    /// Draw the starting regime uniformly.
    Uniform,
}

impl Default for RegimeInit {
    fn default() -> Self {
        RegimeInit::Fixed(0)
    }
}

/// Output of the TVTP and latent-factor generators.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    /// y_{-p+1}, ..., y_n (length n + p; the first p are conditioning values).
    pub y: Vec<f64>,
    /// True base regimes s̃_1, ..., s̃_n.
    pub regimes: Vec<u8>,
    /// Latent factor path W_1, ..., W_n (latent-factor generator only).
    pub w: Option<Vec<f64>>,
}

impl SimulatedPath {
    /// Packages the path and its covariates as a dataset.
    pub fn into_dataset(self, x: Vec<Vec<f64>>, spec: &ModelSpec) -> Result<Dataset> {
        Dataset::new(self.y, x, spec)
    }
}

/// Simulates n periods from the model: regimes from the transition kernel
/// given the realized lags, observations from the Gaussian equation.
///
/// `x` must hold at least n covariate rows; the sample uses the last n rows,
/// and any earlier rows feed the warmup (warmup steps beyond the supplied
/// history use zero covariates).
pub fn simulate_tvtp(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &[Vec<f64>],
    n: usize,
    seed: u64,
    init: RegimeInit,
) -> Result<SimulatedPath> {
    spec.validate()?;
    theta.validate(spec)?;
    if spec.covariate_dim > 0 {
        if x.len() < n {
            return Err(Error::InvalidData(format!(
                "need at least n = {n} covariate rows, got {}",
                x.len()
            )));
        }
        if let Some(row) = x.iter().find(|r| r.len() != spec.covariate_dim) {
            return Err(Error::InvalidData(format!(
                "covariate row has {} entries, expected {}",
                row.len(),
                spec.covariate_dim
            )));
        }
    }
    let mut rng = rng_for(seed);
    let start = match init {
        RegimeInit::Fixed(r) => {
            if r >= spec.j {
                return Err(Error::InvalidParam(format!(
                    "initial regime {r} out of range for J = {}",
                    spec.j
                )));
            }
            r as u8
        }
        RegimeInit::Uniform => rng.gen_range(0..spec.j) as u8,
    };
    // Regime components newest first, observation lags newest first.
    let mut comps = vec![start; spec.d.max(spec.k + 1)];
    let mut y_lags = vec![theta.mu_of(start as usize); spec.p.max(1)];
    let zeros = vec![0.0; spec.covariate_dim];
    let total = WARMUP + spec.p + n;
    let mut y_out: Vec<f64> = Vec::with_capacity(n + spec.p);
    let mut regimes: Vec<u8> = Vec::with_capacity(n);
    for step in 0..total {
        // Align the last n steps with the last n covariate rows.
        let xi = x.len() as i64 - total as i64 + step as i64;
        let x_t: &[f64] = if xi >= 0 { &x[xi as usize] } else { &zeros };
        let row = base_transition(spec, theta, &comps[..spec.d], &y_lags, x_t)?;
        let s_new = draw_categorical(&mut rng, &row);
        comps.rotate_right(1);
        comps[0] = s_new;
        let mean = conditional_mean(spec, theta, &comps, &y_lags);
        let y_t = mean + theta.sigma_of(s_new as usize) * draw_normal(&mut rng);
        if !y_t.is_finite() {
            return Err(Error::NonFinite("simulated observation".into()));
        }
        y_lags.rotate_right(1);
        y_lags[0] = y_t;
        if step >= WARMUP {
            y_out.push(y_t);
        }
        if step >= WARMUP + spec.p {
            regimes.push(s_new);
        }
    }
    Ok(SimulatedPath {
        y: y_out,
        regimes,
        w: None,
    })
}

fn draw_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u8;
        }
    }
    (probs.len() - 1) as u8
}

/// Simulates the structural latent-factor model: W_t = alpha W_{t-1} + V_t
/// with corr(U_t, V_{t+1}) = rho, regime 1 (index 0) when W_t < tau, and the
/// usual Gaussian observation equation driven by U_t.
///
/// This is the distributional oracle for the latent-factor transition
/// probability: empirical transition frequencies from this path must match it.
pub fn simulate_latent_factor(
    spec: &ModelSpec,
    theta: &ParamVector,
    n: usize,
    seed: u64,
) -> Result<SimulatedPath> {
    spec.validate()?;
    theta.validate(spec)?;
    let (alpha, tau, rho) = match &theta.kernel {
        KernelParams::LatentFactor { alpha, tau, rho } => (*alpha, *tau, *rho),
        _ => {
            return Err(Error::Unsupported(
                "latent-factor generator requires a latent-factor kernel".into(),
            ))
        }
    };
    let mut rng = rng_for(seed);
    let mut w = draw_normal(&mut rng) / (1.0 - alpha * alpha).sqrt();
    // V_1 is correlated with the pre-sample U_0; start it independent.
    let mut pending_v = draw_normal(&mut rng);
    let mut comps = vec![0u8; spec.d];
    let mut y_lags = vec![theta.mu_of(0); spec.p.max(1)];
    let total = WARMUP + spec.p + n;
    let mut y_out = Vec::with_capacity(n + spec.p);
    let mut regimes = Vec::with_capacity(n);
    let mut w_out = Vec::with_capacity(n);
    let rho_c = (1.0 - rho * rho).sqrt();
    for step in 0..total {
        w = alpha * w + pending_v;
        let s_new: u8 = if w >= tau { 1 } else { 0 };
        comps.rotate_right(1);
        comps[0] = s_new;
        let u_t = draw_normal(&mut rng);
        pending_v = rho * u_t + rho_c * draw_normal(&mut rng);
        let mean = conditional_mean(spec, theta, &comps, &y_lags);
        let y_t = mean + theta.sigma_of(s_new as usize) * u_t;
        y_lags.rotate_right(1);
        y_lags[0] = y_t;
        if step >= WARMUP {
            y_out.push(y_t);
        }
        if step >= WARMUP + spec.p {
            regimes.push(s_new);
            w_out.push(w);
        }
    }
    Ok(SimulatedPath {
        y: y_out,
        regimes,
        w: Some(w_out),
    })
}
