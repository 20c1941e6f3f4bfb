//! Maximum likelihood via BFGS with backtracking line search, multi-start,
//! and a data-driven initializer. Optimization runs on the unconstrained
//! scale; results are relabeled and reported on the economic scale.

use crate::filter::{forward_filter, S0Policy};
use crate::inference::{
    confidence_intervals, covariance_bundle, gradient_unconstrained, hessian, score,
    CovarianceBundle, IntervalSet,
};
use crate::model::{pack, relabel_regimes, to_econ, unpack, Dataset, ModelSpec, ParamVector};
use crate::model::{KernelFamily, KernelParams};
use crate::numeric::{logit, norm_quantile};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How the optimizer chooses its central starting point.
#[derive(Debug, Clone)]
pub enum InitPolicy {
    /// Data-driven initializer (see [`heuristic_init`]).
    Heuristic,
    /// User-supplied starting parameters.
    User(ParamVector),
}

/// Optimizer configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Number of multi-start points (the first is the unperturbed start).
    pub starts: usize,
    pub max_iters: usize,
    /// Convergence tolerance on the sup-norm of the unconstrained gradient,
    /// relative to max(1, |loglik|).
    pub grad_tol: f64,
    pub seed: u64,
    pub s0: S0Policy,
    pub init: InitPolicy,
    /// Confidence level for the reported intervals.
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 5,
            max_iters: 500,
            grad_tol: 1e-6,
            seed: 0,
            s0: S0Policy::default(),
            init: InitPolicy::Heuristic,
            level: 0.95,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.starts < 1 {
            return Err(Error::InvalidParam("starts must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidParam("grad_tol must be > 0".into()));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::InvalidParam("level must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Per-start outcome, kept for diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartReport {
    pub start: usize,
    pub converged: bool,
    pub loglik: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub message: Option<String>,
}

/// A fitted model: relabeled estimate, likelihood, and the variance bundle.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ParamVector,
    pub theta_econ: Vec<f64>,
    pub loglik: f64,
    pub covariance: CovarianceBundle,
    pub intervals: IntervalSet,
    pub starts: Vec<StartReport>,
    /// Index of the winning start.
    pub best_start: usize,
    /// Sup-norm of the unconstrained gradient at the optimum.
    pub grad_norm: f64,
}

struct BfgsOutcome {
    v: Vec<f64>,
    loglik: f64,
    converged: bool,
    iterations: usize,
    grad_norm: f64,
}

const OBJ_REL_TOL: f64 = 1e-10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Minimizes -loglik(v) from `v0`. Non-finite objectives are treated as +inf
/// by the line search.
fn bfgs(
    spec: &ModelSpec,
    data: &Dataset,
    s0: S0Policy,
    v0: &[f64],
    max_iters: usize,
    grad_tol: f64,
) -> Result<BfgsOutcome> {
    let dim = v0.len();
    let f = |v: &[f64]| -> f64 {
        match unpack(v, spec).and_then(|th| forward_filter(spec, &th, data, s0)) {
            Ok(r) if r.loglik.is_finite() => -r.loglik,
            _ => f64::INFINITY,
        }
    };
    let grad = |v: &[f64]| -> Result<DVector<f64>> {
        let g = gradient_unconstrained(spec, v, data, s0)?;
        Ok(-DVector::from_vec(g))
    };
    let mut x = DVector::from_column_slice(v0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::OptimFailed("objective non-finite at start".into()));
    }
    let mut g = grad(x.as_slice())?;
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            // Curvature information went bad; restart from steepest descent.
            h_inv = DMatrix::identity(dim, dim);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        // Backtracking Armijo line search.
        let mut step = 1.0;
        let mut fx_new = f64::INFINITY;
        let mut x_new = x.clone();
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            x_new = &x + step * &dir;
            fx_new = f(x_new.as_slice());
            if fx_new <= fx + ARMIJO_C1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        // The finite-difference gradient carries noise proportional to the
        // objective magnitude, so the tolerance is scaled by it.
        let gtol = grad_tol * fx.abs().max(1.0);
        if !accepted {
            converged = g.amax() <= gtol;
            break;
        }
        let g_new = grad(x_new.as_slice())?;
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            // Sherman-Morrison form of the inverse BFGS update.
            h_inv += (rho * rho * yhy + rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let obj_change = (fx - fx_new).abs();
        x = x_new;
        g = g_new;
        let rel_ok = obj_change <= OBJ_REL_TOL * fx.abs().max(1.0);
        fx = fx_new;
        if g.amax() <= gtol && rel_ok {
            converged = true;
            break;
        }
    }
    Ok(BfgsOutcome {
        v: x.as_slice().to_vec(),
        loglik: -fx,
        converged,
        iterations,
        grad_norm: g.amax(),
    })
}

/// Maximizes the conditional log-likelihood with multi-start BFGS, relabels
/// the winner, and attaches the covariance bundle and intervals.
pub fn fit(spec: &ModelSpec, data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    spec.validate()?;
    data.validate(spec)?;
    config.validate()?;
    let theta0 = match &config.init {
        InitPolicy::Heuristic => heuristic_init(spec, data)?,
        InitPolicy::User(th) => {
            th.validate(spec)?;
            th.clone()
        }
    };
    let v0 = pack(&theta0, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut reports = Vec::with_capacity(config.starts);
    let mut best: Option<(usize, BfgsOutcome)> = None;
    for start in 0..config.starts {
        let v_start: Vec<f64> = if start == 0 {
            v0.clone()
        } else {
            v0.iter()
                .map(|&v| {
                    let z: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                    v + 0.3 * z * v.abs().max(1.0)
                })
                .collect()
        };
        match bfgs(spec, data, config.s0, &v_start, config.max_iters, config.grad_tol) {
            Ok(out) => {
                reports.push(StartReport {
                    start,
                    converged: out.converged,
                    loglik: out.loglik,
                    iterations: out.iterations,
                    grad_norm: out.grad_norm,
                    message: None,
                });
                let better = match &best {
                    None => out.converged,
                    Some((_, b)) => out.converged && out.loglik > b.loglik,
                };
                if better {
                    best = Some((start, out));
                }
            }
            Err(e) => reports.push(StartReport {
                start,
                converged: false,
                loglik: f64::NEG_INFINITY,
                iterations: 0,
                grad_norm: f64::NAN,
                message: Some(e.to_string()),
            }),
        }
    }
    let (best_start, out) = best.ok_or_else(|| {
        let detail: Vec<String> = reports
            .iter()
            .map(|r| {
                format!(
                    "start {}: converged={}, loglik={:.6}, iters={}{}",
                    r.start,
                    r.converged,
                    r.loglik,
                    r.iterations,
                    r.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
                )
            })
            .collect();
        Error::OptimFailed(format!("no start converged: {}", detail.join("; ")))
    })?;
    let theta_hat = unpack(&out.v, spec)?;
    let (theta_hat, _) = relabel_regimes(&theta_hat, spec)?;
    let theta_econ = to_econ(&theta_hat, spec);
    let sc = score(spec, &theta_hat, data, config.s0)?;
    let h = hessian(spec, &theta_hat, data, config.s0)?;
    let bundle = covariance_bundle(&sc.period_econ, &h, data.n(spec))?;
    let intervals = confidence_intervals(&theta_econ, &bundle, config.level)?;
    Ok(FitResult {
        theta: theta_hat,
        theta_econ,
        loglik: out.loglik,
        covariance: bundle,
        intervals,
        starts: reports,
        best_start,
        grad_norm: out.grad_norm,
    })
}

/// Data-driven starting point: mean split for mu, least squares for the AR
/// coefficients, residual standard deviation for sigma, and a 0.9 persistence
/// prior for the kernel.
pub fn heuristic_init(spec: &ModelSpec, data: &Dataset) -> Result<ParamVector> {
    let n = data.n(spec);
    let ys: Vec<f64> = (1..=n as i64).map(|t| data.y_at(spec, t)).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 1e-12 {
        return Err(Error::InvalidData(
            "degenerate series: zero variance".into(),
        ));
    }
    let sd = var.sqrt();
    let mu: Vec<f64> = if spec.switch_mean && spec.j > 1 {
        (0..spec.j)
            .map(|jr| mean - sd + 2.0 * sd * jr as f64 / (spec.j - 1) as f64)
            .collect()
    } else {
        vec![mean]
    };
    // Least squares of (y_t - mean) on its own k demeaned lags.
    let (gamma_row, resid_sd) = if spec.k == 0 {
        (Vec::new(), sd)
    } else {
        let k = spec.k;
        let mut xtx = DMatrix::<f64>::zeros(k, k);
        let mut xty = DVector::<f64>::zeros(k);
        for t in 1..=n as i64 {
            let yt = data.y_at(spec, t) - mean;
            let lags: Vec<f64> = (1..=k as i64)
                .map(|l| data.y_at(spec, t - l) - mean)
                .collect();
            for i in 0..k {
                xty[i] += lags[i] * yt;
                for j in 0..k {
                    xtx[(i, j)] += lags[i] * lags[j];
                }
            }
        }
        let coef = xtx
            .lu()
            .solve(&xty)
            .unwrap_or_else(|| DVector::zeros(k));
        let mut rss = 0.0;
        for t in 1..=n as i64 {
            let yt = data.y_at(spec, t) - mean;
            let pred: f64 = (1..=k as i64)
                .map(|l| coef[(l - 1) as usize] * (data.y_at(spec, t - l) - mean))
                .sum();
            rss += (yt - pred).powi(2);
        }
        let rsd = (rss / n as f64).sqrt().max(1e-4 * sd);
        (coef.iter().cloned().collect(), rsd)
    };
    let gamma: Vec<Vec<f64>> = if spec.switch_ar {
        vec![gamma_row.clone(); spec.j]
    } else {
        vec![gamma_row]
    };
    let sigma = if spec.switch_var {
        vec![resid_sd; spec.j]
    } else {
        vec![resid_sd]
    };
    let kernel = match spec.kernel.family {
        KernelFamily::Constant => {
            let rows = if spec.j == 1 {
                vec![vec![1.0]]
            } else {
                let off = 0.1 / (spec.j - 1) as f64;
                (0..spec.j)
                    .map(|i| {
                        (0..spec.j)
                            .map(|j| if i == j { 0.9 } else { off })
                            .collect()
                    })
                    .collect()
            };
            KernelParams::Constant { rows }
        }
        KernelFamily::Logistic | KernelFamily::Probit => {
            // Stick-breaking slots: choose intercepts so that each origin's
            // implied row is 0.9 on the diagonal and uniform off it.
            let off = 0.1 / (spec.j - 1).max(1) as f64;
            let logistic_link = spec.kernel.family == KernelFamily::Logistic;
            let coef = (0..spec.j)
                .map(|i| {
                    let mut remaining = 1.0;
                    (0..spec.j - 1)
                        .map(|slot| {
                            let target = if i == slot { 0.9 } else { off };
                            let p = (target / remaining).clamp(1e-6, 1.0 - 1e-6);
                            remaining -= target;
                            let intercept = if logistic_link {
                                logit(p)
                            } else {
                                norm_quantile(p)
                            };
                            let mut c = vec![0.0; 1 + spec.covariate_dim];
                            c[0] = intercept;
                            c
                        })
                        .collect()
                })
                .collect();
            KernelParams::Link { coef }
        }
        KernelFamily::LatentFactor => KernelParams::LatentFactor {
            alpha: 0.5,
            tau: 0.0,
            rho: 0.0,
        },
    };
    let theta = ParamVector {
        mu,
        gamma,
        sigma,
        kernel,
    };
    theta.validate(spec)?;
    Ok(theta)
}
