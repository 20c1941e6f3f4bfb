//! Conditional likelihood by a scaled forward recursion, a path-enumeration
//! oracle for small instances, and the backward smoother.

use crate::model::{conditional_mean, expand_states, Dataset, ExpandedStates, ModelSpec, ParamVector};
use crate::numeric::log_sum_exp;
use crate::transition::base_rows;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Conditioning policy for the initial expanded state S_0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S0Policy {
    /// Condition on S_0 = the given expanded state index.
    Fixed(usize),
    /// Mass 1/J^d on every expanded state.
    Uniform,
}

impl Default for S0Policy {
    /// The expanded state whose components are all regime 1.
    fn default() -> Self {
        S0Policy::Fixed(0)
    }
}

/// Output of the forward filter.
#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Total conditional log-likelihood.
    pub loglik: f64,
    /// Per-period log predictive densities, t = 1..n.
    pub period_logdens: Vec<f64>,
    /// Predicted expanded-state probabilities before the observation
    /// update, t = 1..n.
    pub predicted: Vec<Vec<f64>>,
    /// Filtered expanded-state probabilities after the update, t = 1..n.
    pub filtered: Vec<Vec<f64>>,
    pub s0: S0Policy,
}

#[inline]
fn gauss_density(y: f64, mean: f64, sigma: f64) -> f64 {
    let z = (y - mean) / sigma;
    crate::numeric::norm_pdf(z) / sigma
}

fn initial_distribution(es: &ExpandedStates, policy: S0Policy) -> Result<Vec<f64>> {
    let n = es.len();
    match policy {
        S0Policy::Fixed(e) => {
            if e >= n {
                return Err(Error::InvalidParam(format!(
                    "s0 index {e} out of range (J^d = {n})"
                )));
            }
            let mut v = vec![0.0; n];
            v[e] = 1.0;
            Ok(v)
        }
        S0Policy::Uniform => Ok(vec![1.0 / n as f64; n]),
    }
}

/// Scaled forward recursion: prediction step through the time-varying
/// expanded transition matrix, Gaussian observation update, per-period
/// normalization accumulated into the log-likelihood.
pub fn forward_filter(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    s0: S0Policy,
) -> Result<FilterResult> {
    theta.validate(spec)?;
    data.validate(spec)?;
    let n = data.n(spec);
    let es = expand_states(spec);
    let ns = es.len();
    let mut cur = initial_distribution(&es, s0)?;
    let mut result = FilterResult {
        loglik: 0.0,
        period_logdens: Vec::with_capacity(n),
        predicted: Vec::with_capacity(n),
        filtered: Vec::with_capacity(n),
        s0,
    };
    for t in 1..=n {
        let y_lags = data.y_lags(spec, t);
        let x_t = data.x_at(spec, t);
        let rows = base_rows(spec, theta, &es, &y_lags, x_t)?;
        let mut predicted = vec![0.0; ns];
        for from in 0..ns {
            let pf = cur[from];
            if pf == 0.0 {
                continue;
            }
            for (new, &q) in rows[from].iter().enumerate() {
                predicted[es.successor(from, new)] += pf * q;
            }
        }
        let y_t = data.y_at(spec, t as i64);
        let mut weighted = vec![0.0; ns];
        let mut norm = 0.0;
        for s in 0..ns {
            if predicted[s] == 0.0 {
                continue;
            }
            let mean = conditional_mean(spec, theta, &es.states[s], &y_lags);
            let g = gauss_density(y_t, mean, theta.sigma_of(es.base_regime(s)));
            weighted[s] = predicted[s] * g;
            norm += weighted[s];
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroLikelihood { t });
        }
        for w in weighted.iter_mut() {
            *w /= norm;
        }
        result.loglik += norm.ln();
        result.period_logdens.push(norm.ln());
        result.predicted.push(predicted);
        cur = weighted.clone();
        result.filtered.push(weighted);
    }
    Ok(result)
}

/// Log-likelihood by exhaustive enumeration of expanded-state paths,
/// combined in log space. Only feasible for small instances.
pub fn loglik_oracle(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    s0: usize,
) -> Result<f64> {
    theta.validate(spec)?;
    data.validate(spec)?;
    let n = data.n(spec);
    let ns = spec.n_states();
    if (ns as f64).powi(n as i32 + 1) > 1e7 {
        return Err(Error::TooLarge(format!("J^(d(n+1)) with J^d = {ns}, n = {n}")));
    }
    let es = expand_states(spec);
    if s0 >= ns {
        return Err(Error::InvalidParam(format!("s0 index {s0} out of range")));
    }
    // cache per-period transition rows and densities
    let mut rows_t = Vec::with_capacity(n);
    let mut logg_t = Vec::with_capacity(n);
    for t in 1..=n {
        let y_lags = data.y_lags(spec, t);
        let x_t = data.x_at(spec, t);
        rows_t.push(base_rows(spec, theta, &es, &y_lags, x_t)?);
        let y_t = data.y_at(spec, t as i64);
        let lg: Vec<f64> = (0..ns)
            .map(|s| {
                let mean = conditional_mean(spec, theta, &es.states[s], &y_lags);
                gauss_density(y_t, mean, theta.sigma_of(es.base_regime(s))).ln()
            })
            .collect();
        logg_t.push(lg);
    }
    let mut path_logs = Vec::new();
    let mut stack: Vec<(usize, usize, f64)> = vec![(0, s0, 0.0)]; // (t, state, log weight)
    while let Some((t, state, lw)) = stack.pop() {
        if t == n {
            path_logs.push(lw);
            continue;
        }
        for new in 0..spec.j {
            let q = rows_t[t][state][new];
            if q == 0.0 {
                continue;
            }
            let next = es.successor(state, new);
            stack.push((t + 1, next, lw + q.ln() + logg_t[t][next]));
        }
    }
    if path_logs.is_empty() {
        // n = 0: empty product
        return Ok(0.0);
    }
    Ok(log_sum_exp(&path_logs))
}

/// Output of the backward smoother.
#[derive(Debug, Clone)]
pub struct SmootherResult {
    /// P(S_t = s | Y_1..n, X_1..n, s_0), t = 1..n.
    pub smoothed: Vec<Vec<f64>>,
    /// Base-regime marginals: sum over expanded states sharing s̃_t.
    pub base_marginals: Vec<Vec<f64>>,
}

/// Backward recursion over the time-varying expanded transition matrices.
/// Periods where a predicted probability is zero contribute nothing (the
/// matching filtered mass is also zero).
pub fn kim_smoother(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    fr: &FilterResult,
) -> Result<SmootherResult> {
    let n = data.n(spec);
    if fr.filtered.len() != n {
        return Err(Error::InvalidData("filter result length mismatch".into()));
    }
    let es = expand_states(spec);
    let ns = es.len();
    let mut smoothed = vec![vec![0.0; ns]; n];
    if n > 0 {
        smoothed[n - 1] = fr.filtered[n - 1].clone();
        for t in (0..n - 1).rev() {
            // transition matrix of period t+2 (1-based), linking S_{t+1} to S_{t+2}
            let period = t + 2;
            let y_lags = data.y_lags(spec, period);
            let x_t = data.x_at(spec, period);
            let rows = base_rows(spec, theta, &es, &y_lags, x_t)?;
            let pred_next = &fr.predicted[t + 1];
            let sm_next = smoothed[t + 1].clone();
            for i in 0..ns {
                let f = fr.filtered[t][i];
                if f == 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for (new, &q) in rows[i].iter().enumerate() {
                    let j = es.successor(i, new);
                    if pred_next[j] > 0.0 {
                        acc += q * sm_next[j] / pred_next[j];
                    }
                }
                smoothed[t][i] = f * acc;
            }
        }
    }
    let base_marginals = smoothed
        .iter()
        .map(|row| {
            let mut m = vec![0.0; spec.j];
            for (s, &p) in row.iter().enumerate() {
                m[es.base_regime(s)] += p;
            }
            m
        })
        .collect();
    Ok(SmootherResult {
        smoothed,
        base_marginals,
    })
}
