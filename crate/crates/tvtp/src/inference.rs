//! Score, observed Hessian, and the three asymptotic-covariance estimators.
//!
//! Derivatives use central finite differences with steps taken on the
//! unconstrained scale, mapped to the economic scale through the
//! parameterization Jacobian. Reported variances and intervals are on the
//! economic scale.

use crate::filter::{forward_filter, S0Policy};
use crate::model::{from_econ, pack, pack_jacobian, to_econ, unpack, Dataset, ModelSpec, ParamVector};
use crate::numeric::norm_quantile;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Inner finite-difference step factor: eps^(1/3).
const FD_STEP: f64 = 6.055_454_452_393_343e-6;
/// Outer step factor for differentiating the score: eps^(1/4).
const FD_OUTER_STEP: f64 = 1.220_703_125e-4;

/// Total conditional log-likelihood at `theta`.
pub fn loglik(spec: &ModelSpec, theta: &ParamVector, data: &Dataset, s0: S0Policy) -> Result<f64> {
    Ok(forward_filter(spec, theta, data, s0)?.loglik)
}

/// Period scores and their sums on both scales.
#[derive(Debug, Clone)]
pub struct ScoreResult {
    /// n x dim period scores on the unconstrained scale.
    pub period_unconstrained: Vec<Vec<f64>>,
    /// n x dim period scores on the economic scale.
    pub period_econ: Vec<Vec<f64>>,
    /// Gradient of the log-likelihood on the unconstrained scale.
    pub gradient_unconstrained: Vec<f64>,
    /// Gradient on the economic scale.
    pub gradient_econ: Vec<f64>,
}

fn period_logdens_at(
    spec: &ModelSpec,
    v: &[f64],
    data: &Dataset,
    s0: S0Policy,
) -> Result<Vec<f64>> {
    let theta = unpack(v, spec)?;
    Ok(forward_filter(spec, &theta, data, s0)?.period_logdens)
}

/// Central finite differences of the period log predictive densities on the
/// unconstrained scale; the per-period rows sum to the gradient.
pub fn score(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    s0: S0Policy,
) -> Result<ScoreResult> {
    let v0 = pack(theta, spec)?;
    let dim = v0.len();
    let n = data.n(spec);
    let mut period_v = vec![vec![0.0; dim]; n];
    for i in 0..dim {
        let h = FD_STEP * v0[i].abs().max(1.0);
        let mut vp = v0.clone();
        vp[i] += h;
        let mut vm = v0.clone();
        vm[i] -= h;
        let ldp = period_logdens_at(spec, &vp, data, s0)?;
        let ldm = period_logdens_at(spec, &vm, data, s0)?;
        for t in 0..n {
            let d = (ldp[t] - ldm[t]) / (2.0 * h);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("period score at t={}, coord {i}", t + 1)));
            }
            period_v[t][i] = d;
        }
    }
    // econ score = J^T v-score with J = d(unconstrained)/d(economic)
    let jac = pack_jacobian(theta, spec);
    let period_econ: Vec<Vec<f64>> = period_v
        .iter()
        .map(|row| {
            let r = jac.transpose() * DVector::from_column_slice(row);
            r.iter().cloned().collect()
        })
        .collect();
    let sum = |rows: &[Vec<f64>]| {
        let mut g = vec![0.0; dim];
        for row in rows {
            for (gi, ri) in g.iter_mut().zip(row) {
                *gi += ri;
            }
        }
        g
    };
    Ok(ScoreResult {
        gradient_unconstrained: sum(&period_v),
        gradient_econ: sum(&period_econ),
        period_unconstrained: period_v,
        period_econ,
    })
}

/// Gradient of the log-likelihood on the unconstrained scale only (used by
/// the optimizer; avoids the per-period bookkeeping).
pub fn gradient_unconstrained(
    spec: &ModelSpec,
    v0: &[f64],
    data: &Dataset,
    s0: S0Policy,
) -> Result<Vec<f64>> {
    let dim = v0.len();
    let mut g = vec![0.0; dim];
    for i in 0..dim {
        let h = FD_STEP * v0[i].abs().max(1.0);
        let mut vp = v0.to_vec();
        vp[i] += h;
        let mut vm = v0.to_vec();
        vm[i] -= h;
        let theta_p = unpack(&vp, spec)?;
        let theta_m = unpack(&vm, spec)?;
        let lp = forward_filter(spec, &theta_p, data, s0)?.loglik;
        let lm = forward_filter(spec, &theta_m, data, s0)?.loglik;
        g[i] = (lp - lm) / (2.0 * h);
        if !g[i].is_finite() {
            return Err(Error::NonFinite(format!("gradient coordinate {i}")));
        }
    }
    Ok(g)
}

/// Observed Hessian of the log-likelihood on the economic scale:
/// symmetrized central differences of the economic-scale score.
pub fn hessian(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    s0: S0Policy,
) -> Result<DMatrix<f64>> {
    let econ0 = to_econ(theta, spec);
    let dim = econ0.len();
    let grad_at = |econ: &[f64]| -> Result<Vec<f64>> {
        let th = from_econ(econ, spec)?;
        Ok(score(spec, &th, data, s0)?.gradient_econ)
    };
    let mut h_mat = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let h = FD_OUTER_STEP * econ0[i].abs().max(1.0);
        let mut ep = econ0.clone();
        ep[i] += h;
        let mut em = econ0.clone();
        em[i] -= h;
        let gp = grad_at(&ep)?;
        let gm = grad_at(&em)?;
        for jcol in 0..dim {
            h_mat[(i, jcol)] = (gp[jcol] - gm[jcol]) / (2.0 * h);
        }
    }
    Ok(0.5 * (&h_mat + h_mat.transpose()))
}

/// Which variance estimator a value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    HessianBased,
    Ops,
    DemeanedOps,
}

/// The three plug-in estimates of Var(θ̂) on the economic scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceBundle {
    /// (-H)^{-1}; absent when the Hessian is numerically singular.
    pub hessian_based: Option<Vec<Vec<f64>>>,
    /// False when the inverse does not exist or has a non-positive diagonal.
    pub hessian_valid: bool,
    /// (sum_t s_t s_t')^{-1} from the period scores.
    pub ops: Vec<Vec<f64>>,
    /// Same with demeaned period scores.
    pub demeaned_ops: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Builds the covariance bundle from the economic-scale period scores and
/// Hessian.
pub fn covariance_bundle(
    period_scores: &[Vec<f64>],
    hessian: &DMatrix<f64>,
    n: usize,
) -> Result<CovarianceBundle> {
    let dim = hessian.nrows();
    if n <= dim {
        return Err(Error::InvalidData(format!(
            "need n > dim(theta) for covariance estimation (n = {n}, dim = {dim})"
        )));
    }
    let mut outer = DMatrix::zeros(dim, dim);
    let mut mean = vec![0.0; dim];
    for row in period_scores {
        for (mi, ri) in mean.iter_mut().zip(row) {
            *mi += ri;
        }
    }
    for m in mean.iter_mut() {
        *m /= period_scores.len() as f64;
    }
    let mut outer_dm = DMatrix::zeros(dim, dim);
    for row in period_scores {
        for i in 0..dim {
            for j in 0..dim {
                outer[(i, j)] += row[i] * row[j];
                outer_dm[(i, j)] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    let ops = outer
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("outer product of period scores".into()))?;
    let demeaned = outer_dm
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("outer product of demeaned period scores".into()))?;
    let neg_h = -hessian;
    let hess_inv = neg_h.try_inverse();
    let hessian_valid = hess_inv
        .as_ref()
        .map(|m| (0..dim).all(|i| m[(i, i)] > 0.0))
        .unwrap_or(false);
    Ok(CovarianceBundle {
        hessian_based: hess_inv.as_ref().map(to_rows),
        hessian_valid,
        ops: to_rows(&ops),
        demeaned_ops: to_rows(&demeaned),
    })
}

impl CovarianceBundle {
    /// Standard errors per parameter; None when the estimator is invalid.
    pub fn standard_errors(&self, which: Estimator) -> Option<Vec<f64>> {
        let m = match which {
            Estimator::HessianBased => {
                if !self.hessian_valid {
                    return None;
                }
                self.hessian_based.as_ref()?
            }
            Estimator::Ops => &self.ops,
            Estimator::DemeanedOps => &self.demeaned_ops,
        };
        Some((0..m.len()).map(|i| m[i][i].max(0.0).sqrt()).collect())
    }
}

/// Per-parameter confidence intervals for each estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalSet {
    pub level: f64,
    pub hessian_based: Option<Vec<(f64, f64)>>,
    pub ops: Vec<(f64, f64)>,
    pub demeaned_ops: Vec<(f64, f64)>,
}

/// θ̂_i ± z_{(1+level)/2} se_i on the economic scale; the Hessian family is
/// undefined when its validity flag is false.
pub fn confidence_intervals(
    theta_econ: &[f64],
    bundle: &CovarianceBundle,
    level: f64,
) -> Result<IntervalSet> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidParam(format!("level must be in (0,1), got {level}")));
    }
    let z = norm_quantile(0.5 * (1.0 + level));
    let build = |se: &[f64]| -> Vec<(f64, f64)> {
        theta_econ
            .iter()
            .zip(se)
            .map(|(&th, &s)| (th - z * s, th + z * s))
            .collect()
    };
    Ok(IntervalSet {
        level,
        hessian_based: bundle
            .standard_errors(Estimator::HessianBased)
            .map(|se| build(&se)),
        ops: build(&bundle.standard_errors(Estimator::Ops).unwrap()),
        demeaned_ops: build(&bundle.standard_errors(Estimator::DemeanedOps).unwrap()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelFamily, KernelParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn j1_gaussian(mu: f64, sigma: f64) -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::new(0, 1, 1, false, false, false, KernelFamily::Constant, 0).unwrap();
        let theta = ParamVector {
            mu: vec![mu],
            gamma: vec![vec![]],
            sigma: vec![sigma],
            kernel: KernelParams::Constant {
                rows: vec![vec![1.0]],
            },
        };
        (spec, theta)
    }

    #[test]
    fn j1_gaussian_period_scores_match_closed_form() {
        let (spec, theta) = j1_gaussian(0.3, 0.9);
        let ys = vec![0.5, -1.1, 2.0, 0.0];
        let data = Dataset::new(ys.clone(), vec![], &spec).unwrap();
        let sc = score(&spec, &theta, &data, S0Policy::Fixed(0)).unwrap();
        for (t, &y) in ys.iter().enumerate() {
            let dmu = (y - 0.3) / (0.9f64 * 0.9);
            let dsigma = (y - 0.3f64).powi(2) / 0.9f64.powi(3) - 1.0 / 0.9;
            assert!((sc.period_econ[t][0] - dmu).abs() < 1e-6, "t={t}");
            assert!((sc.period_econ[t][1] - dsigma).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn j1_gaussian_hessian_matches_closed_form() {
        let (spec, theta) = j1_gaussian(0.3, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ys: Vec<f64> = (0..200).map(|_| 0.3 + 0.9 * rng_normal(&mut rng)).collect();
        let data = Dataset::new(ys.clone(), vec![], &spec).unwrap();
        let h = hessian(&spec, &theta, &data, S0Policy::Fixed(0)).unwrap();
        let n = ys.len() as f64;
        let (mu, s) = (0.3f64, 0.9f64);
        let sum_e: f64 = ys.iter().map(|y| y - mu).sum();
        let sum_e2: f64 = ys.iter().map(|y| (y - mu).powi(2)).sum();
        let h_mm = -n / (s * s);
        let h_ms = -2.0 * sum_e / s.powi(3);
        let h_ss = n / (s * s) - 3.0 * sum_e2 / s.powi(4);
        assert!((h[(0, 0)] - h_mm).abs() / h_mm.abs() < 1e-4);
        assert!((h[(0, 1)] - h_ms).abs() / h_ms.abs().max(1.0) < 1e-4);
        assert!((h[(1, 1)] - h_ss).abs() / h_ss.abs() < 1e-4);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    fn rng_normal(rng: &mut ChaCha8Rng) -> f64 {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
    }

    #[test]
    fn demeaned_ops_equals_ops_for_zero_mean_scores() {
        let rows = vec![vec![1.0, -0.5], vec![-1.0, 0.5], vec![2.0, 0.3], vec![-2.0, -0.3]];
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-10.0, -10.0]));
        let b = covariance_bundle(&rows, &h, 50).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((b.ops[i][j] - b.demeaned_ops[i][j]).abs() < 1e-12);
            }
        }
        assert!(b.hessian_valid);
    }

    #[test]
    fn interval_basics() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect();
        let h = DMatrix::from_element(1, 1, -40.0);
        let b = covariance_bundle(&rows, &h, 40).unwrap();
        let ci = confidence_intervals(&[1.0], &b, 0.95).unwrap();
        let z = norm_quantile(0.975);
        assert!((z - 1.959_964).abs() < 1e-6);
        let se = (1.0f64 / 40.0).sqrt();
        assert!((ci.ops[0].0 - (1.0 - z * se)).abs() < 1e-12);
        // degenerate interval when se = 0
        let b2 = CovarianceBundle {
            hessian_based: None,
            hessian_valid: false,
            ops: vec![vec![0.0]],
            demeaned_ops: vec![vec![0.0]],
        };
        let ci2 = confidence_intervals(&[1.0], &b2, 0.95).unwrap();
        assert_eq!(ci2.ops[0], (1.0, 1.0));
        assert!(ci2.hessian_based.is_none());
    }

    #[test]
    fn covariance_requires_enough_data() {
        let rows = vec![vec![1.0, 0.0]];
        let h = DMatrix::identity(2, 2);
        assert!(covariance_bundle(&rows, &h, 2).is_err());
    }
}
