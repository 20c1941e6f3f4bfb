//! Time-varying transition kernels on the expanded state space.
//!
//! The latent-factor kernel maps internal regime 1 (index 0) to the
//! below-threshold state and internal regime 2 (index 1) to the
//! above-threshold state of the latent process.

use crate::model::{residual_u, ExpandedStates, KernelParams, ModelSpec, ParamVector};
use crate::numeric::{gauss_legendre, logistic, norm_cdf, norm_quantile};
use crate::{Error, Result};
use std::sync::OnceLock;

/// Probability row over the J target base regimes given the origin expanded
/// state (components newest first), the observation lags Ȳ_{t-1} (newest
/// first), and the covariate vector X_t.
pub fn base_transition(
    spec: &ModelSpec,
    theta: &ParamVector,
    origin: &[u8],
    y_lags: &[f64],
    x_t: &[f64],
) -> Result<Vec<f64>> {
    if x_t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariates".into()));
    }
    let from = origin[0] as usize;
    match &theta.kernel {
        KernelParams::Constant { rows } => Ok(rows[from].clone()),
        KernelParams::Link { coef } => {
            let logit_link = spec.kernel.family == crate::model::KernelFamily::Logistic;
            let mut row = vec![0.0; spec.j];
            let mut remaining = 1.0f64;
            for j in 0..spec.j - 1 {
                let c = &coef[from][j];
                let mut z = c[0];
                for (l, &x) in x_t.iter().enumerate() {
                    z += c[l + 1] * x;
                }
                let p = if logit_link { logistic(z) } else { norm_cdf(z) };
                row[j] = remaining * p;
                remaining -= row[j];
            }
            row[spec.j - 1] = remaining.max(0.0);
            Ok(row)
        }
        KernelParams::LatentFactor { alpha, tau, rho } => {
            let u_prev = residual_u(spec, theta, origin, y_lags);
            if !u_prev.is_finite() {
                return Err(Error::NonFinite("latent-factor residual".into()));
            }
            let w = omega_rho(*alpha, *tau, *rho, origin[0], u_prev)?;
            Ok(vec![w, 1.0 - w])
        }
    }
}

// Graded panel breakpoints for the quadrature in v-space. The integrand
// behaves like 1 - C v^(B^2) near the endpoints, so panels shrink
// geometrically toward 0 and 1.
const PANEL_EDGES: [f64; 15] = [
    0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999, 1.0,
];
const NODES_PER_PANEL: usize = 16;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (xs, ws) = gauss_legendre(NODES_PER_PANEL);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in PANEL_EDGES.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (&x, &wt) in xs.iter().zip(&ws) {
                nodes.push(c + h * x);
                weights.push(h * wt);
            }
        }
        (nodes, weights)
    })
}

/// Transition probability to the below-threshold regime of the latent-factor
/// kernel: the truncated Gaussian integral normalized by the mass of the
/// conditioning branch.
///
/// `s_prev` is the previous regime in threshold coding (0 = below). The
/// half-infinite integral is mapped to (0, 1) by the Gaussian CDF change of
/// variables, which makes the weight uniform and cancels the normalizer; a
/// graded composite Gauss-Legendre rule then handles the algebraic endpoint
/// behavior of the transformed integrand.
pub fn omega_rho(alpha: f64, tau: f64, rho: f64, s_prev: u8, u_prev: f64) -> Result<f64> {
    if !(alpha.abs() < 1.0) || !(rho.abs() < 1.0) || !u_prev.is_finite() || !tau.is_finite() {
        return Err(Error::InvalidParam(format!(
            "omega_rho domain: alpha={alpha}, tau={tau}, rho={rho}, u_prev={u_prev}"
        )));
    }
    let one_m_r2 = (1.0 - rho * rho).sqrt();
    let a = (tau - rho * u_prev) / one_m_r2;
    let b = alpha / ((1.0 - alpha * alpha).sqrt() * one_m_r2);
    let c = tau * (1.0 - alpha * alpha).sqrt();
    let (nodes, weights) = panel_rule();
    let mut acc = 0.0;
    let branch_mass = if s_prev == 0 { norm_cdf(c) } else { norm_cdf(-c) };
    if branch_mass <= f64::MIN_POSITIVE {
        return Err(Error::InvalidParam(format!(
            "conditioning branch has vanishing mass (tau sqrt(1-alpha^2) = {c})"
        )));
    }
    if s_prev == 0 {
        // integrate over x in (-inf, c]: x(v) = Phi^{-1}(v Phi(c))
        let pc = branch_mass;
        for (&v, &w) in nodes.iter().zip(weights) {
            let x = norm_quantile(v * pc);
            acc += w * norm_cdf(a - b * x);
        }
    } else {
        // integrate over x in [c, inf): x(v) = -Phi^{-1}((1-v) Phi(-c))
        let pcc = branch_mass;
        for (&v, &w) in nodes.iter().zip(weights) {
            let x = -norm_quantile((1.0 - v) * pcc);
            acc += w * norm_cdf(a - b * x);
        }
    }
    Ok(acc.clamp(0.0, 1.0))
}

/// Full J^d x J^d expanded transition matrix: entry (from, to) is the base
/// transition probability of `to`'s newest regime when the pair is
/// lag-consistent, zero otherwise.
pub fn expanded_transition_matrix(
    spec: &ModelSpec,
    theta: &ParamVector,
    y_lags: &[f64],
    x_t: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let es = crate::model::expand_states(spec);
    let n = es.len();
    let mut mat = vec![vec![0.0; n]; n];
    for from in 0..n {
        let row = base_transition(spec, theta, &es.states[from], y_lags, x_t)?;
        for (new, &p) in row.iter().enumerate() {
            mat[from][es.successor(from, new)] = p;
        }
    }
    Ok(mat)
}

/// Base transition rows for every origin state; `rows[from][new]` is the
/// probability of drawing base regime `new` next. This is the sparse form of
/// [`expanded_transition_matrix`] used by the filter.
pub fn base_rows(
    spec: &ModelSpec,
    theta: &ParamVector,
    es: &ExpandedStates,
    y_lags: &[f64],
    x_t: &[f64],
) -> Result<Vec<Vec<f64>>> {
    es.states
        .iter()
        .map(|comps| base_transition(spec, theta, comps, y_lags, x_t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelFamily, KernelParams, ModelSpec, ParamVector};
    use crate::numeric::norm_pdf;

    fn logistic_spec() -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::new(0, 2, 1, true, false, false, KernelFamily::Logistic, 1).unwrap();
        let theta = ParamVector {
            mu: vec![-2.33, 0.16],
            gamma: vec![vec![]],
            sigma: vec![0.5],
            kernel: KernelParams::Link {
                coef: vec![vec![vec![-1.70, -1.61]], vec![vec![-5.66, -4.85]]],
            },
        };
        (spec, theta)
    }

    #[test]
    fn logistic_row_at_zero_covariate() {
        let (spec, theta) = logistic_spec();
        let row = base_transition(&spec, &theta, &[0], &[], &[0.0]).unwrap();
        let expect = (-1.70f64).exp() / (1.0 + (-1.70f64).exp());
        assert!((row[0] - expect).abs() < 1e-15);
        assert!((row[0] + row[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_extreme_scores_saturate() {
        let (spec, theta) = logistic_spec();
        // |x'beta| around 800: no NaN, exact 0/1
        let row = base_transition(&spec, &theta, &[0], &[], &[-500.0]).unwrap();
        assert_eq!(row[0], 1.0);
        assert_eq!(row[1], 0.0);
        let row = base_transition(&spec, &theta, &[0], &[], &[500.0]).unwrap();
        assert_eq!(row[0], 0.0);
        assert_eq!(row[1], 1.0);
    }

    #[test]
    fn probit_half_at_zero_score() {
        let spec = ModelSpec::new(0, 2, 1, true, false, false, KernelFamily::Probit, 1).unwrap();
        let theta = ParamVector {
            mu: vec![-1.0, 1.0],
            gamma: vec![vec![]],
            sigma: vec![1.0],
            kernel: KernelParams::Link {
                coef: vec![vec![vec![0.0, 1.0]], vec![vec![0.0, -2.0]]],
            },
        };
        let row = base_transition(&spec, &theta, &[0], &[], &[0.0]).unwrap();
        assert!((row[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn omega_symmetric_case_is_half() {
        let w = omega_rho(0.0, 0.0, 0.0, 0, 0.0).unwrap();
        assert!((w - 0.5).abs() < 1e-12, "w = {w}");
        let w = omega_rho(0.0, 0.0, 0.0, 1, 0.0).unwrap();
        assert!((w - 0.5).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn omega_alpha_zero_closed_form() {
        // alpha = 0 collapses the integral to a single Phi evaluation
        for &(tau, rho, u, s) in &[(0.4, 0.6, 1.2, 0u8), (-0.8, -0.3, -0.5, 1u8), (0.0, 0.9, 2.0, 0u8)] {
            let w = omega_rho(0.0, tau, rho, s, u).unwrap();
            let expect = norm_cdf((tau - rho * u) / (1.0 - rho * rho).sqrt());
            assert!((w - expect).abs() < 1e-12, "tau={tau} rho={rho}: {w} vs {expect}");
        }
    }

    /// Brute-force x-domain quadrature of the defining integral, used as an
    /// independent route for accuracy checks.
    fn omega_bruteforce(alpha: f64, tau: f64, rho: f64, s_prev: u8, u_prev: f64) -> f64 {
        let one_m_r2 = (1.0 - rho * rho).sqrt();
        let a = (tau - rho * u_prev) / one_m_r2;
        let b = alpha / ((1.0 - alpha * alpha).sqrt() * one_m_r2);
        let c = tau * (1.0 - alpha * alpha).sqrt();
        let (lo, hi) = if s_prev == 0 { (-40.0, c) } else { (c, 40.0) };
        let denom = if s_prev == 0 { norm_cdf(c) } else { norm_cdf(-c) };
        let mut num = 0.0;
        let panels = 40;
        for i in 0..panels {
            let pa = lo + (hi - lo) * i as f64 / panels as f64;
            let pb = lo + (hi - lo) * (i + 1) as f64 / panels as f64;
            let (xs, ws) = crate::numeric::gauss_legendre_on(24, pa, pb);
            num += xs
                .iter()
                .zip(&ws)
                .map(|(&x, &w)| w * norm_pdf(x) * norm_cdf(a - b * x))
                .sum::<f64>();
        }
        num / denom
    }

    #[test]
    fn omega_matches_bruteforce_quadrature() {
        let cases = [
            (0.5, 0.0, 0.0, 0u8, 0.0),
            (0.5, 0.3, 0.4, 0u8, 1.0),
            (-0.7, -0.5, 0.8, 1u8, -2.0),
            (0.9, 1.5, -0.6, 0u8, 3.0),
            (0.95, -2.0, 0.9, 1u8, 0.5),
            (0.2, 0.8, -0.95, 0u8, -1.5),
        ];
        for &(al, ta, rh, s, u) in &cases {
            let got = omega_rho(al, ta, rh, s, u).unwrap();
            let want = omega_bruteforce(al, ta, rh, s, u);
            assert!(
                (got - want).abs() < 1e-10,
                "alpha={al} tau={ta} rho={rh} s={s} u={u}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn omega_richardson_node_doubling() {
        // doubling the per-panel node count should not move the value
        let coarse = omega_rho(0.8, 0.7, 0.5, 0, 1.3).unwrap();
        let fine = omega_bruteforce(0.8, 0.7, 0.5, 0, 1.3);
        assert!((coarse - fine).abs() < 1e-10);
    }

    #[test]
    fn omega_monotone_in_u() {
        // rho > 0, s_prev = 0: omega nonincreasing in u_prev
        let mut prev = f64::INFINITY;
        for i in 0..21 {
            let u = -3.0 + 0.3 * i as f64;
            let w = omega_rho(0.5, 0.2, 0.6, 0, u).unwrap();
            assert!(w <= prev + 1e-12);
            prev = w;
        }
        // sign flips with rho < 0
        let mut prev = f64::NEG_INFINITY;
        for i in 0..21 {
            let u = -3.0 + 0.3 * i as f64;
            let w = omega_rho(0.5, 0.2, -0.6, 0, u).unwrap();
            assert!(w >= prev - 1e-12);
            prev = w;
        }
    }

    #[test]
    fn omega_rejects_domain_violations() {
        assert!(omega_rho(1.0, 0.0, 0.0, 0, 0.0).is_err());
        assert!(omega_rho(0.0, 0.0, 1.0, 0, 0.0).is_err());
        assert!(omega_rho(0.0, 0.0, 0.0, 0, f64::NAN).is_err());
    }

    #[test]
    fn expanded_matrix_rows_sum_to_one() {
        let spec = ModelSpec::new(0, 2, 2, true, false, false, KernelFamily::Logistic, 1).unwrap();
        let theta = ParamVector {
            mu: vec![-1.0, 1.0],
            gamma: vec![vec![]],
            sigma: vec![0.8],
            kernel: KernelParams::Link {
                coef: vec![vec![vec![0.4, -0.3]], vec![vec![-1.0, 0.9]]],
            },
        };
        let mat = expanded_transition_matrix(&spec, &theta, &[], &[0.7]).unwrap();
        assert_eq!(mat.len(), 4);
        let mut nonzeros = 0;
        for row in &mat {
            nonzeros += row.iter().filter(|&&p| p != 0.0).count();
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert_eq!(nonzeros, 8);
    }

    #[test]
    fn constant_kernel_matrix_is_covariate_free() {
        let spec = ModelSpec::new(0, 2, 1, true, false, false, KernelFamily::Constant, 0).unwrap();
        let theta = ParamVector {
            mu: vec![-1.0, 1.0],
            gamma: vec![vec![]],
            sigma: vec![1.0],
            kernel: KernelParams::Constant {
                rows: vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            },
        };
        let m1 = expanded_transition_matrix(&spec, &theta, &[], &[]).unwrap();
        assert_eq!(m1[0], vec![0.9, 0.1]);
        assert_eq!(m1[1], vec![0.2, 0.8]);
    }
}
