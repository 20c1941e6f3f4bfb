//! Numerical stationarity and moment diagnostics.
//!
//! The stationarity check distinguishes two modes. When the AR coefficients
//! do not switch, the usual spectral-radius condition on the companion matrix
//! applies. When they do switch, the sufficient condition is that the
//! expected entrywise-absolute-sum norm of a block matrix M(X_t), built from
//! Kronecker squares of the per-regime companion matrices weighted by the
//! transition probabilities, stays below one; that expectation is estimated
//! by Monte Carlo (or computed in closed form for the latent-factor kernel,
//! whose U-averaged transition probabilities reduce to one-dimensional
//! Gaussian integrals).

use crate::model::{KernelFamily, ModelSpec, ParamVector};
use crate::numeric::{gauss_legendre, norm_cdf, norm_pdf};
use crate::simulate::{simulate_tvtp, RegimeInit};
use crate::transition::{base_transition, expanded_transition_matrix};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

/// Companion matrix A(regime): first row = AR coefficients, identity
/// subdiagonal. Requires k >= 1.
pub fn companion_matrix(spec: &ModelSpec, theta: &ParamVector, regime: usize) -> DMatrix<f64> {
    let k = spec.k;
    let mut a = DMatrix::zeros(k, k);
    let gamma = theta.gamma_of(regime);
    for (j, &g) in gamma.iter().enumerate() {
        a[(0, j)] = g;
    }
    for i in 1..k {
        a[(i, i - 1)] = 1.0;
    }
    a
}

/// Spectral radius via the complex eigenvalue routine.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Entrywise absolute sum, the norm the stationarity condition is stated in.
pub fn entrywise_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Builds M from the per-regime companion matrices and a transition matrix
/// q[(i, j)] = P(new regime j | origin regime i): block (j, i) is
/// (A(j) (x) A(j)) q_{ij}.
pub fn m_matrix_from_q(a_mats: &[DMatrix<f64>], q: &DMatrix<f64>) -> DMatrix<f64> {
    let j_regimes = a_mats.len();
    let k2 = a_mats[0].nrows() * a_mats[0].nrows();
    let mut m = DMatrix::zeros(j_regimes * k2, j_regimes * k2);
    for jb in 0..j_regimes {
        let kron = a_mats[jb].kronecker(&a_mats[jb]);
        for ib in 0..j_regimes {
            let mut view = m.view_mut((jb * k2, ib * k2), (k2, k2));
            view.copy_from(&(&kron * q[(ib, jb)]));
        }
    }
    m
}

/// M(x) for covariate-driven kernels; for the latent-factor kernel the
/// U-averaged transition probabilities are used and `x_t` is ignored.
pub fn m_matrix(spec: &ModelSpec, theta: &ParamVector, x_t: &[f64]) -> Result<DMatrix<f64>> {
    if spec.k == 0 {
        return Err(Error::InvalidSpec("m_matrix requires k >= 1".into()));
    }
    let a_mats: Vec<DMatrix<f64>> = (0..spec.j)
        .map(|r| companion_matrix(spec, theta, r))
        .collect();
    let q = transition_q(spec, theta, x_t)?;
    Ok(m_matrix_from_q(&a_mats, &q))
}

/// J x J matrix of base transition probabilities at the given covariates
/// (U-averaged closed form for the latent-factor kernel).
fn transition_q(spec: &ModelSpec, theta: &ParamVector, x_t: &[f64]) -> Result<DMatrix<f64>> {
    let mut q = DMatrix::zeros(spec.j, spec.j);
    match spec.kernel.family {
        KernelFamily::LatentFactor => {
            let (alpha, tau) = match &theta.kernel {
                crate::model::KernelParams::LatentFactor { alpha, tau, .. } => (*alpha, *tau),
                _ => return Err(Error::InvalidParam("kernel/spec mismatch".into())),
            };
            for i in 0..2 {
                let w = w_marginal(alpha, tau, i == 0)?;
                q[(i, 0)] = w;
                q[(i, 1)] = 1.0 - w;
            }
        }
        _ => {
            let zeros_y = vec![0.0; spec.p.max(1)];
            for i in 0..spec.j {
                let origin = vec![i as u8; spec.d];
                let row = base_transition(spec, theta, &origin, &zeros_y, x_t)?;
                for (j, &p) in row.iter().enumerate() {
                    q[(i, j)] = p;
                }
            }
        }
    }
    Ok(q)
}

/// U-averaged probability that the latent factor stays below the threshold
/// next period, given the current side of the threshold:
/// the integral of Phi(tau - alpha x / sqrt(1 - alpha^2)) phi(x) over
/// (-inf, c] (origin below) or [c, inf) (origin above), c = tau
/// sqrt(1 - alpha^2), normalized by the branch mass.
///
/// Computed by direct x-domain quadrature; this is an independent route from
/// the CDF-substituted conditional integral and coincides with it at rho = 0.
pub fn w_marginal(alpha: f64, tau: f64, origin_below: bool) -> Result<f64> {
    if !(alpha.abs() < 1.0) || !tau.is_finite() {
        return Err(Error::InvalidParam(format!(
            "w_marginal domain: alpha={alpha}, tau={tau}"
        )));
    }
    let c = tau * (1.0 - alpha * alpha).sqrt();
    let mass = if origin_below {
        norm_cdf(c)
    } else {
        norm_cdf(-c)
    };
    if mass <= f64::MIN_POSITIVE {
        return Err(Error::InvalidParam(
            "latent-factor branch mass underflows".into(),
        ));
    }
    let slope = alpha / (1.0 - alpha * alpha).sqrt();
    // Panels graded toward the finite endpoint c, where the mass concentrates
    // when the branch is a far tail.
    const OFFSETS: [f64; 13] = [
        45.0, 20.0, 10.0, 5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.0,
    ];
    let (gx, gw) = gauss_legendre(20);
    let mut total = 0.0;
    for win in OFFSETS.windows(2) {
        let (a, b) = if origin_below {
            (c - win[0], c - win[1])
        } else {
            (c + win[1], c + win[0])
        };
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut panel = 0.0;
        for (&xn, &wn) in gx.iter().zip(&gw) {
            let x = mid + half * xn;
            panel += wn * norm_cdf(tau - slope * x) * norm_pdf(x);
        }
        total += half * panel;
    }
    Ok((total / mass).clamp(0.0, 1.0))
}

/// Which mode the stationarity check ran in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationarityMode {
    ConstantA,
    SwitchingA,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stationary,
    NonStationary,
    /// Monte Carlo estimate within two standard errors of the boundary.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityReport {
    pub mode: StationarityMode,
    pub spectral_radius: Option<f64>,
    pub m_norm_estimate: Option<f64>,
    pub m_norm_se: Option<f64>,
    pub verdict: Verdict,
    pub draws: usize,
}

/// Samples the stationary marginal of a scalar AR(1) covariate process with
/// unit innovations, replicated across `dim` independent coordinates.
pub fn ar1_stationary_sampler(a: f64, dim: usize) -> impl FnMut(&mut ChaCha8Rng) -> Vec<f64> {
    let sd = 1.0 / (1.0 - a * a).sqrt();
    move |rng| {
        (0..dim)
            .map(|_| {
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                sd * z
            })
            .collect()
    }
}

/// Checks the stationarity condition at (spec, theta).
///
/// Non-switching AR coefficients: spectral radius of the shared companion
/// matrix. Switching coefficients: Monte Carlo estimate of E||M(X)|| over
/// covariate draws (deterministic for the latent-factor kernel). The verdict
/// requires a two-standard-error margin; estimates near the boundary come
/// back `Inconclusive`.
pub fn check_stationarity<F>(
    spec: &ModelSpec,
    theta: &ParamVector,
    mut x_sampler: F,
    draws: usize,
    seed: u64,
) -> Result<StationarityReport>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    spec.validate()?;
    theta.validate(spec)?;
    if spec.k == 0 {
        return Ok(StationarityReport {
            mode: StationarityMode::ConstantA,
            spectral_radius: Some(0.0),
            m_norm_estimate: None,
            m_norm_se: None,
            verdict: Verdict::Stationary,
            draws: 0,
        });
    }
    if !spec.switch_ar {
        let rho_a = spectral_radius(&companion_matrix(spec, theta, 0));
        return Ok(StationarityReport {
            mode: StationarityMode::ConstantA,
            spectral_radius: Some(rho_a),
            m_norm_estimate: None,
            m_norm_se: None,
            verdict: if rho_a < 1.0 {
                Verdict::Stationary
            } else {
                Verdict::NonStationary
            },
            draws: 0,
        });
    }
    if spec.kernel.family == KernelFamily::LatentFactor {
        let norm = entrywise_norm(&m_matrix(spec, theta, &[])?);
        return Ok(StationarityReport {
            mode: StationarityMode::SwitchingA,
            spectral_radius: None,
            m_norm_estimate: Some(norm),
            m_norm_se: Some(0.0),
            verdict: if norm < 1.0 {
                Verdict::Stationary
            } else {
                Verdict::NonStationary
            },
            draws: 0,
        });
    }
    if draws < 1000 {
        return Err(Error::InvalidParam(
            "Monte Carlo stationarity check needs draws >= 1000".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..draws {
        let x = x_sampler(&mut rng);
        let norm = entrywise_norm(&m_matrix(spec, theta, &x)?);
        sum += norm;
        sumsq += norm * norm;
    }
    let mean = sum / draws as f64;
    let var = (sumsq / draws as f64 - mean * mean).max(0.0);
    let se = (var / draws as f64).sqrt();
    let verdict = if mean + 2.0 * se < 1.0 {
        Verdict::Stationary
    } else if mean - 2.0 * se > 1.0 {
        Verdict::NonStationary
    } else {
        Verdict::Inconclusive
    };
    Ok(StationarityReport {
        mode: StationarityMode::SwitchingA,
        spectral_radius: None,
        m_norm_estimate: Some(mean),
        m_norm_se: Some(se),
        verdict,
        draws,
    })
}

/// Minimum over (initial state, terminal state) of the r-step expanded-chain
/// transition probability along the given data window.
///
/// `y_window` holds (y_{-p+1}, ..., y_{r-1}) and `x_window` holds
/// (x_1, ..., x_r).
pub fn minorization_coeff(
    spec: &ModelSpec,
    theta: &ParamVector,
    y_window: &[f64],
    x_window: &[Vec<f64>],
    r: usize,
) -> Result<f64> {
    spec.validate()?;
    theta.validate(spec)?;
    if r < 1 {
        return Err(Error::InvalidParam("minorization window needs r >= 1".into()));
    }
    let expected_y = r - 1 + spec.p;
    if y_window.len() != expected_y || x_window.len() != r {
        return Err(Error::InvalidData(format!(
            "window lengths: expected {expected_y} observations and {r} covariate rows, got {} and {}",
            y_window.len(),
            x_window.len()
        )));
    }
    let n_states = spec.n_states();
    let path_count = (n_states as f64).powi(r as i32 + 1);
    if path_count > 1e7 {
        return Err(Error::TooLarge(format!(
            "{path_count:.0} expanded paths to enumerate"
        )));
    }
    let mut prod = DMatrix::<f64>::identity(n_states, n_states);
    for ell in 1..=r {
        // Lags (y_{ell-1}, ..., y_{ell-p}), newest first.
        let y_lags: Vec<f64> = (0..spec.p)
            .map(|l| y_window[spec.p - 1 + (ell - 1) - l])
            .collect();
        let rows = expanded_transition_matrix(spec, theta, &y_lags, &x_window[ell - 1])?;
        let t_ell = DMatrix::from_fn(n_states, n_states, |i, j| rows[i][j]);
        prod *= t_ell;
    }
    Ok(prod.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Which moment the advisory check estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentCheck {
    /// E |log min_{i,j} q(j | i, X)|^2 over covariate draws.
    MinTransition,
    /// E |log sigma_-|^2 with sigma_- = minorization_coeff on simulated
    /// windows of length r = d.
    Minorization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub which: MomentCheck,
    pub estimate: f64,
    pub se: f64,
    /// Half-sample estimate within 3 se of the full estimate.
    pub stable: bool,
    pub draws: usize,
}

/// Monte Carlo check of the log-moment condition behind the identification
/// assumptions; advisory only.
pub fn log_moment_check<F>(
    spec: &ModelSpec,
    theta: &ParamVector,
    which: MomentCheck,
    mut x_sampler: F,
    draws: usize,
    seed: u64,
) -> Result<MomentReport>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    spec.validate()?;
    theta.validate(spec)?;
    if draws < 10_000 {
        return Err(Error::InvalidParam("log_moment_check needs draws >= 10000".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(draws);
    match which {
        MomentCheck::MinTransition => {
            let zeros_y = vec![0.0; spec.p.max(1)];
            for _ in 0..draws {
                let x = x_sampler(&mut rng);
                let mut min_q = f64::INFINITY;
                for i in 0..spec.j {
                    let origin = vec![i as u8; spec.d];
                    let row = base_transition(spec, theta, &origin, &zeros_y, &x)?;
                    for &p in &row {
                        min_q = min_q.min(p);
                    }
                }
                let v = if min_q <= 0.0 {
                    f64::INFINITY
                } else {
                    min_q.ln().powi(2)
                };
                samples.push(v);
            }
        }
        MomentCheck::Minorization => {
            let r = spec.d;
            // One long simulated path, sliced into overlapping windows.
            let total = draws + r + spec.p;
            let x_len = total + crate::simulate::WARMUP + spec.p;
            let xs: Vec<Vec<f64>> = (0..x_len).map(|_| x_sampler(&mut rng)).collect();
            let path = simulate_tvtp(spec, theta, &xs, total, seed ^ 0x9e37, RegimeInit::Fixed(0))?;
            let x_used = &xs[x_len - total..];
            for start in 0..draws {
                // y_window = (y_{start-p+1}, ..., y_{start+r-1}) in path
                // coordinates; path.y index 0 is y_{-p+1}.
                let y_window = &path.y[start..start + r - 1 + spec.p];
                let x_window = &x_used[start..start + r];
                let sigma = minorization_coeff(spec, theta, y_window, x_window, r)?;
                let v = if sigma <= 0.0 {
                    f64::INFINITY
                } else {
                    sigma.ln().powi(2)
                };
                samples.push(v);
            }
        }
    }
    let finite: Vec<f64> = samples.iter().cloned().filter(|v| v.is_finite()).collect();
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let se = (var / n).sqrt();
    let half = &finite[..finite.len() / 2];
    let half_mean = half.iter().sum::<f64>() / half.len() as f64;
    // Floor the tolerance so degenerate (zero-variance) samples, where
    // summation rounding dominates, still count as stable.
    let tol = (3.0 * se).max(1e-10 * mean.abs().max(1.0));
    let stable = finite.len() == samples.len() && (half_mean - mean).abs() <= tol;
    Ok(MomentReport {
        which,
        estimate: mean,
        se,
        stable,
        draws,
    })
}
