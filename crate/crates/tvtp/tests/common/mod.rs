//! Shared helpers for the integration tests: random model instances,
//! random datasets, and a brute-force path-enumeration smoother.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use tvtp::model::{
    conditional_mean, expand_states, Dataset, KernelFamily, KernelParams, ModelSpec, ParamVector,
};
use tvtp::numeric::norm_pdf;
use tvtp::transition::base_rows;

/// The two-regime AR(4) logistic benchmark design used by the coverage
/// experiment: switching mean, shared AR coefficients and variance, one
/// transition covariate.
pub fn benchmark_design() -> (ModelSpec, ParamVector) {
    let spec = ModelSpec::new(4, 2, 5, true, false, false, KernelFamily::Logistic, 1).unwrap();
    let theta = ParamVector {
        mu: vec![-2.33, 0.16],
        gamma: vec![vec![0.08, 0.17, 0.15, 0.005]],
        sigma: vec![0.50],
        kernel: KernelParams::Link {
            coef: vec![vec![vec![-1.70, -1.61]], vec![vec![-5.66, -4.85]]],
        },
    };
    (spec, theta)
}

/// Draws a random valid model spec with J in {2,3}, d in {1,2}, k in
/// {0,1,2}, over all four kernel families (latent factor only when
/// `include_latent`), together with random parameter values.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    include_latent: bool,
) -> (ModelSpec, ParamVector) {
    let families = if include_latent {
        vec![
            KernelFamily::Constant,
            KernelFamily::Logistic,
            KernelFamily::Probit,
            KernelFamily::LatentFactor,
        ]
    } else {
        vec![
            KernelFamily::Constant,
            KernelFamily::Logistic,
            KernelFamily::Probit,
        ]
    };
    let family = *families.choose(rng).unwrap();
    let switch_ar = rng.gen_bool(0.5);
    let switch_var = rng.gen_bool(0.5);
    let spec = if family == KernelFamily::LatentFactor {
        // J = 2 and d = p = k + 1 are structural requirements.
        let k = rng.gen_range(0..=1usize);
        ModelSpec::new(k, 2, k + 1, true, switch_ar, switch_var, family, 0).unwrap()
    } else {
        let j = *[2usize, 3].choose(rng).unwrap();
        let mut d = rng.gen_range(1..=2usize);
        let k = rng.gen_range(0..=2usize);
        let mut switch_mean = rng.gen_bool(0.7);
        if switch_mean && k > 0 && d < k + 1 {
            if k == 1 {
                d = 2;
            } else {
                switch_mean = false;
            }
        }
        let covariate_dim = if family == KernelFamily::Constant {
            0
        } else {
            rng.gen_range(0..=2usize)
        };
        ModelSpec::new(k, j, d, switch_mean, switch_ar, switch_var, family, covariate_dim)
            .unwrap()
    };
    let theta = random_params(rng, &spec);
    (spec, theta)
}

/// Random parameter values consistent with `spec`: separated means, mildly
/// persistent AR coefficients, well-conditioned kernels.
pub fn random_params(rng: &mut ChaCha8Rng, spec: &ModelSpec) -> ParamVector {
    let n_mu = if spec.switch_mean { spec.j } else { 1 };
    let mut mu: Vec<f64> = (0..n_mu)
        .map(|i| i as f64 - 0.5 * (n_mu - 1) as f64 + 0.3 * rng.gen_range(-1.0..1.0))
        .collect();
    mu.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n_gam = if spec.switch_ar { spec.j } else { 1 };
    let gamma: Vec<Vec<f64>> = (0..n_gam)
        .map(|_| (0..spec.k).map(|_| rng.gen_range(-0.25..0.25)).collect())
        .collect();
    let n_sig = if spec.switch_var { spec.j } else { 1 };
    let sigma: Vec<f64> = (0..n_sig).map(|_| rng.gen_range(0.5..1.5)).collect();
    let kernel = match spec.kernel.family {
        KernelFamily::Constant => {
            let rows = (0..spec.j)
                .map(|_| {
                    let raw: Vec<f64> = (0..spec.j).map(|_| rng.gen_range(0.1..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            KernelParams::Constant { rows }
        }
        KernelFamily::Logistic | KernelFamily::Probit => {
            let coef = (0..spec.j)
                .map(|_| {
                    (0..spec.j - 1)
                        .map(|_| {
                            (0..=spec.covariate_dim)
                                .map(|_| rng.gen_range(-1.0..1.0))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            KernelParams::Link { coef }
        }
        KernelFamily::LatentFactor => KernelParams::LatentFactor {
            alpha: rng.gen_range(-0.8..0.8),
            tau: rng.gen_range(-1.0..1.0),
            rho: rng.gen_range(-0.8..0.8),
        },
    };
    let theta = ParamVector {
        mu,
        gamma,
        sigma,
        kernel,
    };
    theta.validate(spec).unwrap();
    theta
}

/// Random dataset of n observations plus the p conditioning values.
pub fn random_dataset(rng: &mut ChaCha8Rng, spec: &ModelSpec, n: usize) -> Dataset {
    let y: Vec<f64> = (0..n + spec.p)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            z
        })
        .collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..spec.covariate_dim)
                .map(|_| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    z
                })
                .collect()
        })
        .collect();
    Dataset::new(y, x, spec).unwrap()
}

/// Exact smoothed expanded-state posteriors P(S_t = s | all data, s_0) by
/// enumerating every regime path and normalizing the path weights. Only
/// feasible for tiny instances.
pub fn smoothed_oracle(
    spec: &ModelSpec,
    theta: &ParamVector,
    data: &Dataset,
    s0: usize,
) -> Vec<Vec<f64>> {
    let es = expand_states(spec);
    let n = data.n(spec);
    let ns = es.len();
    // Per-period transition rows and observation densities per state.
    let mut rows_t = Vec::with_capacity(n);
    let mut dens_t = Vec::with_capacity(n);
    for t in 1..=n {
        let y_lags = data.y_lags(spec, t);
        let x_t = data.x_at(spec, t);
        rows_t.push(base_rows(spec, theta, &es, &y_lags, x_t).unwrap());
        let y_t = data.y_at(spec, t as i64);
        let d: Vec<f64> = (0..ns)
            .map(|s| {
                let mean = conditional_mean(spec, theta, &es.states[s], &y_lags);
                let sig = theta.sigma_of(es.base_regime(s));
                norm_pdf((y_t - mean) / sig) / sig
            })
            .collect();
        dens_t.push(d);
    }
    let mut post = vec![vec![0.0; ns]; n];
    let mut total = 0.0;
    // Depth-first walk over all J^n regime paths.
    let mut stack: Vec<(usize, usize, f64, Vec<usize>)> = vec![(0, s0, 1.0, Vec::new())];
    while let Some((t, state, w, path)) = stack.pop() {
        if t == n {
            total += w;
            for (tt, &s) in path.iter().enumerate() {
                post[tt][s] += w;
            }
            continue;
        }
        for new in 0..spec.j {
            let q = rows_t[t][state][new];
            if q == 0.0 {
                continue;
            }
            let next = es.successor(state, new);
            let mut p = path.clone();
            p.push(next);
            stack.push((t + 1, next, w * q * dens_t[t][next], p));
        }
    }
    for row in post.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    post
}
