//! Parallel Monte Carlo coverage experiment: simulate at the true
//! parameters, fit each replication, and count confidence-interval coverage
//! per parameter for each variance estimator.

use crate::inference::Estimator;
use crate::model::{param_names, relabel_regimes, to_econ, Dataset, ModelSpec, ParamVector};
use crate::optimize::{fit, FitConfig, InitPolicy};
use crate::simulate::{simulate_covariates, simulate_tvtp, RegimeInit, WARMUP};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Coverage-harness configuration.
#[derive(Debug, Clone)]
pub struct CoverageConfig {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    /// Worker threads; 0 uses the global default.
    pub jobs: usize,
    /// AR coefficient of the simulated covariate process.
    pub covariate_ar: f64,
    /// Optimizer starts per replication.
    pub starts: usize,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            n: 200,
            replications: 200,
            seed: 0,
            level: 0.95,
            jobs: 0,
            covariate_ar: 0.4,
            starts: 3,
        }
    }
}

/// Per-parameter coverage counts for one estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub hessian_based: Vec<usize>,
    pub ops: Vec<usize>,
    pub demeaned_ops: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: usize,
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub theta_star_econ: Vec<f64>,
    pub counts: CoverageCounts,
    /// Replications whose fit converged (the coverage denominator).
    pub evaluated: usize,
    pub failed_fits: usize,
    /// Replications whose Hessian-based intervals were invalid; these count
    /// as non-coverage for that estimator.
    pub invalid_hessian: usize,
    /// Replications on which ops and demeaned_ops inclusion decisions agreed
    /// for every parameter.
    pub ops_demeaned_agree: usize,
    pub elapsed_secs: f64,
    /// Recorded harness choices (warmup, initial regime, starts).
    pub notes: Vec<String>,
}

/// SplitMix64 seed derivation: deterministic per-replication streams.
fn derive_seed(master: u64, rep: u64, salt: u64) -> u64 {
    let mut z = master
        .wrapping_add(rep.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(salt.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct RepOutcome {
    /// Inclusion per parameter per estimator; None for a failed fit.
    inclusion: Option<RepInclusion>,
}

struct RepInclusion {
    hessian: Vec<bool>,
    hessian_valid: bool,
    ops: Vec<bool>,
    demeaned: Vec<bool>,
}

fn run_replication(
    spec: &ModelSpec,
    theta_star: &ParamVector,
    star_econ: &[f64],
    cfg: &CoverageConfig,
    rep: u64,
) -> RepOutcome {
    let dim = star_econ.len();
    let inner = || -> Result<RepInclusion> {
        let x_len = cfg.n + WARMUP + spec.p;
        let xs: Vec<Vec<f64>> = if spec.covariate_dim > 0 {
            let mut cols = Vec::with_capacity(spec.covariate_dim);
            for c in 0..spec.covariate_dim {
                cols.push(simulate_covariates(
                    cfg.covariate_ar,
                    x_len,
                    200,
                    derive_seed(cfg.seed, rep, 1 + c as u64),
                )?);
            }
            (0..x_len)
                .map(|t| cols.iter().map(|col| col[t]).collect())
                .collect()
        } else {
            vec![Vec::new(); x_len]
        };
        let path = simulate_tvtp(
            spec,
            theta_star,
            &xs,
            cfg.n,
            derive_seed(cfg.seed, rep, 0),
            RegimeInit::Fixed(0),
        )?;
        let data = Dataset::new(path.y, xs[x_len - cfg.n..].to_vec(), spec)?;
        let fit_cfg = FitConfig {
            starts: cfg.starts,
            seed: derive_seed(cfg.seed, rep, 100),
            level: cfg.level,
            init: InitPolicy::Heuristic,
            ..FitConfig::default()
        };
        let res = fit(spec, &data, &fit_cfg)?;
        let include = |ints: &[(f64, f64)]| -> Vec<bool> {
            star_econ
                .iter()
                .zip(ints)
                .map(|(&s, &(lo, hi))| lo <= s && s <= hi)
                .collect()
        };
        let (hessian, hessian_valid) = match &res.intervals.hessian_based {
            Some(ints) => (include(ints), true),
            None => (vec![false; dim], false),
        };
        Ok(RepInclusion {
            hessian,
            hessian_valid,
            ops: include(&res.intervals.ops),
            demeaned: include(&res.intervals.demeaned_ops),
        })
    };
    RepOutcome {
        inclusion: inner().ok(),
    }
}

/// Runs the full coverage experiment. Failed fits are excluded from the
/// denominator and reported; the aggregation is a fixed-order reduction, so
/// the report does not depend on the number of worker threads.
pub fn run_coverage(
    spec: &ModelSpec,
    theta_star: &ParamVector,
    cfg: &CoverageConfig,
) -> Result<CoverageReport> {
    spec.validate()?;
    theta_star.validate(spec)?;
    if cfg.replications < 1 {
        return Err(Error::InvalidParam("replications must be >= 1".into()));
    }
    if !(0.0 < cfg.level && cfg.level < 1.0) {
        return Err(Error::InvalidParam("level must be in (0,1)".into()));
    }
    let (star_canonical, _) = relabel_regimes(theta_star, spec)?;
    let star_econ = to_econ(&star_canonical, spec);
    let dim = star_econ.len();
    let start_time = Instant::now();
    let body = || -> Vec<RepOutcome> {
        (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| run_replication(spec, &star_canonical, &star_econ, cfg, rep))
            .collect()
    };
    let outcomes = if cfg.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::OptimFailed(format!("thread pool: {e}")))?;
        pool.install(body)
    } else {
        body()
    };
    let mut counts = CoverageCounts {
        hessian_based: vec![0; dim],
        ops: vec![0; dim],
        demeaned_ops: vec![0; dim],
    };
    let mut evaluated = 0;
    let mut failed = 0;
    let mut invalid_hessian = 0;
    let mut agree = 0;
    for out in &outcomes {
        match &out.inclusion {
            None => failed += 1,
            Some(inc) => {
                evaluated += 1;
                if !inc.hessian_valid {
                    invalid_hessian += 1;
                }
                if inc.ops == inc.demeaned {
                    agree += 1;
                }
                for i in 0..dim {
                    counts.hessian_based[i] += inc.hessian[i] as usize;
                    counts.ops[i] += inc.ops[i] as usize;
                    counts.demeaned_ops[i] += inc.demeaned[i] as usize;
                }
            }
        }
    }
    Ok(CoverageReport {
        n: cfg.n,
        replications: cfg.replications,
        level: cfg.level,
        seed: cfg.seed,
        param_names: param_names(spec),
        theta_star_econ: star_econ,
        counts,
        evaluated,
        failed_fits: failed,
        invalid_hessian,
        ops_demeaned_agree: agree,
        elapsed_secs: start_time.elapsed().as_secs_f64(),
        notes: vec![
            format!("warmup periods discarded per replication: {}", WARMUP),
            "initial regime during warmup: regime 1".into(),
            format!("optimizer starts per replication: {}", cfg.starts),
            format!("covariate AR coefficient: {}", cfg.covariate_ar),
        ],
    })
}

impl CoverageReport {
    /// One CSV panel per estimator, shaped like the coverage table: a row per
    /// sample size with per-parameter counts and the denominator.
    pub fn csv_panels(&self) -> Vec<(Estimator, String)> {
        let panel = |counts: &[usize]| -> String {
            let mut s = String::from("n,evaluated");
            for name in &self.param_names {
                s.push(',');
                s.push_str(name);
            }
            s.push('\n');
            s.push_str(&format!("{},{}", self.n, self.evaluated));
            for c in counts {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
            s
        };
        vec![
            (Estimator::HessianBased, panel(&self.counts.hessian_based)),
            (Estimator::Ops, panel(&self.counts.ops)),
            (Estimator::DemeanedOps, panel(&self.counts.demeaned_ops)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KernelFamily, KernelParams};

    fn j1_setup() -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::new(0, 1, 1, false, false, false, KernelFamily::Constant, 0).unwrap();
        let theta = ParamVector {
            mu: vec![0.5],
            gamma: vec![vec![]],
            sigma: vec![1.0],
            kernel: KernelParams::Constant { rows: vec![vec![1.0]] },
        };
        (spec, theta)
    }

    #[test]
    fn single_replication_counts_are_binary() {
        let (spec, theta) = j1_setup();
        let cfg = CoverageConfig {
            n: 80,
            replications: 1,
            seed: 7,
            starts: 1,
            ..CoverageConfig::default()
        };
        let rep = run_coverage(&spec, &theta, &cfg).unwrap();
        assert_eq!(rep.evaluated + rep.failed_fits, 1);
        for c in rep.counts.ops.iter().chain(&rep.counts.hessian_based) {
            assert!(*c <= 1);
        }
    }

    #[test]
    fn coverage_deterministic_across_jobs() {
        let (spec, theta) = j1_setup();
        let base = CoverageConfig {
            n: 60,
            replications: 6,
            seed: 3,
            starts: 1,
            ..CoverageConfig::default()
        };
        let a = run_coverage(&spec, &theta, &CoverageConfig { jobs: 1, ..base.clone() }).unwrap();
        let b = run_coverage(&spec, &theta, &CoverageConfig { jobs: 3, ..base }).unwrap();
        assert_eq!(a.counts.ops, b.counts.ops);
        assert_eq!(a.counts.hessian_based, b.counts.hessian_based);
        assert_eq!(a.failed_fits, b.failed_fits);
        assert_eq!(a.csv_panels()[1].1, b.csv_panels()[1].1);
    }

    #[test]
    fn wider_level_never_loses_coverage() {
        let (spec, theta) = j1_setup();
        let base = CoverageConfig {
            n: 60,
            replications: 8,
            seed: 11,
            starts: 1,
            ..CoverageConfig::default()
        };
        let narrow = run_coverage(&spec, &theta, &base.clone()).unwrap();
        let wide = run_coverage(
            &spec,
            &theta,
            &CoverageConfig {
                level: 0.9999,
                ..base
            },
        )
        .unwrap();
        for (w, n) in wide.counts.ops.iter().zip(&narrow.counts.ops) {
            assert!(w >= n);
        }
    }
}
