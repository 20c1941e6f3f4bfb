//! File formats: spec files (TOML or JSON), data CSV, fit-result JSON,
//! smoothed-probability CSV, and the coverage tables.
//!
//! Conventions: regime labels are 1-based in every file (internal indices are
//! 0-based); every output starts with a `#`-prefixed schema-version line;
//! data rows are indexed by `t` with the `p` conditioning observations at
//! t = -p+1..0 carrying empty covariate/regime cells.

use crate::filter::SmootherResult;
use crate::inference::{CovarianceBundle, Estimator, IntervalSet};
use crate::model::{param_names, Dataset, KernelFamily, ModelSpec, ParamVector};
use crate::montecarlo::CoverageReport;
use crate::optimize::{FitResult, StartReport};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// On-disk model specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub d: usize,
    pub switch_mean: bool,
    pub switch_ar: bool,
    pub switch_var: bool,
    #[serde(default)]
    pub covariate_dim: usize,
    pub kernel: KernelSection,
    /// Optional parameter values (required by `simulate` and `coverage`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSection {
    pub family: KernelFamily,
}

impl SpecFile {
    pub fn to_model(&self) -> Result<(ModelSpec, Option<ParamVector>)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let spec = ModelSpec::new(
            self.k,
            self.j,
            self.d,
            self.switch_mean,
            self.switch_ar,
            self.switch_var,
            self.kernel.family,
            self.covariate_dim,
        )?;
        if let Some(theta) = &self.params {
            theta.validate(&spec)?;
        }
        Ok((spec, self.params.clone()))
    }

    pub fn from_model(spec: &ModelSpec, theta: Option<&ParamVector>) -> Self {
        SpecFile {
            schema_version: SCHEMA_VERSION,
            k: spec.k,
            j: spec.j,
            d: spec.d,
            switch_mean: spec.switch_mean,
            switch_ar: spec.switch_ar,
            switch_var: spec.switch_var,
            covariate_dim: spec.covariate_dim,
            kernel: KernelSection {
                family: spec.kernel.family,
            },
            params: theta.cloned(),
        }
    }
}

/// Loads a spec file; the format is chosen by extension (`.toml` / `.json`),
/// with a JSON-then-TOML fallback for anything else.
pub fn load_spec_file(path: &Path) -> Result<(ModelSpec, Option<ParamVector>)> {
    let text = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let file: SpecFile = match ext {
        "toml" => toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        "json" => serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        _ => serde_json::from_str(&text)
            .or_else(|_| toml::from_str(&text))
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
    };
    file.to_model()
}

pub fn save_spec_file(path: &Path, spec: &ModelSpec, theta: Option<&ParamVector>) -> Result<()> {
    let file = SpecFile::from_model(spec, theta);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let text = if ext == "toml" {
        toml::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?
    } else {
        serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes `t,y[,x1..xm][,regime]` with the schema-version comment line.
/// Regime labels are written 1-based.
pub fn write_data_csv(
    path: &Path,
    spec: &ModelSpec,
    data: &Dataset,
    regimes: Option<&[u8]>,
) -> Result<()> {
    let n = data.n(spec);
    let mut out = String::new();
    out.push_str(&format!("# tvtp-data schema_version={SCHEMA_VERSION}\n"));
    out.push_str("t,y");
    for m in 1..=spec.covariate_dim {
        out.push_str(&format!(",x{m}"));
    }
    if regimes.is_some() {
        out.push_str(",regime");
    }
    out.push('\n');
    for t in (1 - spec.p as i64)..=(n as i64) {
        out.push_str(&format!("{t},{:.17e}", data.y_at(spec, t)));
        if t >= 1 {
            for v in data.x_at(spec, t as usize) {
                out.push_str(&format!(",{v:.17e}"));
            }
            if let Some(r) = regimes {
                out.push_str(&format!(",{}", r[(t - 1) as usize] + 1));
            }
        } else {
            for _ in 0..spec.covariate_dim {
                out.push(',');
            }
            if regimes.is_some() {
                out.push(',');
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a data CSV (tolerating `#` comment lines) into a dataset; returns
/// the true regime path when a `regime` column is present.
pub fn read_data_csv(path: &Path, spec: &ModelSpec) -> Result<(Dataset, Option<Vec<u8>>)> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(body.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let t_col = col("t").ok_or_else(|| Error::Parse("missing column 't'".into()))?;
    let y_col = col("y").ok_or_else(|| Error::Parse("missing column 'y'".into()))?;
    let x_cols: Vec<usize> = (1..=spec.covariate_dim)
        .map(|m| col(&format!("x{m}")).ok_or_else(|| Error::Parse(format!("missing column 'x{m}'"))))
        .collect::<Result<_>>()?;
    let regime_col = col("regime");
    let mut rows: Vec<(i64, f64, Vec<f64>, Option<u8>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let t: i64 = field(t_col)
            .parse()
            .map_err(|_| Error::Parse(format!("bad t value '{}'", field(t_col))))?;
        let y: f64 = field(y_col)
            .parse()
            .map_err(|_| Error::Parse(format!("bad y value at t={t}")))?;
        let xs: Vec<f64> = if t >= 1 {
            x_cols
                .iter()
                .map(|&c| {
                    field(c)
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad covariate at t={t}")))
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let regime = match regime_col {
            Some(c) if t >= 1 && !field(c).is_empty() => {
                let r: usize = field(c)
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad regime at t={t}")))?;
                if r < 1 || r > spec.j {
                    return Err(Error::Parse(format!("regime {r} out of range at t={t}")));
                }
                Some((r - 1) as u8)
            }
            _ => None,
        };
        rows.push((t, y, xs, regime));
    }
    rows.sort_by_key(|r| r.0);
    let pre = rows.iter().filter(|r| r.0 <= 0).count();
    if pre != spec.p {
        return Err(Error::InvalidData(format!(
            "found {pre} conditioning rows (t <= 0), model needs p = {}",
            spec.p
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        let expect = 1 - spec.p as i64 + i as i64;
        if r.0 != expect {
            return Err(Error::InvalidData(format!(
                "non-contiguous t: expected {expect}, found {}",
                r.0
            )));
        }
    }
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let x: Vec<Vec<f64>> = rows.iter().filter(|r| r.0 >= 1).map(|r| r.2.clone()).collect();
    let regimes: Vec<u8> = rows.iter().filter_map(|r| r.3).collect();
    let n = rows.len() - spec.p;
    let regimes = if regimes.len() == n { Some(regimes) } else { None };
    let data = Dataset::new(y, x, spec)?;
    Ok((data, regimes))
}

/// Smoothed probabilities: `t,state_1..state_{J^d},regime_1..regime_J`.
pub fn write_smoothed_csv(path: &Path, spec: &ModelSpec, sm: &SmootherResult) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# tvtp-smoothed schema_version={SCHEMA_VERSION}\n"));
    out.push('t');
    for s in 1..=spec.n_states() {
        out.push_str(&format!(",state_{s}"));
    }
    for r in 1..=spec.j {
        out.push_str(&format!(",regime_{r}"));
    }
    out.push('\n');
    for (t, (states, regs)) in sm.smoothed.iter().zip(&sm.base_marginals).enumerate() {
        out.push_str(&format!("{}", t + 1));
        for v in states.iter().chain(regs.iter()) {
            out.push_str(&format!(",{v:.12}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Standard errors per estimator (None when the estimator is invalid).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeTable {
    pub hessian_based: Option<Vec<f64>>,
    pub ops: Vec<f64>,
    pub demeaned_ops: Vec<f64>,
}

/// Serialized fit result; self-contained for round-tripping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultFile {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub spec: SpecFile,
    pub theta: ParamVector,
    pub param_names: Vec<String>,
    pub theta_econ: Vec<f64>,
    pub loglik: f64,
    pub se: SeTable,
    pub intervals: IntervalSet,
    pub hessian_valid: bool,
    pub covariance: CovarianceBundle,
    pub starts: Vec<StartReport>,
    pub best_start: usize,
    pub grad_norm: f64,
}

impl FitResultFile {
    pub fn from_fit(spec: &ModelSpec, fit: &FitResult) -> Self {
        FitResultFile {
            schema_version: SCHEMA_VERSION,
            spec: SpecFile::from_model(spec, None),
            theta: fit.theta.clone(),
            param_names: param_names(spec),
            theta_econ: fit.theta_econ.clone(),
            loglik: fit.loglik,
            se: SeTable {
                hessian_based: fit.covariance.standard_errors(Estimator::HessianBased),
                ops: fit.covariance.standard_errors(Estimator::Ops).unwrap(),
                demeaned_ops: fit
                    .covariance
                    .standard_errors(Estimator::DemeanedOps)
                    .unwrap(),
            },
            intervals: fit.intervals.clone(),
            hessian_valid: fit.covariance.hessian_valid,
            covariance: fit.covariance.clone(),
            starts: fit.starts.clone(),
            best_start: fit.best_start,
            grad_norm: fit.grad_norm,
        }
    }
}

pub fn save_fit_result(path: &Path, spec: &ModelSpec, fit: &FitResult) -> Result<()> {
    let file = FitResultFile::from_fit(spec, fit);
    let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_fit_result(path: &Path) -> Result<(ModelSpec, ParamVector, FitResultFile)> {
    let text = std::fs::read_to_string(path)?;
    let file: FitResultFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let (spec, _) = file.spec.to_model()?;
    file.theta.validate(&spec)?;
    Ok((spec, file.theta.clone(), file))
}

/// Writes one coverage CSV per estimator (`<prefix>_<estimator>.csv`) and
/// returns the paths, in a fixed order.
pub fn write_coverage_csvs(prefix: &Path, report: &CoverageReport) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (est, body) in report.csv_panels() {
        let tag = match est {
            Estimator::HessianBased => "hessian",
            Estimator::Ops => "ops",
            Estimator::DemeanedOps => "demeaned_ops",
        };
        let path = PathBuf::from(format!("{}_{tag}.csv", prefix.display()));
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "# tvtp-coverage schema_version={SCHEMA_VERSION}")?;
        f.write_all(body.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn save_coverage_json(path: &Path, report: &CoverageReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelParams;
    use tempfile::tempdir;

    fn logistic_spec() -> (ModelSpec, ParamVector) {
        let spec = ModelSpec::new(1, 2, 2, true, false, false, KernelFamily::Logistic, 1).unwrap();
        let theta = ParamVector {
            mu: vec![-1.0, 1.0],
            gamma: vec![vec![0.3]],
            sigma: vec![0.5],
            kernel: KernelParams::Link {
                coef: vec![vec![vec![1.2, 0.4]], vec![vec![-0.8, 0.1]]],
            },
        };
        (spec, theta)
    }

    #[test]
    fn spec_round_trip_toml_and_json() {
        let (spec, theta) = logistic_spec();
        let dir = tempdir().unwrap();
        for name in ["spec.toml", "spec.json"] {
            let path = dir.path().join(name);
            save_spec_file(&path, &spec, Some(&theta)).unwrap();
            let (spec2, theta2) = load_spec_file(&path).unwrap();
            assert_eq!(spec, spec2, "{name}");
            assert_eq!(theta, theta2.unwrap(), "{name}");
        }
    }

    #[test]
    fn data_csv_round_trip_with_regimes() {
        let (spec, _) = logistic_spec();
        let y = vec![0.1, 0.5, -0.2, 0.9, 0.3]; // p=1 conditioning + n=4
        let x = vec![vec![0.2], vec![-0.1], vec![0.0], vec![0.7]];
        let data = Dataset::new(y.clone(), x.clone(), &spec).unwrap();
        let regimes = vec![0u8, 1, 1, 0];
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_data_csv(&path, &spec, &data, Some(&regimes)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# tvtp-data schema_version=1\n"));
        assert!(text.contains("t,y,x1,regime"));
        let (data2, regimes2) = read_data_csv(&path, &spec).unwrap();
        for (a, b) in data.y.iter().zip(&data2.y) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(regimes2.unwrap(), regimes);
    }

    #[test]
    fn data_csv_missing_conditioning_rows_rejected() {
        let (spec, _) = logistic_spec();
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,y,x1\n1,0.5,0.2\n2,0.1,0.3\n").unwrap();
        assert!(read_data_csv(&path, &spec).is_err());
    }

    #[test]
    fn fit_result_round_trip() {
        use crate::optimize::{fit, FitConfig};
        let spec = ModelSpec::new(0, 1, 1, false, false, false, KernelFamily::Constant, 0).unwrap();
        let y: Vec<f64> = (0..120).map(|i| ((i * 37 % 17) as f64 - 8.0) / 4.0).collect();
        let data = Dataset::new(y, vec![], &spec).unwrap();
        let res = fit(&spec, &data, &FitConfig::default()).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("fit.json");
        save_fit_result(&path, &spec, &res).unwrap();
        let (spec2, theta2, file) = load_fit_result(&path).unwrap();
        assert_eq!(spec, spec2);
        let ll = crate::inference::loglik(
            &spec2,
            &theta2,
            &data,
            crate::filter::S0Policy::default(),
        )
        .unwrap();
        assert!((ll - file.loglik).abs() < 1e-9);
    }
}
