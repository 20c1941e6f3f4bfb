//! Model specification, the expanded regime space, and the mapping between
//! economic parameters and the unconstrained optimization vector.
//!
//! Regime labels are 1-based in all I/O; internal indices are 0-based.
//! Expanded states are `d`-tuples of base regimes ordered newest first and
//! enumerated lexicographically, so the newest component is the most
//! significant digit of the state index.

use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Transition-kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Constant row-stochastic matrix (basic Markov switching).
    Constant,
    /// Logistic link on intercept + covariates, one coefficient row per
    /// (origin regime, target slot).
    Logistic,
    /// Probit link, same coefficient layout as `Logistic`.
    Probit,
    /// Autoregressive latent factor crossed with a threshold; innovations
    /// correlated with the lagged observation shock.
    LatentFactor,
}

/// Structural description of the transition kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionKernelSpec {
    pub family: KernelFamily,
}

/// Structural description of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// AR order.
    pub k: usize,
    /// Number of base regimes.
    pub j: usize,
    /// Regime-lag depth entering the conditional density.
    pub d: usize,
    /// Observation-lag depth (`k` for AR models, `k + 1` for the
    /// latent-factor kernel).
    pub p: usize,
    pub switch_mean: bool,
    pub switch_ar: bool,
    pub switch_var: bool,
    pub kernel: TransitionKernelSpec,
    pub covariate_dim: usize,
}

impl ModelSpec {
    /// Builds a spec with `p` derived from the kernel family and validates it.
    pub fn new(
        k: usize,
        j: usize,
        d: usize,
        switch_mean: bool,
        switch_ar: bool,
        switch_var: bool,
        family: KernelFamily,
        covariate_dim: usize,
    ) -> Result<Self> {
        let p = if family == KernelFamily::LatentFactor {
            k + 1
        } else {
            k
        };
        let spec = ModelSpec {
            k,
            j,
            d,
            p,
            switch_mean,
            switch_ar,
            switch_var,
            kernel: TransitionKernelSpec { family },
            covariate_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j < 1 {
            return Err(Error::InvalidSpec("J must be >= 1".into()));
        }
        if self.d < 1 {
            return Err(Error::InvalidSpec("d must be >= 1".into()));
        }
        if self.p < self.k {
            return Err(Error::InvalidSpec(format!(
                "p (= {}) must be >= k (= {})",
                self.p, self.k
            )));
        }
        if self.switch_mean && self.k > 0 && self.d < self.k + 1 {
            return Err(Error::InvalidSpec(format!(
                "switching mean with k = {} requires d >= {} (regime-demeaned AR lags)",
                self.k,
                self.k + 1
            )));
        }
        if self.kernel.family == KernelFamily::LatentFactor {
            if self.j != 2 {
                return Err(Error::InvalidSpec("latent-factor kernel requires J = 2".into()));
            }
            if self.d != self.k + 1 || self.p != self.k + 1 {
                return Err(Error::InvalidSpec(format!(
                    "latent-factor kernel requires d = p = k + 1 (got d = {}, p = {})",
                    self.d, self.p
                )));
            }
        }
        Ok(())
    }

    /// Number of expanded states J^d.
    pub fn n_states(&self) -> usize {
        self.j.pow(self.d as u32)
    }

    /// Length of the flat parameter vector.
    pub fn dim(&self) -> usize {
        let mu = if self.switch_mean { self.j } else { 1 };
        let gamma = self.k * if self.switch_ar { self.j } else { 1 };
        let sigma = if self.switch_var { self.j } else { 1 };
        let kernel = match self.kernel.family {
            KernelFamily::Constant => self.j * (self.j - 1),
            KernelFamily::Logistic | KernelFamily::Probit => {
                self.j * (self.j - 1) * (1 + self.covariate_dim)
            }
            KernelFamily::LatentFactor => 3,
        };
        mu + gamma + sigma + kernel
    }
}

/// Kernel-specific parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelParams {
    /// `rows[i][j]` = P(target j | origin i); each row is a probability vector.
    Constant { rows: Vec<Vec<f64>> },
    /// `coef[i][j]` is the coefficient row (intercept first) for target slot
    /// `j` of origin `i` in the stick-breaking construction. For J = 2 this
    /// is the textbook single row per origin giving P(target 1 | origin i).
    Link { coef: Vec<Vec<Vec<f64>>> },
    /// Latent AR(1) factor with threshold `tau` and innovation correlation
    /// `rho` with the lagged observation shock.
    LatentFactor { alpha: f64, tau: f64, rho: f64 },
}

/// Economic parameter vector.
///
/// `mu`, `gamma` (rows of length k), and `sigma` have J entries when the
/// corresponding feature switches and a single shared entry otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub mu: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub kernel: KernelParams,
}

impl ParamVector {
    #[inline]
    pub fn mu_of(&self, regime: usize) -> f64 {
        if self.mu.len() > 1 {
            self.mu[regime]
        } else {
            self.mu[0]
        }
    }

    #[inline]
    pub fn gamma_of(&self, regime: usize) -> &[f64] {
        if self.gamma.len() > 1 {
            &self.gamma[regime]
        } else {
            &self.gamma[0]
        }
    }

    #[inline]
    pub fn sigma_of(&self, regime: usize) -> f64 {
        if self.sigma.len() > 1 {
            self.sigma[regime]
        } else {
            self.sigma[0]
        }
    }

    /// Checks domain validity against `spec`.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let expect = |name: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::InvalidParam(format!(
                    "{name}: expected {want} entries, got {got}"
                )));
            }
            Ok(())
        };
        expect("mu", self.mu.len(), if spec.switch_mean { spec.j } else { 1 })?;
        expect("gamma", self.gamma.len(), if spec.switch_ar { spec.j } else { 1 })?;
        for g in &self.gamma {
            expect("gamma row", g.len(), spec.k)?;
        }
        expect("sigma", self.sigma.len(), if spec.switch_var { spec.j } else { 1 })?;
        for &s in &self.sigma {
            if !(s > 1e-10) || !s.is_finite() {
                return Err(Error::InvalidParam(format!("sigma must be positive, got {s}")));
            }
        }
        for &m in self.mu.iter().chain(self.gamma.iter().flatten()) {
            if !m.is_finite() {
                return Err(Error::NonFinite("mu/gamma".into()));
            }
        }
        match (&self.kernel, spec.kernel.family) {
            (KernelParams::Constant { rows }, KernelFamily::Constant) => {
                expect("kernel rows", rows.len(), spec.j)?;
                for row in rows {
                    expect("kernel row", row.len(), spec.j)?;
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidParam(format!(
                            "constant kernel row {row:?} is not a probability vector"
                        )));
                    }
                }
            }
            (KernelParams::Link { coef }, KernelFamily::Logistic | KernelFamily::Probit) => {
                expect("link coef origins", coef.len(), spec.j)?;
                for rows in coef {
                    expect("link coef targets", rows.len(), spec.j - 1)?;
                    for row in rows {
                        expect("link coef row", row.len(), 1 + spec.covariate_dim)?;
                        if row.iter().any(|c| !c.is_finite()) {
                            return Err(Error::NonFinite("link coefficients".into()));
                        }
                    }
                }
            }
            (KernelParams::LatentFactor { alpha, tau, rho }, KernelFamily::LatentFactor) => {
                if !(alpha.abs() < 1.0) {
                    return Err(Error::InvalidParam(format!("|alpha| must be < 1, got {alpha}")));
                }
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidParam(format!("|rho| must be < 1, got {rho}")));
                }
                if !tau.is_finite() {
                    return Err(Error::NonFinite("tau".into()));
                }
            }
            _ => {
                return Err(Error::InvalidParam(
                    "kernel parameter block does not match the spec's kernel family".into(),
                ))
            }
        }
        Ok(())
    }
}

/// Observed series. `y` has length n + p; the first p entries are
/// conditioning values (indices -p+1..0), the rest the estimation window
/// 1..n. `x[t-1]` is the covariate vector available for period t.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>, spec: &ModelSpec) -> Result<Self> {
        let ds = Dataset { y, x, labels: None };
        ds.validate(spec)?;
        Ok(ds)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.y.len() < spec.p {
            return Err(Error::InvalidData(format!(
                "y has {} values but p = {} conditioning values are required",
                self.y.len(),
                spec.p
            )));
        }
        let n = self.y.len() - spec.p;
        if spec.covariate_dim > 0 {
            if self.x.len() < n {
                return Err(Error::InvalidData(format!(
                    "x has {} rows but n = {n} are required",
                    self.x.len()
                )));
            }
            if self.x.iter().take(n).any(|r| r.len() != spec.covariate_dim) {
                return Err(Error::InvalidData("covariate row width mismatch".into()));
            }
        }
        if self.y.iter().any(|v| !v.is_finite())
            || self.x.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(())
    }

    /// Estimation-window length n.
    pub fn n(&self, spec: &ModelSpec) -> usize {
        self.y.len() - spec.p
    }

    /// Y_t for t in -p+1..=n.
    #[inline]
    pub fn y_at(&self, spec: &ModelSpec, t: i64) -> f64 {
        self.y[(t + spec.p as i64 - 1) as usize]
    }

    /// Ȳ_{t-1} = (Y_{t-1}, ..., Y_{t-p}), newest first, for t in 1..=n.
    pub fn y_lags(&self, spec: &ModelSpec, t: usize) -> Vec<f64> {
        (1..=spec.p)
            .map(|l| self.y_at(spec, t as i64 - l as i64))
            .collect()
    }

    /// Covariate row for period t (empty when the model has no covariates).
    #[inline]
    pub fn x_at(&self, spec: &ModelSpec, t: usize) -> &[f64] {
        if spec.covariate_dim == 0 {
            &[]
        } else {
            &self.x[t - 1]
        }
    }
}

/// Expanded state space: all J^d regime tuples in lexicographic order
/// (newest component first and most significant).
#[derive(Debug, Clone)]
pub struct ExpandedStates {
    pub j: usize,
    pub d: usize,
    /// `states[e]` = 0-based components (s̃_t, ..., s̃_{t-d+1}).
    pub states: Vec<Vec<u8>>,
}

/// Enumerates the expanded state space of `spec`.
pub fn expand_states(spec: &ModelSpec) -> ExpandedStates {
    let (j, d) = (spec.j, spec.d);
    let n = spec.n_states();
    let mut states = Vec::with_capacity(n);
    for e in 0..n {
        let mut comps = vec![0u8; d];
        let mut rem = e;
        for i in (0..d).rev() {
            comps[i] = (rem % j) as u8;
            rem /= j;
        }
        states.push(comps);
    }
    ExpandedStates { j, d, states }
}

impl ExpandedStates {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Lag consistency of the ordered pair: the last d-1 components of `to`
    /// must equal the first d-1 components of `from`.
    pub fn consistent(&self, from: usize, to: usize) -> bool {
        self.states[to][1..] == self.states[from][..self.d - 1]
    }

    /// Successor index reached from `from` by drawing base regime `new`
    /// (0-based): drop the oldest component and prepend `new`.
    #[inline]
    pub fn successor(&self, from: usize, new: usize) -> usize {
        new * self.j.pow(self.d as u32 - 1) + from / self.j
    }

    /// Newest base regime of state `e`.
    #[inline]
    pub fn base_regime(&self, e: usize) -> usize {
        self.states[e][0] as usize
    }
}

/// Conditional mean of Y_t given the expanded state components (newest
/// first) and the observation lags (newest first):
/// mu(s̃_t) + sum_j gamma_j(s̃_t) (Y_{t-j} - mu(s̃_{t-j})).
pub fn conditional_mean(
    spec: &ModelSpec,
    theta: &ParamVector,
    comps: &[u8],
    y_lags: &[f64],
) -> f64 {
    let cur = comps[0] as usize;
    let mut m = theta.mu_of(cur);
    let gamma = theta.gamma_of(cur);
    for jlag in 1..=spec.k {
        let lag_mu = if spec.switch_mean {
            theta.mu_of(comps[jlag] as usize)
        } else {
            theta.mu[0]
        };
        m += gamma[jlag - 1] * (y_lags[jlag - 1] - lag_mu);
    }
    m
}

/// Standardized residual of Y_{t-1} implied by the origin expanded state:
/// U_{t-1} = (Y_{t-1} - mean(...)) / sigma(s̃_{t-1}).
///
/// `origin` holds (s̃_{t-1}, ..., s̃_{t-d}) and `y_lags` holds
/// (Y_{t-1}, ..., Y_{t-p}); needs d >= k+1 and p >= k+1.
pub fn residual_u(spec: &ModelSpec, theta: &ParamVector, origin: &[u8], y_lags: &[f64]) -> f64 {
    let m = conditional_mean(spec, theta, origin, &y_lags[1..]);
    (y_lags[0] - m) / theta.sigma_of(origin[0] as usize)
}

// ---------------------------------------------------------------------------
// Flat parameterization
// ---------------------------------------------------------------------------
//
// Index map (documented order, shared by the economic and unconstrained
// vectors):
//   1. mu block                (J entries if switch_mean, else 1)       identity
//   2. gamma block, row major  (J*k if switch_ar, else k)               identity
//   3. sigma block             (J if switch_var, else 1)                log/exp
//   4. kernel block:
//        constant:      per origin row, p_{i1}..p_{i,J-1}               log-ratio vs p_{iJ}
//        logistic/probit: coef[i][j][l], origins outer                  identity
//        latent factor: alpha, tau, rho                                 atanh/id/atanh

/// Flattens `theta` to the economic coordinate vector.
pub fn to_econ(theta: &ParamVector, spec: &ModelSpec) -> Vec<f64> {
    let mut v = Vec::with_capacity(spec.dim());
    v.extend_from_slice(&theta.mu);
    for g in &theta.gamma {
        v.extend_from_slice(g);
    }
    v.extend_from_slice(&theta.sigma);
    match &theta.kernel {
        KernelParams::Constant { rows } => {
            for row in rows {
                v.extend_from_slice(&row[..spec.j - 1]);
            }
        }
        KernelParams::Link { coef } => {
            for rows in coef {
                for row in rows {
                    v.extend_from_slice(row);
                }
            }
        }
        KernelParams::LatentFactor { alpha, tau, rho } => {
            v.push(*alpha);
            v.push(*tau);
            v.push(*rho);
        }
    }
    debug_assert_eq!(v.len(), spec.dim());
    v
}

/// Rebuilds `ParamVector` from economic coordinates (inverse of [`to_econ`]).
pub fn from_econ(v: &[f64], spec: &ModelSpec) -> Result<ParamVector> {
    if v.len() != spec.dim() {
        return Err(Error::InvalidParam(format!(
            "expected {} coordinates, got {}",
            spec.dim(),
            v.len()
        )));
    }
    let mut pos = 0usize;
    let mut take = |len: usize| {
        let s = &v[pos..pos + len];
        pos += len;
        s.to_vec()
    };
    let mu = take(if spec.switch_mean { spec.j } else { 1 });
    let ngam = if spec.switch_ar { spec.j } else { 1 };
    let gamma: Vec<Vec<f64>> = (0..ngam).map(|_| take(spec.k)).collect();
    let sigma = take(if spec.switch_var { spec.j } else { 1 });
    let kernel = match spec.kernel.family {
        KernelFamily::Constant => {
            let rows = (0..spec.j)
                .map(|_| {
                    let mut row = take(spec.j - 1);
                    let last = 1.0 - row.iter().sum::<f64>();
                    row.push(last);
                    row
                })
                .collect();
            KernelParams::Constant { rows }
        }
        KernelFamily::Logistic | KernelFamily::Probit => {
            let coef = (0..spec.j)
                .map(|_| (0..spec.j - 1).map(|_| take(1 + spec.covariate_dim)).collect())
                .collect();
            KernelParams::Link { coef }
        }
        KernelFamily::LatentFactor => {
            let b = take(3);
            KernelParams::LatentFactor {
                alpha: b[0],
                tau: b[1],
                rho: b[2],
            }
        }
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

/// Coordinate-block transforms between the economic and unconstrained scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Identity(usize),
    Log(usize),
    Atanh(usize),
    /// One constant-kernel row: J-1 probabilities mapped to log-ratios
    /// against the implied last entry.
    SimplexRow(usize),
}

fn layout(spec: &ModelSpec) -> Vec<Block> {
    let mut blocks = Vec::new();
    blocks.push(Block::Identity(if spec.switch_mean { spec.j } else { 1 }));
    let ngam = if spec.switch_ar { spec.j } else { 1 };
    if spec.k > 0 {
        blocks.push(Block::Identity(ngam * spec.k));
    }
    blocks.push(Block::Log(if spec.switch_var { spec.j } else { 1 }));
    match spec.kernel.family {
        KernelFamily::Constant => {
            for _ in 0..spec.j {
                blocks.push(Block::SimplexRow(spec.j - 1));
            }
        }
        KernelFamily::Logistic | KernelFamily::Probit => {
            blocks.push(Block::Identity(spec.j * (spec.j - 1) * (1 + spec.covariate_dim)));
        }
        KernelFamily::LatentFactor => {
            blocks.push(Block::Atanh(1));
            blocks.push(Block::Identity(1));
            blocks.push(Block::Atanh(1));
        }
    }
    blocks
}

/// Maps `theta` to the unconstrained optimization vector.
pub fn pack(theta: &ParamVector, spec: &ModelSpec) -> Result<Vec<f64>> {
    theta.validate(spec)?;
    let econ = to_econ(theta, spec);
    let mut v = Vec::with_capacity(econ.len());
    let mut pos = 0usize;
    for block in layout(spec) {
        match block {
            Block::Identity(len) => {
                v.extend_from_slice(&econ[pos..pos + len]);
                pos += len;
            }
            Block::Log(len) => {
                for &e in &econ[pos..pos + len] {
                    v.push(e.ln());
                }
                pos += len;
            }
            Block::Atanh(len) => {
                for &e in &econ[pos..pos + len] {
                    v.push(e.atanh());
                }
                pos += len;
            }
            Block::SimplexRow(len) => {
                let row = &econ[pos..pos + len];
                let last = 1.0 - row.iter().sum::<f64>();
                if !(last > 0.0) || row.iter().any(|&p| !(p > 0.0)) {
                    return Err(Error::InvalidParam(
                        "constant kernel row must be strictly interior to the simplex".into(),
                    ));
                }
                for &p in row {
                    v.push((p / last).ln());
                }
                pos += len;
            }
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("packed vector".into()));
    }
    Ok(v)
}

/// Inverse of [`pack`].
pub fn unpack(v: &[f64], spec: &ModelSpec) -> Result<ParamVector> {
    if v.len() != spec.dim() {
        return Err(Error::InvalidParam(format!(
            "expected {} coordinates, got {}",
            spec.dim(),
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("unconstrained vector".into()));
    }
    let mut econ = Vec::with_capacity(v.len());
    let mut pos = 0usize;
    for block in layout(spec) {
        match block {
            Block::Identity(len) => {
                econ.extend_from_slice(&v[pos..pos + len]);
                pos += len;
            }
            Block::Log(len) => {
                for &x in &v[pos..pos + len] {
                    econ.push(x.exp());
                }
                pos += len;
            }
            Block::Atanh(len) => {
                for &x in &v[pos..pos + len] {
                    econ.push(x.tanh());
                }
                pos += len;
            }
            Block::SimplexRow(len) => {
                // softmax against an implicit 0 score for the last entry
                let scores = &v[pos..pos + len];
                let m = scores.iter().cloned().fold(0.0f64, f64::max);
                let denom: f64 = scores.iter().map(|&s| (s - m).exp()).sum::<f64>() + (-m).exp();
                for &s in scores {
                    econ.push((s - m).exp() / denom);
                }
                pos += len;
            }
        }
    }
    from_econ(&econ, spec)
}

/// Jacobian d(unconstrained)/d(economic) at `theta`, block diagonal.
pub fn pack_jacobian(theta: &ParamVector, spec: &ModelSpec) -> DMatrix<f64> {
    let econ = to_econ(theta, spec);
    let dim = econ.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut pos = 0usize;
    for block in layout(spec) {
        match block {
            Block::Identity(len) => {
                for i in pos..pos + len {
                    jac[(i, i)] = 1.0;
                }
                pos += len;
            }
            Block::Log(len) => {
                for i in pos..pos + len {
                    jac[(i, i)] = 1.0 / econ[i];
                }
                pos += len;
            }
            Block::Atanh(len) => {
                for i in pos..pos + len {
                    jac[(i, i)] = 1.0 / (1.0 - econ[i] * econ[i]);
                }
                pos += len;
            }
            Block::SimplexRow(len) => {
                let row = &econ[pos..pos + len];
                let last = 1.0 - row.iter().sum::<f64>();
                // v_j = ln p_j - ln p_last, so dv_j/dp_m = δ_jm/p_j + 1/p_last
                for jj in 0..len {
                    for mm in 0..len {
                        let mut g = 1.0 / last;
                        if jj == mm {
                            g += 1.0 / row[jj];
                        }
                        jac[(pos + jj, pos + mm)] = g;
                    }
                }
                pos += len;
            }
        }
    }
    jac
}

/// Human-readable parameter names aligned with the flat index map.
pub fn param_names(spec: &ModelSpec) -> Vec<String> {
    let mut names = Vec::with_capacity(spec.dim());
    if spec.switch_mean {
        for j in 1..=spec.j {
            names.push(format!("mu({j})"));
        }
    } else {
        names.push("mu".into());
    }
    let ngam = if spec.switch_ar { spec.j } else { 1 };
    for r in 0..ngam {
        for l in 1..=spec.k {
            if spec.switch_ar {
                names.push(format!("gamma_{l}({})", r + 1));
            } else {
                names.push(format!("gamma_{l}"));
            }
        }
    }
    if spec.switch_var {
        for j in 1..=spec.j {
            names.push(format!("sigma({j})"));
        }
    } else {
        names.push("sigma".into());
    }
    match spec.kernel.family {
        KernelFamily::Constant => {
            for i in 1..=spec.j {
                for j in 1..spec.j {
                    names.push(format!("q({i},{j})"));
                }
            }
        }
        KernelFamily::Logistic | KernelFamily::Probit => {
            for i in 1..=spec.j {
                for j in 1..spec.j {
                    for l in 0..=spec.covariate_dim {
                        if spec.j == 2 {
                            names.push(format!("beta_{i}{l}"));
                        } else {
                            names.push(format!("beta_{i}.{j}.{l}"));
                        }
                    }
                }
            }
        }
        KernelFamily::LatentFactor => {
            names.push("alpha".into());
            names.push("tau".into());
            names.push("rho".into());
        }
    }
    names
}

/// Relabels regimes so that mu(1) < mu(2) < ...; ties broken by sigma
/// ascending, then by original label. Returns the relabeled parameters and
/// the permutation `perm` with `perm[new] = old`.
///
/// The kernel block is permuted consistently. For logistic/probit kernels
/// this is only expressible inside the parametric family when J = 2 (swap
/// origin rows and negate, since the link satisfies link(-z) = 1 - link(z));
/// larger J with a non-identity permutation is reported as unsupported.
pub fn relabel_regimes(theta: &ParamVector, spec: &ModelSpec) -> Result<(ParamVector, Vec<usize>)> {
    let identity: Vec<usize> = (0..spec.j).collect();
    if !spec.switch_mean || spec.j < 2 {
        return Ok((theta.clone(), identity));
    }
    let mut perm = identity.clone();
    perm.sort_by(|&a, &b| {
        theta.mu[a]
            .partial_cmp(&theta.mu[b])
            .unwrap()
            .then(theta.sigma_of(a).partial_cmp(&theta.sigma_of(b)).unwrap())
            .then(a.cmp(&b))
    });
    if perm == identity {
        return Ok((theta.clone(), perm));
    }
    let mut out = theta.clone();
    out.mu = perm.iter().map(|&o| theta.mu[o]).collect();
    if spec.switch_ar {
        out.gamma = perm.iter().map(|&o| theta.gamma[o].clone()).collect();
    }
    if spec.switch_var {
        out.sigma = perm.iter().map(|&o| theta.sigma[o]).collect();
    }
    out.kernel = match &theta.kernel {
        KernelParams::Constant { rows } => {
            let new_rows = perm
                .iter()
                .map(|&oi| perm.iter().map(|&oj| rows[oi][oj]).collect())
                .collect();
            KernelParams::Constant { rows: new_rows }
        }
        KernelParams::Link { coef } => {
            if spec.j != 2 {
                return Err(Error::Unsupported(
                    "relabeling a logistic/probit kernel with J > 2".into(),
                ));
            }
            // swapped labels: P'(target 1 | origin i) = 1 - P(target 1 | origin perm[i])
            let new_coef = perm
                .iter()
                .map(|&oi| vec![coef[oi][0].iter().map(|c| -c).collect()])
                .collect();
            KernelParams::Link { coef: new_coef }
        }
        KernelParams::LatentFactor { alpha, tau, rho } => {
            // complementing the regime indicator mirrors the latent factor:
            // W -> -W, so tau -> -tau and rho -> -rho
            KernelParams::LatentFactor {
                alpha: *alpha,
                tau: -tau,
                rho: -rho,
            }
        }
    };
    Ok((out, perm))
}
