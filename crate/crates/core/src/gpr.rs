//! Gaussian process regression from subset average metric to equivalence
//! proportion.
//!
//! Zero-mean prior with a squared-exponential kernel
//! `k(u, v) = s² exp(-(u - v)² / (2ℓ²))`. Hyperparameters come from a fixed
//! grid, picking the combination with the highest log marginal likelihood.
//! Each training point may carry a noise scale that multiplies `σ_n²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datamodel::GaussianEstimate;
use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl KernelParams {
    pub fn kernel(&self, u: f64, v: f64) -> f64 {
        let d = u - v;
        self.signal_var * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    fn validate(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.length_scale > 0.0 && self.noise_var >= 0.0) {
            return Err(Error::Config(format!("invalid kernel parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub length_scales: Vec<f64>,
    pub signal_vars: Vec<f64>,
    pub noise_vars: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            length_scales: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
            signal_vars: vec![0.01, 0.05, 0.1, 0.25],
            noise_vars: vec![1e-6, 1e-4, 1e-3, 1e-2],
        }
    }
}

impl HyperGrid {
    fn candidates(&self) -> impl Iterator<Item = KernelParams> + '_ {
        self.length_scales.iter().flat_map(move |&l| {
            self.signal_vars.iter().flat_map(move |&s| {
                self.noise_vars.iter().map(move |&n| KernelParams {
                    signal_var: s,
                    length_scale: l,
                    noise_var: n,
                })
            })
        })
    }
}

/// Posterior at one input. `mean` is clamped to `[0,1]`; `raw_mean` is not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub raw_mean: f64,
    pub mean: f64,
    pub var: f64,
}

impl Posterior {
    pub fn estimate(&self) -> GaussianEstimate {
        GaussianEstimate::new(self.mean, self.var)
    }
}

#[derive(Debug, Clone)]
pub struct GprModel {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise_scales: Vec<f64>,
    params: KernelParams,
    /// Lower Cholesky factor of `K(V,V) + σ_n² diag(scales) + jitter I`.
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
    log_marginal: f64,
}

impl GprModel {
    /// Fits with the default hyperparameter grid.
    pub fn fit(inputs: &[f64], targets: &[f64]) -> Result<Self> {
        Self::fit_grid(inputs, targets, &HyperGrid::default())
    }

    pub fn fit_grid(inputs: &[f64], targets: &[f64], grid: &HyperGrid) -> Result<Self> {
        Self::fit_grid_scaled(inputs, targets, &vec![1.0; inputs.len()], grid)
    }

    /// Grid fit where point `i` has noise variance `σ_n² · noise_scales[i]`.
    pub fn fit_grid_scaled(
        inputs: &[f64],
        targets: &[f64],
        noise_scales: &[f64],
        grid: &HyperGrid,
    ) -> Result<Self> {
        check_training(inputs, targets)?;
        let mut best: Option<GprModel> = None;
        let mut last_err = None;
        for params in grid.candidates() {
            match Self::with_params_scaled(inputs, targets, noise_scales, params) {
                Ok(m) => {
                    if best.as_ref().is_none_or(|b| m.log_marginal > b.log_marginal) {
                        best = Some(m);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.ok_or_else(|| last_err.unwrap_or(Error::Config("empty hyperparameter grid".into())))
    }

    pub fn with_params(inputs: &[f64], targets: &[f64], params: KernelParams) -> Result<Self> {
        Self::with_params_scaled(inputs, targets, &vec![1.0; inputs.len()], params)
    }

    pub fn with_params_scaled(
        inputs: &[f64],
        targets: &[f64],
        noise_scales: &[f64],
        params: KernelParams,
    ) -> Result<Self> {
        check_training(inputs, targets)?;
        params.validate()?;
        if noise_scales.len() != inputs.len() || noise_scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("noise scales must be one non-negative value per input".into()));
        }
        let n = inputs.len();
        let base = DMatrix::from_fn(n, n, |i, j| {
            params.kernel(inputs[i], inputs[j]) + if i == j { params.noise_var * noise_scales[i] } else { 0.0 }
        });
        let scale = base.trace() / n as f64;
        let mut jitter = 0.0;
        let chol = loop {
            let mut k = base.clone();
            for i in 0..n {
                k[(i, i)] += jitter;
            }
            if let Some(c) = k.cholesky() {
                break c;
            }
            jitter = if jitter == 0.0 {
                JITTER_START * scale
            } else {
                jitter * 2.0
            };
            if jitter > JITTER_MAX * scale {
                return Err(Error::SingularKernel { jitter });
            }
        };
        let y = DVector::from_column_slice(targets);
        let alpha = chol.solve(&y);
        let chol_l = chol.l();
        let log_det_half: f64 = (0..n).map(|i| chol_l[(i, i)].ln()).sum();
        let log_marginal = -0.5 * y.dot(&alpha)
            - log_det_half
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GprModel {
            inputs: inputs.to_vec(),
            targets: targets.to_vec(),
            noise_scales: noise_scales.to_vec(),
            params,
            chol_l,
            alpha,
            jitter,
            log_marginal,
        })
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn noise_scales(&self) -> &[f64] {
        &self.noise_scales
    }

    fn cross(&self, v: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|&u| self.params.kernel(v, u)),
        )
    }

    /// `L⁻¹ K(V, v)`; posterior covariances are `k(a,b) - proj(a)·proj(b)`.
    pub fn projection(&self, v: f64) -> DVector<f64> {
        self.chol_l
            .solve_lower_triangular(&self.cross(v))
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn prior_var(&self) -> f64 {
        self.params.signal_var
    }

    pub fn posterior(&self, v: f64) -> Posterior {
        let raw_mean = self.cross(v).dot(&self.alpha);
        let p = self.projection(v);
        let var = (self.params.kernel(v, v) - p.dot(&p)).max(0.0);
        Posterior {
            raw_mean,
            mean: raw_mean.clamp(0.0, 1.0),
            var,
        }
    }

    pub fn posterior_cov(&self, a: f64, b: f64) -> f64 {
        let pa = self.projection(a);
        if a == b {
            return (self.params.kernel(a, a) - pa.dot(&pa)).max(0.0);
        }
        let pb = self.projection(b);
        self.params.kernel(a, b) - pa.dot(&pb)
    }

    /// Writes `(v, mean, var)` rows over an even grid, for plotting.
    pub fn curve_csv(&self, lo: f64, hi: f64, steps: usize) -> String {
        let mut out = String::from("v,mean,var\n");
        for i in 0..=steps {
            let v = lo + (hi - lo) * i as f64 / steps.max(1) as f64;
            let p = self.posterior(v);
            out.push_str(&format!("{v},{},{}\n", p.raw_mean, p.var));
        }
        out
    }
}

fn check_training(inputs: &[f64], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Config(format!(
            "GPR needs equal, non-empty training vectors (got {} and {})",
            inputs.len(),
            targets.len()
        )));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("GPR targets must be proportions in [0,1]".into()));
    }
    Ok(())
}
