//! Limiting Gaussian processes of the integrated periodogram and the
//! quantiles of their sup and squared-integral functionals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extremal::{fourth_order_extremogram, sample_extremogram, IndicatorSeries};
use crate::igram::{sup_abs, trapezoid};
use crate::rng::{stream_rng, StreamPurpose};
use crate::scalar::order_statistic;
use crate::spectral::{psi_curve, WeightFunction};

/// Default truncation of the bridge series.
pub const BRIDGE_TRUNCATION: usize = 10_000;
/// Default truncation for a supplied covariance over lags `0..=H`.
pub const GENERAL_TRUNCATION: usize = 200;
/// Default number of draws behind a limit-law quantile.
pub const LIMIT_REPS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LimitKind {
    /// `(Z_0, ..., Z_H) ~ N(0, cov)`; path `psi_0 Z_0 + 2 sum psi_h Z_h`.
    GeneralG { cov: DMatrix<f64> },
    /// `(Z_1, ..., Z_H) ~ N(0, cov)`; path `2 sum psi_{eta+h} Z_h`.
    EtaBar { eta: usize, cov: DMatrix<f64> },
    /// Independent `Z_h` with variances `v_1..v_H`; path `2 sum psi_h Z_h`.
    IndependentHat { variances: Vec<f64> },
    /// Iid `Z_h ~ N(0, sigma^2)`; path `2 sum_{h <= H} psi_h Z_h`.
    Bridge { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitProcessSpec {
    pub kind: LimitKind,
    pub truncation: usize,
    pub g: WeightFunction<f64>,
    pub grid: Vec<f64>,
}

impl LimitProcessSpec {
    pub fn bridge(sigma: f64, truncation: usize, grid: Vec<f64>) -> Self {
        LimitProcessSpec {
            kind: LimitKind::Bridge { sigma },
            truncation,
            g: WeightFunction::One,
            grid,
        }
    }

    pub fn general(cov: DMatrix<f64>, g: WeightFunction<f64>, grid: Vec<f64>) -> Self {
        let truncation = cov.nrows().saturating_sub(1);
        LimitProcessSpec {
            kind: LimitKind::GeneralG { cov },
            truncation,
            g,
            grid,
        }
    }

    pub fn eta_bar(eta: usize, cov: DMatrix<f64>, g: WeightFunction<f64>, grid: Vec<f64>) -> Self {
        let truncation = cov.nrows();
        LimitProcessSpec {
            kind: LimitKind::EtaBar { eta, cov },
            truncation,
            g,
            grid,
        }
    }

    pub fn independent_hat(variances: Vec<f64>, g: WeightFunction<f64>, grid: Vec<f64>) -> Self {
        let truncation = variances.len();
        LimitProcessSpec {
            kind: LimitKind::IndependentHat { variances },
            truncation,
            g,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(Error::InvalidParameter("truncation H must be at least 1".into()));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|&x| !(0.0..=PI).contains(&x)) {
            return Err(Error::InvalidParameter("grid must be strictly increasing inside [0, pi]".into()));
        }
        match &self.kind {
            LimitKind::GeneralG { cov } => {
                expect_dim(cov, self.truncation + 1)?;
                check_psd(cov)
            }
            LimitKind::EtaBar { cov, .. } => {
                expect_dim(cov, self.truncation)?;
                check_psd(cov)
            }
            LimitKind::IndependentHat { variances } => {
                if variances.len() != self.truncation {
                    return Err(Error::InvalidParameter("need one variance per lag 1..=H".into()));
                }
                match variances.iter().copied().find(|v| !(*v >= 0.0)) {
                    Some(v) => Err(Error::NotPositiveSemidefinite { min_eigenvalue: v }),
                    None => Ok(()),
                }
            }
            LimitKind::Bridge { sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
                }
                Ok(())
            }
        }
    }
}

fn expect_dim(cov: &DMatrix<f64>, dim: usize) -> Result<()> {
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(Error::InvalidParameter(format!(
            "covariance is {}x{}, expected {dim}x{dim}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}

/// Symmetry and eigenvalue floor `-1e-8 * trace`.
pub fn check_psd(cov: &DMatrix<f64>) -> Result<()> {
    if !cov.is_square() {
        return Err(Error::InvalidParameter("covariance must be square".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidParameter(format!("covariance is not symmetric (max asymmetry {asym:e})")));
    }
    if cov.nrows() == 0 {
        return Ok(());
    }
    let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if min < -1e-8 * cov.trace().abs() {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(())
}

/// A square root `L` with `L L^T = cov`: Cholesky when positive definite,
/// otherwise the eigen decomposition with negative rounding clamped to zero.
pub fn covariance_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_psd(cov)?;
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.unpack());
    }
    let eig = SymmetricEigen::new(cov.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

fn normals(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Precomputed coefficients for repeated path draws.
pub struct LimitSampler {
    grid: Vec<f64>,
    mode: SamplerMode,
}

enum SamplerMode {
    /// Closed-form `sin(hx)/h` by recurrence.
    BridgeOne { sigma: f64, truncation: usize },
    /// Path `sum_k coeff_k(x) Z_k` with `Z = factor * N`.
    Table { factor: DMatrix<f64>, rows: Vec<Vec<f64>> },
}

impl LimitSampler {
    pub fn new(spec: &LimitProcessSpec) -> Result<Self> {
        spec.validate()?;
        let h_max = spec.truncation;
        let psi_rows = |lags: std::ops::RangeInclusive<usize>, scale: f64| -> Vec<Vec<f64>> {
            lags.map(|h| psi_curve(&spec.g, h, &spec.grid).into_iter().map(|v| v * scale).collect())
                .collect()
        };
        let mode = match &spec.kind {
            LimitKind::Bridge { sigma } if spec.g.is_one() => SamplerMode::BridgeOne {
                sigma: *sigma,
                truncation: h_max,
            },
            LimitKind::Bridge { sigma } => SamplerMode::Table {
                factor: DMatrix::from_diagonal_element(h_max, h_max, *sigma),
                rows: psi_rows(1..=h_max, 2.0),
            },
            LimitKind::GeneralG { cov } => {
                let mut rows = psi_rows(0..=0, 1.0);
                rows.extend(psi_rows(1..=h_max, 2.0));
                SamplerMode::Table {
                    factor: covariance_factor(cov)?,
                    rows,
                }
            }
            LimitKind::EtaBar { eta, cov } => SamplerMode::Table {
                factor: covariance_factor(cov)?,
                rows: psi_rows(eta + 1..=eta + h_max, 2.0),
            },
            LimitKind::IndependentHat { variances } => SamplerMode::Table {
                factor: DMatrix::from_diagonal(&DVector::from_iterator(h_max, variances.iter().map(|v| v.sqrt()))),
                rows: psi_rows(1..=h_max, 2.0),
            },
        };
        Ok(LimitSampler {
            grid: spec.grid.clone(),
            mode,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn path(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.mode {
            SamplerMode::BridgeOne { sigma, truncation } => {
                let z = normals(rng, *truncation);
                self.grid
                    .iter()
                    .map(|&x| {
                        let c2 = 2.0 * x.cos();
                        let (mut prev, mut cur) = (0.0, x.sin());
                        let mut acc = 0.0;
                        for (h, zh) in z.iter().enumerate() {
                            acc += zh * cur / (h + 1) as f64;
                            let next = c2 * cur - prev;
                            prev = cur;
                            cur = next;
                        }
                        2.0 * sigma * acc
                    })
                    .collect()
            }
            SamplerMode::Table { factor, rows } => {
                let z = factor * normals(rng, factor.ncols());
                let mut out = vec![0.0; self.grid.len()];
                for (zk, row) in z.iter().zip(rows) {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += zk * r;
                    }
                }
                out
            }
        }
    }
}

/// One path of the limit process on `spec.grid` (replicate 0 of `seed`).
pub fn simulate_limit(spec: &LimitProcessSpec, seed: u64) -> Result<Vec<f64>> {
    let sampler = LimitSampler::new(spec)?;
    Ok(sampler.path(&mut stream_rng(seed, 0, StreamPurpose::Limit)))
}

/// `reps` paths; path `r` uses replicate stream `r`.
pub fn simulate_limit_paths(spec: &LimitProcessSpec, reps: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = LimitSampler::new(spec)?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| sampler.path(&mut stream_rng(seed, r, StreamPurpose::Limit)))
        .collect())
}

/// Bridge paths for `g = 1` on the FFT grid `x_k = 2 pi k / N`, `k = 0..=N/2`,
/// with `N` the smallest power of two at least `2(H + 1)`.
pub struct BridgeSampler {
    sigma: f64,
    truncation: usize,
    size: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl BridgeSampler {
    pub fn new(sigma: f64, truncation: usize) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) || truncation == 0 {
            return Err(Error::InvalidParameter("bridge needs sigma >= 0 and H >= 1".into()));
        }
        let size = (2 * (truncation + 1)).next_power_of_two();
        Ok(BridgeSampler {
            sigma,
            truncation,
            size,
            fft: FftPlanner::new().plan_fft_forward(size),
        })
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.size / 2).map(|k| 2.0 * PI * k as f64 / self.size as f64).collect()
    }

    pub fn path(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (h, slot) in buf.iter_mut().enumerate().take(self.truncation + 1).skip(1) {
            slot.re = rng.sample::<f64, _>(StandardNormal) / h as f64;
        }
        self.fft.process(&mut buf);
        let scale = -2.0 * self.sigma;
        let mut path: Vec<f64> = buf[..=self.size / 2].iter().map(|c| scale * c.im).collect();
        // sin vanishes at both ends exactly; remove FFT rounding.
        path[0] = 0.0;
        *path.last_mut().unwrap() = 0.0;
        path
    }
}

/// Simulated `sup |G|` of the bridge series.
pub fn simulate_bridge_sup(sigma: f64, truncation: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = BridgeSampler::new(sigma, truncation)?;
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| sup_abs(&sampler.path(&mut stream_rng(seed, r, StreamPurpose::Limit))))
        .collect())
}

/// Simulated `int_0^pi G^2` of the bridge series (trapezoid on the FFT grid).
pub fn simulate_bridge_cvm(sigma: f64, truncation: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    let sampler = BridgeSampler::new(sigma, truncation)?;
    let grid = sampler.grid();
    Ok((0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sq: Vec<f64> = sampler
                .path(&mut stream_rng(seed, r, StreamPurpose::Limit))
                .into_iter()
                .map(|v| v * v)
                .collect();
            trapezoid(&grid, &sq)
        })
        .collect())
}

/// Kolmogorov distribution function `1 - 2 sum (-1)^{j-1} exp(-2 j^2 x^2)`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    if x < 0.3 {
        // Jacobi theta form; the alternating series converges slowly here.
        let mut acc = 0.0;
        for j in 1..=50 {
            let k = (2 * j - 1) as f64;
            let term = (-k * k * PI * PI / (8.0 * x * x)).exp();
            acc += term;
            if term < 1e-300 {
                break;
            }
        }
        return ((2.0 * PI).sqrt() / x * acc).min(1.0);
    }
    let mut acc = 0.0;
    for j in 1..=1000 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        acc += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (1.0 - 2.0 * acc).clamp(0.0, 1.0)
}

/// Inverse of [`kolmogorov_cdf`] by bisection.
pub fn kolmogorov_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p}")));
    }
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `p`-quantile of `sup_x |G(x)|` for the bridge series with scale `sigma`:
/// `Var G(x) = 2 sigma^2 x (pi - x)`, so the sup is `sigma pi sqrt(2)` times
/// a Kolmogorov variable.
pub fn bridge_sup_quantile(p: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(sigma * PI * 2f64.sqrt() * kolmogorov_quantile(p)?)
}

/// The density `4 pi^-2 sum (-1)^{j+1} x exp(-j^2 x^2 / pi^2)` as it is
/// usually quoted for this sup. It is not normalised: its integral over
/// `(0, inf)` is `pi^2 / 6`. Kept for comparison only.
pub fn quoted_sup_density(x: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    // Pair consecutive terms so the alternating tail cancels cleanly.
    let mut acc = 0.0;
    let mut j = 1usize;
    loop {
        let a = (-((j * j) as f64) * x * x / (PI * PI)).exp();
        let b = (-(((j + 1) * (j + 1)) as f64) * x * x / (PI * PI)).exp();
        acc += a - b;
        if a < 1e-16 || j > 10_000_000 {
            break;
        }
        j += 2;
    }
    4.0 / (PI * PI) * x * acc
}

/// Weights `c_j` of the representation `int G^2 = sum c_j N_j^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvmCoefficients {
    /// `2 pi sigma^2 / j^2`, from integrating the squared sine series.
    Derived,
    /// `2 / j^2`, the commonly quoted form (ignores `pi` and `sigma`).
    Quoted,
}

impl CvmCoefficients {
    pub fn weight(self, j: usize, sigma: f64) -> f64 {
        let j2 = (j * j) as f64;
        match self {
            CvmCoefficients::Derived => 2.0 * PI * sigma * sigma / j2,
            CvmCoefficients::Quoted => 2.0 / j2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CvmMethod {
    /// Integrate simulated bridge paths.
    SeriesMC,
    /// Sample `sum_{j <= H} c_j N_j^2`.
    ChiSqSeriesMC(CvmCoefficients),
}

/// Draws of the squared-integral functional of the bridge series.
pub fn cvm_limit_draws(sigma: f64, method: CvmMethod, truncation: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one draw".into()));
    }
    if reps < LIMIT_REPS {
        log::warn!("limit law from only {reps} draws");
    }
    match method {
        CvmMethod::SeriesMC => simulate_bridge_cvm(sigma, truncation, reps, seed),
        CvmMethod::ChiSqSeriesMC(coeffs) => {
            if truncation == 0 {
                return Err(Error::InvalidParameter("truncation H must be at least 1".into()));
            }
            let weights: Vec<f64> = (1..=truncation).map(|j| coeffs.weight(j, sigma)).collect();
            Ok((0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream_rng(seed, r, StreamPurpose::Limit);
                    weights
                        .iter()
                        .map(|w| {
                            let z: f64 = rng.sample(StandardNormal);
                            w * z * z
                        })
                        .sum()
                })
                .collect())
        }
    }
}

/// Monte Carlo `p`-quantile of the squared-integral functional of the bridge.
pub fn cvm_limit_quantile(p: f64, sigma: f64, method: CvmMethod, truncation: usize, reps: usize, seed: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p}")));
    }
    let draws = cvm_limit_draws(sigma, method, truncation, reps, seed)?;
    Ok(order_statistic(&draws, p).expect("non-empty draws"))
}

/// Monte Carlo `p`-quantile of `sup |G|`.
pub fn bridge_sup_quantile_mc(p: f64, sigma: f64, truncation: usize, reps: usize, seed: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || reps == 0 {
        return Err(Error::InvalidParameter("need p in (0, 1) and reps >= 1".into()));
    }
    let draws = simulate_bridge_sup(sigma, truncation, reps, seed)?;
    Ok(order_statistic(&draws, p).expect("non-empty draws"))
}

/// `Var G(x)` of the bridge series truncated after `H` terms.
pub fn bridge_variance(x: f64, sigma: f64, truncation: usize) -> f64 {
    let s: f64 = (1..=truncation)
        .rev()
        .map(|h| {
            let v = (h as f64 * x).sin() / h as f64;
            v * v
        })
        .sum();
    4.0 * sigma * sigma * s
}

/// Covariance of the eta-null lags for an iid sequence: `gamma0^2 I_H`.
pub fn eta_null_covariance_iid(gamma0: f64, truncation: usize) -> Result<DMatrix<f64>> {
    if !(gamma0 > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma(0) must be positive, got {gamma0}")));
    }
    Ok(DMatrix::from_diagonal_element(truncation, truncation, gamma0 * gamma0))
}

/// Plug-in covariance of `sqrt(n) gamma(eta + i)`, `i = 1..=H`, for an
/// eta-dependent sequence:
/// `sigma_ij = gamma(0) gamma(j - i) + sum_{t=1}^{eta-(j-i)} [F(t, eta+i, t+eta+j) + F(t, eta+j, t+eta+i)]`
/// with `F` the fourth-order plug-in and `gamma` the sample extremogram.
pub fn eta_null_covariance(ind: &IndicatorSeries, eta: usize, truncation: usize) -> Result<DMatrix<f64>> {
    let n = ind.len();
    if 2 * eta + truncation >= n {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} and H = {truncation} need more than {} observations",
            2 * eta + truncation
        )));
    }
    let ext = sample_extremogram::<f64>(ind, truncation)?;
    let mut cov = DMatrix::zeros(truncation, truncation);
    for i in 1..=truncation {
        for j in i..=truncation {
            let d = j - i;
            let mut v = ext.gamma[0] * ext.gamma[d];
            for t in 1..=eta.saturating_sub(d) {
                v += fourth_order_extremogram::<f64>(ind, t, eta + i, t + eta + j)?;
                v += fourth_order_extremogram::<f64>(ind, t, eta + j, t + eta + i)?;
            }
            cov[(i - 1, j - 1)] = v;
            cov[(j - 1, i - 1)] = v;
        }
    }
    Ok(cov)
}

/// One row of an exported quantile table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub p: f64,
    pub quantile: f64,
    pub method: String,
    #[serde(rename = "H")]
    pub truncation: usize,
    pub reps: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::CenteringMode;

    #[test]
    fn kolmogorov_values() {
        assert_eq!(kolmogorov_cdf(0.0), 0.0);
        let q = kolmogorov_quantile(0.95).unwrap();
        assert!((q - 1.3581).abs() < 1e-3, "{q}");
        let mut prev = 0.0;
        for k in 0..=3000 {
            let v = kolmogorov_cdf(k as f64 * 1e-3);
            assert!(v >= prev - 1e-15, "at {k}");
            prev = v;
        }
        // The two series agree where both are accurate.
        let x: f64 = 0.3;
        let alt: f64 = 1.0 - 2.0 * (1..200).map(|j| (-1f64).powi(j - 1) * (-2.0 * (j * j) as f64 * x * x).exp()).sum::<f64>();
        let theta = (2.0 * PI).sqrt() / x * (1..50).map(|j| (-((2 * j - 1) as f64).powi(2) * PI * PI / (8.0 * x * x)).exp()).sum::<f64>();
        assert!((alt - theta).abs() < 1e-12);
        assert!(kolmogorov_quantile(1.0).is_err());
    }

    #[test]
    fn bridge_quantile_closed_form() {
        let q = bridge_sup_quantile(0.95, 1.0).unwrap();
        assert!((q - 6.034).abs() < 5e-3, "{q}");
        let q2 = bridge_sup_quantile(0.95, 2.0).unwrap();
        assert!((q2 - 2.0 * q).abs() < 1e-12);
    }

    #[test]
    fn zero_variances_give_zero_paths() {
        let grid = vec![0.0, 0.5, 1.0, PI];
        let spec = LimitProcessSpec::independent_hat(vec![0.0; 5], WeightFunction::One, grid.clone());
        assert!(simulate_limit(&spec, 1).unwrap().iter().all(|&v| v == 0.0));
        let spec = LimitProcessSpec::general(DMatrix::zeros(4, 4), WeightFunction::One, grid.clone());
        assert!(simulate_limit(&spec, 1).unwrap().iter().all(|&v| v == 0.0));
        let spec = LimitProcessSpec::bridge(0.0, 100, grid);
        assert!(simulate_limit(&spec, 1).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bridge_path_is_the_sine_series() {
        let grid = vec![0.0, 0.3, 1.7, PI];
        let h = 50;
        let spec = LimitProcessSpec::bridge(1.5, h, grid.clone());
        let path = simulate_limit(&spec, 4).unwrap();
        let mut rng = stream_rng(4, 0, StreamPurpose::Limit);
        let z: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        for (x, p) in grid.iter().zip(&path) {
            let direct: f64 = 2.0 * 1.5 * (1..=h).map(|k| (k as f64 * x).sin() / k as f64 * z[k - 1]).sum::<f64>();
            assert!((direct - p).abs() < 1e-12);
        }
        // The table sampler with an explicit identity covariance is the same process.
        let table = LimitProcessSpec::eta_bar(0, DMatrix::from_diagonal_element(h, h, 2.25), WeightFunction::One, grid.clone());
        let other = simulate_limit(&table, 4).unwrap();
        let chol = covariance_factor(&DMatrix::from_diagonal_element(h, h, 2.25)).unwrap();
        assert!((chol[(0, 0)] - 1.5).abs() < 1e-15);
        for (a, b) in path.iter().zip(&other) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_bridge_matches_direct_evaluation() {
        let sampler = BridgeSampler::new(1.0, 40).unwrap();
        let grid = sampler.grid();
        assert_eq!(sampler.size, 128);
        let path = sampler.path(&mut stream_rng(8, 3, StreamPurpose::Limit));
        let mut rng = stream_rng(8, 3, StreamPurpose::Limit);
        let z: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        for (x, p) in grid.iter().zip(&path) {
            let direct: f64 = 2.0 * (1..=40).map(|k| (k as f64 * x).sin() / k as f64 * z[k - 1]).sum::<f64>();
            assert!((direct - p).abs() < 1e-10);
        }
    }

    #[test]
    fn truncated_variance_bound() {
        for &h in &[10usize, 100, 1000] {
            for k in 0..=200 {
                let x = PI * k as f64 / 200.0;
                let gap = (bridge_variance(x, 1.3, h) - 2.0 * 1.69 * x * (PI - x)).abs();
                assert!(gap <= 4.0 * 1.69 / h as f64 + 1e-12, "H {h} x {x}");
            }
        }
    }

    #[test]
    fn bridge_covariance_monte_carlo() {
        let (x, y) = (0.7, 2.1);
        let spec = LimitProcessSpec::bridge(1.0, BRIDGE_TRUNCATION, vec![x, y]);
        let paths = simulate_limit_paths(&spec, 100_000, 21).unwrap();
        let n = paths.len() as f64;
        let mx = paths.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = paths.iter().map(|p| p[1]).sum::<f64>() / n;
        let prods: Vec<f64> = paths.iter().map(|p| (p[0] - mx) * (p[1] - my)).collect();
        let cov = prods.iter().sum::<f64>() / n;
        let sd = (prods.iter().map(|v| (v - cov).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let exact = 2.0 * (PI * x.min(y) - x * y);
        assert!((cov - exact).abs() < 3.0 * sd / n.sqrt(), "{cov} vs {exact}");
        // Pointwise mean zero.
        for (k, m) in [mx, my].iter().enumerate() {
            let var: f64 = paths.iter().map(|p| (p[k] - m).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(m.abs() < 4.0 * (var / n).sqrt());
        }
    }

    #[test]
    fn cholesky_round_trip() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.2, 0.6, 1.0, -0.3, 0.2, -0.3, 0.5]);
        let l = covariance_factor(&cov).unwrap();
        assert!((&l * l.transpose() - &cov).amax() < 1e-12);
        let reps = 50_000u64;
        let draws: Vec<DVector<f64>> = (0..reps)
            .map(|r| &l * normals(&mut stream_rng(2, r, StreamPurpose::Limit), 3))
            .collect();
        for i in 0..3 {
            for j in 0..3 {
                let prods: Vec<f64> = draws.iter().map(|d| d[i] * d[j]).collect();
                let mean = prods.iter().sum::<f64>() / reps as f64;
                let sd = (prods.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
                assert!((mean - cov[(i, j)]).abs() < 4.0 * sd / (reps as f64).sqrt(), "({i},{j})");
            }
        }
        // Singular but PSD uses the eigen route.
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = covariance_factor(&singular).unwrap();
        assert!((&l * l.transpose() - &singular).amax() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(covariance_factor(&bad), Err(Error::NotPositiveSemidefinite { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym).is_err());
    }

    #[test]
    fn cvm_quantile_scaling_and_agreement() {
        assert_eq!(cvm_limit_quantile(0.95, 0.0, CvmMethod::SeriesMC, 1000, 10, 1).unwrap(), 0.0);
        let a = cvm_limit_quantile(0.95, 1.0, CvmMethod::ChiSqSeriesMC(CvmCoefficients::Derived), 2000, 20_000, 5).unwrap();
        let b = cvm_limit_quantile(0.95, 2.0, CvmMethod::ChiSqSeriesMC(CvmCoefficients::Derived), 2000, 20_000, 5).unwrap();
        assert!((b - 4.0 * a).abs() < 1e-9 * b);
        let s = cvm_limit_quantile(0.95, 1.0, CvmMethod::SeriesMC, 2000, 20_000, 6).unwrap();
        assert!((s - a).abs() < 0.03 * a, "{s} vs {a}");
        let quoted = cvm_limit_quantile(0.95, 1.0, CvmMethod::ChiSqSeriesMC(CvmCoefficients::Quoted), 2000, 20_000, 5).unwrap();
        assert!((a / quoted - PI).abs() < 1e-9);
    }

    #[test]
    fn quoted_density_integrates_to_pi_squared_over_six() {
        let (upper, k) = (60.0, 60_000);
        let h = upper / k as f64;
        let integral: f64 = h / 3.0
            * (0..=k)
                .map(|i| {
                    let w = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * quoted_sup_density(i as f64 * h)
                })
                .sum::<f64>();
        assert!((integral - PI * PI / 6.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn eta_covariance_examples() {
        let id = eta_null_covariance_iid(1.0, 4).unwrap();
        assert_eq!(id, DMatrix::identity(4, 4));
        let d = eta_null_covariance_iid(0.5, 3).unwrap();
        assert!(d.iter().enumerate().all(|(k, &v)| if k % 4 == 0 { v == 0.25 } else { v == 0.0 }));

        let raw = vec![1, 1, 0, 1, 1, 0, 1, 0, 1, 1, 1, 0, 0, 1, 1, 0, 1, 1, 0, 1];
        let ind = IndicatorSeries::from_raw(raw.clone(), 2.0, CenteringMode::Empirical).unwrap();
        let eta = 1;
        let cov = eta_null_covariance(&ind, eta, 3).unwrap();
        let n = raw.len();
        let mean = raw.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let gamma = |h: usize| 2.0 / n as f64 * (0..n - h).map(|t| (raw[t] as f64 - mean) * (raw[t + h] as f64 - mean)).sum::<f64>();
        let f = |a: usize, b: usize, c: usize| {
            let reach = a.max(b).max(c);
            4.0 / n as f64 * (0..n - reach).filter(|&i| raw[i] == 1 && raw[i + a] == 1 && raw[i + b] == 1 && raw[i + c] == 1).count() as f64
        };
        for i in 1..=3usize {
            for j in i..=3usize {
                let mut v = gamma(0) * gamma(j - i);
                if j - i <= eta {
                    for t in 1..=eta - (j - i) {
                        v += f(t, eta + i, t + eta + j) + f(t, eta + j, t + eta + i);
                    }
                }
                assert!((cov[(i - 1, j - 1)] - v).abs() < 1e-12);
                assert_eq!(cov[(i - 1, j - 1)], cov[(j - 1, i - 1)]);
            }
        }
    }
}
