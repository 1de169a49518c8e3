//! Stationary bootstrap of the extremogram and the integrated periodogram.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{extremogram_from_gamma, lagged_products, CenteringMode, ExtremogramEstimate, IndicatorSeries};
use crate::igram::{cumulate_periodogram, fourier_grid, sup_abs, trapezoid, TestKind};
use crate::rng::{stream_rng, StreamPurpose};
use crate::scalar::{order_statistic, Scalar};
use crate::spectral::{fft_autocorrelation, PowerSpectrum, WeightFunction};

pub const DEFAULT_THETA: f64 = 1.0 / 50.0;
pub const DEFAULT_REPS: usize = 4000;

/// Parameters of the stationary bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    /// Parameter of the geometric block lengths; mean block length `1/theta`.
    pub theta: f64,
    /// Number of bootstrap replicates `B`.
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
}

impl BootstrapPlan {
    pub fn new(n: usize, seed: u64) -> Self {
        BootstrapPlan {
            theta: DEFAULT_THETA,
            reps: DEFAULT_REPS,
            seed,
            n,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("bootstrap needs at least one replicate".into()));
        }
        if self.n < 2 {
            return Err(Error::SeriesTooShort { min: 2, got: self.n });
        }
        Ok(())
    }
}

/// Endless stream of blocks `(K, L)`: `K` uniform on `0..n`, `L >= 1`
/// geometric with success probability `theta`.
pub(crate) struct Blocks {
    rng: ChaCha8Rng,
    geometric: Geometric,
    n: usize,
}

impl Blocks {
    pub(crate) fn new(plan: &BootstrapPlan, replicate: u64) -> Result<Self> {
        plan.validate()?;
        let geometric = Geometric::new(plan.theta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Blocks {
            rng: stream_rng(plan.seed, replicate, StreamPurpose::Bootstrap),
            geometric,
            n: plan.n,
        })
    }
}

impl Iterator for Blocks {
    type Item = (usize, u64);

    fn next(&mut self) -> Option<(usize, u64)> {
        let start = self.rng.random_range(0..self.n);
        // `Geometric` counts failures before the first success.
        let len = self.geometric.sample(&mut self.rng).saturating_add(1);
        Some((start, len))
    }
}

/// Resampled positions (0-based) of replicate `replicate`: blocks
/// `K, K+1, ..., K+L-1` taken modulo `n`, concatenated and cut at `n`.
/// Blocks are drawn only until `n` positions exist.
pub fn sb_indices(plan: &BootstrapPlan, replicate: u64) -> Result<Vec<usize>> {
    let n = plan.n;
    let mut out = Vec::with_capacity(n);
    for (start, len) in Blocks::new(plan, replicate)? {
        let take = (len.min((n - out.len()) as u64)) as usize;
        out.extend((0..take).map(|k| (start + k) % n));
        if out.len() == n {
            break;
        }
    }
    Ok(out)
}

/// `I_t - mean(I)` of the original sample.
fn hat<T: Scalar>(ind: &IndicatorSeries) -> Vec<T> {
    ind.centered_by(ind.mean())
}

/// `gamma*(h) = (m/n) sum_{t=1}^{n-h} hat I_{t*} hat I_{(t+h)*}`: products of
/// resampled neighbours, centred by the original sample mean.
pub fn bootstrap_extremogram<T: Scalar>(ind: &IndicatorSeries, idx: &[usize], max_lag: usize) -> Result<ExtremogramEstimate<T>> {
    let n = ind.len();
    if idx.len() != n {
        return Err(Error::InvalidParameter(format!("index sequence has length {}, expected {n}", idx.len())));
    }
    if max_lag >= n {
        return Err(Error::InvalidParameter(format!("max_lag {max_lag} must be below n = {n}")));
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("index {bad} out of range")));
    }
    let c = hat::<T>(ind);
    let star: Vec<T> = idx.iter().map(|&i| c[i]).collect();
    extremogram_from_gamma(lagged_products(&star, max_lag, ind.m()), CenteringMode::Empirical, ind.m(), n)
}

/// Conditional expectation of `gamma*(h)`:
/// `(1 - h/n)(1 - theta)^h (m/n) sum_t hat I_t hat I_{(t+h) mod n}`.
pub fn estar_gamma<T: Scalar>(ind: &IndicatorSeries, theta: f64, h: usize) -> Result<T> {
    let n = ind.len();
    if h >= n {
        return Err(Error::InvalidParameter(format!("lag {h} must be below n = {n}")));
    }
    let c = hat::<f64>(ind);
    let circ: f64 = (0..n).map(|t| c[t] * c[(t + h) % n]).sum();
    Ok(T::of(estar_factor(n, theta, h) * ind.m() / n as f64 * circ))
}

fn estar_factor(n: usize, theta: f64, h: usize) -> f64 {
    (1.0 - h as f64 / n as f64) * (1.0 - theta).powi(h as i32)
}

/// [`estar_gamma`] for every lag `0..n`, from one circular autocorrelation.
pub fn estar_extremogram<T: Scalar>(ind: &IndicatorSeries, theta: f64) -> Vec<T> {
    let n = ind.len();
    let scale = T::of(ind.m() / n as f64);
    fft_autocorrelation(&hat::<T>(ind), true)
        .into_iter()
        .enumerate()
        .map(|(h, v)| v * scale * T::of(estar_factor(n, theta, h)))
        .collect()
}

/// Closed-form conditional moments of the bootstrapped indicators at lags
/// `(h, s)`. `hat I = I - mean(I)`, `tilde I = I - p0`; `t*` is the `t`-th
/// resampled position and `t* + h` the original neighbour of `t*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarMoments {
    pub h: usize,
    pub s: usize,
    /// `E* hat I_{1*}`.
    pub mean_hat: f64,
    /// `E*[hat I_{1*} hat I_{(1+h)*}]`.
    pub e_hat: f64,
    /// `E*[tilde I_{1*} tilde I_{1*+h}]`.
    pub e_tilde: f64,
    /// `cov*(tilde I_{1*} tilde I_{1*+h}, tilde I_{(1+s)*} tilde I_{(1+s)*+h})`.
    pub cov_tilde: f64,
    /// `cov*(hat I_{1*} hat I_{(1+h)*}, tilde I_{(1+s)*} tilde I_{(1+s)*+h})`.
    pub cov_hat_tilde: f64,
    /// `cov*(tilde I_{1*} tilde I_{1*+h}, hat I_{(1+s)*} hat I_{(1+s+h)*})`.
    pub cov_tilde_hat: f64,
    /// `cov*(hat I_{1*} hat I_{(1+h)*}, hat I_{(1+s)*} hat I_{(1+s+h)*})`.
    pub cov_hat: f64,
}

/// Evaluates every closed form of [`StarMoments`]; all sums circular.
pub fn star_moments(ind: &IndicatorSeries, theta: f64, h: usize, s: usize) -> Result<StarMoments> {
    let n = ind.len();
    if h >= n || s >= n {
        return Err(Error::InvalidParameter(format!("lags ({h}, {s}) must be below n = {n}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {theta}")));
    }
    let a = hat::<f64>(ind);
    let b: Vec<f64> = ind.centered_by(ind.p0());
    let at = |v: &[f64], i: usize| v[i % n];
    let mean = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
    let q = 1.0 - theta;
    let pw = |k: usize| q.powi(k as i32);

    let mu_hat = |lag: usize| mean(&|i| at(&a, i) * at(&a, i + lag));
    let mu_tilde_h = mean(&|i| at(&b, i) * at(&b, i + h));
    let (mu_hat_h, mu_hat_s) = (mu_hat(h), mu_hat(s));

    let a30 = mean(&|i| at(&b, i) * at(&b, i + s) * at(&b, i + h) * at(&b, i + s + h));
    let a31 = mean(&|i| at(&a, i) * at(&a, i + h) * at(&b, i + s) * at(&b, i + s + h));
    let a32 = mean(&|i| at(&b, i) * at(&b, i + h) * at(&a, i + s) * at(&a, i + s + h));
    let a4 = mean(&|i| at(&a, i) * at(&a, i + s) * at(&a, i + h) * at(&a, i + s + h));

    let cov_hat = if s < h {
        pw(s + h) * (a4 - mu_hat_s * mu_hat_s) + (pw(s) * mu_hat_s).powi(2) - (pw(h) * mu_hat_h).powi(2)
    } else {
        pw(s + h) * (a4 - mu_hat_h * mu_hat_h)
    };

    Ok(StarMoments {
        h,
        s,
        mean_hat: mean(&|i| a[i]),
        e_hat: pw(h) * mu_hat_h,
        e_tilde: mu_tilde_h,
        cov_tilde: pw(s) * (a30 - mu_tilde_h * mu_tilde_h),
        cov_hat_tilde: pw(s.max(h)) * (a31 - mu_hat_h * mu_tilde_h),
        cov_tilde_hat: pw(s + h) * (a32 - mu_hat_h * mu_tilde_h),
        cov_hat,
    })
}

/// Bootstrap replicates of `(n/m)^{1/2} sup|J* - E* J*|` (GR) or
/// `(n/m) int (J* - E* J*)^2` (CvM), with `J*` the discretized integrated
/// periodogram of the resample and `E* J*` built from [`estar_extremogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDistribution<T> {
    pub kind: TestKind,
    pub plan: BootstrapPlan,
    pub grid: Vec<T>,
    /// `E* J*` on the grid.
    pub center: Vec<T>,
    /// One statistic per replicate, in replicate order.
    pub statistics: Vec<T>,
}

impl<T: Scalar> BootstrapDistribution<T> {
    /// Order statistic `ceil(p B)` of the replicates.
    pub fn quantile(&self, p: f64) -> Result<T> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {p}")));
        }
        Ok(order_statistic(&self.statistics, p).expect("at least one replicate"))
    }
}

/// `E* J*(x) = (2 pi / n) sum_{i <= x_n} g(omega_i) [e_0 + 2 sum_h e_h cos(h omega_i)]`.
fn estar_curve<T: Scalar>(ind: &IndicatorSeries, theta: f64, g: &WeightFunction<T>, grid: &[T], spectrum: &PowerSpectrum<T>) -> Vec<T> {
    let n = ind.len();
    let mut e = estar_extremogram::<T>(ind, theta);
    let e0 = e[0];
    e[0] = T::zero();
    let two = T::of(2.0);
    let bins: Vec<T> = spectrum
        .transform(&e)
        .into_iter()
        .take(n / 2 + 1)
        .map(|z: Complex<T>| e0 + two * z.re)
        .collect();
    cumulate_periodogram(&bins, g, grid, n)
}

pub fn bootstrap_igram_distribution<T: Scalar>(
    ind: &IndicatorSeries,
    g: &WeightFunction<T>,
    grid: Option<&[T]>,
    plan: &BootstrapPlan,
    kind: TestKind,
) -> Result<BootstrapDistribution<T>> {
    plan.validate()?;
    let n = ind.len();
    if plan.n != n {
        return Err(Error::InvalidParameter(format!("plan is for n = {}, series has n = {n}", plan.n)));
    }
    if n < 4 {
        return Err(Error::SeriesTooShort { min: 4, got: n });
    }
    let grid: Vec<T> = grid.map(<[T]>::to_vec).unwrap_or_else(|| fourier_grid(n));
    if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|&x| x < T::zero() || x > T::PI()) {
        return Err(Error::InvalidParameter("grid must be strictly increasing inside [0, pi]".into()));
    }
    let spectrum = PowerSpectrum::<T>::new(n);
    let center = estar_curve(ind, plan.theta, g, &grid, &spectrum);
    let c = hat::<T>(ind);
    let m = ind.m();
    let rate = T::of((n as f64 / m).sqrt());

    let statistics = (0..plan.reps as u64)
        .into_par_iter()
        .map(|r| {
            let idx = sb_indices(plan, r)?;
            let star: Vec<T> = idx.iter().map(|&i| c[i]).collect();
            let bins = spectrum.periodogram_bins(&star, m);
            let dev: Vec<T> = cumulate_periodogram(&bins, g, &grid, n)
                .into_iter()
                .zip(&center)
                .map(|(j, &e)| j - e)
                .collect();
            Ok(match kind {
                TestKind::GR => rate * sup_abs(&dev),
                TestKind::CvM => {
                    let sq: Vec<T> = dev.iter().map(|&d| d * d).collect();
                    rate * rate * trapezoid(&grid, &sq)
                }
            })
        })
        .collect::<Result<Vec<T>>>()?;

    Ok(BootstrapDistribution {
        kind,
        plan: *plan,
        grid,
        center,
        statistics,
    })
}

/// Bootstrap `p`-quantile of the GR or CvM statistic on the Fourier grid.
pub fn bootstrap_igram_quantile<T: Scalar>(ind: &IndicatorSeries, g: &WeightFunction<T>, plan: &BootstrapPlan, kind: TestKind, p: f64) -> Result<T> {
    bootstrap_igram_distribution(ind, g, None, plan, kind)?.quantile(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremal::sample_extremogram;
    use crate::spectral::{psi_hat, psi_hat_curve};
    use std::f64::consts::PI;

    fn random_ind(n: usize, seed: u64, p: f64, centering: CenteringMode) -> IndicatorSeries {
        let mut rng = stream_rng(seed, 0, StreamPurpose::Noise);
        let raw = (0..n).map(|_| (rng.random::<f64>() < p) as u8).collect();
        IndicatorSeries::from_raw(raw, 1.0 / p, centering).unwrap()
    }

    #[test]
    fn indices_basic_properties() {
        let plan = BootstrapPlan::new(37, 5).with_theta(0.1);
        for r in 0..20 {
            let idx = sb_indices(&plan, r).unwrap();
            assert_eq!(idx.len(), 37);
            assert!(idx.iter().all(|&i| i < 37));
        }
        assert_eq!(sb_indices(&plan, 3).unwrap(), sb_indices(&plan, 3).unwrap());
        assert_ne!(sb_indices(&plan, 3).unwrap(), sb_indices(&plan, 4).unwrap());
        assert!(BootstrapPlan::new(10, 1).with_theta(1.0).validate().is_err());
        assert!(BootstrapPlan::new(10, 1).with_reps(0).validate().is_err());
    }

    #[test]
    fn theta_near_one_gives_unit_blocks() {
        let plan = BootstrapPlan::new(50, 2).with_theta(1.0 - 1e-12);
        assert!(Blocks::new(&plan, 0).unwrap().take(10_000).all(|(_, len)| len == 1));
        // Then the indices are the block starts, i.e. iid uniform draws.
        let starts: Vec<usize> = Blocks::new(&plan, 0).unwrap().take(50).map(|(k, _)| k).collect();
        assert_eq!(sb_indices(&plan, 0).unwrap(), starts);
    }

    #[test]
    fn mean_block_length() {
        let theta = 0.04;
        let plan = BootstrapPlan::new(1000, 9).with_theta(theta);
        let lens: Vec<f64> = Blocks::new(&plan, 0).unwrap().take(100_000).map(|(_, l)| l as f64).collect();
        let k = lens.len() as f64;
        let mean = lens.iter().sum::<f64>() / k;
        let se = ((1.0 - theta) / (theta * theta) / k).sqrt();
        assert!((mean - 1.0 / theta).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn marginal_uniformity() {
        let n = 50;
        let plan = BootstrapPlan::new(n, 13).with_theta(0.2);
        let mut counts = vec![0usize; n];
        for r in 0..2000 {
            for i in sb_indices(&plan, r).unwrap() {
                counts[i] += 1;
            }
        }
        let total = 2000.0 * n as f64;
        let expect = total / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // Positions inside blocks are dependent, which inflates the
        // statistic by about the mean block length; deflate before comparing
        // with the 0.999 quantile of chi-square(49), about 85.4.
        let dispersion = 2.0 / 0.2 - 1.0;
        assert!(chi2 / dispersion < 85.4, "{chi2}");
    }

    #[test]
    fn identity_resample_reproduces_the_sample() {
        let ind = random_ind(40, 3, 0.2, CenteringMode::Empirical);
        let idx: Vec<usize> = (0..40).collect();
        let star = bootstrap_extremogram::<f64>(&ind, &idx, 10).unwrap();
        let orig = sample_extremogram::<f64>(&ind, 10).unwrap();
        for (a, b) in star.gamma.iter().zip(&orig.gamma) {
            assert!((a - b).abs() < 1e-14);
        }
        let flat = IndicatorSeries::from_raw(vec![1; 12], 4.0, CenteringMode::Empirical).unwrap();
        let z = bootstrap_extremogram::<f64>(&flat, &[3, 4, 5, 0, 1, 2, 7, 8, 9, 10, 11, 6], 5).unwrap();
        assert!(z.gamma.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn resampled_extremogram_brute_force() {
        let raw = vec![1u8, 0, 0, 1, 1, 0];
        let ind = IndicatorSeries::from_raw(raw.clone(), 3.0, CenteringMode::Empirical).unwrap();
        let idx = [4usize, 5, 0, 2, 3, 4];
        let est = bootstrap_extremogram::<f64>(&ind, &idx, 5).unwrap();
        let mean = 0.5;
        for h in 0..6 {
            let mut acc = 0.0;
            for t in 0..6 {
                for u in 0..6 {
                    if u == t + h {
                        acc += (raw[idx[t]] as f64 - mean) * (raw[idx[u]] as f64 - mean);
                    }
                }
            }
            assert!((est.gamma[h] - 3.0 / 6.0 * acc).abs() < 1e-14, "h {h}");
        }
    }

    #[test]
    fn estar_closed_form_edges() {
        let ind = random_ind(30, 4, 0.3, CenteringMode::Empirical);
        let c = hat::<f64>(&ind);
        let g0 = ind.m() / 30.0 * c.iter().map(|v| v * v).sum::<f64>();
        for theta in [0.01, 0.5, 0.9] {
            assert!((estar_gamma::<f64>(&ind, theta, 0).unwrap() - g0).abs() < 1e-13);
        }
        assert!(estar_gamma::<f64>(&ind, 1.0 - 1e-12, 3).unwrap().abs() < 1e-20);
        let all = estar_extremogram::<f64>(&ind, 0.2);
        for h in 0..30 {
            assert!((all[h] - estar_gamma::<f64>(&ind, 0.2, h).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn estar_matches_monte_carlo() {
        let (n, theta) = (200, 0.1);
        let ind = random_ind(n, 11, 0.1, CenteringMode::Empirical);
        let plan = BootstrapPlan::new(n, 77).with_theta(theta);
        let reps = 20_000;
        let draws: Vec<Vec<f64>> = (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let idx = sb_indices(&plan, r).unwrap();
                bootstrap_extremogram::<f64>(&ind, &idx, 7).unwrap().gamma
            })
            .collect();
        for h in [1usize, 3, 7] {
            let xs: Vec<f64> = draws.iter().map(|g| g[h]).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let sd = (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            let exact = estar_gamma::<f64>(&ind, theta, h).unwrap();
            assert!((mean - exact).abs() < 4.0 * sd / (reps as f64).sqrt(), "h {h}: {mean} vs {exact}");
        }
    }

    #[test]
    fn degenerate_branch_and_zero_mean() {
        let ind = random_ind(60, 8, 0.2, CenteringMode::Theoretical(0.2));
        for (h, s) in [(2usize, 2usize), (0, 4), (4, 0)] {
            let mo = star_moments(&ind, 0.3, h, s).unwrap();
            assert!(mo.mean_hat.abs() < 1e-15);
            if s == 0 {
                // Both pairs coincide, so these are variances.
                assert!(mo.cov_hat >= -1e-10);
                assert!(mo.cov_tilde >= -1e-10);
            }
            if h == s {
                // The extra difference terms vanish.
                let a = hat::<f64>(&ind);
                let a4 = (0..60).map(|i| a[i] * a[(i + h) % 60].powi(2) * a[(i + 2 * h) % 60]).sum::<f64>() / 60.0;
                let mu = (0..60).map(|i| a[i] * a[(i + h) % 60]).sum::<f64>() / 60.0;
                assert!((mo.cov_hat - 0.7f64.powi(4) * (a4 - mu * mu)).abs() < 1e-15);
            }
        }
        assert!(star_moments(&ind, 0.3, 60, 1).is_err());
    }

    #[test]
    fn estar_center_uses_psi_hat() {
        let n = 24;
        let ind = random_ind(n, 21, 0.25, CenteringMode::Empirical);
        let theta = 0.15;
        let grid = fourier_grid::<f64>(n);
        let g = WeightFunction::One;
        let center = estar_curve(&ind, theta, &g, &grid, &PowerSpectrum::new(n));
        let e = estar_extremogram::<f64>(&ind, theta);
        for (k, &x) in grid.iter().enumerate() {
            let direct = psi_hat(&g, 0, x, n) * e[0] + 2.0 * (1..n).map(|h| psi_hat(&g, h, x, n) * e[h]).sum::<f64>();
            assert!((center[k] - direct).abs() < 1e-12);
        }
        assert_eq!(psi_hat_curve(&g, 0, &grid, n)[0], 0.0);
    }

    #[test]
    fn quantiles_and_determinism() {
        let n = 256;
        let ind = random_ind(n, 31, 0.05, CenteringMode::Empirical);
        let g = WeightFunction::<f64>::One;
        let plan = BootstrapPlan::new(n, 4).with_reps(1);
        let dist = bootstrap_igram_distribution(&ind, &g, None, &plan, TestKind::GR).unwrap();
        assert_eq!(dist.quantile(0.95).unwrap(), dist.statistics[0]);

        let plan = plan.with_reps(300);
        let a = bootstrap_igram_distribution(&ind, &g, None, &plan, TestKind::CvM).unwrap();
        let b = bootstrap_igram_distribution(&ind, &g, None, &plan, TestKind::CvM).unwrap();
        assert_eq!(a, b);
        assert!(a.quantile(0.99).unwrap() >= a.quantile(0.95).unwrap());
        assert!(a.statistics.iter().all(|&s| s >= 0.0));
        assert!(bootstrap_igram_quantile(&ind, &g, &BootstrapPlan::new(100, 1), TestKind::GR, 0.95).is_err());
        let _ = PI;
    }
}
