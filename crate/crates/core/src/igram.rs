//! Integrated periodogram curves, their centerings and the
//! Grenander-Rosenblatt / Cramér-von Mises statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{indicators, sample_extremogram, threshold_from_p0, CenteringMode, ExtremeSet, ExtremogramEstimate, IndicatorSeries, ThresholdSpec};
use crate::models::{simulate_replicate, ModelSpec};
use crate::scalar::{pairwise_sum, Scalar};
use crate::spectral::{fourier_frequency, fourier_index, prefix_sums, psi, psi_curve, psi_hat_curve, PowerSpectrum, WeightFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IgramVariant {
    /// `J(x) = psi_0(x) gamma(0) + 2 sum_h psi_h(x) gamma(h)`.
    Continuous,
    /// Riemann sums of the periodogram over the Fourier frequencies.
    Discretized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgramCurve<T> {
    pub grid: Vec<T>,
    pub values: Vec<T>,
    pub variant: IgramVariant,
    pub standardized: bool,
    pub m: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CenteringProvenance {
    MonteCarlo { model: ModelSpec, reps: usize, seed: u64 },
    ExactIid,
    EtaPartialSum { eta: usize },
    /// The curve centred by itself (smoke test of the pipeline).
    SelfCentered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteringCurve<T> {
    pub grid: Vec<T>,
    pub values: Vec<T>,
    /// Pointwise Monte Carlo standard errors, when simulated.
    pub std_error: Option<Vec<T>>,
    pub provenance: CenteringProvenance,
    /// Monte Carlo average threshold `a_m`, when simulated.
    pub threshold: Option<f64>,
}

impl<T: Scalar> CenteringCurve<T> {
    pub fn self_centered(curve: &IgramCurve<T>) -> Self {
        CenteringCurve {
            grid: curve.grid.clone(),
            values: curve.values.clone(),
            std_error: None,
            provenance: CenteringProvenance::SelfCentered,
            threshold: None,
        }
    }
}

/// `{0} ∪ {omega_n(j) : 0 < omega_n(j) < pi} ∪ {pi}`.
pub fn fourier_grid<T: Scalar>(n: usize) -> Vec<T> {
    let mut grid = vec![T::zero()];
    grid.extend((1..n.div_ceil(2)).map(|j| fourier_frequency::<T>(j, n)));
    grid.push(T::PI());
    grid
}

fn check_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("evaluation grid must be strictly increasing".into()));
    }
    if grid[0] < T::zero() || grid[grid.len() - 1] > T::PI() {
        return Err(Error::InvalidParameter("evaluation grid must lie in [0, pi]".into()));
    }
    Ok(())
}

/// `sum_h w_h psi_h(x)` on the grid, `w_0` unscaled and `w_h` doubled.
fn psi_series<T: Scalar>(weights: &[T], g: &WeightFunction<T>, grid: &[T]) -> Vec<T> {
    let two = T::of(2.0);
    if g.is_one() {
        return grid
            .par_iter()
            .map(|&x| {
                let tail = weights
                    .iter()
                    .enumerate()
                    .skip(1)
                    .fold(T::zero(), |acc, (h, &w)| acc + psi(g, h, x) * w);
                x * weights[0] + two * tail
            })
            .collect();
    }
    let mut out = vec![T::zero(); grid.len()];
    for (h, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let factor = if h == 0 { w } else { two * w };
        for (o, p) in out.iter_mut().zip(psi_curve(g, h, grid)) {
            *o = *o + factor * p;
        }
    }
    out
}

/// `sum_h w_h psi_hat_h(x)` for sample length `n`.
fn psi_hat_series<T: Scalar>(weights: &[T], g: &WeightFunction<T>, grid: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); grid.len()];
    for (h, &w) in weights.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let factor = if h == 0 { w } else { T::of(2.0) * w };
        for (o, p) in out.iter_mut().zip(psi_hat_curve(g, h, grid, n)) {
            *o = *o + factor * p;
        }
    }
    out
}

/// `J(x) = psi_0(x) gamma(0) + 2 sum_{h >= 1} psi_h(x) gamma(h)` over every
/// lag held by `ext` (all `n - 1` lags for the integrated periodogram).
pub fn igram_continuous<T: Scalar>(ext: &ExtremogramEstimate<T>, g: &WeightFunction<T>, grid: &[T]) -> Result<IgramCurve<T>> {
    check_grid(grid)?;
    Ok(IgramCurve {
        grid: grid.to_vec(),
        values: psi_series(&ext.gamma, g, grid),
        variant: IgramVariant::Continuous,
        standardized: false,
        m: ext.m,
        n: ext.n,
    })
}

/// Cumulative Riemann sums `(2 pi / n) sum_{i <= x_n} I(omega_i) g(omega_i)`
/// of a precomputed periodogram `bins[j]`, `j = 0..=n/2`.
pub(crate) fn cumulate_periodogram<T: Scalar>(bins: &[T], g: &WeightFunction<T>, grid: &[T], n: usize) -> Vec<T> {
    let step = T::of(2.0) * T::PI() / T::of_usize(n);
    let prefix = prefix_sums((1..=n / 2).map(|j| bins[j] * g.eval(fourier_frequency(j, n)) * step));
    grid.iter().map(|&x| prefix[fourier_index(x, n)]).collect()
}

/// Discretized integrated periodogram from one FFT and prefix sums.
pub fn igram_discretized<T: Scalar>(ind: &IndicatorSeries, g: &WeightFunction<T>, grid: &[T]) -> Result<IgramCurve<T>> {
    let n = ind.len();
    if n < 4 {
        return Err(Error::SeriesTooShort { min: 4, got: n });
    }
    check_grid(grid)?;
    let bins = PowerSpectrum::new(n).periodogram_bins(&ind.centered::<T>(), ind.m());
    Ok(IgramCurve {
        grid: grid.to_vec(),
        values: cumulate_periodogram(&bins, g, grid, n),
        variant: IgramVariant::Discretized,
        standardized: false,
        m: ind.m(),
        n,
    })
}

/// Builds the requested variant, computing the full-lag extremogram if needed.
pub fn igram<T: Scalar>(ind: &IndicatorSeries, g: &WeightFunction<T>, grid: &[T], variant: IgramVariant) -> Result<IgramCurve<T>> {
    match variant {
        IgramVariant::Discretized => igram_discretized(ind, g, grid),
        IgramVariant::Continuous => igram_continuous(&sample_extremogram(ind, ind.len() - 1)?, g, grid),
    }
}

/// `J / gamma(0)`.
pub fn standardized_igram<T: Scalar>(curve: &IgramCurve<T>, ext: &ExtremogramEstimate<T>) -> Result<IgramCurve<T>> {
    let g0 = ext.gamma0();
    if g0 == T::zero() {
        return Err(Error::ZeroGamma0);
    }
    Ok(IgramCurve {
        values: curve.values.iter().map(|&v| v / g0).collect(),
        standardized: true,
        ..curve.clone()
    })
}

/// Centering of the `eta`-dependent null,
/// `psi_0 gamma(0) + 2 sum_{h=1}^{eta} psi_h gamma(h)`, with `psi_hat`
/// for the discretized variant.
pub fn eta_null_center<T: Scalar>(
    ext: &ExtremogramEstimate<T>,
    g: &WeightFunction<T>,
    grid: &[T],
    eta: usize,
    variant: IgramVariant,
) -> Result<CenteringCurve<T>> {
    check_grid(grid)?;
    if eta >= ext.n || eta > ext.max_lag() {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} needs extremogram lags up to eta (have {}, n = {})",
            ext.max_lag(),
            ext.n
        )));
    }
    let weights = &ext.gamma[..=eta];
    let values = match variant {
        IgramVariant::Continuous => psi_series(weights, g, grid),
        IgramVariant::Discretized => psi_hat_series(weights, g, grid, ext.n),
    };
    Ok(CenteringCurve {
        grid: grid.to_vec(),
        values,
        std_error: None,
        provenance: CenteringProvenance::EtaPartialSum { eta },
        threshold: None,
    })
}

/// Exact `E J` for an iid sequence with theoretical centering:
/// `E gamma(0) = m p0 (1 - p0)` and `E gamma(h) = 0` for `h >= 1`.
pub fn iid_center<T: Scalar>(g: &WeightFunction<T>, grid: &[T], p0: f64, m: f64, n: usize, variant: IgramVariant) -> Result<CenteringCurve<T>> {
    check_grid(grid)?;
    let weights = [T::of(m * p0 * (1.0 - p0))];
    let values = match variant {
        IgramVariant::Continuous => psi_series(&weights, g, grid),
        IgramVariant::Discretized => psi_hat_series(&weights, g, grid, n),
    };
    Ok(CenteringCurve {
        grid: grid.to_vec(),
        values,
        std_error: None,
        provenance: CenteringProvenance::ExactIid,
        threshold: None,
    })
}

/// Options for [`centering_monte_carlo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub variant: IgramVariant,
    pub centering: CenteringMode,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            variant: IgramVariant::Discretized,
            centering: CenteringMode::Empirical,
        }
    }
}

/// Pointwise mean and standard error of equally long curves, by pairwise
/// summation in replicate order.
pub(crate) fn mean_and_se<T: Scalar>(curves: &[Vec<T>]) -> (Vec<T>, Vec<T>) {
    let reps = curves.len();
    let len = curves[0].len();
    let r = T::of_usize(reps);
    let mut mean = Vec::with_capacity(len);
    let mut se = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(reps);
    for k in 0..len {
        column.clear();
        column.extend(curves.iter().map(|c| c[k]));
        let mu = pairwise_sum(&column) / r;
        let dev: Vec<T> = column.iter().map(|&v| (v - mu) * (v - mu)).collect();
        let var = if reps > 1 { pairwise_sum(&dev) / T::of_usize(reps - 1) } else { T::zero() };
        mean.push(mu);
        se.push((var / r).sqrt());
    }
    (mean, se)
}

/// Simulates `E J` and the threshold `a_m` under a null model.
///
/// Pass one averages the empirical thresholds of `reps` simulated samples;
/// pass two averages the curves of the same samples thresholded at that
/// common `a_m`. Replicate `r` always uses stream `(seed, r)`, so the
/// result does not depend on the number of worker threads.
#[allow(clippy::too_many_arguments)]
pub fn centering_monte_carlo<T: Scalar>(
    model: &ModelSpec,
    n: usize,
    p0: f64,
    set: ExtremeSet,
    g: &WeightFunction<T>,
    grid: &[T],
    reps: usize,
    seed: u64,
    opts: MonteCarloOptions,
) -> Result<CenteringCurve<T>> {
    check_grid(grid)?;
    if reps == 0 {
        return Err(Error::InvalidParameter("at least one Monte Carlo replicate is needed".into()));
    }
    if reps < 100 {
        log::warn!("centering from only {reps} Monte Carlo replicates");
    }
    let thresholds = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = simulate_replicate(model, n, seed, r)?;
            Ok(threshold_from_p0(&x, set, p0)?.a_m)
        })
        .collect::<Result<Vec<f64>>>()?;
    let a_m = pairwise_sum(&thresholds) / reps as f64;
    let thr = ThresholdSpec::new(p0, a_m)?;

    let curves = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = simulate_replicate(model, n, seed, r)?;
            let ind = indicators(&x, &thr, set, opts.centering)?;
            Ok(igram(&ind, g, grid, opts.variant)?.values)
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    let (values, se) = mean_and_se(&curves);
    Ok(CenteringCurve {
        grid: grid.to_vec(),
        values,
        std_error: Some(se),
        provenance: CenteringProvenance::MonteCarlo {
            model: model.clone(),
            reps,
            seed,
        },
        threshold: Some(a_m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    GR,
    CvM,
}

/// Normalisation of the deviation `J - E J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rate {
    /// `(n/m)^{1/2}`, general null.
    SqrtNoverM,
    /// `n^{1/2}`, eta-dependent null.
    SqrtN,
}

impl Rate {
    pub fn factor(self, n: usize, m: f64) -> f64 {
        match self {
            Rate::SqrtNoverM => (n as f64 / m).sqrt(),
            Rate::SqrtN => (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantileSource {
    Bootstrap,
    LimitSeries,
    BridgeClosedForm,
    NullSimulation,
}

/// A goodness-of-fit statistic before a critical value is attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistic<T> {
    pub kind: TestKind,
    pub rate: Rate,
    pub statistic: T,
}

impl<T: Scalar> TestStatistic<T> {
    pub fn against(self, critical_value: T, level: f64, source: QuantileSource) -> TestResult<T> {
        TestResult {
            statistic: self.statistic,
            kind: self.kind,
            rate: self.rate,
            quantile_source: source,
            critical_value,
            level,
            reject: self.statistic > critical_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult<T> {
    pub statistic: T,
    pub kind: TestKind,
    pub rate: Rate,
    pub quantile_source: QuantileSource,
    pub critical_value: T,
    pub level: f64,
    pub reject: bool,
}

fn deviation<T: Scalar>(curve: &IgramCurve<T>, center: &CenteringCurve<T>) -> Result<Vec<T>> {
    if curve.grid.len() != center.grid.len() {
        return Err(Error::GridMismatch(format!(
            "curve has {} points, centering has {}",
            curve.grid.len(),
            center.grid.len()
        )));
    }
    let tol = T::of(1e-12);
    if let Some(k) = curve.grid.iter().zip(&center.grid).position(|(a, b)| (*a - *b).abs() > tol * (T::one() + a.abs())) {
        return Err(Error::GridMismatch(format!("grids differ at point {k}")));
    }
    Ok(curve.values.iter().zip(&center.values).map(|(&a, &b)| a - b).collect())
}

/// Trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid<T: Scalar>(grid: &[T], values: &[T]) -> T {
    grid.windows(2)
        .zip(values.windows(2))
        .fold(T::zero(), |acc, (x, y)| acc + (x[1] - x[0]) * (y[0] + y[1]) / T::of(2.0))
}

pub(crate) fn sup_abs<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// `rate * max_grid |J - E J|`.
pub fn grs<T: Scalar>(curve: &IgramCurve<T>, center: &CenteringCurve<T>, rate: Rate) -> Result<TestStatistic<T>> {
    let dev = deviation(curve, center)?;
    Ok(TestStatistic {
        kind: TestKind::GR,
        rate,
        statistic: T::of(rate.factor(curve.n, curve.m)) * sup_abs(&dev),
    })
}

/// `rate^2 * trapezoid integral of (J - E J)^2`.
pub fn cvm<T: Scalar>(curve: &IgramCurve<T>, center: &CenteringCurve<T>, rate: Rate) -> Result<TestStatistic<T>> {
    let dev = deviation(curve, center)?;
    let sq: Vec<T> = dev.iter().map(|&d| d * d).collect();
    let f = T::of(rate.factor(curve.n, curve.m));
    Ok(TestStatistic {
        kind: TestKind::CvM,
        rate,
        statistic: f * f * trapezoid(&curve.grid, &sq),
    })
}

/// Dispatches on the statistic kind.
pub fn statistic<T: Scalar>(kind: TestKind, curve: &IgramCurve<T>, center: &CenteringCurve<T>, rate: Rate) -> Result<TestStatistic<T>> {
    match kind {
        TestKind::GR => grs(curve, center, rate),
        TestKind::CvM => cvm(curve, center, rate),
    }
}
