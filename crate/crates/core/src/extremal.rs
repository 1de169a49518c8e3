//! Thresholding, extreme-event indicators and the sample extremogram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Series;
use crate::scalar::Scalar;
use crate::spectral::fft_autocorrelation;

/// The set `A` of (threshold-scaled) values counted as extreme. Every
/// variant excludes a neighbourhood of zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtremeSet {
    /// `(1, inf)`
    UpperTail,
    /// `(-inf, -1)`
    LowerTail,
    /// `|x| > 1`
    AbsTail,
    /// Open interval `(lo, hi)` with `0 < lo` or `hi < 0`.
    Interval(f64, f64),
}

impl ExtremeSet {
    pub fn validate(&self) -> Result<()> {
        if let ExtremeSet::Interval(lo, hi) = *self {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("interval ({lo}, {hi}) is empty")));
            }
            if !(lo > 0.0 || hi < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "interval ({lo}, {hi}) is not bounded away from zero"
                )));
            }
        }
        Ok(())
    }

    /// The scalar functional whose upper quantile defines the threshold.
    fn functional(&self, x: f64) -> f64 {
        match *self {
            ExtremeSet::UpperTail => x,
            ExtremeSet::LowerTail => -x,
            ExtremeSet::AbsTail => x.abs(),
            ExtremeSet::Interval(lo, _) if lo > 0.0 => x,
            ExtremeSet::Interval(..) => -x,
        }
    }

    /// Whether `x / threshold` lies in the set. Evaluated without division
    /// so that values equal to the threshold are never counted.
    pub fn contains_scaled(&self, x: f64, threshold: f64) -> bool {
        match *self {
            ExtremeSet::UpperTail => x > threshold,
            ExtremeSet::LowerTail => x < -threshold,
            ExtremeSet::AbsTail => x.abs() > threshold,
            ExtremeSet::Interval(lo, hi) => x > lo * threshold && x < hi * threshold,
        }
    }
}

impl std::str::FromStr for ExtremeSet {
    type Err = Error;

    /// Accepts `upper`, `lower`, `abs` or `interval:LO:HI`.
    fn from_str(s: &str) -> Result<Self> {
        let set = match s.to_ascii_lowercase().as_str() {
            "upper" | "uppertail" => ExtremeSet::UpperTail,
            "lower" | "lowertail" => ExtremeSet::LowerTail,
            "abs" | "abstail" => ExtremeSet::AbsTail,
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["interval", lo, hi] => {
                        let parse = |v: &str| {
                            v.parse::<f64>()
                                .map_err(|_| Error::InvalidParameter(format!("bad interval bound '{v}'")))
                        };
                        ExtremeSet::Interval(parse(lo)?, parse(hi)?)
                    }
                    _ => return Err(Error::InvalidParameter(format!("unknown extreme set '{s}'"))),
                }
            }
        };
        set.validate()?;
        Ok(set)
    }
}

/// Threshold `a_m` with `p0 = P(X > a_m) = 1/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub p0: f64,
    pub a_m: f64,
    pub m: f64,
}

impl ThresholdSpec {
    /// A threshold given directly, e.g. one estimated from a null model.
    pub fn new(p0: f64, a_m: f64) -> Result<Self> {
        check_p0(p0)?;
        if !(a_m > 0.0 && a_m.is_finite()) {
            return Err(Error::DegenerateThreshold(format!("threshold {a_m} is not positive")));
        }
        Ok(ThresholdSpec { p0, a_m, m: 1.0 / p0 })
    }
}

fn check_p0(p0: f64) -> Result<()> {
    if !(p0 > 0.0 && p0 <= 0.5) {
        return Err(Error::InvalidParameter(format!("p0 = {p0} must lie in (0, 0.5]")));
    }
    Ok(())
}

/// Number of upper exceedances targeted for a sample of length `n`,
/// `floor(n p0)` with a guard against representation error in `p0`.
pub(crate) fn target_exceedances(n: usize, p0: f64) -> usize {
    (n as f64 * p0 + 1e-9).floor() as usize
}

/// Resolves `a_m` as the `ceil(n (1 - p0))`-th order statistic of the tail
/// functional (`X`, `-X` or `|X|`), without interpolation. Exceedance is
/// strict, so ties at the threshold count as non-exceedances.
pub fn threshold_from_p0(series: &Series, set: ExtremeSet, p0: f64) -> Result<ThresholdSpec> {
    check_p0(p0)?;
    set.validate()?;
    let n = series.len();
    let min_len = (1.0 / p0 - 1e-9).ceil() as usize;
    if n < min_len {
        return Err(Error::SeriesTooShort { min: min_len, got: n });
    }
    let mut f: Vec<f64> = series.values().iter().map(|&x| set.functional(x)).collect();
    if f.iter().all(|&v| v == f[0]) {
        return Err(Error::TiedThreshold);
    }
    f.sort_by(f64::total_cmp);
    let rank = n - target_exceedances(n, p0);
    let a_m = f[rank - 1];
    if !(a_m > 0.0) {
        return Err(Error::DegenerateThreshold(format!(
            "order statistic {a_m} is not positive; the set must stay away from zero"
        )));
    }
    let exceedances = f.iter().filter(|&&v| v > a_m).count();
    if exceedances == 0 {
        return Err(Error::DegenerateThreshold("no observation exceeds the threshold".into()));
    }
    Ok(ThresholdSpec { p0, a_m, m: 1.0 / p0 })
}

/// How indicator values are centred before products are formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CenteringMode {
    None,
    /// Subtract the nominal exceedance probability.
    Theoretical(f64),
    /// Subtract the sample mean of the indicators.
    Empirical,
}

impl std::str::FromStr for CenteringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(CenteringMode::None),
            "empirical" => Ok(CenteringMode::Empirical),
            other => match other.strip_prefix("theoretical:") {
                Some(p) => p
                    .parse()
                    .map(CenteringMode::Theoretical)
                    .map_err(|_| Error::InvalidParameter(format!("bad centering '{s}'"))),
                None => Err(Error::InvalidParameter(format!("unknown centering '{s}'"))),
            },
        }
    }
}

/// Binary indicators `I_t = 1{X_t / a_m in A}` together with the scaling
/// `m` and the centering requested by downstream estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    raw: Vec<u8>,
    centering: CenteringMode,
    m: f64,
    p0: f64,
}

impl IndicatorSeries {
    /// Builds indicators from raw 0/1 values and the scaling `m`.
    pub fn from_raw(raw: Vec<u8>, m: f64, centering: CenteringMode) -> Result<Self> {
        if raw.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("indicator values must be 0 or 1".into()));
        }
        if raw.is_empty() {
            return Err(Error::SeriesTooShort { min: 1, got: 0 });
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("scaling m = {m} must be positive")));
        }
        let p0 = match centering {
            CenteringMode::Theoretical(p) => p,
            _ => 1.0 / m,
        };
        Ok(IndicatorSeries { raw, centering, m, p0 })
    }

    pub fn raw(&self) -> &[u8] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Exceedance probability used for theoretical centering.
    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn centering(&self) -> CenteringMode {
        self.centering
    }

    pub fn with_centering(&self, centering: CenteringMode) -> Self {
        let p0 = match centering {
            CenteringMode::Theoretical(p) => p,
            _ => self.p0,
        };
        IndicatorSeries {
            centering,
            p0,
            ..self.clone()
        }
    }

    pub fn exceedances(&self) -> usize {
        self.raw.iter().map(|&v| v as usize).sum()
    }

    /// Sample mean of the raw indicators.
    pub fn mean(&self) -> f64 {
        self.exceedances() as f64 / self.len() as f64
    }

    /// The value subtracted by the current centering mode.
    pub fn offset(&self) -> f64 {
        match self.centering {
            CenteringMode::None => 0.0,
            CenteringMode::Theoretical(p) => p,
            CenteringMode::Empirical => self.mean(),
        }
    }

    /// Indicators after subtracting [`IndicatorSeries::offset`].
    pub fn centered<T: Scalar>(&self) -> Vec<T> {
        let c = T::of(self.offset());
        self.raw.iter().map(|&v| T::of_usize(v as usize) - c).collect()
    }

    /// Indicators centred by an explicit constant.
    pub fn centered_by<T: Scalar>(&self, offset: f64) -> Vec<T> {
        let c = T::of(offset);
        self.raw.iter().map(|&v| T::of_usize(v as usize) - c).collect()
    }
}

/// Computes `I_t = 1{X_t / a_m in A}`. The centering is recorded, not
/// applied.
pub fn indicators(
    series: &Series,
    thr: &ThresholdSpec,
    set: ExtremeSet,
    centering: CenteringMode,
) -> Result<IndicatorSeries> {
    set.validate()?;
    let raw = series
        .values()
        .iter()
        .map(|&x| set.contains_scaled(x, thr.a_m) as u8)
        .collect();
    let mut ind = IndicatorSeries::from_raw(raw, thr.m, centering)?;
    if !matches!(centering, CenteringMode::Theoretical(_)) {
        ind.p0 = thr.p0;
    }
    Ok(ind)
}

/// Sample extremogram `gamma(h)` and its standardized form `rho(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremogramEstimate<T> {
    pub gamma: Vec<T>,
    /// `None` when `gamma(0) = 0`.
    pub rho: Option<Vec<T>>,
    pub centering: CenteringMode,
    pub m: f64,
    pub n: usize,
}

impl<T: Scalar> ExtremogramEstimate<T> {
    fn from_gamma(gamma: Vec<T>, centering: CenteringMode, m: f64, n: usize) -> Self {
        let rho = if gamma[0] > T::zero() {
            let g0 = gamma[0];
            Some(gamma.iter().map(|&g| g / g0).collect())
        } else {
            None
        };
        ExtremogramEstimate { gamma, rho, centering, m, n }
    }

    pub fn max_lag(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn gamma0(&self) -> T {
        self.gamma[0]
    }

    pub fn rho(&self) -> Result<&[T]> {
        self.rho.as_deref().ok_or(Error::ZeroGamma0)
    }
}

/// Default number of lags reported, `floor(10 log10 n)`.
pub fn default_max_lag(n: usize) -> usize {
    ((10.0 * (n as f64).log10()).floor() as usize).min(n.saturating_sub(1))
}

/// Lags up to which the direct O(n * lags) sum is used instead of the FFT.
const DIRECT_LAG_LIMIT: usize = 48;

/// Non-circular lagged products `(m/n) sum_{t=1}^{n-h} c_t c_{t+h}`,
/// `h = 0..=max_lag`, of an arbitrary real sequence.
pub(crate) fn lagged_products<T: Scalar>(c: &[T], max_lag: usize, m: f64) -> Vec<T> {
    let n = c.len();
    let scale = T::of(m) / T::of_usize(n);
    if max_lag <= DIRECT_LAG_LIMIT {
        (0..=max_lag)
            .map(|h| c[..n - h].iter().zip(&c[h..]).fold(T::zero(), |acc, (&a, &b)| acc + a * b) * scale)
            .collect()
    } else {
        let mut acf = fft_autocorrelation(c, false);
        acf.truncate(max_lag + 1);
        acf.into_iter().map(|v| v * scale).collect()
    }
}

/// `gamma(h) = (m/n) sum_{t=1}^{n-h} c(I_t) c(I_{t+h})` for `h = 0..=max_lag`,
/// with `c` the series' centering.
pub fn sample_extremogram<T: Scalar>(ind: &IndicatorSeries, max_lag: usize) -> Result<ExtremogramEstimate<T>> {
    let n = ind.len();
    if max_lag >= n {
        return Err(Error::InvalidParameter(format!("max_lag {max_lag} must be below n = {n}")));
    }
    let gamma = lagged_products(&ind.centered::<T>(), max_lag, ind.m());
    Ok(ExtremogramEstimate::from_gamma(gamma, ind.centering(), ind.m(), n))
}

/// Wraps precomputed extremogram values, e.g. from a resample.
pub fn extremogram_from_gamma<T: Scalar>(
    gamma: Vec<T>,
    centering: CenteringMode,
    m: f64,
    n: usize,
) -> Result<ExtremogramEstimate<T>> {
    if gamma.is_empty() {
        return Err(Error::InvalidParameter("extremogram needs lag 0".into()));
    }
    Ok(ExtremogramEstimate::from_gamma(gamma, centering, m, n))
}

/// Uncentered fourth-order plug-in `(m^2/n) sum_i I_i I_{i+u} I_{i+s} I_{i+t}`,
/// summed over all `i` with every index inside the sample.
pub fn fourth_order_extremogram<T: Scalar>(ind: &IndicatorSeries, u: usize, s: usize, t: usize) -> Result<T> {
    let n = ind.len();
    let reach = u.max(s).max(t);
    if reach >= n {
        return Err(Error::InvalidParameter(format!("lags ({u}, {s}, {t}) must be below n = {n}")));
    }
    let raw = ind.raw();
    let count = (0..n - reach)
        .filter(|&i| raw[i] & raw[i + u] & raw[i + s] & raw[i + t] == 1)
        .count();
    let m = ind.m();
    Ok(T::of(m * m / n as f64) * T::of_usize(count))
}
