//! Seeded simulators for regularly varying benchmark models: iid Student-t,
//! ARMA(1,1), GARCH(1,1) and a log-normal stochastic volatility model.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, StreamPurpose};

pub const DEFAULT_BURN_IN: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    IidT,
    Arma11,
    Garch11,
    SvLogNormal,
}

/// Parameters of a benchmark model. Field names double as the JSON config
/// schema. Parameters irrelevant to `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Degrees of freedom of the Student-t innovations.
    pub df: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub theta_ma: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub alpha1: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub ar_vol: f64,
    /// Standard deviation of the log-volatility shocks (SV only).
    #[serde(default = "one")]
    pub vol_sd: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Documented index of regular variation. Metadata only.
    #[serde(default)]
    pub tail_index_alpha: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl ModelSpec {
    fn base(kind: ModelKind, df: f64) -> Self {
        ModelSpec {
            kind,
            df,
            phi: 0.0,
            theta_ma: 0.0,
            omega: 0.0,
            alpha1: 0.0,
            beta1: 0.0,
            ar_vol: 0.0,
            vol_sd: 1.0,
            burn_in: DEFAULT_BURN_IN,
            tail_index_alpha: None,
        }
    }

    pub fn iid_t(df: f64) -> Self {
        ModelSpec {
            tail_index_alpha: Some(df),
            ..Self::base(ModelKind::IidT, df)
        }
    }

    /// `X_t = phi X_{t-1} + theta_ma Z_{t-1} + Z_t`.
    pub fn arma11(phi: f64, theta_ma: f64, df: f64) -> Self {
        ModelSpec {
            phi,
            theta_ma,
            tail_index_alpha: Some(df),
            ..Self::base(ModelKind::Arma11, df)
        }
    }

    /// `X_t = sigma_t Z_t`, `sigma_t^2 = omega + alpha1 X_{t-1}^2 + beta1 sigma_{t-1}^2`.
    pub fn garch11(omega: f64, alpha1: f64, beta1: f64, df: f64) -> Self {
        ModelSpec {
            omega,
            alpha1,
            beta1,
            ..Self::base(ModelKind::Garch11, df)
        }
    }

    /// `X_t = sigma_t Z_t`, `log sigma_t = ar_vol log sigma_{t-1} + eps_t`.
    pub fn sv_lognormal(ar_vol: f64, df: f64) -> Self {
        ModelSpec {
            ar_vol,
            tail_index_alpha: Some(df),
            ..Self::base(ModelKind::SvLogNormal, df)
        }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_tail_index(mut self, alpha: f64) -> Self {
        self.tail_index_alpha = Some(alpha);
        self
    }

    /// Checks the hard parameter constraints. GARCH parameters with
    /// `alpha1 + beta1 >= 1` pass; see [`ModelSpec::is_stationary`].
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if !(self.df > 0.0 && self.df.is_finite()) {
            return bad("df must be a positive finite number");
        }
        match self.kind {
            ModelKind::IidT => {}
            ModelKind::Arma11 => {
                if !(self.phi.abs() < 1.0) {
                    return bad("Arma11 requires |phi| < 1");
                }
                if !self.theta_ma.is_finite() {
                    return bad("theta_ma must be finite");
                }
            }
            ModelKind::Garch11 => {
                if !(self.omega > 0.0) {
                    return bad("Garch11 requires omega > 0");
                }
                if !(self.alpha1 >= 0.0 && self.beta1 >= 0.0) {
                    return bad("Garch11 requires alpha1, beta1 >= 0");
                }
            }
            ModelKind::SvLogNormal => {
                if !(self.ar_vol.abs() < 1.0) {
                    return bad("SvLogNormal requires |ar_vol| < 1");
                }
                if !(self.vol_sd >= 0.0 && self.vol_sd.is_finite()) {
                    return bad("vol_sd must be nonnegative");
                }
            }
        }
        Ok(())
    }

    /// Second-order stationarity of the recursion.
    pub fn is_stationary(&self) -> bool {
        match self.kind {
            ModelKind::IidT => true,
            ModelKind::Arma11 => self.phi.abs() < 1.0,
            ModelKind::Garch11 => self.alpha1 + self.beta1 < 1.0,
            ModelKind::SvLogNormal => self.ar_vol.abs() < 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Simulated {
        spec: ModelSpec,
        seed: u64,
        replicate: u64,
        stationary: bool,
    },
    Ingested(PathBuf),
    Provided,
}

/// A finite real-valued time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    values: Vec<f64>,
    origin: Origin,
}

impl Series {
    pub fn new(values: Vec<f64>, origin: Origin) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                min: 2,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Series { values, origin })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new(values, Origin::Provided)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Student-t variate as `N / sqrt(V / df)` with `V ~ chi^2(df)`.
pub fn student_t<R: Rng + ?Sized>(rng: &mut R, chi: &ChiSquared<f64>, df: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let v = chi.sample(rng);
    z / (v / df).sqrt()
}

fn t_noise(rng: &mut ChaCha8Rng, df: f64, len: usize) -> Result<Vec<f64>> {
    let chi = ChiSquared::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((0..len).map(|_| student_t(rng, &chi, df)).collect())
}

/// Factor taking Student-t noise to unit variance, so that `omega`,
/// `alpha1`, `beta1` act on a unit-variance innovation as in the usual
/// GARCH parametrisation. For `df <= 2` the variance is infinite and the
/// noise is used as drawn.
pub fn garch_noise_scale(df: f64) -> f64 {
    if df > 2.0 {
        ((df - 2.0) / df).sqrt()
    } else {
        1.0
    }
}

/// Simulates `n` observations of `spec` from replicate stream 0.
pub fn simulate(spec: &ModelSpec, n: usize, seed: u64) -> Result<Series> {
    simulate_replicate(spec, n, seed, 0)
}

/// Simulates `n` observations from the stream `(seed, replicate)`.
///
/// All models consume the same innovation stream: `burn_in + n` Student-t
/// draws, of which the first `burn_in` outputs are discarded. Degenerate
/// parameter choices therefore reproduce the iid stream exactly (for GARCH
/// up to the factor [`garch_noise_scale`]).
pub fn simulate_replicate(spec: &ModelSpec, n: usize, seed: u64, replicate: u64) -> Result<Series> {
    if n < 2 {
        return Err(Error::InvalidParameter("n must be at least 2".into()));
    }
    spec.validate()?;
    let total = spec.burn_in + n;
    let mut noise_rng = stream_rng(seed, replicate, StreamPurpose::Noise);
    let z = t_noise(&mut noise_rng, spec.df, total)?;

    let mut out = Vec::with_capacity(n);
    let record = |t: usize, x: f64, out: &mut Vec<f64>| -> Result<()> {
        if !x.is_finite() {
            return Err(Error::Simulation { index: t });
        }
        if t >= spec.burn_in {
            out.push(x);
        }
        Ok(())
    };

    match spec.kind {
        ModelKind::IidT => {
            for (t, &zt) in z.iter().enumerate() {
                record(t, zt, &mut out)?;
            }
        }
        ModelKind::Arma11 => {
            let (mut x_prev, mut z_prev) = (0.0, 0.0);
            for (t, &zt) in z.iter().enumerate() {
                let x = spec.phi * x_prev + spec.theta_ma * z_prev + zt;
                record(t, x, &mut out)?;
                x_prev = x;
                z_prev = zt;
            }
        }
        ModelKind::Garch11 => {
            let persistence = spec.alpha1 + spec.beta1;
            let mut sigma2 = if persistence < 1.0 {
                spec.omega / (1.0 - persistence)
            } else {
                log::warn!("GARCH(1,1) with alpha1 + beta1 = {persistence} is not second-order stationary");
                spec.omega
            };
            let scale = garch_noise_scale(spec.df);
            let mut x_prev = 0.0;
            for (t, &zt) in z.iter().enumerate() {
                sigma2 = spec.omega + spec.alpha1 * x_prev * x_prev + spec.beta1 * sigma2;
                let x = sigma2.sqrt() * scale * zt;
                record(t, x, &mut out)?;
                x_prev = x;
            }
        }
        ModelKind::SvLogNormal => {
            let mut vol_rng = stream_rng(seed, replicate, StreamPurpose::Volatility);
            let mut log_sigma = 0.0;
            for (t, &zt) in z.iter().enumerate() {
                let eps: f64 = StandardNormal.sample(&mut vol_rng);
                log_sigma = spec.ar_vol * log_sigma + spec.vol_sd * eps;
                record(t, log_sigma.exp() * zt, &mut out)?;
            }
        }
    }

    Series::new(
        out,
        Origin::Simulated {
            spec: spec.clone(),
            seed,
            replicate,
            stationary: spec.is_stationary(),
        },
    )
}

/// Hill estimate of the upper tail index from the `k` largest positive
/// observations.
pub fn hill_tail_index(values: &[f64], k: usize) -> Result<f64> {
    let mut pos: Vec<f64> = values.iter().copied().filter(|v| *v > 0.0).collect();
    if k == 0 || k >= pos.len() {
        return Err(Error::InvalidParameter(format!(
            "k must lie in 1..{} (number of positive values)",
            pos.len()
        )));
    }
    pos.sort_by(|a, b| b.total_cmp(a));
    let base = pos[k].ln();
    let mean_excess = pos[..k].iter().map(|v| v.ln() - base).sum::<f64>() / k as f64;
    Ok(1.0 / mean_excess)
}
