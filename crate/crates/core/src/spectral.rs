//! Extremal periodogram, weight functions and the cosine coefficient
//! families `psi_h`, `psi_hat_h` and `c_h(g)`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::extremal::{CenteringMode, IndicatorSeries};
use crate::scalar::Scalar;

/// Non-negative weight function `g` on `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFunction<T> {
    /// `g = 1`.
    One,
    /// Piecewise-linear interpolation of tabulated values. `beta` is the
    /// declared Hölder exponent; it is recorded, not verified.
    Tabulated { nodes: Vec<T>, values: Vec<T>, beta: T },
}

impl<T: Scalar> WeightFunction<T> {
    pub fn tabulated(nodes: Vec<T>, values: Vec<T>, beta: T) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if nodes.len() < 2 || nodes.len() != values.len() {
            return bad("tabulated weight needs >= 2 nodes and one value per node".into());
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("weight nodes must be strictly increasing".into());
        }
        let tol = T::of(1e-9);
        if nodes[0] > tol || nodes[nodes.len() - 1] < T::PI() - tol {
            return bad("weight nodes must cover [0, pi]".into());
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return bad("weight values must be finite and nonnegative".into());
        }
        if !(beta > T::of(0.75) && beta <= T::one()) {
            return bad(format!("Hölder exponent {beta} must lie in (3/4, 1]"));
        }
        Ok(WeightFunction::Tabulated { nodes, values, beta })
    }

    /// Tabulates `f` on `k` equispaced nodes of `[0, pi]`.
    pub fn from_fn(f: impl Fn(T) -> T, k: usize, beta: T) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter("need at least 2 nodes".into()));
        }
        let nodes: Vec<T> = (0..k)
            .map(|i| if i + 1 == k { T::PI() } else { T::PI() * T::of_usize(i) / T::of_usize(k - 1) })
            .collect();
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::tabulated(nodes, values, beta)
    }

    pub fn beta(&self) -> T {
        match self {
            WeightFunction::One => T::one(),
            WeightFunction::Tabulated { beta, .. } => *beta,
        }
    }

    pub fn is_one(&self) -> bool {
        matches!(self, WeightFunction::One)
    }

    pub fn eval(&self, lambda: T) -> T {
        match self {
            WeightFunction::One => T::one(),
            WeightFunction::Tabulated { nodes, values, .. } => {
                if lambda <= nodes[0] {
                    return values[0];
                }
                let last = nodes.len() - 1;
                if lambda >= nodes[last] {
                    return values[last];
                }
                let k = nodes.partition_point(|&x| x <= lambda) - 1;
                let w = (lambda - nodes[k]) / (nodes[k + 1] - nodes[k]);
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// Linear pieces `(a, b, g(a), slope)` covering `[0, pi]`.
    fn pieces(&self) -> Vec<(T, T, T, T)> {
        match self {
            WeightFunction::One => vec![(T::zero(), T::PI(), T::one(), T::zero())],
            WeightFunction::Tabulated { nodes, values, .. } => {
                let mut out = Vec::with_capacity(nodes.len() + 1);
                if nodes[0] > T::zero() {
                    out.push((T::zero(), nodes[0], values[0], T::zero()));
                }
                for k in 0..nodes.len() - 1 {
                    let slope = (values[k + 1] - values[k]) / (nodes[k + 1] - nodes[k]);
                    out.push((nodes[k], nodes[k + 1], values[k], slope));
                }
                out
            }
        }
    }
}

/// `int_a^b cos(h l) (ga + slope (l - a)) dl`, in closed form.
fn linear_cos_integral<T: Scalar>(h: usize, a: T, b: T, ga: T, slope: T) -> T {
    if b <= a {
        return T::zero();
    }
    if h == 0 {
        let d = b - a;
        return ga * d + slope * d * d / T::of(2.0);
    }
    let hf = T::of_usize(h);
    let anti = |l: T| (ga + slope * (l - a)) * (hf * l).sin() / hf + slope * (hf * l).cos() / (hf * hf);
    anti(b) - anti(a)
}

/// `psi_h(x) = int_0^x cos(h l) g(l) dl`.
///
/// Closed forms for `g = 1`; exact piecewise integration of the linear
/// interpolant otherwise.
pub fn psi<T: Scalar>(g: &WeightFunction<T>, h: usize, x: T) -> T {
    match g {
        WeightFunction::One if h == 0 => x,
        WeightFunction::One => {
            let hf = T::of_usize(h);
            (hf * x).sin() / hf
        }
        _ => g
            .pieces()
            .into_iter()
            .take_while(|&(a, ..)| a < x)
            .map(|(a, b, ga, slope)| linear_cos_integral(h, a, b.min(x), ga, slope))
            .fold(T::zero(), |acc, v| acc + v),
    }
}

/// `psi_h` on an increasing grid in one sweep over the weight's pieces.
pub fn psi_curve<T: Scalar>(g: &WeightFunction<T>, h: usize, grid: &[T]) -> Vec<T> {
    if g.is_one() {
        return grid.iter().map(|&x| psi(g, h, x)).collect();
    }
    let pieces = g.pieces();
    let mut out = Vec::with_capacity(grid.len());
    let (mut k, mut done, mut pos) = (0usize, T::zero(), T::zero());
    for &x in grid {
        while k < pieces.len() && pieces[k].1 <= x {
            let (a, b, ga, slope) = pieces[k];
            done = done + linear_cos_integral(h, pos.max(a), b, ga, slope);
            pos = b;
            k += 1;
        }
        let partial = if k < pieces.len() {
            let (a, _, ga, slope) = pieces[k];
            linear_cos_integral(h, pos.max(a), x, ga, slope)
        } else {
            T::zero()
        };
        out.push(done + partial);
    }
    out
}

/// `c_h(g) = int_0^pi cos(h l) g(l) dl`.
pub fn fourier_coeff<T: Scalar>(g: &WeightFunction<T>, h: usize) -> T {
    match g {
        WeightFunction::One if h == 0 => T::PI(),
        WeightFunction::One => T::zero(),
        _ => psi(g, h, T::PI()),
    }
}

/// Fourier frequency `omega_n(j) = 2 pi j / n`; exactly `pi` when `2j = n`.
pub fn fourier_frequency<T: Scalar>(j: usize, n: usize) -> T {
    if 2 * j == n {
        T::PI()
    } else {
        T::of(2.0) * T::PI() * T::of_usize(j) / T::of_usize(n)
    }
}

/// `x_n = floor(n x / 2 pi)`, robust to rounding at the Fourier nodes.
pub fn fourier_index<T: Scalar>(x: T, n: usize) -> usize {
    let v = x.as_f64() * n as f64 / (2.0 * std::f64::consts::PI);
    let k = (v + 1e-9 * v.abs().max(1.0)).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n / 2)
    }
}

/// Riemann approximation `(2 pi / n) sum_{i=1}^{x_n} g(omega_i) cos(h omega_i)`.
pub fn psi_hat<T: Scalar>(g: &WeightFunction<T>, h: usize, x: T, n: usize) -> T {
    let xn = fourier_index(x, n);
    let sum = (1..=xn).fold(T::zero(), |acc, i| {
        let w = fourier_frequency::<T>(i, n);
        acc + g.eval(w) * (T::of_usize(h) * w).cos()
    });
    T::of(2.0) * T::PI() / T::of_usize(n) * sum
}

/// `psi_hat_h` on a grid via prefix sums over the Fourier nodes.
pub fn psi_hat_curve<T: Scalar>(g: &WeightFunction<T>, h: usize, grid: &[T], n: usize) -> Vec<T> {
    let step = T::of(2.0) * T::PI() / T::of_usize(n);
    let prefix = prefix_sums((1..=n / 2).map(|i| {
        let w = fourier_frequency::<T>(i, n);
        g.eval(w) * (T::of_usize(h) * w).cos() * step
    }));
    grid.iter().map(|&x| prefix[fourier_index(x, n)]).collect()
}

/// `[0, s_1, s_1 + s_2, ...]`.
pub(crate) fn prefix_sums<T: Scalar>(terms: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = vec![T::zero()];
    let mut acc = T::zero();
    for t in terms {
        acc = acc + t;
        out.push(acc);
    }
    out
}

/// Periodogram values at the Fourier frequencies inside `(0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodogramEstimate<T> {
    pub frequencies: Vec<T>,
    pub values: Vec<T>,
    pub m: f64,
    pub n: usize,
    pub centering: CenteringMode,
}

/// A forward FFT plan of fixed length, shareable across threads.
#[derive(Clone)]
pub(crate) struct PowerSpectrum<T: Scalar> {
    fft: Arc<dyn Fft<T>>,
    n: usize,
}

impl<T: Scalar> PowerSpectrum<T> {
    pub(crate) fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        PowerSpectrum { fft, n }
    }

    /// DFT of a real sequence.
    pub(crate) fn transform(&self, c: &[T]) -> Vec<Complex<T>> {
        debug_assert_eq!(c.len(), self.n);
        let mut buf: Vec<Complex<T>> = c.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.process(&mut buf);
        buf
    }

    /// `(m/n) |sum_t c_t e^{-i t omega_j}|^2` for `j = 0..=n/2`.
    pub(crate) fn periodogram_bins(&self, c: &[T], m: f64) -> Vec<T> {
        let scale = T::of(m) / T::of_usize(self.n);
        self.transform(c)
            .into_iter()
            .take(self.n / 2 + 1)
            .map(|z| z.norm_sqr() * scale)
            .collect()
    }
}

/// Autocorrelation sums `sum_t c_t c_{t+h}`, `h = 0..n-1`, circular
/// (indices mod n) or non-circular (terms beyond `n` dropped).
pub(crate) fn fft_autocorrelation<T: Scalar>(c: &[T], circular: bool) -> Vec<T> {
    let n = c.len();
    let len = if circular { n } else { (2 * n).next_power_of_two() };
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf: Vec<Complex<T>> = c.iter().map(|&v| Complex::new(v, T::zero())).collect();
    buf.resize(len, Complex::new(T::zero(), T::zero()));
    fwd.process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), T::zero());
    }
    inv.process(&mut buf);
    let norm = T::of_usize(len);
    buf.into_iter().take(n).map(|z| z.re / norm).collect()
}

/// Extremal periodogram at the Fourier frequencies `omega_n(j) in (0, pi)`,
/// from one length-`n` FFT of the centred indicators.
pub fn periodogram_fourier<T: Scalar>(ind: &IndicatorSeries) -> Result<PeriodogramEstimate<T>> {
    let n = ind.len();
    if n < 4 {
        return Err(Error::SeriesTooShort { min: 4, got: n });
    }
    let bins = PowerSpectrum::new(n).periodogram_bins(&ind.centered::<T>(), ind.m());
    let top = (n - 1) / 2;
    Ok(PeriodogramEstimate {
        frequencies: (1..=top).map(|j| fourier_frequency(j, n)).collect(),
        values: bins[1..=top].to_vec(),
        m: ind.m(),
        n,
        centering: ind.centering(),
    })
}

/// Direct O(n) evaluation of `(m/n) |sum_t c(I_t) e^{-i t lambda}|^2`.
pub fn periodogram_at<T: Scalar>(ind: &IndicatorSeries, lambda: T) -> Result<T> {
    if !(lambda >= T::zero() && lambda <= T::PI()) {
        return Err(Error::InvalidParameter(format!("frequency {lambda} outside [0, pi]")));
    }
    let (mut re, mut im) = (T::zero(), T::zero());
    for (t, c) in ind.centered::<T>().into_iter().enumerate() {
        let arg = T::of_usize(t + 1) * lambda;
        re = re + c * arg.cos();
        im = im - c * arg.sin();
    }
    Ok(T::of(ind.m()) / T::of_usize(ind.len()) * (re * re + im * im))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
    }

    #[test]
    fn psi_closed_forms() {
        let g = WeightFunction::<f64>::One;
        assert!((psi(&g, 3, PI / 2.0) + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(psi(&g, 0, 1.25), 1.25);
        for h in 1..50 {
            assert!(psi(&g, h, PI).abs() < 1e-13);
        }
        assert_eq!(fourier_coeff(&g, 0), PI);
        assert_eq!(fourier_coeff(&g, 7), 0.0);
    }

    #[test]
    fn tabulated_coefficients_match_quadrature() {
        let g = WeightFunction::from_fn(|x: f64| x, 2, 1.0).unwrap();
        assert!((fourier_coeff(&g, 1) + 2.0).abs() < 1e-12);
        let bump = WeightFunction::from_fn(|x: f64| 1.0 + x.sin(), 33, 1.0).unwrap();
        for h in [0usize, 1, 4, 11] {
            for x in [0.3, 1.7, PI] {
                let f = |l: f64| (h as f64 * l).cos() * bump.eval(l);
                let oracle = adaptive_simpson(&f, 0.0, x, 1e-12);
                assert!((psi(&bump, h, x) - oracle).abs() < 1e-10, "h={h} x={x}");
            }
        }
    }

    #[test]
    fn psi_curve_matches_pointwise() {
        let g = WeightFunction::from_fn(|x: f64| (x - 1.0).abs() + 0.2, 17, 1.0).unwrap();
        let grid: Vec<f64> = (0..=40).map(|k| PI * k as f64 / 40.0).collect();
        for h in [0usize, 2, 9] {
            let curve = psi_curve(&g, h, &grid);
            for (x, v) in grid.iter().zip(curve) {
                assert!((v - psi(&g, h, *x)).abs() < 1e-12);
            }
            let hat = psi_hat_curve(&g, h, &grid, 64);
            for (x, v) in grid.iter().zip(hat) {
                assert!((v - psi_hat(&g, h, *x, 64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_validation() {
        assert!(WeightFunction::tabulated(vec![0.0, 1.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(WeightFunction::tabulated(vec![0.0, PI], vec![1.0, -1.0], 1.0).is_err());
        assert!(WeightFunction::tabulated(vec![0.0, PI], vec![1.0, 1.0], 0.5).is_err());
        let g = WeightFunction::tabulated(vec![0.0, PI], vec![0.0, 2.0], 0.9).unwrap();
        assert!((g.eval(PI / 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(g.beta(), 0.9);
    }

    #[test]
    fn psi_hat_examples() {
        let g = WeightFunction::<f64>::One;
        assert_eq!(psi_hat(&g, 3, 0.1, 16), 0.0);
        for x in [0.4, 1.0, 2.9, PI] {
            let v = psi_hat(&g, 0, x, 64);
            let xn = (64.0 * x / (2.0 * PI)).floor();
            assert!((v - 2.0 * PI * xn / 64.0).abs() < 1e-12);
            assert!((v - x).abs() <= 2.0 * PI / 64.0);
        }
        // Fourier nodes themselves are counted.
        assert!((psi_hat(&g, 0, fourier_frequency(5, 64), 64) - fourier_frequency::<f64>(5, 64)).abs() < 1e-12);
    }

    #[test]
    fn psi_hat_error_bound() {
        let g = WeightFunction::<f64>::One;
        let n = 4096;
        for h in 0..=20 {
            let max = (0..=n / 2)
                .map(|j| {
                    let x = fourier_frequency(j, n);
                    (psi_hat(&g, h, x, n) - psi(&g, h, x)).abs()
                })
                .fold(0.0, f64::max);
            assert!(max * n as f64 <= 30.0, "h={h}: {}", max * n as f64);
        }
    }

    #[test]
    fn periodogram_examples() {
        let zeros = IndicatorSeries::from_raw(vec![0; 32], 4.0, CenteringMode::None).unwrap();
        assert!(periodogram_fourier::<f64>(&zeros).unwrap().values.iter().all(|&v| v == 0.0));

        let mut raw = vec![0; 32];
        raw[0] = 1;
        let single = IndicatorSeries::from_raw(raw, 4.0, CenteringMode::None).unwrap();
        let p = periodogram_fourier::<f64>(&single).unwrap();
        assert_eq!(p.values.len(), 15);
        assert!(p.values.iter().all(|&v| (v - 4.0 / 32.0).abs() < 1e-14));

        let hand = IndicatorSeries::from_raw(vec![1, 0, 0, 1], 2.0, CenteringMode::None).unwrap();
        assert!((periodogram_at(&hand, PI / 2.0).unwrap() - 1.0).abs() < 1e-14);

        let ones = IndicatorSeries::from_raw(vec![1; 9], 2.0, CenteringMode::Empirical).unwrap();
        for l in [0.0, 0.5, 2.0, PI] {
            assert!(periodogram_at(&ones, l).unwrap().abs() < 1e-20);
        }
        assert!(periodogram_at(&ones, 4.0).is_err());
        assert!(periodogram_fourier::<f64>(&IndicatorSeries::from_raw(vec![1, 0, 1], 2.0, CenteringMode::None).unwrap()).is_err());
    }

    #[test]
    fn autocorrelation_circular_and_linear() {
        let c = [1.0, 2.0, -1.0, 0.5];
        let lin = fft_autocorrelation(&c, false);
        let circ = fft_autocorrelation(&c, true);
        for h in 0..4 {
            let l: f64 = (0..4 - h).map(|t| c[t] * c[t + h]).sum();
            let r: f64 = (0..4).map(|t| c[t] * c[(t + h) % 4]).sum();
            assert!((lin[h] - l).abs() < 1e-12);
            assert!((circ[h] - r).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fourier_centering_invariance(raw in prop::collection::vec(0u8..=1, 4..300)) {
            let a = IndicatorSeries::from_raw(raw.clone(), 5.0, CenteringMode::None).unwrap();
            let b = a.with_centering(CenteringMode::Empirical);
            let c = a.with_centering(CenteringMode::Theoretical(0.2));
            let (pa, pb, pc) = (
                periodogram_fourier::<f64>(&a).unwrap(),
                periodogram_fourier::<f64>(&b).unwrap(),
                periodogram_fourier::<f64>(&c).unwrap(),
            );
            for j in 0..pa.values.len() {
                prop_assert!(pa.values[j] >= 0.0);
                prop_assert!((pa.values[j] - pb.values[j]).abs() < 1e-8);
                prop_assert!((pa.values[j] - pc.values[j]).abs() < 1e-8);
            }
        }

        #[test]
        fn fft_matches_direct(raw in prop::collection::vec(0u8..=1, 4..200)) {
            let ind = IndicatorSeries::from_raw(raw, 3.0, CenteringMode::Theoretical(0.3)).unwrap();
            let p = periodogram_fourier::<f64>(&ind).unwrap();
            for (w, v) in p.frequencies.iter().zip(&p.values) {
                let d = periodogram_at(&ind, *w).unwrap();
                prop_assert!((d - v).abs() <= 1e-10 * v.abs().max(1e-3));
            }
        }
    }
}
