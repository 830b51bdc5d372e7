//! Unitary Fourier transforms of uniformly sampled data.
//!
//! Convention: `f̂(ξ) = (2π)^{-1/2} ∫ e^{-ixξ} f(x) dx`, approximated by the
//! rectangle rule on `x_j = origin + j·step`. Spectra are stored centred and
//! ascending in `ξ_m = m·dξ`, `dξ = 2π / (n·step)`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Lowest centred mode index for a length-`n` transform.
pub fn min_mode(n: usize) -> i64 {
    -((n / 2) as i64)
}

/// Centred, ascending angular wavenumbers.
pub fn wavenumbers(n: usize, step: f64) -> Vec<f64> {
    let dxi = 2.0 * PI / (n as f64 * step);
    let m0 = min_mode(n);
    (0..n).map(|j| (m0 + j as i64) as f64 * dxi).collect()
}

#[inline]
fn fft_slot(m: i64, n: usize) -> usize {
    m.rem_euclid(n as i64) as usize
}

/// Samples → centred spectrum.
pub fn forward(values: &[Complex64], origin: f64, step: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    plan_forward(n).process(&mut buf);
    let dxi = 2.0 * PI / (n as f64 * step);
    let scale = step / (2.0 * PI).sqrt();
    let m0 = min_mode(n);
    (0..n)
        .map(|j| {
            let m = m0 + j as i64;
            let xi = m as f64 * dxi;
            buf[fft_slot(m, n)] * Complex64::from_polar(scale, -origin * xi)
        })
        .collect()
}

/// Centred spectrum → samples; exact inverse of [`forward`].
pub fn inverse(spectrum: &[Complex64], origin: f64, step: f64) -> Vec<Complex64> {
    let n = spectrum.len();
    let dxi = 2.0 * PI / (n as f64 * step);
    let m0 = min_mode(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (j, s) in spectrum.iter().enumerate() {
        let m = m0 + j as i64;
        let xi = m as f64 * dxi;
        buf[fft_slot(m, n)] = *s * Complex64::from_polar(1.0, origin * xi);
    }
    plan_inverse(n).process(&mut buf);
    let scale = dxi / (2.0 * PI).sqrt();
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// A truncated Fourier series `f(x) = (2π)^{-1/2} dξ Σ_m c_m e^{i x m dξ}` over a
/// contiguous mode range, evaluated at arbitrary points.
#[derive(Clone, Debug)]
pub struct ModeSeries {
    pub first_mode: i64,
    pub dxi: f64,
    pub coeffs: Vec<Complex64>,
}

impl ModeSeries {
    /// Keep modes of `spectrum` (centred, length n) with index in `[lo, hi]`.
    pub fn from_spectrum(spectrum: &[Complex64], step: f64, lo: i64, hi: i64) -> Self {
        let n = spectrum.len();
        let m0 = min_mode(n);
        let m_max = m0 + n as i64 - 1;
        let lo = lo.max(m0);
        let hi = hi.min(m_max);
        let coeffs = if hi >= lo {
            spectrum[(lo - m0) as usize..=(hi - m0) as usize].to_vec()
        } else {
            Vec::new()
        };
        ModeSeries {
            first_mode: lo,
            dxi: 2.0 * PI / (n as f64 * step),
            coeffs,
        }
    }

    /// Mode range covering `|ξ| ≤ xi_max`.
    pub fn band(spectrum: &[Complex64], step: f64, xi_max: f64) -> Self {
        let n = spectrum.len();
        let dxi = 2.0 * PI / (n as f64 * step);
        let k = (xi_max / dxi).ceil() as i64;
        Self::from_spectrum(spectrum, step, -k, k)
    }

    pub fn mode_xi(&self, j: usize) -> f64 {
        (self.first_mode + j as i64) as f64 * self.dxi
    }

    /// Multiply every coefficient by `g(ξ)`.
    pub fn map_symbol(&self, g: impl Fn(f64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * g(self.mode_xi(j)))
            .collect();
        ModeSeries {
            first_mode: self.first_mode,
            dxi: self.dxi,
            coeffs,
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        if self.coeffs.is_empty() {
            return Complex64::new(0.0, 0.0);
        }
        let z = Complex64::from_polar(1.0, x * self.dxi);
        let mut p = Complex64::from_polar(1.0, x * self.dxi * self.first_mode as f64);
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.coeffs {
            acc += c * p;
            p *= z;
        }
        acc * (self.dxi / (2.0 * PI).sqrt())
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<Complex64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}
