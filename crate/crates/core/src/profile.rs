//! Modified-scattering profiles. Along the asymptotic ODE
//! `γ̇ = −iλ t⁻¹|γ|²γ` the modulus is frozen and the phase winds like
//! `−λ|γ|² log t`, so `W = γ e^{iλ|γ|² log t}` undoes the winding.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField};
use crate::rates::{self, RateFit};
use crate::spectrum;
use crate::wavepacket::{self, GammaField};

/// Earliest extraction time.
pub const EXTRACTION_FLOOR: f64 = 16.0;

/// Phase correction uses `|γ(t,v)|²` in place of `|W(v)|²`.
pub const PHASE_CONVENTION: &str = "gamma-modulus";

/// Relative size below which successive extractions count as identical.
const CONVERGED_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringProfile {
    pub v: Vec<f64>,
    pub values: Vec<Complex64>,
    pub extraction_time: f64,
    pub epsilon: f64,
    pub lambda: i32,
    pub phase_convention: String,
}

impl ScatteringProfile {
    pub fn new(v: Vec<f64>, values: Vec<Complex64>, extraction_time: f64, epsilon: f64, lambda: i32) -> Result<Self> {
        if v.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples for {} velocities",
                values.len(),
                v.len()
            )));
        }
        if v.len() < 2 || v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("profile velocities must be increasing".into()));
        }
        Ok(ScatteringProfile {
            v,
            values,
            extraction_time,
            epsilon,
            lambda,
            phase_convention: PHASE_CONVENTION.to_string(),
        })
    }

    /// Profile `W(v) = f(v)` on a uniform window.
    pub fn from_fn(window: &wavepacket::VWindow, lambda: i32, f: impl Fn(f64) -> Complex64) -> Self {
        let v = window.samples();
        let values = v.iter().map(|&x| f(x)).collect();
        ScatteringProfile {
            v,
            values,
            extraction_time: f64::INFINITY,
            epsilon: 0.0,
            lambda,
            phase_convention: PHASE_CONVENTION.to_string(),
        }
    }

    pub fn dv(&self) -> f64 {
        self.v[1] - self.v[0]
    }

    pub fn norm_l2(&self) -> f64 {
        wavepacket::l2_v(&self.values, self.dv())
    }

    pub fn norm_linf(&self) -> f64 {
        wavepacket::linf(&self.values)
    }

    /// Centred spectrum in the `v` variable with its frequencies.
    pub fn spectrum(&self) -> (Vec<Complex64>, Vec<f64>, f64) {
        let n = self.v.len();
        let dv = self.dv();
        let spec = spectrum::forward(&self.values, self.v[0], dv);
        let eta = spectrum::wavenumbers(n, dv);
        let deta = 2.0 * std::f64::consts::PI / (n as f64 * dv);
        (spec, eta, deta)
    }

    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        let (spec, eta, deta) = self.spectrum();
        grid::sobolev_norm_samples(&spec, &eta, deta, s)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        ScatteringProfile {
            values: self.values.iter().map(|z| z * a).collect(),
            ..self.clone()
        }
    }

    /// Samples restricted to `|v| ≤ vmax`.
    pub fn restrict(&self, vmax: f64) -> Self {
        let keep: Vec<usize> = (0..self.v.len()).filter(|&k| self.v[k].abs() <= vmax + 1e-12).collect();
        ScatteringProfile {
            v: keep.iter().map(|&k| self.v[k]).collect(),
            values: keep.iter().map(|&k| self.values[k]).collect(),
            ..self.clone()
        }
    }

    /// `‖self − other‖` over shared velocity samples.
    pub fn distance(&self, other: &ScatteringProfile) -> Result<(f64, f64)> {
        if self.v != other.v {
            return Err(Error::GridMismatch("profile velocities differ".into()));
        }
        let d: Vec<Complex64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok((wavepacket::linf(&d), wavepacket::l2_v(&d, self.dv())))
    }
}

/// `W(v) = γ(t,v) e^{iλ|γ(t,v)|² log t}`.
pub fn extract_profile(g: &GammaField, lambda: i32, epsilon: f64) -> Result<ScatteringProfile> {
    if !(g.time >= EXTRACTION_FLOOR) {
        return Err(Error::TimeRange(format!(
            "profile extraction needs t ≥ {EXTRACTION_FLOOR}, got {}",
            g.time
        )));
    }
    let lt = g.time.ln();
    let lam = lambda as f64;
    let values = g
        .values
        .iter()
        .map(|z| z * Complex64::from_polar(1.0, lam * z.norm_sqr() * lt))
        .collect();
    ScatteringProfile::new(g.v.clone(), values, g.time, epsilon, lambda)
}

/// The inverse map: `γ = W e^{-iλ|W|² log t}`.
pub fn synthetic_gamma(w: &ScatteringProfile, t: f64) -> GammaField {
    let lam = w.lambda as f64;
    let lt = t.ln();
    GammaField {
        time: t,
        v: w.v.clone(),
        values: w
            .values
            .iter()
            .map(|z| z * Complex64::from_polar(1.0, -lam * z.norm_sqr() * lt))
            .collect(),
        dv_values: None,
        kernel: wavepacket::PacketKernel,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileStep {
    pub t: f64,
    pub t_next: f64,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileConvergence {
    pub steps: Vec<ProfileStep>,
    pub converged: bool,
    pub rate_linf: Option<RateFit>,
    pub rate_l2: Option<RateFit>,
}

/// Differences of successive extractions `‖W_{t_k} − W_{t_{k+1}}‖` fitted
/// against `t_k`.
pub fn profile_convergence(run: &[GammaField], lambda: i32) -> Result<ProfileConvergence> {
    if run.len() < 4 {
        return Err(Error::InsufficientSpan(format!(
            "need at least 4 extraction times, have {}",
            run.len()
        )));
    }
    let span = run.last().unwrap().time / run[0].time;
    if span < 4.0 {
        return Err(Error::InsufficientSpan(format!(
            "extraction times span {span:.3}×, need two octaves"
        )));
    }
    let profiles = run
        .iter()
        .map(|g| extract_profile(g, lambda, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::with_capacity(profiles.len() - 1);
    for pair in profiles.windows(2) {
        let (linf, l2) = pair[0].distance(&pair[1])?;
        steps.push(ProfileStep {
            t: pair[0].extraction_time,
            t_next: pair[1].extraction_time,
            linf,
            l2,
        });
    }
    let scale = profiles.iter().map(|p| p.norm_linf()).fold(0.0, f64::max);
    let converged = steps.iter().all(|s| s.linf <= CONVERGED_TOLERANCE * scale.max(f64::MIN_POSITIVE));
    let (rate_linf, rate_l2) = if converged {
        (None, None)
    } else {
        let a: Vec<(f64, f64)> = steps.iter().map(|s| (s.t, s.linf)).collect();
        let b: Vec<(f64, f64)> = steps.iter().map(|s| (s.t, s.l2)).collect();
        (Some(rates::fit_power_law(&a)?), Some(rates::fit_power_law(&b)?))
    };
    Ok(ProfileConvergence {
        steps,
        converged,
        rate_linf,
        rate_l2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticError {
    pub t: f64,
    pub err_x_linf: f64,
    pub err_x_l2: f64,
    pub err_xi_linf: f64,
    pub err_xi_l2: f64,
}

/// Residuals of `u ≈ t^{-1/2} e^{iφ} W(x/t) e^{-iλ|W|² log t}` at `x = vt`
/// and of `û ≈ e^{iπ/4} e^{-itξ²/2} W(ξ) e^{-iλ|W|² log t}` at `ξ = v`, over
/// the profile's velocity samples. `L²` norms are taken in `v`.
pub fn asymptotic_error(u: &ComplexField, w: &ScatteringProfile) -> Result<AsymptoticError> {
    let t = u.time;
    let window_extent = w.v[0].abs().max(w.v.last().unwrap().abs()) * t;
    let limit = wavepacket::WINDOW_FRACTION * u.grid.half_length();
    if window_extent > limit * (1.0 + 1e-12) {
        return Err(Error::WindowOutsideBox {
            extent: window_extent,
            limit,
        });
    }
    let lam = w.lambda as f64;
    let lt = t.ln();
    let wound: Vec<Complex64> = w
        .values
        .iter()
        .map(|z| z * Complex64::from_polar(1.0, -lam * z.norm_sqr() * lt))
        .collect();
    let points: Vec<f64> = w.v.iter().map(|v| v * t).collect();
    let ux = u.interpolate(&points);
    let dx: Vec<Complex64> = ux
        .iter()
        .zip(w.v.iter().zip(&wound))
        .map(|(a, (&v, z))| a - z * Complex64::from_polar(t.powf(-0.5), v * v * t / 2.0))
        .collect();
    let uxi = wavepacket::fourier_at(u, &w.v);
    let dxi: Vec<Complex64> = uxi
        .iter()
        .zip(w.v.iter().zip(&wound))
        .map(|(a, (&v, z))| a - z * Complex64::from_polar(1.0, FRAC_PI_4 - t * v * v / 2.0))
        .collect();
    let dv = w.dv();
    Ok(AsymptoticError {
        t,
        err_x_linf: wavepacket::linf(&dx),
        err_x_l2: wavepacket::l2_v(&dx, dv),
        err_xi_linf: wavepacket::linf(&dxi),
        err_xi_l2: wavepacket::l2_v(&dxi, dv),
    })
}

/// Scan ceiling and step for the regularity index.
pub const REGULARITY_MAX: f64 = 2.0;
pub const REGULARITY_STEP: f64 = 0.05;

/// Ratio `‖W‖_{H^s} / ‖W‖_{L²}` that defines the regularity index.
pub const REGULARITY_RATIO: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regularity {
    pub index: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Largest scanned `s` with `‖W‖_{H^s} ≤ 10 ‖W‖_{L²}`, and the norm curve.
pub fn profile_regularity(w: &ScatteringProfile) -> Result<Regularity> {
    let steps = (REGULARITY_MAX / REGULARITY_STEP).round() as usize;
    let (spec, eta, deta) = w.spectrum();
    let curve = (0..=steps)
        .map(|k| {
            let s = k as f64 * REGULARITY_STEP;
            grid::sobolev_norm_samples(&spec, &eta, deta, s).map(|n| (s, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = curve[0].1;
    let index = curve
        .iter()
        .take_while(|(_, n)| *n <= REGULARITY_RATIO * base)
        .last()
        .map_or(0.0, |(s, _)| *s);
    Ok(Regularity { index, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::wavepacket::VWindow;
    use proptest::prelude::*;

    fn bump(window: &VWindow, lambda: i32, amp: f64) -> ScatteringProfile {
        ScatteringProfile::from_fn(window, lambda, |v| {
            Complex64::from_polar(amp * (-v * v).exp(), 0.3 * v)
        })
    }

    #[test]
    fn zero_gamma_gives_zero_profile() {
        let g = GammaField::zeros(32.0, vec![-1.0, 0.0, 1.0]);
        let w = extract_profile(&g, 1, 0.1).unwrap();
        assert!(w.values.iter().all(|z| z.norm() == 0.0));
        assert_eq!(w.phase_convention, "gamma-modulus");
    }

    #[test]
    fn extraction_floor() {
        let g = GammaField::zeros(8.0, vec![-1.0, 0.0, 1.0]);
        assert!(matches!(extract_profile(&g, 1, 0.1), Err(Error::TimeRange(_))));
    }

    #[test]
    fn synthetic_ode_profile_converges_exactly() {
        let win = VWindow { v_min: -3.0, v_max: 3.0, n: 121 };
        let w = bump(&win, 1, 0.8);
        let run: Vec<GammaField> = [16.0, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&t| synthetic_gamma(&w, t))
            .collect();
        let c = profile_convergence(&run, 1).unwrap();
        assert!(c.converged);
        assert!(c.rate_l2.is_none());
        assert!(matches!(profile_convergence(&run[..3], 1), Err(Error::InsufficientSpan(_))));
    }

    #[test]
    fn regularity_of_smooth_and_rough_profiles() {
        let win = VWindow { v_min: -8.0, v_max: 8.0, n: 1025 };
        let smooth = ScatteringProfile::from_fn(&win, 1, |v| Complex64::new((-v * v / 2.0).exp(), 0.0));
        let r = profile_regularity(&smooth).unwrap();
        assert_eq!(r.index, REGULARITY_MAX);
        assert!(r.curve.windows(2).all(|p| p[1].1 >= p[0].1));
        let jump = ScatteringProfile::from_fn(&win, 1, |v| {
            Complex64::new(if v.abs() < 1.0 { 1.0 } else { 0.0 }, 0.0)
        });
        let rj = profile_regularity(&jump).unwrap();
        assert!(rj.index < r.index);
        assert!(rj.index <= 1.0, "jump index {}", rj.index);
    }

    #[test]
    fn manufactured_solution_has_no_asymptotic_error() {
        let g = make_grid(256.0, 8192).unwrap();
        let t = 40.0;
        let win = VWindow { v_min: -4.0, v_max: 4.0, n: 161 };
        let w = ScatteringProfile::from_fn(&win, 1, |v| Complex64::new(0.3 * (-v * v).exp(), 0.0));
        let u = ComplexField::from_fn(g.clone(), t, |x| {
            let v = x / t;
            let a = 0.3 * (-v * v).exp();
            Complex64::from_polar(a / t.sqrt(), x * x / (2.0 * t) - a * a * t.ln())
        });
        let e = asymptotic_error(&u, &w).unwrap();
        assert!(e.err_x_linf < 1e-12 && e.err_x_l2 < 1e-12, "{e:?}");
        // Stationary phase leaves an O(1/t) correction on the Fourier side.
        assert!(e.err_xi_l2 < 0.05 * w.norm_l2(), "{e:?}");
    }

    proptest! {
        #[test]
        fn extraction_inverts_winding(amp in 0.01f64..1.5, t in 16.0f64..1e4, lambda in prop::sample::select(vec![-1, 1])) {
            let win = VWindow { v_min: -2.0, v_max: 2.0, n: 41 };
            let w = bump(&win, lambda, amp);
            let g = synthetic_gamma(&w, t);
            let back = extract_profile(&g, lambda, 0.0).unwrap();
            for (a, b) in back.values.iter().zip(&w.values) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn extraction_keeps_modulus_and_gauge(amp in 0.01f64..1.5, theta in -3.0f64..3.0) {
            let win = VWindow { v_min: -2.0, v_max: 2.0, n: 41 };
            let w = bump(&win, 1, amp);
            let g = synthetic_gamma(&w, 50.0);
            let e = extract_profile(&g, 1, 0.0).unwrap();
            for (a, b) in e.values.iter().zip(&g.values) {
                prop_assert!((a.norm() - b.norm()).abs() < 1e-14);
            }
            prop_assert!((e.norm_l2() - g.norm_l2()).abs() < 1e-12);
            let rot = Complex64::from_polar(1.0, theta);
            let er = extract_profile(&g.scale(rot), 1, 0.0).unwrap();
            for (a, b) in er.values.iter().zip(&e.values) {
                prop_assert!((a - b * rot).norm() < 1e-13);
            }
        }
    }
}
