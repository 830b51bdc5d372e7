//! Wave packets `Ψ_v = χ((x − vt)/√t) e^{i x²/2t}` and the observable
//! `γ(t,v) = ∫ u Ψ̄_v dx`, computed three ways, together with the comparison
//! errors and the residual of the asymptotic ODE
//! `γ̇ = −iλ t⁻¹ |γ|² γ − R`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid};
use crate::solver::Perturbation;
use crate::spectrum::ModeSeries;

/// Packets may not reach past this fraction of the half length.
pub const WINDOW_FRACTION: f64 = 0.8;

/// `χ` is negligible (below `e^{-72}`) beyond this many envelope widths.
const CHI_CUTOFF: f64 = 12.0;

/// `χ₁` is negligible beyond this argument.
const CHI1_CUTOFF: f64 = 14.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// The unit-mass Gaussian `χ(y) = (2π)^{-1/2} e^{-y²/2}` and its companion
/// `χ₁ = e^{iξ²/2} · F[e^{ix²/2} χ]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketKernel;

impl PacketKernel {
    #[inline]
    pub fn chi(&self, y: f64) -> f64 {
        (-y * y / 2.0).exp() / (2.0 * PI).sqrt()
    }

    #[inline]
    pub fn chi_prime(&self, y: f64) -> f64 {
        -y * self.chi(y)
    }

    /// Closed form `χ₁(ξ) = (2π)^{-1/2} (1 − i)^{-1/2} e^{-(1 − i) ξ²/4}`.
    #[inline]
    pub fn chi1(&self, xi: f64) -> Complex64 {
        let a = Complex64::new(1.0, -1.0);
        (-(a * xi * xi) / 4.0).exp() / (a.sqrt() * (2.0 * PI).sqrt())
    }

    /// `χ₁` on `grid.xi()` from its definition, by the grid Fourier transform.
    pub fn chi1_numeric(&self, grid: &std::sync::Arc<Grid>) -> Vec<Complex64> {
        let f = ComplexField::from_fn(grid.clone(), 0.0, |x| {
            Complex64::from_polar(self.chi(x), x * x / 2.0)
        });
        let spec = grid::fourier_forward(&f);
        spec.values
            .iter()
            .zip(grid.xi())
            .map(|(s, &xi)| s * Complex64::from_polar(1.0, xi * xi / 2.0))
            .collect()
    }

    /// `∫ χ₁ dξ`; equals `e^{iπ/4}` for the Gaussian.
    pub fn chi1_integral(&self) -> Complex64 {
        Complex64::from_polar(1.0, PI / 4.0)
    }
}

/// Uniform velocity samples `v_min ..= v_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VWindow {
    pub v_min: f64,
    pub v_max: f64,
    pub n: usize,
}

impl Default for VWindow {
    fn default() -> Self {
        VWindow {
            v_min: -4.0,
            v_max: 4.0,
            n: 2049,
        }
    }
}

impl VWindow {
    pub fn samples(&self) -> Vec<f64> {
        let h = self.dv();
        (0..self.n)
            .map(|k| if k + 1 == self.n { self.v_max } else { self.v_min + k as f64 * h })
            .collect()
    }

    pub fn dv(&self) -> f64 {
        (self.v_max - self.v_min) / (self.n - 1) as f64
    }

    pub fn extent(&self) -> f64 {
        self.v_min.abs().max(self.v_max.abs())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.v_max > self.v_min) {
            return Err(Error::InvalidConfig(format!(
                "velocity window needs v_min < v_max and n ≥ 2, got {:?}",
                self
            )));
        }
        Ok(())
    }

    /// Checks `|v| t ≤ 0.8 L`.
    pub fn check_box(&self, grid: &Grid, t: f64) -> Result<()> {
        check_extent(self.extent() * t, grid)
    }

    /// The largest symmetric window inside the box at time `t`.
    pub fn fitting(grid: &Grid, t: f64, dv: f64) -> VWindow {
        let vmax = WINDOW_FRACTION * grid.half_length() / t;
        let half = (vmax / dv).floor() as usize;
        VWindow {
            v_min: -(half as f64) * dv,
            v_max: half as f64 * dv,
            n: 2 * half + 1,
        }
    }
}

fn check_extent(extent: f64, grid: &Grid) -> Result<()> {
    let limit = WINDOW_FRACTION * grid.half_length();
    if extent > limit * (1.0 + 1e-12) {
        return Err(Error::WindowOutsideBox { extent, limit });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 1.0) {
        return Err(Error::TimeRange(format!("packet analysis needs t ≥ 1, got {t}")));
    }
    Ok(())
}

/// `γ(t, ·)` on a velocity window. `dv_values` holds `∂_v γ` when the
/// representation provides it.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaField {
    pub time: f64,
    pub v: Vec<f64>,
    pub values: Vec<Complex64>,
    pub dv_values: Option<Vec<Complex64>>,
    pub kernel: PacketKernel,
}

impl GammaField {
    pub fn zeros(time: f64, v: Vec<f64>) -> Self {
        let n = v.len();
        GammaField {
            time,
            v,
            values: vec![Complex64::new(0.0, 0.0); n],
            dv_values: None,
            kernel: PacketKernel,
        }
    }

    pub fn dv(&self) -> f64 {
        if self.v.len() < 2 {
            0.0
        } else {
            self.v[1] - self.v[0]
        }
    }

    pub fn norm_l2(&self) -> f64 {
        l2_v(&self.values, self.dv())
    }

    pub fn norm_linf(&self) -> f64 {
        linf(&self.values)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        GammaField {
            time: self.time,
            v: self.v.clone(),
            values: self.values.iter().map(|z| z * a).collect(),
            dv_values: self.dv_values.as_ref().map(|d| d.iter().map(|z| z * a).collect()),
            kernel: self.kernel,
        }
    }
}

pub(crate) fn l2_v(values: &[Complex64], dv: f64) -> f64 {
    (values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).sqrt()
}

pub(crate) fn linf(values: &[Complex64]) -> f64 {
    values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Ψ_v(t, ·)` sampled on `grid`.
pub fn packet(v: f64, t: f64, grid: &std::sync::Arc<Grid>) -> Result<ComplexField> {
    check_time(t)?;
    check_extent(v.abs() * t, grid)?;
    let k = PacketKernel;
    let s = t.sqrt();
    Ok(ComplexField::from_fn(grid.clone(), t, |x| {
        Complex64::from_polar(k.chi((x - v * t) / s), x * x / (2.0 * t))
    }))
}

/// Index range of grid points with `|x − c| ≤ r`.
fn index_range(grid: &Grid, c: f64, r: f64) -> std::ops::Range<usize> {
    let n = grid.n_points();
    let x0 = -grid.half_length();
    let lo = (((c - r - x0) / grid.dx()).floor().max(0.0) as usize).min(n);
    let hi = (((c + r - x0) / grid.dx()).ceil().max(0.0) as usize + 1).min(n);
    lo..hi
}

/// `∫ u Ψ̄_v dx` by the rectangle rule.
pub fn gamma_direct(u: &ComplexField, v: f64) -> Complex64 {
    let t = u.time;
    let g = &u.grid;
    let k = PacketKernel;
    let s = t.sqrt();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in index_range(g, v * t, CHI_CUTOFF * s) {
        let x = g.x()[j];
        acc += u.values[j] * Complex64::from_polar(k.chi((x - v * t) / s), -x * x / (2.0 * t));
    }
    acc * g.dx()
}

/// `w = e^{-iφ} u` with `φ = x²/2t`.
pub fn demodulate(u: &ComplexField) -> ComplexField {
    let t = u.time;
    let values = u
        .grid
        .x()
        .iter()
        .zip(&u.values)
        .map(|(&x, z)| z * Complex64::from_polar(1.0, -x * x / (2.0 * t)))
        .collect();
    ComplexField {
        grid: u.grid.clone(),
        time: t,
        values,
    }
}

/// `γ` through `t^{-1/2} γ(t,v) = w(t,vt) ∗_v t^{1/2} χ(t^{1/2} v)`, realised
/// as an FFT convolution of `w` with `χ(x/√t)` followed by band-limited
/// evaluation at `x = vt`. Also returns `∂_v γ`.
pub fn gamma_conv(u: &ComplexField, window: &VWindow) -> Result<GammaField> {
    window.validate()?;
    let t = u.time;
    check_time(t)?;
    window.check_box(&u.grid, t)?;
    let s = t.sqrt();
    let w = demodulate(u);
    let spec = grid::fourier_forward(&w);
    // √(2π) · F[χ(·/s)](ξ) = s e^{-s² ξ² / 2}
    let band = CHI_CUTOFF / s;
    let series = ModeSeries::band(&spec.values, u.grid.dx(), band)
        .map_symbol(|xi| Complex64::new(s * (-t * xi * xi / 2.0).exp(), 0.0));
    let d_series = series.map_symbol(|xi| Complex64::new(0.0, t * xi));
    let v = window.samples();
    let values: Vec<Complex64> = v.par_iter().map(|&vv| series.eval(vv * t)).collect();
    let dv_values: Vec<Complex64> = v.par_iter().map(|&vv| d_series.eval(vv * t)).collect();
    Ok(GammaField {
        time: t,
        v,
        values,
        dv_values: Some(dv_values),
        kernel: PacketKernel,
    })
}

/// `γ` through the Fourier side: `γ(t,v) = ∫ û(ξ) e^{itξ²/2} t^{1/2} χ̄₁(t^{1/2}(ξ − v)) dξ`.
pub fn gamma_fourier(u: &ComplexField, window: &VWindow) -> Result<GammaField> {
    window.validate()?;
    let t = u.time;
    check_time(t)?;
    window.check_box(&u.grid, t)?;
    let s = t.sqrt();
    let k = PacketKernel;
    let spec = grid::fourier_forward(u);
    let xi = u.grid.xi();
    let dxi = u.grid.dxi();
    let rotated: Vec<Complex64> = spec
        .values
        .iter()
        .zip(xi)
        .map(|(z, &x)| z * Complex64::from_polar(1.0, t * x * x / 2.0))
        .collect();
    let m0 = xi[0];
    let n = xi.len();
    let v = window.samples();
    let values = v
        .par_iter()
        .map(|&vv| {
            let lo = (((vv - CHI1_CUTOFF / s - m0) / dxi).floor().max(0.0) as usize).min(n);
            let hi = (((vv + CHI1_CUTOFF / s - m0) / dxi).ceil().max(0.0) as usize + 1).min(n);
            let mut acc = Complex64::new(0.0, 0.0);
            for m in lo..hi {
                acc += rotated[m] * k.chi1(s * (xi[m] - vv)).conj();
            }
            acc * (s * dxi)
        })
        .collect();
    Ok(GammaField {
        time: t,
        v,
        values,
        dv_values: None,
        kernel: k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffNorms {
    pub linf: f64,
    pub l2: f64,
}

fn check_times(u: &ComplexField, g: &GammaField) -> Result<()> {
    if (u.time - g.time).abs() > 1e-12 * u.time.abs().max(1.0) {
        return Err(Error::TimeRange(format!(
            "field at t = {} but γ at t = {}",
            u.time, g.time
        )));
    }
    Ok(())
}

/// `u(t, vt) − t^{-1/2} e^{iφ(t,vt)} γ(t,v)` over the window.
pub fn diff_physical_samples(u: &ComplexField, g: &GammaField) -> Result<Vec<Complex64>> {
    check_times(u, g)?;
    let t = g.time;
    let points: Vec<f64> = g.v.iter().map(|v| v * t).collect();
    let uv = u.interpolate(&points);
    Ok(uv
        .iter()
        .zip(g.v.iter().zip(&g.values))
        .map(|(a, (&v, gm))| a - gm * Complex64::from_polar(t.powf(-0.5), v * v * t / 2.0))
        .collect())
}

pub fn diff_physical(u: &ComplexField, g: &GammaField) -> Result<DiffNorms> {
    let d = diff_physical_samples(u, g)?;
    Ok(DiffNorms {
        linf: linf(&d),
        l2: l2_v(&d, g.dv()),
    })
}

/// `û(t, ξ)` at arbitrary frequencies, by direct summation.
pub fn fourier_at(u: &ComplexField, xi: &[f64]) -> Vec<Complex64> {
    let g = &u.grid;
    let scale = g.dx() / (2.0 * PI).sqrt();
    let x0 = -g.half_length();
    xi.par_iter()
        .map(|&k| {
            let step = Complex64::from_polar(1.0, -k * g.dx());
            let mut p = Complex64::from_polar(1.0, -k * x0);
            let mut acc = Complex64::new(0.0, 0.0);
            for z in &u.values {
                acc += z * p;
                p *= step;
            }
            acc * scale
        })
        .collect()
}

/// `û(t,ξ) − e^{iπ/4} e^{-itξ²/2} γ(t,ξ)` over the window. The constant
/// phase is `∫ χ₁`, the stationary-phase factor of the Gaussian packet.
pub fn diff_fourier(u: &ComplexField, g: &GammaField) -> Result<DiffNorms> {
    check_times(u, g)?;
    let t = g.time;
    let uh = fourier_at(u, &g.v);
    let d: Vec<Complex64> = uh
        .iter()
        .zip(g.v.iter().zip(&g.values))
        .map(|(a, (&v, gm))| a - gm * Complex64::from_polar(1.0, PI / 4.0 - t * v * v / 2.0))
        .collect();
    Ok(DiffNorms {
        linf: linf(&d),
        l2: l2_v(&d, g.dv()),
    })
}

/// A function of `v` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct VField {
    pub time: f64,
    pub v: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl VField {
    pub fn dv(&self) -> f64 {
        if self.v.len() < 2 {
            0.0
        } else {
            self.v[1] - self.v[0]
        }
    }

    pub fn norm_linf(&self) -> f64 {
        linf(&self.values)
    }

    pub fn norm_l2(&self) -> f64 {
        l2_v(&self.values, self.dv())
    }

    pub fn sub(&self, other: &VField) -> Result<VField> {
        if self.v != other.v {
            return Err(Error::GridMismatch("velocity samples differ".into()));
        }
        Ok(VField {
            time: self.time,
            v: self.v.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &VField) -> Result<VField> {
        if self.v != other.v {
            return Err(Error::GridMismatch("velocity samples differ".into()));
        }
        Ok(VField {
            time: self.time,
            v: self.v.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }
}

/// `R = −γ̇ − iλ t⁻¹ |γ|² γ` at the midpoint of two analysis times, with `γ̇`
/// the centred difference and `γ` the average.
pub fn residual_ode(g_prev: &GammaField, g_next: &GammaField, lambda: i32) -> Result<VField> {
    if g_prev.v != g_next.v {
        return Err(Error::GridMismatch("velocity samples differ".into()));
    }
    let h = g_next.time - g_prev.time;
    let tm = 0.5 * (g_prev.time + g_next.time);
    if !(h > 0.0) || h > 0.1 * tm {
        return Err(Error::TimeRange(format!(
            "residual needs 0 < gap ≤ 0.1 t, got gap {h} at t = {tm}"
        )));
    }
    let lam = lambda as f64;
    let values = g_prev
        .values
        .iter()
        .zip(&g_next.values)
        .map(|(a, b)| {
            let dot = (b - a) / h;
            let gm = 0.5 * (a + b);
            -dot - I * lam * gm.norm_sqr() * gm / tm
        })
        .collect();
    Ok(VField {
        time: tm,
        v: g_prev.v.clone(),
        values,
    })
}

/// Residual on the inner pair of four symmetric analysis times together with
/// the Richardson estimate `|R_inner − R_outer| / 3` of its finite-difference
/// error.
pub fn residual_with_error(
    outer_prev: &GammaField,
    inner_prev: &GammaField,
    inner_next: &GammaField,
    outer_next: &GammaField,
    lambda: i32,
) -> Result<(VField, Vec<f64>)> {
    let inner = residual_ode(inner_prev, inner_next, lambda)?;
    let outer = residual_ode(outer_prev, outer_next, lambda)?;
    if (inner.time - outer.time).abs() > 1e-9 * inner.time {
        return Err(Error::TimeRange(format!(
            "inner and outer pairs centred at {} and {}",
            inner.time, outer.time
        )));
    }
    let err = inner
        .values
        .iter()
        .zip(&outer.values)
        .map(|(a, b)| (a - b).norm() / 3.0)
        .collect();
    Ok((inner, err))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualParts {
    pub r1: VField,
    pub r2: VField,
    pub r3: VField,
}

impl ResidualParts {
    pub fn total(&self) -> VField {
        let values = self
            .r1
            .values
            .iter()
            .zip(&self.r2.values)
            .zip(&self.r3.values)
            .map(|((a, b), c)| a + b + c)
            .collect();
        VField {
            time: self.r1.time,
            v: self.r1.v.clone(),
            values,
        }
    }
}

/// The three pieces of `R` evaluated directly from `u`:
///
/// `R₁ = (2t²)⁻¹ ∫ (t^{1/2} χ' − i(x − vt) χ) e^{-iφ} L u dx`,
/// `R₂ = i ∫ u Ψ̄_v (V(|u|²) − λ|u(t,vt)|²) dx` with `V(r) = λ r + F(r)`,
/// `R₃ = iλ γ (|u(t,vt)|² − t⁻¹|γ|²)`.
pub fn residual_decomposed(
    u: &ComplexField,
    g: &GammaField,
    lambda: i32,
    perturbation: Option<Perturbation>,
) -> Result<ResidualParts> {
    check_times(u, g)?;
    let t = g.time;
    let s = t.sqrt();
    let lam = lambda as f64;
    let k = PacketKernel;
    let grid = &u.grid;
    let lu = grid::apply_l(u, t);
    let q: Vec<Complex64> = demodulate(&lu).values;
    let points: Vec<f64> = g.v.iter().map(|v| v * t).collect();
    let uv = u.interpolate(&points);
    let pot: Vec<f64> = u
        .values
        .iter()
        .map(|z| {
            let r = z.norm_sqr();
            lam * r + perturbation.map_or(0.0, |p| p.value(r))
        })
        .collect();
    let w = demodulate(u).values;
    let dx = grid.dx();

    let pairs: Vec<(Complex64, Complex64)> = g
        .v
        .par_iter()
        .zip(uv.par_iter())
        .map(|(&v, uvt)| {
            let centre = v * t;
            let a2 = lam * uvt.norm_sqr();
            let mut r1 = Complex64::new(0.0, 0.0);
            let mut r2 = Complex64::new(0.0, 0.0);
            for j in index_range(grid, centre, CHI_CUTOFF * s) {
                let z = grid.x()[j] - centre;
                let y = z / s;
                let chi = k.chi(y);
                r1 += Complex64::new(s * k.chi_prime(y), -z * chi) * q[j];
                r2 += w[j] * chi * (pot[j] - a2);
            }
            (r1 * (dx / (2.0 * t * t)), I * r2 * dx)
        })
        .collect();
    let r3 = g
        .values
        .iter()
        .zip(&uv)
        .map(|(gm, uvt)| I * lam * gm * (uvt.norm_sqr() - gm.norm_sqr() / t))
        .collect();
    let field = |values| VField {
        time: t,
        v: g.v.clone(),
        values,
    };
    Ok(ResidualParts {
        r1: field(pairs.iter().map(|p| p.0).collect()),
        r2: field(pairs.iter().map(|p| p.1).collect()),
        r3: field(r3),
    })
}
