//! Solving from infinity. Given a profile `W`, build
//! `u_app = t^{-1/2} e^{ix²/2t} 𝒲(t, x/t) e^{-iλ|𝒲|² log t}` with
//! `𝒲(t) = ψ(D/√t) W`, compute its defect `f`, and integrate the equation for
//! `v = u − u_app` backward from `v(T_max) = 0`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid, DEFAULT_BOUNDARY_TOLERANCE};
use crate::profile::{self, ScatteringProfile};
use crate::rates::{self, NormSample, WindowNorm};
use crate::solver::{self, SimConfig};
use crate::spectrum::{self, ModeSeries};
use crate::wavepacket::{self, VWindow};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Profile values below this fraction of the maximum are treated as zero
/// when locating the support.
const SUPPORT_TOLERANCE: f64 = 1e-17;

/// Guard threshold on the analytic-vs-difference forcing gap.
pub const FORCING_GUARD: f64 = 1e-3;

/// Time step of the difference check on the forcing.
const FD_STEP: f64 = 2e-3;

/// Window values above this multiple of `M` count as blow-up.
const BLOWUP_FACTOR: f64 = 1e3;

/// Smooth cutoff `ψ`: `1` on `[0, 1]`, `0` on `[2, ∞)`, even.
pub fn cutoff(y: f64) -> f64 {
    let y = y.abs();
    if y <= 1.0 {
        1.0
    } else if y >= 2.0 {
        0.0
    } else {
        let a = bump(2.0 - y);
        let b = bump(y - 1.0);
        a / (a + b)
    }
}

fn bump(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

fn bump_prime(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        bump(s) / (s * s)
    }
}

/// `ψ'(|y|)`.
pub fn cutoff_prime(y: f64) -> f64 {
    let y = y.abs();
    if y <= 1.0 || y >= 2.0 {
        return 0.0;
    }
    let a = bump(2.0 - y);
    let b = bump(y - 1.0);
    let da = -bump_prime(2.0 - y);
    let db = bump_prime(y - 1.0);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Symbol of `t ∂_t ψ(η/√t)` as a function of `y = η/√t`: `−½ y ψ'(y)`.
pub fn shell(y: f64) -> f64 {
    -0.5 * y.abs() * cutoff_prime(y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletenessConfig {
    pub profile: ScatteringProfile,
    pub lambda: i32,
    /// Bound on `‖W‖_{H^{1+2δ}}`.
    pub m_bound: f64,
    pub delta: f64,
    pub t_max: f64,
    pub t_match: f64,
    pub half_length: f64,
    pub n_points: usize,
    /// Largest backward step.
    pub dt_backward: f64,
    /// Backward step as a fraction of `t`, when smaller than `dt_backward`.
    pub step_fraction: f64,
    /// Step of the forward re-simulation.
    pub dt_forward: f64,
    /// Re-extraction happens at `extract_factor · T_max`.
    pub extract_factor: f64,
}

impl CompletenessConfig {
    /// The default test profile `W(v) = A e^{-v²/2}`, scaled so that
    /// `‖W‖_{H^{1+2δ}} = M`. Its spectrum is below `1e-3` of the peak past
    /// `η = 4`, so it is essentially band-limited below `T_match^{1/2}`.
    pub fn gaussian_profile(m: f64, delta: f64, lambda: i32) -> Result<ScatteringProfile> {
        let window = VWindow { v_min: -16.0, v_max: 16.0 - 1.0 / 32.0, n: 1024 };
        let unit = ScatteringProfile::from_fn(&window, lambda, |v| Complex64::new((-0.5 * v * v).exp(), 0.0));
        let norm = unit.sobolev_norm(1.0 + 2.0 * delta)?;
        Ok(unit.scale(Complex64::new(m / norm, 0.0)))
    }

    pub fn with_defaults(profile: ScatteringProfile, m_bound: f64, delta: f64) -> Self {
        CompletenessConfig {
            lambda: profile.lambda,
            profile,
            m_bound,
            delta,
            t_max: 256.0,
            t_match: 16.0,
            half_length: 1600.0,
            n_points: 1 << 14,
            dt_backward: 0.05,
            step_fraction: 1.0 / 400.0,
            dt_forward: 0.02,
            extract_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda != 1 && self.lambda != -1 {
            return Err(Error::InvalidConfig(format!("lambda must be ±1, got {}", self.lambda)));
        }
        if !(self.delta > 0.0) || 1.0 + 2.0 * self.delta > 2.0 {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1/2], got {}",
                self.delta
            )));
        }
        if !(self.t_match >= profile::EXTRACTION_FLOOR) || !(self.t_match < self.t_max) {
            return Err(Error::InvalidConfig(format!(
                "need 16 ≤ T_match < T_max, got T_match = {}, T_max = {}",
                self.t_match, self.t_max
            )));
        }
        if !(self.dt_backward > 0.0) || !(self.step_fraction > 0.0) || !(self.dt_forward > 0.0) {
            return Err(Error::InvalidConfig("step sizes must be positive".into()));
        }
        if !(self.extract_factor >= 1.0) {
            return Err(Error::InvalidConfig("extract_factor must be at least 1".into()));
        }
        let hs = self.profile.sobolev_norm(1.0 + 2.0 * self.delta)?;
        if hs > self.m_bound * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "‖W‖_H^{} = {hs:e} exceeds M = {:e}",
                1.0 + 2.0 * self.delta,
                self.m_bound
            )));
        }
        if self.delta < 4.0 * self.m_bound * self.m_bound {
            log::warn!(
                "delta = {} is not large compared with M² = {:e}",
                self.delta,
                self.m_bound * self.m_bound
            );
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        grid::make_grid(self.half_length, self.n_points)
    }
}

/// `𝒲(t)`, `𝒲'`, `𝒲''` and `t∂_t𝒲` as truncated Fourier series in `v`.
#[derive(Clone, Debug)]
pub struct Regularized {
    pub t: f64,
    pub lambda: i32,
    series: [ModeSeries; 4],
    /// Profile samples live in `[v_lo, v_hi]`; outside it the series would
    /// repeat periodically.
    v_lo: f64,
    v_hi: f64,
    /// Radius outside which `W` is negligible.
    support: (f64, f64),
}

/// Values of `𝒲`, `𝒲'`, `𝒲''`, `t∂_t𝒲` at one point.
#[derive(Clone, Copy, Debug, Default)]
pub struct Jet {
    pub w: Complex64,
    pub w1: Complex64,
    pub w2: Complex64,
    pub s: Complex64,
}

impl Regularized {
    pub fn new(w: &ScatteringProfile, t: f64) -> Self {
        let (spec, _, _) = w.spectrum();
        let dv = w.dv();
        let root = t.sqrt();
        let full = ModeSeries::from_spectrum(&spec, dv, i64::MIN / 4, i64::MAX / 4);
        let base = trim(full.map_symbol(|eta| Complex64::new(cutoff(eta / root), 0.0)));
        let d1 = base.map_symbol(|eta| Complex64::new(0.0, eta));
        let d2 = base.map_symbol(|eta| Complex64::new(-eta * eta, 0.0));
        let sh = trim(full.map_symbol(|eta| Complex64::new(shell(eta / root), 0.0)));
        let sh = align(&sh, &base);
        let scale = w.norm_linf();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (v, z) in w.v.iter().zip(&w.values) {
            if z.norm() > SUPPORT_TOLERANCE * scale {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if lo > hi {
            lo = 0.0;
            hi = 0.0;
        }
        Regularized {
            t,
            lambda: w.lambda,
            series: [base, d1, d2, sh],
            v_lo: w.v[0],
            v_hi: *w.v.last().unwrap(),
            support: (lo, hi),
        }
    }

    fn inside(&self, v: f64) -> bool {
        v >= self.v_lo && v <= self.v_hi
    }

    pub fn support_radius(&self) -> f64 {
        self.support.0.abs().max(self.support.1.abs())
    }

    /// All four series at `v`, sharing the exponentials.
    pub fn jet(&self, v: f64) -> Jet {
        if !self.inside(v) || self.series[0].coeffs.is_empty() {
            return Jet::default();
        }
        let s0 = &self.series[0];
        let z = Complex64::from_polar(1.0, v * s0.dxi);
        let mut p = Complex64::from_polar(1.0, v * s0.dxi * s0.first_mode as f64);
        let mut acc = [Complex64::new(0.0, 0.0); 4];
        for j in 0..s0.coeffs.len() {
            acc[0] += self.series[0].coeffs[j] * p;
            acc[1] += self.series[1].coeffs[j] * p;
            acc[2] += self.series[2].coeffs[j] * p;
            acc[3] += self.series[3].coeffs[j] * p;
            p *= z;
        }
        let c = s0.dxi / (2.0 * std::f64::consts::PI).sqrt();
        Jet {
            w: acc[0] * c,
            w1: acc[1] * c,
            w2: acc[2] * c,
            s: acc[3] * c,
        }
    }

    pub fn value(&self, v: f64) -> Complex64 {
        if !self.inside(v) {
            return Complex64::new(0.0, 0.0);
        }
        self.series[0].eval(v)
    }
}

/// Drop negligible coefficients at both ends.
fn trim(s: ModeSeries) -> ModeSeries {
    let big = s.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let keep = |c: &Complex64| c.norm() > 1e-18 * big;
    let first = s.coeffs.iter().position(keep);
    let last = s.coeffs.iter().rposition(keep);
    match (first, last) {
        (Some(a), Some(b)) => ModeSeries {
            first_mode: s.first_mode + a as i64,
            dxi: s.dxi,
            coeffs: s.coeffs[a..=b].to_vec(),
        },
        _ => ModeSeries {
            first_mode: 0,
            dxi: s.dxi,
            coeffs: Vec::new(),
        },
    }
}

/// Re-index `s` onto the mode range of `like`, padding with zeros.
fn align(s: &ModeSeries, like: &ModeSeries) -> ModeSeries {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); like.coeffs.len()];
    for (j, c) in s.coeffs.iter().enumerate() {
        let m = s.first_mode + j as i64 - like.first_mode;
        if m >= 0 && (m as usize) < coeffs.len() {
            coeffs[m as usize] = *c;
        }
    }
    ModeSeries {
        first_mode: like.first_mode,
        dxi: like.dxi,
        coeffs,
    }
}

/// `𝒲(t) = ψ(D/√t) W` on the profile's own samples.
pub fn regularize_w(w: &ScatteringProfile, t: f64) -> ScatteringProfile {
    let (spec, eta, _) = w.spectrum();
    let root = t.sqrt();
    let filtered: Vec<Complex64> = spec
        .iter()
        .zip(&eta)
        .map(|(z, &e)| z * cutoff(e / root))
        .collect();
    let values = spectrum::inverse(&filtered, w.v[0], w.dv());
    ScatteringProfile {
        values,
        ..w.clone()
    }
}

fn check_support(reg: &Regularized, grid: &Grid) -> Result<()> {
    let extent = reg.support_radius() * reg.t;
    let limit = grid::BOUNDARY_FRACTION * grid.half_length();
    // Tails beyond the box are allowed only if they carry no mass.
    if extent > grid.half_length() * 4.0 {
        return Err(Error::WindowOutsideBox { extent, limit });
    }
    Ok(())
}

fn u_app_from(reg: &Regularized, grid: &Arc<Grid>) -> ComplexField {
    let t = reg.t;
    let lam = reg.lambda as f64;
    let lt = t.ln();
    ComplexField::from_fn(grid.clone(), t, |x| {
        let w = reg.value(x / t);
        if w == Complex64::new(0.0, 0.0) {
            return w;
        }
        w * Complex64::from_polar(t.powf(-0.5), x * x / (2.0 * t) - lam * w.norm_sqr() * lt)
    })
}

fn boundary_guard(u: &ComplexField, reg: &Regularized) -> Result<()> {
    let frac = u.boundary_mass_fraction();
    if frac > DEFAULT_BOUNDARY_TOLERANCE {
        return Err(Error::WindowOutsideBox {
            extent: reg.support_radius() * reg.t,
            limit: grid::BOUNDARY_FRACTION * u.grid.half_length(),
        });
    }
    Ok(())
}

/// `u_app(t)` on `grid`.
pub fn build_u_app(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>) -> Result<ComplexField> {
    let reg = Regularized::new(w, t);
    check_support(&reg, grid)?;
    let u = u_app_from(&reg, grid);
    boundary_guard(&u, &reg)?;
    Ok(u)
}

fn forcing_from(reg: &Regularized, grid: &Arc<Grid>) -> (ComplexField, ComplexField) {
    let t = reg.t;
    let lam = reg.lambda as f64;
    let lt = t.ln();
    let n = grid.n_points();
    let mut ua = Vec::with_capacity(n);
    let mut fa = Vec::with_capacity(n);
    for &x in grid.x() {
        let j = reg.jet(x / t);
        if j.w == Complex64::new(0.0, 0.0) && j.w2 == Complex64::new(0.0, 0.0) {
            ua.push(Complex64::new(0.0, 0.0));
            fa.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let theta = lam * j.w.norm_sqr() * lt;
        let th_v = 2.0 * lam * lt * (j.w.conj() * j.w1).re;
        let th_vv = 2.0 * lam * lt * (j.w1.norm_sqr() + (j.w.conj() * j.w2).re);
        let first = I * j.s + 2.0 * lam * lt * (j.w.conj() * j.s).re * j.w;
        let second = j.w2 - 2.0 * I * th_v * j.w1 - I * th_vv * j.w - th_v * th_v * j.w;
        let carrier = Complex64::from_polar(t.powf(-0.5), x * x / (2.0 * t) - theta);
        ua.push(j.w * carrier);
        fa.push(carrier * (first / t + second / (2.0 * t * t)));
    }
    (
        ComplexField { grid: grid.clone(), time: t, values: ua },
        ComplexField { grid: grid.clone(), time: t, values: fa },
    )
}

/// `f = (i∂_t + ½∂_x²) u_app − λ|u_app|² u_app` from the closed form
/// `f = t^{-1/2} e^{iφ − iθ} { t⁻¹[iS + 2λ log t Re(𝒲̄ S) 𝒲]
///   + (2t²)⁻¹[𝒲'' − 2iθ_v 𝒲' − iθ_vv 𝒲 − θ_v² 𝒲] }`,
/// `θ = λ|𝒲|² log t`, `S = t∂_t𝒲`, all at `v = x/t`.
pub fn forcing_f(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>) -> Result<ComplexField> {
    let reg = Regularized::new(w, t);
    check_support(&reg, grid)?;
    Ok(forcing_from(&reg, grid).1)
}

/// The same defect evaluated from its definition: sixth-order centred
/// difference in `t`, spectral `∂_x²`.
pub fn forcing_fd(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>, h: f64) -> Result<ComplexField> {
    const STENCIL: [(f64, f64); 6] = [
        (-3.0, -1.0),
        (-2.0, 9.0),
        (-1.0, -45.0),
        (1.0, 45.0),
        (2.0, -9.0),
        (3.0, 1.0),
    ];
    let lam = w.lambda as f64;
    let mut dt = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    for (k, c) in STENCIL {
        let u = u_app_from(&Regularized::new(w, t + k * h), grid);
        for (d, z) in dt.iter_mut().zip(&u.values) {
            *d += z * (c / (60.0 * h));
        }
    }
    let u = u_app_from(&Regularized::new(w, t), grid);
    let uxx = grid::derivative(&grid::derivative(&u));
    let values = u
        .values
        .iter()
        .zip(dt.iter().zip(&uxx.values))
        .map(|(z, (d, dd))| I * d + 0.5 * dd - lam * z.norm_sqr() * z)
        .collect();
    ComplexField::new(grid.clone(), t, values)
}

/// Relative `L²` gap between [`forcing_f`] and [`forcing_fd`]; errors above
/// [`FORCING_GUARD`].
pub fn forcing_guard(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>) -> Result<f64> {
    let fa = forcing_f(w, t, grid)?;
    let fd = forcing_fd(w, t, grid, FD_STEP)?;
    let norm = grid::norm_l2(&fa);
    if norm == 0.0 {
        let other = grid::norm_l2(&fd);
        return if other == 0.0 { Ok(0.0) } else { Err(Error::ForcingGuard { time: t, gap: f64::INFINITY }) };
    }
    let gap = grid::norm_l2(&fa.sub(&fd)?) / norm;
    if !(gap <= FORCING_GUARD) {
        return Err(Error::ForcingGuard { time: t, gap });
    }
    Ok(gap)
}

/// A grid with the spacing of `grid`, widened until the profile support fits
/// inside the boundary layer at time `t`. The difference check takes a
/// spectral `∂_x²`, which would otherwise see the periodic wrap of `u_app`.
pub fn oracle_grid(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>) -> Result<Arc<Grid>> {
    let extent = Regularized::new(w, t).support_radius() * t;
    let mut factor = 1usize;
    while extent > grid::BOUNDARY_FRACTION * grid.half_length() * factor as f64 && factor < 8 {
        factor *= 2;
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    grid::make_grid(grid.half_length() * factor as f64, grid.n_points() * factor)
}

/// `λ(|a + v|²(a + v) − |a|²a)`, which expands to
/// `v|v|² + v²ā + 2|v|²a + 2v|a|² + v̄a²`.
#[inline]
pub fn difference_nonlinearity(v: Complex64, a: Complex64, lambda: f64) -> Complex64 {
    let z = a + v;
    lambda * (z.norm_sqr() * z - a.norm_sqr() * a)
}

/// Step times from `t_hi` down to `t_lo`, hitting every `t_lo · 2^k`.
fn backward_times(cfg: &CompletenessConfig) -> Vec<f64> {
    let mut marks = vec![cfg.t_match];
    while marks.last().unwrap() * 2.0 < cfg.t_max * (1.0 - 1e-12) {
        let next = marks.last().unwrap() * 2.0;
        marks.push(next);
    }
    marks.push(cfg.t_max);
    let mut times = vec![cfg.t_max];
    for pair in marks.windows(2).rev() {
        let (a, b) = (pair[0], pair[1]);
        let h = cfg.dt_backward.min(cfg.step_fraction * a);
        let (n, step) = solver::subdivide(b - a, h);
        for k in 1..=n {
            times.push(if k == n { a } else { b - k as f64 * step });
        }
    }
    times
}

/// Coefficients of the `v` equation frozen at one time.
struct Frozen {
    a: Vec<Complex64>,
    f: Vec<Complex64>,
}

impl Frozen {
    fn at(w: &ScatteringProfile, t: f64, grid: &Arc<Grid>, zero_forcing: bool) -> Self {
        let (a, mut f) = forcing_from(&Regularized::new(w, t), grid);
        if zero_forcing {
            f.values.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        }
        Frozen { a: a.values, f: f.values }
    }
}

/// `i v' = N(v, a) − f` over `tau`, explicit midpoint rule.
fn potential_step(v: &mut [Complex64], c: &Frozen, tau: f64, lambda: f64) {
    for ((z, a), f) in v.iter_mut().zip(&c.a).zip(&c.f) {
        let rhs = |y: Complex64| -I * (difference_nonlinearity(y, *a, lambda) - f);
        let mid = *z + 0.5 * tau * rhs(*z);
        *z += tau * rhs(mid);
    }
}

/// Linear flow `exp(i τ ∂_x²/2)` for either sign of `τ`.
fn linear_step(v: &mut [Complex64], grid: &Arc<Grid>, tau: f64) {
    let field = ComplexField { grid: grid.clone(), time: 0.0, values: v.to_vec() };
    let mut spec = grid::fourier_forward(&field);
    for (z, &xi) in spec.values.iter_mut().zip(grid.xi()) {
        *z *= Complex64::from_polar(1.0, -tau * xi * xi / 2.0);
    }
    v.copy_from_slice(&grid::fourier_inverse(&spec).values);
}

fn strang_v(v: &mut [Complex64], grid: &Arc<Grid>, w: &ScatteringProfile, t_from: f64, t_to: f64, lambda: f64, zero_forcing: bool) {
    let tau = t_to - t_from;
    let c = Frozen::at(w, 0.5 * (t_from + t_to), grid, zero_forcing);
    potential_step(v, &c, 0.5 * tau, lambda);
    linear_step(v, grid, tau);
    potential_step(v, &c, 0.5 * tau, lambda);
}

#[derive(Clone, Debug)]
pub struct BackwardRun {
    pub t_match: f64,
    pub t_max: f64,
    pub m_bound: f64,
    pub delta: f64,
    /// Norms of `v`, ascending in time.
    pub samples: Vec<NormSample>,
    /// Norms of `L v`, ascending in time.
    pub l_samples: Vec<NormSample>,
    /// `v` at `T_match` and at each dyadic mark, ascending.
    pub checkpoints: Vec<ComplexField>,
    pub forcing_gap: f64,
}

impl BackwardRun {
    pub fn v_match(&self) -> &ComplexField {
        &self.checkpoints[0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    X,
    XTilde,
}

/// `X`: `T^{1/2+δ} (1 + M² log T)^{-2}` on `v`;
/// `X̃`: `T^δ (1 + M² log T)^{-3}` on `L v`.
pub fn norm_weight(kind: NormKind, t: f64, m: f64, delta: f64) -> f64 {
    let log_factor = 1.0 + m * m * t.ln();
    match kind {
        NormKind::X => t.powf(0.5 + delta) / log_factor.powi(2),
        NormKind::XTilde => t.powf(delta) / log_factor.powi(3),
    }
}

pub fn xnorm(run: &BackwardRun, kind: NormKind) -> Result<Vec<WindowNorm>> {
    let series = match kind {
        NormKind::X => &run.samples,
        NormKind::XTilde => &run.l_samples,
    };
    let (m, d) = (run.m_bound, run.delta);
    rates::dyadic_sup_norm(series, run.t_match, run.t_max, |t| norm_weight(kind, t, m, d))
}

pub fn sup_value(table: &[WindowNorm]) -> f64 {
    table.iter().map(|w| w.value).fold(0.0, f64::max)
}

fn sample(v: &ComplexField, t: f64) -> (NormSample, NormSample) {
    let lv = grid::apply_l(v, t);
    (
        NormSample { t, l2: grid::norm_l2(v), linf: grid::norm_linf(v) },
        NormSample { t, l2: grid::norm_l2(&lv), linf: grid::norm_linf(&lv) },
    )
}

/// Integrate `i v_t + ½ v_xx = N(v, u_app) − f` from `v(T_max) = 0` down to
/// `T_match`.
pub fn backward_solve(cfg: &CompletenessConfig) -> Result<BackwardRun> {
    backward_solve_with(cfg, false)
}

/// As [`backward_solve`]; `zero_forcing` replaces `f` by zero.
pub fn backward_solve_with(cfg: &CompletenessConfig, zero_forcing: bool) -> Result<BackwardRun> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let w = &cfg.profile;
    let forcing_gap = forcing_guard(w, cfg.t_match, &oracle_grid(w, cfg.t_match, &grid)?)?
        .max(forcing_guard(w, cfg.t_max, &oracle_grid(w, cfg.t_max, &grid)?)?);
    let lam = cfg.lambda as f64;
    let times = backward_times(cfg);
    let mut v = vec![Complex64::new(0.0, 0.0); grid.n_points()];
    let mut samples = Vec::with_capacity(times.len());
    let mut l_samples = Vec::with_capacity(times.len());
    let mut checkpoints = Vec::new();
    let is_mark = |t: f64| {
        let r = (t / cfg.t_match).log2();
        (r - r.round()).abs() < 1e-9
    };
    let zero = ComplexField::zeros(grid.clone(), cfg.t_max);
    let (a, b) = sample(&zero, cfg.t_max);
    samples.push(a);
    l_samples.push(b);
    checkpoints.push(zero);
    for pair in times.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        strang_v(&mut v, &grid, w, t0, t1, lam, zero_forcing);
        let field = ComplexField::new(grid.clone(), t1, v.clone())?;
        if !field.is_finite() {
            return Err(Error::NonFinite {
                time: t1,
                step: samples.len() as u64,
                last_mass: samples.last().map_or(0.0, |s| s.l2 * s.l2),
                last_sup: samples.last().map_or(0.0, |s| s.linf),
            });
        }
        let (a, b) = sample(&field, t1);
        samples.push(a);
        l_samples.push(b);
        if is_mark(t1) {
            checkpoints.push(field);
        }
    }
    samples.reverse();
    l_samples.reverse();
    checkpoints.reverse();
    let run = BackwardRun {
        t_match: cfg.t_match,
        t_max: cfg.t_max,
        m_bound: cfg.m_bound,
        delta: cfg.delta,
        samples,
        l_samples,
        checkpoints,
        forcing_gap,
    };
    for wn in xnorm(&run, NormKind::X)? {
        if !wn.value.is_finite() || wn.value > BLOWUP_FACTOR * cfg.m_bound.max(f64::MIN_POSITIVE) {
            return Err(Error::NormBlowUp { window: wn.t_lo, value: wn.value });
        }
    }
    Ok(run)
}

/// Integrate the same `v` equation forward from `v0` (at `v0.time`) to `t_to`
/// along the backward step sequence, reversed.
pub fn forward_v(cfg: &CompletenessConfig, v0: &ComplexField, t_to: f64) -> Result<ComplexField> {
    let mut times: Vec<f64> = backward_times(cfg)
        .into_iter()
        .filter(|&t| t >= v0.time - 1e-9 && t <= t_to + 1e-9)
        .collect();
    times.reverse();
    if times.len() < 2 {
        return Err(Error::TimeRange(format!("no steps between {} and {t_to}", v0.time)));
    }
    let lam = cfg.lambda as f64;
    let mut v = v0.values.clone();
    for pair in times.windows(2) {
        strang_v(&mut v, &v0.grid, &cfg.profile, pair[0], pair[1], lam, false);
    }
    ComplexField::new(v0.grid.clone(), *times.last().unwrap(), v)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub t_max: f64,
    pub t_match: f64,
    pub t_extract: f64,
    pub l2_error: f64,
    pub w_norm: f64,
    pub v_match_ratio: f64,
    pub x_norm: f64,
    pub x_tilde_norm: f64,
    pub forcing_gap: f64,
    pub x_table: Vec<WindowNorm>,
    pub recovered: ScatteringProfile,
}

/// Backward solve, then evolve `u_app + v` forward from `T_match` to
/// `extract_factor · T_max` and re-extract the profile.
pub fn roundtrip(cfg: &CompletenessConfig) -> Result<RoundtripReport> {
    let run = backward_solve(cfg)?;
    let grid = cfg.grid()?;
    let w = &cfg.profile;
    let ua = build_u_app(w, cfg.t_match, &grid)?;
    let vm = run.v_match();
    let u0 = ua.add(vm)?;
    let t_extract = cfg.extract_factor * cfg.t_max;
    let sim = SimConfig {
        lambda: cfg.lambda,
        perturbation: None,
        epsilon: cfg.m_bound,
        dt: cfg.dt_forward,
        t_start: cfg.t_match,
        t_end: t_extract,
        checkpoint_times: Vec::new(),
        ..SimConfig::default()
    };
    let traj = solver::evolve(&u0, &sim)?;
    let u_end = &traj.last().expect("final checkpoint").field;
    let vmax = wavepacket::WINDOW_FRACTION * grid.half_length() / t_extract;
    let target = w.restrict(vmax);
    let window = VWindow {
        v_min: target.v[0],
        v_max: *target.v.last().unwrap(),
        n: target.v.len(),
    };
    let g = wavepacket::gamma_conv(u_end, &window)?;
    let mut recovered = profile::extract_profile(&g, cfg.lambda, cfg.m_bound)?;
    recovered.v = target.v.clone();
    let (_, l2_error) = recovered.distance(&target)?;
    let x_table = xnorm(&run, NormKind::X)?;
    let xt = xnorm(&run, NormKind::XTilde)?;
    Ok(RoundtripReport {
        t_max: cfg.t_max,
        t_match: cfg.t_match,
        t_extract,
        l2_error,
        w_norm: w.norm_l2(),
        v_match_ratio: grid::norm_l2(vm) / grid::norm_l2(&ua).max(f64::MIN_POSITIVE),
        x_norm: sup_value(&x_table),
        x_tilde_norm: sup_value(&xt),
        forcing_gap: run.forcing_gap,
        x_table,
        recovered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;

    fn small_cfg(m: f64) -> CompletenessConfig {
        let w = CompletenessConfig::gaussian_profile(m, 0.25, 1).unwrap();
        CompletenessConfig {
            t_max: 32.0,
            t_match: 16.0,
            half_length: 256.0,
            n_points: 4096,
            dt_backward: 0.1,
            step_fraction: 1.0 / 200.0,
            ..CompletenessConfig::with_defaults(w, m, 0.25)
        }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.5), 1.0);
        assert_eq!(cutoff(-1.0), 1.0);
        assert_eq!(cutoff(2.5), 0.0);
        let h = 1e-6;
        for y in [1.1, 1.3, 1.5, 1.7, 1.9] {
            let fd = (cutoff(y + h) - cutoff(y - h)) / (2.0 * h);
            assert!((fd - cutoff_prime(y)).abs() < 1e-6);
            assert!(cutoff(y) > 0.0 && cutoff(y) < 1.0);
        }
        // t∂_t ψ(η/√t) by difference in t.
        let (eta, t) = (5.0, 10.0);
        let fd = t * (cutoff(eta / (t + h).sqrt()) - cutoff(eta / (t - h).sqrt())) / (2.0 * h);
        assert!((fd - shell(eta / t.sqrt())).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn cutoff_is_monotone(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(cutoff(lo) >= cutoff(hi));
        }

        #[test]
        fn difference_nonlinearity_expands(vr in -1.0f64..1.0, vi in -1.0f64..1.0, ar in -1.0f64..1.0, ai in -1.0f64..1.0) {
            let v = Complex64::new(vr, vi);
            let a = Complex64::new(ar, ai);
            let expanded = v * v.norm_sqr() + v * v * a.conj() + 2.0 * v.norm_sqr() * a
                + 2.0 * v * a.norm_sqr() + v.conj() * a * a;
            prop_assert!((difference_nonlinearity(v, a, 1.0) - expanded).norm() < 1e-13);
        }
    }

    #[test]
    fn band_limited_profile_is_untouched() {
        let win = VWindow { v_min: -8.0, v_max: 8.0 - 1.0 / 16.0, n: 256 };
        let w = ScatteringProfile::from_fn(&win, 1, |v| {
            Complex64::new((std::f64::consts::PI * v / 8.0).cos() + 0.5 * (std::f64::consts::PI * 3.0 * v / 8.0).sin(), 0.0)
        });
        let r = regularize_w(&w, 16.0);
        let (linf, _) = r.distance(&w).unwrap();
        assert!(linf < 1e-12);
    }

    #[test]
    fn tail_matches_quadrature() {
        // Ŵ(η) = (1 + η²)^{-(1 + δ)}, so ‖𝒲 − W‖² = ∫ (1 − ψ(η/√t))² (1 + η²)^{-2-2δ} dη.
        let delta = 0.25;
        let n = 8192;
        let dv = 1.0 / 32.0;
        let v0 = -(n as f64) * dv / 2.0;
        let eta = spectrum::wavenumbers(n, dv);
        let spec: Vec<Complex64> = eta.iter().map(|&e| Complex64::new((1.0 + e * e).powf(-1.0 - delta), 0.0)).collect();
        let values = spectrum::inverse(&spec, v0, dv);
        let v: Vec<f64> = (0..n).map(|k| v0 + k as f64 * dv).collect();
        let w = ScatteringProfile::new(v, values, f64::INFINITY, 0.0, 1).unwrap();
        let mut prev = f64::INFINITY;
        for t in [16.0, 64.0, 256.0] {
            let (_, measured) = regularize_w(&w, t).distance(&w).unwrap();
            let steps = 200_000;
            let top = 200.0;
            let h = top / steps as f64;
            let quad: f64 = (0..steps)
                .map(|k| {
                    let e = (k as f64 + 0.5) * h;
                    let c = 1.0 - cutoff(e / t.sqrt());
                    2.0 * c * c * (1.0 + e * e).powf(-2.0 - 2.0 * delta)
                })
                .sum::<f64>()
                * h;
            let expect = quad.sqrt();
            assert!((measured - expect).abs() <= 0.05 * expect, "t {t}: {measured} vs {expect}");
            assert!(measured < prev);
            prev = measured;
        }
    }

    #[test]
    fn u_app_mass_matches_profile() {
        let cfg = small_cfg(0.1);
        let g = cfg.grid().unwrap();
        for t in [16.0, 40.0] {
            let u = build_u_app(&cfg.profile, t, &g).unwrap();
            let reg = regularize_w(&cfg.profile, t);
            assert!((grid::norm_l2(&u) - reg.norm_l2()).abs() < 1e-8);
            assert!(grid::norm_linf(&u) <= 2.0 * cfg.profile.norm_linf() / t.sqrt());
        }
        let zero = cfg.profile.scale(Complex64::new(0.0, 0.0));
        assert!(build_u_app(&zero, 20.0, &g).unwrap().values.iter().all(|z| z.norm() == 0.0));
        assert!(forcing_f(&zero, 20.0, &g).unwrap().values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn analytic_forcing_matches_difference() {
        use rand::Rng;
        let g = make_grid(512.0, 8192).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let win = VWindow { v_min: -16.0, v_max: 16.0 - 1.0 / 32.0, n: 1024 };
        for _ in 0..3 {
            let bumps: Vec<(Complex64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let a = Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                    (a, rng.gen_range(-1.0..1.0), rng.gen_range(0.8..1.2), rng.gen_range(-1.5..1.5))
                })
                .collect();
            let w = ScatteringProfile::from_fn(&win, 1, |v| {
                bumps
                    .iter()
                    .map(|&(a, c, s, k)| a * Complex64::from_polar((-(v - c) * (v - c) / (2.0 * s * s)).exp(), k * v))
                    .sum()
            });
            let gap = forcing_guard(&w, 64.0, &g).unwrap();
            assert!(gap <= 1e-4, "gap {gap}");
        }
        // Spectrum reaching into the cutoff shell exercises the `t∂_t𝒲` terms.
        let wide = VWindow { v_min: -32.0, v_max: 32.0 - 1.0 / 32.0, n: 2048 };
        let shell_heavy = ScatteringProfile::from_fn(&wide, -1, |v| Complex64::new(0.05 * (-0.8 * v * v).exp(), 0.0));
        let reg = Regularized::new(&shell_heavy, 16.0);
        assert!(reg.jet(0.0).s.norm() > 1e-4 * reg.jet(0.0).w.norm());
        let gap = forcing_guard(&shell_heavy, 16.0, &g).unwrap();
        assert!(gap <= 1e-4, "shell gap {gap}");
    }

    #[test]
    fn zero_profile_and_zero_forcing_give_zero() {
        let cfg = small_cfg(0.1);
        let zero = CompletenessConfig {
            profile: cfg.profile.scale(Complex64::new(0.0, 0.0)),
            ..cfg.clone()
        };
        let run = backward_solve(&zero).unwrap();
        assert!(run.v_match().values.iter().all(|z| z.norm() == 0.0));
        let run = backward_solve_with(&cfg, true).unwrap();
        assert!(run.v_match().values.iter().all(|z| z.norm() == 0.0));
        let x = xnorm(&run, NormKind::X).unwrap();
        assert!(x.iter().all(|w| w.value == 0.0));
    }

    #[test]
    fn backward_correction_is_small_and_reversible() {
        let cfg = small_cfg(0.1);
        let run = backward_solve(&cfg).unwrap();
        let g = cfg.grid().unwrap();
        let ua = build_u_app(&cfg.profile, cfg.t_match, &g).unwrap();
        let ratio = grid::norm_l2(run.v_match()) / grid::norm_l2(&ua);
        assert!(ratio > 0.0 && ratio < 0.2, "ratio {ratio}");
        let back = forward_v(&cfg, run.v_match(), cfg.t_max).unwrap();
        let peak = run.samples.iter().map(|s| s.l2).fold(0.0, f64::max);
        assert!(grid::norm_l2(&back) < 1e-6 * peak, "{} vs {peak}", grid::norm_l2(&back));
        let x = xnorm(&run, NormKind::X).unwrap();
        let xt = xnorm(&run, NormKind::XTilde).unwrap();
        assert_eq!(x.len(), 1);
        assert!(x.iter().all(|w| w.value.is_finite()));
        assert!(xt.iter().all(|w| w.value.is_finite()));
    }

    #[test]
    fn gauge_carries_through() {
        let cfg = small_cfg(0.1);
        let rot = Complex64::from_polar(1.0, 0.9);
        let g = cfg.grid().unwrap();
        let ua = build_u_app(&cfg.profile, 20.0, &g).unwrap();
        let ur = build_u_app(&cfg.profile.scale(rot), 20.0, &g).unwrap();
        assert!(grid::norm_l2(&ur.sub(&ua.scale(rot)).unwrap()) < 1e-14);
        let rotated = CompletenessConfig { profile: cfg.profile.scale(rot), ..cfg.clone() };
        let a = backward_solve(&cfg).unwrap();
        let b = backward_solve(&rotated).unwrap();
        let d = b.v_match().sub(&a.v_match().scale(rot)).unwrap();
        assert!(grid::norm_l2(&d) < 1e-10 * grid::norm_l2(a.v_match()).max(1e-300) + 1e-15);
    }

    #[test]
    fn x_tilde_weight_comparison() {
        let (m, d) = (0.1, 0.25);
        for t in [16.0, 32.0, 64.0, 128.0] {
            let x = norm_weight(NormKind::X, t, m, d);
            let xt = norm_weight(NormKind::XTilde, t, m, d);
            let expect = x * t.powf(-0.5) / (1.0 + m * m * t.ln());
            assert!((xt - expect).abs() <= 1e-14 * expect);
        }
    }

    #[test]
    fn synthetic_decay_gives_flat_windows() {
        // v = t^{-1/2-δ} g with ‖g‖ = 1 in both norms: each window value is
        // T^{1/2+δ}(1+M² log T)^{-2} (T^{-1/2-δ} + (∫_T^{2T} t^{-2-4δ})^{1/4}).
        let (m, d) = (0.1, 0.25);
        let samples: Vec<NormSample> = solver::geometric_times(16.0, 256.0, 161)
            .into_iter()
            .map(|t| {
                let y = t.powf(-0.5 - d);
                NormSample { t, l2: y, linf: y }
            })
            .collect();
        let run = BackwardRun {
            t_match: 16.0,
            t_max: 256.0,
            m_bound: m,
            delta: d,
            samples,
            l_samples: Vec::new(),
            checkpoints: Vec::new(),
            forcing_gap: 0.0,
        };
        for wn in xnorm(&run, NormKind::X).unwrap() {
            let t = wn.t_lo;
            let p = 2.0 + 4.0 * d;
            let l4 = ((t.powf(1.0 - p) - (2.0 * t).powf(1.0 - p)) / (p - 1.0)).powf(0.25);
            let expect = norm_weight(NormKind::X, t, m, d) * (t.powf(-0.5 - d) + l4);
            assert!((wn.value - expect).abs() <= 1e-3 * expect, "{} vs {expect}", wn.value);
        }
    }

    #[test]
    fn config_guards() {
        let cfg = small_cfg(0.1);
        assert!(cfg.validate().is_ok());
        let bad = CompletenessConfig { m_bound: 0.01, ..cfg.clone() };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let bad = CompletenessConfig { t_match: 8.0, ..cfg.clone() };
        assert!(bad.validate().is_err());
        let bad = CompletenessConfig { delta: 0.8, ..cfg };
        assert!(bad.validate().is_err());
    }
}
