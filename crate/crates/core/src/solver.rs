//! Strang-split integration of `i u_t + ½ u_xx = λ u|u|² + u F(|u|²)` and of
//! the equation satisfied by `L u` along a background solution.
//!
//! The nonlinear substep is solved exactly: `|u|` is constant under
//! `i u_t = V(|u|²) u`, so it is a pointwise phase rotation. The linear
//! substep is exact in Fourier space. Consecutive nonlinear half steps are
//! fused, which is exact for the same reason.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid, DEFAULT_BOUNDARY_TOLERANCE};
use crate::rates::{self, RateFit};
use crate::spectrum;

/// `F(r) = mu · r^{1 + delta_exp}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub mu: f64,
    pub delta_exp: f64,
}

impl Perturbation {
    pub fn value(&self, r: f64) -> f64 {
        self.mu * r.powf(1.0 + self.delta_exp)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.mu * (1.0 + self.delta_exp) * r.powf(self.delta_exp)
    }
}

/// Which parts of the splitting are active. The partial modes exist for
/// oracle tests against closed-form solutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    Full,
    LinearOnly,
    NonlinearOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// `+1` defocusing, `-1` focusing.
    pub lambda: i32,
    pub perturbation: Option<Perturbation>,
    /// Size of the data; carried through to checkpoints and slack rules.
    pub epsilon: f64,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub checkpoint_times: Vec<f64>,
    pub mode: SplitMode,
    /// Relative mass drift that aborts a run.
    pub mass_tolerance: f64,
    /// Boundary mass fraction that aborts a run.
    pub boundary_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            lambda: 1,
            perturbation: None,
            epsilon: 0.1,
            dt: 5e-3,
            t_start: 0.0,
            t_end: 256.0,
            checkpoint_times: Vec::new(),
            mode: SplitMode::Full,
            mass_tolerance: 1e-6,
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda != 1 && self.lambda != -1 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be +1 or -1, got {}",
                self.lambda
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_start < self.t_end) {
            return Err(Error::InvalidConfig(format!(
                "t_start {} must precede t_end {}",
                self.t_start, self.t_end
            )));
        }
        if let Some(p) = self.perturbation {
            if !(p.delta_exp > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "perturbation exponent must be positive, got {}",
                    p.delta_exp
                )));
            }
        }
        if self.checkpoint_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(
                "checkpoint_times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// The `λ` written to checkpoints: zero when the nonlinearity is off.
    pub fn effective_lambda(&self) -> i32 {
        match self.mode {
            SplitMode::LinearOnly => 0,
            _ => self.lambda,
        }
    }

    /// `V(r) = λ r + F(r)`.
    #[inline]
    pub fn potential(&self, r: f64) -> f64 {
        let base = self.lambda as f64 * r;
        match self.perturbation {
            Some(p) => base + p.value(r),
            None => base,
        }
    }

    fn nonlinear_on(&self) -> bool {
        self.mode != SplitMode::LinearOnly
    }

    fn linear_on(&self) -> bool {
        self.mode != SplitMode::NonlinearOnly
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub mass: f64,
    pub sup_norm: f64,
    #[serde(rename = "Lu_l2")]
    pub lu_l2: f64,
    pub boundary_mass: f64,
}

impl Diagnostics {
    pub fn of(u: &ComplexField) -> Self {
        Diagnostics {
            t: u.time,
            mass: u.mass(),
            sup_norm: grid::norm_linf(u),
            lu_l2: grid::norm_l2(&grid::apply_l(u, u.time)),
            boundary_mass: u.boundary_mass_fraction(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub field: ComplexField,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub lambda: i32,
    pub epsilon: f64,
    pub checkpoints: Vec<Checkpoint>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.field.time).collect()
    }

    /// Checkpoint whose time matches `t` to relative `1e-9`.
    pub fn at(&self, t: f64) -> Option<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| (c.field.time - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostics> {
        self.checkpoints.iter().map(|c| c.diagnostics).collect()
    }
}

/// Linear propagator `exp(-i h ξ²/2)` in FFT slot order, with the `1/N` of
/// the inverse transform folded in.
struct LinearStep {
    h: f64,
    phase: Vec<Complex64>,
}

impl LinearStep {
    fn new(grid: &Grid, h: f64) -> Self {
        let n = grid.n_points() as f64;
        let phase = grid
            .xi_fft_order()
            .iter()
            .map(|xi| Complex64::from_polar(1.0 / n, -h * xi * xi / 2.0))
            .collect();
        LinearStep { h, phase }
    }
}

struct Propagator {
    fft: Arc<dyn rustfft::Fft<f64>>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
    scratch: Vec<Complex64>,
    cache: Option<LinearStep>,
}

impl Propagator {
    fn new(grid: &Grid) -> Self {
        let n = grid.n_points();
        let fft = spectrum::plan_forward(n);
        let ifft = spectrum::plan_inverse(n);
        let len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        Propagator {
            fft,
            ifft,
            scratch: vec![Complex64::new(0.0, 0.0); len],
            cache: None,
        }
    }

    fn linear(&mut self, grid: &Grid, values: &mut [Complex64], h: f64) {
        if self.cache.as_ref().map(|c| c.h) != Some(h) {
            self.cache = Some(LinearStep::new(grid, h));
        }
        let step = self.cache.as_ref().expect("cached above");
        self.fft.process_with_scratch(values, &mut self.scratch);
        values.iter_mut().zip(&step.phase).for_each(|(z, p)| *z *= p);
        self.ifft.process_with_scratch(values, &mut self.scratch);
    }
}

#[inline]
fn nonlinear(values: &mut [Complex64], h: f64, cfg: &SimConfig) {
    for z in values.iter_mut() {
        let theta = -h * cfg.potential(z.norm_sqr());
        *z *= Complex64::from_polar(1.0, theta);
    }
}

/// One Strang step: half nonlinear, full linear, half nonlinear.
pub fn strang_step(u: &ComplexField, dt: f64, cfg: &SimConfig) -> Result<ComplexField> {
    let mut values = u.values.clone();
    let mut prop = Propagator::new(&u.grid);
    if cfg.nonlinear_on() {
        nonlinear(&mut values, dt / 2.0, cfg);
    }
    if cfg.linear_on() {
        prop.linear(&u.grid, &mut values, dt);
    }
    if cfg.nonlinear_on() {
        nonlinear(&mut values, dt / 2.0, cfg);
    }
    let out = ComplexField::new(u.grid.clone(), u.time + dt, values)?;
    if !out.is_finite() {
        return Err(Error::NonFinite {
            time: out.time,
            step: 1,
            last_mass: u.mass(),
            last_sup: grid::norm_linf(u),
        });
    }
    Ok(out)
}

/// Number and size of equal steps covering `span` with steps no longer than `dt`.
pub(crate) fn subdivide(span: f64, dt: f64) -> (usize, f64) {
    let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Advance `values` by `n` fused Strang steps of signed size `h`.
fn advance(
    grid: &Grid,
    prop: &mut Propagator,
    values: &mut [Complex64],
    n: usize,
    h: f64,
    cfg: &SimConfig,
    t0: f64,
    step_counter: &mut u64,
) -> Result<()> {
    let nl = cfg.nonlinear_on();
    let lin = cfg.linear_on();
    if nl {
        nonlinear(values, h / 2.0, cfg);
    }
    for k in 0..n {
        if lin {
            prop.linear(grid, values, h);
        }
        if nl {
            let hh = if k + 1 == n { h / 2.0 } else { h };
            nonlinear(values, hh, cfg);
        }
        *step_counter += 1;
        if (k + 1) % 512 == 0 || k + 1 == n {
            if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite {
                    time: t0 + (k + 1) as f64 * h,
                    step: *step_counter,
                    last_mass: f64::NAN,
                    last_sup: f64::NAN,
                });
            }
        }
    }
    Ok(())
}

fn checkpoint_schedule(start: f64, cfg: &SimConfig) -> Vec<f64> {
    let mut times: Vec<f64> = cfg
        .checkpoint_times
        .iter()
        .copied()
        .filter(|&t| t >= start - 1e-12 && t <= cfg.t_end + 1e-12)
        .collect();
    if times.last().map_or(true, |&t| t < cfg.t_end - 1e-12) {
        times.push(cfg.t_end);
    }
    times
}

/// Integrate from `u0` (at `cfg.t_start`) and record checkpoints at the
/// requested times (plus `t_end`). Aborts on non-finite values, mass drift
/// above `mass_tolerance`, or boundary mass above `boundary_tolerance`.
pub fn evolve(u0: &ComplexField, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if (u0.time - cfg.t_start).abs() > 1e-12 * cfg.t_start.abs().max(1.0) {
        return Err(Error::TimeRange(format!(
            "initial field at t = {} but t_start = {}",
            u0.time, cfg.t_start
        )));
    }
    let grid = u0.grid.clone();
    let mut prop = Propagator::new(&grid);
    let mut values = u0.values.clone();
    let mass0 = u0.mass();
    let mut t = cfg.t_start;
    let mut steps = 0u64;
    let mut checkpoints = Vec::new();
    let mut last_mass = mass0;
    let mut last_sup = grid::norm_linf(u0);

    for target in checkpoint_schedule(cfg.t_start, cfg) {
        if target > t + 1e-12 {
            let (n, h) = subdivide(target - t, cfg.dt);
            advance(&grid, &mut prop, &mut values, n, h, cfg, t, &mut steps).map_err(|e| match e {
                Error::NonFinite { time, step, .. } => Error::NonFinite {
                    time,
                    step,
                    last_mass,
                    last_sup,
                },
                other => other,
            })?;
            t = target;
        }
        let field = ComplexField::new(grid.clone(), t, values.clone())?;
        let diagnostics = Diagnostics::of(&field);
        let drift = if mass0 > 0.0 {
            (diagnostics.mass - mass0).abs() / mass0
        } else {
            diagnostics.mass
        };
        if drift > cfg.mass_tolerance {
            return Err(Error::MassDrift {
                time: t,
                drift,
                tolerance: cfg.mass_tolerance,
            });
        }
        if diagnostics.boundary_mass > cfg.boundary_tolerance {
            return Err(Error::BoundaryBreach {
                time: t,
                fraction: diagnostics.boundary_mass,
                tolerance: cfg.boundary_tolerance,
            });
        }
        last_mass = diagnostics.mass;
        last_sup = diagnostics.sup_norm;
        checkpoints.push(Checkpoint { field, diagnostics });
    }
    Ok(Trajectory {
        lambda: cfg.effective_lambda(),
        epsilon: cfg.epsilon,
        checkpoints,
    })
}

/// Final-time `L²` difference between runs at `dt` and `dt/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RichardsonReport {
    pub dt: f64,
    pub t_end: f64,
    pub diff_l2: f64,
}

pub fn richardson(u0: &ComplexField, cfg: &SimConfig) -> Result<RichardsonReport> {
    let coarse = SimConfig {
        checkpoint_times: Vec::new(),
        ..cfg.clone()
    };
    let fine = SimConfig {
        dt: cfg.dt / 2.0,
        ..coarse.clone()
    };
    let a = evolve(u0, &coarse)?;
    let b = evolve(u0, &fine)?;
    let ua = &a.last().expect("t_end checkpoint").field;
    let ub = &b.last().expect("t_end checkpoint").field;
    Ok(RichardsonReport {
        dt: cfg.dt,
        t_end: cfg.t_end,
        diff_l2: grid::norm_l2(&ua.sub(ub)?),
    })
}

/// `cosh(μh)` and `sinh(μh)/μ` for `μ² = m2` of either sign.
fn cosh_sinhc(m2: f64, h: f64) -> (f64, f64) {
    let x = m2 * h * h;
    if x.abs() < 1e-8 {
        (1.0 + x / 2.0, h * (1.0 + x / 6.0))
    } else if m2 > 0.0 {
        let mu = m2.sqrt();
        ((mu * h).cosh(), (mu * h).sinh() / mu)
    } else {
        let nu = (-m2).sqrt();
        ((nu * h).cos(), (nu * h).sin() / nu)
    }
}

/// Exact flow over time `h` of the pointwise system
/// `i u_t = V(|u|²) u`, `i w_t = A w − B w̄` with
/// `A = 2λ|u|² + F + |u|²F'` and `B = (λ + F') u²`.
fn linearized_potential_step(u: &mut [Complex64], w: &mut [Complex64], h: f64, cfg: &SimConfig) {
    let lam = cfg.lambda as f64;
    for (uz, wz) in u.iter_mut().zip(w.iter_mut()) {
        let r = uz.norm_sqr();
        let (fp, theta) = match cfg.perturbation {
            Some(p) => (p.derivative(r), cfg.potential(r)),
            None => (0.0, lam * r),
        };
        // In the frame rotating with u the coefficients are constant:
        // i z' = a z − b z̄, whose generator squares to (|b|² − a²)·I.
        let a = lam * r + r * fp;
        let b = (lam + fp) * *uz * *uz;
        let (c, s) = cosh_sinhc(b.norm_sqr() - a * a, h);
        let z = *wz;
        let i = Complex64::new(0.0, 1.0);
        let z_new = z * c + (-i * a * z + i * b * z.conj()) * s;
        let rot = Complex64::from_polar(1.0, -theta * h);
        *wz = z_new * rot;
        *uz *= rot;
    }
}

/// Evolve `w0` under `i w_t + ½ w_xx = A(u) w − B(u) w̄`, the equation obeyed
/// by `L u`, co-integrating the background from its checkpoint at `w0.time`.
/// Returns `w` at every later background checkpoint.
pub fn evolve_linearized(
    w0: &ComplexField,
    background: &Trajectory,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let start = background.at(w0.time).ok_or_else(|| {
        Error::TimeRange(format!(
            "background has no checkpoint at t = {} (covers {:?})",
            w0.time,
            background.times().first().zip(background.times().last())
        ))
    })?;
    grid::check_same_grid(&w0.grid, &start.field.grid)?;
    let grid = w0.grid.clone();
    let mut prop = Propagator::new(&grid);
    let mut u = start.field.values.clone();
    let mut w = w0.values.clone();
    let mut t = w0.time;
    let mut checkpoints = Vec::new();
    let nl = cfg.nonlinear_on();
    let t_begin = t;
    for cp in background.checkpoints.iter().filter(|c| c.field.time > t_begin + 1e-12) {
        let (n, h) = subdivide(cp.field.time - t, cfg.dt);
        if nl {
            linearized_potential_step(&mut u, &mut w, h / 2.0, cfg);
        }
        for k in 0..n {
            prop.linear(&grid, &mut u, h);
            prop.linear(&grid, &mut w, h);
            if nl {
                let hh = if k + 1 == n { h / 2.0 } else { h };
                linearized_potential_step(&mut u, &mut w, hh, cfg);
            }
        }
        t = cp.field.time;
        let field = ComplexField::new(grid.clone(), t, w.clone())?;
        if !field.is_finite() {
            return Err(Error::NonFinite {
                time: t,
                step: 0,
                last_mass: f64::NAN,
                last_sup: f64::NAN,
            });
        }
        let diagnostics = Diagnostics::of(&field);
        checkpoints.push(Checkpoint { field, diagnostics });
    }
    if checkpoints.is_empty() {
        return Err(Error::TimeRange(format!(
            "background ends before t = {}",
            w0.time
        )));
    }
    Ok(Trajectory {
        lambda: cfg.effective_lambda(),
        epsilon: cfg.epsilon,
        checkpoints,
    })
}

/// Log-log fit of `‖L u(t)‖` against `1 + t` over checkpoints with `t ≥ 1`.
pub fn energy_growth_exponent(traj: &Trajectory) -> Result<RateFit> {
    let samples: Vec<(f64, f64)> = traj
        .checkpoints
        .iter()
        .filter(|c| c.field.time >= 1.0 - 1e-12)
        .map(|c| (1.0 + c.field.time, c.diagnostics.lu_l2))
        .collect();
    let first = samples.first().map(|s| s.0 - 1.0).unwrap_or(0.0);
    let last = samples.last().map(|s| s.0 - 1.0).unwrap_or(0.0);
    if samples.len() < 2 || last < 100.0 * first {
        return Err(Error::InsufficientSpan(format!(
            "energy fit needs two decades past t = 1, have [{first}, {last}]"
        )));
    }
    rates::fit_power_law(&samples)
}

/// Geometric time grid `t_k = lo · (hi/lo)^{k/(n-1)}`.
pub fn geometric_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                lo * (hi / lo).powf(k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}
