//! Periodic 1D grids, complex fields, unitary Fourier transforms, norms and
//! the vector field `L = x + i t ∂_x`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrum;

/// Fraction of the half-length beyond which mass counts as "at the boundary".
pub const BOUNDARY_FRACTION: f64 = 0.9;

/// Default ratio of boundary mass to total mass tolerated by long runs.
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-10;

/// Uniform periodic grid on `[-half_length, half_length)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    half_length: f64,
    n_points: usize,
    dx: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
}

impl Grid {
    pub fn new(half_length: f64, n_points: usize) -> Result<Arc<Grid>> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_length must be positive, got {half_length}"
            )));
        }
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 16, got {n_points}"
            )));
        }
        let dx = 2.0 * half_length / n_points as f64;
        let x = (0..n_points).map(|k| -half_length + k as f64 * dx).collect();
        let xi = spectrum::wavenumbers(n_points, dx);
        Ok(Arc::new(Grid {
            half_length,
            n_points,
            dx,
            x,
            xi,
        }))
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Spacing of the angular wavenumbers, `π / L`.
    pub fn dxi(&self) -> f64 {
        PI / self.half_length
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Centred ascending wavenumbers, `-π/dx ≤ ξ < π/dx`.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn xi_max(&self) -> f64 {
        PI / self.dx
    }

    /// Wavenumbers in raw FFT slot order, used by the time steppers.
    pub(crate) fn xi_fft_order(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        (0..n)
            .map(|k| {
                let m = if k < n / 2 { k } else { k - n };
                m as f64 * self.dxi()
            })
            .collect()
    }
}

/// Complex samples of a function on a grid at time `time`.
#[derive(Clone, Debug)]
pub struct ComplexField {
    pub grid: Arc<Grid>,
    pub time: f64,
    pub values: Vec<Complex64>,
}

/// Fourier-side samples indexed by [`Grid::xi`].
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grid: Arc<Grid>,
    pub time: f64,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, time: f64, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n_points
            )));
        }
        Ok(ComplexField { grid, time, values })
    }

    pub fn zeros(grid: Arc<Grid>, time: f64) -> Self {
        let n = grid.n_points;
        ComplexField {
            grid,
            time,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, time: f64, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.x.iter().map(|&x| f(x)).collect();
        ComplexField { grid, time, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Multiply by `e^{i c x}`.
    pub fn modulate(&self, c: f64) -> Self {
        let values = self
            .grid
            .x
            .iter()
            .zip(&self.values)
            .map(|(&x, z)| z * Complex64::from_polar(1.0, c * x))
            .collect();
        ComplexField {
            grid: self.grid.clone(),
            time: self.time,
            values,
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        ComplexField {
            grid: self.grid.clone(),
            time: self.time,
            values: self.values.iter().map(|z| z * a).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(ComplexField {
            grid: self.grid.clone(),
            time: self.time,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(ComplexField {
            grid: self.grid.clone(),
            time: self.time,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `∫ |u|² dx`.
    pub fn mass(&self) -> f64 {
        self.grid.dx * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Fraction of the mass sitting in `|x| > 0.9 L`.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total = self.mass();
        if total == 0.0 {
            return 0.0;
        }
        let cut = BOUNDARY_FRACTION * self.grid.half_length;
        let edge: f64 = self
            .grid
            .x
            .iter()
            .zip(&self.values)
            .filter(|(x, _)| x.abs() > cut)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        edge * self.grid.dx / total
    }

    /// Band-limited interpolant evaluated at arbitrary points.
    pub fn interpolate(&self, points: &[f64]) -> Vec<Complex64> {
        let spec = fourier_forward(self);
        let series = spectrum::ModeSeries::from_spectrum(
            &spec.values,
            self.grid.dx,
            i64::MIN / 4,
            i64::MAX / 4,
        );
        series.eval_many(points)
    }
}

impl SpectralField {
    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        sobolev_norm_samples(&self.values, self.grid.xi(), self.grid.dxi(), s)
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a.n_points != b.n_points || a.half_length != b.half_length {
        return Err(Error::GridMismatch(format!(
            "grids (L={}, N={}) and (L={}, N={}) differ",
            a.half_length, a.n_points, b.half_length, b.n_points
        )));
    }
    Ok(())
}

pub fn make_grid(half_length: f64, n_points: usize) -> Result<Arc<Grid>> {
    Grid::new(half_length, n_points)
}

pub fn fourier_forward(f: &ComplexField) -> SpectralField {
    let g = &f.grid;
    SpectralField {
        grid: g.clone(),
        time: f.time,
        values: spectrum::forward(&f.values, -g.half_length, g.dx),
    }
}

pub fn fourier_inverse(f: &SpectralField) -> ComplexField {
    let g = &f.grid;
    ComplexField {
        grid: g.clone(),
        time: f.time,
        values: spectrum::inverse(&f.values, -g.half_length, g.dx),
    }
}

pub fn norm_l2(f: &ComplexField) -> f64 {
    f.mass().sqrt()
}

pub fn norm_linf(f: &ComplexField) -> f64 {
    f.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `‖f‖²_{H^{0,1}} = ‖f‖² + ‖x f‖²`.
pub fn norm_h01(f: &ComplexField) -> f64 {
    let xf: f64 = f
        .grid
        .x
        .iter()
        .zip(&f.values)
        .map(|(x, z)| x * x * z.norm_sqr())
        .sum();
    (f.mass() + f.grid.dx * xf).sqrt()
}

/// Spectral derivative `∂_x f`; the Nyquist mode is dropped.
pub fn derivative(f: &ComplexField) -> ComplexField {
    let mut spec = fourier_forward(f);
    let nyq = -f.grid.xi_max();
    for (s, &xi) in spec.values.iter_mut().zip(f.grid.xi()) {
        *s = if xi == nyq {
            Complex64::new(0.0, 0.0)
        } else {
            *s * Complex64::new(0.0, xi)
        };
    }
    fourier_inverse(&spec)
}

/// `L u = x u + i t ∂_x u`. Warns if `u` has mass near the box edge, where the
/// sawtooth coordinate stops representing `x`.
pub fn apply_l(u: &ComplexField, t: f64) -> ComplexField {
    let frac = u.boundary_mass_fraction();
    if frac > DEFAULT_BOUNDARY_TOLERANCE {
        log::warn!(
            "apply_L at t = {t}: boundary mass fraction {frac:e} exceeds {DEFAULT_BOUNDARY_TOLERANCE:e}; domain too small"
        );
    }
    let du = derivative(u);
    let it = Complex64::new(0.0, t);
    let values = u
        .grid
        .x
        .iter()
        .zip(u.values.iter().zip(&du.values))
        .map(|(&x, (z, dz))| z * x + it * dz)
        .collect();
    ComplexField {
        grid: u.grid.clone(),
        time: u.time,
        values,
    }
}

/// `(Σ (1+ξ²)^s |F|² dξ)^{1/2}` for `s ∈ [0, 2]`.
pub fn sobolev_norm_samples(spectrum: &[Complex64], xi: &[f64], dxi: f64, s: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&s) {
        return Err(Error::InvalidConfig(format!(
            "Sobolev index must lie in [0, 2], got {s}"
        )));
    }
    let sum: f64 = spectrum
        .iter()
        .zip(xi)
        .map(|(z, &k)| (1.0 + k * k).powf(s) * z.norm_sqr())
        .sum();
    Ok((sum * dxi).sqrt())
}

pub fn sobolev_norm(f: &SpectralField, s: f64) -> Result<f64> {
    f.sobolev_norm(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(grid: &Arc<Grid>) -> ComplexField {
        ComplexField::from_fn(grid.clone(), 0.0, |x| Complex64::new((-x * x / 2.0).exp(), 0.0))
    }

    #[test]
    fn small_grid_layout() {
        let g = make_grid(8.0, 16).unwrap();
        assert_eq!(g.dx(), 1.0);
        let expect: Vec<f64> = (-8..8).map(|k| k as f64).collect();
        assert_eq!(g.x(), expect.as_slice());
    }

    #[test]
    fn nyquist_is_pi_over_dx() {
        let g = make_grid(PI * 64.0, 4096).unwrap();
        assert!((g.xi_max() - 32.0).abs() < 1e-12);
        assert!((g.xi()[0] + 32.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_grid(8.0, 17).is_err());
        assert!(make_grid(8.0, 8).is_err());
        assert!(make_grid(0.0, 16).is_err());
        assert!(make_grid(-1.0, 16).is_err());
    }

    #[test]
    fn gaussian_transform_is_gaussian() {
        let g = make_grid(16.0, 256).unwrap();
        let f = fourier_forward(&gaussian(&g));
        for (z, &xi) in f.values.iter().zip(g.xi()) {
            let exact = (-xi * xi / 2.0).exp();
            assert!((z - exact).norm() < 1e-10, "xi={xi}");
        }
    }

    #[test]
    fn zero_transforms_to_zero() {
        let g = make_grid(8.0, 64).unwrap();
        let f = fourier_forward(&ComplexField::zeros(g, 0.0));
        assert!(f.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn modulated_gaussian_shifts_spectrum() {
        let g = make_grid(16.0, 256).unwrap();
        let v0 = 5.0 * g.dxi();
        let u = gaussian(&g).modulate(v0);
        let f = fourier_forward(&u);
        // direct quadrature oracle at a few frequencies
        for &xi in &[v0, v0 + 0.5, v0 - 1.25] {
            let direct: Complex64 = g
                .x()
                .iter()
                .zip(&u.values)
                .map(|(&x, z)| z * Complex64::from_polar(1.0, -x * xi))
                .sum::<Complex64>()
                * (g.dx() / (2.0 * PI).sqrt());
            assert!((direct - (-(xi - v0).powi(2) / 2.0).exp()).norm() < 1e-10);
        }
        for (z, &xi) in f.values.iter().zip(g.xi()) {
            assert!((z - (-(xi - v0).powi(2) / 2.0).exp()).norm() < 1e-10);
        }
    }

    #[test]
    fn gaussian_norms() {
        let g = make_grid(16.0, 512).unwrap();
        let u = gaussian(&g);
        let l2 = norm_l2(&u);
        assert!((l2 - PI.powf(0.25)).abs() < 1e-10);
        let xl2 = (norm_h01(&u).powi(2) - l2 * l2).sqrt();
        assert!((xl2 - PI.powf(0.25) / 2f64.sqrt()).abs() < 1e-10);
        assert!((norm_linf(&u) - 1.0).abs() < 1e-12);
        let z = ComplexField::zeros(g, 0.0);
        assert_eq!(norm_l2(&z), 0.0);
        assert_eq!(norm_linf(&z), 0.0);
        assert_eq!(norm_h01(&z), 0.0);
    }

    #[test]
    fn l_operator_examples() {
        let g = make_grid(16.0, 512).unwrap();
        let u = gaussian(&g);
        let l0 = apply_l(&u, 0.0);
        for ((&x, z), w) in g.x().iter().zip(&u.values).zip(&l0.values) {
            assert!((w - z * x).norm() < 1e-12);
        }
        let l1 = apply_l(&u, 1.0);
        for (&x, w) in g.x().iter().zip(&l1.values) {
            let exact = Complex64::new(1.0, -1.0) * x * (-x * x / 2.0).exp();
            assert!((w - exact).norm() < 1e-10);
        }
        let z = apply_l(&ComplexField::zeros(g, 0.0), 3.0);
        assert!(z.values.iter().all(|w| w.norm() == 0.0));
    }

    #[test]
    fn sobolev_examples() {
        let g = make_grid(16.0, 512).unwrap();
        let u = gaussian(&g);
        let f = fourier_forward(&u);
        let s0 = sobolev_norm(&f, 0.0).unwrap();
        assert!((s0 - norm_l2(&u)).abs() < 1e-12);
        let s1 = sobolev_norm(&f, 1.0).unwrap();
        assert!((s1 - (1.5 * PI.sqrt()).sqrt()).abs() < 1e-8);
        let mut prev = 0.0;
        for k in 0..=8 {
            let s = sobolev_norm(&f, k as f64 * 0.25).unwrap();
            assert!(s >= prev);
            prev = s;
        }
        assert!(sobolev_norm(&f, 2.5).is_err());
        assert!(sobolev_norm(&f, -0.1).is_err());
    }

    fn smooth_field(grid: &Arc<Grid>, params: &[(f64, f64, f64, f64)]) -> ComplexField {
        ComplexField::from_fn(grid.clone(), 0.0, |x| {
            params
                .iter()
                .map(|&(a, c, w, k)| {
                    Complex64::from_polar(a * (-(x - c).powi(2) / (2.0 * w * w)).exp(), k * x)
                })
                .sum()
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(
            params in proptest::collection::vec(
                (0.1f64..2.0, -6.0f64..6.0, 0.5f64..2.0, -3.0f64..3.0), 1..4)
        ) {
            let g = make_grid(32.0, 1024).unwrap();
            let u = smooth_field(&g, &params);
            let f = fourier_forward(&u);
            let back = fourier_inverse(&f);
            let scale = norm_linf(&u);
            for (a, b) in u.values.iter().zip(&back.values) {
                prop_assert!((a - b).norm() <= 1e-12 * scale);
            }
            let phys = u.mass();
            let spec: f64 = f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dxi();
            prop_assert!((phys - spec).abs() <= 1e-12 * phys);
        }

        #[test]
        fn l_commutes_with_boost(k in -20i32..20, t in 0.0f64..3.0) {
            let g = make_grid(32.0, 1024).unwrap();
            let u = smooth_field(&g, &[(1.0, 0.5, 1.0, 0.7)]);
            let c = k as f64 * g.dxi();
            let lhs = apply_l(&u.modulate(c), t);
            let boosted = u.modulate(c);
            let rhs = apply_l(&u, t).modulate(c);
            for ((l, r), b) in lhs.values.iter().zip(&rhs.values).zip(&boosted.values) {
                prop_assert!((l - (r - b * (c * t))).norm() < 1e-10);
            }
        }
    }
}
