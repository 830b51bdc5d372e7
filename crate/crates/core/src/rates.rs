//! Power-law fits, dyadic time-window norms and pass/fail verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of samples accepted by [`fit_power_law`].
pub const MIN_FIT_SAMPLES: usize = 4;
/// Minimum `t_max / t_min` accepted by [`fit_power_law`] (two octaves).
pub const MIN_FIT_SPAN: f64 = 4.0;
/// Default goodness-of-fit gate for verdicts.
pub const DEFAULT_R2_GATE: f64 = 0.9;
/// Slack constant `C` in the `C ε²` exponent allowance.
pub const DEFAULT_SLACK_CONSTANT: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    /// Intercept of `log y = intercept + exponent · log t`.
    pub intercept: f64,
    pub r_squared: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub n_samples: usize,
}

/// Least-squares fit of `log y` against `log t`.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<RateFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSpan(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    for w in samples.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InsufficientSpan(format!(
                "sample times must be strictly increasing ({} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    for &(t, y) in samples {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::NonPositiveSample { t, y });
        }
        if !(t > 0.0) {
            return Err(Error::InsufficientSpan(format!("non-positive time {t}")));
        }
    }
    let t_min = samples[0].0;
    let t_max = samples[samples.len() - 1].0;
    if t_max / t_min < MIN_FIT_SPAN * (1.0 - 1e-12) {
        return Err(Error::InsufficientSpan(format!(
            "span [{t_min}, {t_max}] is shorter than two octaves"
        )));
    }
    let n = samples.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = samples.iter().map(|&(t, y)| (t.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum();
    // A flat series is fitted exactly by exponent 0.
    let r_squared = if ss_tot <= 1e-28 * n {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        exponent,
        intercept,
        r_squared,
        t_min,
        t_max,
        n_samples: samples.len(),
    })
}

/// Restrict a series to `t ∈ [lo, hi]` (inclusive, with relative slack).
pub fn window(samples: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    samples
        .iter()
        .copied()
        .filter(|&(t, _)| t >= lo * (1.0 - 1e-9) && t <= hi * (1.0 + 1e-9))
        .collect()
}

/// One sample of a time series entering a dyadic norm: the spatial `L²` and
/// `L∞` norms of a field at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowNorm {
    /// Left end `T` of the window `[T, 2T]`.
    pub t_lo: f64,
    /// `‖·‖_{L∞_t L²_x}` over the window.
    pub linf_l2: f64,
    /// `‖·‖_{L⁴_t L∞_x}` over the window (trapezoid rule in `t`).
    pub l4_linf: f64,
    pub weight: f64,
    /// `weight · (linf_l2 + l4_linf)`.
    pub value: f64,
}

/// Weighted norms over the windows `[T, 2T]`, `T = t0·2^k`, `2T ≤ t_end`.
/// Each window needs at least four samples.
pub fn dyadic_sup_norm(
    series: &[NormSample],
    t0: f64,
    t_end: f64,
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<WindowNorm>> {
    const REQUIRED: usize = 4;
    let mut out = Vec::new();
    let mut t_lo = t0;
    while 2.0 * t_lo <= t_end * (1.0 + 1e-9) {
        let t_hi = 2.0 * t_lo;
        let pts: Vec<&NormSample> = series
            .iter()
            .filter(|s| s.t >= t_lo * (1.0 - 1e-9) && s.t <= t_hi * (1.0 + 1e-9))
            .collect();
        if pts.len() < REQUIRED {
            return Err(Error::SparseWindow {
                t_lo,
                t_hi,
                count: pts.len(),
                required: REQUIRED,
            });
        }
        let linf_l2 = pts.iter().map(|s| s.l2).fold(0.0, f64::max);
        let l4: f64 = pts
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].linf.powi(4) + w[1].linf.powi(4)))
            .sum();
        let l4_linf = l4.powf(0.25);
        let wgt = weight(t_lo);
        out.push(WindowNorm {
            t_lo,
            linf_l2,
            l4_linf,
            weight: wgt,
            value: wgt * (linf_l2 + l4_linf),
        });
        t_lo = t_hi;
    }
    if out.is_empty() {
        return Err(Error::SparseWindow {
            t_lo: t0,
            t_hi: 2.0 * t0,
            count: 0,
            required: REQUIRED,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim_id: String,
    pub target_exponent: f64,
    pub slack: f64,
    pub measured: RateFit,
    pub pass: bool,
}

impl Verdict {
    /// One-sided exponent bound: passes when `exponent ≤ target + slack` and the
    /// fit clears the `r²` gate.
    pub fn judge(claim_id: &str, target: f64, slack: f64, measured: RateFit, r2_gate: f64) -> Self {
        let pass = measured.exponent <= target + slack && measured.r_squared >= r2_gate;
        Verdict {
            claim_id: claim_id.to_string(),
            target_exponent: target,
            slack,
            measured,
            pass,
        }
    }

    /// JSON-lines record `{claim_id, target, slack, exponent, r2, pass}`.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            claim_id: &'a str,
            target: f64,
            slack: f64,
            exponent: f64,
            r2: f64,
            pass: bool,
        }
        serde_json::to_string(&Line {
            claim_id: &self.claim_id,
            target: self.target_exponent,
            slack: self.slack,
            exponent: self.measured.exponent,
            r2: self.measured.r_squared,
            pass: self.pass,
        })
        .expect("verdict serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let ts = geometric(1.0, 256.0, 17);
        let f = fit_power_law(&ts.iter().map(|&t| (t, t.powf(-0.5))).collect::<Vec<_>>()).unwrap();
        assert!((f.exponent + 0.5).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f = fit_power_law(&ts.iter().map(|&t| (t, 3.0 * t.powf(-1.25))).collect::<Vec<_>>())
            .unwrap();
        assert!((f.exponent + 1.25).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn wobbly_power_law() {
        let ts = geometric(1.0, 256.0, 33);
        let s: Vec<_> = ts
            .iter()
            .map(|&t| (t, (1.0 + 0.01 * t.ln().sin()) / t))
            .collect();
        let f = fit_power_law(&s).unwrap();
        assert!(f.exponent >= -1.02 && f.exponent <= -0.98, "{}", f.exponent);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (4.0, 1.0), (8.0, 1.0)]),
            Err(Error::NonPositiveSample { .. })
        ));
        assert!(fit_power_law(&[(1.0, 1.0), (1.5, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (4.0, 1.0), (8.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (4.0, 1.0), (2.0, 1.0), (8.0, 1.0)]).is_err());
    }

    #[test]
    fn constant_series_unit_weight() {
        let series: Vec<NormSample> = geometric(1.0, 16.0, 33)
            .into_iter()
            .map(|t| NormSample { t, l2: 0.7, linf: 0.7 })
            .collect();
        let table = dyadic_sup_norm(&series, 1.0, 16.0, |_| 1.0).unwrap();
        assert_eq!(table.len(), 4);
        for w in &table {
            assert!((w.linf_l2 - 0.7).abs() < 1e-15);
            // (∫_T^{2T} c⁴ dt)^{1/4} = c T^{1/4}
            assert!((w.l4_linf - 0.7 * w.t_lo.powf(0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn decaying_series_is_flat_under_matching_weight() {
        let delta = 0.25;
        let series: Vec<NormSample> = geometric(16.0, 256.0, 129)
            .into_iter()
            .map(|t| {
                let y = t.powf(-0.5 - delta);
                NormSample { t, l2: y, linf: 0.0 }
            })
            .collect();
        let table = dyadic_sup_norm(&series, 16.0, 256.0, |t| t.powf(0.5 + delta)).unwrap();
        for w in &table {
            assert!((w.value - 1.0).abs() < 1e-12);
        }
        let spread = 2f64.powf(0.5 + delta);
        for pair in table.windows(2) {
            assert!(pair[1].value / pair[0].value <= spread);
        }
    }

    #[test]
    fn empty_window_is_an_error() {
        let series = vec![NormSample { t: 1.0, l2: 1.0, linf: 1.0 }];
        assert!(matches!(
            dyadic_sup_norm(&series, 1.0, 4.0, |_| 1.0),
            Err(Error::SparseWindow { .. })
        ));
    }

    #[test]
    fn verdicts() {
        let ts = geometric(1.0, 64.0, 7);
        let fit = fit_power_law(&ts.iter().map(|&t| (t, t.powf(-0.2))).collect::<Vec<_>>()).unwrap();
        assert!(!Verdict::judge("fabricated", -0.5, 0.02, fit, DEFAULT_R2_GATE).pass);
        let fit = fit_power_law(&ts.iter().map(|&t| (t, t.powf(-0.5))).collect::<Vec<_>>()).unwrap();
        let v = Verdict::judge("ok", -0.5, 0.02, fit, DEFAULT_R2_GATE);
        assert!(v.pass);
        assert_eq!(v.to_json_line(), v.clone().to_json_line());
        assert!(v.to_json_line().contains("\"claim_id\":\"ok\""));
    }

    proptest! {
        #[test]
        fn exponent_is_scale_invariant(c in 1e-6f64..1e6, p in -2.0f64..1.0, wob in 0.0f64..0.3) {
            let ts = geometric(1.0, 100.0, 12);
            let base: Vec<_> = ts.iter().map(|&t| (t, t.powf(p) * (1.0 + wob * t.sin().abs()))).collect();
            let scaled: Vec<_> = base.iter().map(|&(t, y)| (t, c * y)).collect();
            let a = fit_power_law(&base).unwrap();
            let b = fit_power_law(&scaled).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
            prop_assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-9);
        }

        #[test]
        fn exact_on_power_laws(p in -3.0f64..2.0, a in 0.01f64..100.0) {
            let ts = geometric(0.5, 512.0, 9);
            let s: Vec<_> = ts.iter().map(|&t| (t, a * t.powf(p))).collect();
            let f = fit_power_law(&s).unwrap();
            prop_assert!((f.exponent - p).abs() < 1e-12);
        }
    }
}
