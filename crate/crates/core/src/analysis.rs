//! Forward-run analysis: the sampling schedule, per-time packet diagnostics,
//! profile extraction across octaves, and the claim sheet that turns the
//! measured decay rates into verdicts.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Grid};
use crate::profile::{self, AsymptoticError, ProfileStep, Regularity, ScatteringProfile};
use crate::rates::{self, RateFit, Verdict};
use crate::solver::{Perturbation, Trajectory};
use crate::wavepacket::{self, GammaField, VWindow};

/// Relative offsets of the four satellites around each analysis time. The
/// inner pair gives `γ̇`, the outer pair its Richardson error estimate.
pub const SATELLITES: [f64; 4] = [-1.0 / 32.0, -1.0 / 64.0, 1.0 / 64.0, 1.0 / 32.0];

/// Analysis times `t_min · 2^{k/per_octave}` up to `t_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub t_min: f64,
    pub t_max: f64,
    pub per_octave: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            t_min: 1.0,
            t_max: 256.0,
            per_octave: 4,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min >= 1.0) || !(self.t_max > self.t_min) || self.per_octave == 0 {
            return Err(Error::InvalidConfig(format!(
                "analysis schedule needs 1 ≤ t_min < t_max and per_octave ≥ 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn centres(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let t = self.t_min * 2f64.powf(k as f64 / self.per_octave as f64);
            if t > self.t_max * (1.0 + 1e-12) {
                break;
            }
            out.push(t);
            k += 1;
        }
        out
    }

    pub fn satellites(t: f64) -> [f64; 4] {
        SATELLITES.map(|s| t * (1.0 + s))
    }

    /// Every time a forward run has to stop at, ascending. Satellites below
    /// `t = 1`, where packets are undefined, are dropped.
    pub fn checkpoint_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self
            .centres()
            .into_iter()
            .flat_map(|t| {
                let s = Self::satellites(t);
                [s[0], s[1], t, s[2], s[3]]
            })
            .collect();
        times.retain(|&t| t >= 1.0);
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        times
    }

    /// The run has to reach the last outer satellite.
    pub fn t_end(&self) -> f64 {
        self.centres().last().map_or(self.t_max, |t| t * (1.0 + SATELLITES[3]))
    }
}

/// Initial data `u₀`, scaled by `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `ε e^{-(x−x₀)²/(2w²)} e^{ikx}`.
    Gaussian {
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: f64,
        #[serde(default)]
        velocity: f64,
    },
    /// A sum of `bumps` random Gaussians with random phases, normalised to
    /// `‖u₀‖_{L²} = ε`.
    Random { seed: u64, bumps: usize },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian {
            width: 1.0,
            center: 0.0,
            velocity: 0.0,
        }
    }
}

impl InitialData {
    pub fn build(&self, grid: &Arc<Grid>, epsilon: f64, t0: f64) -> Result<ComplexField> {
        match *self {
            InitialData::Gaussian { width, center, velocity } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidConfig(format!("width must be positive, got {width}")));
                }
                Ok(ComplexField::from_fn(grid.clone(), t0, |x| {
                    let y = (x - center) / width;
                    Complex64::from_polar(epsilon * (-0.5 * y * y).exp(), velocity * x)
                }))
            }
            InitialData::Random { seed, bumps } => {
                if bumps == 0 {
                    return Err(Error::InvalidConfig("random data needs at least one bump".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let parts: Vec<(f64, f64, f64, f64, f64)> = (0..bumps)
                    .map(|_| {
                        (
                            rng.gen_range(0.2..1.0),
                            rng.gen_range(-3.0..3.0),
                            rng.gen_range(0.7..1.5),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(0.0..std::f64::consts::TAU),
                        )
                    })
                    .collect();
                let u = ComplexField::from_fn(grid.clone(), t0, |x| {
                    parts
                        .iter()
                        .map(|&(a, c, w, k, p)| {
                            let y = (x - c) / w;
                            Complex64::from_polar(a * (-0.5 * y * y).exp(), k * x + p)
                        })
                        .sum()
                });
                let norm = grid::norm_l2(&u);
                Ok(u.scale(Complex64::new(epsilon / norm, 0.0)))
            }
        }
    }
}

/// Diagnostics at one analysis time. The difference-quotient fields are NaN
/// when the satellites would fall below `t = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketRow {
    pub t: f64,
    pub sup_norm: f64,
    pub lu_l2: f64,
    pub gamma_linf: f64,
    pub gamma_l2: f64,
    pub dgamma_l2: f64,
    pub diff_x_linf: f64,
    pub diff_x_l2: f64,
    pub diff_xi_linf: f64,
    pub diff_xi_l2: f64,
    /// `R` from the difference quotient of `γ`.
    pub residual_linf: f64,
    pub residual_l2: f64,
    /// Richardson estimate of the difference-quotient error, sup over `v`.
    pub residual_fd_error: f64,
    /// `R₁ + R₂ + R₃` from `u`.
    pub decomposed_linf: f64,
    pub decomposed_l2: f64,
    /// `‖R_ode − R_decomposed‖_{L∞}`.
    pub decomposition_gap: f64,
    pub r1_linf: f64,
    pub r2_linf: f64,
    pub r3_linf: f64,
}

#[derive(Clone, Debug)]
pub struct PacketAnalysis {
    pub rows: Vec<PacketRow>,
    /// `γ` at each analysis time.
    pub gammas: Vec<GammaField>,
}

fn field_at<'a>(traj: &'a Trajectory, t: f64) -> Result<&'a ComplexField> {
    traj.at(t).map(|c| &c.field).ok_or_else(|| Error::MissingClaimInput {
        claim: "packet analysis".into(),
        what: format!("checkpoint at t = {t}"),
    })
}

/// Packet diagnostics at every analysis time of `schedule`.
pub fn analyze_packets(
    traj: &Trajectory,
    schedule: &Schedule,
    window: &VWindow,
    lambda: i32,
    perturbation: Option<Perturbation>,
) -> Result<PacketAnalysis> {
    schedule.validate()?;
    let mut rows = Vec::new();
    let mut gammas = Vec::new();
    for t in schedule.centres() {
        let u = field_at(traj, t)?;
        let sat = Schedule::satellites(t);
        let g = wavepacket::gamma_conv(u, window)?;
        let parts = wavepacket::residual_decomposed(u, &g, lambda, perturbation)?;
        let total = parts.total();
        let (residual_linf, residual_l2, residual_fd_error, decomposition_gap) = if sat[0] >= 1.0 {
            let gs = sat
                .iter()
                .map(|&s| wavepacket::gamma_conv(field_at(traj, s)?, window))
                .collect::<Result<Vec<_>>>()?;
            let (res, err) = wavepacket::residual_with_error(&gs[0], &gs[1], &gs[2], &gs[3], lambda)?;
            (
                res.norm_linf(),
                res.norm_l2(),
                err.iter().cloned().fold(0.0, f64::max),
                res.sub(&total)?.norm_linf(),
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };
        let dx = wavepacket::diff_physical(u, &g)?;
        let dxi = wavepacket::diff_fourier(u, &g)?;
        let lu = grid::apply_l(u, t);
        rows.push(PacketRow {
            t,
            sup_norm: grid::norm_linf(u),
            lu_l2: grid::norm_l2(&lu),
            gamma_linf: g.norm_linf(),
            gamma_l2: g.norm_l2(),
            dgamma_l2: g.dv_values.as_ref().map_or(0.0, |d| wavepacket::l2_v(d, g.dv())),
            diff_x_linf: dx.linf,
            diff_x_l2: dx.l2,
            diff_xi_linf: dxi.linf,
            diff_xi_l2: dxi.l2,
            residual_linf,
            residual_l2,
            residual_fd_error,
            decomposed_linf: total.norm_linf(),
            decomposed_l2: total.norm_l2(),
            decomposition_gap,
            r1_linf: parts.r1.norm_linf(),
            r2_linf: parts.r2.norm_linf(),
            r3_linf: parts.r3.norm_linf(),
        });
        gammas.push(g);
    }
    Ok(PacketAnalysis { rows, gammas })
}

#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub profiles: Vec<ScatteringProfile>,
    pub steps: Vec<ProfileStep>,
    pub rate_linf: Option<RateFit>,
    pub rate_l2: Option<RateFit>,
    pub regularity: Regularity,
    pub asymptotic: Vec<AsymptoticError>,
    pub u0_l2: f64,
}

impl ProfileReport {
    /// The profile from the latest extraction time.
    pub fn latest(&self) -> &ScatteringProfile {
        self.profiles.last().expect("at least four extractions")
    }
}

/// Extract `W` at each of `times` (which must be analysis times), measure
/// convergence, regularity, and the asymptotic errors of the latest profile
/// at every analysis time in `[times[0], times.last()]`.
pub fn analyze_profiles(
    traj: &Trajectory,
    packets: &PacketAnalysis,
    times: &[f64],
    lambda: i32,
    epsilon: f64,
) -> Result<ProfileReport> {
    let pick = |t: f64| {
        packets
            .gammas
            .iter()
            .find(|g| (g.time - t).abs() <= 1e-9 * t)
            .cloned()
            .ok_or_else(|| Error::MissingClaimInput {
                claim: "profile extraction".into(),
                what: format!("γ at t = {t}"),
            })
    };
    let run = times.iter().map(|&t| pick(t)).collect::<Result<Vec<_>>>()?;
    let conv = profile::profile_convergence(&run, lambda)?;
    let profiles = run
        .iter()
        .map(|g| profile::extract_profile(g, lambda, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let latest = profiles.last().expect("checked by profile_convergence");
    let regularity = profile::profile_regularity(latest)?;
    let (lo, hi) = (times[0], *times.last().unwrap());
    let mut asymptotic = Vec::new();
    for g in &packets.gammas {
        if g.time >= lo * (1.0 - 1e-9) && g.time <= hi * (1.0 + 1e-9) {
            asymptotic.push(profile::asymptotic_error(field_at(traj, g.time)?, latest)?);
        }
    }
    let first = traj.checkpoints.first().ok_or_else(|| Error::MissingClaimInput {
        claim: "profile extraction".into(),
        what: "initial checkpoint".into(),
    })?;
    Ok(ProfileReport {
        steps: conv.steps,
        rate_linf: conv.rate_linf,
        rate_l2: conv.rate_l2,
        profiles,
        regularity,
        asymptotic,
        u0_l2: grid::norm_l2(&first.field),
    })
}

/// Which measured series a claim is fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    SupNorm,
    LuL2,
    GammaLinf,
    DiffXL2,
    DiffXLinf,
    DiffXiL2,
    DiffXiLinf,
    ResidualLinf,
    ResidualL2,
    ProfileLinf,
    ProfileL2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: &'static str,
    pub series: Series,
    /// Predicted exponent; a claim passes when the fit is at most this plus
    /// slack. Negative targets are decay claims and also need the `r²` gate;
    /// a zero target is a growth bound, where a flat series is the expected
    /// outcome and `r²` carries no information.
    pub target: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

/// The claim sheet for a forward run.
pub fn claim_registry() -> Vec<Claim> {
    let c = |id, series, target, t_lo, t_hi| Claim { id, series, target, t_lo, t_hi };
    vec![
        c("sup_decay", Series::SupNorm, -0.5, 1.0, 256.0),
        c("energy_growth", Series::LuL2, 0.0, 1.0, 256.0),
        c("diff_x_l2", Series::DiffXL2, -1.0, 8.0, 256.0),
        c("diff_x_linf", Series::DiffXLinf, -0.75, 8.0, 256.0),
        c("diff_xi_l2", Series::DiffXiL2, -0.5, 8.0, 256.0),
        c("diff_xi_linf", Series::DiffXiLinf, -0.25, 8.0, 256.0),
        c("residual_linf", Series::ResidualLinf, -1.25, 8.0, 256.0),
        c("residual_l2", Series::ResidualL2, -1.5, 8.0, 256.0),
        c("profile_linf", Series::ProfileLinf, -0.25, 16.0, 256.0),
        c("profile_l2", Series::ProfileL2, -0.5, 16.0, 256.0),
    ]
}

/// What [`verify_claims`] reads.
#[derive(Clone, Debug, Default)]
pub struct ClaimInputs {
    pub epsilon: f64,
    pub packets: Vec<PacketRow>,
    pub profile_steps: Vec<ProfileStep>,
}

impl ClaimInputs {
    /// `(t, y)` samples of `series` within `[lo, hi]`. Energy growth is
    /// measured against `1 + t`.
    pub fn samples(&self, series: Series, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let pick = |r: &PacketRow| match series {
            Series::SupNorm => r.sup_norm,
            Series::LuL2 => r.lu_l2,
            Series::GammaLinf => r.gamma_linf,
            Series::DiffXL2 => r.diff_x_l2,
            Series::DiffXLinf => r.diff_x_linf,
            Series::DiffXiL2 => r.diff_xi_l2,
            Series::DiffXiLinf => r.diff_xi_linf,
            Series::ResidualLinf => r.residual_linf,
            Series::ResidualL2 => r.residual_l2,
            Series::ProfileLinf | Series::ProfileL2 => unreachable!(),
        };
        let inside = |t: f64| t >= lo * (1.0 - 1e-9) && t <= hi * (1.0 + 1e-9);
        match series {
            Series::ProfileLinf => self.profile_steps.iter().filter(|s| inside(s.t)).map(|s| (s.t, s.linf)).collect(),
            Series::ProfileL2 => self.profile_steps.iter().filter(|s| inside(s.t)).map(|s| (s.t, s.l2)).collect(),
            Series::LuL2 => self.packets.iter().filter(|r| inside(r.t)).map(|r| (1.0 + r.t, pick(r))).collect(),
            _ => self.packets.iter().filter(|r| inside(r.t)).map(|r| (r.t, pick(r))).collect(),
        }
    }
}

/// One verdict per registered claim, with slack `C ε²`. Claims whose series
/// cannot be fitted (too few samples, non-positive values) are skipped with a
/// warning; a run with no packet rows at all is an error.
pub fn verify_claims(inputs: &ClaimInputs, slack_constant: f64, r2_gate: f64) -> Result<Vec<Verdict>> {
    if inputs.packets.is_empty() {
        return Err(Error::MissingClaimInput {
            claim: "all".into(),
            what: "packet diagnostics".into(),
        });
    }
    let slack = slack_constant * inputs.epsilon * inputs.epsilon;
    let mut out = Vec::new();
    for claim in claim_registry() {
        let samples = inputs.samples(claim.series, claim.t_lo, claim.t_hi);
        match rates::fit_power_law(&samples) {
            Ok(fit) => {
                let gate = if claim.target < 0.0 { r2_gate } else { 0.0 };
                out.push(Verdict::judge(claim.id, claim.target, slack, fit, gate));
            }
            Err(e) => log::warn!("claim {} skipped: {e}", claim.id),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::solver::{evolve, SimConfig, SplitMode};

    #[test]
    fn schedule_layout() {
        let s = Schedule::default();
        let c = s.centres();
        assert_eq!(c.len(), 33);
        assert_eq!(c[0], 1.0);
        assert!((c[32] - 256.0).abs() < 1e-12);
        assert!((s.t_end() - 264.0).abs() < 1e-9);
        let all = s.checkpoint_times();
        assert_eq!(all.len(), 33 * 5 - 2);
        assert!(all.windows(2).all(|w| w[1] > w[0]));
        // inner pairs are centred on the analysis time
        let sat = Schedule::satellites(10.0);
        assert!((0.5 * (sat[1] + sat[2]) - 10.0).abs() < 1e-12);
        assert!(Schedule { t_min: 0.5, ..s }.validate().is_err());
    }

    #[test]
    fn initial_data_builders() {
        let g = make_grid(64.0, 1024).unwrap();
        let u = InitialData::default().build(&g, 0.1, 0.0).unwrap();
        assert!((grid::norm_linf(&u) - 0.1).abs() < 1e-15);
        let r = InitialData::Random { seed: 3, bumps: 4 }.build(&g, 0.2, 0.0).unwrap();
        assert!((grid::norm_l2(&r) - 0.2).abs() < 1e-12);
        let again = InitialData::Random { seed: 3, bumps: 4 }.build(&g, 0.2, 0.0).unwrap();
        assert_eq!(r.values, again.values);
        assert!(InitialData::Gaussian { width: 0.0, center: 0.0, velocity: 0.0 }.build(&g, 0.1, 0.0).is_err());
    }

    fn linear_run() -> (Trajectory, Schedule, VWindow) {
        let g = make_grid(400.0, 4096).unwrap();
        let sched = Schedule { t_min: 1.0, t_max: 64.0, per_octave: 2 };
        let cfg = SimConfig {
            mode: SplitMode::LinearOnly,
            dt: 0.05,
            t_start: 0.0,
            t_end: sched.t_end(),
            checkpoint_times: sched.checkpoint_times(),
            ..SimConfig::default()
        };
        let u0 = InitialData::default().build(&g, 0.1, 0.0).unwrap();
        let window = VWindow { v_min: -3.0, v_max: 3.0, n: 241 };
        (evolve(&u0, &cfg).unwrap(), sched, window)
    }

    #[test]
    fn linear_run_claims() {
        let (traj, sched, window) = linear_run();
        let pa = analyze_packets(&traj, &sched, &window, 0, None).unwrap();
        assert_eq!(pa.rows.len(), 13);
        // Free flow: Lu(t) = Lu(0), and sup|u| = ε (1 + t²)^{-1/4} exactly.
        for r in &pa.rows {
            assert!((r.lu_l2 - pa.rows[0].lu_l2).abs() < 1e-10);
            let exact = 0.1 * (1.0 + r.t * r.t).powf(-0.25);
            assert!((r.sup_norm - exact).abs() < 1e-9 * exact);
            assert!(r.r2_linf == 0.0 && r.r3_linf == 0.0);
        }
        let report = analyze_profiles(&traj, &pa, &[16.0, 32.0, 64.0], 0, 0.1);
        assert!(report.is_err(), "three extraction times are too few");
        let inputs = ClaimInputs { epsilon: 0.1, packets: pa.rows.clone(), profile_steps: Vec::new() };
        let verdicts = verify_claims(&inputs, 5.0, 0.9).unwrap();
        let sup = verdicts.iter().find(|v| v.claim_id == "sup_decay").unwrap();
        assert!(sup.pass, "{sup:?}");
        assert!(verdicts.iter().all(|v| !v.claim_id.starts_with("profile")));
    }

    #[test]
    fn fabricated_slow_decay_fails() {
        let packets: Vec<PacketRow> = [1.0, 2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&t: &f64| PacketRow {
                t,
                sup_norm: t.powf(-0.2),
                lu_l2: 1.0,
                gamma_linf: 1.0,
                gamma_l2: 1.0,
                dgamma_l2: 1.0,
                diff_x_linf: 1.0,
                diff_x_l2: 1.0,
                diff_xi_linf: 1.0,
                diff_xi_l2: 1.0,
                residual_linf: 1.0,
                residual_l2: 1.0,
                residual_fd_error: 0.0,
                decomposed_linf: 1.0,
                decomposed_l2: 1.0,
                decomposition_gap: 0.0,
                r1_linf: 1.0,
                r2_linf: 0.0,
                r3_linf: 0.0,
            })
            .collect();
        let inputs = ClaimInputs { epsilon: 0.1, packets, profile_steps: Vec::new() };
        let v = verify_claims(&inputs, 5.0, 0.9).unwrap();
        let sup = v.iter().find(|v| v.claim_id == "sup_decay").unwrap();
        assert!(!sup.pass);
        assert!((sup.measured.exponent + 0.2).abs() < 1e-12);
        assert!(verify_claims(&ClaimInputs::default(), 5.0, 0.9).is_err());
    }
}
