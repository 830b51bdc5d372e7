//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected with the offending name and its line.
//!
//! ```toml
//! [grid]
//! half_length = 1600.0
//! n_points = 16384
//!
//! [simulation]
//! lambda = 1            # +1 defocusing, -1 focusing
//! epsilon = 0.1
//! dt = 0.005
//! mode = "full"         # "full" | "linear_only" | "nonlinear_only"
//! # t_end defaults to the last analysis satellite
//! # perturbation = { mu = 0.01, delta_exp = 0.5 }
//!
//! [initial]
//! kind = "gaussian"     # or "random" with seed and bumps
//! width = 1.0
//!
//! [analysis]
//! t_min = 1.0
//! t_max = 256.0
//! per_octave = 4
//! v_min = -4.0
//! v_max = 4.0
//! n_v = 2049
//! profile_times = [16.0, 32.0, 64.0, 128.0, 256.0]
//!
//! [completeness]
//! m_bound = 0.1
//! delta = 0.25
//! t_match = 16.0
//! t_max = 256.0
//! t_max_sweep = [64.0, 128.0, 256.0]
//! profile = { kind = "gaussian" }   # or { kind = "csv", path = "profile.csv" }
//!
//! [verify]
//! slack_constant = 5.0  # exponent slack C ε²
//! r2_gate = 0.9
//!
//! [output]
//! dir = "runs/default"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{InitialData, Schedule};
use crate::completeness::CompletenessConfig;
use crate::error::{Error, Result};
use crate::grid::{self, Grid, DEFAULT_BOUNDARY_TOLERANCE};
use crate::profile::ScatteringProfile;
use crate::solver::{Perturbation, SimConfig, SplitMode};
use crate::wavepacket::VWindow;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub simulation: SimulationSection,
    pub initial: InitialData,
    pub analysis: AnalysisSection,
    pub completeness: CompletenessSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_length: f64,
    pub n_points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_length: 1600.0,
            n_points: 1 << 14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub lambda: i32,
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: Option<f64>,
    pub mode: SplitMode,
    pub perturbation: Option<Perturbation>,
    pub mass_tolerance: f64,
    pub boundary_tolerance: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimulationSection {
            lambda: d.lambda,
            epsilon: d.epsilon,
            dt: d.dt,
            t_end: None,
            mode: d.mode,
            perturbation: None,
            mass_tolerance: d.mass_tolerance,
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub t_min: f64,
    pub t_max: f64,
    pub per_octave: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub n_v: usize,
    pub profile_times: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let s = Schedule::default();
        let w = VWindow::default();
        AnalysisSection {
            t_min: s.t_min,
            t_max: s.t_max,
            per_octave: s.per_octave,
            v_min: w.v_min,
            v_max: w.v_max,
            n_v: w.n,
            profile_times: vec![16.0, 32.0, 64.0, 128.0, 256.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSource {
    /// `A e^{-v²/2}` scaled to `‖W‖_{H^{1+2δ}} = M`.
    Gaussian,
    /// Columns `v, re_W, im_W` (as written by `profile`), relative to the
    /// config file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletenessSection {
    pub m_bound: f64,
    pub delta: f64,
    pub t_match: f64,
    pub t_max: f64,
    pub t_max_sweep: Vec<f64>,
    pub half_length: f64,
    pub n_points: usize,
    pub dt_backward: f64,
    pub step_fraction: f64,
    pub dt_forward: f64,
    pub extract_factor: f64,
    pub profile: ProfileSource,
}

impl Default for CompletenessSection {
    fn default() -> Self {
        CompletenessSection {
            m_bound: 0.1,
            delta: 0.25,
            t_match: 16.0,
            t_max: 256.0,
            t_max_sweep: vec![64.0, 128.0, 256.0],
            half_length: 1600.0,
            n_points: 1 << 14,
            dt_backward: 0.05,
            step_fraction: 1.0 / 400.0,
            dt_forward: 0.02,
            extract_factor: 1.0,
            profile: ProfileSource::Gaussian,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// `C` in the exponent slack `C ε²`.
    pub slack_constant: f64,
    /// Minimum `r²` for a decay claim to pass.
    pub r2_gate: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            slack_constant: 5.0,
            r2_gate: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Parse `text`; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, path)?;
        if let ProfileSource::Csv { path: p } = &mut cfg.completeness.profile {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        grid::make_grid(self.grid.half_length, self.grid.n_points)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            t_min: self.analysis.t_min,
            t_max: self.analysis.t_max,
            per_octave: self.analysis.per_octave,
        }
    }

    pub fn window(&self) -> VWindow {
        VWindow {
            v_min: self.analysis.v_min,
            v_max: self.analysis.v_max,
            n: self.analysis.n_v,
        }
    }

    /// The forward run: from `t = 0` through every analysis time.
    pub fn sim_config(&self) -> SimConfig {
        let s = &self.simulation;
        let schedule = self.schedule();
        let t_end = s.t_end.unwrap_or_else(|| schedule.t_end());
        let mut checkpoint_times = vec![0.0];
        checkpoint_times.extend(schedule.checkpoint_times().into_iter().filter(|&t| t <= t_end));
        SimConfig {
            lambda: s.lambda,
            perturbation: s.perturbation,
            epsilon: s.epsilon,
            dt: s.dt,
            t_start: 0.0,
            t_end,
            checkpoint_times,
            mode: s.mode,
            mass_tolerance: s.mass_tolerance,
            boundary_tolerance: s.boundary_tolerance,
        }
    }

    pub fn profile(&self) -> Result<ScatteringProfile> {
        let c = &self.completeness;
        match &c.profile {
            ProfileSource::Gaussian => CompletenessConfig::gaussian_profile(c.m_bound, c.delta, self.simulation.lambda),
            ProfileSource::Csv { path } => {
                let rows: Vec<crate::commands::ProfileRow> = crate::io::read_csv(path)?;
                let v = rows.iter().map(|r| r.v).collect();
                let values = rows.iter().map(|r| Complex64::new(r.re_w, r.im_w)).collect();
                ScatteringProfile::new(v, values, f64::INFINITY, c.m_bound, self.simulation.lambda)
            }
        }
    }

    /// Completeness settings with backward start `t_max`.
    pub fn completeness_config(&self, t_max: f64) -> Result<CompletenessConfig> {
        let c = &self.completeness;
        let profile = self.profile()?;
        Ok(CompletenessConfig {
            lambda: self.simulation.lambda,
            profile,
            m_bound: c.m_bound,
            delta: c.delta,
            t_max,
            t_match: c.t_match,
            half_length: c.half_length,
            n_points: c.n_points,
            dt_backward: c.dt_backward,
            step_fraction: c.step_fraction,
            dt_forward: c.dt_forward,
            extract_factor: c.extract_factor,
        })
    }

    /// Checks for the forward run and its analysis.
    pub fn validate(&self) -> Result<()> {
        let g = self.grid()?;
        let sim = self.sim_config();
        sim.validate()?;
        let schedule = self.schedule();
        schedule.validate()?;
        let window = self.window();
        window.validate()?;
        let centres = schedule.centres();
        let t_last = centres.last().copied().unwrap_or(schedule.t_max);
        if t_last * (1.0 + crate::analysis::SATELLITES[3]) > sim.t_end * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "t_end = {} stops before the last analysis satellite",
                sim.t_end
            )));
        }
        window.check_box(&g, t_last * (1.0 + crate::analysis::SATELLITES[3]))?;
        for &t in &self.analysis.profile_times {
            if !centres.iter().any(|c| (c - t).abs() <= 1e-9 * t) {
                return Err(Error::InvalidConfig(format!(
                    "profile time {t} is not an analysis time"
                )));
            }
        }
        Ok(())
    }
}
