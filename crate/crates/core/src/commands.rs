//! The six subcommands. Each reads a config or a run directory and writes its
//! artifacts into the output directory.
//!
//! | command     | needs                                   | writes |
//! |-------------|-----------------------------------------|--------|
//! | `simulate`  | config                                  | `run.toml`, `checkpoints/`, `checkpoints.csv`, `diagnostics.csv`, `richardson.json` (with `--dt-halve`) |
//! | `gamma`     | `run.toml`, `checkpoints.csv`, checkpoints | `gamma.csv`, `packets.csv` |
//! | `profile`   | the above plus `gamma.csv`, `packets.csv` | `profile.csv`, `profile_convergence.csv`, `regularity.csv`, `asymptotic_error.csv`, `profile_summary.json` |
//! | `verify`    | `run.toml`, `packets.csv`, optionally `profile_convergence.csv` | `verdicts.jsonl` |
//! | `complete`  | config                                  | `backward.csv`, `xnorm.csv`, `forcing.csv`, `v_match.bin`, `complete_summary.json` |
//! | `roundtrip` | config                                  | `roundtrip.csv`, `roundtrip_xnorm.csv`, `recovered_profile.csv` |

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, ClaimInputs, PacketAnalysis, PacketRow};
use crate::completeness::{self, NormKind};
use crate::config::RunConfig;
use crate::error::Result;
use crate::grid;
use crate::io;
use crate::profile::{ProfileStep, ScatteringProfile};
use crate::rates::{self, RateFit, Verdict};
use crate::solver::{self, Checkpoint, Diagnostics, Trajectory};
use crate::wavepacket::GammaField;

pub const RUN_CONFIG: &str = "run.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CHECKPOINT_INDEX: &str = "checkpoints.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const RICHARDSON: &str = "richardson.json";
pub const GAMMA: &str = "gamma.csv";
pub const PACKETS: &str = "packets.csv";
pub const PROFILE: &str = "profile.csv";
pub const PROFILE_CONVERGENCE: &str = "profile_convergence.csv";
pub const REGULARITY: &str = "regularity.csv";
pub const ASYMPTOTIC: &str = "asymptotic_error.csv";
pub const PROFILE_SUMMARY: &str = "profile_summary.json";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const BACKWARD: &str = "backward.csv";
pub const XNORM: &str = "xnorm.csv";
pub const FORCING: &str = "forcing.csv";
pub const V_MATCH: &str = "v_match.bin";
pub const COMPLETE_SUMMARY: &str = "complete_summary.json";
pub const ROUNDTRIP: &str = "roundtrip.csv";
pub const ROUNDTRIP_XNORM: &str = "roundtrip_xnorm.csv";
pub const RECOVERED: &str = "recovered_profile.csv";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexRow {
    index: usize,
    t: f64,
    file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GammaRow {
    t: f64,
    v: f64,
    re_gamma: f64,
    im_gamma: f64,
    abs_gamma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileRow {
    pub v: f64,
    pub re_w: f64,
    pub im_w: f64,
    pub abs_w: f64,
}

fn profile_rows(w: &ScatteringProfile) -> Vec<ProfileRow> {
    w.v.iter()
        .zip(&w.values)
        .map(|(&v, z)| ProfileRow { v, re_w: z.re, im_w: z.im, abs_w: z.norm() })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

fn checkpoint_name(k: usize) -> String {
    format!("{CHECKPOINT_DIR}/ckpt_{k:04}.bin")
}

/// Load `config`, overriding its output directory with `out` when given.
pub fn load_config(config: Option<&Path>, out: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = out {
        cfg.output.dir = o.to_path_buf();
    }
    Ok(cfg)
}

/// Configuration recorded by `simulate` in `dir`.
pub fn run_config(dir: &Path) -> Result<RunConfig> {
    io::require(dir, &[RUN_CONFIG.to_string()])?;
    let mut cfg = RunConfig::load(&dir.join(RUN_CONFIG))?;
    cfg.output.dir = dir.to_path_buf();
    Ok(cfg)
}

/// Forward evolution: checkpoints at `t = 0` and every analysis time.
pub fn cmd_simulate(cfg: &RunConfig, dt_halve: bool) -> Result<Trajectory> {
    cfg.validate()?;
    let dir = &cfg.output.dir;
    let grid = cfg.grid()?;
    let sim = cfg.sim_config();
    let u0 = cfg.initial.build(&grid, sim.epsilon, sim.t_start)?;
    log::info!("simulate: {} checkpoints up to t = {}", sim.checkpoint_times.len(), sim.t_end);
    let traj = solver::evolve(&u0, &sim)?;
    // the recorded config is relative to the run directory itself
    let mut recorded = cfg.clone();
    recorded.output.dir = PathBuf::from(".");
    io::write_atomic(&dir.join(RUN_CONFIG), recorded.to_toml().as_bytes())?;
    let mut index = Vec::with_capacity(traj.checkpoints.len());
    for (k, c) in traj.checkpoints.iter().enumerate() {
        let file = checkpoint_name(k);
        io::checkpoint_write(&dir.join(&file), &c.field, sim.effective_lambda(), sim.epsilon)?;
        index.push(IndexRow { index: k, t: c.field.time, file });
    }
    io::write_csv(&dir.join(CHECKPOINT_INDEX), &index)?;
    io::write_csv(&dir.join(DIAGNOSTICS), &traj.diagnostics())?;
    if dt_halve {
        let report = solver::richardson(&u0, &sim)?;
        write_json(&dir.join(RICHARDSON), &report)?;
    }
    Ok(traj)
}

/// Read the checkpoints of `dir` whose times satisfy `keep`.
pub fn load_trajectory(dir: &Path, keep: impl Fn(f64) -> bool) -> Result<Trajectory> {
    io::require(dir, &[RUN_CONFIG.to_string(), CHECKPOINT_INDEX.to_string()])?;
    let index: Vec<IndexRow> = io::read_csv(&dir.join(CHECKPOINT_INDEX))?;
    let wanted: Vec<&IndexRow> = index.iter().filter(|r| keep(r.t)).collect();
    io::require(dir, &wanted.iter().map(|r| r.file.clone()).collect::<Vec<_>>())?;
    let mut lambda = 0;
    let mut epsilon = 0.0;
    let mut checkpoints = Vec::with_capacity(wanted.len());
    for r in wanted {
        let (h, field) = io::checkpoint_read(&dir.join(&r.file))?;
        lambda = h.lambda;
        epsilon = h.epsilon;
        checkpoints.push(Checkpoint { diagnostics: Diagnostics::of(&field), field });
    }
    Ok(Trajectory { lambda, epsilon, checkpoints })
}

fn near_any(times: &[f64]) -> impl Fn(f64) -> bool + '_ {
    move |t| times.iter().any(|&s| (s - t).abs() <= 1e-9 * s.abs().max(1.0))
}

/// `γ` on the velocity window at every analysis time, plus the packet
/// diagnostics.
pub fn cmd_gamma(dir: &Path) -> Result<PacketAnalysis> {
    let cfg = run_config(dir)?;
    let schedule = cfg.schedule();
    let traj = load_trajectory(dir, |t| t >= 1.0 - 1e-12)?;
    let packets = analysis::analyze_packets(
        &traj,
        &schedule,
        &cfg.window(),
        cfg.sim_config().effective_lambda(),
        cfg.simulation.perturbation,
    )?;
    let rows: Vec<GammaRow> = packets
        .gammas
        .iter()
        .flat_map(|g| {
            g.v.iter().zip(&g.values).map(move |(&v, z)| GammaRow {
                t: g.time,
                v,
                re_gamma: z.re,
                im_gamma: z.im,
                abs_gamma: z.norm(),
            })
        })
        .collect();
    io::write_csv(&dir.join(GAMMA), &rows)?;
    io::write_csv(&dir.join(PACKETS), &packets.rows)?;
    Ok(packets)
}

/// `γ` fields and packet rows written by `gamma`.
pub fn load_packets(dir: &Path) -> Result<PacketAnalysis> {
    io::require(dir, &[GAMMA.to_string(), PACKETS.to_string()])?;
    let rows: Vec<PacketRow> = io::read_csv(&dir.join(PACKETS))?;
    let samples: Vec<GammaRow> = io::read_csv(&dir.join(GAMMA))?;
    let mut gammas: Vec<GammaField> = Vec::new();
    for s in samples {
        if gammas.last().map_or(true, |g| g.time != s.t) {
            gammas.push(GammaField::zeros(s.t, Vec::new()));
        }
        let g = gammas.last_mut().expect("pushed above");
        g.v.push(s.v);
        g.values.push(Complex64::new(s.re_gamma, s.im_gamma));
    }
    Ok(PacketAnalysis { rows, gammas })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub extraction_time: f64,
    pub w_l2: f64,
    pub u0_l2: f64,
    pub l2_ratio: f64,
    pub rate_linf: Option<RateFit>,
    pub rate_l2: Option<RateFit>,
    pub regularity_index: f64,
}

/// Scattering profile at each profile time, its convergence, regularity and
/// the asymptotic errors of the latest extraction.
pub fn cmd_profile(dir: &Path) -> Result<ProfileSummary> {
    let cfg = run_config(dir)?;
    let packets = load_packets(dir)?;
    let mut times = vec![0.0];
    times.extend(packets.gammas.iter().map(|g| g.time));
    let traj = load_trajectory(dir, near_any(&times))?;
    let report = analysis::analyze_profiles(
        &traj,
        &packets,
        &cfg.analysis.profile_times,
        cfg.sim_config().effective_lambda(),
        cfg.simulation.epsilon,
    )?;
    let w = report.latest();
    io::write_csv(&dir.join(PROFILE), &profile_rows(w))?;
    io::write_csv(&dir.join(PROFILE_CONVERGENCE), &report.steps)?;
    let reg: Vec<Vec<f64>> = report.regularity.curve.iter().map(|&(s, n)| vec![s, n]).collect();
    io::write_atomic(&dir.join(REGULARITY), &io::csv_table(&["s", "hs_norm"], &reg)?)?;
    io::write_csv(&dir.join(ASYMPTOTIC), &report.asymptotic)?;
    let summary = ProfileSummary {
        extraction_time: w.extraction_time,
        w_l2: w.norm_l2(),
        u0_l2: report.u0_l2,
        l2_ratio: w.norm_l2() / report.u0_l2,
        rate_linf: report.rate_linf,
        rate_l2: report.rate_l2,
        regularity_index: report.regularity.index,
    };
    write_json(&dir.join(PROFILE_SUMMARY), &summary)?;
    Ok(summary)
}

/// One verdict per claim that has data, as JSON lines.
pub fn cmd_verify(dir: &Path) -> Result<Vec<Verdict>> {
    let cfg = run_config(dir)?;
    io::require(dir, &[PACKETS.to_string()])?;
    let packets: Vec<PacketRow> = io::read_csv(&dir.join(PACKETS))?;
    let conv = dir.join(PROFILE_CONVERGENCE);
    let profile_steps: Vec<ProfileStep> = if conv.is_file() { io::read_csv(&conv)? } else { Vec::new() };
    let inputs = ClaimInputs {
        epsilon: cfg.simulation.epsilon,
        packets,
        profile_steps,
    };
    let verdicts = analysis::verify_claims(&inputs, cfg.verify.slack_constant, cfg.verify.r2_gate)?;
    let mut text = String::new();
    for v in &verdicts {
        text.push_str(&v.to_json_line());
        text.push('\n');
    }
    io::write_atomic(&dir.join(VERDICTS), text.as_bytes())?;
    Ok(verdicts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BackwardRow {
    t: f64,
    v_l2: f64,
    v_linf: f64,
    lv_l2: f64,
    lv_linf: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct XnormRow {
    norm: NormKind,
    t_lo: f64,
    linf_l2: f64,
    l4_linf: f64,
    weight: f64,
    value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ForcingRow {
    t: f64,
    f_l2: f64,
    f_linf: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompleteSummary {
    pub t_match: f64,
    pub t_max: f64,
    pub m_bound: f64,
    pub delta: f64,
    pub w_l2: f64,
    pub v_match_l2: f64,
    pub x_norm: f64,
    pub x_tilde_norm: f64,
    pub forcing_gap: f64,
    pub forcing_rate: Option<RateFit>,
}

fn xnorm_rows(kind: NormKind, table: &[rates::WindowNorm]) -> Vec<XnormRow> {
    table
        .iter()
        .map(|w| XnormRow {
            norm: kind,
            t_lo: w.t_lo,
            linf_l2: w.linf_l2,
            l4_linf: w.l4_linf,
            weight: w.weight,
            value: w.value,
        })
        .collect()
}

/// Backward solve for the correction `v` from `T_max` down to `T_match`.
pub fn cmd_complete(cfg: &RunConfig) -> Result<CompleteSummary> {
    let dir = &cfg.output.dir;
    let cc = cfg.completeness_config(cfg.completeness.t_max)?;
    let run = completeness::backward_solve(&cc)?;
    let rows: Vec<BackwardRow> = run
        .samples
        .iter()
        .zip(&run.l_samples)
        .map(|(a, b)| BackwardRow { t: a.t, v_l2: a.l2, v_linf: a.linf, lv_l2: b.l2, lv_linf: b.linf })
        .collect();
    io::write_csv(&dir.join(BACKWARD), &rows)?;
    let x = completeness::xnorm(&run, NormKind::X)?;
    let xt = completeness::xnorm(&run, NormKind::XTilde)?;
    let mut table = xnorm_rows(NormKind::X, &x);
    table.extend(xnorm_rows(NormKind::XTilde, &xt));
    io::write_csv(&dir.join(XNORM), &table)?;
    let grid = cc.grid()?;
    let mut forcing = Vec::new();
    let mut t = cc.t_match;
    while t <= cc.t_max * (1.0 + 1e-12) {
        let f = completeness::forcing_f(&cc.profile, t, &grid)?;
        forcing.push(ForcingRow { t, f_l2: grid::norm_l2(&f), f_linf: grid::norm_linf(&f) });
        t *= 2f64.sqrt();
    }
    io::write_csv(&dir.join(FORCING), &forcing)?;
    let forcing_rate = rates::fit_power_law(&forcing.iter().map(|r| (r.t, r.f_l2)).collect::<Vec<_>>()).ok();
    io::checkpoint_write(&dir.join(V_MATCH), run.v_match(), cc.lambda, cc.m_bound)?;
    let summary = CompleteSummary {
        t_match: cc.t_match,
        t_max: cc.t_max,
        m_bound: cc.m_bound,
        delta: cc.delta,
        w_l2: cc.profile.norm_l2(),
        v_match_l2: grid::norm_l2(run.v_match()),
        x_norm: completeness::sup_value(&x),
        x_tilde_norm: completeness::sup_value(&xt),
        forcing_gap: run.forcing_gap,
        forcing_rate,
    };
    write_json(&dir.join(COMPLETE_SUMMARY), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundtripRow {
    pub t_max: f64,
    pub t_match: f64,
    pub t_extract: f64,
    pub l2_error: f64,
    pub w_norm: f64,
    pub relative_error: f64,
    pub v_match_ratio: f64,
    pub x_norm: f64,
    pub x_tilde_norm: f64,
    pub forcing_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RoundtripXnormRow {
    t_max: f64,
    t_lo: f64,
    linf_l2: f64,
    l4_linf: f64,
    weight: f64,
    value: f64,
}

/// Round trip `W → v → u → W` for each `T_max` in the sweep. The recovered
/// profile of the largest `T_max` is written out.
pub fn cmd_roundtrip(cfg: &RunConfig) -> Result<Vec<RoundtripRow>> {
    let dir = &cfg.output.dir;
    let mut sweep = cfg.completeness.t_max_sweep.clone();
    if sweep.is_empty() {
        sweep.push(cfg.completeness.t_max);
    }
    let mut rows = Vec::new();
    let mut xrows = Vec::new();
    let mut last: Option<ScatteringProfile> = None;
    for t_max in sweep {
        let cc = cfg.completeness_config(t_max)?;
        log::info!("roundtrip: T_max = {t_max}");
        let r = completeness::roundtrip(&cc)?;
        rows.push(RoundtripRow {
            t_max: r.t_max,
            t_match: r.t_match,
            t_extract: r.t_extract,
            l2_error: r.l2_error,
            w_norm: r.w_norm,
            relative_error: r.l2_error / r.w_norm,
            v_match_ratio: r.v_match_ratio,
            x_norm: r.x_norm,
            x_tilde_norm: r.x_tilde_norm,
            forcing_gap: r.forcing_gap,
        });
        xrows.extend(r.x_table.iter().map(|w| RoundtripXnormRow {
            t_max,
            t_lo: w.t_lo,
            linf_l2: w.linf_l2,
            l4_linf: w.l4_linf,
            weight: w.weight,
            value: w.value,
        }));
        last = Some(r.recovered);
    }
    io::write_csv(&dir.join(ROUNDTRIP), &rows)?;
    io::write_csv(&dir.join(ROUNDTRIP_XNORM), &xrows)?;
    if let Some(w) = last {
        io::write_csv(&dir.join(RECOVERED), &profile_rows(&w))?;
    }
    Ok(rows)
}

/// Output directory of a run-directory command: `out` or the config's.
pub fn run_dir(config: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    match (out, config) {
        (Some(o), _) => Ok(o.to_path_buf()),
        (None, Some(c)) => Ok(RunConfig::load(c)?.output.dir),
        (None, None) => Ok(RunConfig::default().output.dir),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn small(dir: &Path) -> RunConfig {
        let text = r#"
            [grid]
            half_length = 1600.0
            n_points = 16384
            [simulation]
            mode = "linear_only"
            dt = 0.05
            [analysis]
            per_octave = 2
            v_min = -2.0
            v_max = 2.0
            n_v = 129
        "#;
        let mut c = RunConfig::parse(text, Path::new("small.toml")).unwrap();
        c.output.dir = dir.to_path_buf();
        c
    }

    #[test]
    fn pipeline_on_free_flow() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path());
        let traj = cmd_simulate(&cfg, false).unwrap();
        let n = traj.checkpoints.len();
        assert_eq!(n, 1 + cfg.schedule().checkpoint_times().len());
        let diag = std::fs::read_to_string(tmp.path().join(DIAGNOSTICS)).unwrap();
        assert!(diag.starts_with("t,mass,sup_norm,Lu_l2,boundary_mass\n"));
        let packets = cmd_gamma(tmp.path()).unwrap();
        let back = load_packets(tmp.path()).unwrap();
        assert_eq!(back.rows.len(), packets.rows.len());
        for (a, b) in back.gammas.iter().zip(&packets.gammas) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.v, b.v);
        }
        let summary = cmd_profile(tmp.path()).unwrap();
        assert!((summary.l2_ratio - 1.0).abs() < 0.05, "{summary:?}");
        let verdicts = cmd_verify(tmp.path()).unwrap();
        let sup = verdicts.iter().find(|v| v.claim_id == "sup_decay").unwrap();
        assert!(sup.pass, "{sup:?}");
        let text = std::fs::read_to_string(tmp.path().join(VERDICTS)).unwrap();
        assert_eq!(text.lines().count(), verdicts.len());
    }

    #[test]
    fn gamma_on_empty_directory_lists_missing() {
        let tmp = tempfile::tempdir().unwrap();
        match cmd_gamma(tmp.path()).unwrap_err() {
            Error::MissingArtifacts { missing, .. } => assert!(missing.contains(&RUN_CONFIG.to_string())),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_checkpoint_files_are_named() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path());
        cmd_simulate(&cfg, false).unwrap();
        std::fs::remove_file(tmp.path().join(checkpoint_name(3))).unwrap();
        let err = cmd_gamma(tmp.path()).unwrap_err();
        assert!(err.to_string().contains("ckpt_0003.bin"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }
}
