//! The batch subcommands: nav-run, gap-montecarlo, stim-dump and analyze.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    artifact_body, artifact_header, csv_string, header_value, read_file, write_file, ServiceError,
    VERSION,
};
use crate::gap::{
    monte_carlo, required_clearance, required_lift_force, write_edges_csv, write_histogram_csv,
    write_trials_csv, Arrangement, GapCalibration, GapSummary, MonteCarloRun,
};
use crate::nav::trial_seed;
use crate::scenario::{
    summarize, DensityGrid, NavSummary, Scenario, ScenarioConfig, ScenarioTrial,
};
use crate::stats::report::{
    build_report, read_gap_trials, read_heart_rate_table, render_text, GroupData,
};
use crate::stim::{build_pulse_train, Channel, ChannelSet, DacModel, StimulusCommand};

fn json_string<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Default)]
pub struct NavRunOptions {
    /// Scenario file, or any artifact written by a previous run.
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<u32>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct NavRunOutput {
    pub summary: NavSummary,
    pub trials: Vec<ScenarioTrial>,
    pub config_toml: String,
}

pub fn load_scenario(
    config: Option<&Path>,
    seed: Option<u64>,
    trials: Option<u32>,
) -> Result<Scenario, ServiceError> {
    let mut cfg = match config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::from_text(ScenarioConfig::default_toml())?,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = trials {
        cfg.trials = n;
    }
    Ok(cfg.resolve()?)
}

const TRIAL_COLUMNS: [&str; 13] = [
    "trial",
    "seed",
    "status",
    "time_to_goal_s",
    "duration_s",
    "path_length_mm",
    "left_antenna",
    "right_antenna",
    "cerci",
    "commands",
    "retransmissions",
    "link_failures",
    "slit_crossings",
];

fn write_nav_trials<W: Write>(trials: &[ScenarioTrial], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for t in trials {
        let r = &t.record;
        w.write_record([
            t.index.to_string(),
            r.seed.to_string(),
            serde_json::to_value(r.status)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            r.time_to_goal_s
                .map_or(String::new(), |v| format!("{v:.3}")),
            format!("{:.3}", r.duration_s),
            format!("{:.3}", r.path_length_mm),
            r.counts.left_antenna.to_string(),
            r.counts.right_antenna.to_string(),
            r.counts.cerci.to_string(),
            r.link.commands.to_string(),
            r.link.retransmissions.to_string(),
            r.link.failed.to_string(),
            t.crossings.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every trial of a scenario and writes `trials/trial_NNNN.csv`,
/// `nav_trials.csv`, `density.csv` and `nav_summary.json`.
pub fn nav_run(opts: &NavRunOptions) -> Result<NavRunOutput, ServiceError> {
    let sc = load_scenario(opts.config.as_deref(), opts.seed, opts.trials)?;
    let config_toml = sc.config.to_toml();
    let seed = sc.config.seed;
    let trials = sc.run();
    let out = &opts.out_dir;

    let files: Vec<(PathBuf, String)> = trials
        .par_iter()
        .map(|t| {
            let header = artifact_header(
                "nav-run",
                seed,
                &[
                    ("trial", t.index.to_string()),
                    ("trial_seed", t.record.seed.to_string()),
                ],
                &config_toml,
            );
            let body = csv_string(|b| t.record.write_csv(b))?;
            Ok((
                out.join("trials").join(format!("trial_{:04}.csv", t.index)),
                header + &body,
            ))
        })
        .collect::<Result<_, ServiceError>>()?;
    for (path, text) in &files {
        write_file(path, text.as_bytes())?;
    }

    let header = artifact_header("nav-run", seed, &[], &config_toml);
    let table = csv_string(|b| write_nav_trials(&trials, b))?;
    write_file(
        &out.join("nav_trials.csv"),
        (header.clone() + &table).as_bytes(),
    )?;

    let grid = DensityGrid::from_trials(&sc.config.arena, sc.config.density_cell_mm, &trials);
    let density = csv_string(|b| grid.write_csv(b))?;
    write_file(&out.join("density.csv"), (header + &density).as_bytes())?;

    let summary = summarize(&trials);
    let doc = json!({
        "tool": format!("cyborg {VERSION}"),
        "command": "nav-run",
        "seed": seed,
        "config": config_toml,
        "summary": summary,
        "trials": trials,
    });
    write_file(&out.join("nav_summary.json"), json_string(&doc).as_bytes())?;
    Ok(NavRunOutput {
        summary,
        trials,
        config_toml,
    })
}

fn default_gap_seed() -> u64 {
    1
}
fn default_gap_trials() -> u64 {
    10_000
}

/// Everything a gap Monte Carlo run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapRunConfig {
    #[serde(default = "default_gap_seed")]
    pub seed: u64,
    #[serde(default = "default_gap_trials")]
    pub trials: u64,
    #[serde(default = "all_profiles")]
    pub profiles: Vec<Arrangement>,
    pub calibration: GapCalibration,
}

fn all_profiles() -> Vec<Arrangement> {
    Arrangement::ALL.to_vec()
}

impl GapRunConfig {
    /// Accepts a run config (or an artifact embedding one) or a bare calibration file.
    pub fn from_text(text: &str) -> Result<Self, ServiceError> {
        let body = crate::scenario::embedded_config(text)
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        let run = match toml::from_str::<GapRunConfig>(&body) {
            Ok(run) => run,
            Err(run_err) => match GapCalibration::from_toml(&body) {
                Ok(calibration) => GapRunConfig {
                    seed: default_gap_seed(),
                    trials: default_gap_trials(),
                    profiles: all_profiles(),
                    calibration,
                },
                Err(_) => {
                    return Err(ServiceError::Config(format!(
                        "config parse error: {}",
                        run_err.to_string().trim_end()
                    )))
                }
            },
        };
        let calibration = run
            .calibration
            .checked()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(GapRunConfig { calibration, ..run })
    }

    /// Seed for one profile's trials, so the profiles draw independent streams.
    pub fn profile_seed(&self, profile: Arrangement) -> u64 {
        let idx = Arrangement::ALL
            .iter()
            .position(|a| *a == profile)
            .expect("known profile");
        trial_seed(self.seed, idx as u64)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("gap config serialises")
    }
}

#[derive(Debug, Clone, Default)]
pub struct GapOptions {
    pub config: Option<PathBuf>,
    /// A profile name or `all`.
    pub profile: Option<String>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub analyze: bool,
    pub out_dir: PathBuf,
}

/// Runs the gap Monte Carlo for the selected profiles and writes
/// `gap_trials_<p>.csv`, `gap_histogram_<p>.csv`, `gap_edges_<p>.csv` and
/// `gap_summary.json`; with `analyze`, also the comparison report.
pub fn gap_montecarlo(opts: &GapOptions) -> Result<Vec<GapSummary>, ServiceError> {
    let mut cfg = match &opts.config {
        Some(p) => GapRunConfig::from_text(&read_file(p)?)?,
        None => GapRunConfig {
            seed: default_gap_seed(),
            trials: default_gap_trials(),
            profiles: all_profiles(),
            calibration: GapCalibration::default(),
        },
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(n) = opts.trials {
        cfg.trials = n;
    }
    match opts.profile.as_deref() {
        None => {}
        Some(p) if p.eq_ignore_ascii_case("all") => cfg.profiles = all_profiles(),
        Some(p) => {
            cfg.profiles = vec![p
                .parse()
                .map_err(|e: crate::gap::GapError| ServiceError::Usage(e.to_string()))?]
        }
    }
    for p in &cfg.profiles {
        cfg.calibration
            .profile(*p)
            .map_err(|e| ServiceError::Usage(e.to_string()))?;
    }
    let config_toml = cfg.to_toml();
    let out = &opts.out_dir;

    let mut runs: Vec<(Arrangement, MonteCarloRun)> = Vec::new();
    for &p in &cfg.profiles {
        let profile = cfg.calibration.profile(p).expect("checked above");
        let pseed = cfg.profile_seed(p);
        let run = monte_carlo(profile, &cfg.calibration.shutter, cfg.trials, pseed);
        let header = artifact_header(
            "gap-montecarlo",
            cfg.seed,
            &[
                ("profile", p.to_string()),
                ("profile_seed", pseed.to_string()),
            ],
            &config_toml,
        );
        let trials = csv_string(|b| write_trials_csv(&run.outcomes, b))?;
        write_file(
            &out.join(format!("gap_trials_{p}.csv")),
            (header.clone() + &trials).as_bytes(),
        )?;
        let hist = csv_string(|b| write_histogram_csv(&run.summary, b))?;
        write_file(
            &out.join(format!("gap_histogram_{p}.csv")),
            (header.clone() + &hist).as_bytes(),
        )?;
        let edges = csv_string(|b| write_edges_csv(&run.summary, b))?;
        write_file(
            &out.join(format!("gap_edges_{p}.csv")),
            (header + &edges).as_bytes(),
        )?;
        runs.push((p, run));
    }

    let shutter = &cfg.calibration.shutter;
    let clearance: serde_json::Map<String, serde_json::Value> = cfg
        .profiles
        .iter()
        .map(|p| {
            (
                p.to_string(),
                json!(required_clearance(
                    cfg.calibration.profile(*p).expect("checked"),
                    shutter
                )),
            )
        })
        .collect();
    let summaries: Vec<GapSummary> = runs.iter().map(|(_, r)| r.summary.clone()).collect();
    let doc = json!({
        "tool": format!("cyborg {VERSION}"),
        "command": "gap-montecarlo",
        "seed": cfg.seed,
        "config": config_toml,
        "lift_force": required_lift_force(shutter),
        "required_clearance_mm": clearance,
        "profiles": summaries,
    });
    write_file(&out.join("gap_summary.json"), json_string(&doc).as_bytes())?;

    if opts.analyze {
        if runs.len() < 2 {
            return Err(ServiceError::Usage(
                "--analyze needs at least two profiles".into(),
            ));
        }
        let groups: Vec<GroupData> = runs
            .iter()
            .map(|(p, r)| {
                let text = csv_string(|b| write_trials_csv(&r.outcomes, b))?;
                let rows = read_gap_trials(text.as_bytes())
                    .map_err(|e| ServiceError::Runtime(e.to_string()))?;
                Ok(GroupData::from_rows(p.name(), &rows))
            })
            .collect::<Result<_, ServiceError>>()?;
        write_report(
            out,
            &groups,
            None,
            json!({ "seed": cfg.seed, "config": config_toml }),
        )?;
    }
    Ok(summaries)
}

fn write_report(
    out: &Path,
    groups: &[GroupData],
    heart: Option<PathBuf>,
    provenance: serde_json::Value,
) -> Result<(), ServiceError> {
    let heart = match heart {
        Some(p) => Some(
            read_heart_rate_table(read_file(&p)?.as_bytes())
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?,
        ),
        None => None,
    };
    let report = build_report(groups, heart).map_err(|e| ServiceError::Runtime(e.to_string()))?;
    write_file(&out.join("report.txt"), render_text(&report).as_bytes())?;
    let mut doc =
        json!({ "tool": format!("cyborg {VERSION}"), "command": "analyze", "report": report });
    if let (Some(d), Some(p)) = (doc.as_object_mut(), provenance.as_object()) {
        d.extend(p.clone());
    }
    write_file(&out.join("report.json"), json_string(&doc).as_bytes())
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    /// `gap_trials_<profile>.csv` files; empty means the three defaults in `out_dir`.
    pub inputs: Vec<PathBuf>,
    pub heart_rate: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Compares gap trial files across groups and writes `report.txt` and `report.json`.
pub fn analyze(opts: &AnalyzeOptions) -> Result<(), ServiceError> {
    let inputs: Vec<PathBuf> = if opts.inputs.is_empty() {
        Arrangement::ALL
            .iter()
            .map(|p| opts.out_dir.join(format!("gap_trials_{p}.csv")))
            .filter(|p| p.exists())
            .collect()
    } else {
        opts.inputs.clone()
    };
    if inputs.is_empty() && opts.heart_rate.is_none() {
        return Err(ServiceError::Usage("no gap trial files to analyze".into()));
    }
    let mut groups = Vec::new();
    let mut sources = Vec::new();
    for path in &inputs {
        let text = read_file(path)?;
        let label = header_value(&text, "profile")
            .map(str::to_string)
            .unwrap_or_else(|| {
                let stem = path
                    .file_stem()
                    .map_or(String::new(), |s| s.to_string_lossy().into_owned());
                stem.strip_prefix("gap_trials_")
                    .unwrap_or(&stem)
                    .to_string()
            });
        let rows = read_gap_trials(artifact_body(&text).as_bytes())
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        groups.push(GroupData::from_rows(&label, &rows));
        sources.push(json!({ "path": path.display().to_string(), "profile": label, "seed": header_value(&text, "seed") }));
    }
    write_report(
        &opts.out_dir,
        &groups,
        opts.heart_rate.clone(),
        json!({ "inputs": sources }),
    )
}

#[derive(Debug, Clone)]
pub struct StimDumpOptions {
    pub amplitude_v: f64,
    pub pulse_width_ms: u32,
    pub duration_ms: u32,
    /// Channel names joined by `+` or `,`: left, right, cerci, spare.
    pub channels: String,
}

impl Default for StimDumpOptions {
    fn default() -> Self {
        Self {
            amplitude_v: 2.5,
            pulse_width_ms: 12,
            duration_ms: 400,
            channels: "cerci".into(),
        }
    }
}

fn parse_channels(s: &str) -> Result<ChannelSet, ServiceError> {
    s.split(['+', ','])
        .filter(|t| !t.trim().is_empty())
        .try_fold(ChannelSet::EMPTY, |set, name| {
            let ch = match name.trim() {
                "left" => Channel::LeftAntenna,
                "right" => Channel::RightAntenna,
                "cerci" => Channel::Cerci,
                "spare" => Channel::Spare,
                other => return Err(ServiceError::Usage(format!("unknown channel `{other}`"))),
            };
            Ok(set.with(ch))
        })
}

/// Writes the dense DAC output for one command as `time_ms,code,voltage_v` CSV.
pub fn stim_dump<W: Write>(opts: &StimDumpOptions, out: W) -> Result<usize, ServiceError> {
    let dac = DacModel::default();
    let cmd = StimulusCommand::new(
        parse_channels(&opts.channels)?,
        opts.amplitude_v,
        opts.pulse_width_ms,
        opts.duration_ms,
    );
    let train = build_pulse_train(&cmd, &dac).map_err(|e| ServiceError::Usage(e.to_string()))?;
    crate::stim::write_dense_csv(&train.render_dense(&dac), out)
        .map_err(|e| ServiceError::Runtime(e.to_string()))?;
    Ok(train.pair_count())
}
