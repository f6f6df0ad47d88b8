//! Scenario files: arena, start and goal, walls with slits, and every model
//! parameter a navigation run needs.
//!
//! A scenario is loaded from TOML with unknown keys rejected, then resolved:
//! named profiles are replaced by their full parameter blocks so the resolved
//! file alone reproduces a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap::{
    run_gap_trial, Arrangement, ArrangementProfile, GapCalibration, GapError, NegotiationState,
    ShutterModel,
};
use crate::link::{LinkModel, RetryPolicy};
use crate::nav::{
    run_navigation_in, trial_seed, NavTarget, NavWorld, NavigationConfig, Terrain, TerrainEvent,
    TrialRecord, TrialStatus,
};
use crate::sim::{
    normalize_deg, AgentState, Pose, ProfileError, ResponseModel, ResponseProfile,
    SpontaneousBehavior,
};

const DEFAULT_TOML: &str = include_str!("../scenarios/default.toml");
const CONCEALED_TOML: &str = include_str!("../scenarios/concealed.toml");

/// Marks the start and end of a config embedded in an artifact header.
pub const CONFIG_BEGIN: &str = "# --- config ---";
pub const CONFIG_END: &str = "# --- end config ---";

/// How far past a wall the agent lands after squeezing through a slit.
const SLIT_EXIT_MM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Arena {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    fn edges(&self) -> [Wall; 4] {
        let (a, b, c, d) = (self.x_min, self.x_max, self.y_min, self.y_max);
        [
            Wall::solid(a, c, b, c),
            Wall::solid(b, c, b, d),
            Wall::solid(b, d, a, d),
            Wall::solid(a, d, a, c),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
    /// Draw each trial's initial heading uniformly instead.
    #[serde(default)]
    pub randomize_heading: bool,
}

/// An opening in a wall, centred `at` mm along it from its first end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slit {
    pub at: f64,
    pub width_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default)]
    pub slits: Vec<Slit>,
}

impl Wall {
    pub fn solid(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self {
            x1,
            y1,
            x2,
            y2,
            slits: Vec::new(),
        }
    }

    pub fn length(&self) -> f64 {
        (self.x2 - self.x1).hypot(self.y2 - self.y1)
    }

    fn unit(&self) -> (f64, f64) {
        let l = self.length();
        ((self.x2 - self.x1) / l, (self.y2 - self.y1) / l)
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        let (ux, uy) = self.unit();
        (self.x1 + s * ux, self.y1 + s * uy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    #[default]
    Default,
    Symmetric,
}

fn one_trial() -> u32 {
    1
}
fn default_capture() -> f64 {
    30.0
}
fn default_dt() -> f64 {
    10.0
}
fn default_telemetry() -> f64 {
    30.0
}
fn default_cell() -> f64 {
    50.0
}
fn default_arrangement() -> Arrangement {
    Arrangement::Implanted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default = "one_trial")]
    pub trials: u32,
    #[serde(default = "default_dt")]
    pub dt_ms: f64,
    #[serde(default = "default_telemetry")]
    pub telemetry_hz: f64,
    /// Side of a trajectory density cell.
    #[serde(default = "default_cell")]
    pub density_cell_mm: f64,
    /// Contacts this close to a slit edge are guided into the slit.
    #[serde(default = "default_capture")]
    pub slit_capture_mm: f64,
    #[serde(default)]
    pub response_profile: ProfileName,
    #[serde(default = "default_arrangement")]
    pub arrangement: Arrangement,
    /// Gap calibration file; relative paths start at the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    pub arena: Arena,
    pub start: StartPose,
    pub target: NavTarget,
    /// Visited in order before the target.
    #[serde(default)]
    pub waypoints: Vec<NavTarget>,
    #[serde(default)]
    pub navigation: NavigationConfig,
    #[serde(default)]
    pub behavior: SpontaneousBehavior,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutter: Option<ShutterModel>,
    /// Inline response calibration; overrides `response_profile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseProfile>,
    /// Inline gap profile; overrides `arrangement` and `calibration`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<ArrangementProfile>,
    #[serde(default)]
    pub walls: Vec<Wall>,
}

impl ScenarioConfig {
    pub fn default_toml() -> &'static str {
        DEFAULT_TOML
    }

    pub fn concealed_toml() -> &'static str {
        CONCEALED_TOML
    }

    /// Parses a scenario file, an artifact with an embedded config header, or
    /// a JSON summary carrying a `config` string.
    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        let body = embedded_config(text)?;
        toml::from_str(&body)
            .map_err(|e| ScenarioError::Parse(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_text(&text)?;
        if let (Some(cal), Some(dir)) = (cfg.calibration.as_mut(), path.parent()) {
            if cal.is_relative() {
                *cal = dir.join(&*cal);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Full route: waypoints then the target.
    pub fn route(&self) -> Vec<NavTarget> {
        self.waypoints
            .iter()
            .copied()
            .chain(std::iter::once(self.target))
            .collect()
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let a = &self.arena;
        if !(a.x_min < a.x_max && a.y_min < a.y_max)
            || [a.x_min, a.x_max, a.y_min, a.y_max]
                .iter()
                .any(|v| !v.is_finite())
        {
            return Err(invalid("arena", "bounds must be finite with min < max"));
        }
        if !a.contains(self.start.x, self.start.y) {
            return Err(invalid("start", "start lies outside the arena"));
        }
        if !a.contains(self.target.x, self.target.y) {
            return Err(invalid("target", "target lies outside the arena"));
        }
        if let Some(i) = self.waypoints.iter().position(|w| !a.contains(w.x, w.y)) {
            return Err(invalid(
                &format!("waypoints[{i}]"),
                "waypoint lies outside the arena",
            ));
        }
        if !self.start.heading_deg.is_finite() {
            return Err(invalid("start.heading_deg", "must be finite"));
        }
        if !(self.dt_ms > 0.0 && self.dt_ms <= f64::from(self.navigation.decision_period_ms)) {
            return Err(invalid(
                "dt_ms",
                "must be positive and no longer than the decision period",
            ));
        }
        if !(self.telemetry_hz > 0.0 && self.telemetry_hz.is_finite()) {
            return Err(invalid("telemetry_hz", "must be positive"));
        }
        if !(self.density_cell_mm > 0.0) {
            return Err(invalid("density_cell_mm", "must be positive"));
        }
        if !(self.slit_capture_mm >= 0.0) {
            return Err(invalid("slit_capture_mm", "must be >= 0"));
        }
        self.navigation
            .validate()
            .map_err(|e| invalid("navigation", e.to_string()))?;
        self.behavior
            .validate()
            .map_err(|e| invalid("behavior", e))?;
        self.link.validate().map_err(|e| invalid("link", e))?;
        if !(self.retry.ack_timeout_ms > 0.0) {
            return Err(invalid("retry.ack_timeout_ms", "must be positive"));
        }
        for (i, w) in self.walls.iter().enumerate() {
            let len = w.length();
            if !(len > 0.0 && len.is_finite()) {
                return Err(invalid(
                    &format!("walls[{i}]"),
                    "wall must have finite, non-zero length",
                ));
            }
            for (j, s) in w.slits.iter().enumerate() {
                if !(s.width_mm > 0.0 && s.at >= 0.0 && s.at <= len) {
                    return Err(invalid(
                        &format!("walls[{i}].slits[{j}]"),
                        format!(
                            "slit must sit within the wall (0..={len:.1} mm) with positive width"
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Validates and replaces named profiles with inline parameter blocks.
    pub fn resolve(mut self) -> Result<Scenario, ScenarioError> {
        self.validate()?;
        let response = match self.response.take() {
            Some(r) => r,
            None => match self.response_profile {
                ProfileName::Default => ResponseProfile::default(),
                ProfileName::Symmetric => ResponseProfile::symmetric(),
            },
        };
        let model = response.compile()?;
        self.response = Some(response);

        if self.gap.is_none() || self.shutter.is_none() {
            let cal = match self.calibration.take() {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    GapCalibration::from_toml(&text)?
                }
                None => GapCalibration::default(),
            };
            if self.gap.is_none() {
                self.gap = Some(cal.profile(self.arrangement)?.clone());
            }
            if self.shutter.is_none() {
                self.shutter = Some(cal.shutter);
            }
        }
        self.calibration = None;
        if let Some(g) = self.gap.as_mut() {
            g.name = None;
        }
        let mut gap = self.gap.clone().expect("resolved above");
        gap.name = Some(self.arrangement);
        gap.validate()?;
        let shutter = self.shutter.expect("resolved above");
        shutter.validate()?;
        Ok(Scenario {
            config: self,
            model,
            gap,
            shutter,
        })
    }
}

/// The TOML text of a scenario file, an artifact header or a JSON summary.
pub fn embedded_config(text: &str) -> Result<String, ScenarioError> {
    if text.trim_start().starts_with('{') {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        return v
            .get("config")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| ScenarioError::Parse("JSON input has no `config` string".into()));
    }
    let mut lines = text.lines();
    if !lines.clone().any(|l| l == CONFIG_BEGIN) {
        return Ok(text.to_string());
    }
    lines.find(|l| *l == CONFIG_BEGIN);
    let mut out = String::new();
    for l in lines {
        if l == CONFIG_END {
            return Ok(out);
        }
        let l = l
            .strip_prefix('#')
            .ok_or_else(|| ScenarioError::Parse("unterminated embedded config".into()))?;
        out.push_str(l.strip_prefix(' ').unwrap_or(l));
        out.push('\n');
    }
    Err(ScenarioError::Parse("unterminated embedded config".into()))
}

/// A validated scenario with compiled models.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: ResponseModel,
    pub gap: ArrangementProfile,
    pub shutter: ShutterModel,
}

impl Scenario {
    pub fn default_scenario() -> Self {
        ScenarioConfig::from_text(DEFAULT_TOML)
            .and_then(ScenarioConfig::resolve)
            .expect("shipped scenario is valid")
    }

    /// Start pose for a trial; a random heading draws from stream 3 of its seed.
    pub fn start_pose(&self, seed: u64) -> Pose {
        let s = &self.config.start;
        let heading = if s.randomize_heading {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(3);
            180.0 - rng.gen::<f64>() * 360.0
        } else {
            s.heading_deg
        };
        Pose::new(s.x, s.y, heading)
    }

    pub fn world(&self, seed: u64) -> NavWorld {
        let c = &self.config;
        NavWorld {
            start: self.start_pose(seed),
            model: self.model.clone(),
            behavior: c.behavior,
            link: c.link,
            retry: c.retry,
            dt_ms: c.dt_ms,
        }
    }

    pub fn terrain(&self, seed: u64) -> WalledArena {
        WalledArena::new(self, seed)
    }

    pub fn trial_seed(&self, index: u32) -> u64 {
        trial_seed(self.config.seed, u64::from(index))
    }

    pub fn run_trial(&self, index: u32) -> ScenarioTrial {
        let seed = self.trial_seed(index);
        let mut terrain = self.terrain(seed);
        let record = run_navigation_in(
            &self.world(seed),
            &mut terrain,
            &self.config.route(),
            &self.config.navigation,
            seed,
        );
        ScenarioTrial {
            index,
            record,
            crossings: terrain.crossings,
        }
    }

    /// All trials, in parallel; each depends only on its index.
    pub fn run(&self) -> Vec<ScenarioTrial> {
        (0..self.config.trials)
            .into_par_iter()
            .map(|i| self.run_trial(i))
            .collect()
    }
}

/// One slit negotiation during a trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlitCrossing {
    pub t_ms: f64,
    pub wall: usize,
    pub slit: usize,
    pub terminal: NegotiationState,
    pub elapsed_s: f64,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioTrial {
    pub index: u32,
    #[serde(flatten)]
    pub record: TrialRecord,
    pub crossings: Vec<SlitCrossing>,
}

struct Hit {
    wall: usize,
    t: f64,
    s: f64,
}

/// Walls block and deflect motion; reaching a slit runs a gap negotiation,
/// drawing from stream 2 of the trial seed.
#[derive(Debug, Clone)]
pub struct WalledArena {
    walls: Vec<Wall>,
    /// Index of the first arena edge in `walls`.
    edge_start: usize,
    capture_mm: f64,
    gap: ArrangementProfile,
    shutter: ShutterModel,
    rng: ChaCha8Rng,
    pub crossings: Vec<SlitCrossing>,
}

impl WalledArena {
    pub fn new(sc: &Scenario, seed: u64) -> Self {
        let mut walls = sc.config.walls.clone();
        let edge_start = walls.len();
        walls.extend(sc.config.arena.edges());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Self {
            walls,
            edge_start,
            capture_mm: sc.config.slit_capture_mm,
            gap: sc.gap.clone(),
            shutter: sc.shutter,
            rng,
            crossings: Vec::new(),
        }
    }

    fn first_hit(&self, p: (f64, f64), q: (f64, f64)) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, w) in self.walls.iter().enumerate() {
            if let Some((t, s)) = crossing(p, q, w) {
                if best.as_ref().is_none_or(|b| t < b.t) {
                    best = Some(Hit { wall: i, t, s });
                }
            }
        }
        best
    }

    fn slit_at(&self, wall: usize, s: f64) -> Option<usize> {
        if wall >= self.edge_start {
            return None;
        }
        self.walls[wall]
            .slits
            .iter()
            .position(|sl| (s - sl.at).abs() <= sl.width_mm / 2.0 + self.capture_mm)
    }
}

/// Parameters (t along p→q, s in mm along the wall) where p→q crosses the wall.
fn crossing(p: (f64, f64), q: (f64, f64), w: &Wall) -> Option<(f64, f64)> {
    let d = (q.0 - p.0, q.1 - p.1);
    let e = (w.x2 - w.x1, w.y2 - w.y1);
    let den = d.0 * e.1 - d.1 * e.0;
    if den == 0.0 {
        return None;
    }
    let f = (w.x1 - p.0, w.y1 - p.1);
    let t = (f.0 * e.1 - f.1 * e.0) / den;
    let u = (f.0 * d.1 - f.1 * d.0) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| (t, u * w.length()))
}

impl Terrain for WalledArena {
    fn resolve(&mut self, prev: &Pose, state: &mut AgentState) -> TerrainEvent {
        let p = (prev.x_mm, prev.y_mm);
        let q = (state.pose.x_mm, state.pose.y_mm);
        let Some(hit) = self.first_hit(p, q) else {
            return TerrainEvent::Clear;
        };
        let wall = &self.walls[hit.wall];
        let (ux, uy) = wall.unit();

        if let Some(slit) = self.slit_at(hit.wall, hit.s) {
            let outcome = run_gap_trial(&self.gap, &self.shutter, &mut self.rng);
            self.crossings.push(SlitCrossing {
                t_ms: state.pose.t_ms,
                wall: hit.wall,
                slit,
                terminal: outcome.terminal,
                elapsed_s: outcome.elapsed_s,
                path: outcome.path_string(),
            });
            // Unit normal pointing to the side the agent was heading for.
            let side = ((q.0 - p.0) * -uy + (q.1 - p.1) * ux).signum();
            let (nx, ny) = (-uy * side, ux * side);
            let (cx, cy) = wall.point_at(wall.slits[slit].at);
            let hold = TerrainEvent::Hold {
                ms: outcome.elapsed_s * 1000.0,
            };
            return match outcome.terminal {
                NegotiationState::Pass | NegotiationState::Exit => {
                    state.pose.x_mm = cx + nx * SLIT_EXIT_MM;
                    state.pose.y_mm = cy + ny * SLIT_EXIT_MM;
                    hold
                }
                NegotiationState::Return => {
                    state.pose.x_mm = cx - nx * SLIT_EXIT_MM;
                    state.pose.y_mm = cy - ny * SLIT_EXIT_MM;
                    state.pose.heading_deg = normalize_deg(state.pose.heading_deg + 180.0);
                    hold
                }
                _ => TerrainEvent::Stuck,
            };
        }

        // Slide along the wall; stay put if that would cross something else.
        let along = (q.0 - p.0) * ux + (q.1 - p.1) * uy;
        let slid = (p.0 + along * ux, p.1 + along * uy);
        let (x, y) = if self.first_hit(p, slid).is_some() {
            p
        } else {
            slid
        };
        state.pose.x_mm = x;
        state.pose.y_mm = y;
        TerrainEvent::Blocked
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavSummary {
    pub trials: u32,
    pub successes: u32,
    pub success_rate: Option<f64>,
    pub mean_time_to_goal_s: Option<f64>,
    pub mean_path_length_mm: Option<f64>,
    pub status: BTreeMap<TrialStatus, u32>,
    pub commands: u64,
    pub retransmissions: u64,
    pub slit_crossings: BTreeMap<NegotiationState, u32>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0u32), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / f64::from(n))
}

pub fn summarize(trials: &[ScenarioTrial]) -> NavSummary {
    let successes = trials.iter().filter(|t| t.record.success).count() as u32;
    let mut status = BTreeMap::new();
    let mut slit_crossings = BTreeMap::new();
    for t in trials {
        *status.entry(t.record.status).or_default() += 1;
        for c in &t.crossings {
            *slit_crossings.entry(c.terminal).or_default() += 1;
        }
    }
    NavSummary {
        trials: trials.len() as u32,
        successes,
        success_rate: (!trials.is_empty()).then(|| f64::from(successes) / trials.len() as f64),
        mean_time_to_goal_s: mean(trials.iter().filter_map(|t| t.record.time_to_goal_s)),
        mean_path_length_mm: mean(trials.iter().map(|t| t.record.path_length_mm)),
        status,
        commands: trials.iter().map(|t| t.record.link.commands).sum(),
        retransmissions: trials.iter().map(|t| t.record.link.retransmissions).sum(),
        slit_crossings,
    }
}

/// Counts of trajectory samples per arena cell, row-major from the lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x0: f64,
    pub y0: f64,
    pub cell_mm: f64,
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u64>,
}

impl DensityGrid {
    pub fn new(arena: &Arena, cell_mm: f64) -> Self {
        let nx = ((arena.x_max - arena.x_min) / cell_mm).ceil().max(1.0) as usize;
        let ny = ((arena.y_max - arena.y_min) / cell_mm).ceil().max(1.0) as usize;
        Self {
            x0: arena.x_min,
            y0: arena.y_min,
            cell_mm,
            nx,
            ny,
            counts: vec![0; nx * ny],
        }
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let ix = ((x - self.x0) / self.cell_mm).floor();
        let iy = ((y - self.y0) / self.cell_mm).floor();
        if ix < 0.0 || iy < 0.0 {
            return;
        }
        let (ix, iy) = (
            (ix as usize).min(self.nx - 1),
            (iy as usize).min(self.ny - 1),
        );
        if x <= self.x0 + self.nx as f64 * self.cell_mm
            && y <= self.y0 + self.ny as f64 * self.cell_mm
        {
            self.counts[iy * self.nx + ix] += 1;
        }
    }

    pub fn from_trials(arena: &Arena, cell_mm: f64, trials: &[ScenarioTrial]) -> Self {
        let mut g = Self::new(arena, cell_mm);
        for t in trials {
            for r in &t.record.trajectory {
                g.add(r.x, r.y);
            }
        }
        g
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_mm", "y_mm", "count"])?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                w.write_record([
                    format!("{}", self.x0 + ix as f64 * self.cell_mm),
                    format!("{}", self.y0 + iy as f64 * self.cell_mm),
                    self.counts[iy * self.nx + ix].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenarios_resolve() {
        let d = Scenario::default_scenario();
        assert_eq!(d.config.route().len(), 1);
        let c = ScenarioConfig::from_text(CONCEALED_TOML)
            .unwrap()
            .resolve()
            .unwrap();
        assert!(!c.config.walls.is_empty());
    }

    #[test]
    fn resolved_config_round_trips() {
        let sc = Scenario::default_scenario();
        let text = sc.config.to_toml();
        let again = ScenarioConfig::from_text(&text).unwrap();
        assert_eq!(again, sc.config);
        assert_eq!(again.resolve().unwrap().config.to_toml(), text);
    }

    #[test]
    fn embedded_header_is_extracted() {
        let sc = Scenario::default_scenario();
        let mut art = String::from("# cyborg 0.1.0\n");
        art.push_str(CONFIG_BEGIN);
        art.push('\n');
        for l in sc.config.to_toml().lines() {
            art.push_str(&format!("# {l}\n"));
        }
        art.push_str(CONFIG_END);
        art.push_str("\ntick,t_ms\n0,0\n");
        assert_eq!(ScenarioConfig::from_text(&art).unwrap(), sc.config);
    }

    #[test]
    fn unknown_keys_and_bad_geometry_are_rejected() {
        let t = DEFAULT_TOML.replacen("seed", "sed", 1);
        assert!(matches!(
            ScenarioConfig::from_text(&t),
            Err(ScenarioError::Parse(_))
        ));
        let mut c = ScenarioConfig::from_text(DEFAULT_TOML).unwrap();
        c.target = NavTarget::new(1e6, 0.0);
        assert!(
            matches!(c.resolve(), Err(ScenarioError::Invalid { field, .. }) if field == "target")
        );
    }

    #[test]
    fn solid_wall_deflects_and_slit_lets_through() {
        let mut c = ScenarioConfig::from_text(DEFAULT_TOML).unwrap();
        c.walls = vec![Wall {
            x1: 100.0,
            y1: -100.0,
            x2: 100.0,
            y2: 100.0,
            slits: vec![Slit {
                at: 150.0,
                width_mm: 10.0,
            }],
        }];
        c.slit_capture_mm = 0.0;
        let sc = c.resolve().unwrap();
        let mut arena = sc.terrain(1);

        let prev = Pose::new(95.0, 0.0, 45.0);
        let mut st = AgentState::at(Pose::new(105.0, 10.0, 45.0));
        assert_eq!(arena.resolve(&prev, &mut st), TerrainEvent::Blocked);
        assert_eq!((st.pose.x_mm, st.pose.y_mm), (95.0, 10.0));

        let prev = Pose::new(95.0, 50.0, 0.0);
        let mut st = AgentState::at(Pose::new(105.0, 50.0, 0.0));
        let ev = arena.resolve(&prev, &mut st);
        assert_eq!(arena.crossings.len(), 1);
        match arena.crossings[0].terminal {
            NegotiationState::Pass | NegotiationState::Exit => {
                assert!(matches!(ev, TerrainEvent::Hold { .. }));
                assert!((st.pose.x_mm - 105.0).abs() < 1e-9 && (st.pose.y_mm - 50.0).abs() < 1e-9);
            }
            NegotiationState::Stuck => assert_eq!(ev, TerrainEvent::Stuck),
            _ => assert!(st.pose.x_mm < 100.0),
        }
    }

    #[test]
    fn arena_edge_contains_agent() {
        let sc = Scenario::default_scenario();
        let mut arena = sc.terrain(1);
        let a = sc.config.arena;
        let prev = Pose::new(a.x_max - 1.0, 0.0, 0.0);
        let mut st = AgentState::at(Pose::new(a.x_max + 5.0, 0.0, 0.0));
        assert_eq!(arena.resolve(&prev, &mut st), TerrainEvent::Blocked);
        assert!(a.contains(st.pose.x_mm, st.pose.y_mm));
    }

    #[test]
    fn density_grid_counts_samples() {
        let arena = Arena {
            x_min: 0.0,
            x_max: 100.0,
            y_min: 0.0,
            y_max: 100.0,
        };
        let mut g = DensityGrid::new(&arena, 50.0);
        g.add(10.0, 10.0);
        g.add(60.0, 10.0);
        g.add(100.0, 100.0);
        assert_eq!(g.counts, vec![1, 1, 0, 1]);
    }
}
