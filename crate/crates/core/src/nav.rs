//! Point-to-point navigation: the stimulation policy and the closed-loop trial runner.
//!
//! Heading error is the target bearing minus the body heading, normalised to
//! (−180, 180]. Positive means the target lies to the left. A body biased to
//! the left of the target (error < −Θ) gets its left antenna stimulated, which
//! turns it right; the mirror case uses the right antenna.

use std::collections::VecDeque;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{
    Backpack, BackpackEvent, BaseStation, EncodeError, LinkModel, RetryPolicy, SimLink,
    StationEvent, StationStats, TelemetryPayload,
};
use crate::sim::{normalize_deg, Agent, AgentState, Pose, ResponseModel, SpontaneousBehavior};
use crate::stim::{Channel, ChannelSet, StimulusCommand};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavigationConfig {
    pub heading_threshold_deg: f64,
    pub speed_threshold_mms: f64,
    pub goal_radius_mm: f64,
    pub antenna_duration_ms: u32,
    pub cerci_duration_ms: u32,
    pub decision_period_ms: u32,
    pub trial_timeout_s: f64,
    /// Quiet period after each command; defaults to that command's duration.
    pub refractory_ms: Option<u32>,
    /// Sliding window of the tracker's forward-velocity estimate.
    pub velocity_window_ms: u32,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        Self {
            heading_threshold_deg: 45.0,
            speed_threshold_mms: 10.0,
            goal_radius_mm: 50.0,
            antenna_duration_ms: 400,
            cerci_duration_ms: 400,
            decision_period_ms: 100,
            trial_timeout_s: 120.0,
            refractory_ms: None,
            velocity_window_ms: 500,
        }
    }
}

impl NavigationConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        let bad = |m: &str| Err(NavError::InvalidConfig(m.to_string()));
        if !(self.heading_threshold_deg > 0.0 && self.heading_threshold_deg < 180.0) {
            return bad("heading_threshold_deg must be in (0, 180)");
        }
        if !(self.speed_threshold_mms > 0.0
            && self.goal_radius_mm > 0.0
            && self.trial_timeout_s > 0.0)
        {
            return bad("thresholds, goal radius and timeout must be positive");
        }
        if self.antenna_duration_ms == 0
            || self.cerci_duration_ms == 0
            || self.decision_period_ms == 0
        {
            return bad("durations and decision period must be positive");
        }
        if self.refractory_ms == Some(0) || self.velocity_window_ms == 0 {
            return bad("refractory and velocity window must be positive");
        }
        Ok(())
    }

    pub fn refractory_for(&self, duration_ms: u32) -> u32 {
        self.refractory_ms.unwrap_or(duration_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavTarget {
    pub x: f64,
    pub y: f64,
}

impl NavTarget {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_from(&self, pose: &Pose) -> f64 {
        (self.x - pose.x_mm).hypot(self.y - pose.y_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavDecision {
    None,
    StimulateLeftAntenna,
    StimulateRightAntenna,
    StimulateCerci,
    GoalReached,
}

impl NavDecision {
    pub fn command(self, cfg: &NavigationConfig) -> Option<StimulusCommand> {
        let (ch, dur) = match self {
            NavDecision::StimulateLeftAntenna => (Channel::LeftAntenna, cfg.antenna_duration_ms),
            NavDecision::StimulateRightAntenna => (Channel::RightAntenna, cfg.antenna_duration_ms),
            NavDecision::StimulateCerci => (Channel::Cerci, cfg.cerci_duration_ms),
            NavDecision::None | NavDecision::GoalReached => return None,
        };
        Some(StimulusCommand::standard(ChannelSet::single(ch), dur))
    }

    pub fn mirrored(self) -> Self {
        match self {
            NavDecision::StimulateLeftAntenna => NavDecision::StimulateRightAntenna,
            NavDecision::StimulateRightAntenna => NavDecision::StimulateLeftAntenna,
            d => d,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            NavDecision::None => "none",
            NavDecision::StimulateLeftAntenna => "left_antenna",
            NavDecision::StimulateRightAntenna => "right_antenna",
            NavDecision::StimulateCerci => "cerci",
            NavDecision::GoalReached => "goal_reached",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NavError {
    #[error("bearing undefined: pose coincides with target")]
    CoincidentTarget,
    #[error("invalid navigation config: {0}")]
    InvalidConfig(String),
}

/// Signed angle from the heading to the target bearing, in (−180, 180].
pub fn heading_error(pose: &Pose, target: &NavTarget) -> Result<f64, NavError> {
    let (dx, dy) = (target.x - pose.x_mm, target.y - pose.y_mm);
    if dx == 0.0 && dy == 0.0 {
        return Err(NavError::CoincidentTarget);
    }
    let bearing = dy.atan2(dx).to_degrees();
    Ok(normalize_deg(normalize_deg(bearing) - pose.heading_deg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentObservation {
    pub pose: Pose,
    pub forward_velocity: f64,
    pub stim_active: bool,
}

pub fn nav_decide(
    obs: &AgentObservation,
    target: &NavTarget,
    cfg: &NavigationConfig,
) -> NavDecision {
    if target.distance_from(&obs.pose) <= cfg.goal_radius_mm {
        return NavDecision::GoalReached;
    }
    if obs.stim_active {
        return NavDecision::None;
    }
    let Ok(err) = heading_error(&obs.pose, target) else {
        return NavDecision::None;
    };
    if err < -cfg.heading_threshold_deg {
        NavDecision::StimulateLeftAntenna
    } else if err > cfg.heading_threshold_deg {
        NavDecision::StimulateRightAntenna
    } else if obs.forward_velocity < cfg.speed_threshold_mms {
        NavDecision::StimulateCerci
    } else {
        NavDecision::None
    }
}

/// Outcome of checking a step against the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerrainEvent {
    Clear,
    /// Movement was undone or clipped.
    Blocked,
    /// The agent is busy (e.g. squeezing through a gap) for this long.
    Hold {
        ms: f64,
    },
    /// The agent can no longer move on.
    Stuck,
}

/// Geometry the agent moves through.
pub trait Terrain {
    fn resolve(&mut self, prev: &Pose, state: &mut AgentState) -> TerrainEvent;
}

/// Unbounded, empty floor.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpenField;

impl Terrain for OpenField {
    fn resolve(&mut self, _prev: &Pose, _state: &mut AgentState) -> TerrainEvent {
        TerrainEvent::Clear
    }
}

/// Everything a trial needs besides the target and controller settings.
#[derive(Debug, Clone)]
pub struct NavWorld {
    pub start: Pose,
    pub model: ResponseModel,
    pub behavior: SpontaneousBehavior,
    pub link: LinkModel,
    pub retry: RetryPolicy,
    pub dt_ms: f64,
}

impl NavWorld {
    pub fn new(start: Pose, model: ResponseModel) -> Self {
        Self {
            start,
            model,
            behavior: SpontaneousBehavior::default(),
            link: LinkModel::default(),
            retry: RetryPolicy::default(),
            dt_ms: 10.0,
        }
    }

    /// Mirror image across the x axis. Run with a target mirrored the same way.
    pub fn mirrored(&self) -> Self {
        let mut w = self.clone();
        w.start.y_mm = -w.start.y_mm;
        w.start.heading_deg = normalize_deg(-w.start.heading_deg);
        w.behavior.mirror_lateral = !w.behavior.mirror_lateral;
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Success,
    Timeout,
    LinkFailure,
    Stuck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub t_ms: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub decision: NavDecision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub tick: u64,
    pub t_ms: f64,
    pub decision: NavDecision,
    pub seq: u16,
    /// Mean true forward velocity over the 500 ms before the decision.
    pub prior_velocity_mms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DecisionCounts {
    pub left_antenna: u32,
    pub right_antenna: u32,
    pub cerci: u32,
}

impl DecisionCounts {
    fn add(&mut self, d: NavDecision) {
        match d {
            NavDecision::StimulateLeftAntenna => self.left_antenna += 1,
            NavDecision::StimulateRightAntenna => self.right_antenna += 1,
            NavDecision::StimulateCerci => self.cerci += 1,
            _ => {}
        }
    }

    pub fn total(&self) -> u32 {
        self.left_antenna + self.right_antenna + self.cerci
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub status: TrialStatus,
    pub success: bool,
    pub time_to_goal_s: Option<f64>,
    pub duration_s: f64,
    pub path_length_mm: f64,
    pub counts: DecisionCounts,
    pub link: StationStats,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryRow>,
    #[serde(skip)]
    pub decisions: Vec<DecisionRecord>,
}

impl TrialRecord {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "t_ms", "x", "y", "heading", "v", "decision"])?;
        for r in &self.trajectory {
            w.write_record([
                r.tick.to_string(),
                format!("{}", r.t_ms),
                format!("{:.3}", r.x),
                format!("{:.3}", r.y),
                format!("{:.3}", r.heading),
                format!("{:.3}", r.v),
                r.decision.name().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sliding mean over the most recent step samples.
#[derive(Debug, Clone)]
struct Window {
    len: usize,
    buf: VecDeque<f64>,
}

impl Window {
    fn new(len: usize) -> Self {
        Self {
            len: len.max(1),
            buf: VecDeque::new(),
        }
    }

    fn push(&mut self, v: f64) {
        self.buf.push_back(v);
        if self.buf.len() > self.len {
            self.buf.pop_front();
        }
    }

    /// Mean over the window; time before the first sample counts as rest.
    fn mean(&self) -> f64 {
        self.buf.iter().sum::<f64>() / self.len as f64
    }
}

/// Per-trial seed derived from a master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// What happened during one simulation step of a [`Rig`].
#[derive(Debug, Clone, PartialEq)]
pub struct RigStep {
    pub station: Vec<StationEvent>,
    pub backpack: Vec<BackpackEvent>,
    pub terrain: TerrainEvent,
}

/// Base station, lossy link, backpack and agent wired together in virtual time.
///
/// The agent draws from stream 0 of the seed and the link from stream 1.
#[derive(Debug, Clone)]
pub struct Rig {
    pub agent: Agent,
    link: SimLink,
    base: BaseStation,
    pack: Backpack,
    tracker: Window,
    prior: Window,
    dt_ms: f64,
    refractory_until: f64,
    hold_until: f64,
}

impl Rig {
    pub fn new(world: &NavWorld, velocity_window_ms: u32, seed: u64) -> Self {
        let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
        agent_rng.set_stream(0);
        let mut link_rng = ChaCha8Rng::seed_from_u64(seed);
        link_rng.set_stream(1);
        let dt = world.dt_ms;
        Self {
            agent: Agent::new(world.start, world.model.clone(), world.behavior, agent_rng),
            link: SimLink::new(world.link, link_rng),
            base: BaseStation::new(world.retry),
            pack: Backpack::new(),
            tracker: Window::new((f64::from(velocity_window_ms) / dt).round() as usize),
            prior: Window::new((500.0 / dt).round() as usize),
            dt_ms: dt,
            refractory_until: f64::NEG_INFINITY,
            hold_until: f64::NEG_INFINITY,
        }
    }

    pub fn now_ms(&self) -> f64 {
        self.agent.state.pose.t_ms
    }

    pub fn dt_ms(&self) -> f64 {
        self.dt_ms
    }

    /// A stimulus is running, a command awaits its ack, or the agent is held by terrain.
    pub fn busy(&self) -> bool {
        let t = self.now_ms();
        t < self.refractory_until || t < self.hold_until || self.base.awaiting_ack().is_some()
    }

    /// What the tracker reports: pose and windowed forward velocity.
    pub fn observation(&self) -> AgentObservation {
        AgentObservation {
            pose: self.agent.pose(),
            forward_velocity: self.tracker.mean(),
            stim_active: self.busy(),
        }
    }

    /// Mean true forward velocity over the last 500 ms.
    pub fn prior_velocity(&self) -> f64 {
        self.prior.mean()
    }

    pub fn station_stats(&self) -> StationStats {
        self.base.stats()
    }

    pub fn link_mut(&mut self) -> &mut SimLink {
        &mut self.link
    }

    /// Sends a command and starts its quiet period.
    pub fn send(&mut self, cmd: &StimulusCommand, refractory_ms: u32) -> Result<u16, EncodeError> {
        let t = self.now_ms();
        let seq = self.base.send_command(cmd, &mut self.link, t)?;
        self.refractory_until = t + f64::from(refractory_ms);
        Ok(seq)
    }

    pub fn send_telemetry(&mut self, tick: u32, nav_state: u8) {
        let s = &self.agent.state;
        let payload = TelemetryPayload::from_state(
            tick,
            s.pose.x_mm,
            s.pose.y_mm,
            s.pose.heading_deg,
            s.forward_velocity,
            s.turning_velocity,
            nav_state,
        );
        let t = self.now_ms();
        self.pack.send_telemetry(payload, &mut self.link, t);
    }

    /// Services both link endpoints, then advances the agent one step.
    pub fn step(&mut self, terrain: &mut dyn Terrain) -> RigStep {
        let t = self.now_ms();
        let agent = &mut self.agent;
        let backpack = self
            .pack
            .poll(&mut self.link, t, |cmd| agent.apply(cmd).map(|_| ()));
        let station = self.base.poll(&mut self.link, t);
        let dt = self.dt_ms;
        let mut event = TerrainEvent::Clear;
        if t < self.hold_until {
            let s = &mut self.agent.state;
            s.pose.t_ms = t + dt;
            s.forward_velocity = 0.0;
            s.turning_velocity = 0.0;
            self.tracker.push(0.0);
            self.prior.push(0.0);
        } else {
            let before = self.agent.pose();
            let sample = self.agent.step(dt);
            event = terrain.resolve(&before, &mut self.agent.state);
            if let TerrainEvent::Hold { ms } = event {
                self.hold_until = self.now_ms() + ms;
            }
            self.tracker.push(sample.mean_forward);
            self.prior.push(sample.mean_forward);
        }
        RigStep {
            station,
            backpack,
            terrain: event,
        }
    }
}

/// Closed-loop trial in virtual time on open ground.
pub fn run_navigation(
    world: &NavWorld,
    target: &NavTarget,
    cfg: &NavigationConfig,
    seed: u64,
) -> TrialRecord {
    run_navigation_in(
        world,
        &mut OpenField,
        std::slice::from_ref(target),
        cfg,
        seed,
    )
}

/// Closed-loop trial over a route of waypoints: decide every period, command
/// through the lossy link, let the backpack apply commands, step the agent.
pub fn run_navigation_in(
    world: &NavWorld,
    terrain: &mut dyn Terrain,
    route: &[NavTarget],
    cfg: &NavigationConfig,
    seed: u64,
) -> TrialRecord {
    let mut rig = Rig::new(world, cfg.velocity_window_ms, seed);
    let steps_per_tick = ((f64::from(cfg.decision_period_ms) / rig.dt_ms()).round() as u64).max(1);
    let timeout_ms = cfg.trial_timeout_s * 1000.0;

    let mut trajectory = Vec::new();
    let mut decisions = Vec::new();
    let mut counts = DecisionCounts::default();
    let mut path = 0.0;
    let mut status = TrialStatus::Timeout;
    let mut time_to_goal = None;
    let mut leg = 0;

    let mut step_idx: u64 = 0;
    'trial: loop {
        let t = rig.now_ms();
        if step_idx.is_multiple_of(steps_per_tick) {
            let tick = step_idx / steps_per_tick;
            let obs = rig.observation();
            let mut decision = match route.get(leg) {
                Some(target) => nav_decide(&obs, target, cfg),
                None => NavDecision::GoalReached,
            };
            while decision == NavDecision::GoalReached && leg + 1 < route.len() {
                leg += 1;
                decision = nav_decide(&obs, &route[leg], cfg);
            }
            trajectory.push(TrajectoryRow {
                tick,
                t_ms: t,
                x: obs.pose.x_mm,
                y: obs.pose.y_mm,
                heading: obs.pose.heading_deg,
                v: rig.agent.state.forward_velocity,
                decision,
            });
            if decision == NavDecision::GoalReached {
                status = TrialStatus::Success;
                time_to_goal = Some(t / 1000.0);
                break;
            }
            if t >= timeout_ms {
                break;
            }
            if let Some(cmd) = decision.command(cfg) {
                let prior_velocity_mms = rig.prior_velocity();
                if let Ok(seq) = rig.send(&cmd, cfg.refractory_for(cmd.duration_ms)) {
                    counts.add(decision);
                    decisions.push(DecisionRecord {
                        tick,
                        t_ms: t,
                        decision,
                        seq,
                        prior_velocity_mms,
                    });
                }
            }
        }

        let before = rig.agent.pose();
        let step = rig.step(terrain);
        for e in &step.station {
            if matches!(e, StationEvent::Failed { .. }) {
                status = TrialStatus::LinkFailure;
                break 'trial;
            }
        }
        if step.terrain == TerrainEvent::Stuck {
            status = TrialStatus::Stuck;
            break;
        }
        let after = rig.agent.pose();
        path += (after.x_mm - before.x_mm).hypot(after.y_mm - before.y_mm);
        step_idx += 1;
    }

    TrialRecord {
        seed,
        status,
        success: status == TrialStatus::Success,
        time_to_goal_s: time_to_goal,
        duration_s: rig.now_ms() / 1000.0,
        path_length_mm: path,
        counts,
        link: rig.station_stats(),
        trajectory,
        decisions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ResponseProfile;

    fn obs(heading: f64, v: f64) -> AgentObservation {
        AgentObservation {
            pose: Pose::new(0.0, 0.0, heading),
            forward_velocity: v,
            stim_active: false,
        }
    }

    #[test]
    fn heading_error_cases() {
        let p = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(heading_error(&p, &NavTarget::new(100.0, 0.0)).unwrap(), 0.0);
        assert!((heading_error(&p, &NavTarget::new(0.0, 100.0)).unwrap() - 90.0).abs() < 1e-12);
        let p = Pose::new(0.0, 0.0, 170.0);
        let b = (-170.0f64).to_radians();
        let e = heading_error(&p, &NavTarget::new(b.cos() * 100.0, b.sin() * 100.0)).unwrap();
        assert!((e - 20.0).abs() < 1e-9);
        assert_eq!(
            heading_error(&p, &NavTarget::new(0.0, 0.0)),
            Err(NavError::CoincidentTarget)
        );
    }

    #[test]
    fn decision_priorities() {
        let cfg = NavigationConfig::default();
        let far = NavTarget::new(1000.0, 0.0);
        assert_eq!(
            nav_decide(&obs(0.0, 0.0), &NavTarget::new(30.0, 0.0), &cfg),
            NavDecision::GoalReached
        );
        // target 60 degrees to the right: body biased left
        assert_eq!(
            nav_decide(&obs(60.0, 50.0), &far, &cfg),
            NavDecision::StimulateLeftAntenna
        );
        assert_eq!(
            nav_decide(&obs(-60.0, 50.0), &far, &cfg),
            NavDecision::StimulateRightAntenna
        );
        assert_eq!(
            nav_decide(&obs(-10.0, 2.0), &far, &cfg),
            NavDecision::StimulateCerci
        );
        assert_eq!(nav_decide(&obs(-10.0, 20.0), &far, &cfg), NavDecision::None);
        let busy = AgentObservation {
            stim_active: true,
            ..obs(90.0, 0.0)
        };
        assert_eq!(nav_decide(&busy, &far, &cfg), NavDecision::None);
    }

    #[test]
    fn target_at_start_is_immediate_success() {
        let world = NavWorld::new(
            Pose::default(),
            ResponseProfile::default().compile().unwrap(),
        );
        let r = run_navigation(
            &world,
            &NavTarget::new(0.0, 0.0),
            &NavigationConfig::default(),
            1,
        );
        assert!(r.success);
        assert_eq!(r.time_to_goal_s, Some(0.0));
        assert!(r.decisions.is_empty());
    }

    #[test]
    fn dead_link_aborts() {
        let mut world = NavWorld::new(
            Pose::default(),
            ResponseProfile::default().compile().unwrap(),
        );
        world.link = LinkModel::with_drop(1.0);
        let r = run_navigation(
            &world,
            &NavTarget::new(1000.0, 0.0),
            &NavigationConfig::default(),
            1,
        );
        assert_eq!(r.status, TrialStatus::LinkFailure);
    }

    #[test]
    fn trial_is_deterministic() {
        let world = NavWorld::new(
            Pose::default(),
            ResponseProfile::default().compile().unwrap(),
        );
        let target = NavTarget::new(1000.0, 0.0);
        let a = run_navigation(&world, &target, &NavigationConfig::default(), 42);
        let b = run_navigation(&world, &target, &NavigationConfig::default(), 42);
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let cfg = NavigationConfig {
            heading_threshold_deg: 180.0,
            ..NavigationConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(NavigationConfig::default().validate().is_ok());
    }
}
