//! Seeded kinematic insect agent.
//!
//! Axes: x to the right, y up, headings in degrees counter-clockwise from +x,
//! normalised to (−180, 180]. Positive turning velocity is a left turn.
//!
//! ```text
//!            +y (heading +90)
//!             ^
//!             |
//!  180 <------+------> +x (heading 0)
//!             |
//!           -90
//! ```

mod measure;
mod response;

pub use measure::{measure_response, MeasuredResponse, Metric};
pub use response::{
    ClassResponse, ForwardShape, MeanSd, ProfileError, ResponseDraw, ResponseModel,
    ResponseProfile, StimulusClass, TruncatedNormal,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::link::NackReason;
use crate::stim::StimulusCommand;

pub const SPEED_CAP_MMS: f64 = 300.0;

/// Maps any angle to (−180, 180]. Values already in range are returned untouched,
/// so negating an in-range angle commutes with normalisation.
pub fn normalize_deg(a: f64) -> f64 {
    if a > -180.0 && a <= 180.0 {
        return a;
    }
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x_mm: f64,
    pub y_mm: f64,
    pub heading_deg: f64,
    pub t_ms: f64,
}

impl Pose {
    pub fn new(x_mm: f64, y_mm: f64, heading_deg: f64) -> Self {
        Self {
            x_mm,
            y_mm,
            heading_deg: normalize_deg(heading_deg),
            t_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorMode {
    #[default]
    Quiescent,
    Walking,
    BackwardWalking,
}

/// One realised stimulus response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseEnvelope {
    pub class: StimulusClass,
    pub turn_rate_dps: f64,
    pub forward_mms: Option<f64>,
    pub shape: Option<ForwardShape>,
    /// When the command was applied; the response starts one onset latency later.
    pub issued_ms: f64,
    pub start_ms: f64,
    pub stim_ms: f64,
    pub end_ms: f64,
}

impl ResponseEnvelope {
    fn contains(&self, a: f64, b: f64) -> bool {
        self.start_ms <= a && b <= self.end_ms
    }
}

/// Background behaviour between stimuli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpontaneousBehavior {
    pub stop_rate_hz: f64,
    pub turn_rate_hz: f64,
    pub turn_speed_dps: f64,
    pub turn_min_ms: f64,
    pub turn_max_ms: f64,
    /// Relaxation constant toward the current setpoints.
    pub tau_ms: f64,
    /// Flips the side of spontaneous turns; used to build mirror-image runs.
    pub mirror_lateral: bool,
}

impl Default for SpontaneousBehavior {
    fn default() -> Self {
        Self {
            stop_rate_hz: 0.2,
            turn_rate_hz: 0.1,
            turn_speed_dps: 60.0,
            turn_min_ms: 500.0,
            turn_max_ms: 2000.0,
            tau_ms: 300.0,
            mirror_lateral: false,
        }
    }
}

impl SpontaneousBehavior {
    pub fn quiet() -> Self {
        Self {
            stop_rate_hz: 0.0,
            turn_rate_hz: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [self.stop_rate_hz, self.turn_rate_hz, self.turn_speed_dps];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("spontaneous rates and turn speed must be finite and >= 0".into());
        }
        if !(self.tau_ms > 0.0) {
            return Err("tau_ms must be positive".into());
        }
        if !(self.turn_min_ms > 0.0 && self.turn_min_ms <= self.turn_max_ms) {
            return Err("turn duration bounds must satisfy 0 < min <= max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AgentState {
    pub pose: Pose,
    pub forward_velocity: f64,
    pub turning_velocity: f64,
    pub active_response: Option<ResponseEnvelope>,
    pub behavior_mode: BehaviorMode,
    /// Velocities the agent relaxes toward when no envelope drives it.
    pub forward_setpoint: f64,
    pub turn_setpoint: f64,
    pub spontaneous_turn_until_ms: Option<f64>,
    /// Stimulations delivered so far, per class.
    pub repeats: [u32; 4],
}

impl AgentState {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    fn refresh_mode(&mut self) {
        let driven = self
            .active_response
            .is_some_and(|e| e.forward_mms.is_some_and(|f| f > 0.0));
        self.behavior_mode = if self.forward_velocity < 0.0 {
            BehaviorMode::BackwardWalking
        } else if self.forward_setpoint > 0.0 || driven {
            BehaviorMode::Walking
        } else {
            BehaviorMode::Quiescent
        };
    }
}

/// Mean velocities over one step, for measurement windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSample {
    pub t0_ms: f64,
    pub t1_ms: f64,
    pub mean_forward: f64,
    pub mean_turn: f64,
}

/// Installs a response for `cmd`, replacing any active one.
pub fn apply_stimulus<R: Rng + ?Sized>(
    state: &mut AgentState,
    cmd: &StimulusCommand,
    model: &ResponseModel,
    rng: &mut R,
) -> Result<StimulusClass, NackReason> {
    let class =
        StimulusClass::from_channels(cmd.channels).ok_or(NackReason::UnsupportedChannels)?;
    let profile = model.profile();
    let repeats = &mut state.repeats[class.index()];
    let draw = model.sample(class, cmd.duration_ms, *repeats, rng);
    *repeats = repeats.saturating_add(1);
    let now = state.pose.t_ms;
    let start = now + f64::from(profile.onset_latency_ms);
    let stim = f64::from(cmd.duration_ms);
    let window = f64::from(profile.forward_window_ms);
    let (shape, end) = match draw.forward_mms {
        Some(_) => (
            Some(ForwardShape::new(
                stim,
                window,
                draw.tail_ratio,
                profile.relax_tau_ms,
            )),
            start + stim.max(window),
        ),
        None => (None, start + stim),
    };
    state.active_response = Some(ResponseEnvelope {
        class,
        turn_rate_dps: draw.turn_rate_dps,
        forward_mms: draw.forward_mms,
        shape,
        issued_ms: now,
        start_ms: start,
        stim_ms: stim,
        end_ms: end,
    });
    state.spontaneous_turn_until_ms = None;
    state.turn_setpoint = 0.0;
    Ok(class)
}

/// First-order relaxation over `h` ms: returns (mean, end value).
fn relax(v0: f64, target: f64, h: f64, tau: f64) -> (f64, f64) {
    let decay = (-h / tau).exp();
    let end = target + (v0 - target) * decay;
    let mean = target + (v0 - target) * tau / h * (1.0 - decay);
    (mean, end)
}

fn cap(v: f64) -> f64 {
    v.clamp(-SPEED_CAP_MMS, SPEED_CAP_MMS)
}

/// Advances the agent by `dt_ms` (0, 50]. Always draws two uniforms for the
/// spontaneous schedule so that runs stay aligned on the random stream.
pub fn step<R: Rng + ?Sized>(
    state: &mut AgentState,
    dt_ms: f64,
    rng: &mut R,
    behavior: &SpontaneousBehavior,
) -> StepSample {
    debug_assert!(dt_ms > 0.0 && dt_ms <= 50.0, "dt out of range: {dt_ms}");
    let t0 = state.pose.t_ms;
    let t1 = t0 + dt_ms;

    let u_stop: f64 = rng.gen();
    let u_turn: f64 = rng.gen();
    if let Some(until) = state.spontaneous_turn_until_ms {
        if t0 >= until {
            state.spontaneous_turn_until_ms = None;
            state.turn_setpoint = 0.0;
        }
    }
    if state.active_response.is_none() {
        let p_stop = 1.0 - (-behavior.stop_rate_hz * dt_ms / 1000.0).exp();
        if u_stop < p_stop && state.forward_setpoint > 0.0 {
            state.forward_setpoint = 0.0;
        }
        let p_turn = 1.0 - (-behavior.turn_rate_hz * dt_ms / 1000.0).exp();
        if u_turn < p_turn && state.spontaneous_turn_until_ms.is_none() {
            let left = rng.gen_bool(0.5) != behavior.mirror_lateral;
            let dur = rng.gen_range(behavior.turn_min_ms..=behavior.turn_max_ms);
            state.turn_setpoint = if left {
                behavior.turn_speed_dps
            } else {
                -behavior.turn_speed_dps
            };
            state.spontaneous_turn_until_ms = Some(t0 + dur);
        }
    }

    let mut cuts = vec![t0];
    if let Some(env) = state.active_response {
        for b in [env.start_ms, env.end_ms] {
            if b > t0 && b < t1 {
                cuts.push(b);
            }
        }
    }
    cuts.push(t1);
    cuts.sort_by(f64::total_cmp);

    let mut fwd_integral = 0.0;
    let mut turn_integral = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        let env = state.active_response.filter(|e| e.contains(a, b));
        let (turn_mean, turn_end) = match env {
            Some(e) if e.class.is_antenna_turn() => (e.turn_rate_dps, e.turn_rate_dps),
            _ => relax(
                state.turning_velocity,
                state.turn_setpoint,
                h,
                behavior.tau_ms,
            ),
        };
        let (fwd_mean, fwd_end) =
            match env.and_then(|e| e.forward_mms.zip(e.shape).map(|fs| (e, fs))) {
                Some((e, (f, shape))) => {
                    let (sa, sb) = (a - e.start_ms, b - e.start_ms);
                    (f * shape.integral(sa, sb) / h, f * shape.value(sb))
                }
                None => relax(
                    state.forward_velocity,
                    state.forward_setpoint,
                    h,
                    behavior.tau_ms,
                ),
            };
        let fwd_mean = cap(fwd_mean);

        let d_heading = turn_mean * h / 1000.0;
        let mid = (state.pose.heading_deg + d_heading / 2.0).to_radians();
        let dist = fwd_mean * h / 1000.0;
        state.pose.x_mm += dist * mid.cos();
        state.pose.y_mm += dist * mid.sin();
        state.pose.heading_deg = normalize_deg(state.pose.heading_deg + d_heading);
        state.pose.t_ms = b;
        state.forward_velocity = cap(fwd_end);
        state.turning_velocity = turn_end;
        fwd_integral += fwd_mean * h;
        turn_integral += turn_mean * h;

        if let Some(e) = state.active_response {
            if b >= e.end_ms {
                if let (StimulusClass::Cerci, Some(f), Some(shape)) =
                    (e.class, e.forward_mms, e.shape)
                {
                    state.forward_setpoint = cap(f * shape.tail).max(0.0);
                } else if e.class == StimulusClass::BothAntennae {
                    state.forward_setpoint = 0.0;
                }
                state.active_response = None;
            }
        }
    }
    state.pose.t_ms = t1;
    state.refresh_mode();
    StepSample {
        t0_ms: t0,
        t1_ms: t1,
        mean_forward: fwd_integral / dt_ms,
        mean_turn: turn_integral / dt_ms,
    }
}

/// Agent with its own response model, behaviour and random stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub state: AgentState,
    pub behavior: SpontaneousBehavior,
    model: ResponseModel,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(
        pose: Pose,
        model: ResponseModel,
        behavior: SpontaneousBehavior,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            state: AgentState::at(pose),
            behavior,
            model,
            rng,
        }
    }

    pub fn seeded(
        pose: Pose,
        model: ResponseModel,
        behavior: SpontaneousBehavior,
        seed: u64,
    ) -> Self {
        Self::new(pose, model, behavior, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn model(&self) -> &ResponseModel {
        &self.model
    }

    pub fn apply(&mut self, cmd: &StimulusCommand) -> Result<StimulusClass, NackReason> {
        apply_stimulus(&mut self.state, cmd, &self.model, &mut self.rng)
    }

    pub fn step(&mut self, dt_ms: f64) -> StepSample {
        step(&mut self.state, dt_ms, &mut self.rng, &self.behavior)
    }

    pub fn pose(&self) -> Pose {
        self.state.pose
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stim::{Channel, ChannelSet};

    fn quiet_agent(seed: u64) -> Agent {
        Agent::seeded(
            Pose::default(),
            ResponseProfile::default().compile().unwrap(),
            SpontaneousBehavior::quiet(),
            seed,
        )
    }

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_deg(-180.0), 180.0);
        assert_eq!(normalize_deg(180.0), 180.0);
        assert_eq!(normalize_deg(540.0), 180.0);
        assert_eq!(normalize_deg(-190.0), 170.0);
        assert_eq!(normalize_deg(725.0), 5.0);
        assert_eq!(normalize_deg(-0.25), -0.25);
    }

    #[test]
    fn idle_agent_only_advances_time() {
        let mut a = quiet_agent(1);
        for _ in 0..100 {
            a.step(10.0);
        }
        assert_eq!(
            a.pose(),
            Pose {
                t_ms: 1000.0,
                ..Pose::default()
            }
        );
        assert_eq!(a.state.behavior_mode, BehaviorMode::Quiescent);
    }

    #[test]
    fn pure_rotation() {
        let mut a = quiet_agent(1);
        a.state.turning_velocity = 90.0;
        a.state.turn_setpoint = 90.0;
        for _ in 0..100 {
            a.step(10.0);
        }
        assert!((a.pose().heading_deg - 90.0).abs() < 1e-9);
        assert_eq!((a.pose().x_mm, a.pose().y_mm), (0.0, 0.0));
    }

    #[test]
    fn pure_translation() {
        let mut a = quiet_agent(1);
        a.state.forward_velocity = 100.0;
        a.state.forward_setpoint = 100.0;
        for _ in 0..50 {
            a.step(10.0);
        }
        assert!((a.pose().x_mm - 50.0).abs() < 1e-9);
        assert_eq!(a.pose().y_mm, 0.0);
    }

    #[test]
    fn right_antenna_turns_left_after_latency() {
        let mut a = quiet_agent(4);
        a.apply(&StimulusCommand::standard(
            ChannelSet::single(Channel::RightAntenna),
            400,
        ))
        .unwrap();
        let samples: Vec<_> = (0..60).map(|_| a.step(10.0)).collect();
        assert!(samples[..5].iter().all(|s| s.mean_turn == 0.0));
        assert!(samples[5..45].iter().all(|s| s.mean_turn > 0.0));
        assert!(samples[45].mean_turn < samples[44].mean_turn);
        assert!(a.state.active_response.is_none());
    }

    #[test]
    fn cerci_starts_walking_then_backward_after_both_long() {
        let mut a = quiet_agent(9);
        a.apply(&StimulusCommand::standard(
            ChannelSet::single(Channel::Cerci),
            400,
        ))
        .unwrap();
        for _ in 0..120 {
            a.step(10.0);
        }
        assert_eq!(a.state.behavior_mode, BehaviorMode::Walking);
        assert!(a.state.forward_setpoint > 0.0);
        assert!(a.pose().x_mm > 0.0);
    }

    #[test]
    fn unknown_mask_is_rejected() {
        let mut a = quiet_agent(1);
        let cmd = StimulusCommand::standard(ChannelSet::single(Channel::Spare), 400);
        assert_eq!(a.apply(&cmd), Err(NackReason::UnsupportedChannels));
        assert!(a.state.active_response.is_none());
    }

    #[test]
    fn backward_mode_tracks_sign() {
        let mut a = quiet_agent(1);
        a.state.forward_velocity = -5.0;
        a.step(10.0);
        assert_eq!(a.state.behavior_mode, BehaviorMode::BackwardWalking);
    }

    #[test]
    fn uneven_steps_match_even_steps() {
        let cmd = StimulusCommand::standard(ChannelSet::single(Channel::Cerci), 400);
        let mut even = quiet_agent(2);
        let mut uneven = quiet_agent(2);
        even.apply(&cmd).unwrap();
        uneven.apply(&cmd).unwrap();
        for _ in 0..110 {
            even.step(10.0);
        }
        // 100 x 7 ms + 8 x 50 ms = 1100 ms, crossing both envelope edges mid-step.
        for _ in 0..100 {
            uneven.step(7.0);
        }
        for _ in 0..8 {
            uneven.step(50.0);
        }
        assert!((even.pose().x_mm - uneven.pose().x_mm).abs() < 1e-9);
        assert!((even.state.forward_velocity - uneven.state.forward_velocity).abs() < 1e-9);
    }
}
