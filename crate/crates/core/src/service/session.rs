//! One live simulation session, driven step by step in virtual time.
//!
//! Client commands and autopilot decisions share one queue into the rig. A
//! queued manual stimulus is sent on the next step; when that step is also a
//! decision tick the autopilot's choice is dropped.

use std::collections::VecDeque;

use super::protocol::{
    ClientCommand, CommandKind, ErrorCode, Event, ServerMessage, Source, SCHEMA_VERSION,
};
use crate::link::StationEvent;
use crate::nav::{nav_decide, trial_seed, NavDecision, NavTarget, Rig, TerrainEvent};
use crate::scenario::{Scenario, WalledArena};
use crate::stim::{Channel, ChannelSet, StimulusCommand};

#[derive(Debug, Clone)]
pub struct Session {
    scenario: Scenario,
    seed: u64,
    session: u32,
    rig: Rig,
    terrain: WalledArena,
    target: Option<NavTarget>,
    autopilot: bool,
    paused: bool,
    manual: VecDeque<StimulusCommand>,
    steps: u64,
    steps_per_decision: u64,
    telemetry_period_ms: f64,
    next_telemetry_ms: f64,
    tick: u32,
    last_decision: NavDecision,
    goal_announced: bool,
    crossings_seen: usize,
}

impl Session {
    /// Starts at the scenario's start pose with its target placed and the autopilot off.
    pub fn new(scenario: Scenario) -> Self {
        let seed = scenario.config.seed;
        let (rig, terrain) = Self::build(&scenario, trial_seed(seed, 0));
        let period = 1000.0 / scenario.config.telemetry_hz;
        let steps_per_decision = ((f64::from(scenario.config.navigation.decision_period_ms)
            / scenario.config.dt_ms)
            .round() as u64)
            .max(1);
        Self {
            target: Some(scenario.config.target),
            scenario,
            seed,
            session: 0,
            rig,
            terrain,
            autopilot: false,
            paused: false,
            manual: VecDeque::new(),
            steps: 0,
            steps_per_decision,
            telemetry_period_ms: period,
            next_telemetry_ms: 0.0,
            tick: 0,
            last_decision: NavDecision::None,
            goal_announced: false,
            crossings_seen: 0,
        }
    }

    fn build(sc: &Scenario, seed: u64) -> (Rig, WalledArena) {
        let world = sc.world(seed);
        (
            Rig::new(&world, sc.config.navigation.velocity_window_ms, seed),
            sc.terrain(seed),
        )
    }

    pub fn now_ms(&self) -> f64 {
        self.rig.now_ms()
    }

    pub fn dt_ms(&self) -> f64 {
        self.rig.dt_ms()
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn autopilot(&self) -> bool {
        self.autopilot
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn target(&self) -> Option<NavTarget> {
        self.target
    }

    pub fn hello(&self, time_scale: f64) -> ServerMessage {
        let c = &self.scenario.config;
        ServerMessage::Hello {
            v: SCHEMA_VERSION,
            session: self.session,
            seed: self.seed,
            arena: c.arena,
            start: NavTarget::new(c.start.x, c.start.y),
            target: self.target,
            autopilot: self.autopilot,
            paused: self.paused,
            time_scale,
            telemetry_hz: c.telemetry_hz,
        }
    }

    pub fn heartbeat(&self) -> ServerMessage {
        self.event(Event::Heartbeat {
            tick: self.tick,
            paused: self.paused,
        })
    }

    fn event(&self, e: Event) -> ServerMessage {
        ServerMessage::event(self.now_ms(), e)
    }

    fn stimulus(&self, kind: CommandKind) -> Option<StimulusCommand> {
        let nav = &self.scenario.config.navigation;
        let single = |c| ChannelSet::single(c);
        Some(match kind {
            CommandKind::Left => {
                StimulusCommand::standard(single(Channel::LeftAntenna), nav.antenna_duration_ms)
            }
            CommandKind::Right => {
                StimulusCommand::standard(single(Channel::RightAntenna), nav.antenna_duration_ms)
            }
            CommandKind::Cerci => {
                StimulusCommand::standard(single(Channel::Cerci), nav.cerci_duration_ms)
            }
            CommandKind::Both400 => StimulusCommand::standard(ChannelSet::both_antennae(), 400),
            CommandKind::Both1200 => StimulusCommand::standard(ChannelSet::both_antennae(), 1200),
            _ => return None,
        })
    }

    /// Applies one client command. Replies of type `error` go to the sender only.
    pub fn handle(&mut self, cmd: ClientCommand) -> Vec<ServerMessage> {
        let accepted = self.event(Event::Accepted {
            kind: cmd.kind,
            id: cmd.id,
        });
        if let Some(stim) = self.stimulus(cmd.kind) {
            self.manual.push_back(stim);
            return vec![accepted];
        }
        let mut out = vec![];
        match cmd.kind {
            CommandKind::SetTarget => {
                let (Some(x), Some(y)) = (cmd.x, cmd.y) else {
                    return vec![ServerMessage::error(
                        ErrorCode::InvalidTarget,
                        "set-target needs numeric x and y",
                    )];
                };
                if !(x.is_finite() && y.is_finite() && self.scenario.config.arena.contains(x, y)) {
                    return vec![ServerMessage::error(
                        ErrorCode::InvalidTarget,
                        format!("target ({x}, {y}) lies outside the arena"),
                    )];
                }
                self.target = Some(NavTarget::new(x, y));
                self.goal_announced = false;
                out.extend([accepted, self.event(Event::TargetSet { x, y })]);
            }
            CommandKind::AutopilotOn | CommandKind::AutopilotOff => {
                let on = cmd.kind == CommandKind::AutopilotOn;
                if on && self.target.is_none() {
                    return vec![ServerMessage::error(
                        ErrorCode::NoTarget,
                        "place a target before enabling the autopilot",
                    )];
                }
                self.autopilot = on;
                if on {
                    self.goal_announced = false;
                }
                out.extend([accepted, self.event(Event::Autopilot { on })]);
            }
            CommandKind::Pause => {
                self.paused = true;
                out.extend([accepted, self.event(Event::Paused)]);
            }
            CommandKind::Resume => {
                self.paused = false;
                out.extend([accepted, self.event(Event::Resumed)]);
            }
            CommandKind::Reset => {
                self.session += 1;
                let (rig, terrain) = Self::build(
                    &self.scenario,
                    trial_seed(self.seed, u64::from(self.session)),
                );
                self.rig = rig;
                self.terrain = terrain;
                self.manual.clear();
                self.autopilot = false;
                self.steps = 0;
                self.next_telemetry_ms = 0.0;
                self.last_decision = NavDecision::None;
                self.goal_announced = false;
                self.crossings_seen = 0;
                out.extend([
                    accepted,
                    self.event(Event::Reset {
                        session: self.session,
                    }),
                ]);
            }
            _ => unreachable!("stimulus kinds handled above"),
        }
        out
    }

    fn send(&mut self, cmd: &StimulusCommand, source: Source, out: &mut Vec<ServerMessage>) {
        let refractory = self
            .scenario
            .config
            .navigation
            .refractory_for(cmd.duration_ms);
        if let Ok(seq) = self.rig.send(cmd, refractory) {
            out.push(self.event(Event::Stimulus {
                source,
                channels: cmd.channels.to_string(),
                duration_ms: cmd.duration_ms,
                seq,
            }));
        }
    }

    /// Advances one simulation step unless paused.
    pub fn step(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.paused {
            return out;
        }
        let manual = self.manual.pop_front();
        if let Some(cmd) = manual {
            self.send(&cmd, Source::Manual, &mut out);
        }
        if self.steps.is_multiple_of(self.steps_per_decision) {
            let obs = self.rig.observation();
            if let Some(target) = self.target {
                let decision = nav_decide(&obs, &target, &self.scenario.config.navigation);
                if decision == NavDecision::GoalReached && !self.goal_announced {
                    self.goal_announced = true;
                    out.push(self.event(Event::GoalReached {
                        x: obs.pose.x_mm,
                        y: obs.pose.y_mm,
                    }));
                    if self.autopilot {
                        self.autopilot = false;
                        out.push(self.event(Event::Autopilot { on: false }));
                    }
                }
                if self.autopilot && manual.is_none() {
                    self.last_decision = decision;
                    if let Some(cmd) = decision.command(&self.scenario.config.navigation) {
                        self.send(&cmd, Source::Autopilot, &mut out);
                    }
                }
            }
        }
        if self.now_ms() >= self.next_telemetry_ms {
            self.rig
                .send_telemetry(self.tick, self.last_decision.code());
            self.tick = self.tick.wrapping_add(1);
            self.next_telemetry_ms += self.telemetry_period_ms;
        }

        let step = self.rig.step(&mut self.terrain);
        self.steps += 1;
        for e in step.station {
            match e {
                StationEvent::Acked { seq } => out.push(self.event(Event::Acked { seq })),
                StationEvent::Rejected { seq, reason } => out.push(self.event(Event::Rejected {
                    seq,
                    reason: format!("{reason:?}"),
                })),
                StationEvent::Failed { seq } => out.push(self.event(Event::LinkFailure { seq })),
                StationEvent::Telemetry(p) => out.push(ServerMessage::Telemetry {
                    v: SCHEMA_VERSION,
                    tick: p.tick,
                    t_ms: self.now_ms(),
                    x: p.x_mm(),
                    y: p.y_mm(),
                    heading: p.heading_deg(),
                    v_fwd: p.forward_mms(),
                    omega: p.turn_dps(),
                    nav_state: decision_name(p.nav_state).to_string(),
                }),
                StationEvent::Corrupt(_) => {}
            }
        }
        if matches!(
            step.terrain,
            TerrainEvent::Hold { .. } | TerrainEvent::Stuck
        ) {
            for c in &self.terrain.crossings[self.crossings_seen..] {
                out.push(ServerMessage::event(
                    c.t_ms,
                    Event::Slit {
                        terminal: c.terminal.to_string(),
                        elapsed_s: c.elapsed_s,
                    },
                ));
            }
            self.crossings_seen = self.terrain.crossings.len();
        }
        out
    }

    /// Steps until virtual time reaches `t_ms`, or at most `max_steps` steps.
    pub fn advance_to(&mut self, t_ms: f64, max_steps: usize) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        let mut n = 0;
        while !self.paused && n < max_steps && self.now_ms() + self.dt_ms() <= t_ms + 1e-9 {
            out.extend(self.step());
            n += 1;
        }
        out
    }
}

fn decision_name(code: u8) -> &'static str {
    [
        NavDecision::None,
        NavDecision::StimulateLeftAntenna,
        NavDecision::StimulateRightAntenna,
        NavDecision::StimulateCerci,
        NavDecision::GoalReached,
    ]
    .into_iter()
    .find(|d| d.code() == code)
    .map_or("unknown", NavDecision::name)
}
