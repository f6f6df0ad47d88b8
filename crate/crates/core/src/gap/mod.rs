//! Obstacle negotiation at a weighted shutter, as a stochastic state machine.
//!
//! ```text
//! Contact -> Tunnel | Climb
//! Tunnel  -> Pass | Stuck | Explore
//! Explore -> Tunnel | Climb | Return
//! Climb   -> Exit | Explore
//! ```
//!
//! Pass, Stuck, Return and Exit are terminal. Every visit to a non-terminal
//! state costs the profile's dwell time, except a tunnel that passes, which
//! costs the sampled traversal time. Running out of the time budget ends the
//! trial as Stuck.

mod calibration;
mod montecarlo;

pub use calibration::{
    Arrangement, ArrangementProfile, GapCalibration, ShutterModel, TraversalTime, Weights,
};
pub use montecarlo::{
    monte_carlo, summarize, write_edges_csv, write_histogram_csv, write_trials_csv, GapSummary,
    MonteCarloRun, TraversalStats,
};

use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const G: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegotiationState {
    Contact,
    Tunnel,
    Climb,
    Explore,
    Pass,
    Stuck,
    Return,
    Exit,
}

impl NegotiationState {
    pub const ALL: [NegotiationState; 8] = [
        NegotiationState::Contact,
        NegotiationState::Tunnel,
        NegotiationState::Climb,
        NegotiationState::Explore,
        NegotiationState::Pass,
        NegotiationState::Stuck,
        NegotiationState::Return,
        NegotiationState::Exit,
    ];
    pub const NON_TERMINAL: [NegotiationState; 4] = [
        NegotiationState::Contact,
        NegotiationState::Tunnel,
        NegotiationState::Explore,
        NegotiationState::Climb,
    ];
    pub const TERMINAL: [NegotiationState; 4] = [
        NegotiationState::Pass,
        NegotiationState::Stuck,
        NegotiationState::Return,
        NegotiationState::Exit,
    ];

    pub fn is_terminal(self) -> bool {
        Self::TERMINAL.contains(&self)
    }

    pub fn allowed_next(self) -> &'static [NegotiationState] {
        use NegotiationState::*;
        match self {
            Contact => &[Tunnel, Climb],
            Tunnel => &[Pass, Stuck, Explore],
            Explore => &[Tunnel, Climb, Return],
            Climb => &[Exit, Explore],
            Pass | Stuck | Return | Exit => &[],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NegotiationState::Contact => "contact",
            NegotiationState::Tunnel => "tunnel",
            NegotiationState::Climb => "climb",
            NegotiationState::Explore => "explore",
            NegotiationState::Pass => "pass",
            NegotiationState::Stuck => "stuck",
            NegotiationState::Return => "return",
            NegotiationState::Exit => "exit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.name() == s)
    }
}

impl fmt::Display for NegotiationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GapError {
    #[error("fsm_step called on terminal state {0}")]
    TerminalState(NegotiationState),
    #[error("invalid calibration: {0}")]
    Invalid(String),
    #[error("calibration parse error: {0}")]
    Parse(String),
    #[error("unknown arrangement profile '{0}'")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiftForce {
    pub newtons: f64,
    pub warning: Option<String>,
}

/// Net force needed to raise the counterweighted shutter.
pub fn required_lift_force(shutter: &ShutterModel) -> LiftForce {
    if shutter.counterweight_mass_g > shutter.shutter_mass_g {
        return LiftForce {
            newtons: 0.0,
            warning: Some(format!(
                "counterweight {} g exceeds shutter {} g: the shutter opens by itself",
                shutter.counterweight_mass_g, shutter.shutter_mass_g
            )),
        };
    }
    let net = (shutter.shutter_mass_g - shutter.counterweight_mass_g) / 1000.0 * G;
    LiftForce {
        newtons: net + shutter.friction_allowance_n,
        warning: None,
    }
}

/// How far the shutter must be lifted for the compressed body plus any load to fit.
pub fn required_clearance(profile: &ArrangementProfile, shutter: &ShutterModel) -> f64 {
    let body = profile.body_height_mm * profile.compression_factor;
    (body + profile.added_height_mm - shutter.gap_height_mm).max(0.0)
}

fn sample_weights<R: Rng + ?Sized>(
    from: NegotiationState,
    weights: &Weights,
    skip_tunnel: bool,
    rng: &mut R,
) -> NegotiationState {
    let (states, ws): (Vec<_>, Vec<_>) = from
        .allowed_next()
        .iter()
        .map(|s| {
            let w = if skip_tunnel && *s == NegotiationState::Tunnel {
                0.0
            } else {
                weights.get(s).copied().unwrap_or(0.0)
            };
            (*s, w)
        })
        .unzip();
    // Validated profiles always leave some mass; fall back to the first edge otherwise.
    match WeightedIndex::new(&ws) {
        Ok(d) => states[d.sample(rng)],
        Err(_) => states[0],
    }
}

/// One transition drawn from the profile weights.
pub fn fsm_step<R: Rng + ?Sized>(
    state: NegotiationState,
    profile: &ArrangementProfile,
    rng: &mut R,
) -> Result<NegotiationState, GapError> {
    let w = profile
        .weights(state)
        .ok_or(GapError::TerminalState(state))?;
    Ok(sample_weights(state, w, false, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapOutcome {
    pub terminal: NegotiationState,
    pub traversal_time_s: Option<f64>,
    pub path: Vec<NegotiationState>,
    pub tunnel_attempts: u32,
    pub elapsed_s: f64,
}

impl GapOutcome {
    pub fn path_string(&self) -> String {
        self.path
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(">")
    }

    pub fn tunnel_passes(&self) -> u32 {
        u32::from(self.terminal == NegotiationState::Pass)
    }
}

/// Draws a traversal time no longer than `remaining_s`, or `None` if the
/// distribution has practically no mass there.
fn traversal_within<R: Rng + ?Sized>(
    t: &TraversalTime,
    remaining_s: f64,
    rng: &mut R,
) -> Option<f64> {
    let (shape, scale) = t.gamma_params();
    let gamma = Gamma::new(shape, scale).ok()?;
    (0..10_000)
        .map(|_| gamma.sample(rng))
        .find(|x| *x <= remaining_s)
}

/// Walks the machine from Contact to a terminal state.
pub fn run_gap_trial<R: Rng + ?Sized>(
    profile: &ArrangementProfile,
    shutter: &ShutterModel,
    rng: &mut R,
) -> GapOutcome {
    use NegotiationState::*;
    let budget = profile.time_budget_s;
    let mut path = vec![Contact];
    let mut elapsed = 0.0;
    let mut attempts = 0;
    let mut traversal = None;

    if required_clearance(profile, shutter) == 0.0 {
        // The body fits under the shutter: walk straight through.
        let t = traversal_within(&profile.traversal, budget, rng);
        path.extend([Tunnel, Pass]);
        return GapOutcome {
            terminal: Pass,
            traversal_time_s: t,
            path,
            tunnel_attempts: 1,
            elapsed_s: t.unwrap_or(0.0),
        };
    }

    let mut state = Contact;
    let terminal = loop {
        let next = match state {
            Tunnel => {
                let next = sample_weights(Tunnel, &profile.tunnel, false, rng);
                if next == Pass {
                    match traversal_within(&profile.traversal, budget - elapsed, rng) {
                        Some(t) => {
                            traversal = Some(t);
                            elapsed += t;
                            Pass
                        }
                        None => Stuck,
                    }
                } else {
                    elapsed += profile.dwell_s;
                    next
                }
            }
            Explore => {
                elapsed += profile.dwell_s;
                sample_weights(
                    Explore,
                    &profile.explore,
                    attempts >= profile.max_tunnel_attempts,
                    rng,
                )
            }
            s => {
                elapsed += profile.dwell_s;
                sample_weights(s, profile.weights(s).expect("non-terminal"), false, rng)
            }
        };
        if next == Tunnel {
            attempts += 1;
        }
        path.push(next);
        if next.is_terminal() {
            break next;
        }
        if elapsed >= budget {
            path.push(Stuck);
            break Stuck;
        }
        state = next;
    };
    GapOutcome {
        terminal,
        traversal_time_s: traversal,
        path,
        tunnel_attempts: attempts,
        elapsed_s: elapsed.min(budget),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cal() -> GapCalibration {
        GapCalibration::default()
    }

    #[test]
    fn lift_force_cases() {
        let f = required_lift_force(&ShutterModel::default());
        assert!((f.newtons - 0.4905).abs() < 1e-12);
        assert!(f.warning.is_none());
        let balanced = ShutterModel {
            shutter_mass_g: 100.0,
            counterweight_mass_g: 100.0,
            ..ShutterModel::default()
        };
        assert_eq!(required_lift_force(&balanced).newtons, 0.0);
        let inverted = ShutterModel {
            shutter_mass_g: 96.5,
            counterweight_mass_g: 146.5,
            ..ShutterModel::default()
        };
        let f = required_lift_force(&inverted);
        assert_eq!(f.newtons, 0.0);
        assert!(f.warning.is_some());
    }

    #[test]
    fn clearance_cases() {
        let c = cal();
        let s = ShutterModel::default();
        assert!(
            (required_clearance(c.profile(Arrangement::Intact).unwrap(), &s) - 1.0).abs() < 1e-12
        );
        assert!(
            (required_clearance(c.profile(Arrangement::Mounted).unwrap(), &s) - 5.0).abs() < 1e-12
        );
        let wide = ShutterModel {
            gap_height_mm: 20.0,
            ..s
        };
        assert_eq!(
            required_clearance(c.profile(Arrangement::Mounted).unwrap(), &wide),
            0.0
        );
    }

    #[test]
    fn terminal_step_is_an_error() {
        let c = cal();
        let p = c.profile(Arrangement::Intact).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            fsm_step(NegotiationState::Pass, p, &mut rng),
            Err(GapError::TerminalState(NegotiationState::Pass))
        );
    }

    #[test]
    fn degenerate_weights_force_the_path() {
        let mut p = cal().profile(Arrangement::Intact).unwrap().clone();
        p.contact = [(NegotiationState::Tunnel, 1.0)].into_iter().collect();
        p.tunnel = [(NegotiationState::Pass, 1.0)].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(
                fsm_step(NegotiationState::Tunnel, &p, &mut rng),
                Ok(NegotiationState::Pass)
            );
            let o = run_gap_trial(&p, &ShutterModel::default(), &mut rng);
            assert_eq!(
                o.path,
                vec![
                    NegotiationState::Contact,
                    NegotiationState::Tunnel,
                    NegotiationState::Pass
                ]
            );
            assert!(o.traversal_time_s.unwrap() <= p.time_budget_s);
        }
    }

    #[test]
    fn free_passage_when_gap_is_wide() {
        let p = cal().profile(Arrangement::Mounted).unwrap().clone();
        let wide = ShutterModel {
            gap_height_mm: 20.0,
            ..ShutterModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = run_gap_trial(&p, &wide, &mut rng);
        assert_eq!(o.terminal, NegotiationState::Pass);
        assert_eq!(o.path.len(), 3);
    }

    #[test]
    fn tunnel_attempts_are_capped() {
        let mut p = cal().profile(Arrangement::Intact).unwrap().clone();
        p.tunnel = [(NegotiationState::Explore, 1.0)].into_iter().collect();
        p.explore = [
            (NegotiationState::Tunnel, 0.99),
            (NegotiationState::Return, 0.01),
        ]
        .into_iter()
        .collect();
        p.contact = [(NegotiationState::Tunnel, 1.0)].into_iter().collect();
        p.max_tunnel_attempts = 3;
        p.time_budget_s = 1e6;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let o = run_gap_trial(&p, &ShutterModel::default(), &mut rng);
            assert!(o.tunnel_attempts <= 3);
            assert_eq!(o.terminal, NegotiationState::Return);
        }
    }

    #[test]
    fn budget_exhaustion_ends_stuck() {
        let mut p = cal().profile(Arrangement::Intact).unwrap().clone();
        p.contact = [(NegotiationState::Climb, 1.0)].into_iter().collect();
        p.climb = [(NegotiationState::Explore, 1.0)].into_iter().collect();
        p.explore = [(NegotiationState::Climb, 1.0)].into_iter().collect();
        let o = run_gap_trial(
            &p,
            &ShutterModel::default(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(o.terminal, NegotiationState::Stuck);
        assert_eq!(o.path.len(), 32);
    }

    #[test]
    fn state_names_round_trip() {
        for s in NegotiationState::ALL {
            assert_eq!(NegotiationState::from_name(s.name()), Some(s));
        }
    }
}
