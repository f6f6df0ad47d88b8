//! Stimulus response calibration and sampling.
//!
//! Each stimulus class carries the mean and SD of the metric observed for it:
//! turning velocity averaged over the stimulus, or forward velocity averaged
//! over the first second after onset. Draws come from a truncated normal whose
//! location and scale are solved so that the *truncated* distribution has the
//! calibrated mean and SD. Antenna turn rates are truncated to one sign, so a
//! draw never turns the agent the wrong way.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::special::{normal_cdf, normal_pdf, normal_quantile, normal_sf};
use crate::stim::{Channel, ChannelSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusClass {
    /// Right turn (negative turn rate).
    LeftAntenna,
    /// Left turn (positive turn rate).
    RightAntenna,
    Cerci,
    BothAntennae,
}

impl StimulusClass {
    pub const ALL: [StimulusClass; 4] = [
        StimulusClass::LeftAntenna,
        StimulusClass::RightAntenna,
        StimulusClass::Cerci,
        StimulusClass::BothAntennae,
    ];

    /// Maps a channel mask to a response class; other combinations have no calibrated response.
    pub fn from_channels(channels: ChannelSet) -> Option<Self> {
        let left = ChannelSet::single(Channel::LeftAntenna);
        let right = ChannelSet::single(Channel::RightAntenna);
        let cerci = ChannelSet::single(Channel::Cerci);
        match channels {
            c if c == left => Some(StimulusClass::LeftAntenna),
            c if c == right => Some(StimulusClass::RightAntenna),
            c if c == cerci => Some(StimulusClass::Cerci),
            c if c == ChannelSet::both_antennae() => Some(StimulusClass::BothAntennae),
            _ => None,
        }
    }

    pub fn channels(self) -> ChannelSet {
        match self {
            StimulusClass::LeftAntenna => ChannelSet::single(Channel::LeftAntenna),
            StimulusClass::RightAntenna => ChannelSet::single(Channel::RightAntenna),
            StimulusClass::Cerci => ChannelSet::single(Channel::Cerci),
            StimulusClass::BothAntennae => ChannelSet::both_antennae(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_antenna_turn(self) -> bool {
        matches!(
            self,
            StimulusClass::LeftAntenna | StimulusClass::RightAntenna
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub const fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }
}

/// Calibration of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassResponse {
    /// Turning velocity over the stimulus window, deg/s (signed, CCW positive).
    #[serde(default)]
    pub turn: Option<MeanSd>,
    /// Forward velocity over the measurement window after onset, mm/s.
    #[serde(default)]
    pub forward: Option<MeanSd>,
    /// Stimulus duration this entry was measured at. Used to pick between
    /// entries of the same class; `None` matches any duration.
    #[serde(default)]
    pub stimulus_ms: Option<u32>,
    /// Ratio of the settled forward velocity to the plateau reached during the stimulus.
    #[serde(default = "one")]
    pub tail_ratio: f64,
    /// Response magnitude multiplier applied per repeated stimulation of the class.
    #[serde(default = "one")]
    pub habituation: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseProfile {
    pub left_antenna: ClassResponse,
    pub right_antenna: ClassResponse,
    pub cerci: ClassResponse,
    /// One entry per calibrated stimulus duration.
    pub both_antennae: Vec<ClassResponse>,
    pub onset_latency_ms: u32,
    /// Forward-velocity measurement window after onset.
    pub forward_window_ms: u32,
    /// Absolute turn-rate truncation bound, deg/s.
    pub turn_limit_dps: f64,
    /// Absolute forward-velocity truncation bound, mm/s.
    pub forward_limit_mms: f64,
    /// Relaxation time constant after a response ends.
    pub relax_tau_ms: f64,
}

impl Default for ResponseProfile {
    fn default() -> Self {
        Self {
            right_antenna: ClassResponse {
                turn: Some(MeanSd::new(24.26, 20.41)),
                forward: None,
                stimulus_ms: None,
                tail_ratio: 1.0,
                habituation: 1.0,
            },
            left_antenna: ClassResponse {
                turn: Some(MeanSd::new(-23.45, 17.51)),
                forward: None,
                stimulus_ms: None,
                tail_ratio: 1.0,
                habituation: 1.0,
            },
            cerci: ClassResponse {
                turn: None,
                forward: Some(MeanSd::new(33.01, 13.77)),
                stimulus_ms: None,
                tail_ratio: 0.5,
                habituation: 1.0,
            },
            both_antennae: vec![
                ClassResponse {
                    turn: None,
                    forward: Some(MeanSd::new(3.16, 2.20)),
                    stimulus_ms: Some(400),
                    tail_ratio: 1.0,
                    habituation: 1.0,
                },
                ClassResponse {
                    turn: None,
                    forward: Some(MeanSd::new(-2.03, 2.50)),
                    stimulus_ms: Some(1200),
                    tail_ratio: 1.0,
                    habituation: 1.0,
                },
            ],
            onset_latency_ms: 50,
            forward_window_ms: 1000,
            turn_limit_dps: 90.0,
            forward_limit_mms: 300.0,
            relax_tau_ms: 300.0,
        }
    }
}

impl ResponseProfile {
    /// Left/right mirror image of the right-antenna calibration; used for symmetry checks.
    pub fn symmetric() -> Self {
        let mut p = Self::default();
        let mut left = p.right_antenna.clone();
        left.turn = left.turn.map(|t| MeanSd::new(-t.mean, t.sd));
        p.left_antenna = left;
        p
    }

    pub fn class(&self, class: StimulusClass, duration_ms: u32) -> &ClassResponse {
        match class {
            StimulusClass::LeftAntenna => &self.left_antenna,
            StimulusClass::RightAntenna => &self.right_antenna,
            StimulusClass::Cerci => &self.cerci,
            StimulusClass::BothAntennae => self
                .both_antennae
                .iter()
                .min_by_key(|c| c.stimulus_ms.map_or(0, |d| d.abs_diff(duration_ms)))
                .expect("validated non-empty"),
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let check = |name: &str, c: &ClassResponse| -> Result<(), ProfileError> {
            for ms in [c.turn, c.forward].into_iter().flatten() {
                if !(ms.mean.is_finite() && ms.sd.is_finite() && ms.sd >= 0.0) {
                    return Err(ProfileError::Invalid(format!("{name}: bad mean/sd {ms:?}")));
                }
            }
            if !(c.tail_ratio.is_finite() && c.tail_ratio >= 0.0) {
                return Err(ProfileError::Invalid(format!(
                    "{name}: tail_ratio must be >= 0"
                )));
            }
            if !(c.habituation > 0.0 && c.habituation <= 1.0) {
                return Err(ProfileError::Invalid(format!(
                    "{name}: habituation must be in (0, 1]"
                )));
            }
            Ok(())
        };
        check("left_antenna", &self.left_antenna)?;
        check("right_antenna", &self.right_antenna)?;
        check("cerci", &self.cerci)?;
        if self.both_antennae.is_empty() {
            return Err(ProfileError::Invalid(
                "both_antennae needs at least one entry".into(),
            ));
        }
        for c in &self.both_antennae {
            check("both_antennae", c)?;
        }
        match (self.right_antenna.turn, self.left_antenna.turn) {
            (Some(r), Some(l)) if r.mean > 0.0 && l.mean < 0.0 => {}
            _ => {
                return Err(ProfileError::Invalid(
                    "right antenna must turn left (mean > 0) and left antenna right (mean < 0)"
                        .into(),
                ))
            }
        }
        if self.forward_window_ms == 0 || !(self.relax_tau_ms > 0.0) {
            return Err(ProfileError::Invalid(
                "forward window and relaxation constant must be positive".into(),
            ));
        }
        if !(self.turn_limit_dps > 0.0 && self.forward_limit_mms > 0.0) {
            return Err(ProfileError::Invalid(
                "truncation limits must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Validates and solves the sampling distributions.
    pub fn compile(&self) -> Result<ResponseModel, ProfileError> {
        self.validate()?;
        let turn = |c: &ClassResponse| -> Result<Option<TruncatedNormal>, ProfileError> {
            c.turn
                .map(|t| {
                    TruncatedNormal::with_moments(t.mean.abs(), t.sd, 0.0, self.turn_limit_dps)
                })
                .transpose()
        };
        let fwd = |c: &ClassResponse, lo: f64| -> Result<Option<TruncatedNormal>, ProfileError> {
            c.forward
                .map(|f| TruncatedNormal::with_moments(f.mean, f.sd, lo, self.forward_limit_mms))
                .transpose()
        };
        let compile_class =
            |c: &ClassResponse, fwd_lo: f64| -> Result<CompiledClass, ProfileError> {
                Ok(CompiledClass {
                    turn: turn(c)?,
                    forward: fwd(c, fwd_lo)?,
                    calibration: c.clone(),
                })
            };
        Ok(ResponseModel {
            left: compile_class(&self.left_antenna, -self.forward_limit_mms)?,
            right: compile_class(&self.right_antenna, -self.forward_limit_mms)?,
            // Cerci only ever drive the insect forward.
            cerci: compile_class(&self.cerci, 0.0)?,
            both: self
                .both_antennae
                .iter()
                .map(|c| compile_class(c, -self.forward_limit_mms))
                .collect::<Result<_, _>>()?,
            profile: self.clone(),
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("invalid response profile: {0}")]
    Invalid(String),
    #[error("cannot match mean {mean} and sd {sd} on [{lo}, {hi}]")]
    Unattainable {
        mean: f64,
        sd: f64,
        lo: f64,
        hi: f64,
    },
}

/// Normal distribution restricted to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Self {
        Self { mu, sigma, lo, hi }
    }

    /// Mass of the untruncated normal inside the bounds, computed on the
    /// tail that avoids cancellation.
    fn mass(&self) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        if a > 0.0 {
            normal_sf(a) - normal_sf(b)
        } else if b < 0.0 {
            normal_cdf(b) - normal_cdf(a)
        } else {
            1.0 - normal_cdf(a) - normal_sf(b)
        }
    }

    pub fn mean(&self) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        self.mu + self.sigma * (normal_pdf(a) - normal_pdf(b)) / self.mass()
    }

    pub fn sd(&self) -> f64 {
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        let z = self.mass();
        let (pa, pb) = (normal_pdf(a), normal_pdf(b));
        let pa_a = if a.is_finite() { a * pa } else { 0.0 };
        let pb_b = if b.is_finite() { b * pb } else { 0.0 };
        let r = (pa - pb) / z;
        let var = 1.0 + (pa_a - pb_b) / z - r * r;
        self.sigma * var.max(0.0).sqrt()
    }

    /// Solves for the parent normal whose truncation has the given mean and SD.
    pub fn with_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<Self, ProfileError> {
        let fail = || ProfileError::Unattainable { mean, sd, lo, hi };
        if !(lo < mean && mean < hi) {
            return Err(fail());
        }
        if sd == 0.0 {
            return Ok(Self::new(mean, 0.0, lo, hi));
        }
        let width = hi - lo;
        // For fixed sigma the truncated mean increases with mu.
        let fit_mu = |sigma: f64| -> f64 {
            let (mut a, mut b) = (lo - 30.0 * sigma, hi + 30.0 * sigma);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if Self::new(mid, sigma, lo, hi).mean() < mean {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        let sd_at = |sigma: f64| Self::new(fit_mu(sigma), sigma, lo, hi).sd();
        let (mut s_lo, mut s_hi) = (sd * 1e-3, width * 10.0);
        if sd_at(s_hi) < sd {
            return Err(fail());
        }
        for _ in 0..100 {
            let mid = 0.5 * (s_lo + s_hi);
            if sd_at(mid) < sd {
                s_lo = mid;
            } else {
                s_hi = mid;
            }
        }
        let sigma = 0.5 * (s_lo + s_hi);
        let tn = Self::new(fit_mu(sigma), sigma, lo, hi);
        if (tn.mean() - mean).abs() > 1e-6 * (1.0 + mean.abs())
            || (tn.sd() - sd).abs() > 1e-6 * (1.0 + sd)
        {
            return Err(fail());
        }
        Ok(tn)
    }

    /// Inverse-CDF draw; consumes exactly one uniform.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        if self.sigma == 0.0 {
            return self.mu;
        }
        let a = (self.lo - self.mu) / self.sigma;
        let b = (self.hi - self.mu) / self.sigma;
        let z = if a > 0.0 {
            let (qa, qb) = (normal_sf(a), normal_sf(b));
            -normal_quantile(qa - u * (qa - qb))
        } else {
            let (pa, pb) = (normal_cdf(a), normal_cdf(b));
            normal_quantile(pa + u * (pb - pa))
        };
        (self.mu + self.sigma * z.clamp(a, b)).clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone)]
struct CompiledClass {
    turn: Option<TruncatedNormal>,
    forward: Option<TruncatedNormal>,
    calibration: ClassResponse,
}

/// A drawn response: what one stimulation will do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResponseDraw {
    pub turn_rate_dps: f64,
    pub forward_mms: Option<f64>,
    pub tail_ratio: f64,
}

/// Profile with its sampling distributions solved. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ResponseModel {
    left: CompiledClass,
    right: CompiledClass,
    cerci: CompiledClass,
    both: Vec<CompiledClass>,
    profile: ResponseProfile,
}

impl ResponseModel {
    pub fn profile(&self) -> &ResponseProfile {
        &self.profile
    }

    fn compiled(&self, class: StimulusClass, duration_ms: u32) -> &CompiledClass {
        match class {
            StimulusClass::LeftAntenna => &self.left,
            StimulusClass::RightAntenna => &self.right,
            StimulusClass::Cerci => &self.cerci,
            StimulusClass::BothAntennae => self
                .both
                .iter()
                .min_by_key(|c| {
                    c.calibration
                        .stimulus_ms
                        .map_or(0, |d| d.abs_diff(duration_ms))
                })
                .expect("validated non-empty"),
        }
    }

    /// Draws one response. `repeats` is how many times the class fired before.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        class: StimulusClass,
        duration_ms: u32,
        repeats: u32,
        rng: &mut R,
    ) -> ResponseDraw {
        let c = self.compiled(class, duration_ms);
        let gain = c
            .calibration
            .habituation
            .powi(repeats.min(i32::MAX as u32) as i32);
        let sign = match class {
            StimulusClass::LeftAntenna => -1.0,
            _ => 1.0,
        };
        let turn_rate_dps = c.turn.map_or(0.0, |t| sign * t.sample(rng) * gain);
        let forward_mms = c.forward.map(|f| f.sample(rng) * gain);
        ResponseDraw {
            turn_rate_dps,
            forward_mms,
            tail_ratio: c.calibration.tail_ratio,
        }
    }
}

/// Forward-velocity time course of a response, normalised so that its mean
/// over the measurement window equals 1.
///
/// Flat at `plateau` for the stimulus, then relaxes exponentially toward
/// `tail = tail_ratio * plateau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForwardShape {
    pub plateau: f64,
    pub tail: f64,
    pub stim_ms: f64,
    pub tau_ms: f64,
}

impl ForwardShape {
    pub fn new(stim_ms: f64, window_ms: f64, tail_ratio: f64, tau_ms: f64) -> Self {
        let plateau = if stim_ms >= window_ms {
            1.0
        } else {
            let rest = window_ms - stim_ms;
            window_ms
                / (stim_ms
                    + tail_ratio * rest
                    + (1.0 - tail_ratio) * tau_ms * (1.0 - (-rest / tau_ms).exp()))
        };
        Self {
            plateau,
            tail: tail_ratio * plateau,
            stim_ms,
            tau_ms,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        if s < self.stim_ms {
            self.plateau
        } else {
            self.tail + (self.plateau - self.tail) * (-(s - self.stim_ms) / self.tau_ms).exp()
        }
    }

    /// Exact integral over `[s0, s1]` (ms since onset).
    pub fn integral(&self, s0: f64, s1: f64) -> f64 {
        let mut total = 0.0;
        let p_end = s1.min(self.stim_ms);
        if p_end > s0 {
            total += self.plateau * (p_end - s0);
        }
        let d0 = s0.max(self.stim_ms);
        if s1 > d0 {
            let e = |s: f64| (-(s - self.stim_ms) / self.tau_ms).exp();
            total +=
                self.tail * (s1 - d0) + (self.plateau - self.tail) * self.tau_ms * (e(d0) - e(s1));
        }
        total
    }
}
