//! Arrangement profiles and shutter parameters, loaded from TOML.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GapError, NegotiationState};

const DEFAULT_TOML: &str = include_str!("../../calibration/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    Intact,
    Mounted,
    Implanted,
}

impl Arrangement {
    pub const ALL: [Arrangement; 3] = [
        Arrangement::Intact,
        Arrangement::Mounted,
        Arrangement::Implanted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arrangement::Intact => "intact",
            Arrangement::Mounted => "mounted",
            Arrangement::Implanted => "implanted",
        }
    }
}

impl fmt::Display for Arrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Arrangement {
    type Err = GapError;

    fn from_str(s: &str) -> Result<Self, GapError> {
        Arrangement::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GapError::UnknownProfile(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShutterModel {
    pub gap_height_mm: f64,
    pub shutter_mass_g: f64,
    pub counterweight_mass_g: f64,
    #[serde(default)]
    pub friction_allowance_n: f64,
}

impl Default for ShutterModel {
    fn default() -> Self {
        Self {
            gap_height_mm: 8.0,
            shutter_mass_g: 146.5,
            counterweight_mass_g: 96.5,
            friction_allowance_n: 0.0,
        }
    }
}

impl ShutterModel {
    pub fn validate(&self) -> Result<(), GapError> {
        let vals = [
            self.gap_height_mm,
            self.shutter_mass_g,
            self.counterweight_mass_g,
            self.friction_allowance_n,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(GapError::Invalid(
                "shutter dimensions and masses must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TraversalTime {
    /// Gamma with the given mean and SD = se·√n.
    Gamma { mean_s: f64, se_s: f64, n: u32 },
}

impl TraversalTime {
    pub fn mean_s(&self) -> f64 {
        match *self {
            TraversalTime::Gamma { mean_s, .. } => mean_s,
        }
    }

    pub fn sd_s(&self) -> f64 {
        match *self {
            TraversalTime::Gamma { se_s, n, .. } => se_s * f64::from(n).sqrt(),
        }
    }

    /// (shape, scale) of the gamma distribution.
    pub fn gamma_params(&self) -> (f64, f64) {
        let (m, s) = (self.mean_s(), self.sd_s());
        ((m / s).powi(2), s * s / m)
    }
}

pub type Weights = BTreeMap<NegotiationState, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrangementProfile {
    #[serde(skip)]
    pub name: Option<Arrangement>,
    pub added_height_mm: f64,
    pub body_height_mm: f64,
    pub compression_factor: f64,
    pub max_tunnel_attempts: u32,
    /// Time spent per visit of a non-terminal state other than a passing tunnel.
    pub dwell_s: f64,
    pub time_budget_s: f64,
    pub traversal: TraversalTime,
    /// Published success percentage kept for reference where it disagrees with the counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_tunnel_success: Option<f64>,
    pub contact: Weights,
    pub tunnel: Weights,
    pub explore: Weights,
    pub climb: Weights,
}

const TOL: f64 = 1e-9;

impl ArrangementProfile {
    pub fn weights(&self, from: NegotiationState) -> Option<&Weights> {
        match from {
            NegotiationState::Contact => Some(&self.contact),
            NegotiationState::Tunnel => Some(&self.tunnel),
            NegotiationState::Explore => Some(&self.explore),
            NegotiationState::Climb => Some(&self.climb),
            _ => None,
        }
    }

    pub fn weight(&self, from: NegotiationState, to: NegotiationState) -> f64 {
        self.weights(from)
            .and_then(|w| w.get(&to))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), GapError> {
        let label = self.name.map_or("profile".to_string(), |n| n.to_string());
        let bad = |m: String| Err(GapError::Invalid(format!("{label}: {m}")));
        for from in NegotiationState::NON_TERMINAL {
            let w = self.weights(from).expect("non-terminal");
            let allowed = from.allowed_next();
            let mut sum = 0.0;
            for (to, p) in w {
                if !allowed.contains(to) {
                    return bad(format!("edge {from:?} -> {to:?} is not allowed"));
                }
                if !(p.is_finite() && (0.0..=1.0).contains(p)) {
                    return bad(format!("weight {from:?} -> {to:?} = {p} outside [0, 1]"));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > TOL {
                return bad(format!("weights out of {from:?} sum to {sum}, not 1"));
            }
        }
        let explore_escape: f64 = self
            .explore
            .iter()
            .filter(|(s, _)| **s != NegotiationState::Tunnel)
            .map(|(_, p)| p)
            .sum();
        if self.max_tunnel_attempts == 0 {
            return bad("max_tunnel_attempts must be at least 1".into());
        }
        if explore_escape <= 0.0 {
            return bad("explore needs a non-tunnel edge once tunnel attempts run out".into());
        }
        let dims = [
            self.added_height_mm,
            self.body_height_mm,
            self.compression_factor,
        ];
        if dims.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.body_height_mm == 0.0 {
            return bad(
                "heights and compression factor must be finite, body height positive".into(),
            );
        }
        if !(self.dwell_s >= 0.0 && self.time_budget_s > 0.0) {
            return bad("dwell must be >= 0 and the time budget positive".into());
        }
        let TraversalTime::Gamma { mean_s, se_s, n } = self.traversal;
        if !(mean_s > 0.0 && se_s > 0.0 && n >= 1) {
            return bad("traversal mean, se and n must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapCalibration {
    pub shutter: ShutterModel,
    pub profiles: BTreeMap<Arrangement, ArrangementProfile>,
}

impl GapCalibration {
    pub fn from_toml(text: &str) -> Result<Self, GapError> {
        let cal: GapCalibration =
            toml::from_str(text).map_err(|e| GapError::Parse(e.to_string()))?;
        cal.checked()
    }

    /// Names each profile after its key and validates everything.
    pub fn checked(mut self) -> Result<Self, GapError> {
        for (name, p) in self.profiles.iter_mut() {
            p.name = Some(*name);
        }
        self.shutter.validate()?;
        for p in self.profiles.values() {
            p.validate()?;
        }
        Ok(self)
    }

    pub fn profile(&self, name: Arrangement) -> Result<&ArrangementProfile, GapError> {
        self.profiles
            .get(&name)
            .ok_or_else(|| GapError::UnknownProfile(name.to_string()))
    }

    pub fn builtin_toml() -> &'static str {
        DEFAULT_TOML
    }
}

impl Default for GapCalibration {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TOML).expect("shipped calibration is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_calibration_loads() {
        let cal = GapCalibration::default();
        assert_eq!(cal.profiles.len(), 3);
        let implanted = cal.profile(Arrangement::Implanted).unwrap();
        assert_eq!(
            implanted.weight(NegotiationState::Contact, NegotiationState::Tunnel),
            37.0 / 41.0
        );
        assert_eq!(
            implanted.weight(NegotiationState::Tunnel, NegotiationState::Pass),
            0.90
        );
        let mounted = cal.profile(Arrangement::Mounted).unwrap();
        assert_eq!(
            mounted.weight(NegotiationState::Tunnel, NegotiationState::Pass),
            24.0 / 71.0
        );
        assert_eq!(mounted.reported_tunnel_success, Some(0.18));
        assert_eq!(mounted.added_height_mm, 4.0);
    }

    #[test]
    fn rejects_unnormalised_and_illegal_edges() {
        let text = GapCalibration::builtin_toml().replace(
            "climb = { exit = 0.5, explore = 0.5 }\n\n[profiles.mounted]",
            "climb = { exit = 0.5, explore = 0.4 }\n\n[profiles.mounted]",
        );
        assert!(matches!(
            GapCalibration::from_toml(&text),
            Err(GapError::Invalid(_))
        ));
        let text = GapCalibration::builtin_toml().replacen(
            "climb = { exit = 0.5, explore = 0.5 }",
            "climb = { exit = 0.5, pass = 0.5 }",
            1,
        );
        assert!(matches!(
            GapCalibration::from_toml(&text),
            Err(GapError::Invalid(_))
        ));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = GapCalibration::builtin_toml().replacen("dwell_s", "dwel_s", 1);
        assert!(matches!(
            GapCalibration::from_toml(&text),
            Err(GapError::Parse(_))
        ));
    }

    #[test]
    fn gamma_parameters_reproduce_moments() {
        let t = TraversalTime::Gamma {
            mean_s: 20.6,
            se_s: 3.16,
            n: 13,
        };
        let (k, theta) = t.gamma_params();
        assert!((k * theta - 20.6).abs() < 1e-12);
        assert!(((k * theta * theta).sqrt() - 3.16 * 13f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn profile_names_parse() {
        assert_eq!(
            "Mounted".parse::<Arrangement>().unwrap(),
            Arrangement::Mounted
        );
        assert!("flying".parse::<Arrangement>().is_err());
    }
}
