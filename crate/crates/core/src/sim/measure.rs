//! Replays the behavioural measurement protocol against the simulated agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Agent, Pose, ResponseModel, SpontaneousBehavior, StimulusClass};
use crate::stim::StimulusCommand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Turning velocity averaged over the stimulus, deg/s.
    TurnDuringStimulus,
    /// Forward velocity averaged over the window after onset, mm/s.
    ForwardAfterOnset,
}

impl Metric {
    pub fn for_class(class: StimulusClass) -> Self {
        if class.is_antenna_turn() {
            Metric::TurnDuringStimulus
        } else {
            Metric::ForwardAfterOnset
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasuredResponse {
    pub class: StimulusClass,
    pub duration_ms: u32,
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub values: Vec<f64>,
}

const DT_MS: f64 = 10.0;

/// Stimulates `n_events` fresh agents at rest and reports the metric the
/// class is judged by. Event `i` uses stream `i` of `seed`.
pub fn measure_response(
    model: &ResponseModel,
    behavior: &SpontaneousBehavior,
    class: StimulusClass,
    duration_ms: u32,
    n_events: usize,
    seed: u64,
) -> MeasuredResponse {
    let metric = Metric::for_class(class);
    let profile = model.profile();
    let onset = f64::from(profile.onset_latency_ms);
    let window = match metric {
        Metric::TurnDuringStimulus => f64::from(duration_ms),
        Metric::ForwardAfterOnset => f64::from(profile.forward_window_ms),
    };
    let (w0, w1) = (onset, onset + window);
    let cmd = StimulusCommand::standard(class.channels(), duration_ms);

    let values: Vec<f64> = (0..n_events)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut agent = Agent::new(Pose::default(), model.clone(), *behavior, rng);
            agent.apply(&cmd).expect("calibrated class");
            let mut acc = 0.0;
            while agent.pose().t_ms < w1 {
                let s = agent.step(DT_MS);
                let overlap = s.t1_ms.min(w1) - s.t0_ms.max(w0);
                if overlap > 0.0 {
                    let v = match metric {
                        Metric::TurnDuringStimulus => s.mean_turn,
                        Metric::ForwardAfterOnset => s.mean_forward,
                    };
                    acc += v * overlap;
                }
            }
            acc / window
        })
        .collect();

    let n = values.len();
    let mean = values.iter().sum::<f64>() / n.max(1) as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeasuredResponse {
        class,
        duration_ms,
        metric,
        n,
        mean,
        sd,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ResponseProfile;

    #[test]
    fn measured_equals_sampled_draw() {
        let model = ResponseProfile::default().compile().unwrap();
        let m = measure_response(
            &model,
            &SpontaneousBehavior::default(),
            StimulusClass::Cerci,
            400,
            1,
            5,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rng.set_stream(0);
        let draw = model.sample(StimulusClass::Cerci, 400, 0, &mut rng);
        assert!((m.values[0] - draw.forward_mms.unwrap()).abs() < 1e-9);
    }
}
