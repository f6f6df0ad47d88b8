//! Measures the simulated insect the way the bench did: fresh animal per
//! event, turn rate over the stimulus or forward speed over the next second.

use cyborg_core::sim::{measure_response, ResponseProfile, SpontaneousBehavior, StimulusClass};

fn main() {
    let model = ResponseProfile::default()
        .compile()
        .expect("default profile");
    let behavior = SpontaneousBehavior::default();
    let cases = [
        ("right antenna", StimulusClass::RightAntenna, 400),
        ("left antenna", StimulusClass::LeftAntenna, 400),
        ("cerci", StimulusClass::Cerci, 400),
        ("both antennae", StimulusClass::BothAntennae, 400),
        ("both antennae", StimulusClass::BothAntennae, 1200),
    ];
    for (i, (name, class, ms)) in cases.into_iter().enumerate() {
        let m = measure_response(&model, &behavior, class, ms, 1000, 100 + i as u64);
        let unit = if class.is_antenna_turn() {
            "deg/s"
        } else {
            "mm/s"
        };
        println!(
            "{name:>14} {ms:5} ms  {:?}  mean {:7.2} {unit}  sd {:6.2}  n {}",
            m.metric, m.mean, m.sd, m.n
        );
    }
}
