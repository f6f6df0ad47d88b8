//! Two chambers joined by a slit under the shutter. The agent follows
//! waypoints to the slit, negotiates the gap, then heads for the target.

use cyborg_core::scenario::{summarize, ScenarioConfig};

fn main() {
    let scenario = ScenarioConfig::from_text(ScenarioConfig::concealed_toml())
        .and_then(ScenarioConfig::resolve)
        .expect("bundled scenario");
    let trials = scenario.run();
    for t in &trials {
        let through: Vec<_> = t.crossings.iter().map(|c| c.terminal.name()).collect();
        println!(
            "trial {:2}  {:?}  {:6.1} s  slit: {}",
            t.index,
            t.record.status,
            t.record.duration_s,
            through.join(", ")
        );
    }
    let s = summarize(&trials);
    println!(
        "success {}/{}  mean time {:?} s",
        s.successes, s.trials, s.mean_time_to_goal_s
    );
}
