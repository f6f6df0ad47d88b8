//! Closed-loop runs toward a target 1 m away, from random headings.

use cyborg_core::nav::{run_navigation, NavTarget, NavWorld, NavigationConfig, TrialStatus};
use cyborg_core::sim::{Pose, ResponseProfile};

fn main() {
    let model = ResponseProfile::default()
        .compile()
        .expect("default profile");
    let cfg = NavigationConfig::default();
    let target = NavTarget::new(1000.0, 0.0);
    let mut reached = 0;
    for seed in 0..20u64 {
        let heading = (seed as f64 * 137.5) % 360.0 - 180.0;
        let world = NavWorld::new(Pose::new(0.0, 0.0, heading), model.clone());
        let r = run_navigation(&world, &target, &cfg, seed);
        if r.status == TrialStatus::Success {
            reached += 1;
        }
        println!(
            "seed {seed:2}  start {heading:7.1} deg  {:?}  {:6.1} s  path {:6.0} mm  L {:2} R {:2} C {:2}",
            r.status, r.duration_s, r.path_length_mm, r.counts.left_antenna, r.counts.right_antenna, r.counts.cerci
        );
    }
    println!("{reached}/20 reached the 50 mm goal radius");
}
