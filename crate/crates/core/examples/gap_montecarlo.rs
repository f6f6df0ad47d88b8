//! Gap negotiation for the three board placements.

use cyborg_core::gap::{
    monte_carlo, required_clearance, required_lift_force, Arrangement, GapCalibration,
};

fn main() {
    let cal = GapCalibration::default();
    let lift = required_lift_force(&cal.shutter);
    println!(
        "shutter gap {} mm, lift force {:.3} N",
        cal.shutter.gap_height_mm, lift.newtons
    );
    for (i, a) in Arrangement::ALL.into_iter().enumerate() {
        let profile = cal.profile(a).unwrap();
        let run = monte_carlo(profile, &cal.shutter, 10_000, i as u64);
        let s = &run.summary;
        let ends: Vec<String> = s
            .histogram
            .iter()
            .map(|(k, v)| format!("{k} {v}"))
            .collect();
        println!(
            "{a:<10} clearance {:.1} mm  tunnel success {:.3} [{:.3}, {:.3}]  traversal {:.2} s  | {}",
            required_clearance(profile, &cal.shutter),
            s.tunnel_success_rate,
            s.tunnel_success_ci99.0,
            s.tunnel_success_ci99.1,
            s.traversal.mean_s,
            ends.join(", ")
        );
        println!("           e.g. {}", run.outcomes[0].path_string());
    }
}
