//! Chi-square on the published tunnel counts, the same tests on simulated
//! trials, and how often a one-way ANOVA would detect the traversal difference.

use cyborg_core::gap::{monte_carlo, Arrangement, GapCalibration};
use cyborg_core::stats::report::{build_report, render_text, traversal_anova_power, GroupData};

fn main() {
    let cal = GapCalibration::default();
    let groups: Vec<GroupData> = Arrangement::ALL
        .iter()
        .map(|a| {
            let run = monte_carlo(cal.profile(*a).unwrap(), &cal.shutter, 300, 9);
            let passes: u64 = run
                .outcomes
                .iter()
                .map(|o| u64::from(o.tunnel_passes()))
                .sum();
            let attempts: u64 = run
                .outcomes
                .iter()
                .map(|o| u64::from(o.tunnel_attempts))
                .sum();
            GroupData {
                label: a.to_string(),
                tunnel_passes: passes,
                tunnel_failures: attempts - passes,
                traversal_times_s: run
                    .outcomes
                    .iter()
                    .filter_map(|o| o.traversal_time_s)
                    .collect(),
            }
        })
        .collect();
    let report = build_report(&groups, None).expect("well-formed groups");
    print!("{}", render_text(&report));

    let dists: Vec<_> = Arrangement::ALL
        .iter()
        .map(|a| cal.profile(*a).unwrap().traversal)
        .collect();
    let power = traversal_anova_power(&dists, &[74, 13, 37], 200, 0.01, 7).unwrap();
    println!(
        "ANOVA power at n = 74/13/37: {}/{} replicates reject at alpha {} ({:.3})",
        power.rejections, power.replicates, power.alpha, power.power
    );
}
