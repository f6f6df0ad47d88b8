//! Parallel, order-independent Monte Carlo over gap trials.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    run_gap_trial, Arrangement, ArrangementProfile, GapOutcome, NegotiationState, ShutterModel,
};
use crate::stats::{wilson_interval, Z_99};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraversalStats {
    pub n: u64,
    pub mean_s: f64,
    pub sd_s: f64,
    pub se_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSummary {
    pub profile: Option<Arrangement>,
    pub trials: u64,
    pub seed: u64,
    pub histogram: BTreeMap<NegotiationState, u64>,
    pub tunnel_attempts: u64,
    pub tunnel_passes: u64,
    pub tunnel_success_rate: f64,
    /// 99% Wilson interval on the tunnel success rate.
    pub tunnel_success_ci99: (f64, f64),
    pub contact_to_tunnel: u64,
    pub traversal: TraversalStats,
    /// Edge counts keyed "from>to".
    pub edges: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub summary: GapSummary,
    pub outcomes: Vec<GapOutcome>,
}

/// Runs `n` trials; trial `i` uses stream `i` of `seed`, so results do not
/// depend on thread scheduling.
pub fn monte_carlo(
    profile: &ArrangementProfile,
    shutter: &ShutterModel,
    n: u64,
    seed: u64,
) -> MonteCarloRun {
    let outcomes: Vec<GapOutcome> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            run_gap_trial(profile, shutter, &mut rng)
        })
        .collect();
    let summary = summarize(profile.name, seed, &outcomes);
    MonteCarloRun { summary, outcomes }
}

pub fn summarize(profile: Option<Arrangement>, seed: u64, outcomes: &[GapOutcome]) -> GapSummary {
    let mut histogram: BTreeMap<NegotiationState, u64> =
        NegotiationState::TERMINAL.iter().map(|s| (*s, 0)).collect();
    let mut edges = BTreeMap::new();
    let mut attempts = 0u64;
    let mut passes = 0u64;
    let mut contact_to_tunnel = 0u64;
    let mut times = Vec::new();
    for o in outcomes {
        *histogram.entry(o.terminal).or_default() += 1;
        attempts += u64::from(o.tunnel_attempts);
        passes += u64::from(o.tunnel_passes());
        if o.path.get(1) == Some(&NegotiationState::Tunnel) {
            contact_to_tunnel += 1;
        }
        for w in o.path.windows(2) {
            *edges.entry(format!("{}>{}", w[0], w[1])).or_default() += 1;
        }
        if let Some(t) = o.traversal_time_s {
            times.push(t);
        }
    }
    let nt = times.len() as f64;
    let mean = if times.is_empty() {
        f64::NAN
    } else {
        times.iter().sum::<f64>() / nt
    };
    let sd = if times.len() > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (nt - 1.0)).sqrt()
    } else {
        0.0
    };
    GapSummary {
        profile,
        trials: outcomes.len() as u64,
        seed,
        histogram,
        tunnel_attempts: attempts,
        tunnel_passes: passes,
        tunnel_success_rate: if attempts == 0 {
            0.0
        } else {
            passes as f64 / attempts as f64
        },
        tunnel_success_ci99: wilson_interval(passes, attempts, Z_99),
        contact_to_tunnel,
        traversal: TraversalStats {
            n: times.len() as u64,
            mean_s: mean,
            sd_s: sd,
            se_s: if nt > 0.0 { sd / nt.sqrt() } else { 0.0 },
        },
        edges,
    }
}

pub fn write_trials_csv<W: Write>(outcomes: &[GapOutcome], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial",
        "terminal",
        "tunnel_attempts",
        "tunnel_passes",
        "traversal_time_s",
        "path",
    ])?;
    for (i, o) in outcomes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            o.terminal.to_string(),
            o.tunnel_attempts.to_string(),
            o.tunnel_passes().to_string(),
            o.traversal_time_s
                .map_or(String::new(), |t| format!("{t:.6}")),
            o.path_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(summary: &GapSummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["terminal", "count"])?;
    for (s, c) in &summary.histogram {
        w.write_record([s.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_edges_csv<W: Write>(summary: &GapSummary, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["from", "to", "count"])?;
    for (edge, c) in &summary.edges {
        let (from, to) = edge.split_once('>').unwrap_or((edge, ""));
        w.write_record([from, to, &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
