//! Group comparison report over gap Monte Carlo output.
//!
//! Tunnel attempts are scored as success (pass) or failure (stuck or explore)
//! and compared across arrangements with a chi-square test and Bonferroni
//! post-hoc pairs. Traversal times are compared with one-way ANOVA. The
//! published counts are analysed alongside the simulated ones.

use std::fmt::Write as _;
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    all_pairs, chi_square, chi_square_posthoc, descriptive, one_way_anova, ContingencyTable,
    Descriptive, StatsError, TestResult,
};
use crate::gap::TraversalTime;

pub const ALPHA: f64 = 0.01;

/// Published tunnel outcomes: (group, passes, failures). Implanted passes are 90% of 37.
pub const REFERENCE_TUNNEL_COUNTS: [(&str, u64, u64); 3] =
    [("intact", 74, 3), ("mounted", 24, 47), ("implanted", 33, 4)];

/// Passing trials per group behind the published traversal times.
pub const REFERENCE_TRAVERSAL_N: [(&str, usize); 3] =
    [("intact", 74), ("mounted", 13), ("implanted", 37)];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("malformed row {row}: {msg}")]
    Malformed { row: usize, msg: String },
}

/// One row of a `gap_trials_<profile>.csv` file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct GapTrialRow {
    pub trial: u64,
    pub terminal: String,
    pub tunnel_attempts: u64,
    pub tunnel_passes: u64,
    pub traversal_time_s: Option<f64>,
    pub path: String,
}

/// Reads trial rows, skipping `#` header lines.
pub fn read_gap_trials<R: Read>(input: R) -> Result<Vec<GapTrialRow>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: GapTrialRow = rec?;
        if row.tunnel_passes > row.tunnel_attempts {
            return Err(ReportError::Malformed {
                row: i + 1,
                msg: "more passes than attempts".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupData {
    pub label: String,
    pub tunnel_passes: u64,
    pub tunnel_failures: u64,
    pub traversal_times_s: Vec<f64>,
}

impl GroupData {
    pub fn from_rows(label: &str, rows: &[GapTrialRow]) -> Self {
        let attempts: u64 = rows.iter().map(|r| r.tunnel_attempts).sum();
        let passes: u64 = rows.iter().map(|r| r.tunnel_passes).sum();
        Self {
            label: label.to_string(),
            tunnel_passes: passes,
            tunnel_failures: attempts - passes,
            traversal_times_s: rows.iter().filter_map(|r| r.traversal_time_s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub table: ContingencyTable,
    pub omnibus: TestResult,
    pub posthoc: Vec<TestResult>,
}

pub fn compare_tunnel_success(groups: &[(String, u64, u64)]) -> Result<Comparison, StatsError> {
    let counts = groups.iter().map(|(_, s, f)| vec![*s, *f]).collect();
    let labels: Vec<&str> = groups.iter().map(|(l, _, _)| l.as_str()).collect();
    let table = ContingencyTable::new(counts)?.with_labels(&labels, &["success", "failure"]);
    let omnibus = chi_square(&table)?;
    let posthoc = chi_square_posthoc(&table, &all_pairs(table.rows()))?;
    Ok(Comparison {
        table,
        omnibus,
        posthoc,
    })
}

pub fn reference_comparison() -> Comparison {
    let groups: Vec<_> = REFERENCE_TUNNEL_COUNTS
        .iter()
        .map(|(l, s, f)| (l.to_string(), *s, *f))
        .collect();
    compare_tunnel_success(&groups).expect("reference table is well formed")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraversalComparison {
    pub descriptive: Vec<(String, Descriptive)>,
    pub anova_all: TestResult,
    /// ANOVA on the first passing trials of each group, sized like the published groups.
    pub anova_reference_sized: Option<TestResult>,
}

pub fn compare_traversal(groups: &[GroupData]) -> Result<TraversalComparison, StatsError> {
    let descriptive = groups
        .iter()
        .map(|g| Ok((g.label.clone(), descriptive(&g.traversal_times_s)?)))
        .collect::<Result<Vec<_>, StatsError>>()?;
    let all: Vec<Vec<f64>> = groups.iter().map(|g| g.traversal_times_s.clone()).collect();
    let anova_all = one_way_anova(&all)?;
    let sized: Option<Vec<Vec<f64>>> = groups
        .iter()
        .map(|g| {
            let n = REFERENCE_TRAVERSAL_N.iter().find(|(l, _)| *l == g.label)?.1;
            (g.traversal_times_s.len() >= n).then(|| g.traversal_times_s[..n].to_vec())
        })
        .collect();
    let anova_reference_sized = sized.map(|s| one_way_anova(&s)).transpose()?;
    Ok(TraversalComparison {
        descriptive,
        anova_all,
        anova_reference_sized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerCheck {
    pub replicates: u32,
    pub rejections: u32,
    pub alpha: f64,
    pub power: f64,
}

/// Fraction of synthetic data sets, drawn from the traversal distributions
/// with the given group sizes, in which ANOVA rejects at `alpha`.
pub fn traversal_anova_power(
    dists: &[TraversalTime],
    sizes: &[usize],
    replicates: u32,
    alpha: f64,
    seed: u64,
) -> Result<PowerCheck, StatsError> {
    let gammas: Vec<Gamma<f64>> = dists
        .iter()
        .map(|d| {
            let (k, theta) = d.gamma_params();
            Gamma::new(k, theta).map_err(|_| StatsError::NonFinite)
        })
        .collect::<Result<_, _>>()?;
    let mut rejections = 0;
    for r in 0..replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(r));
        let groups: Vec<Vec<f64>> = gammas
            .iter()
            .zip(sizes)
            .map(|(g, &n)| (0..n).map(|_| g.sample(&mut rng)).collect())
            .collect();
        if one_way_anova(&groups)?.p_value < alpha {
            rejections += 1;
        }
    }
    Ok(PowerCheck {
        replicates,
        rejections,
        alpha,
        power: f64::from(rejections) / f64::from(replicates.max(1)),
    })
}

/// Supplementary heart-rate table row. Values are kept exactly as published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartRateRow {
    pub animal: u32,
    pub survival_days: u32,
    pub alive: bool,
    pub pre_hz: Option<f64>,
    pub post_hz: Option<f64>,
}

impl HeartRateRow {
    /// Reading the value as seconds per beat, as the formula defines it.
    pub fn as_interval_rate_hz(v: f64) -> f64 {
        1.0 / v
    }

    /// Reading the value as beats per minute.
    pub fn as_bpm_rate_hz(v: f64) -> f64 {
        v / 60.0
    }
}

pub fn read_heart_rate_table<R: Read>(input: R) -> Result<Vec<HeartRateRow>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    rdr.deserialize()
        .map(|r| r.map_err(ReportError::from))
        .collect()
}

pub fn write_heart_rate_table<W: std::io::Write>(
    rows: &[HeartRateRow],
    out: W,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub alpha: f64,
    pub reference: Comparison,
    pub simulated: Option<Comparison>,
    pub traversal: Option<TraversalComparison>,
    pub heart_rate: Option<Vec<HeartRateRow>>,
}

pub fn build_report(
    groups: &[GroupData],
    heart: Option<Vec<HeartRateRow>>,
) -> Result<AnalysisReport, StatsError> {
    let (simulated, traversal) = if groups.len() >= 2 {
        let counts: Vec<_> = groups
            .iter()
            .map(|g| (g.label.clone(), g.tunnel_passes, g.tunnel_failures))
            .collect();
        let traversal = if groups.iter().all(|g| g.traversal_times_s.len() >= 2) {
            Some(compare_traversal(groups)?)
        } else {
            None
        };
        (Some(compare_tunnel_success(&counts)?), traversal)
    } else {
        (None, None)
    };
    Ok(AnalysisReport {
        alpha: ALPHA,
        reference: reference_comparison(),
        simulated,
        traversal,
        heart_rate: heart,
    })
}

fn verdict(p: f64) -> &'static str {
    if p < ALPHA {
        "significant"
    } else {
        "not significant"
    }
}

fn render_comparison(out: &mut String, title: &str, c: &Comparison) {
    let _ = writeln!(out, "{title}");
    for (label, row) in c.table.row_labels.iter().zip(&c.table.counts) {
        let n = row[0] + row[1];
        let _ = writeln!(
            out,
            "  {label:<10} success {:>7} failure {:>7} rate {:.4}",
            row[0],
            row[1],
            row[0] as f64 / n.max(1) as f64
        );
    }
    let o = &c.omnibus;
    let _ = writeln!(
        out,
        "  chi-square({}) = {:.4}, p = {:.4e} ({})",
        o.df1,
        o.statistic,
        o.p_value,
        verdict(o.p_value)
    );
    for r in &c.posthoc {
        let _ = writeln!(
            out,
            "  {:<24} chi-square = {:.4}, p = {:.4e}, bonferroni p = {:.4e} ({})",
            r.label.as_deref().unwrap_or("?"),
            r.statistic,
            r.p_value,
            r.effective_p(),
            verdict(r.effective_p())
        );
    }
}

pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Gap negotiation analysis (alpha = {})\n", report.alpha);
    render_comparison(&mut out, "Reference tunnel counts", &report.reference);
    if let Some(sim) = &report.simulated {
        out.push('\n');
        render_comparison(&mut out, "Simulated tunnel attempts", sim);
    }
    if let Some(t) = &report.traversal {
        let _ = writeln!(out, "\nTraversal time (s)");
        for (label, d) in &t.descriptive {
            let _ = writeln!(
                out,
                "  {label:<10} n {:>6} mean {:.3} sd {:.3} se {:.3}",
                d.n, d.mean, d.sd, d.se
            );
        }
        let a = &t.anova_all;
        let _ = writeln!(
            out,
            "  anova (all)        F({}, {}) = {:.4}, p = {:.4e}",
            a.df1,
            a.df2.unwrap_or(0),
            a.statistic,
            a.p_value
        );
        if let Some(a) = &t.anova_reference_sized {
            let _ = writeln!(
                out,
                "  anova (74/13/37)   F({}, {}) = {:.4}, p = {:.4e}",
                a.df1,
                a.df2.unwrap_or(0),
                a.statistic,
                a.p_value
            );
        }
    }
    if let Some(rows) = &report.heart_rate {
        let _ = writeln!(out, "\nHeart rate table (published values; unit ambiguous)");
        let _ = writeln!(
            out,
            "  animal days alive        pre       post   pre as s/beat -> Hz   pre as bpm -> Hz"
        );
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| x.to_string());
        for r in rows {
            let _ = writeln!(
                out,
                "  {:>6} {:>4} {:>5} {:>10} {:>10} {:>21} {:>18}",
                r.animal,
                r.survival_days,
                r.alive,
                fmt(r.pre_hz),
                fmt(r.post_hz),
                r.pre_hz.map_or("-".into(), |v| format!(
                    "{:.4}",
                    HeartRateRow::as_interval_rate_hz(v)
                )),
                r.pre_hz.map_or("-".into(), |v| format!(
                    "{:.4}",
                    HeartRateRow::as_bpm_rate_hz(v)
                )),
            );
        }
    }
    out
}
