//! Hypothesis tests and descriptive statistics used to compare arrangement groups.

pub mod report;
pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use special::{chi_square_sf, f_sf};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("table must be at least 2x2 with rectangular rows")]
    BadShape,
    #[error("table has an all-zero {0} (degenerate marginal)")]
    DegenerateTable(&'static str),
    #[error("need at least {needed} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("pair ({0}, {1}) does not index two distinct rows")]
    BadPair(usize, usize),
    #[error("non-finite sample value")]
    NonFinite,
    #[error("beat times must be non-decreasing")]
    UnorderedBeats,
}

/// Rows are groups, columns are outcome categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        if rows < 2 || cols < 2 || counts.iter().any(|r| r.len() != cols) {
            return Err(StatsError::BadShape);
        }
        Ok(Self {
            row_labels: (0..rows).map(|i| format!("row{i}")).collect(),
            col_labels: (0..cols).map(|j| format!("col{j}")).collect(),
            counts,
        })
    }

    pub fn with_labels(mut self, rows: &[&str], cols: &[&str]) -> Self {
        if rows.len() == self.counts.len() {
            self.row_labels = rows.iter().map(|s| s.to_string()).collect();
        }
        if cols.len() == self.counts[0].len() {
            self.col_labels = cols.iter().map(|s| s.to_string()).collect();
        }
        self
    }

    pub fn rows(&self) -> usize {
        self.counts.len()
    }

    pub fn cols(&self) -> usize {
        self.counts[0].len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Table restricted to two rows.
    pub fn sub_rows(&self, a: usize, b: usize) -> Result<Self, StatsError> {
        if a == b || a >= self.rows() || b >= self.rows() {
            return Err(StatsError::BadPair(a, b));
        }
        Ok(Self {
            counts: vec![self.counts[a].clone(), self.counts[b].clone()],
            row_labels: vec![self.row_labels[a].clone(), self.row_labels[b].clone()],
            col_labels: self.col_labels.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub df1: u32,
    /// Denominator degrees of freedom, for F tests.
    pub df2: Option<u32>,
    pub p_value: f64,
    /// Multiplicity-corrected p-value, when part of a family of comparisons.
    pub adjusted_p_value: Option<f64>,
    pub label: Option<String>,
    pub flag: Option<String>,
}

impl TestResult {
    /// The p-value to compare against a significance level.
    pub fn effective_p(&self) -> f64 {
        self.adjusted_p_value.unwrap_or(self.p_value)
    }
}

/// Pearson chi-square test of independence (no continuity correction).
pub fn chi_square(table: &ContingencyTable) -> Result<TestResult, StatsError> {
    let row_sums: Vec<f64> = table
        .counts
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64)
        .collect();
    let col_sums: Vec<f64> = (0..table.cols())
        .map(|j| table.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row_sums.contains(&0.0) {
        return Err(StatsError::DegenerateTable("row"));
    }
    if col_sums.contains(&0.0) {
        return Err(StatsError::DegenerateTable("column"));
    }
    let total: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / total;
            let d = obs as f64 - expected;
            statistic += d * d / expected;
        }
    }
    let df = ((table.rows() - 1) * (table.cols() - 1)) as u32;
    Ok(TestResult {
        method: "pearson-chi-square".into(),
        statistic,
        df1: df,
        df2: None,
        p_value: chi_square_sf(statistic, f64::from(df)).clamp(0.0, 1.0),
        adjusted_p_value: None,
        label: None,
        flag: None,
    })
}

/// Pairwise chi-square between row pairs with Bonferroni adjustment.
pub fn chi_square_posthoc(
    table: &ContingencyTable,
    pairs: &[(usize, usize)],
) -> Result<Vec<TestResult>, StatsError> {
    let m = pairs.len() as f64;
    pairs
        .iter()
        .map(|&(a, b)| {
            let sub = table.sub_rows(a, b)?;
            let mut r = chi_square(&sub)?;
            r.adjusted_p_value = Some((r.p_value * m).min(1.0));
            r.method = "pearson-chi-square-bonferroni".into();
            r.label = Some(format!("{} vs {}", sub.row_labels[0], sub.row_labels[1]));
            Ok(r)
        })
        .collect()
}

/// All unordered row pairs, in lexicographic order.
pub fn all_pairs(rows: usize) -> Vec<(usize, usize)> {
    (0..rows)
        .flat_map(|a| (a + 1..rows).map(move |b| (a, b)))
        .collect()
}

/// Fixed-effect one-way ANOVA.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<TestResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::InsufficientData {
            what: "groups",
            needed: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::InsufficientData {
                what: "samples per group",
                needed: 2,
                got: g.len(),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
    }
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .collect();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let df1 = (k - 1) as u32;
    let df2 = (n - k) as u32;
    let ms_between = ss_between / f64::from(df1);
    let ms_within = ss_within / f64::from(df2);
    // Relative scale check: identical means can leave rounding-level ss_between.
    let scale = groups
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let between_zero = ss_between <= scale * 1e-24;
    let (statistic, p_value, flag) = if ms_within <= scale * 1e-28 {
        if between_zero {
            (
                0.0,
                1.0,
                Some("zero variance within and between groups".to_string()),
            )
        } else {
            (
                f64::INFINITY,
                0.0,
                Some("zero within-group variance with unequal means".to_string()),
            )
        }
    } else if between_zero {
        (0.0, 1.0, None)
    } else {
        let f = ms_between / ms_within;
        (
            f,
            f_sf(f, f64::from(df1), f64::from(df2)).clamp(0.0, 1.0),
            None,
        )
    };
    Ok(TestResult {
        method: "one-way-anova".into(),
        statistic,
        df1,
        df2: Some(df2),
        p_value,
        adjusted_p_value: None,
        label: None,
        flag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Sample SD (n − 1 denominator); 0 when n == 1.
    pub sd: f64,
    pub se: f64,
    /// False when n == 1 and the SD is undefined.
    pub sd_defined: bool,
}

pub fn descriptive(samples: &[f64]) -> Result<Descriptive, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::InsufficientData {
            what: "samples",
            needed: 1,
            got: 0,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Descriptive {
            n,
            mean,
            sd: 0.0,
            se: 0.0,
            sd_defined: false,
        });
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Ok(Descriptive {
        n,
        mean,
        sd,
        se: sd / (n as f64).sqrt(),
        sd_defined: true,
    })
}

/// Heart-rate figure as literally defined (mean inter-beat interval), plus its reciprocal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRate {
    pub beats: usize,
    /// (t_last − t_first) / (n − 1), seconds per beat.
    pub interval_s: f64,
    /// 1 / interval, beats per second.
    pub rate_hz: f64,
}

pub fn heart_rate(beat_times_s: &[f64]) -> Result<HeartRate, StatsError> {
    let n = beat_times_s.len();
    if n < 2 {
        return Err(StatsError::InsufficientData {
            what: "beats",
            needed: 2,
            got: n,
        });
    }
    if beat_times_s.iter().any(|t| !t.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if beat_times_s.windows(2).any(|w| w[1] < w[0]) {
        return Err(StatsError::UnorderedBeats);
    }
    let interval_s = (beat_times_s[n - 1] - beat_times_s[0]) / (n - 1) as f64;
    Ok(HeartRate {
        beats: n,
        interval_s,
        rate_hz: 1.0 / interval_s,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided z for 99% coverage.
pub const Z_99: f64 = 2.575_829_303_548_901;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_give_zero_statistic() {
        let t = ContingencyTable::new(vec![vec![10, 20], vec![5, 10]]).unwrap();
        let r = chi_square(&t).unwrap();
        assert!(r.statistic.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert_eq!(r.df1, 1);
    }

    #[test]
    fn degenerate_marginals() {
        let t = ContingencyTable::new(vec![vec![0, 0], vec![5, 10]]).unwrap();
        assert_eq!(chi_square(&t), Err(StatsError::DegenerateTable("row")));
        let t = ContingencyTable::new(vec![vec![3, 0], vec![5, 0]]).unwrap();
        assert_eq!(chi_square(&t), Err(StatsError::DegenerateTable("column")));
        assert_eq!(
            ContingencyTable::new(vec![vec![1, 2]]),
            Err(StatsError::BadShape)
        );
        assert_eq!(
            ContingencyTable::new(vec![vec![1, 2], vec![1]]),
            Err(StatsError::BadShape)
        );
    }

    #[test]
    fn posthoc_bonferroni() {
        let t = ContingencyTable::new(vec![vec![74, 3], vec![24, 47]]).unwrap();
        let one = chi_square_posthoc(&t, &[(0, 1)]).unwrap();
        assert_eq!(one[0].adjusted_p_value, Some(one[0].p_value));

        let t = ContingencyTable::new(vec![vec![20, 10], vec![15, 15], vec![20, 10], vec![15, 15]])
            .unwrap();
        let res = chi_square_posthoc(&t, &[(0, 1), (2, 3), (0, 3)]).unwrap();
        for r in &res {
            assert_eq!(r.adjusted_p_value, Some((3.0 * r.p_value).min(1.0)));
        }
        assert_eq!(res[0].p_value, res[1].p_value);
        assert!(chi_square_posthoc(&t, &[(1, 1)]).is_err());
    }

    #[test]
    fn anova_trivial_cases() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.df1, r.df2), (1, Some(4)));
        let r = one_way_anova(&[vec![2.0, 2.0], vec![5.0, 5.0]]).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(r.flag.is_some());
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn anova_hand_computed() {
        // Means 2, 5; grand 3.5; SSB = 3*2.25*2 = 13.5; SSW = 2 + 2 = 4; F = 13.5 / (4/4) = 13.5
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((r.statistic - 13.5).abs() < 1e-12);
    }

    #[test]
    fn descriptive_cases() {
        let d = descriptive(&[5.0]).unwrap();
        assert_eq!((d.mean, d.sd, d.se, d.sd_defined), (5.0, 0.0, 0.0, false));
        let d = descriptive(&[1.0; 4]).unwrap();
        assert_eq!((d.mean, d.sd, d.se), (1.0, 0.0, 0.0));
        let d = descriptive(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(d.mean, 5.0);
        // sum of squares 32, /7
        assert!((d.sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert!((d.sd - 2.138).abs() < 5e-4);
        assert!((d.se - 0.756).abs() < 5e-4);
        assert!(descriptive(&[]).is_err());
    }

    #[test]
    fn heart_rate_formula() {
        let beats: Vec<f64> = (0..60).map(f64::from).collect();
        let h = heart_rate(&beats).unwrap();
        assert_eq!((h.interval_s, h.rate_hz), (1.0, 1.0));
        assert_eq!(heart_rate(&[0.0, 2.0]).unwrap().interval_s, 2.0);
        assert!(heart_rate(&[1.0]).is_err());
        assert_eq!(heart_rate(&[2.0, 1.0]), Err(StatsError::UnorderedBeats));
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(50, 100, Z_99);
        assert!(lo < 0.5 && hi > 0.5);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert_eq!(wilson_interval(0, 0, Z_99), (0.0, 1.0));
    }
}
