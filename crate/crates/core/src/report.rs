//! Aggregation and acceptance-style evaluation: medians, confidence bands,
//! trend checks, and the criterion table assembled from experiment outputs.
//!
//! All evaluators are pure functions over in-memory series; the file-driven
//! entry point parses results directories produced by the runner and feeds
//! the same code paths.

use crate::error::{Error, Result};
use crate::output::parse_f64;
use std::collections::BTreeMap;
use std::path::Path;

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile of a copy-sorted slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of y against x.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// One row of the acceptance table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionRow {
    pub id: String,
    pub description: String,
    /// Convention: pass ⇔ measured ≤ threshold.
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CriterionRow {
    pub fn new(id: &str, description: &str, measured: f64, threshold: f64) -> Self {
        CriterionRow {
            id: id.to_string(),
            description: description.to_string(),
            measured,
            threshold,
            pass: measured <= threshold,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "criterion {:<3} {}  measured = {:+.6e}  threshold = {:+.6e}  [{}]",
            self.id,
            self.description,
            self.measured,
            self.threshold,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Per-seed energy-balance inputs at one output time.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BalanceRow {
    pub seed: u64,
    pub t: f64,
    pub n: usize,
    pub energy_mollified: f64,
    pub work: f64,
    pub martingale: f64,
}

/// mean[𝓔(t) + W(t) − 𝓔(0)] ≤ 3·SE at every output time (paired per seed).
/// Measured value: the worst normalized excess max_t (mean − 3 SE)/scale.
pub fn energy_balance_excess(rows: &[BalanceRow]) -> Result<f64> {
    let grouped = group_by_time(rows)?;
    let initial: BTreeMap<u64, f64> = grouped
        .values()
        .next()
        .ok_or_else(|| Error::InvalidInput("no balance rows".into()))?
        .iter()
        .map(|r| (r.seed, r.energy_mollified))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    // the t = 0 group is identically zero; skip it so the reported excess
    // reflects the dynamics
    for rows_at_t in grouped.values().skip(1) {
        let diffs: Vec<f64> = rows_at_t
            .iter()
            .map(|r| r.energy_mollified + r.work - initial[&r.seed])
            .collect();
        let (mean, se) = mean_se(&diffs);
        worst = worst.max(mean - 3.0 * se);
        scale = scale.max(rows_at_t[0].energy_mollified.abs());
    }
    Ok(worst / scale.max(1e-300))
}

/// mean[M_T² − 8N·W_T] ≤ 3·SE across seeds. Returns (excess/scale, ratio)
/// where ratio = mean M² / (8N·mean W) for transparency.
pub fn martingale_second_moment_excess(rows: &[BalanceRow], n: usize) -> Result<(f64, f64)> {
    let grouped = group_by_time(rows)?;
    let last = grouped
        .values()
        .last()
        .ok_or_else(|| Error::InvalidInput("no balance rows".into()))?;
    let diffs: Vec<f64> = last
        .iter()
        .map(|r| r.martingale * r.martingale - 8.0 * n as f64 * r.work)
        .collect();
    let (mean, se) = mean_se(&diffs);
    let m2_mean = mean_se(&last.iter().map(|r| r.martingale * r.martingale).collect::<Vec<_>>()).0;
    let w_mean = mean_se(&last.iter().map(|r| r.work).collect::<Vec<_>>()).0;
    let ratio = m2_mean / (8.0 * n as f64 * w_mean).max(1e-300);
    Ok(((mean - 3.0 * se) / m2_mean.max(1e-300), ratio))
}

fn group_by_time(rows: &[BalanceRow]) -> Result<BTreeMap<u64, Vec<BalanceRow>>> {
    let mut grouped: BTreeMap<u64, Vec<BalanceRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry(row.t.to_bits()).or_default().push(*row);
    }
    // keys are non-negative times: bit order equals numeric order
    Ok(grouped)
}

/// Paired successive differences of per-seed entropy series must be
/// ≤ 3·SE (non-increasing within estimator bands). Returns the worst
/// normalized excess.
pub fn entropy_trend_excess(series: &[Vec<(f64, f64)>]) -> Result<f64> {
    let len = series
        .first()
        .ok_or_else(|| Error::InvalidInput("no entropy series".into()))?
        .len();
    if len < 2 || series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidInput("entropy series mismatch".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut scale = 0.0f64;
    for k in 1..len {
        let diffs: Vec<f64> = series.iter().map(|s| s[k].1 - s[k - 1].1).collect();
        let (mean, se) = mean_se(&diffs);
        worst = worst.max(mean - 3.0 * se);
        scale = scale.max(series.iter().map(|s| s[k].1.abs()).fold(0.0, f64::max));
    }
    Ok(worst / scale.max(1e-300))
}

/// Slope of log median|K| against log N.
pub fn weakform_slope(points: &[(usize, f64)]) -> Result<f64> {
    let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (n, v) in points {
        grouped.entry(*n).or_default().push(v.abs());
    }
    if grouped.len() < 2 {
        return Err(Error::InvalidInput("need at least two N values".into()));
    }
    let xs: Vec<f64> = grouped.keys().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = grouped.values().map(|v| median(v).ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

/// Median |gap| per ε must be non-increasing as ε decreases. Returns the
/// worst ratio med(smaller ε)/med(larger ε) − 1 over adjacent ladder rungs
/// (pass ⇔ ≤ 0).
pub fn gap_trend_excess(points: &[(f64, f64)]) -> Result<f64> {
    let mut grouped: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for (eps, v) in points {
        grouped
            .entry(eps.to_bits())
            .or_insert((*eps, Vec::new()))
            .1
            .push(v.abs());
    }
    if grouped.len() < 2 {
        return Err(Error::InvalidInput("need at least two ε values".into()));
    }
    // ascending ε
    let medians: Vec<(f64, f64)> = grouped.values().map(|(e, v)| (*e, median(v))).collect();
    let mut worst = f64::NEG_INFINITY;
    for w in medians.windows(2) {
        // w[0] is the smaller ε: require med(w[0]) ≤ med(w[1])
        worst = worst.max(w[0].1 / w[1].1.max(1e-300) - 1.0);
    }
    Ok(worst)
}

/// Collision probabilities must be non-increasing as ε decreases, within
/// binomial bands. Input (ε, hits, trials); returns the worst excess of
/// p(smaller ε) − p(larger ε) − 3·SE_pooled.
pub fn noncollision_trend_excess(points: &[(f64, usize, usize)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("need at least two ε values".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0)); // ascending ε
    let mut worst = f64::NEG_INFINITY;
    for w in sorted.windows(2) {
        let (_, h_small, n_small) = w[0];
        let (_, h_large, n_large) = w[1];
        let p_small = h_small as f64 / n_small as f64;
        let p_large = h_large as f64 / n_large as f64;
        let pooled = (h_small + h_large) as f64 / (n_small + n_large) as f64;
        let se =
            (pooled * (1.0 - pooled) * (1.0 / n_small as f64 + 1.0 / n_large as f64)).sqrt();
        worst = worst.max(p_small - p_large - 3.0 * se);
    }
    Ok(worst)
}

/// Medians must strictly decrease along the N ladder. Returns the worst
/// ratio med(N_{k+1})/med(N_k) − 1 over adjacent rungs (pass ⇔ < 0).
pub fn ladder_decrease_excess(medians: &[(usize, f64)]) -> Result<f64> {
    if medians.len() < 2 {
        return Err(Error::InvalidInput("need at least two ladder points".into()));
    }
    let mut sorted = medians.to_vec();
    sorted.sort_by_key(|(n, _)| *n);
    let mut worst = f64::NEG_INFINITY;
    for w in sorted.windows(2) {
        worst = worst.max(w[1].1 / w[0].1.max(1e-300) - 1.0);
    }
    Ok(worst)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn summarize_values(group: &str, metric: &str, values: &[f64]) -> SummaryRow {
    SummaryRow {
        group: group.to_string(),
        metric: metric.to_string(),
        count: values.len(),
        median: median(values),
        q25: quantile(values, 0.25),
        q75: quantile(values, 0.75),
    }
}

// ── file-driven aggregation ─────────────────────────────────────────────

/// Parse the combined balance CSV written by the simulate experiment.
pub fn read_balance_csv(path: &Path) -> Result<Vec<BalanceRow>> {
    let lines = crate::output::read_lines(path)?;
    let mut rows = Vec::new();
    for line in lines.iter().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::InvalidInput(format!("bad balance row: {line}")));
        }
        rows.push(BalanceRow {
            seed: parse_f64(f[0]) as u64,
            t: parse_f64(f[1]),
            n: parse_f64(f[2]) as usize,
            energy_mollified: parse_f64(f[3]),
            work: parse_f64(f[4]),
            martingale: parse_f64(f[5]),
        });
    }
    Ok(rows)
}

/// Entropy series per seed from the diagnostics CSVs in a directory.
pub fn read_entropy_series(dir: &Path) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("diagnostics_seed") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    let mut series = Vec::new();
    for path in paths {
        let lines = crate::output::read_lines(&path)?;
        let mut s = Vec::new();
        for line in lines.iter().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() >= 4 {
                s.push((parse_f64(f[0]), parse_f64(f[3])));
            }
        }
        series.push(s);
    }
    Ok(series)
}

/// Rows of a weakform JSONL file as (n, dynamics ε, requested ε, value, gap).
pub struct WeakformRow {
    pub n: usize,
    pub dynamics_epsilon: f64,
    pub epsilon: Option<f64>,
    pub value: f64,
    pub gap: f64,
}

pub fn read_weakform_jsonl(path: &Path) -> Result<Vec<WeakformRow>> {
    let mut rows = Vec::new();
    for line in crate::output::read_lines(path)? {
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("bad jsonl: {e}")))?;
        rows.push(WeakformRow {
            n: v["n"].as_u64().unwrap_or(0) as usize,
            dynamics_epsilon: v["dynamics_epsilon"].as_f64().unwrap_or(f64::NAN),
            epsilon: v["epsilon"].as_f64(),
            value: v["value"].as_f64().unwrap_or(f64::NAN),
            gap: v["mollification_gap_part"].as_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}

/// Evaluate every ensemble-level criterion whose inputs exist in `dir`,
/// and aggregate summaries; writes summary.csv and acceptance.csv.
pub fn generate(dir: &Path) -> Result<(Vec<SummaryRow>, Vec<CriterionRow>)> {
    let mut summaries = Vec::new();
    let mut criteria = Vec::new();

    let balance_path = dir.join("balance.csv");
    if balance_path.exists() {
        let rows = read_balance_csv(&balance_path)?;
        if !rows.is_empty() {
            let n = rows[0].n;
            let excess = energy_balance_excess(&rows)?;
            criteria.push(CriterionRow::new(
                "3",
                "energy balance: mean[E(t)+W(t)-E(0)] <= 3SE at all outputs",
                excess,
                0.0,
            ));
            let (mexcess, ratio) = martingale_second_moment_excess(&rows, n)?;
            criteria.push(CriterionRow::new(
                "4",
                &format!("martingale second moment vs 8N*work (ratio {ratio:.3})"),
                mexcess,
                0.0,
            ));
            let finals: Vec<f64> = rows
                .iter()
                .map(|r| r.energy_mollified + r.work)
                .collect();
            summaries.push(summarize_values("balance", "energy_plus_work", &finals));
        }
    }

    let entropy_series = read_entropy_series(dir)?;
    if entropy_series.len() >= 2 && entropy_series[0].len() >= 2 {
        let excess = entropy_trend_excess(&entropy_series)?;
        criteria.push(CriterionRow::new(
            "5",
            "entropy trend: paired successive differences <= 3SE",
            excess,
            0.0,
        ));
        let terminal: Vec<f64> = entropy_series
            .iter()
            .filter_map(|s| s.last().map(|(_, h)| *h))
            .collect();
        summaries.push(summarize_values("entropy", "terminal", &terminal));
    }

    let weakform_path = dir.join("weakform.jsonl");
    if weakform_path.exists() {
        let rows = read_weakform_jsonl(&weakform_path)?;
        let mollified: Vec<&WeakformRow> = rows.iter().filter(|r| r.epsilon.is_some()).collect();
        let exact: Vec<&WeakformRow> = rows.iter().filter(|r| r.epsilon.is_none()).collect();
        let n_set: std::collections::BTreeSet<usize> = mollified.iter().map(|r| r.n).collect();
        let eps_set: std::collections::BTreeSet<u64> = mollified
            .iter()
            .map(|r| r.dynamics_epsilon.to_bits())
            .collect();
        if n_set.len() >= 2 && eps_set.len() == 1 {
            let points: Vec<(usize, f64)> = mollified.iter().map(|r| (r.n, r.value)).collect();
            let slope = weakform_slope(&points)?;
            criteria.push(CriterionRow::new(
                "8",
                "weak-form scaling: slope of log median|K| vs log N",
                slope,
                -0.3,
            ));
        }
        if eps_set.len() >= 2 && n_set.len() == 1 {
            let points: Vec<(f64, f64)> = exact
                .iter()
                .map(|r| (r.dynamics_epsilon, r.gap))
                .collect();
            let excess = gap_trend_excess(&points)?;
            criteria.push(CriterionRow::new(
                "9",
                "mollification gap: median|K - K_eps| non-increasing in eps",
                excess,
                0.0,
            ));
        }
        let abs_values: Vec<f64> = mollified.iter().map(|r| r.value.abs()).collect();
        if !abs_values.is_empty() {
            summaries.push(summarize_values("weakform", "abs_residual", &abs_values));
        }
    }

    let calibration_path = dir.join("calibration.csv");
    if calibration_path.exists() {
        let lines = crate::output::read_lines(&calibration_path)?;
        let mut worst = 0.0f64;
        for line in lines.iter().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() == 5 {
                let estimate = parse_f64(f[1]);
                let target = parse_f64(f[2]);
                let tol = parse_f64(f[3]);
                let err = if target != 0.0 {
                    ((estimate - target) / target).abs()
                } else {
                    estimate.abs()
                };
                worst = worst.max(err / tol);
            }
        }
        criteria.push(CriterionRow::new(
            "6",
            "estimator calibration: worst error over its tolerance",
            worst,
            1.0,
        ));
    }

    let noncollision_path = dir.join("noncollision.csv");
    if noncollision_path.exists() {
        let lines = crate::output::read_lines(&noncollision_path)?;
        let mut points = Vec::new();
        for line in lines.iter().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() >= 3 {
                points.push((
                    parse_f64(f[0]),
                    parse_f64(f[2]) as usize,
                    parse_f64(f[1]) as usize,
                ));
            }
        }
        if points.len() >= 2 {
            let excess = noncollision_trend_excess(&points)?;
            criteria.push(CriterionRow::new(
                "10",
                "collision probability non-increasing as eps decreases",
                excess,
                0.0,
            ));
        }
        let probs: Vec<f64> = points
            .iter()
            .map(|(_, h, n)| *h as f64 / *n as f64)
            .collect();
        if !probs.is_empty() {
            summaries.push(summarize_values("noncollision", "p_hat", &probs));
        }
    }

    let chaos_path = dir.join("chaos.jsonl");
    if chaos_path.exists() {
        let mut ks_points = Vec::new();
        let mut cov_points = Vec::new();
        for line in crate::output::read_lines(&chaos_path)? {
            let v: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidInput(format!("bad chaos jsonl: {e}")))?;
            let n = v["n"].as_u64().unwrap_or(0) as usize;
            ks_points.push((n, v["radial_ks"].as_f64().unwrap_or(f64::NAN)));
            let covs: Vec<f64> = v["pair_cov"]
                .as_array()
                .map(|arr| {
                    arr.iter()
                        .filter_map(|pair| pair[1].as_f64())
                        .map(f64::abs)
                        .collect()
                })
                .unwrap_or_default();
            if !covs.is_empty() {
                cov_points.push((n, median(&covs)));
            }
        }
        if ks_points.len() >= 2 {
            criteria.push(CriterionRow::new(
                "11a",
                "radial KS median strictly decreasing along the N ladder",
                ladder_decrease_excess(&ks_points)?,
                -1e-12,
            ));
            let (n_max, ks_at_max) = ks_points
                .iter()
                .max_by_key(|(n, _)| *n)
                .copied()
                .unwrap();
            let cap = 2.0 * 1.63 / (n_max as f64).sqrt() + 2e-3;
            criteria.push(CriterionRow::new(
                "11c",
                &format!("radial KS at N = {n_max} within 2x DKW + PDE allowance"),
                ks_at_max,
                cap,
            ));
        }
        if cov_points.len() >= 2 {
            criteria.push(CriterionRow::new(
                "11b",
                "median |pair covariance| strictly decreasing along the N ladder",
                ladder_decrease_excess(&cov_points)?,
                -1e-12,
            ));
        }
    }

    let summary_rows: Vec<Vec<f64>> = summaries
        .iter()
        .map(|s| vec![s.count as f64, s.median, s.q25, s.q75])
        .collect();
    let mut labeled = String::from("group,metric,count,median,q25,q75\n");
    for (s, row) in summaries.iter().zip(&summary_rows) {
        labeled.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.group,
            s.metric,
            row[0] as usize,
            crate::output::format_f64(row[1]),
            crate::output::format_f64(row[2]),
            crate::output::format_f64(row[3])
        ));
    }
    std::fs::write(dir.join("summary.csv"), labeled)?;

    let mut acceptance = String::from("id,description,measured,threshold,pass\n");
    for c in &criteria {
        acceptance.push_str(&format!(
            "{},{},{},{},{}\n",
            c.id,
            c.description.replace(',', ";"),
            crate::output::format_f64(c.measured),
            crate::output::format_f64(c.threshold),
            c.pass as u8
        ));
    }
    std::fs::write(dir.join("acceptance.csv"), acceptance)?;
    Ok((summaries, criteria))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_quantiles_known_values() {
        let values = [3.0, 1.0, 2.0];
        assert_eq!(median(&values), 2.0);
        let even = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&even), 2.5);
        assert_eq!(quantile(&even, 0.0), 1.0);
        assert_eq!(quantile(&even, 1.0), 4.0);
    }

    #[test]
    fn single_sample_bands_collapse() {
        let row = summarize_values("g", "m", &[7.25]);
        assert_eq!(row.median, 7.25);
        assert_eq!(row.q25, 7.25);
        assert_eq!(row.q75, 7.25);
        let (mean, se) = mean_se(&[7.25]);
        assert_eq!(mean, 7.25);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn slope_of_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -0.5 * x + 2.0).collect();
        assert!((least_squares_slope(&xs, &ys) + 0.5).abs() < 1e-14);
    }

    #[test]
    fn energy_balance_on_synthetic_rows() {
        // dissipative synthetic data: E decreases faster than W grows
        let mut rows = Vec::new();
        for seed in 0..4u64 {
            for (k, t) in [0.0, 0.1, 0.2].iter().enumerate() {
                rows.push(BalanceRow {
                    seed,
                    t: *t,
                    n: 64,
                    energy_mollified: 1.0 - 0.2 * k as f64 + 1e-3 * seed as f64,
                    work: 0.05 * k as f64,
                    martingale: 0.0,
                });
            }
        }
        let excess = energy_balance_excess(&rows).unwrap();
        assert!(excess <= 0.0, "excess {excess}");
        // violating rows: energy grows
        for row in rows.iter_mut() {
            row.energy_mollified += row.t * 10.0;
        }
        assert!(energy_balance_excess(&rows).unwrap() > 0.0);
    }

    #[test]
    fn ladder_and_gap_trends() {
        let decreasing = [(256usize, 0.1), (1024, 0.05), (4096, 0.02)];
        assert!(ladder_decrease_excess(&decreasing).unwrap() < 0.0);
        let flat = [(256usize, 0.1), (1024, 0.12), (4096, 0.02)];
        assert!(ladder_decrease_excess(&flat).unwrap() > 0.0);

        let gaps = [
            (0.2, 0.4),
            (0.2, 0.6),
            (0.1, 0.3),
            (0.1, 0.2),
            (0.05, 0.1),
            (0.05, 0.12),
        ];
        assert!(gap_trend_excess(&gaps).unwrap() <= 0.0);
    }

    #[test]
    fn noncollision_band_allows_noise() {
        // small increase within binomial bands passes, a gross one fails
        let ok = [(0.2, 28usize, 32usize), (0.1, 29, 32), (0.05, 5, 32)];
        assert!(noncollision_trend_excess(&ok).unwrap() <= 0.0);
        let bad = [(0.2, 2usize, 32usize), (0.1, 30, 32)];
        assert!(noncollision_trend_excess(&bad).unwrap() > 0.0);
    }

    #[test]
    fn weakform_slope_recovers_scaling() {
        let mut points = Vec::new();
        for &(n, base) in &[(256usize, 1.0 / 16.0), (1024, 1.0 / 32.0), (4096, 1.0 / 64.0)] {
            for j in 0..5 {
                points.push((n, base * (0.9 + 0.05 * j as f64)));
            }
        }
        let slope = weakform_slope(&points).unwrap();
        assert!((slope + 0.5).abs() < 0.01, "slope {slope}");
    }

    #[test]
    fn generate_covers_all_artifact_kinds() {
        let dir = std::env::temp_dir().join("mf_report_fixture");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let g = crate::output::format_f64;

        // balance.csv with dissipative synthetic rows, 8 seeds × 3 times
        let mut balance = String::from("seed,t,n,energy_mollified,work_integral,martingale\n");
        for seed in 0..8 {
            for (k, t) in [0.0, 0.1, 0.2].iter().enumerate() {
                let e = 1.0 - 0.2 * k as f64 + 1e-3 * seed as f64;
                let w = 0.05 * k as f64;
                let m = 0.01 * (seed as f64 - 3.5) * k as f64;
                balance.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    seed, g(*t), g(64.0), g(e), g(w), g(m)
                ));
            }
        }
        std::fs::write(dir.join("balance.csv"), balance).unwrap();

        // two diagnostics files with decreasing entropy
        for seed in 0..2 {
            let mut text = String::from(crate::stats::DiagnosticsRow::CSV_HEADER.to_string());
            text.push('\n');
            for (k, t) in [0.0, 0.1, 0.2].iter().enumerate() {
                let h = -4.0 - 0.1 * k as f64 + 1e-3 * seed as f64;
                text.push_str(&format!(
                    "{},{},{},{},nan,{},{},{}\n",
                    g(*t), g(0.02), g(0.02), g(h), g(3.0), g(0.1), g(0.0)
                ));
            }
            std::fs::write(dir.join(format!("diagnostics_seed{seed}.csv")), text).unwrap();
        }

        // weakform.jsonl: N ladder at one ε
        let mut jsonl = String::new();
        for (n, v) in [(256usize, 0.02), (1024, 0.01), (4096, 0.005)] {
            for j in 0..3 {
                jsonl.push_str(&format!(
                    "{{\"n\":{n},\"epsilon\":0.05,\"dynamics_epsilon\":0.05,\"t\":0.25,\"seed\":{j},\"phi\":\"b\",\"value\":{},\"ito_martingale_part\":{},\"mollification_gap_part\":0.0}}\n",
                    v * (1.0 + 0.1 * j as f64),
                    v
                ));
            }
        }
        std::fs::write(dir.join("weakform.jsonl"), jsonl).unwrap();

        // noncollision.csv with a monotone ladder
        let mut nc = String::from("epsilon,trials,hits,p_hat,se\n");
        for (eps, hits) in [(0.2, 30.0), (0.1, 14.0), (0.05, 3.0)] {
            nc.push_str(&format!(
                "{},{},{},{},{}\n",
                g(eps),
                g(32.0),
                g(hits),
                g(hits / 32.0),
                g(0.05)
            ));
        }
        std::fs::write(dir.join("noncollision.csv"), nc).unwrap();

        // chaos.jsonl across the ladder
        let mut cj = String::new();
        for (n, ks, cov) in [(256, 0.05, 2e-5), (1024, 0.03, 8e-6), (4096, 0.015, 2e-6)] {
            cj.push_str(&format!(
                "{{\"n\":{n},\"t\":0.25,\"radial_ks\":{ks},\"sliced_w1\":0.02,\"pair_cov\":[[\"b\",{cov}]],\"seeds_used\":16}}\n"
            ));
        }
        std::fs::write(dir.join("chaos.jsonl"), cj).unwrap();

        // calibration.csv, all passing
        std::fs::write(
            dir.join("calibration.csv"),
            format!(
                "name,estimate,target,tolerance,pass\nentropy_gaussian,{},{},{},1\n",
                g(-4.25),
                g(-4.2568),
                g(0.02)
            ),
        )
        .unwrap();

        let (summaries, criteria) = generate(&dir).unwrap();
        assert!(!summaries.is_empty());
        let ids: Vec<&str> = criteria.iter().map(|c| c.id.as_str()).collect();
        for id in ["3", "4", "5", "6", "8", "10", "11a", "11b", "11c"] {
            assert!(ids.contains(&id), "missing criterion {id}: {ids:?}");
        }
        assert!(criteria.iter().all(|c| c.pass), "{criteria:#?}");
        assert!(dir.join("summary.csv").exists());
        assert!(dir.join("acceptance.csv").exists());
    }
}
