//! Aggregated rows and CSV serialization.

use std::io::Write;

use super::stats::{lower_quantile, tail_probability, TailEstimate};
use super::{Experiment, ReplicateRecord};
use crate::bounds::{corollary_rate, davis_kahan_bound, theorem1_bound, theorem2_bound};
use crate::error::{Error, Result};

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt)
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

pub const RECORD_CSV_HEADER: [&str; 18] = [
    "replicate_index",
    "n",
    "d",
    "d_prime",
    "selection_failed",
    "r_hat",
    "oracle_d",
    "oracle_dprime",
    "ratio",
    "rn_hat",
    "rn_population",
    "cross_hs_sq",
    "inner_op",
    "lambda_hat_dplus1",
    "event_ok",
    "tie",
    "lambda_hat_head",
    "error",
];

fn record_fields(r: &ReplicateRecord) -> Vec<String> {
    vec![
        r.replicate_index.to_string(),
        r.n.to_string(),
        r.d.to_string(),
        r.d_prime.to_string(),
        flag(r.selection_failed),
        fmt(r.r_hat),
        fmt(r.oracle_d),
        fmt(r.oracle_dprime),
        fmt(r.ratio),
        fmt(r.rn_hat),
        fmt(r.rn_population),
        fmt(r.cross_hs_sq),
        fmt(r.inner_op),
        fmt(r.lambda_hat_dplus1),
        flag(r.event_ok),
        flag(r.tie),
        r.lambda_hat_head
            .iter()
            .map(|x| fmt(*x))
            .collect::<Vec<_>>()
            .join(";"),
        r.error.clone().unwrap_or_default(),
    ]
}

fn write_table<W: Write>(
    w: W,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(w: W, records: &[ReplicateRecord]) -> Result<()> {
    write_table(w, &RECORD_CSV_HEADER, records.iter().map(record_fields))
}

/// Aggregate over the replicates of one `(n, d, t)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub d: usize,
    pub d_prime: usize,
    pub selection_failed: bool,
    pub t: f64,
    pub ok: usize,
    pub errors: usize,
    pub ties: usize,
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub q99_ratio: f64,
    /// `1 - exp(-t)`
    pub level: f64,
    pub ratio_at_level: f64,
    /// `thm1_bound / oracle_dprime`
    pub thm1_prefactor: f64,
    /// Frequency of `R(P_hat) > thm1_bound`.
    pub thm1_exceed: TailEstimate,
    pub event: TailEstimate,
    pub cross_mean: f64,
    pub cross_std_error: f64,
    /// `tr(Sigma_{d'}) * sum_{k>d'} lambda_k / n`
    pub cross_expected: Option<f64>,
}

impl SummaryRow {
    pub const CSV_HEADER: [&'static str; 26] = [
        "n",
        "d",
        "d_prime",
        "selection_failed",
        "t",
        "ok",
        "errors",
        "ties",
        "mean_ratio",
        "median_ratio",
        "q99_ratio",
        "level",
        "ratio_at_level",
        "thm1_prefactor",
        "thm1_exceed_x",
        "thm1_exceed_point",
        "thm1_exceed_ci_low",
        "thm1_exceed_ci_high",
        "event_x",
        "event_point",
        "event_ci_low",
        "event_ci_high",
        "trials",
        "cross_mean",
        "cross_expected",
        "cross_z",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.d.to_string(),
            self.d_prime.to_string(),
            flag(self.selection_failed),
            fmt(self.t),
            self.ok.to_string(),
            self.errors.to_string(),
            self.ties.to_string(),
            fmt(self.mean_ratio),
            fmt(self.median_ratio),
            fmt(self.q99_ratio),
            fmt(self.level),
            fmt(self.ratio_at_level),
            fmt(self.thm1_prefactor),
            self.thm1_exceed.successes.to_string(),
            fmt(self.thm1_exceed.point),
            fmt(self.thm1_exceed.ci_low),
            fmt(self.thm1_exceed.ci_high),
            self.event.successes.to_string(),
            fmt(self.event.point),
            fmt(self.event.ci_low),
            fmt(self.event.ci_high),
            self.event.trials.to_string(),
            fmt(self.cross_mean),
            fmt_opt(self.cross_expected),
            fmt_opt(self.cross_z()),
        ]
    }

    /// `(cross_mean - cross_expected) / standard error`; absent with no spread.
    pub fn cross_z(&self) -> Option<f64> {
        let e = self.cross_expected?;
        (self.cross_std_error > 0.0).then(|| (self.cross_mean - e) / self.cross_std_error)
    }
}

/// Splits records (ordered by `(n, d, replicate)`) into per-cell slices.
fn cells<'a>(
    exp: &Experiment,
    records: &'a [ReplicateRecord],
) -> Result<Vec<&'a [ReplicateRecord]>> {
    let reps = exp.config.replicates;
    let expected = exp.config.n.len() * exp.config.d.len() * reps;
    if records.len() != expected {
        return Err(Error::param(
            "records",
            format!("expected {expected} records, got {}", records.len()),
        ));
    }
    Ok(records.chunks(reps).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

pub fn summarize(exp: &Experiment, records: &[ReplicateRecord]) -> Result<Vec<SummaryRow>> {
    let cfg = &exp.config;
    let model = &exp.model;
    let mut rows = Vec::new();
    for cell in cells(exp, records)? {
        let head = &cell[0];
        let (n, d, dp) = (head.n, head.d, head.d_prime);
        let ok: Vec<&ReplicateRecord> = cell.iter().filter(|r| r.is_ok()).collect();
        if ok.is_empty() {
            continue;
        }
        let ratios: Vec<f64> = ok.iter().map(|r| r.ratio).collect();
        let cross: Vec<f64> = ok.iter().map(|r| r.cross_hs_sq).collect();
        let cross_expected = model
            .weighted_operator_stats(dp, d)
            .ok()
            .map(|s| s.trace * model.tail_sum(dp).unwrap_or(f64::NAN) / n as f64);
        let event = tail_probability(cell, |r| r.event_ok, cfg.confidence)?;
        for &t in &cfg.t {
            let thm1 = theorem1_bound(model, dp, d, n, t, &cfg.constants)?;
            let level = 1.0 - (-t).exp();
            rows.push(SummaryRow {
                n,
                d,
                d_prime: dp,
                selection_failed: head.selection_failed,
                t,
                ok: ok.len(),
                errors: cell.len() - ok.len(),
                ties: ok.iter().filter(|r| r.tie).count(),
                mean_ratio: mean(&ratios),
                median_ratio: lower_quantile(&ratios, 0.5)?,
                q99_ratio: lower_quantile(&ratios, 0.99)?,
                level,
                ratio_at_level: lower_quantile(&ratios, level)?,
                thm1_prefactor: thm1.bound / thm1.oracle,
                thm1_exceed: tail_probability(cell, |r| r.r_hat > thm1.bound, cfg.confidence)?,
                event,
                cross_mean: mean(&cross),
                cross_std_error: std_error(&cross),
                cross_expected,
            });
        }
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(w: W, rows: &[SummaryRow]) -> Result<()> {
    write_table(
        w,
        &SummaryRow::CSV_HEADER,
        rows.iter().map(SummaryRow::csv_fields),
    )
}

/// Bound comparison for one `(n, d, t)` cell: observed error against the
/// oracle, both theorem bounds, the Davis-Kahan comparator, and the decay-rate
/// envelope where the profile is parametric.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub d_prime: usize,
    pub selection_failed: bool,
    pub t: f64,
    pub ok: usize,
    pub oracle_d: f64,
    pub oracle_dprime: f64,
    pub r_hat_mean: f64,
    /// Lower quantile of `R(P_hat)` at level `1 - exp(-t)`.
    pub r_hat_at_level: f64,
    pub thm1_bound: f64,
    pub thm2_bound: Option<f64>,
    pub dk_excess: Option<f64>,
    pub dk_bound: Option<f64>,
    pub corollary_rate: Option<f64>,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 15] = [
        "n",
        "d",
        "d_prime",
        "selection_failed",
        "t",
        "ok",
        "oracle_d",
        "oracle_dprime",
        "r_hat_mean",
        "r_hat_at_level",
        "thm1_bound",
        "thm2_bound",
        "dk_excess",
        "dk_bound",
        "corollary_rate",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.d.to_string(),
            self.d_prime.to_string(),
            flag(self.selection_failed),
            fmt(self.t),
            self.ok.to_string(),
            fmt(self.oracle_d),
            fmt(self.oracle_dprime),
            fmt(self.r_hat_mean),
            fmt(self.r_hat_at_level),
            fmt(self.thm1_bound),
            fmt_opt(self.thm2_bound),
            fmt_opt(self.dk_excess),
            fmt_opt(self.dk_bound),
            fmt_opt(self.corollary_rate),
        ]
    }
}

pub fn sweep_rows(exp: &Experiment, records: &[ReplicateRecord]) -> Result<Vec<SweepRow>> {
    let cfg = &exp.config;
    let model = &exp.model;
    let mut rows = Vec::new();
    for cell in cells(exp, records)? {
        let head = &cell[0];
        let (n, d, dp) = (head.n, head.d, head.d_prime);
        let r_hat: Vec<f64> = cell.iter().filter(|r| r.is_ok()).map(|r| r.r_hat).collect();
        if r_hat.is_empty() {
            continue;
        }
        let rate = if model.profile().is_parametric() {
            Some(corollary_rate(model.profile(), d, &cfg.constants)?)
        } else {
            None
        };
        for &t in &cfg.t {
            let thm1 = theorem1_bound(model, dp, d, n, t, &cfg.constants)?;
            let dk = davis_kahan_bound(model, d, n, t, &cfg.constants).ok();
            rows.push(SweepRow {
                n,
                d,
                d_prime: dp,
                selection_failed: head.selection_failed,
                t,
                ok: r_hat.len(),
                oracle_d: model.tail_sum(d)?,
                oracle_dprime: thm1.oracle,
                r_hat_mean: mean(&r_hat),
                r_hat_at_level: lower_quantile(&r_hat, 1.0 - (-t).exp())?,
                thm1_bound: thm1.bound,
                thm2_bound: theorem2_bound(model, dp, d, n, t, &cfg.constants)
                    .ok()
                    .map(|r| r.bound),
                dk_excess: dk.map(|r| r.excess),
                dk_bound: dk.map(|r| r.bound),
                corollary_rate: rate,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    write_table(
        w,
        &SweepRow::CSV_HEADER,
        rows.iter().map(SweepRow::csv_fields),
    )
}
