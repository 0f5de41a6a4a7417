//! Makespan metrics and the best/average/worst comparison used to judge a
//! recommended partitioning against the alternatives.

use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{Partitioning, Time};
use crate::gridsearch::SearchGrid;
use crate::num::{format_significant, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("times must be finite and strictly positive")]
    NonPositiveTime,
    #[error("every run in the sweep failed")]
    AllFailed,
}

fn check<T: Scalar>(t: T) -> Result<T, MetricsError> {
    if t.is_finite() && t > T::zero() {
        Ok(t)
    } else {
        Err(MetricsError::NonPositiveTime)
    }
}

/// How many times faster the recommended run is: `t_other / t_star`.
pub fn makespan_ratio<T: Scalar>(t_other: T, t_star: T) -> Result<T, MetricsError> {
    Ok(check(t_other)? / check(t_star)?)
}

/// Fraction of `t_other` saved by the recommended run: `(t_other - t_star) / t_other`.
/// Negative when the recommendation is slower.
pub fn makespan_reduction<T: Scalar>(t_other: T, t_star: T) -> Result<T, MetricsError> {
    let (o, s) = (check(t_other)?, check(t_star)?);
    Ok((o - s) / o)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MakespanComparison<T> {
    pub t_star: T,
    /// Finite runs of the sweep, in input order.
    pub times_other: Vec<(Partitioning, T)>,
    pub best_other: T,
    pub avg_other: T,
    pub worst_other: T,
    pub ratio_vs_best: T,
    pub ratio_vs_avg: T,
    pub ratio_vs_worst: T,
    pub reduction_vs_best: T,
    pub reduction_vs_avg: T,
    pub reduction_vs_worst: T,
}

/// Compares `t_star` with the finite runs of `sweep`. The sweep may include
/// the recommended partitioning itself, in which case `ratio_vs_best` can be
/// exactly 1, or below 1 when another partitioning was faster.
pub fn compare<T: Scalar>(t_star: T, sweep: &[(Partitioning, Time<T>)]) -> Result<MakespanComparison<T>, MetricsError> {
    check(t_star)?;
    let times_other: Vec<(Partitioning, T)> = sweep.iter().filter_map(|(p, t)| t.seconds().map(|s| (*p, s))).collect();
    if times_other.is_empty() {
        return Err(MetricsError::AllFailed);
    }
    let values = times_other.iter().map(|(_, t)| *t);
    let best_other = values.clone().fold(T::infinity(), T::min);
    let worst_other = values.clone().fold(T::neg_infinity(), T::max);
    // Mean over a sorted copy so the result does not depend on sweep order.
    let mut sorted: Vec<T> = values.collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    let avg_other = sorted.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(sorted.len() as u64);
    // Rounding can nudge a mean of identical values past its bounds.
    let avg_other = avg_other.max(best_other).min(worst_other);

    Ok(MakespanComparison {
        t_star,
        best_other,
        avg_other,
        worst_other,
        ratio_vs_best: makespan_ratio(best_other, t_star)?,
        ratio_vs_avg: makespan_ratio(avg_other, t_star)?,
        ratio_vs_worst: makespan_ratio(worst_other, t_star)?,
        reduction_vs_best: makespan_reduction(best_other, t_star)?,
        reduction_vs_avg: makespan_reduction(avg_other, t_star)?,
        reduction_vs_worst: makespan_reduction(worst_other, t_star)?,
        times_other,
    })
}

/// Means of each derived metric across several comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSummary<T> {
    pub count: usize,
    pub mean_ratio_vs_best: T,
    pub mean_ratio_vs_avg: T,
    pub mean_ratio_vs_worst: T,
    pub mean_reduction_vs_best: T,
    pub mean_reduction_vs_avg: T,
    pub mean_reduction_vs_worst: T,
}

pub fn summarize<T: Scalar>(comparisons: &[MakespanComparison<T>]) -> Option<ComparisonSummary<T>> {
    if comparisons.is_empty() {
        return None;
    }
    let n = T::from_count(comparisons.len() as u64);
    let mean = |f: fn(&MakespanComparison<T>) -> T| comparisons.iter().map(f).fold(T::zero(), |a, b| a + b) / n;
    Some(ComparisonSummary {
        count: comparisons.len(),
        mean_ratio_vs_best: mean(|c| c.ratio_vs_best),
        mean_ratio_vs_avg: mean(|c| c.ratio_vs_avg),
        mean_ratio_vs_worst: mean(|c| c.ratio_vs_worst),
        mean_reduction_vs_best: mean(|c| c.reduction_vs_best),
        mean_reduction_vs_avg: mean(|c| c.reduction_vs_avg),
        mean_reduction_vs_worst: mean(|c| c.reduction_vs_worst),
    })
}

/// Median of repeated measurements; `None` for an empty slice.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / (T::one() + T::one()) })
}

pub const HEATMAP_HEADER: &str = "p_r\tp_c\ttime\tpredicted\tbest";

/// Tab-separated table with one row per grid cell, for plotting elsewhere.
///
/// Only the first cell (row-major) whose partitioning matches `predicted`
/// gets the predicted flag, and likewise for `best`, so a grid where clamping
/// merged cells still has exactly one best row. Failed cells are never best.
pub fn export_heatmap<T: Scalar>(grid: &SearchGrid<T>, predicted: Partitioning, best: Partitioning) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    let (mut predicted_seen, mut best_seen) = (false, false);
    for cell in grid.all_cells() {
        let time = cell.time();
        let finite = time.is_some_and(|t| !t.is_failed());
        let is_pred = !predicted_seen && cell.partitioning == predicted;
        let is_best = !best_seen && finite && cell.partitioning == best;
        predicted_seen |= is_pred;
        best_seen |= is_best;
        let shown = match time {
            Some(Time::Finite(t)) => format_significant(t.to_f64_lossy(), 6),
            Some(Time::Failed) => crate::domain::FAILED_LITERAL.to_string(),
            None => "PENDING".to_string(),
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            cell.partitioning.p_r(),
            cell.partitioning.p_c(),
            shown,
            u8::from(is_pred),
            u8::from(is_best)
        )
        .expect("String write");
    }
    out
}
