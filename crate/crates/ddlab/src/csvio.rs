//! CSV schemas shared by the sweep artifacts and the command-line surface.
//!
//! Floating-point fields are serialized with 17 significant digits so that
//! `parse(emit(x)) == x` holds bit-for-bit and determinism checks can compare
//! raw bytes.

use crate::analysis::{AggregatePoint, AggregateSeries, PhaseReport};
use crate::error::{Error, Result};
use crate::sweep::{MetricRow, MetricSeries};

pub const METRICS_HEADER: &str =
    "episode,entropy,return,success,steps,value_loss,policy_loss,total_loss";
pub const AGGREGATE_HEADER: &str = "arch,episode,mean,ci_low,ci_high,n_runs";
pub const SEGMENTS_HEADER: &str = "arch,kind,start_episode,end_episode,start_value,end_value";

/// 17-significant-digit scientific notation; round-trips every finite f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, path: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::parse(path, format!("line {line}: bad float {field:?}")))
}

fn parse_usize(field: &str, path: &str, line: usize) -> Result<usize> {
    field
        .parse::<usize>()
        .map_err(|_| Error::parse(path, format!("line {line}: bad integer {field:?}")))
}

pub fn write_metrics(series: &MetricSeries) -> String {
    let mut out = String::with_capacity(series.rows.len() * 96 + 64);
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in &series.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.episode,
            format_f64(r.entropy),
            format_f64(r.ret),
            u8::from(r.success),
            r.steps,
            format_f64(r.value_loss),
            format_f64(r.policy_loss),
            format_f64(r.total_loss),
        ));
    }
    out
}

pub fn parse_metrics(text: &str, path: &str) -> Result<MetricSeries> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        other => {
            return Err(Error::parse(
                path,
                format!("bad metrics header: {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                path,
                format!("line {line_no}: expected 8 fields, got {}", fields.len()),
            ));
        }
        let success = match fields[3] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    path,
                    format!("line {line_no}: bad success flag {other:?}"),
                ))
            }
        };
        rows.push(MetricRow {
            episode: parse_usize(fields[0], path, line_no)?,
            entropy: parse_f64(fields[1], path, line_no)?,
            ret: parse_f64(fields[2], path, line_no)?,
            success,
            steps: parse_usize(fields[4], path, line_no)?,
            value_loss: parse_f64(fields[5], path, line_no)?,
            policy_loss: parse_f64(fields[6], path, line_no)?,
            total_loss: parse_f64(fields[7], path, line_no)?,
        });
    }
    for (i, r) in rows.iter().enumerate() {
        if r.episode != i + 1 {
            return Err(Error::parse(
                path,
                format!("episode indices not contiguous from 1 at row {}", i + 1),
            ));
        }
    }
    Ok(MetricSeries { rows })
}

/// Emits one or more aggregate series into a single CSV; rows are grouped by
/// architecture in the order given, with 1-based episode indices.
pub fn write_aggregates(series: &[AggregateSeries]) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for agg in series {
        for (i, p) in agg.points.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                agg.label,
                i + 1,
                format_f64(p.mean),
                format_f64(p.ci_low),
                format_f64(p.ci_high),
                agg.n_runs,
            ));
        }
    }
    out
}

pub fn parse_aggregates(text: &str, path: &str) -> Result<Vec<AggregateSeries>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == AGGREGATE_HEADER => {}
        other => {
            return Err(Error::parse(
                path,
                format!("bad aggregate header: {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut series: Vec<AggregateSeries> = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                format!("line {line_no}: expected 6 fields, got {}", fields.len()),
            ));
        }
        let label = fields[0];
        let episode = parse_usize(fields[1], path, line_no)?;
        let point = AggregatePoint {
            mean: parse_f64(fields[2], path, line_no)?,
            ci_low: parse_f64(fields[3], path, line_no)?,
            ci_high: parse_f64(fields[4], path, line_no)?,
        };
        let n_runs = parse_usize(fields[5], path, line_no)?;
        match series.last_mut() {
            Some(last) if last.label == label => {
                if episode != last.points.len() + 1 {
                    return Err(Error::parse(
                        path,
                        format!("line {line_no}: episode {episode} out of order for {label}"),
                    ));
                }
                if n_runs != last.n_runs {
                    return Err(Error::parse(
                        path,
                        format!("line {line_no}: inconsistent n_runs for {label}"),
                    ));
                }
                last.points.push(point);
            }
            _ => {
                if series.iter().any(|s| s.label == label) {
                    return Err(Error::parse(
                        path,
                        format!("line {line_no}: rows for {label} are not contiguous"),
                    ));
                }
                if episode != 1 {
                    return Err(Error::parse(
                        path,
                        format!("line {line_no}: {label} does not start at episode 1"),
                    ));
                }
                series.push(AggregateSeries {
                    label: label.to_string(),
                    points: vec![point],
                    n_runs,
                });
            }
        }
    }
    if series.is_empty() {
        return Err(Error::parse(path, "no aggregate rows"));
    }
    Ok(series)
}

/// Emits phase segments for one or more architectures, with segment
/// boundaries mapped to 1-based episode numbers.
pub fn write_segments(reports: &[(String, PhaseReport)]) -> String {
    let mut out = String::new();
    out.push_str(SEGMENTS_HEADER);
    out.push('\n');
    for (label, report) in reports {
        for s in &report.segments {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                label,
                s.kind.label(),
                s.start + 1,
                s.end + 1,
                format_f64(s.start_value),
                format_f64(s.end_value),
            ));
        }
    }
    out
}
