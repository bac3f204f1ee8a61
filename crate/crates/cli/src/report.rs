//! CSV artifacts: per-point metric reports, the plot-ready long-format
//! sweep table, the per-net satisfaction table, and seed-aggregated
//! summaries.
//!
//! Two different guarantees apply. Per-point reports reload losslessly
//! (`parse_point_csv(point_csv(r)) == r`, including float bits) but carry
//! wall times, so reruns are value-identical rather than byte-identical.
//! The sweep, table, and summary CSVs carry no time columns and are sorted
//! deterministically, so identical config + seed reproduces them byte for
//! byte in single-worker mode.

use robnet_core::metrics::{MetricKind, MetricReport, PointRecord};
use robnet_core::properties::{PropertySpec, Robustness};
use thiserror::Error;

use crate::config::PropertyFile;
use crate::{fmt_f64, to_json_17};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

fn parse_err(line: usize, reason: impl Into<String>) -> ReportError {
    ReportError::Parse { line, reason: reason.into() }
}

/// Short human-readable property label for table keys: kind plus its
/// parameters, epsilon excluded (it gets its own column). Non-default
/// metrics are appended so distinct properties never collide.
pub fn property_label(spec: &PropertySpec) -> String {
    let mut label = match spec.robustness {
        Robustness::Standard { delta } => format!("sr(delta={delta})"),
        Robustness::Classification => String::from("cr"),
        Robustness::StrongClassification { eta, probability } => {
            if probability {
                format!("scr(eta={eta},prob)")
            } else {
                format!("scr(eta={eta})")
            }
        }
        Robustness::Lipschitz { lipschitz } => format!("lr(L={lipschitz})"),
    };
    let (inm, outm) = (spec.in_metric.name(), spec.out_metric.name());
    if inm != "linf" || outm != "linf" {
        label.push_str(&format!("[in={inm},out={outm}]"));
    }
    label
}

fn verdict_name(score: Option<f64>) -> &'static str {
    match score {
        None => "timeout",
        Some(s) if s >= 1.0 => "holds",
        Some(_) => "violated",
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Serializes a metric report: one metadata comment line, the column
/// header, then one row per dataset point. The trailing `score` column
/// (fraction of satisfying samples; empty on timeout) is what makes the
/// accuracy metric reload losslessly; `verdict` alone would truncate it.
pub fn point_csv(report: &MetricReport) -> String {
    let property = to_json_17(&PropertyFile::from_spec(&report.spec));
    let mut out = format!(
        "# metric={} seed={} wall_ms={} property={}\n",
        report.metric.name(),
        report.seed,
        report.wall_ms,
        property
    );
    out.push_str("point_index,verdict,margin_or_bound,time_ms,score\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.index,
            verdict_name(p.score),
            opt_f64(p.margin),
            p.time_ms,
            opt_f64(p.score),
        ));
    }
    out
}

fn parse_metric_kind(name: &str) -> Option<MetricKind> {
    match name {
        "satisfaction" => Some(MetricKind::Satisfaction),
        "security" => Some(MetricKind::Security),
        "accuracy" => Some(MetricKind::Accuracy),
        _ => None,
    }
}

fn parse_opt_f64(field: &str, line: usize, what: &str) -> Result<Option<f64>, ReportError> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(Some)
        .map_err(|_| parse_err(line, format!("{what} \"{field}\" is not a float")))
}

/// Inverse of [`point_csv`]. The reconstructed report compares equal to the
/// original, float bits included.
pub fn parse_point_csv(text: &str) -> Result<MetricReport, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, meta) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "expected a `# metric=...` metadata line"))?;

    let mut metric = None;
    let mut seed = None;
    let mut wall_ms = None;
    let mut spec = None;
    let mut rest = meta;
    while !rest.is_empty() {
        let (key, after) = rest
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("metadata fragment \"{rest}\" is not key=value")))?;
        match key {
            // The property value is JSON and may contain spaces inside
            // strings in principle, so it must come last and takes the rest.
            "property" => {
                let file: PropertyFile = serde_json::from_str(after)
                    .map_err(|e| parse_err(1, format!("property metadata: {e}")))?;
                spec = Some(file.to_spec().map_err(|e| parse_err(1, e.to_string()))?);
                rest = "";
            }
            _ => {
                let (value, tail) = after.split_once(' ').unwrap_or((after, ""));
                match key {
                    "metric" => {
                        metric = Some(parse_metric_kind(value).ok_or_else(|| {
                            parse_err(1, format!("unknown metric \"{value}\""))
                        })?)
                    }
                    "seed" => {
                        seed = Some(value.parse::<u64>().map_err(|_| {
                            parse_err(1, format!("seed \"{value}\" is not an integer"))
                        })?)
                    }
                    "wall_ms" => {
                        wall_ms = Some(value.parse::<u64>().map_err(|_| {
                            parse_err(1, format!("wall_ms \"{value}\" is not an integer"))
                        })?)
                    }
                    other => return Err(parse_err(1, format!("unknown metadata key \"{other}\""))),
                }
                rest = tail;
            }
        }
    }
    let metric = metric.ok_or_else(|| parse_err(1, "missing metric"))?;
    let seed = seed.ok_or_else(|| parse_err(1, "missing seed"))?;
    let wall_ms = wall_ms.ok_or_else(|| parse_err(1, "missing wall_ms"))?;
    let spec = spec.ok_or_else(|| parse_err(1, "missing property"))?;

    let (_, header) = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    if header != "point_index,verdict,margin_or_bound,time_ms,score" {
        return Err(parse_err(2, format!("unexpected header \"{header}\"")));
    }

    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(n, format!("expected 5 fields, got {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(n, format!("point_index \"{}\" is not an integer", fields[0])))?;
        let margin = parse_opt_f64(fields[2], n, "margin_or_bound")?;
        let time_ms: u64 = fields[3]
            .parse()
            .map_err(|_| parse_err(n, format!("time_ms \"{}\" is not an integer", fields[3])))?;
        let score = parse_opt_f64(fields[4], n, "score")?;
        match (fields[1], score) {
            ("timeout", None) => {}
            ("holds", Some(s)) if s >= 1.0 => {}
            ("violated", Some(s)) if s < 1.0 => {}
            (verdict, _) => {
                return Err(parse_err(n, format!("verdict \"{verdict}\" contradicts score \"{}\"", fields[4])))
            }
        }
        points.push(PointRecord { index, score, margin, time_ms });
    }
    if points.is_empty() {
        return Err(parse_err(3, "no data rows"));
    }

    // Same arithmetic and summation order as the metric constructor, so the
    // derived fields come back bit-identical.
    let n = points.len() as f64;
    let sum: f64 = points.iter().filter_map(|p| p.score).sum();
    let timeouts = points.iter().filter(|p| p.score.is_none()).count();
    Ok(MetricReport {
        metric,
        spec,
        dataset_size: points.len(),
        value: sum / n,
        value_upper: (sum + timeouts as f64) / n,
        timeouts,
        points,
        wall_ms,
        seed,
    })
}

/// One cell of the evaluate sweep: a metric value for (net, property, ε).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: String,
    pub seed: u64,
    pub regime: String,
    pub dataset: String,
    pub property: String,
    pub epsilon: f64,
    pub metric: String,
    pub value: f64,
    pub value_upper: f64,
    pub timeouts: usize,
    pub n_points: usize,
}

pub const SWEEP_HEADER: &str =
    "config,seed,regime,dataset,property,epsilon,metric,value,value_upper,timeouts,n_points";

fn sweep_key(r: &SweepRow) -> (String, String, [u8; 8], String, u64) {
    // total_cmp order realized as a sortable byte key (all radii are >= 0).
    (r.regime.clone(), r.property.clone(), r.epsilon.to_bits().to_be_bytes(), r.metric.clone(), r.seed)
}

/// Long-format sweep CSV, sorted by (regime, property, epsilon, metric,
/// seed). No time columns: reruns must match byte for byte.
pub fn sweep_csv(mut rows: Vec<SweepRow>) -> String {
    rows.sort_by(|a, b| sweep_key(a).cmp(&sweep_key(b)));
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.config,
            r.seed,
            r.regime,
            r.dataset,
            r.property,
            fmt_f64(r.epsilon),
            r.metric,
            fmt_f64(r.value),
            fmt_f64(r.value_upper),
            r.timeouts,
            r.n_points,
        ));
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, ReportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    if header != SWEEP_HEADER {
        return Err(parse_err(1, format!("unexpected header \"{header}\"")));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(parse_err(n, format!("expected 11 fields, got {}", f.len())));
        }
        let int = |s: &str, what: &str| -> Result<u64, ReportError> {
            s.parse().map_err(|_| parse_err(n, format!("{what} \"{s}\" is not an integer")))
        };
        let float = |s: &str, what: &str| -> Result<f64, ReportError> {
            s.parse().map_err(|_| parse_err(n, format!("{what} \"{s}\" is not a float")))
        };
        rows.push(SweepRow {
            config: f[0].to_string(),
            seed: int(f[1], "seed")?,
            regime: f[2].to_string(),
            dataset: f[3].to_string(),
            property: f[4].to_string(),
            epsilon: float(f[5], "epsilon")?,
            metric: f[6].to_string(),
            value: float(f[7], "value")?,
            value_upper: float(f[8], "value_upper")?,
            timeouts: int(f[9], "timeouts")? as usize,
            n_points: int(f[10], "n_points")? as usize,
        });
    }
    Ok(rows)
}

/// Per-seed aggregation of a sweep: one row per (regime, dataset, property,
/// epsilon, metric) with mean/min/max of `value` over seeds and the mean
/// upper bound. Input order does not matter; output order is deterministic.
pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| sweep_key(a).cmp(&sweep_key(b)));

    let mut out = String::from("regime,dataset,property,epsilon,metric,n_seeds,mean,min,max,mean_upper\n");
    let mut i = 0;
    while i < sorted.len() {
        let group_of = |r: &SweepRow| {
            (r.regime.clone(), r.dataset.clone(), r.property.clone(), r.epsilon.to_bits(), r.metric.clone())
        };
        let key = group_of(sorted[i]);
        let mut j = i;
        let (mut sum, mut sum_upper) = (0.0, 0.0);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        while j < sorted.len() && group_of(sorted[j]) == key {
            sum += sorted[j].value;
            sum_upper += sorted[j].value_upper;
            min = min.min(sorted[j].value);
            max = max.max(sorted[j].value);
            j += 1;
        }
        let n = (j - i) as f64;
        let r = sorted[i];
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.regime,
            r.dataset,
            r.property,
            fmt_f64(r.epsilon),
            r.metric,
            j - i,
            fmt_f64(sum / n),
            fmt_f64(min),
            fmt_f64(max),
            fmt_f64(sum_upper / n),
        ));
        i = j;
    }
    out
}

/// One verification-table row: satisfaction of the first CR, SR, and LR
/// property in the config's list (at their own radii) for one trained net.
/// `None` cells render empty when the config lists no property of that kind.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub config: String,
    pub seed: u64,
    pub regime: String,
    /// (value, value_upper) per kind.
    pub cr: Option<(f64, f64)>,
    pub sr: Option<(f64, f64)>,
    pub lr: Option<(f64, f64)>,
}

/// Satisfaction table mirroring the shape of a per-regime results table:
/// one row per trained net, CR/SR/LR columns, sorted by (regime, seed).
pub fn table_csv(mut rows: Vec<TableRow>) -> String {
    rows.sort_by(|a, b| (a.regime.clone(), a.seed).cmp(&(b.regime.clone(), b.seed)));
    let mut out =
        String::from("config,seed,regime,cr,cr_upper,sr,sr_upper,lr,lr_upper\n");
    let cell = |v: Option<(f64, f64)>| match v {
        Some((lo, hi)) => format!("{},{}", fmt_f64(lo), fmt_f64(hi)),
        None => String::from(","),
    };
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config,
            r.seed,
            r.regime,
            cell(r.cr),
            cell(r.sr),
            cell(r.lr),
        ));
    }
    out
}
