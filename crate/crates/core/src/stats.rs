//! Histograms, box-plot summaries and the consolidated difficulty report.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{distances_to_mean, mean_tensor, sdom_report, DistanceSeries, SeriesTag};
use crate::error::{Error, Result};
use crate::features::{build_windows, CenterPolicy, SplitWindows, WindowOptions};
use crate::ingest::DatasetBundle;
use crate::types::{BoxStats, FeatureType, SdomReport, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    FixedCount(usize),
    FixedWidth(f64),
    /// Freedman-Diaconis width, clamped to 10..=200 bins.
    Auto,
}

impl std::str::FromStr for Binning {
    type Err = Error;

    /// `auto`, `count:<n>` or `width:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("binning", s.to_string());
        if s == "auto" {
            return Ok(Binning::Auto);
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "count" => match value.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Binning::FixedCount(n)),
                _ => Err(bad()),
            },
            "width" => match value.parse::<f64>() {
                Ok(w) if w > 0.0 && w.is_finite() => Ok(Binning::FixedWidth(w)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub split: Option<Split>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n − 1)·p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_values(series: &DistanceSeries) -> Result<Vec<f64>> {
    if series.values.is_empty() {
        return Err(Error::Empty("distance series".into()));
    }
    if series.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("distance series", "non-finite value"));
    }
    let mut v = series.values.clone();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn edges_by_count(min: f64, max: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = if max > min {
        (min, max)
    } else {
        (min - 0.5, min + 0.5)
    };
    let width = (hi - lo) / n as f64;
    let mut edges: Vec<f64> = (0..n).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

/// Bins a series; bins are right-open except the last, which is closed.
pub fn histogram(series: &DistanceSeries, binning: Binning) -> Result<Histogram> {
    let sorted = sorted_values(series)?;
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let edges = match binning {
        Binning::FixedCount(n) => {
            if n == 0 {
                return Err(Error::invalid("binning", "zero bins"));
            }
            edges_by_count(min, max, n)
        }
        Binning::FixedWidth(w) => {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid("binning", format!("width {w}")));
            }
            let n = (((max - min) / w).ceil() as usize).max(1);
            (0..=n).map(|i| min + i as f64 * w).collect()
        }
        Binning::Auto => {
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            if iqr <= 0.0 || max <= min {
                edges_by_count(min, max, 10)
            } else {
                let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
                let n = ((max - min) / width).ceil().clamp(10.0, 200.0) as usize;
                edges_by_count(min, max, n)
            }
        }
    };
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in &sorted {
        // first edge strictly greater than v, minus one
        let i = edges.partition_point(|&e| e <= v).saturating_sub(1).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram {
        bin_edges: edges,
        counts,
        split: series.split,
    })
}

/// Quartiles and Tukey whiskers: the fences `Q1 − 1.5·IQR` and
/// `Q3 + 1.5·IQR` are pulled in to the most extreme data value inside them,
/// and never past Q1/Q3.
pub fn box_stats(series: &DistanceSeries) -> Result<BoxStats> {
    let sorted = sorted_values(series)?;
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let lower = sorted.iter().copied().find(|&v| v >= lo).unwrap_or(q1);
    let upper = sorted.iter().rev().copied().find(|&v| v <= hi).unwrap_or(q3);
    Ok(BoxStats {
        lower_fence: lower.min(q1),
        q1,
        median,
        q3,
        upper_fence: upper.max(q3),
    })
}

pub fn write_histogram_csv<W: Write>(mut w: W, hists: &[Histogram]) -> Result<()> {
    writeln!(w, "bin_left,bin_right,count,split")?;
    for h in hists {
        let split = h.split.map_or("all", Split::as_str);
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(w, "{},{},{},{}", h.bin_edges[i], h.bin_edges[i + 1], c, split)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Difficulty report

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Center pose and trajectory windows.
    pub center: bool,
    /// Center social windows as well.
    pub center_social: bool,
    pub binning: Binning,
    pub truncate_social: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            center: true,
            center_social: false,
            binning: Binning::Auto,
            truncate_social: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature_type: FeatureType,
    pub centered: bool,
    pub sdom: SdomReport,
    pub box_stats: BTreeMap<Split, BoxStats>,
    pub histogram_file: String,
    #[serde(skip)]
    pub histograms: Vec<Histogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub config: ReportConfig,
    pub features: Vec<FeatureReport>,
    /// Feature types by S-DoM, most discriminative first.
    pub ranking: Vec<FeatureType>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub t: usize,
    pub stride: usize,
    pub k: usize,
    pub nodes: usize,
}

pub fn histogram_file_name(tag: SeriesTag) -> String {
    format!("histogram_{}.csv", tag.name())
}

/// Per feature type: S-DoM, box statistics and histograms of the distances
/// of every window to the training mean, plus a ranking by S-DoM.
pub fn difficulty_report(
    bundle: &DatasetBundle,
    feature_types: &[FeatureType],
    options: &ReportOptions,
) -> Result<DifficultyReport> {
    let mut warnings = Vec::new();
    let mut features = Vec::new();
    for &feature in feature_types {
        let centered = if feature == FeatureType::SocialTrajectory {
            options.center_social
        } else {
            options.center
        };
        let opts = WindowOptions {
            center: if centered {
                CenterPolicy::FirstPoseToFrameCenter
            } else {
                CenterPolicy::None
            },
            truncate_social: options.truncate_social,
        };
        let built = build_windows(bundle, feature, opts)?;
        warnings.extend(built.warnings);
        let split = SplitWindows::from_windows(built.windows);
        for s in Split::ALL {
            let n = split.get(s).len();
            if n < 2 {
                warnings.push(format!("{feature}: split {s} has only {n} window(s)"));
            }
        }
        let sdom = sdom_report(&split.train, &split.val_normal, &split.val_anomalous)?;
        let mu_tn = mean_tensor(&split.train)?;
        let mut box_map = BTreeMap::new();
        let mut histograms = Vec::new();
        for s in Split::ALL {
            let series = distances_to_mean(split.get(s), &mu_tn)?;
            let series = DistanceSeries {
                split: Some(s),
                tag: SeriesTag::Feature(feature),
                ..series
            };
            box_map.insert(s, box_stats(&series)?);
            histograms.push(histogram(&series, options.binning)?);
        }
        features.push(FeatureReport {
            feature_type: feature,
            centered,
            sdom,
            box_stats: box_map,
            histogram_file: histogram_file_name(SeriesTag::Feature(feature)),
            histograms,
        });
    }
    let mut ranking: Vec<(FeatureType, f64)> =
        features.iter().map(|f| (f.feature_type, f.sdom.sdom)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(DifficultyReport {
        config: ReportConfig {
            t: bundle.config.t,
            stride: bundle.config.stride,
            k: bundle.config.k,
            nodes: bundle.config.nodes,
        },
        features,
        ranking: ranking.into_iter().map(|r| r.0).collect(),
        warnings,
    })
}

/// The report schema shipped in `docs/report.schema.json`.
pub const REPORT_SCHEMA: &str = include_str!("../../../docs/report.schema.json");

/// Structural check of a report document against the shipped schema:
/// required keys, value types, and the ordering invariants of the numbers.
pub fn validate_report_json(doc: &Value) -> Result<()> {
    let fail = |why: String| Err(Error::invalid("report", why));
    let obj = match doc.as_object() {
        Some(o) => o,
        None => return fail("top level is not an object".into()),
    };
    let schema: Value = serde_json::from_str(REPORT_SCHEMA)?;
    if let Some(req) = schema["required"].as_array() {
        for key in req.iter().filter_map(Value::as_str) {
            if !obj.contains_key(key) {
                return fail(format!("missing key {key}"));
            }
        }
    }
    let feature_names = ["pose", "absolute_trajectory", "social_trajectory"];
    let ranking = match doc["ranking"].as_array() {
        Some(r) => r,
        None => return fail("ranking is not an array".into()),
    };
    if !ranking
        .iter()
        .all(|r| r.as_str().is_some_and(|s| feature_names.contains(&s)))
    {
        return fail("ranking holds an unknown feature type".into());
    }
    let features = match doc["features"].as_array() {
        Some(f) => f,
        None => return fail("features is not an array".into()),
    };
    let feature_req = schema["$defs"]["feature"]["required"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let mut sdoms = Vec::new();
    for f in features {
        for key in feature_req.iter().filter_map(Value::as_str) {
            if f.get(key).is_none() {
                return fail(format!("feature entry lacks {key}"));
            }
        }
        let s = &f["sdom"];
        let (dn, da, sd) = match (s["delta_n"].as_f64(), s["delta_a"].as_f64(), s["sdom"].as_f64()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return fail("sdom entry is not numeric".into()),
        };
        if dn < 0.0 || da < 0.0 || sd != da - dn {
            return fail("sdom entry breaks delta_a - delta_n".into());
        }
        sdoms.push((f["feature_type"].as_str().unwrap_or_default().to_string(), sd));
        let boxes = match f["box_stats"].as_object() {
            Some(b) => b,
            None => return fail("box_stats is not an object".into()),
        };
        for (split, b) in boxes {
            if split.parse::<Split>().is_err() {
                return fail(format!("unknown split {split}"));
            }
            let get = |k: &str| b[k].as_f64();
            let vals: Option<Vec<f64>> = ["lower_fence", "q1", "median", "q3", "upper_fence"]
                .iter()
                .map(|k| get(k))
                .collect();
            match vals {
                Some(v) if v.windows(2).all(|p| p[0] <= p[1]) => {}
                _ => return fail(format!("box stats for {split} are not ordered")),
            }
        }
    }
    let ranked: Option<Vec<f64>> = ranking
        .iter()
        .filter_map(Value::as_str)
        .map(|r| sdoms.iter().find(|s| s.0 == r).map(|s| s.1))
        .collect();
    match ranked {
        Some(v) if v.len() == sdoms.len() && v.windows(2).all(|p| p[0] >= p[1]) => Ok(()),
        _ => fail("ranking does not follow S-DoM".into()),
    }
}
