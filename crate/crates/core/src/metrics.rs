//! Frame-level evaluation: AUC-ROC, AUC-PR and EER.
//!
//! Anomalous frames are the positive class and scores are in anomaly
//! polarity. Samples with equal scores form one threshold group, so
//! AUC-ROC equals the Mann-Whitney probability with half-weighted ties.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::analysis::CompensatedSum;
use crate::error::{Error, Result};
use crate::ingest::sort_frames;
use crate::types::{FrameLabel, MetricsReport, ScoredFrame, WindowSpan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative counts after each distinct threshold, highest score first.
struct Sweep {
    /// `(threshold, true positives, false positives)` with score >= threshold.
    steps: Vec<(f64, usize, usize)>,
    pos: usize,
    neg: usize,
}

fn sweep(samples: &[ScoredFrame]) -> Sweep {
    let mut ranked: Vec<(f64, bool)> = samples
        .iter()
        .map(|s| (s.score, s.label.is_anomalous()))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos = ranked.iter().filter(|r| r.1).count();
    let neg = ranked.len() - pos;
    let mut steps: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(score, positive)) in ranked.iter().enumerate() {
        if positive {
            tp += 1;
        } else {
            fp += 1;
        }
        if ranked.get(i + 1).is_none_or(|next| next.0 != score) {
            steps.push((score, tp, fp));
        }
    }
    Sweep { steps, pos, neg }
}

fn require_both(s: &Sweep) -> Result<()> {
    if s.pos == 0 {
        return Err(Error::MissingClass("anomalous"));
    }
    if s.neg == 0 {
        return Err(Error::MissingClass("normal"));
    }
    Ok(())
}

fn roc_from(s: &Sweep) -> Vec<RocPoint> {
    let (p, n) = (s.pos as f64, s.neg as f64);
    let mut pts = Vec::with_capacity(s.steps.len() + 1);
    pts.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    pts.extend(s.steps.iter().map(|&(thr, tp, fp)| RocPoint {
        threshold: thr,
        fpr: fp as f64 / n,
        tpr: tp as f64 / p,
    }));
    pts
}

/// ROC curve from `(0, 0)` to `(1, 1)` with one point per distinct score.
/// The first point carries an infinite threshold.
pub fn roc_curve(samples: &[ScoredFrame]) -> Result<Vec<RocPoint>> {
    let s = sweep(samples);
    require_both(&s)?;
    Ok(roc_from(&s))
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    let mut area = CompensatedSum::default();
    for pair in points.windows(2) {
        area.add((pair[1].fpr - pair[0].fpr) * (pair[1].tpr + pair[0].tpr) / 2.0);
    }
    area.value()
}

pub fn auc_roc(samples: &[ScoredFrame]) -> Result<f64> {
    Ok(trapezoid(&roc_curve(samples)?))
}

/// Precision and recall at every distinct score, highest first.
pub fn pr_curve(samples: &[ScoredFrame]) -> Result<Vec<PrPoint>> {
    let s = sweep(samples);
    if s.pos == 0 {
        return Err(Error::MissingClass("anomalous"));
    }
    Ok(pr_from(&s))
}

fn pr_from(s: &Sweep) -> Vec<PrPoint> {
    s.steps
        .iter()
        .map(|&(thr, tp, fp)| PrPoint {
            threshold: thr,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / s.pos as f64,
        })
        .collect()
}

/// Step-wise area: `Σ (R_i − R_{i−1}) · P_i`.
fn step_area(points: &[PrPoint]) -> f64 {
    let mut area = CompensatedSum::default();
    let mut prev = 0.0;
    for p in points {
        area.add((p.recall - prev) * p.precision);
        prev = p.recall;
    }
    area.value()
}

pub fn auc_pr(samples: &[ScoredFrame]) -> Result<f64> {
    Ok(step_area(&pr_curve(samples)?))
}

/// Equal error rate and its operating threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub rate: f64,
    pub threshold: f64,
}

fn eer_from(points: &[RocPoint]) -> Eer {
    // d = FPR - FNR rises from -1 at the origin to +1 at (1, 1)
    let d = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    let i = points
        .iter()
        .position(|p| d(p) >= 0.0)
        .unwrap_or(points.len() - 1);
    let cur = points[i];
    if d(&cur) == 0.0 || i == 0 {
        return Eer {
            rate: cur.fpr,
            threshold: cur.threshold,
        };
    }
    let prev = points[i - 1];
    let (d0, d1) = (d(&prev), d(&cur));
    let alpha = -d0 / (d1 - d0);
    let rate = prev.fpr + alpha * (cur.fpr - prev.fpr);
    // The rates are step functions of the threshold, so report the distinct
    // score on the side closer to the crossing: counting there gives
    // |FPR - FNR| <= half the step between the two points.
    let threshold = if alpha < 0.5 {
        prev.threshold
    } else {
        cur.threshold
    };
    Eer { rate, threshold }
}

/// Rate where FPR equals FNR, interpolated linearly between adjacent
/// distinct thresholds. A sample is flagged anomalous when `score >= threshold`.
pub fn eer(samples: &[ScoredFrame]) -> Result<Eer> {
    Ok(eer_from(&roc_curve(samples)?))
}

/// All three metrics over one pooled sample set.
pub fn evaluate(samples: &[ScoredFrame]) -> Result<MetricsReport> {
    let s = sweep(samples);
    require_both(&s)?;
    let roc = roc_from(&s);
    let e = eer_from(&roc);
    Ok(MetricsReport {
        auc_roc: trapezoid(&roc),
        auc_pr: step_area(&pr_from(&s)),
        eer: e.rate,
        eer_threshold: e.threshold,
        n_pos: s.pos,
        n_neg: s.neg,
        uncovered_frames: 0,
    })
}

/// Per-video metrics averaged over videos that contain both classes.
/// `n_pos` and `n_neg` count every sample.
pub fn evaluate_per_video(samples: &[ScoredFrame]) -> Result<MetricsReport> {
    let mut by_video: BTreeMap<&str, Vec<ScoredFrame>> = BTreeMap::new();
    for s in samples {
        by_video.entry(&s.video_id).or_default().push(s.clone());
    }
    let reports: Vec<MetricsReport> = by_video
        .values()
        .filter_map(|v| evaluate(v).ok())
        .collect();
    if reports.is_empty() {
        return Err(Error::Empty("no video holds both normal and anomalous frames".into()));
    }
    let m = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / m;
    let pos = samples.iter().filter(|s| s.label.is_anomalous()).count();
    Ok(MetricsReport {
        auc_roc: avg(|r| r.auc_roc),
        auc_pr: avg(|r| r.auc_pr),
        eer: avg(|r| r.eer),
        eer_threshold: avg(|r| r.eer_threshold),
        n_pos: pos,
        n_neg: samples.len() - pos,
        uncovered_frames: 0,
    })
}

/// Handling of labeled frames that no window covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncoveredPolicy {
    /// Give them the lowest observed window score.
    #[default]
    FillLeastAnomalous,
    Drop,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameScores {
    pub frames: Vec<ScoredFrame>,
    pub uncovered: usize,
}

/// Frame score = maximum anomaly score of all windows covering the frame.
/// Every labeled frame is evaluated.
pub fn windows_to_frame_scores(
    window_scores: &[(WindowSpan, f64)],
    labels: &[FrameLabel],
    policy: UncoveredPolicy,
) -> FrameScores {
    let mut best: HashMap<&str, HashMap<u64, f64>> = HashMap::new();
    for (span, score) in window_scores {
        let frames = best.entry(span.video_id.as_str()).or_default();
        for f in span.start_frame..span.start_frame + span.len {
            frames
                .entry(f)
                .and_modify(|s| *s = s.max(*score))
                .or_insert(*score);
        }
    }
    let fill = window_scores
        .iter()
        .map(|w| w.1)
        .min_by(f64::total_cmp)
        .unwrap_or(0.0);
    let mut out = FrameScores::default();
    for l in labels {
        let score = best
            .get(l.video_id.as_str())
            .and_then(|m| m.get(&l.frame_index))
            .copied();
        let score = match (score, policy) {
            (Some(s), _) => s,
            (None, UncoveredPolicy::FillLeastAnomalous) => {
                out.uncovered += 1;
                fill
            }
            (None, UncoveredPolicy::Drop) => {
                out.uncovered += 1;
                continue;
            }
        };
        out.frames.push(ScoredFrame {
            video_id: l.video_id.clone(),
            frame_index: l.frame_index,
            score,
            label: l.label,
        });
    }
    sort_frames(&mut out.frames);
    out
}

pub fn write_roc_csv<W: Write>(mut w: W, points: &[RocPoint]) -> Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

pub fn write_pr_csv<W: Write>(mut w: W, points: &[PrPoint]) -> Result<()> {
    writeln!(w, "threshold,precision,recall")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.precision, p.recall)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Label;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frames(data: &[(f64, bool)]) -> Vec<ScoredFrame> {
        data.iter()
            .enumerate()
            .map(|(i, &(score, pos))| ScoredFrame {
                video_id: "v".into(),
                frame_index: i as u64,
                score,
                label: if pos { Label::Anomalous } else { Label::Normal },
            })
            .collect()
    }

    /// O(n²) Mann-Whitney oracle with half-weighted ties.
    fn pairwise_auc(s: &[ScoredFrame]) -> f64 {
        let pos: Vec<f64> = s.iter().filter(|f| f.label.is_anomalous()).map(|f| f.score).collect();
        let neg: Vec<f64> = s.iter().filter(|f| !f.label.is_anomalous()).map(|f| f.score).collect();
        let mut wins = 0.0;
        for p in &pos {
            for n in &neg {
                wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    /// Confusion-matrix counts at every candidate threshold.
    fn exhaustive_roc(s: &[ScoredFrame]) -> Vec<(f64, f64)> {
        let mut thresholds: Vec<f64> = s.iter().map(|f| f.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let p = s.iter().filter(|f| f.label.is_anomalous()).count() as f64;
        let n = s.len() as f64 - p;
        let mut out = vec![(0.0, 0.0)];
        for t in thresholds {
            let tp = s.iter().filter(|f| f.label.is_anomalous() && f.score >= t).count() as f64;
            let fp = s.iter().filter(|f| !f.label.is_anomalous() && f.score >= t).count() as f64;
            out.push((fp / n, tp / p));
        }
        out
    }

    fn exhaustive_ap(s: &[ScoredFrame]) -> f64 {
        let mut thresholds: Vec<f64> = s.iter().map(|f| f.score).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let p = s.iter().filter(|f| f.label.is_anomalous()).count() as f64;
        let (mut area, mut prev) = (0.0, 0.0);
        for t in thresholds {
            let tp = s.iter().filter(|f| f.label.is_anomalous() && f.score >= t).count() as f64;
            let all = s.iter().filter(|f| f.score >= t).count() as f64;
            area += (tp / p - prev) * (tp / all);
            prev = tp / p;
        }
        area
    }

    #[test]
    fn perfect_separation() {
        let s = frames(&[(1.0, true), (0.0, false)]);
        let roc = roc_curve(&s).unwrap();
        assert!(roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc_roc(&s).unwrap(), 1.0);
        assert_eq!(auc_pr(&s).unwrap(), 1.0);
        assert_eq!(eer(&s).unwrap().rate, 0.0);
    }

    #[test]
    fn all_ties() {
        let s = frames(&[(0.3, true), (0.3, false), (0.3, false), (0.3, false)]);
        let roc = roc_curve(&s).unwrap();
        let pts: Vec<(f64, f64)> = roc.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(pts, [(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc_roc(&s).unwrap(), 0.5);
        assert_eq!(auc_pr(&s).unwrap(), 0.25);
    }

    #[test]
    fn fully_inverted_scores() {
        let s = frames(&[(0.0, true), (0.1, true), (0.8, false), (0.9, false)]);
        assert_eq!(auc_roc(&s).unwrap(), 0.0);
        assert_eq!(eer(&s).unwrap().rate, 1.0);
    }

    #[test]
    fn single_class_errors() {
        let s = frames(&[(0.0, true), (1.0, true)]);
        assert!(matches!(auc_roc(&s), Err(Error::MissingClass("normal"))));
        assert!(auc_pr(&s).is_ok());
        let s = frames(&[(0.0, false)]);
        assert!(matches!(auc_pr(&s), Err(Error::MissingClass("anomalous"))));
        assert!(eer(&s).is_err());
    }

    #[test]
    fn window_to_frame_rules() {
        let labels: Vec<FrameLabel> = (0..30)
            .map(|f| FrameLabel {
                video_id: "v".into(),
                frame_index: f,
                label: Label::Normal,
            })
            .collect();
        let span = |s| WindowSpan {
            video_id: "v".into(),
            start_frame: s,
            len: 24,
        };
        let one = windows_to_frame_scores(&[(span(0), 0.4)], &labels[..24], UncoveredPolicy::default());
        assert!(one.frames.iter().all(|f| f.score == 0.4));
        assert_eq!(one.uncovered, 0);
        let two = windows_to_frame_scores(
            &[(span(0), 0.2), (span(6), 0.9)],
            &labels,
            UncoveredPolicy::FillLeastAnomalous,
        );
        assert_eq!(two.frames[5].score, 0.2);
        assert_eq!(two.frames[6].score, 0.9);
        assert_eq!(two.frames[29].score, 0.9);
        let dropped = windows_to_frame_scores(&[(span(6), 0.9)], &labels, UncoveredPolicy::Drop);
        assert_eq!(dropped.frames.len(), 24);
        assert_eq!(dropped.uncovered, 6);
        let filled = windows_to_frame_scores(&[(span(6), 0.9)], &labels, UncoveredPolicy::FillLeastAnomalous);
        assert_eq!(filled.frames[0].score, 0.9);
        assert_eq!(filled.uncovered, 6);
    }

    #[test]
    fn per_video_average() {
        let mut s = frames(&[(1.0, true), (0.0, false)]);
        let mut t = frames(&[(0.0, true), (1.0, false)]);
        for f in &mut t {
            f.video_id = "w".into();
        }
        s.extend(t);
        let r = evaluate_per_video(&s).unwrap();
        assert_eq!(r.auc_roc, 0.5);
        assert_eq!((r.n_pos, r.n_neg), (2, 2));
    }

    /// |FPR - FNR| when flagging `score >= t`, by counting.
    fn counted_gap(s: &[ScoredFrame], t: f64) -> f64 {
        let pos = s.iter().filter(|f| f.label.is_anomalous()).count() as f64;
        let neg = s.len() as f64 - pos;
        let fp = s.iter().filter(|f| !f.label.is_anomalous() && f.score >= t).count() as f64;
        let fneg = s.iter().filter(|f| f.label.is_anomalous() && f.score < t).count() as f64;
        (fp / neg - fneg / pos).abs()
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<(f64, bool)>> {
        proptest::collection::vec((0u8..20, any::<bool>()), 2..120).prop_map(|v| {
            v.into_iter().map(|(s, b)| (s as f64 / 4.0, b)).collect()
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(data in sample_strategy()) {
            let s = frames(&data);
            prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
            prop_assert!((auc_roc(&s).unwrap() - pairwise_auc(&s)).abs() < 1e-9);
            let roc: Vec<(f64, f64)> = roc_curve(&s).unwrap().iter().map(|p| (p.fpr, p.tpr)).collect();
            prop_assert_eq!(roc, exhaustive_roc(&s));
            prop_assert!((auc_pr(&s).unwrap() - exhaustive_ap(&s)).abs() < 1e-9);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(data in sample_strategy()) {
            prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
            let s = frames(&data);
            let mut t = s.clone();
            for f in &mut t {
                f.score = (f.score * 3.0).exp() - 7.0;
            }
            prop_assert!((auc_roc(&s).unwrap() - auc_roc(&t).unwrap()).abs() < 1e-12);
            let mut flipped = s.clone();
            for f in &mut flipped {
                f.score = -f.score;
                f.label = if f.label.is_anomalous() { Label::Normal } else { Label::Anomalous };
            }
            prop_assert!((auc_roc(&s).unwrap() - auc_roc(&flipped).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn roc_monotone_and_eer_bounded(data in sample_strategy()) {
            prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
            let s = frames(&data);
            let roc = roc_curve(&s).unwrap();
            for pair in roc.windows(2) {
                prop_assert!(pair[1].fpr >= pair[0].fpr && pair[1].tpr >= pair[0].tpr);
            }
            let e = eer(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&e.rate));
            let separable = roc.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0);
            prop_assert_eq!(e.rate == 0.0, separable);
        }

        #[test]
        fn eer_threshold_is_best_available(data in sample_strategy()) {
            prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
            let s = frames(&data);
            let e = eer(&s).unwrap();
            let best = s
                .iter()
                .map(|f| f.score)
                .chain([f64::INFINITY])
                .map(|t| counted_gap(&s, t))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(counted_gap(&s, e.threshold) <= best + 1e-12);
        }

        #[test]
        fn eer_gap_bound_without_ties(
            labels in proptest::collection::vec(any::<bool>(), 2..150),
            seed in any::<u64>(),
        ) {
            prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<(f64, bool)> = labels
                .iter()
                .enumerate()
                .map(|(i, &b)| (i as f64 + rng.random::<f64>() * 0.5 + if b { 20.0 } else { 0.0 }, b))
                .collect();
            let s = frames(&data);
            let pos = labels.iter().filter(|&&b| b).count();
            let bound = 1.0 / (2.0 * pos.min(labels.len() - pos) as f64);
            prop_assert!(counted_gap(&s, eer(&s).unwrap().threshold) <= bound + 1e-12);
        }
    }
}
