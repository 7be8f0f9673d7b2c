//! Input formulations built from tracklets.
//!
//! * pose windows: `T × k × 2`, one tracked person;
//! * absolute trajectory windows: `T × 1 × 2`, the person's hip midpoint;
//! * social trajectory windows: `T × N × 2`, every person in the scene,
//!   zero-padded to `N` node slots with a mask recording occupancy.
//!
//! Windows only cover contiguous frames; gaps are never interpolated.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DatasetBundle, LabelIndex};
use crate::types::{
    check_id, natural_cmp, Coords, FeatureType, FeatureWindow, HipIndices, Label, LabelRule,
    PoseDetection, Split, Tracklet, WindowingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterPolicy {
    None,
    /// Translate so the first frame's anchor sits at the frame center; the
    /// same vector is applied to every frame.
    #[default]
    FirstPoseToFrameCenter,
}

/// Hip midpoint of one detection.
pub fn person_center(detection: &PoseDetection, hips: HipIndices) -> Result<(f64, f64)> {
    let k = detection.keypoints.len();
    let (l, r) = match (detection.keypoints.get(hips.left), detection.keypoints.get(hips.right)) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(Error::invalid(
                "hip indices",
                format!("({}, {}) not present in a {k}-keypoint layout", hips.left, hips.right),
            ))
        }
    };
    Ok(((l.x + r.x) / 2.0, (l.y + r.y) / 2.0))
}

/// Splits sorted frame indices into maximal runs of consecutive frames,
/// returned as index ranges into `frames`.
pub fn contiguous_runs(frames: &[u64]) -> Vec<Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || frames[i] != frames[i - 1] + 1 {
            if i > start {
                runs.push(start..i);
            }
            start = i;
        }
    }
    runs
}

/// Offsets of window starts inside a run of `len` frames.
pub fn window_starts(len: usize, t: usize, stride: usize) -> impl Iterator<Item = usize> {
    let last = len.checked_sub(t);
    (0..).step_by(stride.max(1)).take_while(move |&s| last.is_some_and(|l| s <= l))
}

fn anchor_point(coords: &Coords, cfg: &WindowingConfig) -> (f64, f64) {
    if coords.k() == 1 {
        coords.point(0, 0)
    } else {
        let (lx, ly) = coords.point(0, cfg.hips.left);
        let (rx, ry) = coords.point(0, cfg.hips.right);
        ((lx + rx) / 2.0, (ly + ry) / 2.0)
    }
}

/// Applies the centering policy to a window of person coordinates.
///
/// Single-node windows (trajectories) are anchored on their only node;
/// skeleton windows on the first frame's hip midpoint (`cfg.hips`).
pub fn center_window(coords: &Coords, cfg: &WindowingConfig, policy: CenterPolicy) -> Coords {
    match policy {
        CenterPolicy::None => coords.clone(),
        CenterPolicy::FirstPoseToFrameCenter => {
            let (ax, ay) = anchor_point(coords, cfg);
            let (cx, cy) = cfg.frame_center();
            translate(coords, (cx - ax, cy - ay), None)
        }
    }
}

fn translate(coords: &Coords, (vx, vy): (f64, f64), mask: Option<&[bool]>) -> Coords {
    let mut out = coords.clone();
    for (i, pair) in out.as_mut_slice().chunks_exact_mut(2).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            pair[0] += vx;
            pair[1] += vy;
        }
    }
    out
}

/// Combines per-frame labels of one window.
pub fn label_window(frame_labels: &[Label], rule: LabelRule) -> Label {
    let anomalous = frame_labels.iter().filter(|l| l.is_anomalous()).count();
    let hit = match rule {
        LabelRule::AnyAnomalous => anomalous > 0,
        LabelRule::Majority => 2 * anomalous > frame_labels.len(),
    };
    if hit {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

fn label_range(
    labels: &LabelIndex,
    video_id: &str,
    start: u64,
    t: usize,
    rule: LabelRule,
) -> Result<(Label, Split)> {
    let frame_labels = (start..start + t as u64)
        .map(|f| {
            labels.label(video_id, f).ok_or_else(|| Error::Unlabeled {
                video_id: video_id.to_string(),
                frame: f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label = label_window(&frame_labels, rule);
    Ok((label, Split::for_window(labels.video_split(video_id), label)))
}

fn build_track_windows(
    tracklet: &Tracklet,
    cfg: &WindowingConfig,
    labels: &LabelIndex,
    center: CenterPolicy,
    feature: FeatureType,
    k: usize,
    extract: impl Fn(&PoseDetection, &mut Vec<f64>) -> Result<()>,
) -> Result<Vec<FeatureWindow>> {
    let dets = tracklet.detections();
    let frames: Vec<u64> = dets.iter().map(|d| d.frame_index).collect();
    let mut out = Vec::new();
    for run in contiguous_runs(&frames) {
        for offset in window_starts(run.len(), cfg.t, cfg.stride) {
            let first = run.start + offset;
            let mut data = Vec::with_capacity(cfg.t * k * 2);
            for d in &dets[first..first + cfg.t] {
                extract(d, &mut data)?;
            }
            let coords = center_window(&Coords::new(cfg.t, k, data)?, cfg, center);
            let start_frame = frames[first];
            let (label, split) =
                label_range(labels, tracklet.video_id(), start_frame, cfg.t, cfg.label_rule)?;
            out.push(FeatureWindow::new(
                feature,
                tracklet.video_id().to_string(),
                start_frame,
                vec![tracklet.track_id().to_string()],
                label,
                split,
                coords,
                vec![true; cfg.t * k],
            )?);
        }
    }
    Ok(out)
}

/// Sliding `T × k × 2` pose windows over each contiguous run of a tracklet.
pub fn build_pose_windows(
    tracklet: &Tracklet,
    cfg: &WindowingConfig,
    labels: &LabelIndex,
    center: CenterPolicy,
) -> Result<Vec<FeatureWindow>> {
    build_track_windows(tracklet, cfg, labels, center, FeatureType::Pose, cfg.k, |d, out| {
        if d.keypoints.len() != cfg.k {
            return Err(Error::Dimension {
                expected: cfg.k,
                found: d.keypoints.len(),
            });
        }
        out.extend(d.keypoints.iter().flat_map(|kp| [kp.x, kp.y]));
        Ok(())
    })
}

/// Sliding `T × 1 × 2` windows of the person's hip midpoint.
pub fn build_trajectory_windows(
    tracklet: &Tracklet,
    cfg: &WindowingConfig,
    labels: &LabelIndex,
    center: CenterPolicy,
) -> Result<Vec<FeatureWindow>> {
    build_track_windows(
        tracklet,
        cfg,
        labels,
        center,
        FeatureType::AbsoluteTrajectory,
        1,
        |d, out| {
            let (x, y) = person_center(d, cfg.hips)?;
            out.extend([x, y]);
            Ok(())
        },
    )
}

#[derive(Debug, Clone, Default)]
pub struct SocialWindows {
    pub windows: Vec<FeatureWindow>,
    pub warnings: Vec<String>,
}

/// Scene-level windows: every track seen in `[s, s + T)` gets one node slot
/// (ascending track id); absent frames and unused slots are zero with a
/// false mask.
///
/// When `center` is [`CenterPolicy::FirstPoseToFrameCenter`] the translation
/// moves the centroid of the first occupied frame's nodes to the frame center
/// and only touches occupied entries.
pub fn build_social_windows(
    bundle: &DatasetBundle,
    cfg: &WindowingConfig,
    center: CenterPolicy,
    truncate: bool,
) -> Result<SocialWindows> {
    cfg.validate()?;
    let labels = bundle.label_index();
    let mut by_video: BTreeMap<&str, Vec<&Tracklet>> = BTreeMap::new();
    for tr in &bundle.tracklets {
        by_video.entry(tr.video_id()).or_default().push(tr);
    }
    let mut videos: Vec<(&str, Vec<&Tracklet>)> = by_video.into_iter().collect();
    videos.sort_by(|a, b| natural_cmp(a.0, b.0));

    let (t, n) = (cfg.t, cfg.nodes);
    let mut result = SocialWindows::default();
    for (video_id, mut tracks) in videos {
        tracks.sort_by(|a, b| natural_cmp(a.track_id(), b.track_id()));
        let frame_center = bundle.video_config(video_id)?.frame_center();
        // per track: sorted frames and hip midpoints
        let mut series = Vec::with_capacity(tracks.len());
        for tr in &tracks {
            let frames: Vec<u64> = tr.detections().iter().map(|d| d.frame_index).collect();
            let centers = tr
                .detections()
                .iter()
                .map(|d| person_center(d, cfg.hips))
                .collect::<Result<Vec<_>>>()?;
            series.push((tr.track_id(), frames, centers));
        }
        let first = series.iter().filter_map(|s| s.1.first()).min().copied();
        let last = series.iter().filter_map(|s| s.1.last()).max().copied();
        let (Some(first), Some(last)) = (first, last) else {
            continue;
        };
        let span = (last - first + 1) as usize;
        for offset in window_starts(span, t, cfg.stride) {
            let s = first + offset as u64;
            let e = s + t as u64;
            let mut present: Vec<usize> = series
                .iter()
                .enumerate()
                .filter(|(_, (_, frames, _))| {
                    let i = frames.partition_point(|&f| f < s);
                    i < frames.len() && frames[i] < e
                })
                .map(|(i, _)| i)
                .collect();
            if present.len() > n {
                if !truncate {
                    return Err(Error::NodeCapacity {
                        video_id: video_id.to_string(),
                        start_frame: s,
                        found: present.len(),
                        capacity: n,
                    });
                }
                result.warnings.push(format!(
                    "social window {video_id}@{s}: {} tracks truncated to {n}",
                    present.len()
                ));
                present.truncate(n);
            }
            let mut coords = Coords::zeros(t, n);
            let mut mask = vec![false; t * n];
            let mut track_ids = Vec::with_capacity(present.len());
            for (slot, &i) in present.iter().enumerate() {
                let (id, frames, centers) = &series[i];
                track_ids.push(id.to_string());
                let lo = frames.partition_point(|&f| f < s);
                let hi = frames.partition_point(|&f| f < e);
                for j in lo..hi {
                    let row = (frames[j] - s) as usize;
                    coords.set_point(row, slot, centers[j]);
                    mask[row * n + slot] = true;
                }
            }
            if center == CenterPolicy::FirstPoseToFrameCenter {
                if let Some(row) = (0..t).find(|r| mask[r * n..(r + 1) * n].iter().any(|&m| m)) {
                    let occupied: Vec<(f64, f64)> = (0..n)
                        .filter(|&j| mask[row * n + j])
                        .map(|j| coords.point(row, j))
                        .collect();
                    let m = occupied.len() as f64;
                    let ax = occupied.iter().map(|p| p.0).sum::<f64>() / m;
                    let ay = occupied.iter().map(|p| p.1).sum::<f64>() / m;
                    let (cx, cy) = frame_center;
                    coords = translate(&coords, (cx - ax, cy - ay), Some(&mask));
                }
            }
            let (label, split) = label_range(&labels, video_id, s, t, cfg.label_rule)?;
            result.windows.push(FeatureWindow::new(
                FeatureType::SocialTrajectory,
                video_id.to_string(),
                s,
                track_ids,
                label,
                split,
                coords,
                mask,
            )?);
        }
    }
    Ok(result)
}

/// Options for [`build_windows`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptions {
    pub center: CenterPolicy,
    pub truncate_social: bool,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            center: CenterPolicy::FirstPoseToFrameCenter,
            truncate_social: false,
        }
    }
}

/// Builds every window of one feature type for a whole bundle, in canonical
/// order. Social windows only center when `center` is requested explicitly.
pub fn build_windows(
    bundle: &DatasetBundle,
    feature: FeatureType,
    opts: WindowOptions,
) -> Result<SocialWindows> {
    let mut out = match feature {
        FeatureType::SocialTrajectory => {
            build_social_windows(bundle, &bundle.config, opts.center, opts.truncate_social)?
        }
        FeatureType::Pose | FeatureType::AbsoluteTrajectory => {
            let labels = bundle.label_index();
            let mut windows = Vec::new();
            for tr in &bundle.tracklets {
                let cfg = bundle.video_config(tr.video_id())?;
                let built = if feature == FeatureType::Pose {
                    build_pose_windows(tr, &cfg, &labels, opts.center)?
                } else {
                    build_trajectory_windows(tr, &cfg, &labels, opts.center)?
                };
                windows.extend(built);
            }
            SocialWindows {
                windows,
                warnings: Vec::new(),
            }
        }
    };
    canonical_order(&mut out.windows);
    Ok(out)
}

/// Sorts windows by `(video_id, track_ids, start_frame)`.
pub fn canonical_order(windows: &mut [FeatureWindow]) {
    windows.sort_by(|a, b| {
        natural_cmp(a.video_id(), b.video_id())
            .then_with(|| {
                let (ta, tb) = (a.track_ids(), b.track_ids());
                ta.iter()
                    .zip(tb)
                    .map(|(x, y)| natural_cmp(x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or_else(|| ta.len().cmp(&tb.len()))
            })
            .then(a.start_frame().cmp(&b.start_frame()))
    });
}

/// Windows grouped by split.
#[derive(Debug, Clone, Default)]
pub struct SplitWindows {
    pub train: Vec<FeatureWindow>,
    pub val_normal: Vec<FeatureWindow>,
    pub val_anomalous: Vec<FeatureWindow>,
}

impl SplitWindows {
    pub fn from_windows(windows: impl IntoIterator<Item = FeatureWindow>) -> Self {
        let mut out = Self::default();
        for w in windows {
            match w.split() {
                Split::Train => out.train.push(w),
                Split::ValidationNormal => out.val_normal.push(w),
                Split::ValidationAnomalous => out.val_anomalous.push(w),
            }
        }
        out
    }

    pub fn get(&self, split: Split) -> &[FeatureWindow] {
        match split {
            Split::Train => &self.train,
            Split::ValidationNormal => &self.val_normal,
            Split::ValidationAnomalous => &self.val_anomalous,
        }
    }
}

// ---------------------------------------------------------------------------
// Window files
//
// feature<TAB>video_id<TAB>start_frame<TAB>track_ids<TAB>label<TAB>split<TAB>T<TAB>k<TAB>coords<TAB>mask
//
// track_ids are comma separated (`-` when empty), coords are the flattened
// tensor in shortest round-trip decimal form, mask is a string of 0/1.

pub fn write_windows<W: Write>(mut w: W, windows: &[FeatureWindow]) -> Result<()> {
    for win in windows {
        let ids = if win.track_ids().is_empty() {
            "-".to_string()
        } else {
            win.track_ids().join(",")
        };
        let label = match win.label() {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        };
        write!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t",
            win.feature().short_name(),
            win.video_id(),
            win.start_frame(),
            ids,
            label,
            win.split(),
            win.t(),
            win.k()
        )?;
        let mut first = true;
        for v in win.coords().as_slice() {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            write!(w, "{v}")?;
        }
        w.write_all(b"\t")?;
        let mask: Vec<u8> = win.mask().iter().map(|&m| if m { b'1' } else { b'0' }).collect();
        w.write_all(&mask)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_windows<R: BufRead>(reader: R) -> Result<Vec<FeatureWindow>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::parse(line_no, msg);
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let feature: FeatureType = f[0].parse().map_err(|e: Error| err(e.to_string()))?;
        check_id("video id", f[1]).map_err(|e| err(e.to_string()))?;
        let start: u64 = f[2].parse().map_err(|_| err("bad start frame".into()))?;
        let track_ids = if f[3] == "-" {
            Vec::new()
        } else {
            f[3].split(',').map(str::to_string).collect()
        };
        let label = match f[4] {
            "normal" => Label::Normal,
            "anomalous" => Label::Anomalous,
            other => return Err(err(format!("bad label {other:?}"))),
        };
        let split: Split = f[5].parse().map_err(|e: Error| err(e.to_string()))?;
        let t: usize = f[6].parse().map_err(|_| err("bad T".into()))?;
        let k: usize = f[7].parse().map_err(|_| err("bad k".into()))?;
        let data = f[8]
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("bad coordinate {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mask = f[9]
            .bytes()
            .map(|b| match b {
                b'1' => Ok(true),
                b'0' => Ok(false),
                _ => Err(err("mask must be 0/1".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        let coords = Coords::new(t, k, data).map_err(|e| err(e.to_string()))?;
        out.push(
            FeatureWindow::new(feature, f[1].to_string(), start, track_ids, label, split, coords, mask)
                .map_err(|e| err(e.to_string()))?,
        );
    }
    Ok(out)
}
