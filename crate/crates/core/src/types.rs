//! Domain types shared by every stage of the pipeline.
//!
//! Constructors validate their invariants; fields that carry an invariant are
//! private and exposed through accessors so a constructed value stays valid.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders identifiers numerically when both parse as unsigned integers,
/// numeric ids before non-numeric ones, and lexically otherwise.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Ids travel through tab-, comma- and semicolon-delimited files.
pub(crate) fn check_id(what: &'static str, id: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::invalid(what, "empty identifier"));
    }
    if id.chars().any(|c| c.is_whitespace() || c == ',' || c == ';') {
        return Err(Error::invalid(
            what,
            format!("{id:?} contains whitespace, ',' or ';'"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Result<Self> {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("keypoint", "coordinates must be finite"));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(
                "keypoint",
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        Ok(Self { x, y, confidence })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDetection {
    pub video_id: String,
    pub frame_index: u64,
    pub track_id: String,
    pub keypoints: Vec<Keypoint>,
}

/// Time-ordered detections of one tracked person in one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    video_id: String,
    track_id: String,
    detections: Vec<PoseDetection>,
}

impl Tracklet {
    pub fn new(detections: Vec<PoseDetection>) -> Result<Self> {
        let first = detections
            .first()
            .ok_or_else(|| Error::Empty("tracklet without detections".into()))?;
        let (video_id, track_id) = (first.video_id.clone(), first.track_id.clone());
        let k = first.keypoints.len();
        for pair in detections.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(Error::invalid(
                    "tracklet",
                    format!(
                        "frame indices not strictly increasing ({} then {})",
                        pair[0].frame_index, pair[1].frame_index
                    ),
                ));
            }
        }
        for d in &detections {
            if d.video_id != video_id || d.track_id != track_id {
                return Err(Error::invalid(
                    "tracklet",
                    "detections from different videos or tracks",
                ));
            }
            if d.keypoints.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    found: d.keypoints.len(),
                });
            }
        }
        Ok(Self {
            video_id,
            track_id,
            detections,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }

    pub fn detections(&self) -> &[PoseDetection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabel {
    pub video_id: String,
    pub frame_index: u64,
    pub label: Label,
}

/// Left and right hip positions inside a skeleton layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HipIndices {
    pub left: usize,
    pub right: usize,
}

impl Default for HipIndices {
    /// COCO-17 layout.
    fn default() -> Self {
        Self { left: 11, right: 12 }
    }
}

/// How frame labels inside a window combine into the window label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    #[default]
    AnyAnomalous,
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowingConfig {
    pub t: usize,
    pub stride: usize,
    pub k: usize,
    pub nodes: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub hips: HipIndices,
    pub label_rule: LabelRule,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            t: 24,
            stride: 6,
            k: 17,
            nodes: 35,
            frame_width: 1920.0,
            frame_height: 1080.0,
            hips: HipIndices::default(),
            label_rule: LabelRule::AnyAnomalous,
        }
    }
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::invalid("windowing config", why));
        if self.t < 2 {
            return bad(format!("T must be at least 2, got {}", self.t));
        }
        if self.stride < 1 || self.k < 1 || self.nodes < 1 {
            return bad("stride, k and N must all be at least 1".into());
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0)
            || !self.frame_width.is_finite()
            || !self.frame_height.is_finite()
        {
            return bad("frame dimensions must be positive".into());
        }
        if self.k > 1 && (self.hips.left >= self.k || self.hips.right >= self.k) {
            return bad(format!(
                "hip indices ({}, {}) outside a {}-keypoint layout",
                self.hips.left, self.hips.right, self.k
            ));
        }
        Ok(())
    }

    pub fn frame_center(&self) -> (f64, f64) {
        (self.frame_width / 2.0, self.frame_height / 2.0)
    }

    pub fn with_frame(mut self, width: f64, height: f64) -> Self {
        self.frame_width = width;
        self.frame_height = height;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    Pose,
    AbsoluteTrajectory,
    SocialTrajectory,
}

impl FeatureType {
    pub const ALL: [FeatureType; 3] = [
        FeatureType::Pose,
        FeatureType::AbsoluteTrajectory,
        FeatureType::SocialTrajectory,
    ];

    /// Short name used on the command line and in file names.
    pub fn short_name(self) -> &'static str {
        match self {
            FeatureType::Pose => "pose",
            FeatureType::AbsoluteTrajectory => "traj",
            FeatureType::SocialTrajectory => "social",
        }
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for FeatureType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pose" => Ok(FeatureType::Pose),
            "traj" | "trajectory" => Ok(FeatureType::AbsoluteTrajectory),
            "social" => Ok(FeatureType::SocialTrajectory),
            other => Err(Error::invalid("feature type", other.to_string())),
        }
    }
}

/// Analysis split of a window or embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    #[serde(rename = "val_normal")]
    ValidationNormal,
    #[serde(rename = "val_anomalous")]
    ValidationAnomalous,
}

impl Split {
    pub const ALL: [Split; 3] = [
        Split::Train,
        Split::ValidationNormal,
        Split::ValidationAnomalous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValidationNormal => "val_normal",
            Split::ValidationAnomalous => "val_anomalous",
        }
    }

    /// The split a window lands in given its video's split and its label.
    pub fn for_window(video: VideoSplit, label: Label) -> Split {
        match (video, label) {
            (VideoSplit::Train, _) => Split::Train,
            (VideoSplit::Val, Label::Normal) => Split::ValidationNormal,
            (VideoSplit::Val, Label::Anomalous) => Split::ValidationAnomalous,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val_normal" => Ok(Split::ValidationNormal),
            "val_anomalous" => Ok(Split::ValidationAnomalous),
            other => Err(Error::invalid("split", other.to_string())),
        }
    }
}

/// Split of a whole video, as recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoSplit {
    Train,
    Val,
}

/// Dense `T × k × 2` coordinate tensor stored row-major (frame, node, axis).
#[derive(Debug, Clone, PartialEq)]
pub struct Coords {
    t: usize,
    k: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(t: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != t * k * 2 {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {t}x{k}x2 tensor",
                data.len()
            )));
        }
        Ok(Self { t, k, data })
    }

    pub fn zeros(t: usize, k: usize) -> Self {
        Self {
            t,
            k,
            data: vec![0.0; t * k * 2],
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.t, self.k)
    }

    pub fn point(&self, frame: usize, node: usize) -> (f64, f64) {
        let i = (frame * self.k + node) * 2;
        (self.data[i], self.data[i + 1])
    }

    pub fn set_point(&mut self, frame: usize, node: usize, (x, y): (f64, f64)) {
        let i = (frame * self.k + node) * 2;
        self.data[i] = x;
        self.data[i + 1] = y;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// One analysis sample: a `T × k × 2` window with provenance and label.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    feature: FeatureType,
    video_id: String,
    start_frame: u64,
    track_ids: Vec<String>,
    label: Label,
    split: Split,
    coords: Coords,
    mask: Vec<bool>,
}

impl FeatureWindow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        feature: FeatureType,
        video_id: String,
        start_frame: u64,
        track_ids: Vec<String>,
        label: Label,
        split: Split,
        coords: Coords,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let (t, k) = coords.shape();
        if mask.len() != t * k {
            return Err(Error::Shape(format!(
                "mask has {} entries for a {t}x{k} window",
                mask.len()
            )));
        }
        if coords.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("window", "non-finite coordinate"));
        }
        for (i, &m) in mask.iter().enumerate() {
            if !m && coords.point(i / k, i % k) != (0.0, 0.0) {
                return Err(Error::invalid("window", "masked-out entry is not (0, 0)"));
            }
        }
        let consistent = matches!(
            (split, label),
            (Split::Train, Label::Normal)
                | (Split::ValidationNormal, Label::Normal)
                | (Split::ValidationAnomalous, Label::Anomalous)
        );
        if !consistent {
            return Err(Error::invalid(
                "window",
                format!("label {label:?} cannot sit in split {split}"),
            ));
        }
        Ok(Self {
            feature,
            video_id,
            start_frame,
            track_ids,
            label,
            split,
            coords,
            mask,
        })
    }

    pub fn feature(&self) -> FeatureType {
        self.feature
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn start_frame(&self) -> u64 {
        self.start_frame
    }

    pub fn track_ids(&self) -> &[String] {
        &self.track_ids
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn coords(&self) -> &Coords {
        &self.coords
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn t(&self) -> usize {
        self.coords.t()
    }

    pub fn k(&self) -> usize {
        self.coords.k()
    }

    /// Frames `[start_frame, start_frame + T)` covered by this window.
    pub fn span(&self) -> WindowSpan {
        WindowSpan {
            video_id: self.video_id.clone(),
            start_frame: self.start_frame,
            len: self.t() as u64,
        }
    }

    /// Same window with every coordinate mapped through `f`; masked-out
    /// entries stay at zero.
    pub fn map_coords(&self, mut f: impl FnMut(f64, usize) -> f64) -> Result<Self> {
        let mut coords = self.coords.clone();
        for (i, v) in coords.as_mut_slice().iter_mut().enumerate() {
            if self.mask[i / 2] {
                *v = f(*v, i % 2);
            }
        }
        Self::new(
            self.feature,
            self.video_id.clone(),
            self.start_frame,
            self.track_ids.clone(),
            self.label,
            self.split,
            coords,
            self.mask.clone(),
        )
    }
}

/// Frame coverage of a scored window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpan {
    pub video_id: String,
    pub start_frame: u64,
    pub len: u64,
}

/// Element-wise mean over a set of equally shaped windows.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTensor {
    pub values: Coords,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val_normal: usize,
    pub val_anomalous: usize,
}

/// Mean-distance summary of one feature type on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdomReport {
    pub feature_type: FeatureType,
    pub delta_n: f64,
    pub delta_a: f64,
    pub sdom: f64,
    pub counts: SplitCounts,
}

impl SdomReport {
    pub fn new(
        feature_type: FeatureType,
        delta_n: f64,
        delta_a: f64,
        counts: SplitCounts,
    ) -> Result<Self> {
        for (name, v) in [("delta_n", delta_n), ("delta_a", delta_a)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid("sdom report", format!("{name} = {v}")));
            }
        }
        Ok(Self {
            feature_type,
            delta_n,
            delta_a,
            sdom: delta_a - delta_n,
            counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub vector: Vec<f64>,
    pub split: Split,
    pub source_window: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPrior {
    pub mu_normal: Vec<f64>,
}

impl EmbeddingPrior {
    pub fn dim(&self) -> usize {
        self.mu_normal.len()
    }
}

/// A frame score in anomaly polarity: higher means more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFrame {
    pub video_id: String,
    pub frame_index: u64,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub uncovered_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub lower_fence: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_fence: f64,
}

impl BoxStats {
    pub fn is_ordered(&self) -> bool {
        self.lower_fence <= self.q1
            && self.q1 <= self.median
            && self.median <= self.q3
            && self.q3 <= self.upper_fence
    }
}
