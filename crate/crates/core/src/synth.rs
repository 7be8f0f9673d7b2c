//! Seeded synthetic skeleton datasets with controllable anomaly separation.
//!
//! Normal people drift linearly with Gaussian joint jitter. Validation
//! videos contain anomaly segments (whole blocks of `segment_len` frames)
//! during which every person in the video follows the selected anomaly
//! modes; exactly those frames are labeled anomalous.
//!
//! Randomness: `ChaCha8Rng` from `rand_chacha`, one stream per video seeded
//! with `splitmix64(seed ^ splitmix64(video_index))`; jitter draws use
//! `rand_distr::Normal`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{distances_to_mean, mean_tensor};
use crate::error::{Error, Result};
use crate::features::{build_windows, SplitWindows, WindowOptions};
use crate::ingest::{DatasetBundle, Manifest, VideoInfo};
use crate::metrics::{windows_to_frame_scores, UncoveredPolicy};
use crate::types::{
    FeatureType, FrameLabel, Keypoint, Label, PoseDetection, ScoredFrame, Split, Tracklet,
    VideoSplit, WindowingConfig,
};

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), per-video seed splitmix64(seed ^ splitmix64(index)); jitter rand_distr::Normal";

/// Frames over which a trajectory shift accumulates `delta` pixels.
pub const SHIFT_SPAN_FRAMES: f64 = 24.0;

/// COCO-17 joint offsets from the hip midpoint, in units of body height.
const COCO_TEMPLATE: [(f64, f64); 17] = [
    (0.0, -0.90),
    (0.03, -0.93),
    (-0.03, -0.93),
    (0.06, -0.91),
    (-0.06, -0.91),
    (0.12, -0.70),
    (-0.12, -0.70),
    (0.16, -0.45),
    (-0.16, -0.45),
    (0.18, -0.22),
    (-0.18, -0.22),
    (0.08, 0.0),
    (-0.08, 0.0),
    (0.09, 0.25),
    (-0.09, 0.25),
    (0.09, 0.50),
    (-0.09, 0.50),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AnomalyMode {
    /// Extra drift along +x of `delta` pixels per 24 frames.
    TrajectoryShift { delta: f64 },
    /// Arms raised: wrists move up by `amplitude` pixels, elbows by half.
    PoseDeform { amplitude: f64 },
    /// People walk toward the scene centroid at `rate` pixels per frame.
    GroupConverge { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Per-axis drift velocity is uniform in `[-max_velocity, max_velocity]`.
    pub max_velocity: f64,
    /// Standard deviation of per-joint, per-frame jitter in pixels.
    pub joint_jitter: f64,
    pub min_height: f64,
    pub max_height: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        Self {
            max_velocity: 0.2,
            joint_jitter: 1.0,
            min_height: 80.0,
            max_height: 160.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_videos: usize,
    /// The first `n_train_videos` videos form the training split.
    pub n_train_videos: usize,
    pub frames_per_video: usize,
    pub persons_per_video: usize,
    pub k: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    pub motion: MotionModel,
    pub anomaly_modes: Vec<AnomalyMode>,
    /// Target fraction of validation frames inside anomaly segments.
    pub anomaly_fraction: f64,
    pub segment_len: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_videos: 12,
            n_train_videos: 6,
            frames_per_video: 300,
            persons_per_video: 3,
            k: 17,
            frame_width: 1280.0,
            frame_height: 720.0,
            motion: MotionModel::default(),
            anomaly_modes: vec![AnomalyMode::TrajectoryShift { delta: 50.0 }],
            anomaly_fraction: 0.3,
            segment_len: 48,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::invalid("synthetic spec", why));
        if self.n_videos == 0 || self.frames_per_video == 0 || self.persons_per_video == 0 {
            return bad("videos, frames and persons must be positive".into());
        }
        if self.n_train_videos > self.n_videos {
            return bad("more training videos than videos".into());
        }
        if self.k < 13 {
            return bad(format!("k = {} leaves no room for hips at 11 and 12", self.k));
        }
        if !(0.0..=1.0).contains(&self.anomaly_fraction) {
            return bad(format!("anomaly fraction {}", self.anomaly_fraction));
        }
        if self.anomaly_fraction > 0.0 && self.anomaly_modes.is_empty() {
            return bad("anomalies requested without an anomaly mode".into());
        }
        if self.segment_len == 0 {
            return bad("segment length must be positive".into());
        }
        let m = &self.motion;
        if !(m.max_velocity >= 0.0 && m.joint_jitter >= 0.0 && 0.0 < m.min_height && m.min_height <= m.max_height) {
            return bad("motion model out of range".into());
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return bad("frame size must be positive".into());
        }
        for mode in &self.anomaly_modes {
            let v = match *mode {
                AnomalyMode::TrajectoryShift { delta } => delta,
                AnomalyMode::PoseDeform { amplitude } => amplitude,
                AnomalyMode::GroupConverge { rate } => rate,
            };
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("anomaly magnitude {v}"));
            }
        }
        Ok(())
    }

    /// Sidecar document: the spec plus the generator description.
    pub fn sidecar_json(&self) -> Result<String> {
        let doc = serde_json::json!({ "generator": GENERATOR, "spec": self });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn windowing_config(&self) -> WindowingConfig {
        WindowingConfig {
            k: self.k,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
            ..Default::default()
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn template(k: usize) -> Vec<(f64, f64)> {
    if k == 17 {
        return COCO_TEMPLATE.to_vec();
    }
    (0..k)
        .map(|j| match j {
            11 => (0.08, 0.0),
            12 => (-0.08, 0.0),
            _ => {
                let a = std::f64::consts::TAU * j as f64 / k as f64;
                (0.3 * a.cos(), -0.45 + 0.3 * a.sin())
            }
        })
        .collect()
}

pub fn video_id(index: usize) -> String {
    format!("v{index:03}")
}

/// Anomalous frame flags for one validation video.
fn anomaly_frames(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = spec.frames_per_video;
    let mut flags = vec![false; n];
    let blocks = n / spec.segment_len;
    let wanted = ((spec.anomaly_fraction * n as f64) / spec.segment_len as f64).round() as usize;
    let mut order: Vec<usize> = (0..blocks).collect();
    order.shuffle(rng);
    for &b in order.iter().take(wanted.min(blocks)) {
        flags[b * spec.segment_len..(b + 1) * spec.segment_len].fill(true);
    }
    flags
}

struct Person {
    height: f64,
    base: (f64, f64),
    velocity: (f64, f64),
    offset: (f64, f64),
}

fn generate_video(spec: &SynthSpec, index: usize) -> Result<(Vec<Tracklet>, Vec<FrameLabel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ splitmix64(index as u64)));
    let vid = video_id(index);
    let train = index < spec.n_train_videos;
    let flags = if train || spec.anomaly_fraction == 0.0 {
        vec![false; spec.frames_per_video]
    } else {
        anomaly_frames(spec, &mut rng)
    };
    let m = spec.motion;
    let jitter = Normal::new(0.0, m.joint_jitter).map_err(|e| Error::invalid("jitter", e.to_string()))?;
    let shape = template(spec.k);
    let (w, h) = (spec.frame_width, spec.frame_height);
    let mut persons: Vec<Person> = (0..spec.persons_per_video)
        .map(|_| Person {
            height: rng.random_range(m.min_height..=m.max_height),
            base: (rng.random_range(0.2 * w..=0.8 * w), rng.random_range(0.3 * h..=0.7 * h)),
            velocity: (
                rng.random_range(-m.max_velocity..=m.max_velocity),
                rng.random_range(-m.max_velocity..=m.max_velocity),
            ),
            offset: (0.0, 0.0),
        })
        .collect();
    let mut detections: Vec<Vec<PoseDetection>> = vec![Vec::new(); persons.len()];
    for (f, &anomalous) in flags.iter().enumerate() {
        let t = f as f64;
        let position = |p: &Person| {
            (
                p.base.0 + p.velocity.0 * t + p.offset.0,
                p.base.1 + p.velocity.1 * t + p.offset.1,
            )
        };
        let mut raise = 0.0;
        if anomalous {
            let n = persons.len() as f64;
            let centroid = persons.iter().map(position).fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
            for mode in &spec.anomaly_modes {
                match *mode {
                    AnomalyMode::TrajectoryShift { delta } => {
                        for p in &mut persons {
                            p.offset.0 += delta / SHIFT_SPAN_FRAMES;
                        }
                    }
                    AnomalyMode::GroupConverge { rate } => {
                        for p in &mut persons {
                            let (x, y) = position(p);
                            let (dx, dy) = (centroid.0 - x, centroid.1 - y);
                            let norm = dx.hypot(dy);
                            if norm > rate {
                                p.offset.0 += rate * dx / norm;
                                p.offset.1 += rate * dy / norm;
                            }
                        }
                    }
                    AnomalyMode::PoseDeform { amplitude } => raise += amplitude,
                }
            }
        }
        for (i, p) in persons.iter().enumerate() {
            let (cx, cy) = position(p);
            let mut keypoints = Vec::with_capacity(spec.k);
            for (j, &(ox, oy)) in shape.iter().enumerate() {
                let lift = match j {
                    9 | 10 => raise,
                    7 | 8 => raise / 2.0,
                    _ => 0.0,
                };
                let x = cx + ox * p.height + jitter.sample(&mut rng);
                let y = cy + oy * p.height - lift + jitter.sample(&mut rng);
                let c = rng.random_range(0.5..=1.0);
                keypoints.push(Keypoint::new(x, y, c)?);
            }
            detections[i].push(PoseDetection {
                video_id: vid.clone(),
                frame_index: f as u64,
                track_id: i.to_string(),
                keypoints,
            });
        }
    }
    let tracklets = detections
        .into_iter()
        .map(Tracklet::new)
        .collect::<Result<Vec<_>>>()?;
    let labels = if train {
        Vec::new()
    } else {
        flags
            .iter()
            .enumerate()
            .map(|(f, &a)| FrameLabel {
                video_id: vid.clone(),
                frame_index: f as u64,
                label: if a { Label::Anomalous } else { Label::Normal },
            })
            .collect()
    };
    Ok((tracklets, labels))
}

/// Generates the dataset described by `spec`. Validation frames carry
/// explicit labels; training videos are implicitly normal.
pub fn generate(spec: &SynthSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let mut tracklets = Vec::new();
    let mut labels = Vec::new();
    let mut manifest = Manifest::default();
    for i in 0..spec.n_videos {
        let (t, l) = generate_video(spec, i)?;
        tracklets.extend(t);
        labels.extend(l);
        manifest.videos.insert(
            video_id(i),
            VideoInfo {
                split: if i < spec.n_train_videos {
                    VideoSplit::Train
                } else {
                    VideoSplit::Val
                },
                width: spec.frame_width,
                height: spec.frame_height,
            },
        );
    }
    DatasetBundle::new(tracklets, labels, spec.windowing_config(), manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// 1 for anomalous frames, 0 for normal ones.
    Perfect,
    /// Uniform scores in `[0, 1)`.
    Random { seed: u64 },
    /// Distance of each window to the training mean, maxed per frame.
    DistanceToTrainMean { feature: FeatureType },
}

/// Reference frame scores for every labeled frame of `bundle`, in anomaly
/// polarity and sorted by `(video_id, frame_index)`.
pub fn oracle_scores(bundle: &DatasetBundle, mode: OracleMode) -> Result<Vec<ScoredFrame>> {
    let frame = |l: &FrameLabel, score: f64| ScoredFrame {
        video_id: l.video_id.clone(),
        frame_index: l.frame_index,
        score,
        label: l.label,
    };
    let mut labels = bundle.labels.clone();
    labels.sort_by(|a, b| {
        crate::types::natural_cmp(&a.video_id, &b.video_id).then(a.frame_index.cmp(&b.frame_index))
    });
    match mode {
        OracleMode::Perfect => Ok(labels
            .iter()
            .map(|l| frame(l, if l.label.is_anomalous() { 1.0 } else { 0.0 }))
            .collect()),
        OracleMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(labels.iter().map(|l| frame(l, rng.random::<f64>())).collect())
        }
        OracleMode::DistanceToTrainMean { feature } => {
            let built = build_windows(bundle, feature, WindowOptions::default())?;
            let split = SplitWindows::from_windows(built.windows);
            let mu = mean_tensor(&split.train)?;
            let mut scored = Vec::new();
            for s in [Split::ValidationNormal, Split::ValidationAnomalous] {
                let windows = split.get(s);
                let d = distances_to_mean(windows, &mu)?;
                scored.extend(windows.iter().map(|w| w.span()).zip(d.values));
            }
            Ok(windows_to_frame_scores(&scored, &labels, UncoveredPolicy::FillLeastAnomalous).frames)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{write_labels, write_tracklets};

    fn small() -> SynthSpec {
        SynthSpec {
            n_videos: 4,
            n_train_videos: 2,
            frames_per_video: 120,
            persons_per_video: 2,
            ..Default::default()
        }
    }

    fn serialize(b: &DatasetBundle) -> Vec<u8> {
        let mut out = Vec::new();
        write_tracklets(&mut out, &b.tracklets).unwrap();
        write_labels(&mut out, &b.labels).unwrap();
        out.extend(b.manifest.to_json().unwrap().bytes());
        out
    }

    #[test]
    fn zero_fraction_is_all_normal() {
        let spec = SynthSpec {
            anomaly_fraction: 0.0,
            ..small()
        };
        let b = generate(&spec).unwrap();
        assert!(!b.labels.is_empty());
        assert!(b.labels.iter().all(|l| l.label == Label::Normal));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = serialize(&generate(&small()).unwrap());
        let b = serialize(&generate(&small()).unwrap());
        assert_eq!(a, b);
        let c = serialize(&generate(&SynthSpec { seed: 1, ..small() }).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_specs() {
        let spec = SynthSpec {
            anomaly_modes: vec![],
            ..small()
        };
        assert!(generate(&spec).is_err());
        assert!(generate(&SynthSpec { k: 5, ..small() }).is_err());
        assert!(generate(&SynthSpec { anomaly_fraction: 1.5, ..small() }).is_err());
    }

    #[test]
    fn labels_cover_exactly_the_segments() {
        let spec = small();
        let b = generate(&spec).unwrap();
        let anomalous = b.labels.iter().filter(|l| l.label.is_anomalous()).count();
        // 0.3 * 120 / 48 rounds to one block per validation video
        assert_eq!(anomalous, 2 * 48);
        for vid in ["v002", "v003"] {
            let flags: Vec<bool> = b
                .labels
                .iter()
                .filter(|l| l.video_id == vid)
                .map(|l| l.label.is_anomalous())
                .collect();
            assert_eq!(flags.len(), 120);
            let start = flags.iter().position(|&a| a).unwrap();
            assert_eq!(start % 48, 0);
            assert!(flags[start..start + 48].iter().all(|&a| a));
            assert_eq!(flags.iter().filter(|&&a| a).count(), 48);
        }
        assert!(b.labels.iter().all(|l| l.video_id != "v000" && l.video_id != "v001"));
    }

    #[test]
    fn perfect_and_random_oracles() {
        let b = generate(&small()).unwrap();
        let p = oracle_scores(&b, OracleMode::Perfect).unwrap();
        assert_eq!(p.len(), b.labels.len());
        assert!(p.iter().all(|f| f.score == if f.label.is_anomalous() { 1.0 } else { 0.0 }));
        let r1 = oracle_scores(&b, OracleMode::Random { seed: 4 }).unwrap();
        let r2 = oracle_scores(&b, OracleMode::Random { seed: 4 }).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.iter().all(|f| (0.0..1.0).contains(&f.score)));
    }

    #[test]
    fn pose_deform_raises_wrists() {
        let spec = SynthSpec {
            anomaly_modes: vec![AnomalyMode::PoseDeform { amplitude: 40.0 }],
            motion: MotionModel {
                joint_jitter: 0.0,
                ..Default::default()
            },
            ..small()
        };
        let b = generate(&spec).unwrap();
        let idx = b.label_index();
        for tr in b.tracklets.iter().filter(|t| t.video_id() == "v002") {
            for d in tr.detections() {
                let k = &d.keypoints;
                let hip_y = (k[11].y + k[12].y) / 2.0;
                let rel = k[9].y - hip_y;
                let h = (k[15].y - hip_y) / 0.5;
                let expected = -0.22 * h - if idx.label("v002", d.frame_index) == Some(Label::Anomalous) { 40.0 } else { 0.0 };
                assert!((rel - expected).abs() < 1e-6);
            }
        }
    }
}
