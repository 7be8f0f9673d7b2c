//! Line-delimited file formats and dataset assembly.
//!
//! | file       | record                                                        |
//! |------------|---------------------------------------------------------------|
//! | tracklets  | `video_id<TAB>frame_index<TAB>track_id<TAB>x1,y1,c1;x2,y2,c2;…` |
//! | labels     | `video_id,frame_index,label` with label in {0, 1}             |
//! | embeddings | header `dim=<d> mu=<v1,…,vd>`, then `split<TAB>v1,…,vd`       |
//! | scores     | `video_id,frame_index,score`                                  |
//! | manifest   | JSON object `video_id -> {split, width, height}`              |
//!
//! Blank lines and lines starting with `#` are ignored everywhere. Label and
//! score files may start with a `video_id,...` header row.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    check_id, natural_cmp, EmbeddingPrior, EmbeddingRecord, FrameLabel, Keypoint, Label,
    PoseDetection, ScoredFrame, Split, Tracklet, VideoSplit, WindowingConfig,
};

fn records<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(l) => {
                let trimmed = l.trim_end_matches(['\r', '\n']);
                if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, trimmed.to_string())))
                }
            }
        })
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite { line });
    }
    Ok(v)
}

fn parse_u64(line: usize, s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("not a frame index: {s:?}")))
}

fn parse_id(line: usize, what: &'static str, s: &str) -> Result<String> {
    check_id(what, s).map_err(|e| Error::parse(line, e.to_string()))?;
    Ok(s.to_string())
}

fn parse_vector(line: usize, s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| parse_f64(line, v)).collect()
}

fn join_f64(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn is_header(fields: &[&str]) -> bool {
    fields.first().is_some_and(|f| f.trim() == "video_id")
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub split: VideoSplit,
    pub width: f64,
    pub height: f64,
}

/// Per-video split and frame resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub videos: BTreeMap<String, VideoInfo>,
}

impl Manifest {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let manifest: Manifest = serde_json::from_reader(reader)?;
        for (id, info) in &manifest.videos {
            check_id("video id", id)?;
            if !(info.width > 0.0 && info.height > 0.0) {
                return Err(Error::invalid(
                    "manifest",
                    format!("video {id} has non-positive frame size"),
                ));
            }
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn get(&self, video_id: &str) -> Result<&VideoInfo> {
        self.videos
            .get(video_id)
            .ok_or_else(|| Error::UnknownVideo(video_id.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Tracklets

/// Parses a tracklet file into tracklets ordered by `(video_id, track_id)`,
/// each sorted by frame.
pub fn parse_tracklets<R: BufRead>(reader: R, k: usize) -> Result<Vec<Tracklet>> {
    type Key = (String, String);
    let mut groups: HashMap<Key, Vec<(usize, PoseDetection)>> = HashMap::new();
    for rec in records(reader) {
        let (line, text) = rec?;
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let video_id = parse_id(line, "video id", fields[0])?;
        let frame_index = parse_u64(line, fields[1])?;
        let track_id = parse_id(line, "track id", fields[2])?;
        let triples: Vec<&str> = fields[3].split(';').filter(|s| !s.is_empty()).collect();
        if triples.len() != k {
            return Err(Error::KeypointCount {
                line,
                expected: k,
                found: triples.len(),
            });
        }
        let mut keypoints = Vec::with_capacity(k);
        for triple in triples {
            let parts: Vec<&str> = triple.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::parse(line, format!("malformed keypoint {triple:?}")));
            }
            let x = parse_f64(line, parts[0])?;
            let y = parse_f64(line, parts[1])?;
            let c = parse_f64(line, parts[2])?;
            keypoints.push(Keypoint::new(x, y, c).map_err(|e| Error::parse(line, e.to_string()))?);
        }
        groups
            .entry((video_id.clone(), track_id.clone()))
            .or_default()
            .push((
                line,
                PoseDetection {
                    video_id,
                    frame_index,
                    track_id,
                    keypoints,
                },
            ));
    }

    let mut keys: Vec<Key> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| natural_cmp(&a.0, &b.0).then_with(|| natural_cmp(&a.1, &b.1)));
    let mut tracklets = Vec::with_capacity(keys.len());
    for key in keys {
        let mut dets = groups.remove(&key).unwrap_or_default();
        dets.sort_by_key(|(line, d)| (d.frame_index, *line));
        for pair in dets.windows(2) {
            if pair[0].1.frame_index == pair[1].1.frame_index {
                return Err(Error::DuplicateDetection {
                    line: pair[0].0.max(pair[1].0),
                    video_id: key.0.clone(),
                    track_id: key.1.clone(),
                    frame: pair[0].1.frame_index,
                });
            }
        }
        tracklets.push(Tracklet::new(dets.into_iter().map(|(_, d)| d).collect())?);
    }
    Ok(tracklets)
}

pub fn write_tracklets<W: Write>(mut w: W, tracklets: &[Tracklet]) -> Result<()> {
    for tracklet in tracklets {
        for d in tracklet.detections() {
            let kps = d
                .keypoints
                .iter()
                .map(|kp| format!("{},{},{}", kp.x, kp.y, kp.confidence))
                .collect::<Vec<_>>()
                .join(";");
            writeln!(w, "{}\t{}\t{}\t{}", d.video_id, d.frame_index, d.track_id, kps)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Labels

/// Parses frame labels, returned sorted by `(video_id, frame_index)`.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<Vec<FrameLabel>> {
    let mut seen: HashMap<(String, u64), usize> = HashMap::new();
    let mut labels = Vec::new();
    for rec in records(reader) {
        let (line, text) = rec?;
        let fields: Vec<&str> = text.split(',').collect();
        if is_header(&fields) {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::parse(
                line,
                format!("expected video_id,frame_index,label; found {} fields", fields.len()),
            ));
        }
        let video_id = parse_id(line, "video id", fields[0].trim())?;
        let frame_index = parse_u64(line, fields[1])?;
        let label = match fields[2].trim() {
            "0" => Label::Normal,
            "1" => Label::Anomalous,
            other => {
                return Err(Error::parse(line, format!("label must be 0 or 1, found {other:?}")))
            }
        };
        if seen.insert((video_id.clone(), frame_index), line).is_some() {
            return Err(Error::DuplicateFrame {
                line,
                video_id,
                frame: frame_index,
            });
        }
        labels.push(FrameLabel {
            video_id,
            frame_index,
            label,
        });
    }
    labels.sort_by(|a, b| {
        natural_cmp(&a.video_id, &b.video_id).then(a.frame_index.cmp(&b.frame_index))
    });
    Ok(labels)
}

pub fn write_labels<W: Write>(mut w: W, labels: &[FrameLabel]) -> Result<()> {
    for l in labels {
        let v = u8::from(l.label.is_anomalous());
        writeln!(w, "{},{},{}", l.video_id, l.frame_index, v)?;
    }
    Ok(())
}

/// Frame-label lookup that knows which videos belong to the training split.
///
/// Training frames without an explicit label are implicitly normal.
#[derive(Debug, Clone, Default)]
pub struct LabelIndex {
    explicit: HashMap<String, HashMap<u64, Label>>,
    train_videos: HashSet<String>,
}

impl LabelIndex {
    pub fn new(labels: &[FrameLabel], manifest: &Manifest) -> Self {
        let mut explicit: HashMap<String, HashMap<u64, Label>> = HashMap::new();
        for l in labels {
            explicit
                .entry(l.video_id.clone())
                .or_default()
                .insert(l.frame_index, l.label);
        }
        let train_videos = manifest
            .videos
            .iter()
            .filter(|(_, info)| info.split == VideoSplit::Train)
            .map(|(id, _)| id.clone())
            .collect();
        Self {
            explicit,
            train_videos,
        }
    }

    pub fn video_split(&self, video_id: &str) -> VideoSplit {
        if self.train_videos.contains(video_id) {
            VideoSplit::Train
        } else {
            VideoSplit::Val
        }
    }

    pub fn explicit(&self, video_id: &str, frame: u64) -> Option<Label> {
        self.explicit.get(video_id)?.get(&frame).copied()
    }

    pub fn label(&self, video_id: &str, frame: u64) -> Option<Label> {
        self.explicit(video_id, frame).or_else(|| {
            self.train_videos
                .contains(video_id)
                .then_some(Label::Normal)
        })
    }
}

// ---------------------------------------------------------------------------
// Embeddings

pub fn parse_embeddings<R: BufRead>(reader: R) -> Result<(Vec<EmbeddingRecord>, EmbeddingPrior)> {
    let mut lines = records(reader);
    let (hline, header) = match lines.next() {
        Some(rec) => rec?,
        None => return Err(Error::MissingPrior),
    };
    let mut dim = None;
    let mut mu = None;
    for token in header.split_whitespace() {
        if let Some(d) = token.strip_prefix("dim=") {
            dim = Some(
                d.parse::<usize>()
                    .map_err(|_| Error::parse(hline, format!("bad dimension {d:?}")))?,
            );
        } else if let Some(m) = token.strip_prefix("mu=") {
            mu = Some(parse_vector(hline, m)?);
        }
    }
    let (dim, mu) = match (dim, mu) {
        (Some(d), Some(m)) => (d, m),
        _ => return Err(Error::MissingPrior),
    };
    if dim == 0 {
        return Err(Error::parse(hline, "dimension must be positive"));
    }
    if mu.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            found: mu.len(),
        });
    }
    let mut out = Vec::new();
    for rec in lines {
        let (line, text) = rec?;
        let fields: Vec<&str> = text.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(line, "expected split<TAB>vector[<TAB>source]"));
        }
        let split: Split = fields[0]
            .trim()
            .parse()
            .map_err(|e: Error| Error::parse(line, e.to_string()))?;
        let vector = parse_vector(line, fields[1])?;
        if vector.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: vector.len(),
            });
        }
        out.push(EmbeddingRecord {
            vector,
            split,
            source_window: fields.get(2).map(|s| s.to_string()),
        });
    }
    Ok((out, EmbeddingPrior { mu_normal: mu }))
}

pub fn write_embeddings<W: Write>(
    mut w: W,
    records: &[EmbeddingRecord],
    prior: &EmbeddingPrior,
) -> Result<()> {
    writeln!(
        w,
        "dim={} mu={}",
        prior.dim(),
        join_f64(prior.mu_normal.iter().copied())
    )?;
    for r in records {
        write!(w, "{}\t{}", r.split, join_f64(r.vector.iter().copied()))?;
        if let Some(src) = &r.source_window {
            write!(w, "\t{src}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scores

/// Direction of the scores in a score file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Higher is more anomalous.
    #[default]
    AnomalyScore,
    /// Higher is more normal; negated at ingest.
    NormalityScore,
}

/// Parses a frame score file and joins each row with its explicit label.
/// Output is sorted by `(video_id, frame_index)` and always in anomaly
/// polarity.
pub fn parse_scores<R: BufRead>(
    reader: R,
    polarity: Polarity,
    labels: &LabelIndex,
) -> Result<Vec<ScoredFrame>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for rec in records(reader) {
        let (line, text) = rec?;
        let fields: Vec<&str> = text.split(',').collect();
        if is_header(&fields) {
            continue;
        }
        if fields.len() != 3 {
            return Err(Error::parse(line, "expected video_id,frame_index,score"));
        }
        let video_id = parse_id(line, "video id", fields[0].trim())?;
        let frame_index = parse_u64(line, fields[1])?;
        let raw = parse_f64(line, fields[2])?;
        let label = labels
            .explicit(&video_id, frame_index)
            .ok_or_else(|| Error::Unlabeled {
                video_id: video_id.clone(),
                frame: frame_index,
            })?;
        if !seen.insert((video_id.clone(), frame_index)) {
            return Err(Error::DuplicateFrame {
                line,
                video_id,
                frame: frame_index,
            });
        }
        let score = match polarity {
            Polarity::AnomalyScore => raw,
            Polarity::NormalityScore => -raw,
        };
        out.push(ScoredFrame {
            video_id,
            frame_index,
            score,
            label,
        });
    }
    sort_frames(&mut out);
    Ok(out)
}

pub(crate) fn sort_frames(frames: &mut [ScoredFrame]) {
    frames.sort_by(|a, b| {
        natural_cmp(&a.video_id, &b.video_id).then(a.frame_index.cmp(&b.frame_index))
    });
}

pub fn write_scores<W: Write>(mut w: W, frames: &[ScoredFrame]) -> Result<()> {
    for f in frames {
        writeln!(w, "{},{},{}", f.video_id, f.frame_index, f.score)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bundle

/// Everything needed to build windows for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub tracklets: Vec<Tracklet>,
    pub labels: Vec<FrameLabel>,
    pub config: WindowingConfig,
    pub manifest: Manifest,
}

impl DatasetBundle {
    pub fn new(
        tracklets: Vec<Tracklet>,
        labels: Vec<FrameLabel>,
        config: WindowingConfig,
        manifest: Manifest,
    ) -> Result<Self> {
        config.validate()?;
        for t in &tracklets {
            manifest.get(t.video_id())?;
            if let Some(d) = t.detections().first() {
                if d.keypoints.len() != config.k {
                    return Err(Error::Dimension {
                        expected: config.k,
                        found: d.keypoints.len(),
                    });
                }
            }
        }
        Ok(Self {
            tracklets,
            labels,
            config,
            manifest,
        })
    }

    pub fn label_index(&self) -> LabelIndex {
        LabelIndex::new(&self.labels, &self.manifest)
    }

    /// Windowing config carrying this video's frame size.
    pub fn video_config(&self, video_id: &str) -> Result<WindowingConfig> {
        let info = self.manifest.get(video_id)?;
        Ok(self.config.with_frame(info.width, info.height))
    }

    /// Sorted ids of videos that have at least one tracklet.
    pub fn video_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .tracklets
            .iter()
            .map(|t| t.video_id().to_string())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_by(|a, b| natural_cmp(a, b));
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub video_id: String,
    pub split: VideoSplit,
    pub tracklets: usize,
    pub detections: usize,
    pub first_frame: Option<u64>,
    pub last_frame: Option<u64>,
    /// Detections that sit in a contiguous run of at least T frames.
    pub window_eligible_frames: usize,
    pub labeled_frames: usize,
    pub anomalous_frames: usize,
    /// Validation frames with detections but no label.
    pub unlabeled_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub videos: Vec<VideoReport>,
    pub window_eligible_frames: BTreeMap<String, usize>,
    pub coverage_gaps: Vec<CoverageGap>,
    pub warnings: Vec<String>,
}

/// A run of consecutive unlabeled validation frames that carry detections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageGap {
    pub video_id: String,
    pub first_frame: u64,
    pub last_frame: u64,
}

/// Summarises a bundle; anomalous labels inside a training video are fatal.
pub fn validate_bundle(bundle: &DatasetBundle) -> Result<ValidationReport> {
    let t = bundle.config.t;
    for l in &bundle.labels {
        if l.label.is_anomalous() {
            if let Some(info) = bundle.manifest.videos.get(&l.video_id) {
                if info.split == VideoSplit::Train {
                    return Err(Error::AnomalousInTraining {
                        video_id: l.video_id.clone(),
                        frame: l.frame_index,
                    });
                }
            }
        }
    }
    let index = bundle.label_index();
    let mut warnings = Vec::new();
    let mut per_split: BTreeMap<String, usize> =
        [("train".to_string(), 0), ("val".to_string(), 0)].into();

    let mut by_video: BTreeMap<&str, Vec<&Tracklet>> = BTreeMap::new();
    for tr in &bundle.tracklets {
        by_video.entry(tr.video_id()).or_default().push(tr);
    }
    let mut label_counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for l in &bundle.labels {
        let e = label_counts.entry(l.video_id.as_str()).or_default();
        e.0 += 1;
        e.1 += usize::from(l.label.is_anomalous());
        if !bundle.manifest.videos.contains_key(&l.video_id) {
            warnings.push(format!("labels reference unknown video {}", l.video_id));
        }
    }
    warnings.dedup();

    let mut videos = Vec::new();
    let mut gaps = Vec::new();
    let mut ids: Vec<&String> = bundle.manifest.videos.keys().collect();
    ids.sort_by(|a, b| natural_cmp(a, b));
    for id in ids {
        let info = bundle.manifest.videos[id];
        let tracks = by_video.get(id.as_str()).cloned().unwrap_or_default();
        let mut frames: Vec<u64> = Vec::new();
        let mut eligible = 0;
        let mut detections = 0;
        for tr in &tracks {
            let fs: Vec<u64> = tr.detections().iter().map(|d| d.frame_index).collect();
            detections += fs.len();
            eligible += crate::features::contiguous_runs(&fs)
                .into_iter()
                .filter(|r| r.len() >= t)
                .map(|r| r.len())
                .sum::<usize>();
            frames.extend(fs);
        }
        frames.sort_unstable();
        frames.dedup();
        let mut unlabeled = 0;
        if info.split == VideoSplit::Val {
            let mut open: Option<(u64, u64)> = None;
            for &f in &frames {
                if index.explicit(id, f).is_none() {
                    unlabeled += 1;
                    open = match open {
                        Some((a, b)) if b + 1 == f => Some((a, f)),
                        Some((a, b)) => {
                            gaps.push(CoverageGap {
                                video_id: id.clone(),
                                first_frame: a,
                                last_frame: b,
                            });
                            Some((f, f))
                        }
                        None => Some((f, f)),
                    };
                }
            }
            if let Some((a, b)) = open {
                gaps.push(CoverageGap {
                    video_id: id.clone(),
                    first_frame: a,
                    last_frame: b,
                });
            }
        }
        let key = match info.split {
            VideoSplit::Train => "train",
            VideoSplit::Val => "val",
        };
        *per_split.entry(key.to_string()).or_default() += eligible;
        let (labeled, anomalous) = label_counts.get(id.as_str()).copied().unwrap_or_default();
        videos.push(VideoReport {
            video_id: id.clone(),
            split: info.split,
            tracklets: tracks.len(),
            detections,
            first_frame: frames.first().copied(),
            last_frame: frames.last().copied(),
            window_eligible_frames: eligible,
            labeled_frames: labeled,
            anomalous_frames: anomalous,
            unlabeled_frames: unlabeled,
        });
    }
    Ok(ValidationReport {
        videos,
        window_eligible_frames: per_split,
        coverage_gaps: gaps,
        warnings,
    })
}
