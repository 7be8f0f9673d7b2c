use proptest::prelude::*;
use vaddiff_core::features::{build_pose_windows, CenterPolicy};
use vaddiff_core::ingest::{LabelIndex, Manifest, VideoInfo};
use vaddiff_core::metrics::{windows_to_frame_scores, UncoveredPolicy};
use vaddiff_core::synth::{generate, SynthSpec};
use vaddiff_core::{FrameLabel, Keypoint, Label, PoseDetection, Tracklet, VideoSplit, WindowSpan, WindowingConfig};

fn tracklet(frames: &[u64]) -> Tracklet {
    let dets = frames
        .iter()
        .map(|&f| PoseDetection {
            video_id: "v".into(),
            frame_index: f,
            track_id: "0".into(),
            keypoints: (0..13).map(|j| Keypoint::new(f as f64, j as f64, 0.9).unwrap()).collect(),
        })
        .collect();
    Tracklet::new(dets).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_never_cross_gaps(
        steps in proptest::collection::vec(prop_oneof![9 => Just(1u64), 1 => 2u64..6], 1..150),
        t in 2usize..30,
        stride in 1usize..12,
    ) {
        let mut frames = vec![0u64];
        for s in steps {
            frames.push(frames.last().unwrap() + s);
        }
        let mut manifest = Manifest::default();
        manifest.videos.insert("v".into(), VideoInfo { split: VideoSplit::Train, width: 100.0, height: 100.0 });
        let cfg = WindowingConfig { t, stride, k: 13, ..Default::default() };
        let windows = build_pose_windows(&tracklet(&frames), &cfg, &LabelIndex::new(&[], &manifest), CenterPolicy::None).unwrap();

        // oracle: scan for gap-free runs, then count starts run by run
        let mut expected = Vec::new();
        let mut run_start = 0;
        for i in 1..=frames.len() {
            if i == frames.len() || frames[i] != frames[i - 1] + 1 {
                let len = i - run_start;
                let mut s = 0;
                while s + t <= len {
                    expected.push(frames[run_start + s]);
                    s += stride;
                }
                run_start = i;
            }
        }
        let starts: Vec<u64> = windows.iter().map(|w| w.start_frame()).collect();
        prop_assert_eq!(starts, expected);
    }

    #[test]
    fn frame_score_is_max_of_covering_windows(
        raw in proptest::collection::vec((0u64..60, 1u64..10, -5.0f64..5.0), 1..40),
    ) {
        let spans: Vec<(WindowSpan, f64)> = raw
            .iter()
            .map(|&(start, len, s)| (WindowSpan { video_id: "v".into(), start_frame: start, len }, s))
            .collect();
        let labels: Vec<FrameLabel> = (0..80)
            .map(|f| FrameLabel { video_id: "v".into(), frame_index: f, label: Label::Normal })
            .collect();
        let fill = spans.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let out = windows_to_frame_scores(&spans, &labels, UncoveredPolicy::FillLeastAnomalous);
        prop_assert_eq!(out.frames.len(), 80);
        let mut uncovered = 0;
        for f in &out.frames {
            let covering = spans
                .iter()
                .filter(|(w, _)| w.start_frame <= f.frame_index && f.frame_index < w.start_frame + w.len)
                .map(|s| s.1)
                .fold(f64::NEG_INFINITY, f64::max);
            if covering == f64::NEG_INFINITY {
                uncovered += 1;
                prop_assert_eq!(f.score, fill);
            } else {
                prop_assert_eq!(f.score, covering);
            }
        }
        prop_assert_eq!(out.uncovered, uncovered);
        let dropped = windows_to_frame_scores(&spans, &labels, UncoveredPolicy::Drop);
        prop_assert_eq!(dropped.frames.len(), 80 - uncovered);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_labels_mark_whole_segments(seed in any::<u64>(), fraction in 0.0f64..0.6) {
        let spec = SynthSpec {
            n_videos: 4,
            n_train_videos: 1,
            frames_per_video: 200,
            persons_per_video: 1,
            segment_len: 40,
            anomaly_fraction: fraction,
            seed,
            ..Default::default()
        };
        let bundle = generate(&spec).unwrap();
        prop_assert!(bundle.labels.iter().all(|l| l.video_id != "v000"));
        let blocks = ((fraction * 200.0) / 40.0).round() as usize;
        for v in ["v001", "v002", "v003"] {
            let flags: Vec<bool> = bundle
                .labels
                .iter()
                .filter(|l| l.video_id == v)
                .map(|l| l.label.is_anomalous())
                .collect();
            prop_assert_eq!(flags.len(), 200);
            prop_assert_eq!(flags.iter().filter(|&&a| a).count(), 40 * blocks);
            for chunk in flags.chunks(40) {
                prop_assert!(chunk.iter().all(|&a| a == chunk[0]));
            }
        }
    }
}
