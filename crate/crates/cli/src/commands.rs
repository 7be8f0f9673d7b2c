use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use vaddiff_core::analysis::{distances_to_mean, latent_distances, mean_tensor, sdom_report, SeriesTag};
use vaddiff_core::features::{build_windows, parse_windows, write_windows, CenterPolicy, SplitWindows, WindowOptions};
use vaddiff_core::ingest::{
    parse_embeddings, parse_labels, parse_scores, parse_tracklets, validate_bundle, write_labels, write_scores,
    write_tracklets, DatasetBundle, LabelIndex, Manifest,
};
use vaddiff_core::metrics::{evaluate, evaluate_per_video, pr_curve, roc_curve, write_pr_csv, write_roc_csv};
use vaddiff_core::stats::{box_stats, difficulty_report, histogram, validate_report_json, write_histogram_csv, ReportOptions};
use vaddiff_core::synth::{generate, oracle_scores, AnomalyMode, OracleMode, SynthSpec};
use vaddiff_core::{Error, FeatureType, FeatureWindow, Split, WindowingConfig};

use crate::output::Staged;
use crate::{Cli, Command, Failure, Global, SynthArgs};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut staged = Staged::default();
    match &cli.command {
        Command::Validate => validate(g, &mut staged)?,
        Command::Windows => windows(g, &mut staged)?,
        Command::Sdom => sdom(g, &mut staged)?,
        Command::DistHist => dist_hist(g, &mut staged)?,
        Command::Metrics { per_video } => metrics(g, *per_video, &mut staged)?,
        Command::Synth(args) => synth(g, args, &mut staged)?,
        Command::Report => report(g, &mut staged)?,
    }
    staged.commit(&g.out)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))).into())
}

fn config(g: &Global) -> WindowingConfig {
    let d = WindowingConfig::default();
    WindowingConfig {
        t: g.t.unwrap_or(d.t),
        stride: g.stride.unwrap_or(d.stride),
        nodes: g.nodes.unwrap_or(d.nodes),
        k: g.keypoints.unwrap_or(d.k),
        ..d
    }
}

fn manifest_path(g: &Global) -> Result<&Path> {
    g.manifest
        .as_deref()
        .ok_or_else(|| Failure::Usage("--manifest is required for this command".into()))
}

fn sibling(manifest: &Path, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join(name))
}

fn load_manifest_and_labels(g: &Global) -> Result<(Manifest, Vec<vaddiff_core::FrameLabel>)> {
    let mpath = manifest_path(g)?;
    let manifest = Manifest::parse(open(mpath)?)?;
    let lpath = sibling(mpath, &g.labels, "labels.csv");
    // a missing default label file means every video is a training video
    let labels = if g.labels.is_none() && !lpath.exists() {
        Vec::new()
    } else {
        parse_labels(open(&lpath)?)?
    };
    Ok((manifest, labels))
}

fn load_bundle(g: &Global) -> Result<DatasetBundle> {
    let cfg = config(g);
    let (manifest, labels) = load_manifest_and_labels(g)?;
    let tpath = sibling(manifest_path(g)?, &g.tracklets, "tracklets.tsv");
    let tracklets = parse_tracklets(open(&tpath)?, cfg.k)?;
    Ok(DatasetBundle::new(tracklets, labels, cfg, manifest)?)
}

fn feature_list(g: &Global) -> Vec<FeatureType> {
    g.feature.map_or_else(|| FeatureType::ALL.to_vec(), |f| vec![f])
}

fn window_options(g: &Global, feature: FeatureType) -> WindowOptions {
    let center = if feature == FeatureType::SocialTrajectory {
        g.center_social && !g.no_center
    } else {
        !g.no_center
    };
    WindowOptions {
        center: if center {
            CenterPolicy::FirstPoseToFrameCenter
        } else {
            CenterPolicy::None
        },
        truncate_social: g.truncate_social,
    }
}

fn build(g: &Global, bundle: &DatasetBundle, feature: FeatureType) -> Result<Vec<FeatureWindow>> {
    let built = build_windows(bundle, feature, window_options(g, feature))?;
    for w in &built.warnings {
        log::warn!("{w}");
    }
    Ok(built.windows)
}

/// Windows grouped by feature type, read from `--windows` or built from the
/// dataset.
fn windows_by_feature(g: &Global) -> Result<BTreeMap<FeatureType, Vec<FeatureWindow>>> {
    let mut out = BTreeMap::new();
    if let Some(path) = &g.windows {
        for w in parse_windows(open(path)?)? {
            if g.feature.is_none_or(|f| f == w.feature()) {
                out.entry(w.feature()).or_insert_with(Vec::new).push(w);
            }
        }
        if out.is_empty() {
            return Err(Error::Empty(format!("no matching windows in {}", path.display())).into());
        }
    } else {
        let bundle = load_bundle(g)?;
        for f in feature_list(g) {
            out.insert(f, build(g, &bundle, f)?);
        }
    }
    Ok(out)
}

fn validate(g: &Global, staged: &mut Staged) -> Result<()> {
    let bundle = load_bundle(g)?;
    let report = validate_bundle(&bundle)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    staged.add_json("validation.json", &report)?;
    Ok(())
}

fn windows(g: &Global, staged: &mut Staged) -> Result<()> {
    let bundle = load_bundle(g)?;
    for f in feature_list(g) {
        let ws = build(g, &bundle, f)?;
        log::info!("{f}: {} windows", ws.len());
        staged.add_with(format!("windows_{}.tsv", f.short_name()), |buf| write_windows(buf, &ws))?;
    }
    Ok(())
}

fn sdom(g: &Global, staged: &mut Staged) -> Result<()> {
    for (f, ws) in windows_by_feature(g)? {
        let split = SplitWindows::from_windows(ws);
        let report = sdom_report(&split.train, &split.val_normal, &split.val_anomalous)?;
        staged.add_json(format!("sdom_{}.json", f.short_name()), &report)?;
    }
    Ok(())
}

fn write_distances(buf: &mut Vec<u8>, rows: &[(Split, String, f64)]) -> vaddiff_core::Result<()> {
    writeln!(buf, "split,source,distance")?;
    for (split, source, d) in rows {
        writeln!(buf, "{split},{source},{d}")?;
    }
    Ok(())
}

fn dist_hist(g: &Global, staged: &mut Staged) -> Result<()> {
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let tag;
    if let Some(path) = &g.embeddings {
        if g.feature.is_some() || g.windows.is_some() {
            return Err(Failure::Usage("--embeddings cannot be combined with --feature or --windows".into()));
        }
        tag = SeriesTag::Latent;
        let (records, prior) = parse_embeddings(open(path)?)?;
        for (split, d) in latent_distances(&records, &prior)? {
            let sources = records.iter().filter(|r| r.split == split);
            for (r, v) in sources.zip(&d.values) {
                rows.push((split, r.source_window.clone().unwrap_or_default(), *v));
            }
            series.push(d);
        }
    } else {
        let feature = g.feature.unwrap_or(FeatureType::Pose);
        tag = SeriesTag::Feature(feature);
        let g = Global {
            feature: Some(feature),
            ..g.clone()
        };
        let ws = windows_by_feature(&g)?.remove(&feature).unwrap_or_default();
        let split = SplitWindows::from_windows(ws);
        let mu = mean_tensor(&split.train)?;
        for s in Split::ALL {
            let windows = split.get(s);
            if windows.is_empty() {
                log::warn!("split {s} has no windows");
                continue;
            }
            let d = distances_to_mean(windows, &mu)?;
            for (w, v) in windows.iter().zip(&d.values) {
                rows.push((s, format!("{}@{}", w.video_id(), w.start_frame()), *v));
            }
            series.push(d);
        }
    }
    let mut hists = Vec::new();
    let mut boxes = BTreeMap::new();
    for s in &series {
        hists.push(histogram(s, g.binning)?);
        if let Some(split) = s.split {
            boxes.insert(split, box_stats(s)?);
        }
    }
    let name = tag.name();
    staged.add_with(format!("distances_{name}.csv"), |buf| write_distances(buf, &rows))?;
    staged.add_with(format!("histogram_{name}.csv"), |buf| write_histogram_csv(buf, &hists))?;
    staged.add_json(format!("boxstats_{name}.json"), &boxes)?;
    Ok(())
}

fn metrics(g: &Global, per_video: bool, staged: &mut Staged) -> Result<()> {
    let path = g
        .scores
        .as_deref()
        .ok_or_else(|| Failure::Usage("metrics needs --scores".into()))?;
    let (manifest, labels) = load_manifest_and_labels(g)?;
    let index = LabelIndex::new(&labels, &manifest);
    let frames = parse_scores(open(path)?, g.polarity.into(), &index)?;
    let report = if per_video {
        evaluate_per_video(&frames)?
    } else {
        evaluate(&frames)?
    };
    let roc = roc_curve(&frames)?;
    let pr = pr_curve(&frames)?;
    staged.add_json("metrics.json", &report)?;
    staged.add_with("roc.csv", |buf| write_roc_csv(buf, &roc))?;
    staged.add_with("pr.csv", |buf| write_pr_csv(buf, &pr))?;
    Ok(())
}

fn synth_spec(g: &Global, args: &SynthArgs) -> Result<SynthSpec> {
    let mut spec = match &args.spec {
        Some(path) => serde_json::from_reader(open(path)?).map_err(Error::from)?,
        None => SynthSpec::default(),
    };
    let set = |field: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *field = v;
        }
    };
    set(&mut spec.n_videos, args.videos);
    // half of the videos train unless told otherwise
    set(&mut spec.n_train_videos, args.train_videos.or(args.videos.map(|n| n / 2)));
    set(&mut spec.frames_per_video, args.frames);
    set(&mut spec.persons_per_video, args.persons);
    set(&mut spec.segment_len, args.segment_len);
    set(&mut spec.k, g.keypoints);
    if let Some(delta) = args.delta {
        spec.anomaly_modes = vec![AnomalyMode::TrajectoryShift { delta }];
    }
    if let Some(f) = args.anomaly_fraction {
        spec.anomaly_fraction = f;
    }
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn synth(g: &Global, args: &SynthArgs, staged: &mut Staged) -> Result<()> {
    let spec = synth_spec(g, args)?;
    let mut bundle = generate(&spec)?;
    let cfg = config(g);
    bundle.config = WindowingConfig {
        k: spec.k,
        ..cfg
    };
    bundle.config.validate()?;
    staged.add("manifest.json", bundle.manifest.to_json()?.into_bytes());
    staged.add_with("tracklets.tsv", |buf| write_tracklets(buf, &bundle.tracklets))?;
    staged.add_with("labels.csv", |buf| write_labels(buf, &bundle.labels))?;
    staged.add("synth.json", spec.sidecar_json()?.into_bytes());
    let feature = g.feature.unwrap_or(FeatureType::AbsoluteTrajectory);
    let oracles = [
        ("perfect", OracleMode::Perfect),
        ("random", OracleMode::Random { seed: spec.seed }),
        ("distance", OracleMode::DistanceToTrainMean { feature }),
    ];
    for (name, mode) in oracles {
        let scores = oracle_scores(&bundle, mode)?;
        staged.add_with(format!("scores_{name}.csv"), |buf| write_scores(buf, &scores))?;
    }
    Ok(())
}

fn report(g: &Global, staged: &mut Staged) -> Result<()> {
    let bundle = load_bundle(g)?;
    let options = ReportOptions {
        center: !g.no_center,
        center_social: g.center_social && !g.no_center,
        binning: g.binning,
        truncate_social: g.truncate_social,
    };
    let report = difficulty_report(&bundle, &feature_list(g), &options)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let doc = serde_json::to_value(&report).map_err(Error::from)?;
    validate_report_json(&doc)?;
    staged.add_json("report.json", &doc)?;
    for f in &report.features {
        staged.add_with(f.histogram_file.clone(), |buf| write_histogram_csv(buf, &f.histograms))?;
    }
    Ok(())
}
