use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use pct::cascade::{
    default_schedule, format_report, parse_schedule, train_cascade_with_progress, Patch, TrainConfig, TrainError,
};
use pct::dataset::{
    augment, generate_synthetic, load_annotations, write_corpus, Annotation, AugmentParams, DatasetError, SynthSpec,
};
use pct::eval::{noise_sweep as sweep, roc_csv, roc_curve, sweep_csv, LabeledImage, ScoredImage};
use pct::imgcore::{load_image, ImageError};
use pct::model_io::{deserialize, encoded_len, serialize};
use pct::{rng, Cascade, Detector, FinalDetection, GrayImage, ScanParams, TreeParams};
use rayon::prelude::*;

use crate::{
    DetectArgs, EvalArgs, Failure, Format, InfoArgs, NoiseSweepArgs, Outcome, ScanArgs, Status, SynthArgs, TrainArgs,
    WithStatus,
};

fn fail(status: Status, error: anyhow::Error) -> Failure {
    Failure { status, error }
}

fn image_status(e: &ImageError) -> Status {
    match e {
        ImageError::Io(_) => Status::Io,
        _ => Status::Format,
    }
}

fn read_image(path: &Path) -> Outcome<GrayImage> {
    load_image(path).map_err(|e| {
        let status = image_status(&e);
        fail(status, anyhow!("reading {}: {e}", path.display()))
    })
}

fn read_model(path: &Path) -> Outcome<Cascade> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .status(Status::Io)?;
    deserialize(&bytes)
        .map_err(anyhow::Error::new)
        .with_context(|| format!("decoding {}", path.display()))
        .status(Status::Format)
}

fn read_annotations(path: &Path) -> Outcome<Vec<Annotation>> {
    load_annotations(path).map_err(|e| {
        let status = match e {
            DatasetError::Io(_) => Status::Io,
            DatasetError::Image(ref i) => image_status(i),
            DatasetError::Parse { .. } => Status::Format,
        };
        fail(status, anyhow!("reading {}: {e}", path.display()))
    })
}

/// Annotations grouped by image, with paths resolved against the
/// annotation file's directory. Sorted by path.
fn group_annotations(file: &Path, annotations: Vec<Annotation>) -> BTreeMap<PathBuf, Vec<Annotation>> {
    let base = file.parent().unwrap_or(Path::new(""));
    let mut groups: BTreeMap<PathBuf, Vec<Annotation>> = BTreeMap::new();
    for a in annotations {
        groups.entry(base.join(&a.image)).or_default().push(a);
    }
    groups
}

fn load_labeled(file: &Path) -> Outcome<Vec<(PathBuf, LabeledImage)>> {
    let groups = group_annotations(file, read_annotations(file)?);
    groups
        .into_iter()
        .map(|(path, truth)| {
            let image = read_image(&path)?;
            Ok((path, LabeledImage { image, truth }))
        })
        .collect()
}

fn is_image(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("pgm" | "raw"))
}

fn image_files(dir: &Path) -> Outcome<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .status(Status::Io)?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.status(Status::Io)?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn scan_params(s: &ScanArgs) -> ScanParams {
    ScanParams {
        min_size: s.min_size,
        max_size: s.max_size,
        scale_factor: s.scale,
        stride_factor: s.stride,
        orientations: s.orientations,
    }
}

fn detector(cascade: &Cascade, s: &ScanArgs) -> Outcome<Detector> {
    if !(s.overlap >= 0.0 && s.overlap < 1.0) {
        return Err(fail(Status::Usage, anyhow!("overlap {} outside [0, 1)", s.overlap)));
    }
    Detector::new(cascade, scan_params(s))
        .map(|d| d.with_overlap(s.overlap))
        .map_err(|m| fail(Status::Usage, anyhow!(m)))
}

fn scan_header(s: &ScanArgs, threads: usize) -> String {
    format!(
        "# min_size={} max_size={} scale={} stride={} orientations={} overlap={} threads={}",
        s.min_size,
        s.max_size.map_or_else(|| "image".to_string(), |m| m.to_string()),
        s.scale,
        s.stride,
        s.orientations,
        s.overlap,
        threads
    )
}

pub fn train(a: TrainArgs, threads: usize) -> Outcome {
    let schedule = match &a.schedule {
        Some(path) => {
            if !path.is_file() {
                return Err(fail(
                    Status::Usage,
                    anyhow!("schedule file {} not found", path.display()),
                ));
            }
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .status(Status::Io)?;
            parse_schedule(&text)
                .map_err(|e| anyhow!("{}:{}: {}", path.display(), e.line, e.message))
                .status(Status::Format)?
        }
        None => default_schedule(a.negatives),
    };
    if a.augment == 0 {
        return Err(fail(Status::Usage, anyhow!("--augment must be at least 1")));
    }

    let labeled = load_labeled(&a.annotations)?;
    let params = AugmentParams {
        count: a.augment,
        position_jitter: a.position_jitter,
        scale_jitter: a.scale_jitter,
    };
    let mut rng = rng::substream(a.seed, &[0x6175_676d]);
    let mut windows = Vec::new();
    for (i, (_, li)) in labeled.iter().enumerate() {
        for t in &li.truth {
            for w in augment(t, li.image.width(), li.image.height(), &params, &mut rng) {
                windows.push((i, w));
            }
        }
    }
    let positives: Vec<Patch<'_>> = windows
        .iter()
        .map(|&(i, window)| Patch {
            image: &labeled[i].1.image,
            window,
        })
        .collect();

    let backgrounds = image_files(&a.backgrounds)?
        .iter()
        .map(|p| read_image(p))
        .collect::<Outcome<Vec<_>>>()?;

    let cfg = TrainConfig {
        tree: TreeParams {
            depth: a.depth,
            candidates: a.candidates,
        },
        schedule,
        negative_min_size: a.negative_min_size,
        negative_max_size: a.negative_max_size.unwrap_or(i32::MAX),
        draws_per_negative: a.draws_per_negative,
        seed: a.seed,
    };
    println!(
        "# seed={} depth={} candidates={} stages={} trees={} positives={} backgrounds={} threads={}",
        cfg.seed,
        cfg.tree.depth,
        cfg.tree.candidates,
        cfg.schedule.len(),
        cfg.schedule.iter().map(|s| s.tree_count).sum::<usize>(),
        positives.len(),
        backgrounds.len(),
        threads
    );

    let (cascade, reports) = train_cascade_with_progress(&positives, &backgrounds, &cfg, |r| {
        eprintln!(
            "stage {} done: threshold {} drawn {}",
            r.stage + 1,
            r.threshold,
            r.drawn
        );
    })
    .map_err(|e| {
        let status = match e {
            TrainError::Config(_) => Status::Usage,
            _ => Status::TrainingAborted,
        };
        fail(status, anyhow::Error::new(e).context("training aborted"))
    })?;
    print!("{}", format_report(&reports));

    let bytes = serialize(&cascade).status(Status::Format)?;
    fs::write(&a.out, bytes)
        .with_context(|| format!("writing {}", a.out.display()))
        .status(Status::Io)?;
    Ok(())
}

fn detection_line(path: &Path, d: &FinalDetection, format: Format) -> String {
    match format {
        Format::Text => format!(
            "{} {} {} {} {} {} {}",
            path.display(),
            d.row,
            d.col,
            d.size,
            d.score,
            d.count,
            d.orientation
        ),
        Format::Csv => format!(
            "{},{},{},{},{},{},{}",
            path.display(),
            d.row,
            d.col,
            d.size,
            d.score,
            d.count,
            d.orientation
        ),
        Format::Jsonl => serde_json::json!({
            "image": path.display().to_string(),
            "row": d.row,
            "col": d.col,
            "size": d.size,
            "score": d.score,
            "count": d.count,
            "orientation": d.orientation,
        })
        .to_string(),
    }
}

pub fn detect(a: DetectArgs, threads: usize) -> Outcome {
    let cascade = read_model(&a.model)?;
    let detector = detector(&cascade, &a.scan)?;
    eprintln!("{}", scan_header(&a.scan, threads));

    let mut files = Vec::new();
    for input in &a.inputs {
        if input.is_dir() {
            files.extend(image_files(input)?);
        } else {
            files.push(input.clone());
        }
    }
    let results: Vec<Result<Vec<FinalDetection>, Failure>> = files
        .par_iter()
        .map(|p| read_image(p).map(|img| detector.detect(&img)))
        .collect();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if a.format == Format::Csv {
        writeln!(out, "image,row,col,size,score,count,orientation").status(Status::Io)?;
    }
    let mut failed = 0;
    let mut last_error = None;
    for (path, result) in files.iter().zip(results) {
        match result {
            Ok(dets) => {
                for d in &dets {
                    writeln!(out, "{}", detection_line(path, d, a.format)).status(Status::Io)?;
                }
            }
            Err(f) => {
                eprintln!("warning: {:#}", f.error);
                failed += 1;
                last_error = Some(f);
            }
        }
    }
    match last_error {
        Some(f) if failed == files.len() => Err(fail(Status::Io, f.error.context("no input could be read"))),
        _ => Ok(()),
    }
}

/// Parses `detect` text output into detections per image path.
fn parse_detections(text: &str) -> anyhow::Result<BTreeMap<PathBuf, Vec<FinalDetection>>> {
    let mut map: BTreeMap<PathBuf, Vec<FinalDetection>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.rsplitn(7, char::is_whitespace).collect();
        if fields.len() != 7 {
            return Err(anyhow!("line {}: expected 7 fields", n + 1));
        }
        let num = |i: usize| -> anyhow::Result<f32> {
            fields[i]
                .parse()
                .with_context(|| format!("line {}: bad number {:?}", n + 1, fields[i]))
        };
        let det = FinalDetection {
            row: num(5)?,
            col: num(4)?,
            size: num(3)?,
            score: num(2)?,
            count: fields[1]
                .parse()
                .with_context(|| format!("line {}: bad count", n + 1))?,
            orientation: fields[0]
                .parse()
                .with_context(|| format!("line {}: bad orientation", n + 1))?,
        };
        map.entry(PathBuf::from(fields[6].trim_end())).or_default().push(det);
    }
    Ok(map)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

pub fn eval(a: EvalArgs, threads: usize) -> Outcome {
    let scored: Vec<ScoredImage> = match (&a.model, &a.detections) {
        (Some(model), _) => {
            let cascade = read_model(model)?;
            let detector = detector(&cascade, &a.scan)?;
            eprintln!("{}", scan_header(&a.scan, threads));
            let labeled = load_labeled(&a.annotations)?;
            labeled
                .par_iter()
                .map(|(_, li)| ScoredImage {
                    detections: detector.detect(&li.image),
                    truth: li.truth.clone(),
                })
                .collect()
        }
        (None, Some(file)) => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("reading {}", file.display()))
                .status(Status::Io)?;
            let mut dets = parse_detections(&text)
                .with_context(|| format!("parsing {}", file.display()))
                .status(Status::Format)?;
            let groups = group_annotations(&a.annotations, read_annotations(&a.annotations)?);
            let mut scored = Vec::new();
            for (path, truth) in groups {
                let key = dets.keys().find(|k| same_file(k, &path)).cloned();
                let detections = key.and_then(|k| dets.remove(&k)).unwrap_or_default();
                scored.push(ScoredImage { detections, truth });
            }
            scored.extend(dets.into_values().map(|detections| ScoredImage {
                detections,
                truth: Vec::new(),
            }));
            scored
        }
        (None, None) => unreachable!("clap requires --model or --detections"),
    };
    let curve = roc_curve(&scored, a.min_overlap);
    let native = curve[0];
    eprintln!(
        "# images={} truths={} tpr={} false_positives={}",
        scored.len(),
        scored.iter().map(|s| s.truth.len()).sum::<usize>(),
        native.tpr,
        native.false_positives
    );
    print!("{}", roc_csv(&curve));
    Ok(())
}

pub fn noise_sweep(a: NoiseSweepArgs, threads: usize) -> Outcome {
    if a.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(fail(Status::Usage, anyhow!("sigmas must be finite and non-negative")));
    }
    let cascade = read_model(&a.model)?;
    let detector = detector(&cascade, &a.scan)?;
    eprintln!("{} seed={}", scan_header(&a.scan, threads), a.seed);
    let corpus: Vec<LabeledImage> = load_labeled(&a.annotations)?.into_iter().map(|(_, li)| li).collect();
    let rows = sweep(&detector, &corpus, &a.sigmas, a.seed, a.min_overlap);
    print!("{}", sweep_csv(&rows));
    Ok(())
}

pub fn synth_data(a: SynthArgs) -> Outcome {
    let side = a.width.min(a.height) as f64;
    if !(a.min_diameter >= 2.0 && a.min_diameter <= a.max_diameter && a.max_diameter <= side) {
        return Err(fail(
            Status::Usage,
            anyhow!("diameters must satisfy 2 <= min <= max <= {side}"),
        ));
    }
    if !(a.grain.is_finite() && a.grain >= 0.0) {
        return Err(fail(Status::Usage, anyhow!("grain must be finite and non-negative")));
    }
    let spec = SynthSpec {
        width: a.width,
        height: a.height,
        with_object: !a.background,
        size_range: (a.min_diameter, a.max_diameter),
        rotation_safe: a.rotation_safe,
        clutter: a.clutter,
        grain: a.grain,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec, a.count, a.seed);
    write_corpus(&a.out, &corpus, &a.prefix)
        .map_err(|e| fail(Status::Io, anyhow!("writing corpus to {}: {e}", a.out.display())))?;
    eprintln!("wrote {} images to {}", corpus.len(), a.out.display());
    Ok(())
}

pub fn info(a: InfoArgs) -> Outcome {
    let cascade = read_model(&a.model)?;
    let trees: Vec<usize> = cascade.stages().iter().map(|s| s.trees().len()).collect();
    println!("depth {}", cascade.depth());
    println!("stages {}", cascade.stages().len());
    println!("trees {}", cascade.tree_count());
    println!("bytes {}", encoded_len(cascade.depth(), &trees));
    for (i, s) in cascade.stages().iter().enumerate() {
        println!("stage {} trees {} threshold {}", i + 1, s.trees().len(), s.threshold());
    }
    Ok(())
}
