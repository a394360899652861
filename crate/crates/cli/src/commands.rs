use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use radclutter::accum::{accumulate, window_range, AccumConfig};
use radclutter::dataset::{prepare_clouds, CloudStream, DataConfig, PreparedCloud};
use radclutter::eval::{bench as time_stream, evaluate_clouds, predict_latest, EvalReport};
use radclutter::features::{COL_X, COL_Y};
use radclutter::net::{resume, train as train_model, Checkpoint, NetworkConfig, TrainConfig, Variant};
use radclutter::relabel::{relabel_dataset, RelabelParams};
use radclutter::synth::{generate_recording_with_truth, preset, ScenarioConfig};
use radclutter::{find_mount, Label, Recording, TrueSource, Vec2};
use serde::Serialize;
use serde_json::{json, Map};

use crate::error::{CliError, Result};
use crate::plot::{render, Mark, PlotPoint};
use crate::recording_file::{write_atomic, write_json, RecordingFile};
use crate::{BenchArgs, DataArgs, EvalArgs, NetSize, PlotArgs, PlotMode, RelabelArgs, SynthArgs, TrainArgs, VariantArg};

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    toml::from_str(&text).map_err(|e| CliError::config(path.display().to_string(), e.to_string().trim().to_string()))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => load_scenario(path)?,
        None => preset(a.preset.as_deref().unwrap_or("default"), a.seed.unwrap_or(0))?,
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let generated = generate_recording_with_truth(&cfg)?;
    let rec = generated.recording;
    let mut tally: BTreeMap<&str, usize> = TrueSource::ALL.iter().map(|s| (s.name(), 0)).collect();
    for d in rec.scans.iter().flat_map(|s| &s.detections) {
        *tally.entry(d.true_source.name()).or_default() += 1;
    }
    let mut generator = Map::new();
    generator.insert("tool".into(), json!("radclutter"));
    generator.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    generator.insert("seed".into(), json!(cfg.seed));
    generator.insert("scenario".into(), serde_json::to_value(&cfg)?);
    let file = RecordingFile::new(rec, generator);
    file.write(&a.out)?;
    println!("scans: {}", file.recording.scans.len());
    println!("detections: {}", file.recording.detection_count());
    for (name, n) in tally {
        println!("  {name}: {n}");
    }
    Ok(())
}

fn parse_pair(text: &str, field: &str) -> Result<(f64, f64)> {
    let bad = || CliError::config(field, format!("expected `min:max`, got {text:?}"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

pub fn relabel(a: &RelabelArgs) -> Result<()> {
    let mut file = RecordingFile::read(&a.input)?;
    let (az_tol_min, az_tol_max) = parse_pair(&a.az_tol, "az-tol")?;
    let params = RelabelParams {
        range_tol: a.range_tol,
        az_tol_min,
        az_tol_max,
        az_tol_max_angle: a.az_tol_angle,
        v_threshold: a.v_thresh,
    };
    let dist = relabel_dataset(&mut file.recording.scans, &params)?;
    file.header.generator.insert("relabel".into(), serde_json::to_value(params)?);
    file.write(&a.out)?;
    let ratios = dist.ratios();
    let mut counts = Map::new();
    let mut shares = Map::new();
    for (k, label) in Label::CLASSES.iter().enumerate() {
        counts.insert(label.name().into(), json!(dist.counts[k]));
        shares.insert(label.name().into(), json!(ratios[k]));
        println!("{:<14} {:>9} {:>8.2}%", label.name(), dist.counts[k], 100.0 * ratios[k]);
    }
    println!("{:<14} {:>9}", "total", dist.total());
    if let Some(path) = &a.report {
        write_json(path, &json!({ "counts": counts, "ratios": shares, "total": dist.total(), "params": params }))?;
    }
    Ok(())
}

fn load_recordings(paths: &[PathBuf]) -> Result<Vec<Recording>> {
    paths.iter().map(|p| Ok(RecordingFile::read(p)?.recording)).collect()
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::A => Variant::A,
        VariantArg::B => Variant::B,
    }
}

fn default_data(v: Variant) -> DataConfig {
    DataConfig {
        accum: match v {
            Variant::A => AccumConfig::variant_a(),
            Variant::B => AccumConfig::variant_b(),
        },
        seed: 0,
    }
}

fn apply_overrides(mut d: DataConfig, a: &DataArgs) -> Result<DataConfig> {
    if let Some(ms) = a.window_ms {
        d.accum.window = ms / 1000.0;
    }
    if let Some(p) = a.points {
        d.accum.target_points = p;
    }
    if let Some(s) = &a.strategy {
        d.accum.strategy = s.parse()?;
    }
    if let Some(seed) = a.data_seed {
        d.seed = seed;
    }
    d.accum.validate()?;
    Ok(d)
}

fn network(v: Variant, size: NetSize, points: usize) -> Result<NetworkConfig> {
    let mut net = match (v, size) {
        (Variant::A, NetSize::Full) => NetworkConfig::variant_a(),
        (Variant::B, NetSize::Full) => NetworkConfig::variant_b(),
        (Variant::B, NetSize::Toy) => NetworkConfig::toy_b(),
        (Variant::B, NetSize::Tiny) => NetworkConfig::tiny_b(),
        (Variant::A, _) => return Err(CliError::config("net", "reduced sizes exist for variant b only")),
    };
    net.input_points = points;
    net.validate()?;
    Ok(net)
}

/// `1..5` (inclusive) or `1,3,7`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || CliError::config("seeds", format!("expected `a..b` or a comma list, got {text:?}"));
    let seeds: Vec<u64> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (lo..=hi).collect()
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}-seed{seed}"),
    };
    path.with_file_name(name)
}

#[derive(Serialize)]
struct SeedRun {
    seed: u64,
    model: PathBuf,
    epochs: usize,
    final_train_loss: Option<f64>,
    validation: Option<EvalReport>,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let v = variant(a.variant);
    let data = apply_overrides(default_data(v), &a.data)?;
    let net = network(v, a.net, data.accum.target_points)?;
    let seeds = match &a.seeds {
        Some(s) => parse_seeds(s)?,
        None => vec![a.seed],
    };
    if a.resume.is_some() && seeds.len() > 1 {
        return Err(CliError::config("resume", "cannot resume several seeds at once"));
    }
    let train_clouds = prepare_clouds(&load_recordings(&a.train)?, data.accum, data.seed)?;
    let val_clouds = prepare_clouds(&load_recordings(&a.val)?, data.accum, data.seed)?;
    log::info!("{} training clouds, {} validation clouds", train_clouds.len(), val_clouds.len());
    let mut runs = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed,
            ..TrainConfig::default()
        };
        let path = if seeds.len() > 1 { seeded_path(&a.model, seed) } else { a.model.clone() };
        let out = match &a.resume {
            Some(from) => {
                let ck = Checkpoint::load(from)?;
                ck.expect_network(&net)?;
                resume(ck, &train_clouds, &val_clouds, &cfg, Some(&path))?
            }
            None => train_model(&train_clouds, &val_clouds, &net, &cfg, Some(&path))?,
        };
        let mut ck = out.checkpoint(&cfg);
        ck.data = Some(data.clone());
        ck.save(&path)?;
        let run = SeedRun {
            seed,
            model: path,
            epochs: out.log.len(),
            final_train_loss: out.log.last().map(|l| l.train_loss),
            validation: out.final_validation,
        };
        match &run.validation {
            Some(r) => println!("seed {seed}: mean F1 {:.4} ({})", r.mean_f1, run.model.display()),
            None => println!("seed {seed}: trained {} epochs ({})", run.epochs, run.model.display()),
        }
        runs.push(run);
    }
    let per_seed: Vec<&EvalReport> = runs.iter().filter_map(|r| r.validation.as_ref()).collect();
    let mean = (!per_seed.is_empty()).then(|| {
        let n = per_seed.len() as f64;
        let f1: Vec<f64> = (0..3)
            .map(|k| per_seed.iter().map(|r| r.metrics.per_class[k].f1).sum::<f64>() / n)
            .collect();
        json!({ "mean_f1": per_seed.iter().map(|r| r.mean_f1).sum::<f64>() / n, "f1": f1 })
    });
    if let Some(m) = &mean {
        if seeds.len() > 1 {
            println!("mean over {} seeds: mean F1 {:.4}", seeds.len(), m["mean_f1"].as_f64().unwrap_or(f64::NAN));
        }
    }
    if let Some(path) = &a.report {
        write_json(path, &json!({ "runs": runs, "mean": mean }))?;
    }
    Ok(())
}

struct Loaded {
    model: radclutter::net::Model,
    data: DataConfig,
}

fn load_model(path: &Path, expected: Option<VariantArg>, overrides: &DataArgs) -> Result<Loaded> {
    let ck = Checkpoint::load(path)?;
    if let Some(v) = expected.map(variant) {
        if v != ck.network.variant {
            return Err(radclutter::Error::Checkpoint(format!(
                "{}: checkpoint (format version {}) holds variant {:?}, requested {v:?}",
                path.display(),
                ck.version,
                ck.network.variant
            ))
            .into());
        }
    }
    let base = ck.data.clone().unwrap_or_else(|| default_data(ck.network.variant));
    Ok(Loaded {
        data: apply_overrides(base, overrides)?,
        model: ck.model()?,
    })
}

fn print_report(r: &EvalReport) {
    println!("{:<14} {:>9} {:>9} {:>9}", "class", "precision", "recall", "F1");
    for (label, m) in Label::CLASSES.iter().zip(&r.metrics.per_class) {
        println!("{:<14} {:>9.4} {:>9.4} {:>9.4}", label.name(), m.precision, m.recall, m.f1);
    }
    println!("mean F1 {:.4} over {} latest-scan points", r.mean_f1, r.points.scored);
    for f in &r.metrics.flags {
        println!("note: {f}");
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let l = load_model(&a.model, a.variant, &a.data)?;
    let clouds = prepare_clouds(&load_recordings(&a.data_files)?, l.data.accum, l.data.seed)?;
    let report = evaluate_clouds(&l.model, &clouds)?;
    print_report(&report);
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    if let Some(path) = &a.confusion_csv {
        write_atomic(path, report.confusion.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let l = load_model(&a.model, a.variant, &a.data)?;
    let recs = load_recordings(&a.data_files)?;
    let streams = recs
        .iter()
        .enumerate()
        .map(|(i, r)| CloudStream::new(r, i, l.data.accum, l.data.seed))
        .collect::<radclutter::Result<Vec<_>>>()?;
    let timing = time_stream(&l.model, streams.into_iter().flatten(), a.warmup)?;
    let (lo, hi) = (
        timing.processed_points.iter().min().copied().unwrap_or(0),
        timing.processed_points.iter().max().copied().unwrap_or(0),
    );
    println!(
        "{} clouds: mean {:.3} ms, variance {:.4} ms^2, processed points {lo}..{hi}",
        timing.samples_ms.len(),
        timing.mean_ms,
        timing.variance_ms2
    );
    if let Some(path) = &a.report {
        write_json(path, &json!({ "data": l.data, "timing": timing }))?;
    }
    Ok(())
}

fn label_points(rec: &Recording, idx: usize, window_ms: f64) -> Result<Vec<PlotPoint>> {
    let range = window_range(&rec.scans, idx, (window_ms * 1000.0).round() as i64);
    let cloud = accumulate(&rec.scans[range.start..idx], &rec.scans[idx], &rec.mounts)?;
    cloud
        .iter()
        .map(|p| {
            let old = !p.is_latest();
            let arrow = if old {
                None
            } else {
                let los = p.position - find_mount(&rec.mounts, p.sensor_id)?.position();
                let n = los.norm();
                (n > 0.0).then(|| los.scale(p.detection.v_comp / n))
            };
            Ok(PlotPoint {
                position: p.position,
                mark: Mark::Label {
                    label: p.detection.label,
                    old,
                },
                arrow,
            })
        })
        .collect()
}

fn outcome_points(model: &radclutter::net::Model, cloud: &PreparedCloud) -> Result<Vec<PlotPoint>> {
    let (truths, preds, _) = predict_latest(model, cloud)?;
    let mask = cloud.eval_mask();
    let direct = (0..cloud.len())
        .filter(|&i| mask[i])
        .map(|i| Vec2::new(cloud.features[[i, COL_X]], cloud.features[[i, COL_Y]]));
    let removed = cloud.removed.rows().into_iter().map(|r| Vec2::new(r[COL_X], r[COL_Y]));
    Ok(direct
        .chain(removed)
        .zip(truths.iter().zip(&preds))
        .map(|(position, (&t, &p))| PlotPoint {
            position,
            mark: Mark::Outcome {
                truth: Label::from_class_index(t).unwrap_or(Label::Unlabeled),
                correct: t == p,
            },
            arrow: None,
        })
        .collect())
}

pub fn plot(a: &PlotArgs) -> Result<()> {
    let file = RecordingFile::read(&a.input)?;
    let rec = &file.recording;
    let idx = rec
        .scans
        .iter()
        .position(|s| s.scan_id == a.scan_id)
        .ok_or_else(|| CliError::Data(format!("scan id {} not found in {}", a.scan_id, a.input.display())))?;
    let scan = &rec.scans[idx];
    let points = match a.mode {
        PlotMode::Labels => label_points(rec, idx, a.window_ms)?,
        PlotMode::Confusion => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| CliError::config("model", "confusion mode needs --model"))?;
            let l = load_model(path, None, &DataArgs {
                window_ms: None,
                points: None,
                strategy: None,
                data_seed: None,
            })?;
            let mut found = None;
            for cloud in CloudStream::new(rec, 0, l.data.accum, l.data.seed)? {
                let cloud = cloud?;
                if cloud.scan_id == a.scan_id {
                    found = Some(cloud);
                    break;
                }
            }
            match found {
                Some(cloud) => outcome_points(&l.model, &cloud)?,
                None => Vec::new(),
            }
        }
    };
    let title = format!("scan {} / sensor {}", scan.scan_id, scan.sensor_id);
    let svg = render(&points, &title, a.mode == PlotMode::Confusion);
    write_atomic(&a.out, svg.as_bytes())?;
    println!("{} points drawn", points.len());
    Ok(())
}
